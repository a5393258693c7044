//! Multiple-choice benchmark ingestion, validation, persistence, and the
//! labeled splitting used by leakage simulations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One benchmark item: a question, its ordered options, and the gold index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqInstance {
    pub id: String,
    pub question: String,
    pub options: Vec<String>,
    #[serde(rename = "answer")]
    pub answer_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl McqInstance {
    pub fn option_count(&self) -> usize {
        self.options.len()
    }

    pub fn gold_text(&self) -> &str {
        &self.options[self.answer_index]
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::Dataset("instance id is empty".into()));
        }
        if self.options.len() < 2 {
            return Err(Error::Dataset(format!(
                "instance `{}` has {} options; at least 2 required",
                self.id,
                self.options.len()
            )));
        }
        if self.options.iter().any(|o| o.trim().is_empty()) {
            return Err(Error::Dataset(format!(
                "instance `{}` has an empty option text",
                self.id
            )));
        }
        if self.answer_index >= self.options.len() {
            return Err(Error::Dataset(format!(
                "instance `{}` answer index {} out of range for {} options",
                self.id,
                self.answer_index,
                self.options.len()
            )));
        }
        Ok(())
    }
}

/// On-disk record layout of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// Flat records: `question`, `options`, `answer`, optional `id`/`subject`.
    MmluLike,
    /// Alias fields: `ctx` for the question, `endings` for the options,
    /// `label` for the answer index.
    HellaswagLike,
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetFormat::MmluLike => write!(f, "mmlu-like"),
            DatasetFormat::HellaswagLike => write!(f, "hellaswag-like"),
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmlu-like" => Ok(DatasetFormat::MmluLike),
            "hellaswag-like" => Ok(DatasetFormat::HellaswagLike),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format `{other}` (expected `mmlu-like` or `hellaswag-like`)"
            ))),
        }
    }
}

/// An ordered collection of instances. Iteration order is ingestion order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    instances: Vec<McqInstance>,
    /// Verbatim source lines, kept so cleaned subsets can be emitted
    /// without rewriting records that were not touched.
    raw_lines: Vec<Option<String>>,
    by_id: BTreeMap<String, usize>,
}

impl Dataset {
    pub fn from_instances(name: impl Into<String>, instances: Vec<McqInstance>) -> Result<Self> {
        let mut ds = Dataset {
            name: name.into(),
            instances: Vec::new(),
            raw_lines: Vec::new(),
            by_id: BTreeMap::new(),
        };
        for inst in instances {
            ds.push(inst, None)?;
        }
        Ok(ds)
    }

    fn push(&mut self, inst: McqInstance, raw: Option<String>) -> Result<()> {
        inst.validate()?;
        if self.by_id.contains_key(&inst.id) {
            return Err(Error::Dataset(format!("duplicate instance id `{}`", inst.id)));
        }
        self.by_id.insert(inst.id.clone(), self.instances.len());
        self.instances.push(inst);
        self.raw_lines.push(raw);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[McqInstance] {
        &self.instances
    }

    pub fn get(&self, id: &str) -> Option<&McqInstance> {
        self.by_id.get(id).map(|&i| &self.instances[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.instances.iter().map(|i| i.id.as_str())
    }

    /// The most common option count across instances; ties resolve to the
    /// smaller count. Zero for an empty dataset.
    pub fn option_count_mode(&self) -> usize {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for inst in &self.instances {
            *counts.entry(inst.option_count()).or_insert(0) += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(n, _)| n)
            .unwrap_or(0)
    }

    /// Load a line-delimited dataset file.
    pub fn load(path: &Path, format: DatasetFormat) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string());
        let mut ds = Dataset {
            name: name.clone(),
            instances: Vec::new(),
            raw_lines: Vec::new(),
            by_id: BTreeMap::new(),
        };
        let path_str = path.display().to_string();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let inst = parse_record(&path_str, line_no, line, format, &name)?;
            if ds.by_id.contains_key(&inst.id) {
                return Err(Error::record(
                    &path_str,
                    line_no,
                    "id",
                    format!("duplicate instance id `{}`", inst.id),
                ));
            }
            inst.validate().map_err(|e| {
                Error::record(&path_str, line_no, "record", e.to_string())
            })?;
            ds.push(inst, Some(line.to_string()))?;
        }
        Ok(ds)
    }

    /// Persist in the canonical flat layout. Reloading yields an identical
    /// instance sequence.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for inst in &self.instances {
            serde_json::to_writer(&mut w, inst)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Write the subset of instances not in `removed`, reproducing original
    /// source lines verbatim where they are available.
    pub fn save_without(&self, path: &Path, removed: &BTreeSet<String>) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (inst, raw) in self.instances.iter().zip(&self.raw_lines) {
            if removed.contains(&inst.id) {
                continue;
            }
            match raw {
                Some(line) => w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?,
                None => serde_json::to_writer(&mut w, inst)?,
            }
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// A new dataset containing only the instances not in `removed`.
    pub fn without(&self, removed: &BTreeSet<String>) -> Result<Dataset> {
        let kept: Vec<McqInstance> = self
            .instances
            .iter()
            .filter(|i| !removed.contains(&i.id))
            .cloned()
            .collect();
        Dataset::from_instances(self.name.clone(), kept)
    }
}

fn parse_record(
    path: &str,
    line_no: usize,
    line: &str,
    format: DatasetFormat,
    dataset_name: &str,
) -> Result<McqInstance> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| Error::record(path, line_no, "<json>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::record(path, line_no, "<json>", "record is not an object"))?;

    let (q_field, o_field, a_field) = match format {
        DatasetFormat::MmluLike => ("question", "options", "answer"),
        DatasetFormat::HellaswagLike => ("ctx", "endings", "label"),
    };

    let question = obj
        .get(q_field)
        .and_then(Value::as_str)
        .ok_or_else(|| Error::record(path, line_no, q_field, "missing or not a string"))?
        .to_string();

    let options_val = obj
        .get(o_field)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::record(path, line_no, o_field, "missing or not an array"))?;
    let mut options = Vec::with_capacity(options_val.len());
    for (i, v) in options_val.iter().enumerate() {
        let text = v.as_str().ok_or_else(|| {
            Error::record(path, line_no, o_field, format!("element {i} is not a string"))
        })?;
        options.push(text.to_string());
    }

    let answer_raw = obj
        .get(a_field)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::record(path, line_no, a_field, "missing or not a non-negative integer"))?;
    let answer_index = answer_raw as usize;
    if answer_index >= options.len() {
        return Err(Error::record(
            path,
            line_no,
            a_field,
            format!("answer index {} out of range for {} options", answer_index, options.len()),
        ));
    }

    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::Null) | None => format!("{dataset_name}:{line_no}"),
        Some(_) => return Err(Error::record(path, line_no, "id", "not a string")),
    };
    let subject = match obj.get("subject") {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Null) | None => None,
        Some(_) => return Err(Error::record(path, line_no, "subject", "not a string")),
    };

    Ok(McqInstance {
        id,
        question,
        options,
        answer_index,
        subject,
    })
}

/// Ground-truth labels for a simulation: which sampled instances were fed
/// to the contaminated model and which were held out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSplit {
    pub leaked_ids: BTreeSet<String>,
    pub held_out_ids: BTreeSet<String>,
}

impl LabeledSplit {
    pub fn validate_against(&self, ds: &Dataset) -> Result<()> {
        if let Some(id) = self.leaked_ids.intersection(&self.held_out_ids).next() {
            return Err(Error::Dataset(format!(
                "id `{id}` appears in both halves of the split"
            )));
        }
        for id in self.leaked_ids.iter().chain(&self.held_out_ids) {
            if !ds.contains(id) {
                return Err(Error::Dataset(format!(
                    "split references id `{id}` not present in dataset `{}`",
                    ds.name
                )));
            }
        }
        Ok(())
    }

    /// `Some(true)` if leaked, `Some(false)` if held out, `None` if unlabeled.
    pub fn label_of(&self, id: &str) -> Option<bool> {
        if self.leaked_ids.contains(id) {
            Some(true)
        } else if self.held_out_ids.contains(id) {
            Some(false)
        } else {
            None
        }
    }

    pub fn sampled_len(&self) -> usize {
        self.leaked_ids.len() + self.held_out_ids.len()
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::files::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::files::write_json(path, self)
    }
}

/// Build a labeled split for a contamination simulation.
///
/// The candidate pool is the set of initially-wrong instances whose
/// perplexity strictly exceeds the mean perplexity over all of
/// `wrong_ids`. From the pool, `total` ids are drawn uniformly without
/// replacement with a `seed`-determined generator; the first half (rounded
/// up) becomes the leaked set and the rest the held-out set.
pub fn split_for_simulation(
    ds: &Dataset,
    wrong_ids: &BTreeSet<String>,
    perplexities: &BTreeMap<String, f64>,
    total: usize,
    seed: u64,
) -> Result<LabeledSplit> {
    if total == 0 {
        return Err(Error::InvalidArgument("split total must be positive".into()));
    }
    for id in wrong_ids {
        if !ds.contains(id) {
            return Err(Error::Precondition(format!(
                "wrong_ids contains `{id}` which is not in the dataset"
            )));
        }
        if !perplexities.contains_key(id) {
            return Err(Error::Precondition(format!(
                "no perplexity supplied for wrong instance `{id}`"
            )));
        }
    }
    if wrong_ids.is_empty() {
        return Err(Error::Precondition(
            "cannot split: no initially-wrong instances supplied".into(),
        ));
    }

    let mean: f64 = wrong_ids.iter().map(|id| perplexities[id]).sum::<f64>()
        / wrong_ids.len() as f64;

    // Pool in dataset order so sampling is reproducible.
    let pool: Vec<&str> = ds
        .ids()
        .filter(|id| wrong_ids.contains(*id) && perplexities[*id] > mean)
        .collect();

    if pool.len() < total {
        return Err(Error::Precondition(format!(
            "candidate pool has {} instances above mean perplexity; {} requested",
            pool.len(),
            total
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, pool.len(), total);
    let leaked_count = total.div_ceil(2);
    let mut leaked_ids = BTreeSet::new();
    let mut held_out_ids = BTreeSet::new();
    for (rank, pool_idx) in chosen.iter().enumerate() {
        let id = pool[pool_idx].to_string();
        if rank < leaked_count {
            leaked_ids.insert(id);
        } else {
            held_out_ids.insert(id);
        }
    }
    Ok(LabeledSplit {
        leaked_ids,
        held_out_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;


    pub(crate) fn sample_instance(id: &str, n: usize, answer: usize) -> McqInstance {
        McqInstance {
            id: id.to_string(),
            question: format!("question text for {id}"),
            options: (0..n).map(|i| format!("option {i} of {id}")).collect(),
            answer_index: answer,
            subject: None,
        }
    }

    fn write_temp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn load_mmlu_like_maps_fields() {
        let f = write_temp(&[
            r#"{"question":"What color is the sky?","options":["red","green","blue","violet"],"answer":3,"subject":"physics"}"#,
        ]);
        let ds = Dataset::load(f.path(), DatasetFormat::MmluLike).unwrap();
        assert_eq!(ds.len(), 1);
        let inst = &ds.instances()[0];
        assert_eq!(inst.option_count(), 4);
        assert_eq!(inst.answer_index, 3);
        assert_eq!(inst.subject.as_deref(), Some("physics"));
        // Autogenerated id uses the file stem and 1-based line number.
        assert!(inst.id.ends_with(":1"));
    }

    #[test]
    fn load_hellaswag_like_maps_aliases() {
        let f = write_temp(&[
            r#"{"ctx":"He picks up the bow and","endings":["fires","sleeps","melts"],"label":0}"#,
        ]);
        let ds = Dataset::load(f.path(), DatasetFormat::HellaswagLike).unwrap();
        assert_eq!(ds.instances()[0].question, "He picks up the bow and");
        assert_eq!(ds.instances()[0].options.len(), 3);
        assert_eq!(ds.instances()[0].answer_index, 0);
    }

    #[test]
    fn load_empty_file_gives_empty_dataset() {
        let f = write_temp(&[]);
        let ds = Dataset::load(f.path(), DatasetFormat::MmluLike).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn out_of_range_answer_names_line_and_field() {
        let f = write_temp(&[
            r#"{"question":"q","options":["a","b","c","d"],"answer":7}"#,
        ]);
        let err = Dataset::load(f.path(), DatasetFormat::MmluLike).unwrap_err();
        match err {
            Error::Record { line, field, .. } => {
                assert_eq!(line, 1);
                assert_eq!(field, "answer");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_json_names_line() {
        let f = write_temp(&[
            r#"{"question":"ok","options":["a","b"],"answer":0}"#,
            r#"{"question": nope}"#,
        ]);
        let err = Dataset::load(f.path(), DatasetFormat::MmluLike).unwrap_err();
        match err {
            Error::Record { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let f = write_temp(&[
            r#"{"id":"x","question":"q1","options":["a","b"],"answer":0}"#,
            r#"{"id":"x","question":"q2","options":["a","b"],"answer":1}"#,
        ]);
        let err = Dataset::load(f.path(), DatasetFormat::MmluLike).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn save_then_load_round_trips() {
        let instances = vec![
            sample_instance("a", 4, 2),
            sample_instance("b", 3, 0),
            McqInstance {
                subject: Some("botany".into()),
                ..sample_instance("c", 4, 1)
            },
        ];
        let ds = Dataset::from_instances("rt", instances.clone()).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        ds.save(f.path()).unwrap();
        let back = Dataset::load(f.path(), DatasetFormat::MmluLike).unwrap();
        assert_eq!(back.instances(), instances.as_slice());
    }

    #[test]
    fn option_count_mode_picks_most_common() {
        let ds = Dataset::from_instances(
            "m",
            vec![
                sample_instance("a", 4, 0),
                sample_instance("b", 4, 0),
                sample_instance("c", 2, 0),
            ],
        )
        .unwrap();
        assert_eq!(ds.option_count_mode(), 4);
    }

    fn split_fixture() -> (Dataset, BTreeSet<String>, BTreeMap<String, f64>) {
        let instances: Vec<McqInstance> =
            (0..40).map(|i| sample_instance(&format!("i{i:02}"), 4, 0)).collect();
        let ds = Dataset::from_instances("fix", instances).unwrap();
        let wrong: BTreeSet<String> = ds.ids().map(String::from).collect();
        // First half low perplexity, second half high.
        let ppl: BTreeMap<String, f64> = ds
            .ids()
            .enumerate()
            .map(|(i, id)| (id.to_string(), if i < 20 { 2.0 } else { 10.0 }))
            .collect();
        (ds, wrong, ppl)
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (ds, wrong, ppl) = split_fixture();
        let s1 = split_for_simulation(&ds, &wrong, &ppl, 12, 99).unwrap();
        let s2 = split_for_simulation(&ds, &wrong, &ppl, 12, 99).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.leaked_ids.len(), 6);
        assert_eq!(s1.held_out_ids.len(), 6);
        assert!(s1.leaked_ids.is_disjoint(&s1.held_out_ids));
    }

    #[test]
    fn split_only_samples_above_mean() {
        let (ds, wrong, ppl) = split_fixture();
        let split = split_for_simulation(&ds, &wrong, &ppl, 12, 3).unwrap();
        let mean = ppl.values().sum::<f64>() / ppl.len() as f64;
        for id in split.leaked_ids.iter().chain(&split.held_out_ids) {
            assert!(ppl[id] > mean);
        }
    }

    #[test]
    fn split_odd_total_gives_leaked_the_extra() {
        let (ds, wrong, ppl) = split_fixture();
        let split = split_for_simulation(&ds, &wrong, &ppl, 11, 3).unwrap();
        assert_eq!(split.leaked_ids.len(), 6);
        assert_eq!(split.held_out_ids.len(), 5);
    }

    #[test]
    fn split_equal_perplexities_is_error() {
        let (ds, wrong, _) = split_fixture();
        let flat: BTreeMap<String, f64> = wrong.iter().map(|id| (id.clone(), 5.0)).collect();
        let err = split_for_simulation(&ds, &wrong, &flat, 4, 1).unwrap_err();
        assert!(err.to_string().contains("pool has 0"), "{err}");
    }

    #[test]
    fn split_pool_too_small_reports_size() {
        let (ds, wrong, ppl) = split_fixture();
        let err = split_for_simulation(&ds, &wrong, &ppl, 30, 1).unwrap_err();
        assert!(err.to_string().contains("20"), "{err}");
    }
}
