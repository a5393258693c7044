//! Metrics, threshold sweeps, the end-to-end leakage simulation, benchmark
//! cleaning under the strong/weak definitions, and accuracy-drop reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{split_for_simulation, Dataset, LabeledSplit, McqInstance};
use crate::detectors::{
    combine_or, detect_ngram, detect_permutation, detect_permutation_q, detect_semi_half,
    DetectorConfig, Evidence, Method, Verdict,
};
use crate::error::{Error, Result};
use crate::gateway::mock::{MockContaminationSpec, MockGateway};
use crate::gateway::ModelGateway;
use crate::permutations::{all_orders, builtin_plan_n4, OrderLabel, ReductionPlan};
use crate::prompt::PromptTemplate;

/// Binary-classification confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    #[serde(rename = "tp")]
    pub true_pos: usize,
    #[serde(rename = "fp")]
    pub false_pos: usize,
    #[serde(rename = "fn")]
    pub false_neg: usize,
    #[serde(rename = "tn")]
    pub true_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn record(&mut self, flagged: bool, actually_leaked: bool) {
        match (flagged, actually_leaked) {
            (true, true) => self.true_pos += 1,
            (true, false) => self.false_pos += 1,
            (false, true) => self.false_neg += 1,
            (false, false) => self.true_neg += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
        self.true_neg += other.true_neg;
    }
}

/// Precision/recall/F1 with the underlying confusion counts. Degenerate
/// denominators yield zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: ConfusionCounts,
}

impl MethodMetrics {
    pub fn from_confusion(confusion: ConfusionCounts) -> Self {
        let precision = ratio(confusion.true_pos, confusion.true_pos + confusion.false_pos);
        let recall = ratio(confusion.true_pos, confusion.true_pos + confusion.false_neg);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MethodMetrics {
            precision,
            recall,
            f1,
            confusion,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Score a verdict list against ground-truth labels. Every verdict's
/// instance must be labeled.
pub fn metrics(verdicts: &[Verdict], labels: &LabeledSplit) -> Result<MethodMetrics> {
    let mut confusion = ConfusionCounts::default();
    for v in verdicts {
        let actually_leaked = labels.label_of(&v.instance_id).ok_or_else(|| {
            Error::Precondition(format!("instance `{}` carries no label", v.instance_id))
        })?;
        confusion.record(v.leaked, actually_leaked);
    }
    Ok(MethodMetrics::from_confusion(confusion))
}

/// The cached part of an n-gram verdict a sweep needs: no regeneration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NgramEvidenceEntry {
    pub instance_id: String,
    pub matched_count: usize,
    pub option_count: usize,
}

impl NgramEvidenceEntry {
    pub fn ratio(&self) -> f64 {
        self.matched_count as f64 / self.option_count as f64
    }
}

/// Pull the re-thresholdable n-gram evidence out of a verdict stream.
pub fn ngram_evidence(verdicts: &[Verdict]) -> Result<Vec<NgramEvidenceEntry>> {
    let entries: Vec<NgramEvidenceEntry> = verdicts
        .iter()
        .filter(|v| v.method == Method::NGram)
        .map(|v| match &v.evidence {
            Evidence::NGram {
                matched_count,
                option_count,
                ..
            } => Ok(NgramEvidenceEntry {
                instance_id: v.instance_id.clone(),
                matched_count: *matched_count,
                option_count: *option_count,
            }),
            _ => Err(Error::InvalidArgument(format!(
                "verdict for `{}` is labeled n-gram but carries foreign evidence",
                v.instance_id
            ))),
        })
        .collect::<Result<_>>()?;
    if entries.is_empty() {
        return Err(Error::Precondition(
            "no n-gram evidence found in the verdict stream".into(),
        ));
    }
    Ok(entries)
}

pub const DEFAULT_SWEEP_THRESHOLDS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio_threshold: f64,
    #[serde(flatten)]
    pub metrics: MethodMetrics,
}

/// Re-threshold cached n-gram evidence over a list of ratio thresholds.
pub fn sweep_threshold(
    entries: &[NgramEvidenceEntry],
    labels: &LabeledSplit,
    thresholds: &[f64],
) -> Result<Vec<SweepRow>> {
    if entries.is_empty() {
        return Err(Error::Precondition("evidence cache is empty".into()));
    }
    thresholds
        .iter()
        .map(|&t| {
            let mut confusion = ConfusionCounts::default();
            for entry in entries {
                let actually_leaked = labels.label_of(&entry.instance_id).ok_or_else(|| {
                    Error::Precondition(format!(
                        "instance `{}` carries no label",
                        entry.instance_id
                    ))
                })?;
                confusion.record(entry.ratio() >= t, actually_leaked);
            }
            Ok(SweepRow {
                ratio_threshold: t,
                metrics: MethodMetrics::from_confusion(confusion),
            })
        })
        .collect()
}

/// Render a sweep as a tab-separated table with a header row.
pub fn sweep_table_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("T\tprecision\trecall\tf1\ttp\tfp\tfn\ttn\n");
    for row in rows {
        let m = &row.metrics;
        let c = &m.confusion;
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}\n",
            row.ratio_threshold,
            m.precision,
            m.recall,
            m.f1,
            c.true_pos,
            c.false_pos,
            c.false_neg,
            c.true_neg
        ));
    }
    out
}

/// Fraction of instances answered correctly. `answers` must cover the
/// dataset.
pub fn accuracy(ds: &Dataset, answers: &BTreeMap<String, usize>) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for inst in ds.instances() {
        let chosen = answers.get(&inst.id).ok_or_else(|| {
            Error::Precondition(format!("no answer recorded for instance `{}`", inst.id))
        })?;
        if *chosen == inst.answer_index {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Supplies the two model states a simulation needs: the clean baseline
/// and a contaminated twin that has memorized the leaked instances.
pub trait ContaminationFactory: Sync {
    fn baseline(&self) -> Result<Arc<dyn ModelGateway>>;
    fn contaminated(&self, leaked: &[McqInstance]) -> Result<Arc<dyn ModelGateway>>;
    /// Stable description embedded in reports.
    fn describe(&self) -> serde_json::Value;
}

/// Mock-backed factory; the spec's own `memorized` list is ignored, the
/// simulation decides what leaks.
pub struct MockFactory {
    pub spec: MockContaminationSpec,
    pub template: PromptTemplate,
}

impl MockFactory {
    pub fn new(spec: MockContaminationSpec, template: PromptTemplate) -> Self {
        MockFactory { spec, template }
    }
}

impl ContaminationFactory for MockFactory {
    fn baseline(&self) -> Result<Arc<dyn ModelGateway>> {
        let gw = MockGateway::with_memorized(&self.spec, &[], &self.template)?;
        Ok(Arc::new(gw))
    }

    fn contaminated(&self, leaked: &[McqInstance]) -> Result<Arc<dyn ModelGateway>> {
        let gw = MockGateway::with_memorized(&self.spec, leaked, &self.template)?;
        Ok(Arc::new(gw))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "mock",
            "boost": self.spec.boost,
            "base_logprob": self.spec.base_logprob,
            "fidelity": self.spec.fidelity,
            "noise": self.spec.noise,
            "seed": self.spec.seed,
        })
    }
}

/// Knobs of one simulation run.
#[derive(Debug, Clone)]
pub struct SimulationOptions {
    /// Sampled instances; half leak, half stay held out.
    pub total: usize,
    pub seed: u64,
    pub detector: DetectorConfig,
    /// Method pairs whose OR-combination is also reported.
    pub combos: Vec<(Method, Method)>,
    /// Ordering-reduction plan for the reduced permutation variant;
    /// defaults to the bundled four-option plan.
    pub plan: Option<ReductionPlan>,
    /// Worker threads for per-instance detection; 0 picks automatically.
    pub jobs: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            total: 60,
            seed: 0,
            detector: DetectorConfig::default(),
            combos: default_combos(),
            plan: None,
            jobs: 1,
        }
    }
}

pub fn default_combos() -> Vec<(Method, Method)> {
    vec![
        (Method::SemiHalf, Method::PermutationQ),
        (Method::SemiHalf, Method::NGram),
        (Method::PermutationQ, Method::NGram),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportTotals {
    pub sampled: usize,
    pub leaked: usize,
    pub held_out: usize,
}

/// Aggregate simulation outcome, written as `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub run_config: serde_json::Value,
    pub seed: u64,
    pub totals: ReportTotals,
    pub per_method: BTreeMap<String, MethodMetrics>,
    /// Relative path of the verdict stream emitted next to the report.
    pub verdicts_ref: String,
}

pub struct SimulationOutcome {
    pub report: DetectionReport,
    /// All verdicts, grouped per instance in dataset order.
    pub verdicts: Vec<Verdict>,
    pub split: LabeledSplit,
    /// Baseline answers recorded while finding initially-wrong instances.
    pub baseline_answers: BTreeMap<String, usize>,
}

/// Run the full simulation protocol: find instances the baseline answers
/// incorrectly, keep those with above-average perplexity, sample and split
/// them, contaminate the mock with the leaked half, run every detector
/// plus the requested combinations over the sample, and score each method
/// against the ground-truth labels.
pub fn run_simulation(
    ds: &Dataset,
    factory: &dyn ContaminationFactory,
    opts: &SimulationOptions,
) -> Result<SimulationOutcome> {
    opts.detector.validate()?;
    if ds.is_empty() {
        return Err(Error::Precondition("simulation dataset is empty".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Config(format!("failed to build worker pool: {e}")))?;

    let template = &opts.detector.prompt_template;
    let baseline = factory.baseline()?;

    // Phase 1: baseline answers -> initially-wrong instances.
    let answers: Vec<(String, usize)> = pool.install(|| {
        use rayon::prelude::*;
        ds.instances()
            .par_iter()
            .map(|inst| Ok((inst.id.clone(), baseline.answer_mcq(inst, template)?)))
            .collect::<Result<_>>()
    })?;
    let baseline_answers: BTreeMap<String, usize> = answers.into_iter().collect();
    let wrong_ids: BTreeSet<String> = ds
        .instances()
        .iter()
        .filter(|inst| baseline_answers[&inst.id] != inst.answer_index)
        .map(|inst| inst.id.clone())
        .collect();

    // Phase 2: perplexity of each wrong instance's canonical text.
    let wrong_in_order: Vec<&McqInstance> = ds
        .instances()
        .iter()
        .filter(|inst| wrong_ids.contains(&inst.id))
        .collect();
    let perplexities: BTreeMap<String, f64> = pool.install(|| {
        use rayon::prelude::*;
        wrong_in_order
            .par_iter()
            .map(|inst| {
                let ppl = baseline.perplexity(&template.canonical_text(inst))?;
                Ok((inst.id.clone(), ppl))
            })
            .collect::<Result<_>>()
    })?;

    // Phase 3: labeled split.
    let split = split_for_simulation(ds, &wrong_ids, &perplexities, opts.total, opts.seed)?;

    // Phase 4: contaminate with the leaked half.
    let leaked_instances: Vec<McqInstance> = ds
        .instances()
        .iter()
        .filter(|inst| split.leaked_ids.contains(&inst.id))
        .cloned()
        .collect();
    let contaminated = factory.contaminated(&leaked_instances)?;

    // Phase 5: all detectors plus combos over every sampled instance.
    let sampled: Vec<&McqInstance> = ds
        .instances()
        .iter()
        .filter(|inst| split.label_of(&inst.id).is_some())
        .collect();
    let reduced_orders = reduced_orders_for(&sampled, opts)?;
    let detector_cfg = &opts.detector;
    let per_instance: Vec<Vec<Verdict>> = pool.install(|| {
        use rayon::prelude::*;
        sampled
            .par_iter()
            .map(|inst| {
                detect_all(
                    inst,
                    contaminated.as_ref(),
                    detector_cfg,
                    &reduced_orders,
                    &opts.combos,
                )
            })
            .collect::<Result<_>>()
    })?;

    // Phase 6: metrics per method row.
    let mut by_method: BTreeMap<String, Vec<Verdict>> = BTreeMap::new();
    let mut verdicts = Vec::new();
    for group in per_instance {
        for v in group {
            by_method
                .entry(row_key(&v))
                .or_default()
                .push(v.clone());
            verdicts.push(v);
        }
    }
    let mut per_method = BTreeMap::new();
    for (key, group) in &by_method {
        per_method.insert(key.clone(), metrics(group, &split)?);
    }

    let run_config = serde_json::json!({
        "dataset": ds.name,
        "total": opts.total,
        "seed": opts.seed,
        "detector": detector_cfg,
        "combos": opts.combos.iter().map(|(a, b)| format!("{a}+{b}")).collect::<Vec<_>>(),
        "gateway": factory.describe(),
    });

    let report = DetectionReport {
        run_config,
        seed: opts.seed,
        totals: ReportTotals {
            sampled: split.sampled_len(),
            leaked: split.leaked_ids.len(),
            held_out: split.held_out_ids.len(),
        },
        per_method,
        verdicts_ref: "verdicts.jsonl".to_string(),
    };
    Ok(SimulationOutcome {
        report,
        verdicts,
        split,
        baseline_answers,
    })
}

/// Reduced ordering set shared by every sampled instance.
fn reduced_orders_for(
    sampled: &[&McqInstance],
    opts: &SimulationOptions,
) -> Result<Vec<OrderLabel>> {
    let n = sampled
        .first()
        .map(|i| i.option_count())
        .ok_or_else(|| Error::Precondition("no instances sampled".into()))?;
    if let Some(bad) = sampled.iter().find(|i| i.option_count() != n) {
        return Err(Error::Precondition(format!(
            "sampled instances mix option counts ({n} vs {} in `{}`)",
            bad.option_count(),
            bad.id
        )));
    }
    let plan = match &opts.plan {
        Some(plan) => plan.clone(),
        None if n == 4 => builtin_plan_n4().clone(),
        None => {
            return Err(Error::Config(format!(
                "no reduction plan bundled for {n}-option instances; supply one"
            )))
        }
    };
    if plan.arity() != n {
        return Err(Error::Config(format!(
            "reduction plan covers {}-option orderings but instances have {n}",
            plan.arity()
        )));
    }
    plan.retained(opts.detector.perm_proportion)
}

fn row_key(v: &Verdict) -> String {
    match (&v.method, &v.evidence) {
        (Method::Combo, Evidence::Combo { components, .. }) => components
            .iter()
            .map(|(name, _)| name.clone())
            .collect::<Vec<_>>()
            .join("+"),
        (m, _) => m.to_string(),
    }
}

/// Run every detector and the requested combinations on one instance.
///
/// Verdict order within the group is fixed: the five detectors in
/// declaration order, then combos in the requested order.
pub fn detect_all(
    inst: &McqInstance,
    gateway: &dyn ModelGateway,
    cfg: &DetectorConfig,
    reduced_orders: &[OrderLabel],
    combos: &[(Method, Method)],
) -> Result<Vec<Verdict>> {
    let full_orders = all_orders(inst.option_count())?;
    let mut group = vec![
        detect_semi_half(inst, gateway, cfg)?,
        detect_permutation(inst, gateway, cfg, &full_orders)?,
        detect_permutation(inst, gateway, cfg, reduced_orders)?,
        detect_permutation_q(inst, gateway, cfg)?,
        detect_ngram(inst, gateway, cfg)?,
    ];
    for (a, b) in combos {
        let pick = |m: &Method| group.iter().find(|v| v.method == *m).cloned();
        let (Some(va), Some(vb)) = (pick(a), pick(b)) else {
            return Err(Error::Config(format!(
                "combo {a}+{b} references a method that did not run"
            )));
        };
        group.push(combine_or(&[va, vb])?);
    }
    Ok(group)
}

/// Which flagged instances get dropped while cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CleanMode {
    /// Drop instances flagged by some model that also answered correctly.
    Strong,
    /// Drop instances flagged by some model regardless of its answer.
    Weak,
}

impl fmt::Display for CleanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CleanMode::Strong => "strong",
            CleanMode::Weak => "weak",
        })
    }
}

impl FromStr for CleanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(CleanMode::Strong),
            "weak" => Ok(CleanMode::Weak),
            other => Err(Error::InvalidArgument(format!(
                "unknown cleaning mode `{other}` (expected `strong` or `weak`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningPolicy {
    pub mode: CleanMode,
    /// Gateway identifiers whose verdicts participate.
    pub models: Vec<String>,
    /// Which detector's verdicts count.
    pub detector: Method,
}

/// Before/after accuracy over one slice of the benchmark.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScopeDiff {
    pub instances_before: usize,
    pub instances_after: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub drop: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelAccuracyDiff {
    pub overall: ScopeDiff,
    pub per_subject: BTreeMap<String, ScopeDiff>,
    pub per_group: BTreeMap<String, ScopeDiff>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyDiffReport {
    pub per_model: BTreeMap<String, ModelAccuracyDiff>,
    pub removed_count: usize,
    pub total_count: usize,
}

pub const UNTAGGED_SUBJECT: &str = "unspecified";
pub const UNMAPPED_GROUP: &str = "other";

/// Remove flagged instances per the policy and report accuracy movement.
///
/// `verdicts_by_model` holds each policy model's verdict stream;
/// `answers_by_model` holds each model's chosen option per instance.
/// Strong mode requires answers for every policy model; in weak mode the
/// removal needs none, and the accuracy report covers the models that
/// supplied answers.
pub fn clean_benchmark(
    ds: &Dataset,
    verdicts_by_model: &BTreeMap<String, Vec<Verdict>>,
    answers_by_model: &BTreeMap<String, BTreeMap<String, usize>>,
    policy: &CleaningPolicy,
    groups: &BTreeMap<String, String>,
) -> Result<(Dataset, BTreeSet<String>, AccuracyDiffReport)> {
    if policy.models.is_empty() {
        return Err(Error::Config("cleaning policy names no models".into()));
    }

    // Coverage: every policy model must have exactly this detector's
    // verdict for every instance, and (strong mode) an answer for it.
    let mut flagged_by_model: BTreeMap<&str, BTreeMap<&str, bool>> = BTreeMap::new();
    for model in &policy.models {
        let verdicts = verdicts_by_model.get(model).ok_or_else(|| {
            Error::Precondition(format!("no verdicts supplied for model `{model}`"))
        })?;
        let mut flagged: BTreeMap<&str, bool> = BTreeMap::new();
        for v in verdicts {
            if v.method == policy.detector {
                flagged.insert(v.instance_id.as_str(), v.leaked);
            }
        }
        let missing: Vec<&str> = ds.ids().filter(|id| !flagged.contains_key(id)).collect();
        if !missing.is_empty() {
            return Err(Error::Precondition(format!(
                "model `{model}` lacks {} verdicts for `{}` (first gaps: {})",
                missing.len(),
                policy.detector,
                missing.iter().take(5).cloned().collect::<Vec<_>>().join(", ")
            )));
        }
        if policy.mode == CleanMode::Strong {
            let answers = answers_by_model.get(model).ok_or_else(|| {
                Error::Precondition(format!(
                    "strong cleaning needs answers for model `{model}`"
                ))
            })?;
            let gaps: Vec<&str> = ds.ids().filter(|id| !answers.contains_key(*id)).collect();
            if !gaps.is_empty() {
                return Err(Error::Precondition(format!(
                    "model `{model}` lacks {} answers (first gaps: {})",
                    gaps.len(),
                    gaps.iter().take(5).cloned().collect::<Vec<_>>().join(", ")
                )));
            }
        }
        flagged_by_model.insert(model.as_str(), flagged);
    }

    let mut removed: BTreeSet<String> = BTreeSet::new();
    for inst in ds.instances() {
        let id = inst.id.as_str();
        let drop = policy.models.iter().any(|model| {
            let leaked = flagged_by_model[model.as_str()][id];
            match policy.mode {
                CleanMode::Weak => leaked,
                CleanMode::Strong => {
                    leaked
                        && answers_by_model
                            .get(model)
                            .and_then(|a| a.get(id))
                            .is_some_and(|chosen| *chosen == inst.answer_index)
                }
            }
        });
        if drop {
            removed.insert(inst.id.clone());
        }
    }

    let cleaned = ds.without(&removed)?;
    let mut per_model = BTreeMap::new();
    for model in &policy.models {
        if let Some(answers) = answers_by_model.get(model) {
            per_model.insert(
                model.clone(),
                accuracy_diff_for_model(ds, &removed, answers, groups)?,
            );
        }
    }
    let report = AccuracyDiffReport {
        per_model,
        removed_count: removed.len(),
        total_count: ds.len(),
    };
    Ok((cleaned, removed, report))
}

fn accuracy_diff_for_model(
    ds: &Dataset,
    removed: &BTreeSet<String>,
    answers: &BTreeMap<String, usize>,
    groups: &BTreeMap<String, String>,
) -> Result<ModelAccuracyDiff> {
    #[derive(Default, Clone, Copy)]
    struct Tally {
        n_before: usize,
        correct_before: usize,
        n_after: usize,
        correct_after: usize,
    }

    impl Tally {
        fn diff(&self) -> ScopeDiff {
            let before = ratio(self.correct_before, self.n_before);
            let after = ratio(self.correct_after, self.n_after);
            ScopeDiff {
                instances_before: self.n_before,
                instances_after: self.n_after,
                accuracy_before: before,
                accuracy_after: after,
                drop: before - after,
            }
        }
    }

    let mut overall = Tally::default();
    let mut per_subject: BTreeMap<String, Tally> = BTreeMap::new();
    let mut per_group: BTreeMap<String, Tally> = BTreeMap::new();
    for inst in ds.instances() {
        let chosen = answers.get(&inst.id).ok_or_else(|| {
            Error::Precondition(format!("no answer recorded for instance `{}`", inst.id))
        })?;
        let correct = *chosen == inst.answer_index;
        let kept = !removed.contains(&inst.id);
        let subject = inst
            .subject
            .clone()
            .unwrap_or_else(|| UNTAGGED_SUBJECT.to_string());
        let group = groups
            .get(&subject)
            .cloned()
            .unwrap_or_else(|| UNMAPPED_GROUP.to_string());
        for tally in [
            &mut overall,
            per_subject.entry(subject).or_default(),
            per_group.entry(group).or_default(),
        ] {
            tally.n_before += 1;
            tally.correct_before += correct as usize;
            if kept {
                tally.n_after += 1;
                tally.correct_after += correct as usize;
            }
        }
    }
    Ok(ModelAccuracyDiff {
        overall: overall.diff(),
        per_subject: per_subject.iter().map(|(k, t)| (k.clone(), t.diff())).collect(),
        per_group: per_group.iter().map(|(k, t)| (k.clone(), t.diff())).collect(),
    })
}

/// Render an accuracy-diff report as a tab-separated table.
pub fn accuracy_diff_tsv(report: &AccuracyDiffReport) -> String {
    let mut out = String::from(
        "model\tscope\tname\tn_before\tn_after\tacc_before\tacc_after\tdrop\n",
    );
    let mut push = |model: &str, scope: &str, name: &str, d: &ScopeDiff| {
        out.push_str(&format!(
            "{model}\t{scope}\t{name}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            d.instances_before, d.instances_after, d.accuracy_before, d.accuracy_after, d.drop
        ));
    };
    for (model, diff) in &report.per_model {
        push(model, "overall", "overall", &diff.overall);
        for (subject, d) in &diff.per_subject {
            push(model, "subject", subject, d);
        }
        for (group, d) in &diff.per_group {
            push(model, "group", group, d);
        }
    }
    out
}
