//! Command-line front end: detect, simulate, sweep, clean, reduce.
//!
//! Configuration precedence is flags over environment over config file;
//! every command echoes its resolved configuration on stdout and embeds
//! it in the report it writes, so runs can be reproduced from their
//! artifacts alone. Output files carry no timestamps: identical inputs
//! and seed give byte-identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mcqleak::dataset::{Dataset, DatasetFormat};
use mcqleak::detectors::{
    self, detect_ngram, detect_permutation, detect_permutation_q, detect_semi_half,
    DetectorConfig, Method, TieRule, Verdict,
};
use mcqleak::error::{Error, Result};
use mcqleak::evaluation::{
    self, accuracy_diff_tsv, clean_benchmark, metrics, ngram_evidence, run_simulation,
    sweep_table_tsv, sweep_threshold, CleanMode, CleaningPolicy, MethodMetrics, MockFactory,
    SimulationOptions, DEFAULT_SWEEP_THRESHOLDS,
};
use mcqleak::files;
use mcqleak::gateway::mock::{MockContaminationSpec, MockGateway};
use mcqleak::gateway::wire::{WireConfig, WireGateway};
use mcqleak::gateway::ModelGateway;
use mcqleak::permutations::{
    all_orders, build_reduction_plan, builtin_plan_n4, OrderLabel, PermScoreMatrix,
    ReductionPlan,
};
use mcqleak::prompt::PromptTemplate;
use mcqleak::LabeledSplit;

const TOKEN_ENV: &str = "MCQLEAK_TOKEN";

#[derive(Parser)]
#[command(
    name = "mcqleak",
    version,
    about = "Leakage detection for multiple-choice benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run detectors over a dataset and write a verdict stream.
    Detect(DetectArgs),
    /// Desk-scale contamination simulation against the mock model.
    Simulate(SimulateArgs),
    /// Re-threshold cached n-gram evidence over a threshold grid.
    Sweep(SweepArgs),
    /// Remove flagged instances and report accuracy movement.
    Clean(CleanArgs),
    /// Build an ordering-reduction plan from score matrices.
    Reduce(ReduceArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Optional JSON config file; flags and environment override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for this command's artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-instance detection (0 = automatic).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Clone)]
struct DetectorFlags {
    /// Words of the question the semi-half detector keeps.
    #[arg(long = "keep-words")]
    keep_words: Option<usize>,
    /// Per-option similarity threshold of the n-gram detector.
    #[arg(long = "t")]
    similarity_threshold: Option<f64>,
    /// Replicated-option ratio threshold of the n-gram detector.
    #[arg(long = "T")]
    ratio_threshold: Option<f64>,
    /// Proportion of orderings kept by the reduced permutation variant.
    #[arg(long = "p")]
    proportion: Option<f64>,
    /// `geq` or `strict`: how score ties count as maximal.
    #[arg(long = "tie-rule")]
    tie_rule: Option<String>,
    /// Ordering-reduction plan file (defaults to the bundled 4-option plan).
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct GatewayFlags {
    /// `mock` or `wire`.
    #[arg(long)]
    gateway: Option<String>,
    /// Completion endpoint URL for the wire gateway.
    #[arg(long, env = "MCQLEAK_ENDPOINT")]
    endpoint: Option<String>,
    /// Model name sent to the wire endpoint.
    #[arg(long, env = "MCQLEAK_MODEL")]
    model: Option<String>,
    /// Mock contamination spec file.
    #[arg(long = "mock-spec")]
    mock_spec: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[command(flatten)]
    gateway: GatewayFlags,
    /// Comma-separated detectors to run.
    #[arg(long)]
    methods: Option<String>,
    /// Ground-truth split file; adds precision/recall/F1 to the summary.
    /// Instances absent from the split are excluded from the metrics.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Also record the gateway's answer to every instance.
    #[arg(long = "emit-answers")]
    emit_answers: bool,
    #[command(flatten)]
    detector: DetectorFlags,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Mock contamination spec file (simulation always uses the mock).
    #[arg(long = "mock-spec")]
    mock_spec: Option<PathBuf>,
    /// Sampled instances; half leak, half stay held out.
    #[arg(long)]
    total: Option<usize>,
    /// Method pairs to OR-combine, e.g. `semi-half+n-gram`.
    #[arg(long)]
    combos: Option<String>,
    #[command(flatten)]
    detector: DetectorFlags,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Verdict stream holding n-gram evidence.
    #[arg(long)]
    evidence: PathBuf,
    /// Ground-truth split file.
    #[arg(long)]
    labels: PathBuf,
    /// Comma-separated ratio thresholds.
    #[arg(long)]
    thresholds: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CleanArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// `strong` or `weak`.
    #[arg(long)]
    mode: String,
    /// Detector whose verdicts drive removal.
    #[arg(long)]
    detector: String,
    /// Per-model verdict stream, `model=path`; repeatable.
    #[arg(long = "verdicts")]
    verdicts: Vec<String>,
    /// Per-model answer file, `model=path`; repeatable.
    #[arg(long = "answers")]
    answers: Vec<String>,
    /// JSON file mapping subject to group for the accuracy report.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ReduceArgs {
    /// Score matrix files, one per experiment.
    #[arg(long, num_args = 1.., required = true)]
    matrices: Vec<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

/// Config-file counterpart of the flags; everything optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    dataset: Option<PathBuf>,
    format: Option<String>,
    gateway: Option<String>,
    endpoint: Option<String>,
    model: Option<String>,
    mock_spec: Option<PathBuf>,
    methods: Option<String>,
    keep_words: Option<usize>,
    t: Option<f64>,
    #[serde(rename = "T")]
    ratio_threshold: Option<f64>,
    p: Option<f64>,
    tie_rule: Option<String>,
    plan: Option<PathBuf>,
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    total: Option<usize>,
    combos: Option<String>,
    prompt_template: Option<PromptTemplate>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(path) => files::read_json(path),
            None => Ok(FileConfig::default()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Detect(args) => cmd_detect(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Clean(args) => cmd_clean(args),
        Command::Reduce(args) => cmd_reduce(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required option `--{flag}`")))
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn build_detector_config(flags: &DetectorFlags, file: &FileConfig) -> Result<DetectorConfig> {
    let tie_rule = match flags.tie_rule.as_deref().or(file.tie_rule.as_deref()) {
        Some(raw) => TieRule::from_str(raw)?,
        None => TieRule::default(),
    };
    let defaults = DetectorConfig::default();
    let cfg = DetectorConfig {
        semi_half_keep_words: flags
            .keep_words
            .or(file.keep_words)
            .unwrap_or(defaults.semi_half_keep_words),
        ngram_similarity_threshold: flags
            .similarity_threshold
            .or(file.t)
            .unwrap_or(defaults.ngram_similarity_threshold),
        ngram_ratio_threshold: flags
            .ratio_threshold
            .or(file.ratio_threshold)
            .unwrap_or(defaults.ngram_ratio_threshold),
        perm_proportion: flags
            .proportion
            .or(file.p)
            .unwrap_or(defaults.perm_proportion),
        prompt_template: file.prompt_template.clone().unwrap_or_default(),
        tie_rule,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_plan(flags: &DetectorFlags, file: &FileConfig) -> Result<Option<ReductionPlan>> {
    match flags.plan.as_deref().or(file.plan.as_deref()) {
        Some(path) => Ok(Some(ReductionPlan::load(path)?)),
        None => Ok(None),
    }
}

fn load_dataset(
    dataset: Option<PathBuf>,
    format: Option<String>,
    file: &FileConfig,
) -> Result<(Dataset, PathBuf, DatasetFormat)> {
    let path = require(dataset.or_else(|| file.dataset.clone()), "dataset")?;
    let format = match format.or_else(|| file.format.clone()) {
        Some(raw) => DatasetFormat::from_str(&raw)?,
        None => DatasetFormat::MmluLike,
    };
    let ds = Dataset::load(&path, format)?;
    Ok((ds, path, format))
}

fn parse_methods(raw: Option<&str>) -> Result<Vec<Method>> {
    let methods: Vec<Method> = match raw {
        None => Method::DETECTORS.to_vec(),
        Some(raw) => raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(Method::from_str)
            .collect::<Result<_>>()?,
    };
    if methods.is_empty() {
        return Err(Error::Config("no detectors selected".into()));
    }
    if methods.contains(&Method::Combo) {
        return Err(Error::Config(
            "`combo` is derived from other detectors and cannot be selected directly".into(),
        ));
    }
    Ok(methods)
}

fn parse_combos(raw: Option<&str>) -> Result<Vec<(Method, Method)>> {
    match raw {
        None => Ok(evaluation::default_combos()),
        Some(raw) => raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|pair| {
                let (a, b) = pair.split_once('+').ok_or_else(|| {
                    Error::Config(format!("combo `{pair}` must look like `method+method`"))
                })?;
                Ok((Method::from_str(a.trim())?, Method::from_str(b.trim())?))
            })
            .collect(),
    }
}

fn build_gateway(
    flags: &GatewayFlags,
    file: &FileConfig,
    dataset: &Dataset,
    template: &PromptTemplate,
    jobs: usize,
) -> Result<(Arc<dyn ModelGateway>, Value)> {
    let kind = flags
        .gateway
        .clone()
        .or_else(|| file.gateway.clone())
        .unwrap_or_else(|| "mock".to_string());
    match kind.as_str() {
        "mock" => {
            let spec = match flags.mock_spec.as_deref().or(file.mock_spec.as_deref()) {
                Some(path) => MockContaminationSpec::load(path)?,
                None => MockContaminationSpec::default(),
            };
            let echo = json!({
                "kind": "mock",
                "memorized": spec.memorized.len(),
                "boost": spec.boost,
                "base_logprob": spec.base_logprob,
                "fidelity": spec.fidelity,
                "noise": spec.noise,
                "seed": spec.seed,
            });
            let gw = MockGateway::new(&spec, dataset, template)?;
            Ok((Arc::new(gw), echo))
        }
        "wire" => {
            let endpoint = require(
                flags.endpoint.clone().or_else(|| file.endpoint.clone()),
                "endpoint",
            )?;
            let model = require(flags.model.clone().or_else(|| file.model.clone()), "model")?;
            let mut config = WireConfig::new(endpoint.clone(), model.clone());
            config.auth_token = std::env::var(TOKEN_ENV).ok();
            config.max_in_flight = jobs.max(1);
            let echo = json!({ "kind": "wire", "endpoint": endpoint, "model": model });
            Ok((Arc::new(WireGateway::new(config)?), echo))
        }
        other => Err(Error::Config(format!(
            "unknown gateway `{other}` (expected `mock` or `wire`)"
        ))),
    }
}

fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("failed to build worker pool: {e}")))
}

#[derive(Serialize)]
struct AnswerRecord {
    id: String,
    chosen: usize,
}

#[derive(Deserialize)]
struct AnswerRecordIn {
    id: String,
    chosen: usize,
}

#[derive(Serialize)]
struct MethodSummary {
    flagged: usize,
    rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MethodMetrics>,
}

#[derive(Serialize)]
struct DetectSummary {
    run_config: Value,
    instances: usize,
    per_method: BTreeMap<String, MethodSummary>,
    verdicts_ref: String,
}

fn cmd_detect(args: DetectArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    // Validate the method list before anything touches a gateway.
    let methods = parse_methods(args.methods.as_deref().or(file.methods.as_deref()))?;
    let detector_cfg = build_detector_config(&args.detector, &file)?;
    let plan = load_plan(&args.detector, &file)?;
    let jobs = args.common.jobs.or(file.jobs).unwrap_or(1);
    let out = require(args.common.out.clone().or_else(|| file.out.clone()), "out")?;
    let (ds, dataset_path, format) = load_dataset(args.dataset.clone(), args.format.clone(), &file)?;
    let labels = match &args.labels {
        Some(path) => {
            let split = LabeledSplit::load(path)?;
            split.validate_against(&ds)?;
            Some(split)
        }
        None => None,
    };
    let (gateway, gateway_echo) =
        build_gateway(&args.gateway, &file, &ds, &detector_cfg.prompt_template, jobs)?;

    let run_config = json!({
        "command": "detect",
        "dataset": dataset_path.display().to_string(),
        "format": format.to_string(),
        "gateway": gateway_echo,
        "methods": methods.iter().map(Method::to_string).collect::<Vec<_>>(),
        "detector": detector_cfg,
        "jobs": jobs,
    });
    println!("{}", serde_json::to_string_pretty(&run_config)?);

    let reduced_orders: Option<Vec<OrderLabel>> = if methods.contains(&Method::PermutationR) {
        let n = ds.option_count_mode();
        let plan = match plan {
            Some(plan) => plan,
            None if n == 4 => builtin_plan_n4().clone(),
            None => {
                return Err(Error::Config(format!(
                    "no reduction plan bundled for {n}-option instances; pass --plan"
                )))
            }
        };
        Some(plan.retained(detector_cfg.perm_proportion)?)
    } else {
        None
    };

    let pool = worker_pool(jobs)?;
    let gateway_ref = gateway.as_ref();
    let per_instance: Vec<(Vec<Verdict>, Option<usize>)> = pool.install(|| {
        use rayon::prelude::*;
        ds.instances()
            .par_iter()
            .map(|inst| {
                let mut group = Vec::with_capacity(methods.len());
                for method in &methods {
                    let verdict = match method {
                        Method::SemiHalf => detect_semi_half(inst, gateway_ref, &detector_cfg)?,
                        Method::Permutation => {
                            let orders = all_orders(inst.option_count())?;
                            detect_permutation(inst, gateway_ref, &detector_cfg, &orders)?
                        }
                        Method::PermutationR => {
                            let orders = reduced_orders.as_ref().expect("plan resolved above");
                            detect_permutation(inst, gateway_ref, &detector_cfg, orders)?
                        }
                        Method::PermutationQ => {
                            detect_permutation_q(inst, gateway_ref, &detector_cfg)?
                        }
                        Method::NGram => detect_ngram(inst, gateway_ref, &detector_cfg)?,
                        Method::Combo => unreachable!("rejected during validation"),
                    };
                    group.push(verdict);
                }
                let chosen = if args.emit_answers {
                    Some(gateway_ref.answer_mcq(inst, &detector_cfg.prompt_template)?)
                } else {
                    None
                };
                Ok((group, chosen))
            })
            .collect::<Result<_>>()
    })?;

    ensure_out_dir(&out)?;
    let mut verdicts = Vec::new();
    let mut answers = Vec::new();
    for (inst, (group, chosen)) in ds.instances().iter().zip(per_instance) {
        verdicts.extend(group);
        if let Some(chosen) = chosen {
            answers.push(AnswerRecord {
                id: inst.id.clone(),
                chosen,
            });
        }
    }
    detectors::write_verdicts(&out.join("verdicts.jsonl"), &verdicts)?;
    if args.emit_answers {
        files::write_jsonl(&out.join("answers.jsonl"), &answers)?;
    }

    let mut per_method = BTreeMap::new();
    for method in &methods {
        let group: Vec<Verdict> = verdicts
            .iter()
            .filter(|v| v.method == *method)
            .cloned()
            .collect();
        let flagged = group.iter().filter(|v| v.leaked).count();
        let method_metrics = match &labels {
            Some(split) => {
                let labeled: Vec<Verdict> = group
                    .iter()
                    .filter(|v| split.label_of(&v.instance_id).is_some())
                    .cloned()
                    .collect();
                Some(metrics(&labeled, split)?)
            }
            None => None,
        };
        per_method.insert(
            method.to_string(),
            MethodSummary {
                flagged,
                rate: if ds.is_empty() {
                    0.0
                } else {
                    flagged as f64 / ds.len() as f64
                },
                metrics: method_metrics,
            },
        );
    }
    let summary = DetectSummary {
        run_config,
        instances: ds.len(),
        per_method,
        verdicts_ref: "verdicts.jsonl".to_string(),
    };
    files::write_json(&out.join("summary.json"), &summary)?;
    println!("wrote {}", out.join("verdicts.jsonl").display());
    println!("wrote {}", out.join("summary.json").display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let detector_cfg = build_detector_config(&args.detector, &file)?;
    let plan = load_plan(&args.detector, &file)?;
    let combos = parse_combos(args.combos.as_deref().or(file.combos.as_deref()))?;
    let jobs = args.common.jobs.or(file.jobs).unwrap_or(1);
    let seed = args.common.seed.or(file.seed).unwrap_or(0);
    let total = args.total.or(file.total).unwrap_or(60);
    let out = require(args.common.out.clone().or_else(|| file.out.clone()), "out")?;
    let (ds, dataset_path, format) = load_dataset(args.dataset.clone(), args.format.clone(), &file)?;

    let spec = match args.mock_spec.as_deref().or(file.mock_spec.as_deref()) {
        Some(path) => MockContaminationSpec::load(path)?,
        None => MockContaminationSpec::default(),
    };
    let factory = MockFactory::new(spec, detector_cfg.prompt_template.clone());

    let opts = SimulationOptions {
        total,
        seed,
        detector: detector_cfg,
        combos,
        plan,
        jobs,
    };
    let run_config = json!({
        "command": "simulate",
        "dataset": dataset_path.display().to_string(),
        "format": format.to_string(),
        "total": total,
        "seed": seed,
        "jobs": jobs,
    });
    println!("{}", serde_json::to_string_pretty(&run_config)?);

    let outcome = run_simulation(&ds, &factory, &opts)?;
    ensure_out_dir(&out)?;
    files::write_json(&out.join("report.json"), &outcome.report)?;
    detectors::write_verdicts(&out.join("verdicts.jsonl"), &outcome.verdicts)?;
    outcome.split.save(&out.join("split.json"))?;
    let answers: Vec<AnswerRecord> = outcome
        .baseline_answers
        .iter()
        .map(|(id, chosen)| AnswerRecord {
            id: id.clone(),
            chosen: *chosen,
        })
        .collect();
    files::write_jsonl(&out.join("baseline_answers.jsonl"), &answers)?;
    for name in ["report.json", "verdicts.jsonl", "split.json", "baseline_answers.jsonl"] {
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let out = require(args.common.out.clone().or_else(|| file.out.clone()), "out")?;
    let thresholds: Vec<f64> = match args.thresholds.as_deref() {
        None => DEFAULT_SWEEP_THRESHOLDS.to_vec(),
        Some(raw) => raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad threshold `{s}`: {e}")))
            })
            .collect::<Result<_>>()?,
    };
    let verdicts = detectors::read_verdicts(&args.evidence)?;
    let entries = ngram_evidence(&verdicts)?;
    let labels = LabeledSplit::load(&args.labels)?;
    let run_config = json!({
        "command": "sweep",
        "evidence": args.evidence.display().to_string(),
        "labels": args.labels.display().to_string(),
        "thresholds": thresholds,
    });
    println!("{}", serde_json::to_string_pretty(&run_config)?);

    let rows = sweep_threshold(&entries, &labels, &thresholds)?;
    ensure_out_dir(&out)?;
    files::write_text(&out.join("sweep.tsv"), &sweep_table_tsv(&rows))?;
    println!("wrote {}", out.join("sweep.tsv").display());
    Ok(())
}

fn parse_model_paths(raw: &[String], flag: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for entry in raw {
        let (model, path) = entry.split_once('=').ok_or_else(|| {
            Error::Config(format!("--{flag} expects `model=path`, got `{entry}`"))
        })?;
        if map
            .insert(model.trim().to_string(), PathBuf::from(path.trim()))
            .is_some()
        {
            return Err(Error::Config(format!(
                "--{flag} names model `{model}` twice"
            )));
        }
    }
    Ok(map)
}

fn cmd_clean(args: CleanArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let out = require(args.common.out.clone().or_else(|| file.out.clone()), "out")?;
    let mode = CleanMode::from_str(&args.mode)?;
    let detector = Method::from_str(&args.detector)?;
    let verdict_paths = parse_model_paths(&args.verdicts, "verdicts")?;
    if verdict_paths.is_empty() {
        return Err(Error::Config("no --verdicts supplied".into()));
    }
    let answer_paths = parse_model_paths(&args.answers, "answers")?;
    let (ds, dataset_path, format) = load_dataset(args.dataset.clone(), args.format.clone(), &file)?;

    let mut verdicts_by_model = BTreeMap::new();
    for (model, path) in &verdict_paths {
        verdicts_by_model.insert(model.clone(), detectors::read_verdicts(path)?);
    }
    let mut answers_by_model = BTreeMap::new();
    for (model, path) in &answer_paths {
        let records: Vec<AnswerRecordIn> = files::read_jsonl(path)?;
        answers_by_model.insert(
            model.clone(),
            records
                .into_iter()
                .map(|r| (r.id, r.chosen))
                .collect::<BTreeMap<_, _>>(),
        );
    }
    let groups: BTreeMap<String, String> = match &args.groups {
        Some(path) => files::read_json(path)?,
        None => BTreeMap::new(),
    };
    let policy = CleaningPolicy {
        mode,
        models: verdict_paths.keys().cloned().collect(),
        detector,
    };
    let run_config = json!({
        "command": "clean",
        "dataset": dataset_path.display().to_string(),
        "format": format.to_string(),
        "mode": mode.to_string(),
        "detector": detector.to_string(),
        "models": policy.models,
    });
    println!("{}", serde_json::to_string_pretty(&run_config)?);

    let (_, removed, report) =
        clean_benchmark(&ds, &verdicts_by_model, &answers_by_model, &policy, &groups)?;
    ensure_out_dir(&out)?;
    ds.save_without(&out.join("cleaned.jsonl"), &removed)?;
    files::write_json(
        &out.join("removed.json"),
        &json!({
            "run_config": run_config,
            "removed_count": removed.len(),
            "total_count": ds.len(),
            "removed_ids": removed.iter().collect::<Vec<_>>(),
        }),
    )?;
    files::write_text(&out.join("accuracy_diff.tsv"), &accuracy_diff_tsv(&report))?;
    for name in ["cleaned.jsonl", "removed.json", "accuracy_diff.tsv"] {
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}

fn cmd_reduce(args: ReduceArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let out = require(args.common.out.clone().or_else(|| file.out.clone()), "out")?;
    let matrices: Vec<PermScoreMatrix> = args
        .matrices
        .iter()
        .map(|path| PermScoreMatrix::load(path))
        .collect::<Result<_>>()?;
    let run_config = json!({
        "command": "reduce",
        "matrices": args
            .matrices
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&run_config)?);

    let plan = build_reduction_plan(&matrices)?;
    ensure_out_dir(&out)?;
    plan.save(&out.join("plan.json"))?;
    println!("wrote {}", out.join("plan.json").display());
    Ok(())
}
