//! Acceptance gate: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see every line.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use mcqleak::dataset::Dataset;
use mcqleak::detectors::{
    detect_ngram, detect_permutation, detect_permutation_q, detect_semi_half, DetectorConfig,
    Evidence, Method, TieRule, Verdict,
};
use mcqleak::evaluation::{
    clean_benchmark, metrics, ngram_evidence, run_simulation, sweep_threshold, CleanMode,
    CleaningPolicy, ConfusionCounts, MethodMetrics, MockFactory, SimulationOptions,
    DEFAULT_SWEEP_THRESHOLDS,
};
use mcqleak::gateway::counting::CountingGateway;
use mcqleak::gateway::mock::{MockContaminationSpec, MockGateway};
use mcqleak::permutations::{all_orders, apply_order, ordered_pairs, OrderLabel, ReductionPlan};
use mcqleak::prompt::PromptTemplate;
use mcqleak::textsim::{lcs_length, rouge_l, TokenSeq};
use mcqleak::LabeledSplit;

struct Criterion {
    name: &'static str,
    failures: Vec<String>,
}

impl Criterion {
    fn new(name: &'static str) -> Self {
        Criterion {
            name,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, passed: bool, detail: String) {
        if !passed {
            self.failures.push(detail);
        }
    }

    fn finish(self) {
        let verdict = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("acceptance :: {} :: {verdict}", self.name);
        assert!(
            self.failures.is_empty(),
            "criterion `{}` failed:\n  {}",
            self.name,
            self.failures.join("\n  ")
        );
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcqleak"))
}

// Exponential-time reference for the LCS dynamic program.
fn lcs_brute_force(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1u32 << a.len()) {
        let sub: Vec<&String> = a
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, t)| t)
            .collect();
        if sub.len() <= best {
            continue;
        }
        let mut it = b.iter();
        if sub.iter().all(|t| it.any(|h| h == *t)) {
            best = sub.len();
        }
    }
    best
}

#[test]
fn criterion_1_rouge_oracle_equivalence() {
    let mut c = Criterion::new("1 rouge-l oracle equivalence (1000 pairs, <10s)");
    let started = Instant::now();
    let vocab = ["ax", "bo", "cy", "dz"];
    let mut rng = StdRng::seed_from_u64(0x524f554745);
    for round in 0..1000 {
        let draw = |rng: &mut StdRng| -> Vec<String> {
            let len = rng.gen_range(0..=8);
            (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].to_string()).collect()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let expected = lcs_brute_force(&a, &b);
        let got = lcs_length(&TokenSeq::from_tokens(a.clone()), &TokenSeq::from_tokens(b.clone()));
        c.check(
            got == expected,
            format!("round {round}: lcs {got} != brute-force {expected} for {a:?} vs {b:?}"),
        );
        if !a.is_empty() {
            let f = rouge_l(&a.join(" "), &b.join(" ")).unwrap();
            // Closed form of the LCS F-measure.
            let reference = if expected == 0 || b.is_empty() {
                0.0
            } else {
                2.0 * expected as f64 / (a.len() + b.len()) as f64
            };
            c.check(
                (f - reference).abs() < 1e-12,
                format!("round {round}: rouge {f} != closed form {reference}"),
            );
        }
    }
    let elapsed = started.elapsed();
    c.check(
        elapsed.as_secs_f64() < 10.0,
        format!("oracle comparison took {elapsed:?}, budget 10s"),
    );
    c.finish();
}

#[test]
fn criterion_2_permutation_algebra() {
    let mut c = Criterion::new("2 permutation algebra");
    c.check(all_orders(4).unwrap().len() == 24, "4-option enumeration != 24".into());
    c.check(ordered_pairs(4).unwrap().len() == 12, "4-option pairs != 12".into());
    c.check(ordered_pairs(10).unwrap().len() == 90, "10-option pairs != 90".into());

    let mut rng = StdRng::seed_from_u64(0x5045524d);
    for round in 0..100 {
        let n = rng.gen_range(2..=6usize);
        let inst = mcqleak::McqInstance {
            id: format!("r{round}"),
            question: format!("roundtrip probe {round}"),
            options: (0..n).map(|k| format!("choice {k} round {round}")).collect(),
            answer_index: rng.gen_range(0..n),
            subject: None,
        };
        let orders = all_orders(n).unwrap();
        let order = &orders[rng.gen_range(0..orders.len())];
        let back = apply_order(&apply_order(&inst, order).unwrap(), &order.inverse()).unwrap();
        c.check(
            back == inst,
            format!("round {round}: `{order}` then inverse did not restore the instance"),
        );
    }
    c.finish();
}

#[test]
fn criterion_3_bundled_plan_reproduction() {
    let mut c = Criterion::new("3 reduction-plan reproduction from fixture matrices");
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("reduce")
        .arg("--matrices")
        .arg(fixtures.join("perm_scores_a.json"))
        .arg(fixtures.join("perm_scores_b.json"))
        .arg(fixtures.join("perm_scores_c.json"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    c.check(status.success(), format!("reduce exited with {status}"));

    let plan = ReductionPlan::load(&out.path().join("plan.json")).unwrap();
    let half: Vec<String> = plan
        .retained(0.5)
        .unwrap()
        .iter()
        .map(|o| o.as_str().to_string())
        .collect();
    let expected_half = [
        "ABCD", "ABDC", "ACBD", "BACD", "BCDA", "BDAC", "CABD", "CADB", "DABC", "DACB",
        "DBAC", "DCAB",
    ];
    c.check(
        half == expected_half,
        format!("retained(0.5) = {half:?}, expected {expected_half:?}"),
    );

    let mut previous: Option<BTreeSet<OrderLabel>> = None;
    for tenth in 0..=10 {
        let p = tenth as f64 / 10.0;
        let level: BTreeSet<OrderLabel> = plan.retained(p).unwrap().into_iter().collect();
        if let Some(smaller) = &previous {
            c.check(
                smaller.is_subset(&level),
                format!("retained({}) is not a superset of retained({})", p, p - 0.1),
            );
        }
        previous = Some(level);
    }
    c.finish();
}

fn clean_simulation_options(tie_rule: TieRule) -> SimulationOptions {
    SimulationOptions {
        total: 60,
        seed: 20260809,
        detector: DetectorConfig {
            tie_rule,
            ..DetectorConfig::default()
        },
        ..SimulationOptions::default()
    }
}

#[test]
fn criterion_4_simulated_leakage_exact_desk_run() {
    let mut c = Criterion::new("4 desk-scale simulated leakage (30/30)");
    let started = Instant::now();
    let ds = common::simulation_dataset(200);

    let factory = MockFactory::new(
        MockContaminationSpec {
            boost: 5.0,
            base_logprob: -6.0,
            fidelity: 1.0,
            noise: 0.05,
            seed: 17,
            ..MockContaminationSpec::default()
        },
        PromptTemplate::default(),
    );
    let outcome = run_simulation(&ds, &factory, &clean_simulation_options(TieRule::Strict)).unwrap();
    c.check(
        outcome.split.leaked_ids.len() == 30 && outcome.split.held_out_ids.len() == 30,
        format!(
            "split sizes {}/{}, expected 30/30",
            outcome.split.leaked_ids.len(),
            outcome.split.held_out_ids.len()
        ),
    );
    for method in ["n-gram", "permutation-q", "permutation"] {
        let f1 = outcome.report.per_method[method].f1;
        c.check(f1 == 1.0, format!("{method} F1 = {f1}, expected exactly 1.0"));
    }

    // No contamination signal at all: nothing is reproducible.
    let dead_factory = MockFactory::new(
        MockContaminationSpec {
            boost: 0.0,
            base_logprob: -6.0,
            fidelity: 0.0,
            noise: 0.05,
            seed: 17,
            ..MockContaminationSpec::default()
        },
        PromptTemplate::default(),
    );
    let dead = run_simulation(&ds, &dead_factory, &clean_simulation_options(TieRule::Strict)).unwrap();
    let recall = dead.report.per_method["n-gram"].recall;
    c.check(recall == 0.0, format!("n-gram recall = {recall} with no signal, expected 0"));

    let elapsed = started.elapsed();
    c.check(
        elapsed.as_secs_f64() < 60.0,
        format!("desk run took {elapsed:?}, budget 60s"),
    );
    c.finish();
}

#[test]
fn criterion_5_noisy_mock_beats_coin_flip_with_margin() {
    let mut c = Criterion::new("5 noisy-mock detector quality over 200 runs");
    let ds = common::simulation_dataset(48);
    let factory = MockFactory::new(
        MockContaminationSpec {
            boost: 1.5,
            base_logprob: -6.0,
            fidelity: 0.8,
            noise: 0.3,
            seed: 23,
            ..MockContaminationSpec::default()
        },
        PromptTemplate::default(),
    );
    let mut pooled: BTreeMap<String, ConfusionCounts> = BTreeMap::new();
    for seed in 0..200u64 {
        let opts = SimulationOptions {
            total: 12,
            seed,
            detector: DetectorConfig {
                tie_rule: TieRule::Strict,
                ..DetectorConfig::default()
            },
            combos: vec![],
            ..SimulationOptions::default()
        };
        let outcome = run_simulation(&ds, &factory, &opts).unwrap();
        for (method, metrics) in &outcome.report.per_method {
            pooled
                .entry(method.clone())
                .or_default()
                .merge(&metrics.confusion);
        }
    }
    for method in Method::DETECTORS {
        let confusion = pooled[&method.to_string()];
        let m = MethodMetrics::from_confusion(confusion);
        c.check(
            m.f1 >= 0.5 + 0.2,
            format!(
                "{method}: pooled F1 {:.4} under coin-flip margin (counts {confusion:?})",
                m.f1
            ),
        );
    }
    c.finish();
}

#[test]
fn criterion_6_sweep_recall_monotone() {
    let mut c = Criterion::new("6 threshold sweep: recall non-increasing in T");
    let ds = common::simulation_dataset(64);
    let factory = MockFactory::new(
        MockContaminationSpec {
            boost: 1.5,
            base_logprob: -6.0,
            fidelity: 0.6,
            noise: 0.3,
            seed: 29,
            ..MockContaminationSpec::default()
        },
        PromptTemplate::default(),
    );
    let outcome = run_simulation(
        &ds,
        &factory,
        &SimulationOptions {
            total: 16,
            seed: 5,
            ..SimulationOptions::default()
        },
    )
    .unwrap();
    let entries = ngram_evidence(&outcome.verdicts).unwrap();
    // Intermediate fidelity should spread the replication counts around.
    let distinct: BTreeSet<usize> = entries.iter().map(|e| e.matched_count).collect();
    c.check(
        distinct.len() > 1,
        format!("evidence counts degenerate: {distinct:?}"),
    );
    let rows = sweep_threshold(&entries, &outcome.split, &DEFAULT_SWEEP_THRESHOLDS).unwrap();
    c.check(rows[0].metrics.recall == 1.0, "recall at T=0 must be 1".into());
    for pair in rows.windows(2) {
        c.check(
            pair[1].metrics.recall <= pair[0].metrics.recall,
            format!(
                "recall rose from {} to {} between T={} and T={}",
                pair[0].metrics.recall,
                pair[1].metrics.recall,
                pair[0].ratio_threshold,
                pair[1].ratio_threshold
            ),
        );
    }
    c.finish();
}

#[test]
fn criterion_7_cleaning_algebra() {
    let mut c = Criterion::new("7 strong/weak cleaning algebra");
    let ds = common::simulation_dataset(12);
    let flagged: BTreeSet<&str> = ["syn000", "syn003", "syn006"].into();
    let verdicts: Vec<Verdict> = ds
        .instances()
        .iter()
        .map(|inst| Verdict {
            instance_id: inst.id.clone(),
            method: Method::NGram,
            leaked: flagged.contains(inst.id.as_str()),
            evidence: Evidence::NGram {
                probes: vec![],
                matched_count: 0,
                option_count: 4,
                ratio: 0.0,
                similarity_threshold: 0.75,
                ratio_threshold: 0.25,
            },
        })
        .collect();
    let verdicts_by_model: BTreeMap<String, Vec<Verdict>> =
        [("m".to_string(), verdicts)].into();
    // The model answers every flagged instance incorrectly and everything
    // else correctly.
    let answers: BTreeMap<String, usize> = ds
        .instances()
        .iter()
        .map(|inst| {
            let chosen = if flagged.contains(inst.id.as_str()) {
                (inst.answer_index + 1) % 4
            } else {
                inst.answer_index
            };
            (inst.id.clone(), chosen)
        })
        .collect();
    let answers_by_model: BTreeMap<String, BTreeMap<String, usize>> =
        [("m".to_string(), answers)].into();
    let strong = CleaningPolicy {
        mode: CleanMode::Strong,
        models: vec!["m".into()],
        detector: Method::NGram,
    };
    let weak = CleaningPolicy {
        mode: CleanMode::Weak,
        ..strong.clone()
    };
    let groups = BTreeMap::new();
    let (_, strong_removed, _) =
        clean_benchmark(&ds, &verdicts_by_model, &answers_by_model, &strong, &groups).unwrap();
    let (_, weak_removed, weak_report) =
        clean_benchmark(&ds, &verdicts_by_model, &answers_by_model, &weak, &groups).unwrap();
    c.check(
        strong_removed.is_subset(&weak_removed),
        format!("strong removals {strong_removed:?} not within weak {weak_removed:?}"),
    );
    c.check(
        strong_removed.is_empty() && weak_removed.len() == 3,
        format!(
            "expected 0 strong / 3 weak removals, got {} / {}",
            strong_removed.len(),
            weak_removed.len()
        ),
    );
    let overall = &weak_report.per_model["m"].overall;
    c.check(
        overall.accuracy_after > overall.accuracy_before,
        format!(
            "removing always-wrong flagged instances must raise accuracy: {} -> {}",
            overall.accuracy_before, overall.accuracy_after
        ),
    );
    c.finish();
}

#[test]
fn criterion_8_simulation_reports_are_byte_identical() {
    let mut c = Criterion::new("8 repeated runs byte-identical");
    let work = tempfile::tempdir().unwrap();
    let dataset_path = work.path().join("dataset.jsonl");
    common::write_dataset(&dataset_path, &common::simulation_instances(200));
    let spec_path = work.path().join("mock.json");
    std::fs::write(
        &spec_path,
        r#"{"boost":5.0,"base_logprob":-6.0,"fidelity":1.0,"noise":0.05,"seed":17}"#,
    )
    .unwrap();

    let run = |out: &Path| {
        let status = bin()
            .arg("simulate")
            .arg("--dataset")
            .arg(&dataset_path)
            .arg("--mock-spec")
            .arg(&spec_path)
            .arg("--total")
            .arg("60")
            .arg("--seed")
            .arg("20260809")
            .arg("--tie-rule")
            .arg("strict")
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success(), "simulate exited with {status}");
    };
    let out_a = work.path().join("a");
    let out_b = work.path().join("b");
    run(&out_a);
    run(&out_b);
    for name in ["report.json", "verdicts.jsonl", "split.json", "baseline_answers.jsonl"] {
        let left = std::fs::read(out_a.join(name)).unwrap();
        let right = std::fs::read(out_b.join(name)).unwrap();
        c.check(
            left == right,
            format!("{name} differs between identical runs"),
        );
    }
    c.finish();
}

#[test]
fn criterion_9_gateway_call_budgets() {
    let mut c = Criterion::new("9 per-instance gateway call budgets at n=4");
    let inst = &common::simulation_instances(1)[0];
    let cfg = DetectorConfig::default();
    let make_counter = || {
        CountingGateway::new(
            MockGateway::with_memorized(
                &MockContaminationSpec::default(),
                std::slice::from_ref(inst),
                &PromptTemplate::default(),
            )
            .unwrap(),
        )
    };

    let counter = make_counter();
    detect_semi_half(inst, &counter, &cfg).unwrap();
    c.check(
        counter.score_calls() == 4,
        format!("semi-half used {} scoring calls, expected 4", counter.score_calls()),
    );

    let counter = make_counter();
    detect_permutation(inst, &counter, &cfg, &all_orders(4).unwrap()).unwrap();
    c.check(
        counter.score_calls() == 24,
        format!("permutation used {} scoring calls, expected 24", counter.score_calls()),
    );

    let counter = make_counter();
    let reduced = mcqleak::permutations::builtin_plan_n4().retained(0.5).unwrap();
    detect_permutation(inst, &counter, &cfg, &reduced).unwrap();
    c.check(
        counter.score_calls() == 12,
        format!(
            "reduced permutation used {} scoring calls, expected 12",
            counter.score_calls()
        ),
    );

    let counter = make_counter();
    detect_permutation_q(inst, &counter, &cfg).unwrap();
    c.check(
        counter.score_calls() == 12,
        format!("pairwise used {} scoring calls, expected 12", counter.score_calls()),
    );

    let counter = make_counter();
    detect_ngram(inst, &counter, &cfg).unwrap();
    c.check(
        counter.generate_calls() == 4 && counter.score_calls() == 0,
        format!(
            "n-gram used {} generations and {} scores, expected 4 and 0",
            counter.generate_calls(),
            counter.score_calls()
        ),
    );
    c.finish();
}

// Cross-checks the metrics path used by the criteria above: a verdict
// stream scored against labels must agree with the report rows.
#[test]
fn report_rows_match_direct_metric_computation() {
    let ds = common::simulation_dataset(48);
    let factory = MockFactory::new(
        MockContaminationSpec {
            boost: 2.0,
            base_logprob: -6.0,
            fidelity: 0.9,
            noise: 0.2,
            seed: 31,
            ..MockContaminationSpec::default()
        },
        PromptTemplate::default(),
    );
    let outcome = run_simulation(
        &ds,
        &factory,
        &SimulationOptions {
            total: 10,
            seed: 2,
            ..SimulationOptions::default()
        },
    )
    .unwrap();
    let ngram: Vec<Verdict> = outcome
        .verdicts
        .iter()
        .filter(|v| v.method == Method::NGram)
        .cloned()
        .collect();
    let direct = metrics(&ngram, &outcome.split).unwrap();
    assert_eq!(direct, outcome.report.per_method["n-gram"]);

    let split: LabeledSplit = outcome.split.clone();
    assert!(Dataset::from_instances("copy", ds.instances().to_vec())
        .unwrap()
        .instances()
        .iter()
        .filter(|i| split.label_of(&i.id).is_some())
        .count()
        .eq(&10));
}
