//! Instance-level leakage detectors.
//!
//! Each detector maps (instance, gateway, config) to a [`Verdict`] carrying
//! the evidence that produced the call:
//!
//! - **semi-half** keeps only the last few words of the question and flags
//!   the instance if the model still answers correctly.
//! - **permutation** scores the option block under every supplied ordering
//!   and flags when the original ordering attains the maximum. Passing the
//!   full ordering set gives the original method; passing a reduced set
//!   from a [`ReductionPlan`](crate::permutations::ReductionPlan) gives the
//!   cheaper variant.
//! - **permutation-q** scores all ordered pairs of options and flags when
//!   the original first pair attains the maximum.
//! - **n-gram** asks the model to regenerate each option and flags when
//!   enough regenerations are similar to the originals.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::McqInstance;
use crate::error::{Error, Result};
use crate::gateway::{mcq_option_scores, ModelGateway, ScoreRequest};
use crate::permutations::{ordered_pairs, OrderLabel, DEFAULT_ENUMERATION_CEILING};
use crate::prompt::PromptTemplate;
use crate::textsim::rouge_l;

/// The closed set of detection methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "semi-half")]
    SemiHalf,
    #[serde(rename = "permutation")]
    Permutation,
    #[serde(rename = "permutation-r")]
    PermutationR,
    #[serde(rename = "permutation-q")]
    PermutationQ,
    #[serde(rename = "n-gram")]
    NGram,
    #[serde(rename = "combo")]
    Combo,
}

impl Method {
    pub const DETECTORS: [Method; 5] = [
        Method::SemiHalf,
        Method::Permutation,
        Method::PermutationR,
        Method::PermutationQ,
        Method::NGram,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SemiHalf => "semi-half",
            Method::Permutation => "permutation",
            Method::PermutationR => "permutation-r",
            Method::PermutationQ => "permutation-q",
            Method::NGram => "n-gram",
            Method::Combo => "combo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi-half" => Ok(Method::SemiHalf),
            "permutation" => Ok(Method::Permutation),
            "permutation-r" => Ok(Method::PermutationR),
            "permutation-q" => Ok(Method::PermutationQ),
            "n-gram" => Ok(Method::NGram),
            "combo" => Ok(Method::Combo),
            other => Err(Error::InvalidArgument(format!(
                "unknown detector `{other}` (expected one of semi-half, permutation, \
                 permutation-r, permutation-q, n-gram)"
            ))),
        }
    }
}

/// How "attains the maximum" treats exact score ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    /// A tie with the best competitor still counts as maximal.
    #[default]
    Geq,
    /// The original ordering must beat every competitor outright.
    Strict,
}

impl fmt::Display for TieRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieRule::Geq => "geq",
            TieRule::Strict => "strict",
        })
    }
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geq" => Ok(TieRule::Geq),
            "strict" => Ok(TieRule::Strict),
            other => Err(Error::InvalidArgument(format!(
                "unknown tie rule `{other}` (expected `geq` or `strict`)"
            ))),
        }
    }
}

/// Thresholds and rendering knobs shared by the detectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Words of the question that semi-half keeps, counted from the end.
    pub semi_half_keep_words: usize,
    /// Similarity floor for counting a regenerated option as replicated.
    pub ngram_similarity_threshold: f64,
    /// Fraction of replicated options at which an instance is flagged.
    pub ngram_ratio_threshold: f64,
    /// Proportion of orderings the reduced permutation variant keeps.
    pub perm_proportion: f64,
    pub prompt_template: PromptTemplate,
    pub tie_rule: TieRule,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            semi_half_keep_words: 7,
            ngram_similarity_threshold: 0.75,
            ngram_ratio_threshold: 0.25,
            perm_proportion: 0.5,
            prompt_template: PromptTemplate::default(),
            tie_rule: TieRule::Geq,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.semi_half_keep_words == 0 {
            return Err(Error::Config("semi_half_keep_words must be at least 1".into()));
        }
        for (name, value) in [
            ("ngram similarity threshold", self.ngram_similarity_threshold),
            ("ngram ratio threshold", self.ngram_ratio_threshold),
            ("permutation proportion", self.perm_proportion),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!("{name} {value} outside [0, 1]")));
            }
        }
        self.prompt_template.validate()
    }
}

/// One per-option regeneration probe of the n-gram detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NgramProbe {
    pub reference: String,
    pub generated: String,
    pub similarity: f64,
    pub matched: bool,
}

/// Method-specific evidence attached to every verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Evidence {
    SemiHalf {
        truncated_question: String,
        option_scores: Vec<f64>,
        chosen_index: usize,
        answer_index: usize,
    },
    Ordering {
        orders: Vec<OrderLabel>,
        scores: Vec<f64>,
        identity_score: f64,
        best_competitor: Option<f64>,
    },
    Pairwise {
        pairs: Vec<(usize, usize)>,
        scores: Vec<f64>,
        original_pair_score: f64,
        best_competitor: Option<f64>,
    },
    NGram {
        probes: Vec<NgramProbe>,
        matched_count: usize,
        option_count: usize,
        ratio: f64,
        similarity_threshold: f64,
        ratio_threshold: f64,
    },
    Combo {
        /// Component method names with their decisions, in combination
        /// order.
        components: Vec<(String, bool)>,
        contributing: Vec<String>,
    },
}

/// Per-instance, per-method decision plus the evidence behind it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub instance_id: String,
    pub method: Method,
    pub leaked: bool,
    pub evidence: Evidence,
}

fn maximal(identity: f64, best_competitor: Option<f64>, rule: TieRule) -> bool {
    match best_competitor {
        None => true,
        Some(best) => match rule {
            TieRule::Geq => identity >= best,
            TieRule::Strict => identity > best,
        },
    }
}

/// Keep only the trailing `keep_words` whitespace words of a question.
pub fn truncate_question(question: &str, keep_words: usize) -> String {
    let words: Vec<&str> = question.split_whitespace().collect();
    let start = words.len().saturating_sub(keep_words);
    words[start..].join(" ")
}

/// Flag the instance if the model answers correctly from the question tail.
pub fn detect_semi_half(
    inst: &McqInstance,
    gateway: &dyn ModelGateway,
    cfg: &DetectorConfig,
) -> Result<Verdict> {
    inst.validate()?;
    cfg.validate()?;
    if inst.question.split_whitespace().next().is_none() {
        return Err(Error::Precondition(format!(
            "instance `{}` has an empty question",
            inst.id
        )));
    }
    let truncated_question = truncate_question(&inst.question, cfg.semi_half_keep_words);
    let truncated = McqInstance {
        question: truncated_question.clone(),
        ..inst.clone()
    };
    let option_scores = mcq_option_scores(gateway, &truncated, &cfg.prompt_template)?;
    let chosen_index = crate::gateway::argmax_lowest_index(&option_scores);
    Ok(Verdict {
        instance_id: inst.id.clone(),
        method: Method::SemiHalf,
        leaked: chosen_index == inst.answer_index,
        evidence: Evidence::SemiHalf {
            truncated_question,
            option_scores,
            chosen_index,
            answer_index: inst.answer_index,
        },
    })
}

/// Score the option block under each supplied ordering; flag when the
/// original ordering attains the maximum. With the full ordering set the
/// verdict is labeled `permutation`, with a subset `permutation-r`.
pub fn detect_permutation(
    inst: &McqInstance,
    gateway: &dyn ModelGateway,
    cfg: &DetectorConfig,
    orders: &[OrderLabel],
) -> Result<Verdict> {
    inst.validate()?;
    cfg.validate()?;
    let n = inst.option_count();
    if orders.is_empty() {
        return Err(Error::InvalidArgument("no orderings supplied".into()));
    }
    for order in orders {
        if order.arity() != n {
            return Err(Error::InvalidArgument(format!(
                "ordering `{order}` does not fit instance `{}` with {n} options",
                inst.id
            )));
        }
    }
    let identity_pos = orders
        .iter()
        .position(|o| o.is_identity())
        .ok_or_else(|| {
            Error::InvalidArgument("ordering set does not include the identity".into())
        })?;

    let prefix = cfg.prompt_template.score_prefix(inst);
    let mut scores = Vec::with_capacity(orders.len());
    for order in orders {
        let continuation = cfg.prompt_template.ordering_continuation(inst, order)?;
        let score = gateway.score_continuation(&ScoreRequest::new(prefix.clone(), continuation))?;
        scores.push(score.total_logprob);
    }
    let identity_score = scores[identity_pos];
    let best_competitor = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != identity_pos)
        .map(|(_, &s)| s)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));

    let full_set = n <= DEFAULT_ENUMERATION_CEILING && orders.len() == factorial(n);
    Ok(Verdict {
        instance_id: inst.id.clone(),
        method: if full_set {
            Method::Permutation
        } else {
            Method::PermutationR
        },
        leaked: maximal(identity_score, best_competitor, cfg.tie_rule),
        evidence: Evidence::Ordering {
            orders: orders.to_vec(),
            scores,
            identity_score,
            best_competitor,
        },
    })
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Score every ordered pair of options; flag when the original first pair
/// attains the maximum, regardless of where the gold answer sits.
pub fn detect_permutation_q(
    inst: &McqInstance,
    gateway: &dyn ModelGateway,
    cfg: &DetectorConfig,
) -> Result<Verdict> {
    inst.validate()?;
    cfg.validate()?;
    let pairs = ordered_pairs(inst.option_count())?;
    let prefix = cfg.prompt_template.score_prefix(inst);
    let mut scores = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let continuation = cfg
            .prompt_template
            .pair_continuation(&inst.options[i], &inst.options[j]);
        let score = gateway.score_continuation(&ScoreRequest::new(prefix.clone(), continuation))?;
        scores.push(score.total_logprob);
    }
    // ordered_pairs puts the original (first, second) pair first.
    let original_pair_score = scores[0];
    let best_competitor = scores[1..]
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));
    Ok(Verdict {
        instance_id: inst.id.clone(),
        method: Method::PermutationQ,
        leaked: maximal(original_pair_score, best_competitor, cfg.tie_rule),
        evidence: Evidence::Pairwise {
            pairs,
            scores,
            original_pair_score,
            best_competitor,
        },
    })
}

/// Ask the model to regenerate each option from the question and the
/// preceding options; flag when the replicated fraction reaches the ratio
/// threshold.
pub fn detect_ngram(
    inst: &McqInstance,
    gateway: &dyn ModelGateway,
    cfg: &DetectorConfig,
) -> Result<Verdict> {
    inst.validate()?;
    cfg.validate()?;
    let n = inst.option_count();
    let mut probes = Vec::with_capacity(n);
    let mut matched_count = 0usize;
    for index in 0..n {
        let prefix = cfg.prompt_template.generation_prefix(inst, index);
        let reference = &inst.options[index];
        let reference_words = reference.split_whitespace().count().max(1);
        // Enough budget to reproduce the option verbatim with headroom.
        let max_tokens = (reference_words * 3).div_ceil(2);
        let generated = gateway.generate_greedy(&prefix, max_tokens, Some("\n"))?;
        let similarity = rouge_l(reference, &generated)?;
        let matched = similarity >= cfg.ngram_similarity_threshold;
        if matched {
            matched_count += 1;
        }
        probes.push(NgramProbe {
            reference: reference.clone(),
            generated,
            similarity,
            matched,
        });
    }
    let ratio = matched_count as f64 / n as f64;
    Ok(Verdict {
        instance_id: inst.id.clone(),
        method: Method::NGram,
        leaked: ratio >= cfg.ngram_ratio_threshold,
        evidence: Evidence::NGram {
            probes,
            matched_count,
            option_count: n,
            ratio,
            similarity_threshold: cfg.ngram_similarity_threshold,
            ratio_threshold: cfg.ngram_ratio_threshold,
        },
    })
}

/// OR-combine verdicts for one instance.
pub fn combine_or(verdicts: &[Verdict]) -> Result<Verdict> {
    let first = verdicts
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot combine zero verdicts".into()))?;
    let mut components = Vec::new();
    let mut contributing = Vec::new();
    for v in verdicts {
        if v.instance_id != first.instance_id {
            return Err(Error::InvalidArgument(format!(
                "combine_or saw mixed instance ids `{}` and `{}`",
                first.instance_id, v.instance_id
            )));
        }
        components.push((v.method.to_string(), v.leaked));
        if v.leaked {
            contributing.push(v.method.to_string());
        }
    }
    Ok(Verdict {
        instance_id: first.instance_id.clone(),
        method: Method::Combo,
        leaked: !contributing.is_empty(),
        evidence: Evidence::Combo {
            components,
            contributing,
        },
    })
}

pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    crate::files::write_jsonl(path, verdicts)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<Verdict>> {
    crate::files::read_jsonl(path)
}
