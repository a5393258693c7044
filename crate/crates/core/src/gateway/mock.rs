//! A deterministic contaminated mock model.
//!
//! The mock emulates what continual pretraining on benchmark instances
//! does to a model's scoring surface, at desk scale and with no weights:
//! every token costs `base_logprob`, plus `boost` while the scored
//! sequence is still tracking some memorized canonical text
//! token-for-token. The first divergence from every live alignment kills
//! the boost for the rest of the sequence. Generation reproduces the
//! memorized next option verbatim with probability `fidelity`, otherwise
//! it emits a fixed distractor.
//!
//! Tokens are whitespace-delimited words, so the suite needs no external
//! tokenizer. All randomness is keyed by content hashes under the spec's
//! seed: identical inputs give byte-identical outputs regardless of call
//! order or thread interleaving. Jitter is keyed by token text alone, so
//! an unboosted score depends only on the token multiset: reordering the
//! same option blocks leaves it exactly tied, and memorization is the one
//! thing that can break that tie. Perplexity still varies across
//! instances because their texts differ.

use serde::{Deserialize, Serialize};

use super::{ModelGateway, ScoreRequest, SequenceScore};
use crate::dataset::{Dataset, McqInstance};
use crate::error::{Error, Result};
use crate::prompt::PromptTemplate;

/// What the mock returns when it is not reproducing memorized content.
pub const DISTRACTOR_TEXT: &str = "scrambled filler drawn from an unrelated passage";

/// Per-token log-probabilities snap to this binary grid. Grid multiples
/// below ~2^33 in magnitude sum exactly in an f64, so totals are
/// independent of summation order and exact ties stay exact.
const GRID: f64 = (1u64 << 20) as f64;

/// Ceiling keeping every per-token value strictly negative even when
/// `boost` exceeds `-base_logprob`.
const MAX_TOKEN_LOGPROB: f64 = -1.0 / GRID;

/// Contamination parameters for the mock, as persisted in a spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MockContaminationSpec {
    /// Ids of instances whose canonical text the mock has memorized.
    pub memorized: Vec<String>,
    /// Extra per-token log-probability while extending memorized text.
    pub boost: f64,
    /// Per-token log-probability of ordinary text, in nats. Negative.
    pub base_logprob: f64,
    /// Probability that generation reproduces the memorized next option.
    pub fidelity: f64,
    pub seed: u64,
    /// Amplitude of deterministic per-token jitter; zero disables it.
    pub noise: f64,
}

impl Default for MockContaminationSpec {
    fn default() -> Self {
        MockContaminationSpec {
            memorized: Vec::new(),
            boost: 4.0,
            base_logprob: -6.0,
            fidelity: 1.0,
            seed: 0,
            noise: 0.0,
        }
    }
}

impl MockContaminationSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.base_logprob.is_finite() || self.base_logprob >= 0.0 {
            return Err(Error::Config(format!(
                "base_logprob must be a finite negative number, got {}",
                self.base_logprob
            )));
        }
        if !self.boost.is_finite() || self.boost < 0.0 {
            return Err(Error::Config(format!(
                "boost must be finite and non-negative, got {}",
                self.boost
            )));
        }
        if !(0.0..=1.0).contains(&self.fidelity) {
            return Err(Error::Config(format!(
                "fidelity must lie in [0, 1], got {}",
                self.fidelity
            )));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::Config(format!(
                "noise must be finite and non-negative, got {}",
                self.noise
            )));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let spec: MockContaminationSpec = crate::files::read_json(path)?;
        spec.validate()?;
        Ok(spec)
    }
}

struct MemorizedEntry {
    /// Whitespace tokens of the canonical instance text.
    canonical: Vec<String>,
    /// Exact generation prefixes paired with the option text each one
    /// should elicit.
    generations: Vec<(String, String)>,
}

/// Deterministic mock backend. Pure and reentrant.
pub struct MockGateway {
    boost: f64,
    base_logprob: f64,
    fidelity: f64,
    seed: u64,
    noise: f64,
    memorized: Vec<MemorizedEntry>,
}

impl MockGateway {
    /// Resolve the spec's memorized ids against a dataset.
    pub fn new(
        spec: &MockContaminationSpec,
        dataset: &Dataset,
        template: &PromptTemplate,
    ) -> Result<Self> {
        let mut instances = Vec::with_capacity(spec.memorized.len());
        for id in &spec.memorized {
            let inst = dataset.get(id).ok_or_else(|| {
                Error::Config(format!("memorized id `{id}` is not in dataset `{}`", dataset.name))
            })?;
            instances.push(inst.clone());
        }
        Self::with_memorized(spec, &instances, template)
    }

    /// Memorize the given instances directly, ignoring the spec's id list.
    pub fn with_memorized(
        spec: &MockContaminationSpec,
        instances: &[McqInstance],
        template: &PromptTemplate,
    ) -> Result<Self> {
        spec.validate()?;
        template.validate()?;
        let memorized = instances
            .iter()
            .map(|inst| {
                inst.validate()?;
                let canonical = template
                    .canonical_text(inst)
                    .split_whitespace()
                    .map(str::to_string)
                    .collect();
                let generations = (0..inst.option_count())
                    .map(|i| (template.generation_prefix(inst, i), inst.options[i].clone()))
                    .collect();
                Ok(MemorizedEntry {
                    canonical,
                    generations,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MockGateway {
            boost: spec.boost,
            base_logprob: spec.base_logprob,
            fidelity: spec.fidelity,
            seed: spec.seed,
            noise: spec.noise,
            memorized,
        })
    }

    /// For each position of `full`, whether some memorized text is still
    /// being extended token-for-token at that position. An alignment may
    /// start anywhere inside the memorized text (the sequence only has to
    /// extend a contiguous run of it from its own first token), but once
    /// every live alignment has diverged the flag stays off.
    fn boost_flags(&self, full: &[&str]) -> Vec<bool> {
        let mut flags = vec![false; full.len()];
        for entry in &self.memorized {
            let m = &entry.canonical;
            let mut live: Vec<usize> = (0..m.len()).filter(|&a| m[a] == full[0]).collect();
            if live.is_empty() {
                continue;
            }
            flags[0] = true;
            for (i, token) in full.iter().enumerate().skip(1) {
                live.retain(|&a| a + i < m.len() && m[a + i] == *token);
                if live.is_empty() {
                    break;
                }
                flags[i] = true;
            }
        }
        flags
    }

    fn token_logprob(&self, token: &str, boosted: bool) -> f64 {
        let mut lp = self.base_logprob;
        if boosted {
            lp += self.boost;
        }
        if self.noise > 0.0 {
            lp += (hash01(self.seed, NOISE_TAG, token.as_bytes()) * 2.0 - 1.0) * self.noise;
        }
        ((lp * GRID).round() / GRID).min(MAX_TOKEN_LOGPROB)
    }
}

impl ModelGateway for MockGateway {
    fn score_continuation(&self, request: &ScoreRequest) -> Result<SequenceScore> {
        let prefix_tokens: Vec<&str> = request.prefix.split_whitespace().collect();
        let cont_tokens: Vec<&str> = request.continuation.split_whitespace().collect();
        if cont_tokens.is_empty() {
            return Err(Error::Precondition(
                "score_continuation requires a non-empty continuation".into(),
            ));
        }
        let full: Vec<&str> = prefix_tokens
            .iter()
            .chain(cont_tokens.iter())
            .copied()
            .collect();
        let flags = self.boost_flags(&full);
        let start = prefix_tokens.len();
        let total_logprob = (start..full.len())
            .map(|i| self.token_logprob(full[i], flags[i]))
            .sum();
        Ok(SequenceScore {
            total_logprob,
            token_count: cont_tokens.len(),
        })
    }

    fn generate_greedy(
        &self,
        prefix: &str,
        max_tokens: usize,
        stop: Option<&str>,
    ) -> Result<String> {
        if max_tokens == 0 {
            return Err(Error::Precondition("generation requires max_tokens >= 1".into()));
        }
        let mut text = DISTRACTOR_TEXT.to_string();
        'search: for entry in &self.memorized {
            for (gen_prefix, option_text) in &entry.generations {
                if gen_prefix == prefix {
                    if hash01(self.seed, GENERATION_TAG, prefix.as_bytes()) < self.fidelity {
                        text = option_text.clone();
                    }
                    break 'search;
                }
            }
        }
        if let Some(stop) = stop {
            if let Some(cut) = text.find(stop) {
                text.truncate(cut);
            }
        }
        let words: Vec<&str> = text.split_whitespace().take(max_tokens).collect();
        Ok(words.join(" "))
    }
}

const GENERATION_TAG: u64 = 0x67656e;
const NOISE_TAG: u64 = 0x6e6f6973;

/// Deterministic hash of (seed, tag, payload) mapped into [0, 1).
fn hash01(seed: u64, tag: u64, payload: &[u8]) -> f64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    h = h.wrapping_add(tag).wrapping_mul(0x100000001b3);
    for &b in payload {
        h = (h ^ b as u64).wrapping_mul(0x100000001b3);
    }
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d049bb133111eb);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}
