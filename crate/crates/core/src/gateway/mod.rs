//! Uniform capability surface over language models: conditional
//! log-probability scoring, greedy continuation, and the derived
//! perplexity and multiple-choice answering built on top of scoring.

pub mod counting;
pub mod mock;
pub mod wire;

use crate::dataset::McqInstance;
use crate::error::{Error, Result};
use crate::prompt::PromptTemplate;

/// A scoring request: sum the conditional log-probabilities of the
/// continuation's tokens given the prefix (and the continuation tokens
/// already consumed).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest {
    pub prefix: String,
    pub continuation: String,
}

impl ScoreRequest {
    pub fn new(prefix: impl Into<String>, continuation: impl Into<String>) -> Self {
        ScoreRequest {
            prefix: prefix.into(),
            continuation: continuation.into(),
        }
    }
}

/// Summed log-probability of a continuation, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceScore {
    pub total_logprob: f64,
    pub token_count: usize,
}

/// Capability surface implemented by every model backend.
///
/// Implementations must be shareable across threads; callers fan
/// instances out concurrently and rely on backends to enforce their own
/// in-flight limits.
pub trait ModelGateway: Send + Sync {
    fn score_continuation(&self, request: &ScoreRequest) -> Result<SequenceScore>;

    /// Argmax-decoded continuation, truncated at `stop` or `max_tokens`.
    fn generate_greedy(&self, prefix: &str, max_tokens: usize, stop: Option<&str>)
        -> Result<String>;

    /// `exp(−total_logprob / token_count)` of the whole text, unconditioned.
    fn perplexity(&self, text: &str) -> Result<f64> {
        if text.split_whitespace().next().is_none() {
            return Err(Error::Precondition(
                "perplexity requires text with at least one token".into(),
            ));
        }
        let score = self.score_continuation(&ScoreRequest::new("", text))?;
        Ok((-score.total_logprob / score.token_count as f64).exp())
    }

    /// Answer by scoring each option as a continuation of the rendered
    /// prompt; ties break to the lowest index.
    fn answer_mcq(&self, inst: &McqInstance, template: &PromptTemplate) -> Result<usize> {
        let scores = mcq_option_scores(self, inst, template)?;
        Ok(argmax_lowest_index(&scores))
    }
}

impl<T: ModelGateway + ?Sized> ModelGateway for &T {
    fn score_continuation(&self, request: &ScoreRequest) -> Result<SequenceScore> {
        (**self).score_continuation(request)
    }

    fn generate_greedy(
        &self,
        prefix: &str,
        max_tokens: usize,
        stop: Option<&str>,
    ) -> Result<String> {
        (**self).generate_greedy(prefix, max_tokens, stop)
    }
}

impl<T: ModelGateway + ?Sized> ModelGateway for std::sync::Arc<T> {
    fn score_continuation(&self, request: &ScoreRequest) -> Result<SequenceScore> {
        (**self).score_continuation(request)
    }

    fn generate_greedy(
        &self,
        prefix: &str,
        max_tokens: usize,
        stop: Option<&str>,
    ) -> Result<String> {
        (**self).generate_greedy(prefix, max_tokens, stop)
    }
}

/// One score per option: the option text as a continuation of the full
/// rendered prompt.
pub fn mcq_option_scores<G: ModelGateway + ?Sized>(
    gateway: &G,
    inst: &McqInstance,
    template: &PromptTemplate,
) -> Result<Vec<f64>> {
    inst.validate()?;
    let prefix = template.render_prompt(inst);
    inst.options
        .iter()
        .map(|opt| {
            gateway
                .score_continuation(&ScoreRequest::new(
                    prefix.clone(),
                    template.answer_continuation(opt),
                ))
                .map(|s| s.total_logprob)
        })
        .collect()
}

pub fn argmax_lowest_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}
