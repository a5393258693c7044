//! A wrapper that counts gateway traffic, used to verify per-detector
//! call budgets and to report usage in long runs.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::{ModelGateway, ScoreRequest, SequenceScore};
use crate::error::Result;

pub struct CountingGateway<G> {
    inner: G,
    score_calls: AtomicUsize,
    generate_calls: AtomicUsize,
}

impl<G: ModelGateway> CountingGateway<G> {
    pub fn new(inner: G) -> Self {
        CountingGateway {
            inner,
            score_calls: AtomicUsize::new(0),
            generate_calls: AtomicUsize::new(0),
        }
    }

    pub fn score_calls(&self) -> usize {
        self.score_calls.load(Ordering::SeqCst)
    }

    pub fn generate_calls(&self) -> usize {
        self.generate_calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.score_calls.store(0, Ordering::SeqCst);
        self.generate_calls.store(0, Ordering::SeqCst);
    }

    pub fn into_inner(self) -> G {
        self.inner
    }
}

impl<G: ModelGateway> ModelGateway for CountingGateway<G> {
    fn score_continuation(&self, request: &ScoreRequest) -> Result<SequenceScore> {
        self.score_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.score_continuation(request)
    }

    fn generate_greedy(
        &self,
        prefix: &str,
        max_tokens: usize,
        stop: Option<&str>,
    ) -> Result<String> {
        self.generate_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate_greedy(prefix, max_tokens, stop)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{MockContaminationSpec, MockGateway};
    use crate::prompt::PromptTemplate;

    #[test]
    fn counts_both_kinds_of_traffic() {
        let mock = MockGateway::with_memorized(
            &MockContaminationSpec::default(),
            &[],
            &PromptTemplate::default(),
        )
        .unwrap();
        let counting = CountingGateway::new(mock);
        counting
            .score_continuation(&ScoreRequest::new("a", "b c"))
            .unwrap();
        counting
            .score_continuation(&ScoreRequest::new("a", "b"))
            .unwrap();
        counting.generate_greedy("x", 4, None).unwrap();
        assert_eq!(counting.score_calls(), 2);
        assert_eq!(counting.generate_calls(), 1);
        counting.reset();
        assert_eq!(counting.score_calls(), 0);
    }

    #[test]
    fn derived_operations_route_through_the_counter() {
        let mock = MockGateway::with_memorized(
            &MockContaminationSpec::default(),
            &[],
            &PromptTemplate::default(),
        )
        .unwrap();
        let counting = CountingGateway::new(mock);
        counting.perplexity("some words to weigh").unwrap();
        assert_eq!(counting.score_calls(), 1);
    }
}
