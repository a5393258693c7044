//! Word-level text similarity: longest common subsequence and the
//! LCS-based F-measure used by the n-gram detector.
//!
//! Normalization is deliberately minimal and tokenizer-free: lowercase,
//! split on whitespace, punctuation left attached to its word. Thresholds
//! elsewhere in the crate assume exactly this normalization.

use crate::error::{Error, Result};

/// A normalized token sequence: lowercased, whitespace-delimited words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn tokenize(text: &str) -> Self {
        TokenSeq {
            tokens: text
                .split_whitespace()
                .map(|w| w.to_lowercase())
                .collect(),
        }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        TokenSeq { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Length of the longest common subsequence of two token sequences.
///
/// Symmetric, bounded by `min(|a|, |b|)`. Classic dynamic program with a
/// rolling row, O(|a|·|b|) time, O(min) space.
pub fn lcs_length(a: &TokenSeq, b: &TokenSeq) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; short.len() + 1];
    let mut curr = vec![0usize; short.len() + 1];
    for lt in long.tokens() {
        for (j, st) in short.tokens().iter().enumerate() {
            curr[j + 1] = if lt == st {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}

/// LCS-based F-measure between a reference and a hypothesis text.
///
/// `P = LCS/|hyp|`, `R = LCS/|ref|`, result `2PR/(P+R)`; returns 0 when the
/// hypothesis is empty or the sequences share nothing. The reference must
/// tokenize to at least one word.
pub fn rouge_l(reference: &str, hypothesis: &str) -> Result<f64> {
    let ref_tokens = TokenSeq::tokenize(reference);
    if ref_tokens.is_empty() {
        return Err(Error::Precondition(
            "rouge_l reference is empty after tokenization".into(),
        ));
    }
    let hyp_tokens = TokenSeq::tokenize(hypothesis);
    if hyp_tokens.is_empty() {
        return Ok(0.0);
    }
    let lcs = lcs_length(&ref_tokens, &hyp_tokens);
    if lcs == 0 {
        return Ok(0.0);
    }
    let precision = lcs as f64 / hyp_tokens.len() as f64;
    let recall = lcs as f64 / ref_tokens.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lcs_identity() {
        let a = TokenSeq::tokenize("one two three four five");
        assert_eq!(lcs_length(&a, &a), 5);
    }

    #[test]
    fn lcs_disjoint_vocabularies() {
        let a = TokenSeq::tokenize("alpha beta gamma");
        let b = TokenSeq::tokenize("delta epsilon");
        assert_eq!(lcs_length(&a, &b), 0);
    }

    #[test]
    fn lcs_partial_overlap_matches_brute_force() {
        let a = TokenSeq::tokenize("negative gravitropism is tropism");
        let b = TokenSeq::tokenize("negative tropism");
        assert_eq!(oracle::lcs_brute_force(&a, &b), 2);
        assert_eq!(lcs_length(&a, &b), 2);
    }

    #[test]
    fn rouge_identical_strings() {
        assert_eq!(rouge_l("the quick brown fox", "the quick brown fox").unwrap(), 1.0);
    }

    #[test]
    fn rouge_partial() {
        // ref 3 tokens, hyp 2 tokens, LCS 2: P = 1.0, R = 2/3, F = 0.8.
        let reference = "alpha beta gamma";
        let hypothesis = "alpha beta";
        let a = TokenSeq::tokenize(reference);
        let b = TokenSeq::tokenize(hypothesis);
        assert_eq!(oracle::lcs_brute_force(&a, &b), 2);
        let f = rouge_l(reference, hypothesis).unwrap();
        assert!((f - 0.8).abs() < 1e-12, "got {f}");
    }

    #[test]
    fn rouge_no_overlap_is_zero() {
        assert_eq!(rouge_l("alpha beta", "gamma delta").unwrap(), 0.0);
    }

    #[test]
    fn rouge_empty_hypothesis_is_zero() {
        assert_eq!(rouge_l("alpha beta", "").unwrap(), 0.0);
    }

    #[test]
    fn rouge_empty_reference_errors() {
        assert!(matches!(rouge_l("   ", "alpha"), Err(Error::Precondition(_))));
    }

    #[test]
    fn rouge_is_case_insensitive() {
        assert_eq!(rouge_l("Alpha BETA", "alpha beta").unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn lcs_agrees_with_brute_force(
            a in proptest::collection::vec("[abc]", 0..8),
            b in proptest::collection::vec("[abc]", 0..8),
        ) {
            let sa = TokenSeq::from_tokens(a);
            let sb = TokenSeq::from_tokens(b);
            prop_assert_eq!(lcs_length(&sa, &sb), oracle::lcs_brute_force(&sa, &sb));
        }

        #[test]
        fn rouge_bounded_and_reflexive(
            words in proptest::collection::vec("[a-d]{1,3}", 1..8),
        ) {
            let text = words.join(" ");
            let f = rouge_l(&text, &text).unwrap();
            prop_assert!((f - 1.0).abs() < 1e-12);
            let partial = rouge_l(&text, "zq").unwrap();
            prop_assert!((0.0..=1.0).contains(&partial));
        }
    }
}
