//! Leakage detection for multiple-choice benchmarks.
//!
//! The crate answers one question at instance granularity: does a model's
//! behavior on a benchmark item look like the item was in its training
//! data? It ships five detectors (question truncation, full and reduced
//! option-order scoring, pairwise option scoring, and option regeneration
//! with LCS similarity), a wire client for any completion endpoint that
//! exposes per-token log-probabilities, a deterministic contaminated mock
//! for desk-scale simulations, and the evaluation machinery to score
//! detectors against ground-truth labels, sweep thresholds, and emit
//! cleaned benchmark subsets.

pub mod dataset;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod files;
pub mod gateway;
pub mod permutations;
pub mod prompt;
pub mod textsim;

pub use dataset::{Dataset, DatasetFormat, LabeledSplit, McqInstance};
pub use detectors::{DetectorConfig, Method, TieRule, Verdict};
pub use error::{Error, Result};
pub use gateway::{ModelGateway, ScoreRequest, SequenceScore};
pub use prompt::PromptTemplate;
