//! Shared fixtures for the integration suites.

#![allow(dead_code)]

use std::path::Path;

use mcqleak::dataset::{Dataset, McqInstance};

const ADJECTIVES: [&str; 8] = [
    "cobalt", "amber", "ochre", "cerulean", "viridian", "magenta", "sable", "ivory",
];
const NOUNS: [&str; 8] = [
    "lattice", "spiral", "palisade", "corolla", "antenna", "pylon", "vestibule", "cloister",
];
const SUBJECTS: [&str; 3] = ["anatomy", "logic", "chemistry"];

/// Deterministic synthetic four-option instances with distinctive
/// vocabulary. Questions run longer than the semi-half keep window and
/// option texts share no words with the mock's distractor output.
pub fn simulation_instances(count: usize) -> Vec<McqInstance> {
    (0..count)
        .map(|i| McqInstance {
            id: format!("syn{i:03}"),
            question: format!(
                "benchmark item {i} asks which {} {} best matches clue number {i}",
                ADJECTIVES[i % 8],
                NOUNS[(i / 3) % 8]
            ),
            options: (0..4)
                .map(|k| {
                    format!(
                        "{} {} variant {k} for item {i}",
                        ADJECTIVES[(i + k + 1) % 8],
                        NOUNS[(i + 2 * k + 3) % 8]
                    )
                })
                .collect(),
            answer_index: i % 4,
            subject: Some(SUBJECTS[i % 3].to_string()),
        })
        .collect()
}

pub fn simulation_dataset(count: usize) -> Dataset {
    Dataset::from_instances("synthetic", simulation_instances(count)).unwrap()
}

pub fn write_dataset(path: &Path, instances: &[McqInstance]) {
    Dataset::from_instances("synthetic", instances.to_vec())
        .unwrap()
        .save(path)
        .unwrap();
}
