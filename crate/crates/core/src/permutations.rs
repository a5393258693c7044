//! Option-order algebra: enumerating full and pairwise orderings, applying
//! an ordering to an instance, and shrinking the ordering set by ranking
//! near-duplicate orderings with Mean Absolute Difference.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use itertools::Itertools;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::McqInstance;
use crate::error::{Error, Result};

/// Largest option count for which full enumeration is allowed by default.
pub const DEFAULT_ENUMERATION_CEILING: usize = 6;

/// An option ordering written as a string of letters, e.g. `"ACBD"`.
///
/// Position `i` of the label names which original option occupies slot `i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderLabel(String);

impl OrderLabel {
    pub fn parse(label: &str) -> Result<Self> {
        let n = label.chars().count();
        if !(2..=26).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "order label `{label}` must name between 2 and 26 options"
            )));
        }
        let mut seen = [false; 26];
        for ch in label.chars() {
            let idx = (ch as u32).wrapping_sub('A' as u32) as usize;
            if idx >= n {
                return Err(Error::InvalidArgument(format!(
                    "order label `{label}` contains `{ch}`, outside the first {n} letters"
                )));
            }
            if seen[idx] {
                return Err(Error::InvalidArgument(format!(
                    "order label `{label}` repeats `{ch}`"
                )));
            }
            seen[idx] = true;
        }
        Ok(OrderLabel(label.to_string()))
    }

    pub fn identity(n: usize) -> Result<Self> {
        if !(2..=26).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "option count {n} outside supported range 2..=26"
            )));
        }
        Ok(OrderLabel((0..n).map(letter).collect()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.chars().enumerate().all(|(i, ch)| ch == letter(i))
    }

    /// For each slot, the index of the original option that fills it.
    pub fn slot_sources(&self) -> Vec<usize> {
        self.0
            .chars()
            .map(|ch| (ch as u32 - 'A' as u32) as usize)
            .collect()
    }

    fn from_sources(sources: &[usize]) -> Self {
        OrderLabel(sources.iter().map(|&i| letter(i)).collect())
    }

    /// The ordering that undoes this one.
    pub fn inverse(&self) -> Self {
        let src = self.slot_sources();
        let mut inv = vec![0usize; src.len()];
        for (slot, &source) in src.iter().enumerate() {
            inv[source] = slot;
        }
        OrderLabel::from_sources(&inv)
    }
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

impl fmt::Display for OrderLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for OrderLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OrderLabel::parse(s)
    }
}

impl Serialize for OrderLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for OrderLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        OrderLabel::parse(&s).map_err(D::Error::custom)
    }
}

/// All `n!` orderings in lexicographic label order, identity first.
pub fn all_orders(n: usize) -> Result<Vec<OrderLabel>> {
    all_orders_capped(n, DEFAULT_ENUMERATION_CEILING)
}

/// Full enumeration with an explicit ceiling on `n`.
pub fn all_orders_capped(n: usize, ceiling: usize) -> Result<Vec<OrderLabel>> {
    if n < 2 || n > ceiling {
        return Err(Error::InvalidArgument(format!(
            "full enumeration supports 2..={ceiling} options, got {n}"
        )));
    }
    let labels: Vec<OrderLabel> = (0..n)
        .permutations(n)
        .map(|src| OrderLabel::from_sources(&src))
        .sorted()
        .collect();
    Ok(labels)
}

/// All `n·(n−1)` ordered pairs of distinct option indices, `(0, 1)` first,
/// the rest in lexicographic order.
pub fn ordered_pairs(n: usize) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "ordered pairs need at least 2 options, got {n}"
        )));
    }
    let mut pairs = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// Mean absolute elementwise difference between two score columns.
pub fn mad(column_a: &[f64], column_b: &[f64]) -> Result<f64> {
    if column_a.len() != column_b.len() {
        return Err(Error::InvalidArgument(format!(
            "column length mismatch: {} vs {}",
            column_a.len(),
            column_b.len()
        )));
    }
    if column_a.is_empty() {
        return Err(Error::InvalidArgument("mad over empty columns".into()));
    }
    let sum: f64 = column_a
        .iter()
        .zip(column_b)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / column_a.len() as f64)
}

/// Per-ordering log-probability scores over a set of instances.
///
/// `scores[i][j]` is the score of instance `instance_ids[i]` under
/// ordering `orders[j]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermScoreMatrix {
    pub orders: Vec<OrderLabel>,
    pub instance_ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl PermScoreMatrix {
    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() {
            return Err(Error::InvalidArgument("score matrix has no orders".into()));
        }
        if self.scores.len() != self.instance_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "score matrix has {} rows but {} instance ids",
                self.scores.len(),
                self.instance_ids.len()
            )));
        }
        if self.scores.is_empty() {
            return Err(Error::InvalidArgument("score matrix has no rows".into()));
        }
        let set: BTreeSet<&OrderLabel> = self.orders.iter().collect();
        if set.len() != self.orders.len() {
            return Err(Error::InvalidArgument("score matrix repeats an order".into()));
        }
        for (i, row) in self.scores.iter().enumerate() {
            if row.len() != self.orders.len() {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} entries for {} orders",
                    row.len(),
                    self.orders.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} has a non-finite score")));
            }
        }
        Ok(())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.scores.iter().map(|row| row[j]).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let matrix: PermScoreMatrix = crate::files::read_json(path)?;
        matrix.validate()?;
        Ok(matrix)
    }
}

/// One entry of the similarity ranking: an unordered pair of orderings
/// (stored lexicographically) with its rank averaged across experiments.
/// Persists as a `[first, second, avg_rank]` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(OrderLabel, OrderLabel, f64)", into = "(OrderLabel, OrderLabel, f64)")]
pub struct RankedPair {
    pub first: OrderLabel,
    pub second: OrderLabel,
    pub avg_rank: f64,
}

impl From<(OrderLabel, OrderLabel, f64)> for RankedPair {
    fn from((first, second, avg_rank): (OrderLabel, OrderLabel, f64)) -> Self {
        RankedPair {
            first,
            second,
            avg_rank,
        }
    }
}

impl From<RankedPair> for (OrderLabel, OrderLabel, f64) {
    fn from(pair: RankedPair) -> Self {
        (pair.first, pair.second, pair.avg_rank)
    }
}

/// A persisted ordering-reduction: the full ordering set plus similarity
/// ranking. `retained(p)` walks the ranking, deleting the lexicographically
/// later member of each pair until only `floor(p·n!)` orderings remain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionPlan {
    pub orders: Vec<OrderLabel>,
    pub ranked_pairs: Vec<RankedPair>,
}

impl ReductionPlan {
    pub fn arity(&self) -> usize {
        self.orders.first().map(|o| o.arity()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.orders.len() < 2 {
            return Err(Error::InvalidArgument("reduction plan needs at least 2 orders".into()));
        }
        let arity = self.orders[0].arity();
        let set: BTreeSet<&OrderLabel> = self.orders.iter().collect();
        if set.len() != self.orders.len() {
            return Err(Error::InvalidArgument("reduction plan repeats an order".into()));
        }
        if self.orders.iter().any(|o| o.arity() != arity) {
            return Err(Error::InvalidArgument("reduction plan mixes order arities".into()));
        }
        let identity = OrderLabel::identity(arity)?;
        if !set.contains(&identity) {
            return Err(Error::InvalidArgument(
                "reduction plan does not include the identity order".into(),
            ));
        }
        let mut prev = f64::NEG_INFINITY;
        for pair in &self.ranked_pairs {
            if !set.contains(&pair.first) || !set.contains(&pair.second) {
                return Err(Error::InvalidArgument(format!(
                    "ranked pair ({}, {}) references an unknown order",
                    pair.first, pair.second
                )));
            }
            if pair.first >= pair.second {
                return Err(Error::InvalidArgument(format!(
                    "ranked pair ({}, {}) is not in lexicographic order",
                    pair.first, pair.second
                )));
            }
            if pair.avg_rank < prev {
                return Err(Error::InvalidArgument(
                    "ranked pairs are not sorted by ascending average rank".into(),
                ));
            }
            prev = pair.avg_rank;
        }
        Ok(())
    }

    /// The orderings kept at proportion `p` of the full set, in the plan's
    /// order. Always contains the identity; `retained(1.0)` is everything.
    pub fn retained(&self, p: f64) -> Result<Vec<OrderLabel>> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "retention proportion {p} outside [0, 1]"
            )));
        }
        let n_orders = self.orders.len();
        let target = ((p * n_orders as f64).floor() as usize).clamp(1, n_orders);
        let identity = OrderLabel::identity(self.arity())?;
        let mut removed: BTreeSet<&OrderLabel> = BTreeSet::new();
        for pair in &self.ranked_pairs {
            if n_orders - removed.len() <= target {
                break;
            }
            // The later member goes; the identity is untouchable.
            if pair.second == identity {
                continue;
            }
            removed.insert(&pair.second);
        }
        Ok(self
            .orders
            .iter()
            .filter(|o| !removed.contains(o))
            .cloned()
            .collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut plan: ReductionPlan = crate::files::read_json(path)?;
        // Normalize user-supplied pairs to lexicographic member order.
        for pair in &mut plan.ranked_pairs {
            if pair.first > pair.second {
                std::mem::swap(&mut pair.first, &mut pair.second);
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::files::write_json(path, self)
    }
}

/// Build a reduction plan from one score matrix per experiment.
///
/// For each matrix every unordered pair of orderings is ranked by
/// ascending MAD (rank 1 = most similar, ties broken by pair label);
/// ranks are averaged across matrices and the result sorted ascending,
/// again breaking ties by pair label.
pub fn build_reduction_plan(matrices: &[PermScoreMatrix]) -> Result<ReductionPlan> {
    if matrices.is_empty() {
        return Err(Error::InvalidArgument("no score matrices supplied".into()));
    }
    for m in matrices {
        m.validate()?;
    }
    let orders: Vec<OrderLabel> = matrices[0].orders.iter().cloned().sorted().collect();
    for m in &matrices[1..] {
        let theirs: Vec<OrderLabel> = m.orders.iter().cloned().sorted().collect();
        if theirs != orders {
            return Err(Error::InvalidArgument(
                "score matrices do not share the same order set".into(),
            ));
        }
    }

    let mut rank_sums: BTreeMap<(OrderLabel, OrderLabel), f64> = BTreeMap::new();
    for m in matrices {
        // Column index per label within this matrix.
        let col_of: BTreeMap<&OrderLabel, usize> =
            m.orders.iter().enumerate().map(|(j, o)| (o, j)).collect();
        let mut scored: Vec<((OrderLabel, OrderLabel), f64)> = Vec::new();
        for (a, b) in orders.iter().tuple_combinations() {
            let col_a = m.column(col_of[a]);
            let col_b = m.column(col_of[b]);
            scored.push(((a.clone(), b.clone()), mad(&col_a, &col_b)?));
        }
        scored.sort_by(|(ka, va), (kb, vb)| va.total_cmp(vb).then_with(|| ka.cmp(kb)));
        for (rank0, (key, _)) in scored.into_iter().enumerate() {
            *rank_sums.entry(key).or_insert(0.0) += (rank0 + 1) as f64;
        }
    }

    let denom = matrices.len() as f64;
    let mut ranked_pairs: Vec<RankedPair> = rank_sums
        .into_iter()
        .map(|((first, second), sum)| RankedPair {
            first,
            second,
            avg_rank: sum / denom,
        })
        .collect();
    ranked_pairs.sort_by(|a, b| {
        a.avg_rank
            .total_cmp(&b.avg_rank)
            .then_with(|| (&a.first, &a.second).cmp(&(&b.first, &b.second)))
    });

    let plan = ReductionPlan { orders, ranked_pairs };
    plan.validate()?;
    Ok(plan)
}

/// Reorder an instance's options per `order`, remapping the answer index
/// so it keeps tracking the gold option.
pub fn apply_order(inst: &McqInstance, order: &OrderLabel) -> Result<McqInstance> {
    if order.arity() != inst.option_count() {
        return Err(Error::InvalidArgument(format!(
            "order `{order}` has arity {} but instance `{}` has {} options",
            order.arity(),
            inst.id,
            inst.option_count()
        )));
    }
    let sources = order.slot_sources();
    let options: Vec<String> = sources.iter().map(|&i| inst.options[i].clone()).collect();
    let answer_index = sources
        .iter()
        .position(|&i| i == inst.answer_index)
        .expect("permutation covers every source index");
    Ok(McqInstance {
        id: inst.id.clone(),
        question: inst.question.clone(),
        options,
        answer_index,
        subject: inst.subject.clone(),
    })
}

/// The reduction plan bundled for four-option benchmarks.
pub fn builtin_plan_n4() -> &'static ReductionPlan {
    static PLAN: OnceLock<ReductionPlan> = OnceLock::new();
    PLAN.get_or_init(|| {
        let plan: ReductionPlan =
            serde_json::from_str(include_str!("../data/default_plan_n4.json"))
                .expect("bundled plan parses");
        plan.validate().expect("bundled plan is valid");
        plan
    })
}
