//! Two-step decoding.
//!
//! Step 1 declares an item defective when the fraction of its tests that
//! came back positive exceeds a fixed threshold. Step 2 recovers the
//! associations of each declared defective `û_k`: any item seen in a
//! positive pool that holds `û_k` (and, in the non-adaptive design, no other
//! declared defective) cannot inhibit `û_k`; every other remaining item is
//! declared associated with it.
//!
//! Decoding failures are returned as data so callers can tabulate them.

use serde::{Deserialize, Serialize};

use crate::design::DesignParams;
use crate::error::{input_err, Result};
use crate::matrix::PoolingMatrix;
use crate::model::{AssociationGraph, TestPool};

/// Why the decoder declared an error. `k` indexes the declared defectives
/// in ascending item order, except for `WrongDefectiveCount` where it is the
/// number of items Step 1 declared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodeFailure {
    WrongDefectiveCount { k: usize },
    EmptyPoolSet { k: usize },
    EmptyPositiveSet { k: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub defectives: Vec<usize>,
    pub inhibitors: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub failure: Option<DecodeFailure>,
}

impl DecodeResult {
    fn failed(defectives: Vec<usize>, failure: DecodeFailure) -> Self {
        Self { defectives, failure: Some(failure), ..Self::default() }
    }

    fn from_edges(defectives: Vec<usize>, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        let mut inhibitors: Vec<usize> = edges.iter().map(|e| e.0).collect();
        inhibitors.dedup();
        Self { defectives, inhibitors, edges, failure: None }
    }

    pub fn is_success(&self) -> bool {
        self.failure.is_none()
    }

    /// Declared triple as a graph over `n` items.
    pub fn to_graph(&self, n: usize) -> Result<AssociationGraph> {
        AssociationGraph::new(n, self.inhibitors.clone(), self.defectives.clone(), self.edges.clone())
    }

    /// Whether the declared triple equals `truth` exactly.
    pub fn matches(&self, truth: &AssociationGraph) -> bool {
        self.is_success()
            && self.defectives == truth.defectives()
            && self.inhibitors == truth.inhibitors()
            && self.edges == truth.edges()
    }
}

/// Per-item counts of tests joined and positive tests joined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParticipationStats {
    pub tests_in: Vec<usize>,
    pub positives_in: Vec<usize>,
}

impl ParticipationStats {
    pub fn compute(matrix: &PoolingMatrix, y: &[bool]) -> Result<Self> {
        check_outcomes(matrix, y)?;
        let mut tests_in = vec![0; matrix.cols()];
        let mut positives_in = vec![0; matrix.cols()];
        for (l, &positive) in y.iter().enumerate() {
            for j in matrix.row_ones(l) {
                tests_in[j] += 1;
                if positive {
                    positives_in[j] += 1;
                }
            }
        }
        Ok(Self { tests_in, positives_in })
    }

    /// Fraction of item `j`'s tests that were positive, if it was tested at all.
    pub fn fraction(&self, j: usize) -> Option<f64> {
        (self.tests_in[j] > 0).then(|| self.positives_in[j] as f64 / self.tests_in[j] as f64)
    }

    /// The Step-1 rule: `positives_in > tests_in · threshold`, strictly.
    /// Items never tested are never declared.
    pub fn exceeds(&self, j: usize, threshold: f64) -> bool {
        self.tests_in[j] > 0 && self.positives_in[j] as f64 > self.tests_in[j] as f64 * threshold
    }
}

fn check_outcomes(matrix: &PoolingMatrix, y: &[bool]) -> Result<()> {
    if y.len() != matrix.rows() {
        return Err(input_err!("outcome vector has {} entries but the matrix has {} rows", y.len(), matrix.rows()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step1Result {
    pub declared: Vec<usize>,
    pub failure: Option<DecodeFailure>,
}

/// Declares defectives by thresholding each item's positive fraction.
pub fn step1_classify(
    matrix: &PoolingMatrix,
    y: &[bool],
    threshold_fraction: f64,
    expected_d: usize,
) -> Result<Step1Result> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(input_err!("threshold fraction {threshold_fraction} not in (0, 1)"));
    }
    let stats = ParticipationStats::compute(matrix, y)?;
    let declared: Vec<usize> = (0..matrix.cols()).filter(|&j| stats.exceeds(j, threshold_fraction)).collect();
    let failure = (declared.len() != expected_d).then_some(DecodeFailure::WrongDefectiveCount { k: declared.len() });
    Ok(Step1Result { declared, failure })
}

struct Bits {
    words: Vec<u64>,
}

impl Bits {
    fn new(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)] }
    }

    fn or_assign(&mut self, other: &[u64]) {
        self.words.iter_mut().zip(other).for_each(|(a, b)| *a |= b);
    }

    fn contains(&self, j: usize) -> bool {
        self.words[j / 64] >> (j % 64) & 1 == 1
    }
}

fn check_declared(declared: &[usize], n: usize) -> Result<()> {
    if declared.windows(2).any(|w| w[0] >= w[1]) {
        return Err(input_err!("declared defectives must be strictly increasing"));
    }
    if let Some(&bad) = declared.iter().find(|&&u| u >= n) {
        return Err(input_err!("declared defective {bad} out of range for n={n}"));
    }
    Ok(())
}

/// Non-adaptive Step 2.
///
/// `𝓟_k` is the set of positive rows holding `declared[k]` and no other
/// declared defective. Items seen in some row of `𝓟_k` are not associated
/// with `declared[k]`; all other non-declared items are.
pub fn step2_nonadaptive(matrix: &PoolingMatrix, y: &[bool], declared: &[usize]) -> Result<DecodeResult> {
    check_outcomes(matrix, y)?;
    let n = matrix.cols();
    check_declared(declared, n)?;
    let mut seen: Vec<Bits> = declared.iter().map(|_| Bits::new(n)).collect();
    let mut pool_sizes = vec![0usize; declared.len()];
    for (l, _) in y.iter().enumerate().filter(|(_, &p)| p) {
        let mut only = None;
        for (k, &u) in declared.iter().enumerate() {
            if matrix.get(l, u) {
                if only.is_some() {
                    only = None;
                    break;
                }
                only = Some(k);
            }
        }
        if let Some(k) = only {
            seen[k].or_assign(matrix.row_words(l));
            pool_sizes[k] += 1;
        }
    }
    if let Some(k) = pool_sizes.iter().position(|&c| c == 0) {
        return Ok(DecodeResult::failed(declared.to_vec(), DecodeFailure::EmptyPoolSet { k }));
    }
    let mut edges = Vec::new();
    for (k, &u) in declared.iter().enumerate() {
        edges.extend((0..n).filter(|&j| !seen[k].contains(j) && declared.binary_search(&j).is_err()).map(|j| (j, u)));
    }
    Ok(DecodeResult::from_edges(declared.to_vec(), edges))
}

/// Adaptive Step 2.
///
/// Column `j` of `stage2` is item `remaining[j]`; `outcomes[k]` holds the
/// results of testing every `stage2` row together with `declared[k]`.
pub fn step2_adaptive(
    stage2: &PoolingMatrix,
    outcomes: &[Vec<bool>],
    declared: &[usize],
    remaining: &[usize],
) -> Result<DecodeResult> {
    if stage2.cols() != remaining.len() {
        return Err(input_err!("stage-2 matrix has {} columns for {} remaining items", stage2.cols(), remaining.len()));
    }
    if outcomes.len() != declared.len() {
        return Err(input_err!(
            "{} stage-2 outcome vectors for {} declared defectives",
            outcomes.len(),
            declared.len()
        ));
    }
    if declared.windows(2).any(|w| w[0] >= w[1]) {
        return Err(input_err!("declared defectives must be strictly increasing"));
    }
    let mut edges = Vec::new();
    for (k, (&u, y)) in declared.iter().zip(outcomes).enumerate() {
        check_outcomes(stage2, y)?;
        let mut seen = Bits::new(remaining.len());
        let mut positives = 0;
        for (l, _) in y.iter().enumerate().filter(|(_, &p)| p) {
            seen.or_assign(stage2.row_words(l));
            positives += 1;
        }
        if positives == 0 {
            return Ok(DecodeResult::failed(declared.to_vec(), DecodeFailure::EmptyPositiveSet { k }));
        }
        edges.extend(remaining.iter().enumerate().filter(|&(j, _)| !seen.contains(j)).map(|(_, &w)| (w, u)));
    }
    Ok(DecodeResult::from_edges(declared.to_vec(), edges))
}

/// Threshold and known defective count used by both pipelines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub threshold_fraction: f64,
    pub expected_d: usize,
}

impl From<&DesignParams> for DecodeConfig {
    fn from(p: &DesignParams) -> Self {
        Self { threshold_fraction: p.threshold_fraction, expected_d: p.d }
    }
}

pub fn decode_nonadaptive(matrix: &PoolingMatrix, y: &[bool], cfg: DecodeConfig) -> Result<DecodeResult> {
    let step1 = step1_classify(matrix, y, cfg.threshold_fraction, cfg.expected_d)?;
    if let Some(f) = step1.failure {
        return Ok(DecodeResult::failed(step1.declared, f));
    }
    step2_nonadaptive(matrix, y, &step1.declared)
}

/// Items of `0..n` not in `declared`, ascending.
pub fn remaining_items(n: usize, declared: &[usize]) -> Vec<usize> {
    (0..n).filter(|j| declared.binary_search(j).is_err()).collect()
}

/// Pool formed by stage-2 row `row` plus the declared defective `defective`.
pub fn stage2_pool(stage2: &PoolingMatrix, row: usize, defective: usize, remaining: &[usize]) -> TestPool {
    TestPool::new(stage2.row_ones(row).map(|j| remaining[j]).chain(std::iter::once(defective)))
}

/// Full two-stage pipeline. `test` answers stage-2 pools as they are formed
/// from the stage-1 declarations.
pub fn decode_adaptive<F>(
    stage1: &PoolingMatrix,
    y1: &[bool],
    stage2: &PoolingMatrix,
    cfg: DecodeConfig,
    mut test: F,
) -> Result<DecodeResult>
where
    F: FnMut(&TestPool) -> bool,
{
    let step1 = step1_classify(stage1, y1, cfg.threshold_fraction, cfg.expected_d)?;
    if let Some(f) = step1.failure {
        return Ok(DecodeResult::failed(step1.declared, f));
    }
    let remaining = remaining_items(stage1.cols(), &step1.declared);
    let outcomes: Vec<Vec<bool>> = step1
        .declared
        .iter()
        .map(|&u| (0..stage2.rows()).map(|l| test(&stage2_pool(stage2, l, u, &remaining))).collect())
        .collect();
    step2_adaptive(stage2, &outcomes, &step1.declared, &remaining)
}

/// Two-stage pipeline from outcomes that were already measured, one stage-2
/// vector per declared defective in ascending item order.
pub fn decode_adaptive_from_outcomes(
    stage1: &PoolingMatrix,
    y1: &[bool],
    stage2: &PoolingMatrix,
    stage2_outcomes: &[Vec<bool>],
    cfg: DecodeConfig,
) -> Result<DecodeResult> {
    let step1 = step1_classify(stage1, y1, cfg.threshold_fraction, cfg.expected_d)?;
    if let Some(f) = step1.failure {
        return Ok(DecodeResult::failed(step1.declared, f));
    }
    let remaining = remaining_items(stage1.cols(), &step1.declared);
    step2_adaptive(stage2, stage2_outcomes, &step1.declared, &remaining)
}
