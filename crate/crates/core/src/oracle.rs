//! Brute-force references for tiny instances.
//!
//! [`enumerate_consistent`] lists every graph that reproduces an outcome
//! vector exactly. [`exact_error_probability`] computes the probability,
//! over the random matrices, that the two-step decoder fails on a fixed
//! graph. It works on the multiset of row types restricted to the
//! inhibitor and defective columns: the decision for every inhibitor and
//! defective depends only on those counts, and normal items are
//! independent given them, so each contributes a closed-form factor.
//! Neither routine calls into [`crate::decode`].

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::analysis::binomial;
use crate::design::DesignSpec;
use crate::error::{input_err, IdgError, Result};
use crate::matrix::PoolingMatrix;
use crate::model::{AssociationGraph, SideInfo};

/// Hypothesis budget for [`enumerate_consistent`].
pub const MAX_HYPOTHESES: u64 = 10_000_000;
/// Weighted row-type patterns budget for [`exact_error_probability`].
pub const MAX_PATTERNS: u64 = 1 << 24;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencySet {
    /// Sorted ascending by the graph ordering.
    pub candidates: Vec<AssociationGraph>,
}

impl ConsistencySet {
    pub fn contains(&self, g: &AssociationGraph) -> bool {
        self.candidates.binary_search(g).is_ok()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Lexicographic `k`-subsets of `pool`.
fn for_each_combination<F: FnMut(&[usize])>(pool: &[usize], k: usize, f: &mut F) {
    fn rec<F: FnMut(&[usize])>(pool: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut F) {
        if cur.len() == k {
            f(cur);
            return;
        }
        let need = k - cur.len();
        for i in start..=pool.len() - need {
            cur.push(pool[i]);
            rec(pool, k, i + 1, cur, f);
            cur.pop();
        }
    }
    if k > pool.len() {
        return;
    }
    rec(pool, k, 0, &mut Vec::with_capacity(k), f);
}

/// Every association graph with the given `(n, r, d)` and side information
/// whose outcome vector on `matrix` equals `y`.
pub fn enumerate_consistent(
    matrix: &PoolingMatrix,
    y: &[bool],
    n: usize,
    r: usize,
    d: usize,
    side: SideInfo,
) -> Result<ConsistencySet> {
    if matrix.cols() != n || y.len() != matrix.rows() {
        return Err(input_err!(
            "matrix is {}x{}, expected {} columns and {} rows",
            matrix.rows(),
            matrix.cols(),
            n,
            y.len()
        ));
    }
    if r + d > n {
        return Err(input_err!("r + d = {} exceeds n = {n}", r + d));
    }
    side.check_feasible(r, d)?;
    let space = binomial(n, d) * binomial(n - d, r) * ((BigUint::from(1u32) << d) - 1u32).pow(r as u32);
    if space > BigUint::from(MAX_HYPOTHESES) {
        return Err(IdgError::Capacity(format!("{space} hypotheses exceed the budget of {MAX_HYPOTHESES}")));
    }
    let cap = side.i_max(r);
    let rows: Vec<Vec<bool>> = matrix.to_rows();
    let items: Vec<usize> = (0..n).collect();
    let mut found = Vec::new();

    for_each_combination(&items, d, &mut |defectives: &[usize]| {
        let rest: Vec<usize> = items.iter().copied().filter(|j| !defectives.contains(j)).collect();
        for_each_combination(&rest, r, &mut |inhibitors: &[usize]| {
            // masks[i] = defectives (by position) inhibited by inhibitors[i]
            let mut masks = vec![1u64; r];
            loop {
                let within_cap = (0..d).all(|k| masks.iter().filter(|&&m| m >> k & 1 == 1).count() <= cap);
                if within_cap && reproduces(&rows, y, defectives, inhibitors, &masks) {
                    let edges = masks
                        .iter()
                        .zip(inhibitors)
                        .flat_map(|(&m, &s)| (0..d).filter(move |k| m >> k & 1 == 1).map(move |k| (s, defectives[k])))
                        .collect();
                    found.push(
                        AssociationGraph::new(n, inhibitors.to_vec(), defectives.to_vec(), edges)
                            .expect("enumerated hypotheses are valid"),
                    );
                }
                // odometer over nonempty masks 1..2^d
                let mut i = 0;
                loop {
                    if i == r {
                        return;
                    }
                    masks[i] += 1;
                    if masks[i] < 1 << d {
                        break;
                    }
                    masks[i] = 1;
                    i += 1;
                }
            }
        });
    });
    found.sort();
    Ok(ConsistencySet { candidates: found })
}

fn reproduces(rows: &[Vec<bool>], y: &[bool], defectives: &[usize], inhibitors: &[usize], masks: &[u64]) -> bool {
    rows.iter().zip(y).all(|(row, &want)| {
        let positive = defectives
            .iter()
            .enumerate()
            .any(|(k, &u)| row[u] && !inhibitors.iter().zip(masks).any(|(&s, &m)| m >> k & 1 == 1 && row[s]));
        positive == want
    })
}

/// Calls `f(counts, probability)` for every way of distributing `total`
/// i.i.d. rows over the row types with probabilities `probs`.
fn for_each_composition<F: FnMut(&[usize], f64)>(total: usize, probs: &[f64], f: &mut F) {
    fn rec<F: FnMut(&[usize], f64)>(
        left: usize,
        t: usize,
        probs: &[f64],
        counts: &mut Vec<usize>,
        weight: f64,
        f: &mut F,
    ) {
        if t + 1 == probs.len() {
            counts[t] = left;
            f(counts, weight * probs[t].powi(left as i32));
            return;
        }
        // weight carries the multinomial coefficient built up as products
        // of binomials C(left, c)
        let mut choose = 1.0;
        for c in 0..=left {
            counts[t] = c;
            rec(left - c, t + 1, probs, counts, weight * choose * probs[t].powi(c as i32), f);
            choose = choose * (left - c) as f64 / (c + 1) as f64;
        }
        counts[t] = 0;
    }
    let mut counts = vec![0; probs.len()];
    rec(total, 0, probs, &mut counts, 1.0, f);
}

fn composition_count(total: usize, types: usize) -> BigUint {
    binomial(total + types - 1, types - 1)
}

fn check_budget(total: usize, types: usize) -> Result<()> {
    let count = composition_count(total, types);
    if count > BigUint::from(MAX_PATTERNS) {
        return Err(IdgError::Capacity(format!("{count} row-type patterns exceed the budget of {MAX_PATTERNS}")));
    }
    Ok(())
}

fn type_probs(bits: usize, p: f64) -> Vec<f64> {
    (0..1usize << bits)
        .map(|t| {
            let ones = t.count_ones() as i32;
            p.powi(ones) * (1.0 - p).powi(bits as i32 - ones)
        })
        .collect()
}

fn binomial_pmf(size: usize, p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(size + 1);
    let mut c = 1.0;
    for j in 0..=size {
        out.push(c * p.powi(j as i32) * (1.0 - p).powi((size - j) as i32));
        c = c * (size - j) as f64 / (j + 1) as f64;
    }
    out
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn declares(pos: usize, tests: usize, threshold: f64) -> bool {
    tests > 0 && pos as f64 > tests as f64 * threshold
}

/// Local layout of the inhibitor and defective columns: bit `k < d` is
/// `defectives[k]`, bit `d + i` is `inhibitors[i]`.
struct Layout {
    d: usize,
    m: usize,
    // bits of the inhibitors of defective k
    inh_of: Vec<usize>,
    // bits of the defectives inhibitor i is associated with
    def_of: Vec<usize>,
}

impl Layout {
    fn new(g: &AssociationGraph) -> Self {
        let d = g.d();
        let r = g.r();
        let mut inh_of = vec![0usize; d];
        let mut def_of = vec![0usize; r];
        for &(s, u) in g.edges() {
            let k = g.defectives().binary_search(&u).unwrap();
            let i = g.inhibitors().binary_search(&s).unwrap();
            inh_of[k] |= 1 << (d + i);
            def_of[i] |= 1 << k;
        }
        Self { d, m: d + r, inh_of, def_of }
    }

    fn positive(&self, t: usize) -> bool {
        (0..self.d).any(|k| t >> k & 1 == 1 && t & self.inh_of[k] == 0)
    }
}

/// Step-1 check on the relevant columns: every defective declared, no
/// inhibitor declared.
fn relevant_step1_ok(layout: &Layout, counts: &[usize], positive: &[bool], threshold: f64) -> bool {
    (0..layout.m).all(|b| {
        let (mut tests, mut pos) = (0, 0);
        for (t, &c) in counts.iter().enumerate() {
            if t >> b & 1 == 1 {
                tests += c;
                if positive[t] {
                    pos += c;
                }
            }
        }
        declares(pos, tests, threshold) == (b < layout.d)
    })
}

/// P(a normal item is not declared defective and, for every `k`, appears in
/// at least one of the `need[k]` rows) given `pos_other` further positive
/// rows and `neg` negative rows.
fn normal_item_ok(need: &[usize], pos_other: usize, neg: usize, p: f64, threshold: f64) -> f64 {
    let mut pos_dist = binomial_pmf(pos_other, p);
    for &size in need {
        let mut pmf = binomial_pmf(size, p);
        pmf[0] = 0.0;
        pos_dist = convolve(&pos_dist, &pmf);
    }
    let neg_dist = binomial_pmf(neg, p);
    let mut ok = 0.0;
    for (a, pa) in pos_dist.iter().enumerate() {
        if *pa == 0.0 {
            continue;
        }
        for (b, pb) in neg_dist.iter().enumerate() {
            if !declares(a, a + b, threshold) {
                ok += pa * pb;
            }
        }
    }
    ok
}

fn nonadaptive_success(g: &AssociationGraph, tests: usize, p: f64, threshold: f64) -> Result<f64> {
    let layout = Layout::new(g);
    let types = 1usize << layout.m;
    check_budget(tests, types)?;
    let probs = type_probs(layout.m, p);
    let positive: Vec<bool> = (0..types).map(|t| layout.positive(t)).collect();
    let d = layout.d;
    let normals = g.n() - layout.m;
    // types forming P_k: positive and containing exactly defective k
    let def_mask = (1usize << d) - 1;
    let pool_of: Vec<Option<usize>> = (0..types)
        .map(|t| {
            let defs = t & def_mask;
            (positive[t] && defs.count_ones() == 1).then(|| defs.trailing_zeros() as usize)
        })
        .collect();

    let mut success = 0.0;
    for_each_composition(tests, &probs, &mut |counts, weight| {
        if weight == 0.0 || !relevant_step1_ok(&layout, counts, &positive, threshold) {
            return;
        }
        let mut pool_sizes = vec![0usize; d];
        // inhibitors seen in some row of P_k, as bitmasks over inhibitor index
        let mut seen = vec![0usize; d];
        for (t, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            if let Some(k) = pool_of[t] {
                pool_sizes[k] += c;
                seen[k] |= t >> d;
            }
        }
        if pool_sizes.contains(&0) {
            return;
        }
        // every inhibitor not associated with k must show up in P_k
        let inhibitors_ok = layout
            .def_of
            .iter()
            .enumerate()
            .all(|(i, &assoc)| (0..d).all(|k| assoc >> k & 1 == 1 || seen[k] >> i & 1 == 1));
        if !inhibitors_ok {
            return;
        }
        let positives: usize = counts.iter().zip(&positive).filter(|(_, &p)| p).map(|(c, _)| c).sum();
        let in_pools: usize = pool_sizes.iter().sum();
        let q = normal_item_ok(&pool_sizes, positives - in_pools, tests - positives, p, threshold);
        success += weight * q.powi(normals as i32);
    });
    Ok(success)
}

fn stage1_success(g: &AssociationGraph, tests: usize, p: f64, threshold: f64) -> Result<f64> {
    let layout = Layout::new(g);
    let types = 1usize << layout.m;
    check_budget(tests, types)?;
    let probs = type_probs(layout.m, p);
    let positive: Vec<bool> = (0..types).map(|t| layout.positive(t)).collect();
    let normals = g.n() - layout.m;
    let mut success = 0.0;
    for_each_composition(tests, &probs, &mut |counts, weight| {
        if weight == 0.0 || !relevant_step1_ok(&layout, counts, &positive, threshold) {
            return;
        }
        let positives: usize = counts.iter().zip(&positive).filter(|(_, &p)| p).map(|(c, _)| c).sum();
        let q = normal_item_ok(&[], positives, tests - positives, p, threshold);
        success += weight * q.powi(normals as i32);
    });
    Ok(success)
}

/// Stage 2 given a correct stage 1: rows of `M2` restricted to inhibitor
/// columns, tested once with each true defective.
fn stage2_success(g: &AssociationGraph, tests: usize, p: f64) -> Result<f64> {
    let layout = Layout::new(g);
    let (d, r) = (g.d(), g.r());
    if d == 0 {
        return Ok(1.0);
    }
    let types = 1usize << r;
    check_budget(tests, types)?;
    let probs = type_probs(r, p);
    let normals = g.n() - layout.m;
    // row type t is positive for defective k iff it holds none of k's inhibitors
    let pos_for: Vec<Vec<bool>> =
        (0..d).map(|k| (0..types).map(|t| (t << d) & layout.inh_of[k] == 0).collect()).collect();

    let mut success = 0.0;
    for_each_composition(tests, &probs, &mut |counts, weight| {
        if weight == 0.0 {
            return;
        }
        let mut seen = vec![0usize; d];
        for k in 0..d {
            let rows: usize = counts.iter().zip(&pos_for[k]).filter(|(_, &p)| p).map(|(c, _)| c).sum();
            if rows == 0 {
                return;
            }
            for (t, &c) in counts.iter().enumerate() {
                if c > 0 && pos_for[k][t] {
                    seen[k] |= t;
                }
            }
        }
        let inhibitors_ok = layout
            .def_of
            .iter()
            .enumerate()
            .all(|(i, &assoc)| (0..d).all(|k| assoc >> k & 1 == 1 || seen[k] >> i & 1 == 1));
        if !inhibitors_ok {
            return;
        }
        // P(normal column meets every S_k), by inclusion–exclusion
        let mut q = 0.0;
        for subset in 0usize..(1 << d) {
            let union: usize = counts
                .iter()
                .enumerate()
                .filter(|&(t, _)| (0..d).any(|k| subset >> k & 1 == 1 && pos_for[k][t]))
                .map(|(_, &c)| c)
                .sum();
            let sign = if subset.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            q += sign * (1.0 - p).powi(union as i32);
        }
        success += weight * q.max(0.0).powi(normals as i32);
    });
    Ok(success)
}

/// Exact probability, over the random pooling matrices, that decoding with
/// `spec` does not return `graph` itself. The known defective count is
/// `graph.d()`.
pub fn exact_error_probability(spec: &DesignSpec, graph: &AssociationGraph) -> Result<f64> {
    spec.validate()?;
    let success = match *spec {
        DesignSpec::Nonadaptive { tests, p, threshold } => nonadaptive_success(graph, tests, p, threshold)?,
        DesignSpec::Adaptive { t1, p1, t2, p2, threshold } => {
            stage1_success(graph, t1, p1, threshold)? * stage2_success(graph, t2, p2)?
        }
    };
    Ok((1.0 - success).clamp(0.0, 1.0))
}
