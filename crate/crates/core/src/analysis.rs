//! Outcome statistics and lower bounds on the number of tests.
//!
//! The exact statistics enumerate every presence pattern of the inhibitors
//! and defectives in a Bernoulli(`p`) pool; normal items never affect an
//! outcome, so they can be left out. The counting bound is the base-2 log
//! of the number of `(inhibitors, defectives, pattern)` realizations.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, IdgError, Result};
use crate::model::{AssociationGraph, Role, SideInfo};

/// Largest `r + d` the exact statistics will enumerate.
pub const MAX_EXACT_ITEMS: usize = 20;
/// Largest `r · d` for which constrained patterns are counted exactly.
pub const MAX_PATTERN_CELLS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    /// P(positive | a given defective is present).
    Q1Exact,
    /// `(1 − p)^{|I(u)|}`.
    Q1Lb,
    /// P(positive | a given normal item is present).
    Q2Exact,
    /// `1 − (1 − p)^d`.
    Q2Ub,
    /// P(positive | a given inhibitor is present).
    Q3Exact,
}

impl StatKind {
    pub fn role(&self) -> Role {
        match self {
            StatKind::Q1Exact | StatKind::Q1Lb => Role::Defective,
            StatKind::Q2Exact | StatKind::Q2Ub => Role::Normal,
            StatKind::Q3Exact => Role::Inhibitor,
        }
    }
}

impl std::str::FromStr for StatKind {
    type Err = IdgError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| input_err!("unknown statistic {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalStat {
    pub value: f64,
    pub kind: StatKind,
}

/// Conditional positive-outcome probability for `item`, whose role must
/// match `kind`.
pub fn conditional_stat(graph: &AssociationGraph, p: f64, item: usize, kind: StatKind) -> Result<ConditionalStat> {
    if !(0.0..=1.0).contains(&p) {
        return Err(input_err!("probability {p} not in [0, 1]"));
    }
    if item >= graph.n() {
        return Err(input_err!("item {item} out of range for n={}", graph.n()));
    }
    let role = graph.role(item);
    if role != kind.role() {
        return Err(input_err!("item {item} is {role:?}, but {kind:?} needs a {:?}", kind.role()));
    }
    let value = match kind {
        StatKind::Q1Lb => (1.0 - p).powi(graph.inhibitors_of(item).len() as i32),
        StatKind::Q2Ub => 1.0 - (1.0 - p).powi(graph.d() as i32),
        StatKind::Q1Exact | StatKind::Q2Exact | StatKind::Q3Exact => exact_positive_probability(graph, p, item)?,
    };
    Ok(ConditionalStat { value, kind })
}

/// P(positive | `item` present) by enumerating the `2^(r+d)` presence
/// patterns of the inhibitors and defectives.
fn exact_positive_probability(graph: &AssociationGraph, p: f64, item: usize) -> Result<f64> {
    let relevant: Vec<usize> = graph.defectives().iter().chain(graph.inhibitors()).copied().collect();
    let m = relevant.len();
    if m > MAX_EXACT_ITEMS {
        return Err(IdgError::Capacity(format!("r + d = {m} exceeds the enumeration cap of {MAX_EXACT_ITEMS}")));
    }
    let bit = |j: usize| 1u32 << relevant.iter().position(|&x| x == j).expect("relevant item");
    let rules: Vec<(u32, u32)> = graph
        .defectives()
        .iter()
        .map(|&u| (bit(u), graph.inhibitors_of(u).iter().fold(0, |acc, &s| acc | bit(s))))
        .collect();
    let forced = relevant.iter().position(|&x| x == item).map_or(0, |i| 1u32 << i);
    let free = m - forced.count_ones() as usize;
    let present: Vec<f64> = (0..=free).map(|k| p.powi(k as i32)).collect();
    let absent: Vec<f64> = (0..=free).map(|k| (1.0 - p).powi(k as i32)).collect();

    let mut total = 0.0;
    for mask in 0u32..(1u32 << m) {
        if mask & forced != forced {
            continue;
        }
        let positive = rules.iter().any(|&(u, inh)| mask & u != 0 && mask & inh == 0);
        if positive {
            let ones = (mask & !forced).count_ones() as usize;
            total += present[ones] * absent[free - ones];
        }
    }
    Ok(total)
}

/// `C(n, k)` exactly.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Smallest `t` with `2^t >= x`, for `x >= 1`.
pub fn ceil_log2(x: &BigUint) -> u64 {
    let bits = x.bits();
    if bits == 0 {
        return 0;
    }
    if x.trailing_zeros() == Some(bits - 1) {
        bits - 1
    } else {
        bits
    }
}

/// Number of association patterns between `r` labelled inhibitors and `d`
/// labelled defectives in which every inhibitor has out-degree at least one
/// and every defective has in-degree at most `cap`.
///
/// Counted by dynamic programming over inhibitors, with the state being how
/// many defectives currently sit at each in-degree `0..=cap`.
pub fn constrained_pattern_count(r: usize, d: usize, cap: usize) -> Result<BigUint> {
    if r * d > MAX_PATTERN_CELLS {
        return Err(IdgError::Capacity(format!(
            "r·d = {} exceeds the pattern-count cap of {MAX_PATTERN_CELLS}",
            r * d
        )));
    }
    if r == 0 {
        return Ok(BigUint::from(1u32));
    }
    if d == 0 || cap == 0 {
        return Ok(BigUint::from(0u32));
    }
    let binom: Vec<Vec<BigUint>> = (0..=d).map(|a| (0..=d).map(|b| binomial(a, b)).collect()).collect();
    let mut states: BTreeMap<Vec<usize>, BigUint> = BTreeMap::new();
    let mut start = vec![0; cap + 1];
    start[0] = d;
    states.insert(start, BigUint::from(1u32));

    for _ in 0..r {
        let mut next: BTreeMap<Vec<usize>, BigUint> = BTreeMap::new();
        for (hist, ways) in &states {
            let mut picks = vec![0usize; cap];
            extend_choices(hist, &binom, 0, &mut picks, ways.clone(), &mut next);
        }
        states = next;
    }
    Ok(states.into_values().sum())
}

// Chooses how many defectives to take from each in-degree class `k < cap`,
// recursing over classes; the empty choice is skipped.
fn extend_choices(
    hist: &[usize],
    binom: &[Vec<BigUint>],
    class: usize,
    picks: &mut Vec<usize>,
    weight: BigUint,
    out: &mut BTreeMap<Vec<usize>, BigUint>,
) {
    let cap = picks.len();
    if class == cap {
        if picks.iter().all(|&c| c == 0) {
            return;
        }
        let mut h = hist.to_vec();
        for k in 0..cap {
            h[k] -= picks[k];
            h[k + 1] += picks[k];
        }
        *out.entry(h).or_default() += weight;
        return;
    }
    for c in 0..=hist[class] {
        picks[class] = c;
        extend_choices(hist, binom, class + 1, picks, &weight * &binom[hist[class]][c], out);
    }
    picks[class] = 0;
}

/// Number of association patterns on fixed `(I, D)` allowed by `side`.
pub fn association_pattern_count(r: usize, d: usize, side: SideInfo) -> Result<BigUint> {
    side.check_feasible(r, d)?;
    let cap = side.i_max(r);
    if cap >= r {
        // in-degree can never exceed r, so only the out-degree rule binds
        let nonempty = (BigUint::from(1u32) << d) - 1u32;
        return Ok(nonempty.pow(r as u32));
    }
    constrained_pattern_count(r, d, cap)
}

/// `⌈log₂(C(n,d) · C(n−d,r) · #patterns)⌉`.
pub fn counting_lower_bound(n: usize, r: usize, d: usize, side: SideInfo) -> Result<u64> {
    if r + d > n {
        return Err(input_err!("r + d = {} exceeds n = {n}", r + d));
    }
    let total = binomial(n, d) * binomial(n - d, r) * association_pattern_count(r, d, side)?;
    Ok(ceil_log2(&total))
}

/// Order-of-growth reference values with unit constants. They are not
/// bounds by themselves and must not be compared against designed test
/// counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticTerms {
    /// `(r + d) log n + r d` (NSI) or `(r + d) log n + I_max d` (WSI).
    pub entropy_term: f64,
    /// `r²/log r · log n`, or with `I_max` under WSI; absent when the
    /// bound is below 2.
    pub inhibitor_term: Option<f64>,
    /// `d²`; under WSI only reported when its conditions on `(r, d, I_max)` hold.
    pub defective_term: Option<f64>,
    pub note: String,
}

pub fn asymptotic_reference(n: usize, r: usize, d: usize, side: SideInfo) -> AsymptoticTerms {
    let log_n = (n as f64).log2();
    let (rf, df) = (r as f64, d as f64);
    let lead = match side {
        SideInfo::Nsi => r,
        SideInfo::Wsi { i_max } => i_max,
    };
    let entropy_term = (rf + df) * log_n + lead as f64 * df;
    let inhibitor_term = (lead >= 2).then(|| {
        let l = lead as f64;
        l * l / l.log2() * log_n
    });
    let defective_term = match side {
        SideInfo::Nsi => Some(df * df),
        SideInfo::Wsi { i_max } => {
            let holds = d > 0 && r > 0 && {
                let c = r.div_ceil(d);
                i_max > c || (i_max == c && r < c * d)
            };
            holds.then_some(df * df)
        }
    };
    AsymptoticTerms {
        entropy_term,
        inhibitor_term,
        defective_term,
        note: "order-only reference values with unit constants".into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub model: SideInfo,
    pub counting_lb: u64,
    pub asymptotic_terms: AsymptoticTerms,
}

pub fn bound_report(n: usize, r: usize, d: usize, side: SideInfo) -> Result<BoundReport> {
    Ok(BoundReport {
        n,
        r,
        d,
        model: side,
        counting_lb: counting_lower_bound(n, r, d, side)?,
        asymptotic_terms: asymptotic_reference(n, r, d, side),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_graph;

    fn single_edge() -> AssociationGraph {
        AssociationGraph::new(3, vec![0], vec![1], vec![(0, 1)]).unwrap()
    }

    /// Union expansion of P(positive | normal present): sum over the
    /// present defective subset S of P(S) · P(some u ∈ S has no present
    /// inhibitor), the union evaluated by inclusion–exclusion over subsets
    /// of S.
    fn q2_by_union_expansion(g: &AssociationGraph, p: f64) -> f64 {
        let d = g.d();
        let inh_union = |sub: u32| -> usize {
            let mut set: Vec<usize> = (0..d)
                .filter(|k| sub >> k & 1 == 1)
                .flat_map(|k| g.inhibitors_of(g.defectives()[k]).to_vec())
                .collect();
            set.sort_unstable();
            set.dedup();
            set.len()
        };
        let mut total = 0.0;
        for s in 1u32..(1 << d) {
            let i = s.count_ones() as i32;
            let p_s = p.powi(i) * (1.0 - p).powi(d as i32 - i);
            let mut union = 0.0;
            let mut a = s;
            while a != 0 {
                let sign = if a.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
                union += sign * (1.0 - p).powi(inh_union(a) as i32);
                a = (a - 1) & s;
            }
            total += p_s * union;
        }
        total
    }

    #[test]
    fn single_edge_stats() {
        let g = single_edge();
        let q2 = conditional_stat(&g, 0.5, 2, StatKind::Q2Exact).unwrap();
        assert!((q2.value - 0.25).abs() < 1e-15);
        let q3 = conditional_stat(&g, 0.5, 0, StatKind::Q3Exact).unwrap();
        assert_eq!(q3.value, 0.0);
        let q1 = conditional_stat(&g, 0.5, 1, StatKind::Q1Exact).unwrap();
        assert!((q1.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_inhibitor_model_hits_lower_bound() {
        let (r, p) = (4, 0.2);
        let inh: Vec<usize> = (0..r).collect();
        let def = vec![4, 5, 6];
        let edges = inh.iter().flat_map(|&s| def.iter().map(move |&u| (s, u))).collect();
        let g = AssociationGraph::new(10, inh, def, edges).unwrap();
        let q1 = conditional_stat(&g, p, 5, StatKind::Q1Exact).unwrap().value;
        assert!((q1 - (1.0 - p).powi(r as i32)).abs() < 1e-14);
        let lb = conditional_stat(&g, p, 5, StatKind::Q1Lb).unwrap().value;
        assert!((q1 - lb).abs() < 1e-14);
    }

    #[test]
    fn role_and_cap_checks() {
        let g = single_edge();
        assert!(conditional_stat(&g, 0.5, 0, StatKind::Q1Exact).is_err());
        assert!(conditional_stat(&g, 0.5, 1, StatKind::Q2Ub).is_err());
        assert!(conditional_stat(&g, 1.5, 1, StatKind::Q1Exact).is_err());
        let big = sample_graph(40, 11, 10, SideInfo::Nsi, 1).unwrap();
        let u = big.defectives()[0];
        assert!(matches!(conditional_stat(&big, 0.1, u, StatKind::Q1Exact), Err(IdgError::Capacity(_))));
        assert!(conditional_stat(&big, 0.1, u, StatKind::Q1Lb).is_ok());
    }

    #[test]
    fn exact_stats_respect_orderings() {
        for seed in 0..60 {
            let g = sample_graph(14, 1 + (seed as usize % 4), 1 + (seed as usize % 5), SideInfo::Nsi, seed).unwrap();
            let p = 0.05 + 0.4 * (seed as f64 / 60.0);
            let normal = (0..14).find(|&j| g.role(j) == Role::Normal).unwrap();
            let q2 = conditional_stat(&g, p, normal, StatKind::Q2Exact).unwrap().value;
            let q2_ub = conditional_stat(&g, p, normal, StatKind::Q2Ub).unwrap().value;
            assert!(q2 <= q2_ub + 1e-12);
            assert!((q2 - q2_by_union_expansion(&g, p)).abs() < 1e-12, "seed {seed}");
            for j in (0..14).filter(|&j| g.role(j) == Role::Normal) {
                assert_eq!(conditional_stat(&g, p, j, StatKind::Q2Exact).unwrap().value, q2);
            }
            for &s in g.inhibitors() {
                assert!(conditional_stat(&g, p, s, StatKind::Q3Exact).unwrap().value <= q2 + 1e-12);
            }
            for &u in g.defectives() {
                let q1 = conditional_stat(&g, p, u, StatKind::Q1Exact).unwrap().value;
                let lb = conditional_stat(&g, p, u, StatKind::Q1Lb).unwrap().value;
                assert!(q1 >= lb - 1e-12, "seed {seed}: q1 {q1} < lb {lb}");
            }
        }
    }

    #[test]
    fn counting_bound_small_cases() {
        assert_eq!(counting_lower_bound(10, 1, 2, SideInfo::Nsi).unwrap(), 11);
        assert_eq!(counting_lower_bound(10, 1, 1, SideInfo::Nsi).unwrap(), 7);
        assert_eq!(counting_lower_bound(10, 0, 0, SideInfo::Nsi).unwrap(), 0);
        assert!(counting_lower_bound(10, 3, 2, SideInfo::Wsi { i_max: 1 }).is_err());
    }

    #[test]
    fn ceil_log2_edges() {
        for (x, want) in [(1u64, 0), (2, 1), (3, 2), (4, 2), (5, 3), (1080, 11), (1024, 10)] {
            assert_eq!(ceil_log2(&BigUint::from(x)), want, "{x}");
        }
    }

    /// Brute-force count over all r×d 0/1 matrices.
    fn brute_patterns(r: usize, d: usize, cap: usize) -> u64 {
        (0u64..1 << (r * d))
            .filter(|&m| {
                let row = |i: usize| (m >> (i * d)) & ((1 << d) - 1);
                (0..r).all(|i| row(i) != 0) && (0..d).all(|k| (0..r).filter(|&i| row(i) >> k & 1 == 1).count() <= cap)
            })
            .count() as u64
    }

    #[test]
    fn dp_matches_brute_force() {
        for r in 0..=4 {
            for d in 0..=4 {
                for cap in 0..=r.max(1) {
                    let got = constrained_pattern_count(r, d, cap).unwrap();
                    assert_eq!(got, BigUint::from(brute_patterns(r, d, cap)), "r={r} d={d} cap={cap}");
                }
            }
        }
    }

    #[test]
    fn dp_unconstrained_matches_closed_form() {
        for r in 1..=6usize {
            for d in 1..=8usize {
                let closed = ((BigUint::from(1u32) << d) - 1u32).pow(r as u32);
                assert_eq!(constrained_pattern_count(r, d, r).unwrap(), closed);
            }
        }
        assert!(constrained_pattern_count(9, 8, 2).is_err());
    }

    #[test]
    fn asymptotic_terms() {
        let t = asymptotic_reference(1024, 4, 4, SideInfo::Nsi);
        assert!((t.entropy_term - 96.0).abs() < 1e-12);
        assert!((t.inhibitor_term.unwrap() - 80.0).abs() < 1e-12);
        assert_eq!(t.defective_term, Some(16.0));
        assert_eq!(asymptotic_reference(1024, 1, 4, SideInfo::Nsi).inhibitor_term, None);
        let w = asymptotic_reference(1024, 4, 4, SideInfo::Wsi { i_max: 2 });
        assert!((w.entropy_term - (80.0 + 8.0)).abs() < 1e-12);
        assert!((w.inhibitor_term.unwrap() - 40.0).abs() < 1e-12);
        assert_eq!(w.defective_term, Some(16.0));
        // r = c·d with I_max = c: none of the listed conditions applies
        assert_eq!(asymptotic_reference(1024, 4, 4, SideInfo::Wsi { i_max: 1 }).defective_term, None);
    }

    #[test]
    fn stat_kind_parsing() {
        assert_eq!("q2_ub".parse::<StatKind>().unwrap(), StatKind::Q2Ub);
        assert!("q9".parse::<StatKind>().is_err());
    }
}
