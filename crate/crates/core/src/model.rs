//! Items, association graphs and the test outcome rule.
//!
//! Items are indexed `0..n`. An association graph splits them into
//! inhibitors, defectives and normal items and records which inhibitors
//! suppress which defectives. A pool tests positive iff it holds at least
//! one defective none of whose inhibitors are also in the pool.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, IdgError, Result};
use crate::matrix::PoolingMatrix;

/// Rejection sampling of WSI patterns gives up after this many draws.
pub const MAX_PATTERN_ATTEMPTS: u64 = 1_000_000;

/// Prior knowledge about the association graph.
///
/// `Nsi` carries no side information. `Wsi` bounds the number of inhibitors
/// any single defective may have.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum SideInfo {
    Nsi,
    Wsi { i_max: usize },
}

impl SideInfo {
    /// Largest in-degree a defective may have. Without side information
    /// every inhibitor may point at the same defective, so this is `r`.
    pub fn i_max(&self, r: usize) -> usize {
        match *self {
            SideInfo::Nsi => r,
            SideInfo::Wsi { i_max } => i_max,
        }
    }

    pub fn check_feasible(&self, r: usize, d: usize) -> Result<()> {
        if r > 0 && d == 0 {
            return Err(IdgError::Infeasible(format!("{r} inhibitors need at least one defective")));
        }
        if let SideInfo::Wsi { i_max } = *self {
            if i_max == 0 || i_max > r {
                return Err(IdgError::Infeasible(format!(
                    "i_max must satisfy 1 <= i_max <= r, got i_max={i_max}, r={r}"
                )));
            }
            if r > i_max * d {
                return Err(IdgError::Infeasible(format!(
                    "r={r} inhibitors cannot each reach one of d={d} defectives with i_max={i_max}"
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self {
            SideInfo::Nsi => "nsi",
            SideInfo::Wsi { .. } => "wsi",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Inhibitor,
    Defective,
    Normal,
}

/// Ground-truth inhibitor and defective sets with the directed
/// inhibitor→defective association edges.
///
/// All lists are kept sorted, so two graphs are equal iff they describe the
/// same sets, and the derived ordering is lexicographic on
/// `(n, inhibitors, defectives, edges)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct AssociationGraph {
    n: usize,
    inhibitors: Vec<usize>,
    defectives: Vec<usize>,
    edges: Vec<(usize, usize)>,
    // inhibitors of defectives[k], sorted
    inhibitors_by_defective: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    n: usize,
    inhibitors: Vec<usize>,
    defectives: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<GraphRecord> for AssociationGraph {
    type Error = IdgError;

    fn try_from(r: GraphRecord) -> Result<Self> {
        AssociationGraph::new(r.n, r.inhibitors, r.defectives, r.edges)
    }
}

impl From<AssociationGraph> for GraphRecord {
    fn from(g: AssociationGraph) -> Self {
        GraphRecord { n: g.n, inhibitors: g.inhibitors, defectives: g.defectives, edges: g.edges }
    }
}

fn sorted_unique(mut v: Vec<usize>, what: &str) -> Result<Vec<usize>> {
    v.sort_unstable();
    if v.windows(2).any(|w| w[0] == w[1]) {
        return Err(input_err!("duplicate entry in {what}"));
    }
    Ok(v)
}

impl AssociationGraph {
    pub fn new(n: usize, inhibitors: Vec<usize>, defectives: Vec<usize>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let inhibitors = sorted_unique(inhibitors, "inhibitors")?;
        let defectives = sorted_unique(defectives, "defectives")?;
        if let Some(&bad) = inhibitors.iter().chain(&defectives).find(|&&i| i >= n) {
            return Err(input_err!("item {bad} out of range for n={n}"));
        }
        if let Some(&both) = inhibitors.iter().find(|i| defectives.binary_search(i).is_ok()) {
            return Err(input_err!("item {both} is both an inhibitor and a defective"));
        }
        let mut edges = edges;
        edges.sort_unstable();
        edges.dedup();
        for &(s, u) in &edges {
            if inhibitors.binary_search(&s).is_err() {
                return Err(input_err!("edge ({s}, {u}) starts at a non-inhibitor"));
            }
            if defectives.binary_search(&u).is_err() {
                return Err(input_err!("edge ({s}, {u}) ends at a non-defective"));
            }
        }
        if let Some(&lonely) = inhibitors.iter().find(|&&s| edges.binary_search_by(|e| e.0.cmp(&s)).is_err()) {
            return Err(input_err!("inhibitor {lonely} is not associated with any defective"));
        }
        let mut inhibitors_by_defective = vec![Vec::new(); defectives.len()];
        for &(s, u) in &edges {
            let k = defectives.binary_search(&u).expect("validated above");
            inhibitors_by_defective[k].push(s);
        }
        Ok(Self { n, inhibitors, defectives, edges, inhibitors_by_defective })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.inhibitors.len()
    }

    pub fn d(&self) -> usize {
        self.defectives.len()
    }

    pub fn inhibitors(&self) -> &[usize] {
        &self.inhibitors
    }

    pub fn defectives(&self) -> &[usize] {
        &self.defectives
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn role(&self, item: usize) -> Role {
        if self.defectives.binary_search(&item).is_ok() {
            Role::Defective
        } else if self.inhibitors.binary_search(&item).is_ok() {
            Role::Inhibitor
        } else {
            Role::Normal
        }
    }

    /// Inhibitors associated with defective `u` (empty if `u` is not a defective).
    pub fn inhibitors_of(&self, u: usize) -> &[usize] {
        match self.defectives.binary_search(&u) {
            Ok(k) => &self.inhibitors_by_defective[k],
            Err(_) => &[],
        }
    }

    /// Defectives that inhibitor `s` is associated with.
    pub fn defectives_of(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == s).map(|e| e.1)
    }

    pub fn max_in_degree(&self) -> usize {
        self.inhibitors_by_defective.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Whether the graph lies in the support allowed by `side`.
    pub fn satisfies(&self, side: SideInfo) -> bool {
        side.check_feasible(self.r(), self.d()).is_ok() && self.max_in_degree() <= side.i_max(self.r())
    }

    /// Outcome of a pool described by a membership predicate.
    #[inline]
    pub fn outcome_by<F: Fn(usize) -> bool>(&self, present: F) -> bool {
        self.defectives
            .iter()
            .zip(&self.inhibitors_by_defective)
            .any(|(&u, inh)| present(u) && !inh.iter().any(|&s| present(s)))
    }

    pub fn outcome(&self, pool: &TestPool) -> Result<bool> {
        if let Some(&bad) = pool.members().last().filter(|&&m| m >= self.n) {
            return Err(input_err!("pool item {bad} out of range for n={}", self.n));
        }
        Ok(self.outcome_by(|i| pool.contains(i)))
    }

    /// Outcome of every row of `matrix`, in row order.
    pub fn outcome_vector(&self, matrix: &PoolingMatrix) -> Result<Vec<bool>> {
        if matrix.cols() != self.n {
            return Err(input_err!("matrix has {} columns but the graph has {} items", matrix.cols(), self.n));
        }
        Ok((0..matrix.rows()).map(|l| self.outcome_by(|j| matrix.get(l, j))).collect())
    }
}

/// A set of items tested together.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestPool {
    members: Vec<usize>,
}

impl TestPool {
    pub fn new<I: IntoIterator<Item = usize>>(members: I) -> Self {
        let set: BTreeSet<usize> = members.into_iter().collect();
        Self { members: set.into_iter().collect() }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, item: usize) -> bool {
        self.members.binary_search(&item).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Draws a uniformly random association graph.
///
/// The `(inhibitor, defective)` positions are uniform over disjoint
/// `(r, d)`-subsets of `0..n`. Each inhibitor then picks a uniformly random
/// nonempty subset of the defectives. Under `Wsi` a pattern in which some
/// defective has more than `i_max` inhibitors is rejected and redrawn, which
/// leaves the accepted pattern uniform over all valid patterns.
pub fn sample_graph(n: usize, r: usize, d: usize, side: SideInfo, seed: u64) -> Result<AssociationGraph> {
    if r + d > n {
        return Err(input_err!("r + d = {} exceeds n = {n}", r + d));
    }
    side.check_feasible(r, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, n, r + d).into_vec();
    let (defectives, inhibitors) = picks.split_at(d);
    let mut defectives = defectives.to_vec();
    defectives.sort_unstable();
    let cap = side.i_max(r);

    let mut targets = vec![false; d];
    let mut in_degree = vec![0usize; d];
    let mut edges = Vec::with_capacity(r);
    let mut attempts = 0u64;
    'pattern: loop {
        attempts += 1;
        if attempts > MAX_PATTERN_ATTEMPTS {
            return Err(IdgError::Capacity(format!(
                "no valid pattern for r={r}, d={d}, i_max={cap} after {MAX_PATTERN_ATTEMPTS} draws"
            )));
        }
        edges.clear();
        in_degree.iter_mut().for_each(|c| *c = 0);
        for &s in inhibitors {
            loop {
                targets.iter_mut().for_each(|t| *t = rng.gen::<bool>());
                if targets.iter().any(|&t| t) {
                    break;
                }
            }
            for (k, _) in targets.iter().enumerate().filter(|(_, &t)| t) {
                in_degree[k] += 1;
                if in_degree[k] > cap {
                    continue 'pattern;
                }
                edges.push((s, defectives[k]));
            }
        }
        break;
    }
    AssociationGraph::new(n, inhibitors.to_vec(), defectives, edges)
}
