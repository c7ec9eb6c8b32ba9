//! Seeded Monte Carlo harness.
//!
//! Every trial owns a seed derived from `(master_seed, cell, trial)`; the
//! graph, the stage-1 matrix and the stage-2 matrix are drawn from
//! independent streams of that seed, so running trials in any order or on
//! any number of threads yields the same reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{decode_adaptive, decode_nonadaptive, DecodeConfig, DecodeFailure, DecodeResult};
use crate::design::{compute_params, DesignKind, DesignSpec, ParamOverrides};
use crate::error::{input_err, IdgError, Result};
use crate::matrix::generate_matrix;
use crate::model::{sample_graph, AssociationGraph, SideInfo};

const GRAPH_STREAM: u64 = 0;
const STAGE1_STREAM: u64 = 1;
const STAGE2_STREAM: u64 = 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

/// Seed of trial `trial` in cell `cell`.
pub fn derive_seed(master: u64, cell: u64, trial: u64) -> u64 {
    mix(mix(master, cell), trial)
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    mix(seed, stream)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Step1Missed,
    Step1False,
    WrongDefectiveCount,
    EmptyPoolSet,
    EmptyPositiveSet,
    WrongAssociation,
}

impl FailureKind {
    pub const ALL: [FailureKind; 6] = [
        FailureKind::Step1Missed,
        FailureKind::Step1False,
        FailureKind::WrongDefectiveCount,
        FailureKind::EmptyPoolSet,
        FailureKind::EmptyPositiveSet,
        FailureKind::WrongAssociation,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub success: bool,
    pub failure_kind: Option<FailureKind>,
    pub tests_used: usize,
}

/// One point of a sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub side: SideInfo,
    pub delta: f64,
    pub design: DesignKind,
    #[serde(default, skip_serializing_if = "ParamOverrides::is_empty")]
    pub overrides: ParamOverrides,
}

impl Cell {
    /// Concrete design for this cell, with overrides applied.
    pub fn design_spec(&self) -> Result<DesignSpec> {
        let params = compute_params(self.n, self.r, self.d, self.side, self.delta)?;
        let params = self.overrides.apply(&params)?;
        let spec = DesignSpec::from_params(&params, self.design);
        spec.validate()?;
        Ok(spec)
    }
}

/// Maps a decoder output against the truth to a report.
pub fn classify(truth: &AssociationGraph, result: &DecodeResult, seed: u64, tests_used: usize) -> TrialReport {
    let failure_kind = match result.failure {
        Some(DecodeFailure::WrongDefectiveCount { .. }) => Some(FailureKind::WrongDefectiveCount),
        Some(DecodeFailure::EmptyPoolSet { .. }) => Some(FailureKind::EmptyPoolSet),
        Some(DecodeFailure::EmptyPositiveSet { .. }) => Some(FailureKind::EmptyPositiveSet),
        None if result.defectives != truth.defectives() => {
            let missed = truth.defectives().iter().any(|u| result.defectives.binary_search(u).is_err());
            Some(if missed { FailureKind::Step1Missed } else { FailureKind::Step1False })
        }
        None if !result.matches(truth) => Some(FailureKind::WrongAssociation),
        None => None,
    };
    TrialReport { seed, success: failure_kind.is_none(), failure_kind, tests_used }
}

/// Runs one design on a fixed graph. The matrices come from `seed`.
pub fn run_design(graph: &AssociationGraph, spec: &DesignSpec, seed: u64) -> Result<TrialReport> {
    spec.validate()?;
    let n = graph.n();
    let cfg = DecodeConfig { threshold_fraction: spec.threshold(), expected_d: graph.d() };
    match *spec {
        DesignSpec::Nonadaptive { tests, p, .. } => {
            let m = generate_matrix(tests, n, p, stream_seed(seed, STAGE1_STREAM))?;
            let y = graph.outcome_vector(&m)?;
            let result = decode_nonadaptive(&m, &y, cfg)?;
            Ok(classify(graph, &result, seed, tests))
        }
        DesignSpec::Adaptive { t1, p1, t2, p2, .. } => {
            if graph.d() == n {
                return Err(input_err!("adaptive design needs at least one non-defective item"));
            }
            let m1 = generate_matrix(t1, n, p1, stream_seed(seed, STAGE1_STREAM))?;
            let y1 = graph.outcome_vector(&m1)?;
            let m2 = generate_matrix(t2, n - graph.d(), p2, stream_seed(seed, STAGE2_STREAM))?;
            let mut stage2_tests = 0;
            let result = decode_adaptive(&m1, &y1, &m2, cfg, |pool| {
                stage2_tests += 1;
                graph.outcome_by(|j| pool.contains(j))
            })?;
            Ok(classify(graph, &result, seed, t1 + stage2_tests))
        }
    }
}

/// Samples a graph and runs the cell's design, all from `seed`.
pub fn run_trial(cell: &Cell, seed: u64) -> Result<TrialReport> {
    let spec = cell.design_spec()?;
    let graph = sample_graph(cell.n, cell.r, cell.d, cell.side, stream_seed(seed, GRAPH_STREAM))?;
    run_design(&graph, &spec, seed)
}

fn default_deltas() -> Vec<f64> {
    vec![1.0]
}

fn default_models() -> Vec<SideInfo> {
    vec![SideInfo::Nsi]
}

fn default_designs() -> Vec<DesignKind> {
    vec![DesignKind::Adaptive, DesignKind::Nonadaptive]
}

/// Cartesian grid over `n × r × d × models × deltas × designs`, in that
/// nesting order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub r: Vec<usize>,
    pub d: Vec<usize>,
    #[serde(default = "default_models")]
    pub models: Vec<SideInfo>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_designs")]
    pub designs: Vec<DesignKind>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "ParamOverrides::is_empty")]
    pub overrides: ParamOverrides,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(input_err!("trials must be at least 1"));
        }
        for (name, empty) in [
            ("n", self.n.is_empty()),
            ("r", self.r.is_empty()),
            ("d", self.d.is_empty()),
            ("models", self.models.is_empty()),
            ("deltas", self.deltas.is_empty()),
            ("designs", self.designs.is_empty()),
        ] {
            if empty {
                return Err(input_err!("sweep axis `{name}` is empty"));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &r in &self.r {
                for &d in &self.d {
                    for &side in &self.models {
                        for &delta in &self.deltas {
                            for &design in &self.designs {
                                out.push(Cell { n, r, d, side, delta, design, overrides: self.overrides.clone() });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Aggregate of one cell. Skipped cells carry a `note` and no rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub model: String,
    pub i_max: usize,
    pub delta: f64,
    pub design: String,
    pub trials: usize,
    pub successes: usize,
    pub rate: Option<f64>,
    pub mean_tests: Option<f64>,
    pub step1_missed: usize,
    pub step1_false: usize,
    pub wrong_defective_count: usize,
    pub empty_pool_set: usize,
    pub empty_positive_set: usize,
    pub wrong_association: usize,
    pub note: String,
}

impl CellSummary {
    fn empty(cell: &Cell) -> Self {
        Self {
            n: cell.n,
            r: cell.r,
            d: cell.d,
            model: cell.side.label().to_string(),
            i_max: cell.side.i_max(cell.r),
            delta: cell.delta,
            design: cell.design.label().to_string(),
            trials: 0,
            successes: 0,
            rate: None,
            mean_tests: None,
            step1_missed: 0,
            step1_false: 0,
            wrong_defective_count: 0,
            empty_pool_set: 0,
            empty_positive_set: 0,
            wrong_association: 0,
            note: String::new(),
        }
    }

    pub fn from_reports(cell: &Cell, reports: &[TrialReport]) -> Self {
        let mut s = Self::empty(cell);
        let mut counts = [0usize; 6];
        let mut tests = 0usize;
        for rep in reports {
            if let Some(k) = rep.failure_kind {
                counts[k.index()] += 1;
            } else {
                s.successes += 1;
            }
            tests += rep.tests_used;
        }
        s.trials = reports.len();
        if !reports.is_empty() {
            s.rate = Some(s.successes as f64 / s.trials as f64);
            s.mean_tests = Some(tests as f64 / s.trials as f64);
        }
        [
            s.step1_missed,
            s.step1_false,
            s.wrong_defective_count,
            s.empty_pool_set,
            s.empty_positive_set,
            s.wrong_association,
        ] = counts;
        s
    }

    fn skipped(cell: &Cell, err: &IdgError) -> Self {
        let mut s = Self::empty(cell);
        s.note = format!("skipped: {err}");
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<CellSummary>,
}

impl SweepTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| IdgError::Input(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| IdgError::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summaries serialize")
    }
}

/// Per-trial reports of one cell, in trial order. Runs on the current
/// rayon pool.
pub fn run_cell(cell: &Cell, cell_index: u64, trials: usize, master_seed: u64) -> Result<Vec<TrialReport>> {
    cell.design_spec()?;
    (0..trials as u64).into_par_iter().map(|t| run_trial(cell, derive_seed(master_seed, cell_index, t))).collect()
}

/// Runs every cell of the grid. Infeasible or invalid cells are kept as
/// rows with a note instead of aborting the sweep.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepTable> {
    config.validate()?;
    let rows = config
        .cells()
        .iter()
        .enumerate()
        .map(|(i, cell)| match run_cell(cell, i as u64, config.trials, config.master_seed) {
            Ok(reports) => Ok(CellSummary::from_reports(cell, &reports)),
            Err(e @ (IdgError::Infeasible(_) | IdgError::Input(_))) => Ok(CellSummary::skipped(cell, &e)),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(n: usize, r: usize, d: usize, design: DesignKind) -> Cell {
        Cell { n, r, d, side: SideInfo::Nsi, delta: 1.0, design, overrides: ParamOverrides::default() }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(1, 0, 0);
        assert_eq!(a, derive_seed(1, 0, 0));
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(2, 0, 0));
        assert_ne!(stream_seed(a, STAGE1_STREAM), stream_seed(a, STAGE2_STREAM));
    }

    #[test]
    fn empty_cell_succeeds() {
        for design in [DesignKind::Adaptive, DesignKind::Nonadaptive] {
            let rep = run_trial(&cell(20, 0, 0, design), 3).unwrap();
            assert!(rep.success, "{design:?}");
            assert_eq!(rep.failure_kind, None);
        }
    }

    #[test]
    fn zero_density_gives_wrong_count() {
        for design in [DesignKind::Adaptive, DesignKind::Nonadaptive] {
            let mut c = cell(50, 1, 2, design);
            c.overrides.p1 = Some(0.0);
            for seed in 0..10 {
                let rep = run_trial(&c, seed).unwrap();
                assert_eq!(rep.failure_kind, Some(FailureKind::WrongDefectiveCount));
            }
        }
    }

    #[test]
    fn adaptive_tests_used() {
        let c = cell(200, 1, 2, DesignKind::Adaptive);
        let params = compute_params(200, 1, 2, SideInfo::Nsi, 1.0).unwrap();
        for seed in 0..5 {
            let rep = run_trial(&c, seed).unwrap();
            if rep.success {
                assert_eq!(rep.tests_used, params.t1 + 2 * params.t2);
            }
        }
    }

    #[test]
    fn classification_order() {
        let truth = AssociationGraph::new(6, vec![0], vec![1, 2], vec![(0, 1)]).unwrap();
        let res = |defs: Vec<usize>, edges: Vec<(usize, usize)>| DecodeResult {
            inhibitors: edges.iter().map(|e| e.0).collect(),
            defectives: defs,
            edges,
            failure: None,
        };
        let k = |r: &DecodeResult| classify(&truth, r, 0, 1).failure_kind;
        assert_eq!(k(&res(vec![1, 2], vec![(0, 1)])), None);
        assert_eq!(k(&res(vec![1, 3], vec![(0, 1)])), Some(FailureKind::Step1Missed));
        assert_eq!(k(&res(vec![1, 2, 3], vec![(0, 1)])), Some(FailureKind::Step1False));
        assert_eq!(k(&res(vec![1, 2], vec![(0, 2)])), Some(FailureKind::WrongAssociation));
        let mut failed = res(vec![1], vec![]);
        failed.failure = Some(DecodeFailure::WrongDefectiveCount { k: 1 });
        assert_eq!(k(&failed), Some(FailureKind::WrongDefectiveCount));
    }

    #[test]
    fn sweep_bookkeeping_and_skips() {
        let cfg = SweepConfig {
            n: vec![40],
            r: vec![0, 1],
            d: vec![0, 1],
            models: vec![SideInfo::Nsi],
            deltas: vec![1.0],
            designs: vec![DesignKind::Adaptive],
            trials: 10,
            master_seed: 9,
            overrides: ParamOverrides::default(),
        };
        let table = run_sweep(&cfg).unwrap();
        assert_eq!(table.rows.len(), 4);
        // r = 1, d = 0 is infeasible
        let skipped = &table.rows[2];
        assert_eq!((skipped.r, skipped.d), (1, 0));
        assert!(skipped.note.starts_with("skipped"));
        assert_eq!(skipped.rate, None);
        for row in table.rows.iter().filter(|r| r.note.is_empty()) {
            assert_eq!(row.trials, 10);
            let failures = row.step1_missed
                + row.step1_false
                + row.wrong_defective_count
                + row.empty_pool_set
                + row.empty_positive_set
                + row.wrong_association;
            assert_eq!(row.successes + failures, 10);
            assert!((0.0..=1.0).contains(&row.rate.unwrap()));
        }
        let csv = table.to_csv().unwrap();
        assert!(csv.starts_with(
            "n,r,d,model,i_max,delta,design,trials,successes,rate,mean_tests,step1_missed,step1_false,\
             wrong_defective_count,empty_pool_set,empty_positive_set,wrong_association,note\n"
        ));
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(run_sweep(&cfg).unwrap(), table);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: SweepConfig =
            serde_json::from_str(r#"{"n":[100],"r":[1],"d":[1],"trials":3,"master_seed":0}"#).unwrap();
        assert_eq!(cfg.deltas, vec![1.0]);
        assert_eq!(cfg.models, vec![SideInfo::Nsi]);
        assert_eq!(cfg.cells().len(), 2);
        let bad = SweepConfig { trials: 0, ..cfg };
        assert!(bad.validate().is_err());
    }
}
