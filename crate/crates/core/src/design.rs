//! Design constants and random pooling designs.
//!
//! Given `(n, r, d, side, δ)` this computes the Bernoulli densities, the
//! Step-1 threshold and the test counts for the non-adaptive design (one
//! `T_NA × n` matrix) and the two-stage adaptive design (a `T1 × n` first
//! stage, then a `T2 × (n − d)` matrix tested once alongside each declared
//! defective).

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::model::SideInfo;

pub use crate::matrix::{generate_matrix, PoolingMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    #[serde(alias = "na", alias = "non-adaptive")]
    Nonadaptive,
    #[serde(alias = "a")]
    Adaptive,
}

impl DesignKind {
    pub fn label(&self) -> &'static str {
        match self {
            DesignKind::Nonadaptive => "nonadaptive",
            DesignKind::Adaptive => "adaptive",
        }
    }
}

impl std::str::FromStr for DesignKind {
    type Err = crate::error::IdgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nonadaptive" | "non-adaptive" | "na" => Ok(DesignKind::Nonadaptive),
            "adaptive" | "a" => Ok(DesignKind::Adaptive),
            other => Err(input_err!("unknown design {other:?}")),
        }
    }
}

/// Every constant the two designs and the decoder need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub side: SideInfo,
    /// In-degree bound the formulas were evaluated with (`r` under NSI,
    /// raised to 1 when there are no inhibitors).
    pub i_max: usize,
    pub delta: f64,
    pub p1: f64,
    pub p2: f64,
    pub b_max: f64,
    pub q2_ub: f64,
    pub tau: f64,
    pub threshold_fraction: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub beta_na: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub t_na: usize,
    pub t1: usize,
    pub t2: usize,
}

/// `(1 − e^{-2})`, the Hoeffding-to-linear relaxation constant.
fn one_minus_e2() -> f64 {
    1.0 - (-2.0f64).exp()
}

/// Right-hand side of the Step-1 test-count bound:
/// `27 (I + d) (ln(n−d−r)/ln n + δ₁) ln 2 / (1 − e^{-2})`.
pub fn beta_step1(n: usize, r: usize, d: usize, i_max: usize, delta1: f64) -> f64 {
    let ln_n = (n as f64).ln();
    27.0 * (i_max + d) as f64 * (((n - d - r) as f64).ln() / ln_n + delta1) * LN_2 / one_minus_e2()
}

/// Right-hand side of the non-adaptive Step-2 bound:
/// `81/4 (I + d)² (ln(n−d)/ln n + δ₂) ln 2`.
pub fn beta_step2_nonadaptive(n: usize, d: usize, i_max: usize, delta2: f64) -> f64 {
    let ln_n = (n as f64).ln();
    let k = (i_max + d) as f64;
    81.0 / 4.0 * k * k * (((n - d) as f64).ln() / ln_n + delta2) * LN_2
}

/// Right-hand side of the adaptive stage-2 bound: `4 I (ln(n−d)/ln n + δ₂) ln 2`.
pub fn beta_step2_adaptive(n: usize, d: usize, i_max: usize, delta2: f64) -> f64 {
    let ln_n = (n as f64).ln();
    4.0 * i_max as f64 * (((n - d) as f64).ln() / ln_n + delta2) * LN_2
}

fn tests_for(beta: f64, n: usize) -> usize {
    (beta * (n as f64).log2()).ceil() as usize
}

/// Computes the design constants for both pooling designs.
///
/// Without side information the inhibitor bound is `r`. With `r = 0` the
/// bound is taken as 1 so every constant stays finite.
pub fn compute_params(n: usize, r: usize, d: usize, side: SideInfo, delta: f64) -> Result<DesignParams> {
    if n <= r + d {
        return Err(input_err!("need n > r + d, got n={n}, r={r}, d={d}"));
    }
    if n < 2 {
        return Err(input_err!("need n >= 2"));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(input_err!("delta must be a positive number, got {delta}"));
    }
    side.check_feasible(r, d)?;
    let i_max = side.i_max(r).max(1);

    let p1 = 1.0 / (3.0 * (i_max + d) as f64);
    let p2 = 1.0 / (2.0 * i_max as f64);
    let b_max = 1.0 - (1.0 - p1).powi(i_max as i32);
    let q2_ub = 1.0 - (1.0 - p1).powi(d as i32);
    let tau = (1.0 - b_max - q2_ub) / (2.0 * b_max);
    let threshold_fraction = 1.0 - b_max * (1.0 + tau);

    let delta1 = delta + 1.0;
    let delta2 = delta + 1.0;
    let beta1 = beta_step1(n, r, d, i_max, delta1);
    let beta_na = beta1.max(beta_step2_nonadaptive(n, d, i_max, delta2));
    let beta2 = beta_step2_adaptive(n, d, i_max, delta2);

    Ok(DesignParams {
        n,
        r,
        d,
        side,
        i_max,
        delta,
        p1,
        p2,
        b_max,
        q2_ub,
        tau,
        threshold_fraction,
        delta1,
        delta2,
        beta_na,
        beta1,
        beta2,
        t_na: tests_for(beta_na, n),
        t1: tests_for(beta1, n),
        t2: tests_for(beta2, n),
    })
}

/// Explicit replacements for designed values, for toy examples and ablations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamOverrides {
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub t_na: Option<usize>,
    pub t1: Option<usize>,
    pub t2: Option<usize>,
    pub threshold: Option<f64>,
}

impl ParamOverrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Copy of `params` with the overridden fields replaced. Derived
    /// constants (`b_max`, `tau`, the β's) are left as designed.
    pub fn apply(&self, params: &DesignParams) -> Result<DesignParams> {
        let mut out = params.clone();
        for (name, v) in [("p1", self.p1), ("p2", self.p2)] {
            if let Some(p) = v {
                if !(0.0..=1.0).contains(&p) {
                    return Err(input_err!("{name} override {p} not in [0, 1]"));
                }
            }
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(input_err!("threshold override {t} not in (0, 1)"));
            }
        }
        out.p1 = self.p1.unwrap_or(out.p1);
        out.p2 = self.p2.unwrap_or(out.p2);
        out.t_na = self.t_na.unwrap_or(out.t_na);
        out.t1 = self.t1.unwrap_or(out.t1);
        out.t2 = self.t2.unwrap_or(out.t2);
        out.threshold_fraction = self.threshold.unwrap_or(out.threshold_fraction);
        Ok(out)
    }
}

/// Matrix shapes and total test count of the two-stage design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptivePlan {
    pub stage1_rows: usize,
    pub stage1_cols: usize,
    pub stage2_rows: usize,
    pub stage2_cols: usize,
    /// `T1 + d·T2`.
    pub total_tests: usize,
}

impl AdaptivePlan {
    pub fn new(t1: usize, t2: usize, n: usize, d: usize) -> Self {
        Self {
            stage1_rows: t1,
            stage1_cols: n,
            stage2_rows: t2,
            stage2_cols: n.saturating_sub(d),
            total_tests: t1 + d * t2,
        }
    }
}

pub fn plan_adaptive(params: &DesignParams) -> AdaptivePlan {
    AdaptivePlan::new(params.t1, params.t2, params.n, params.d)
}

/// A concrete design: matrix sizes, densities and the Step-1 threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "lowercase")]
pub enum DesignSpec {
    Nonadaptive { tests: usize, p: f64, threshold: f64 },
    Adaptive { t1: usize, p1: f64, t2: usize, p2: f64, threshold: f64 },
}

impl DesignSpec {
    pub fn from_params(params: &DesignParams, kind: DesignKind) -> Self {
        match kind {
            DesignKind::Nonadaptive => {
                DesignSpec::Nonadaptive { tests: params.t_na, p: params.p1, threshold: params.threshold_fraction }
            }
            DesignKind::Adaptive => DesignSpec::Adaptive {
                t1: params.t1,
                p1: params.p1,
                t2: params.t2,
                p2: params.p2,
                threshold: params.threshold_fraction,
            },
        }
    }

    pub fn kind(&self) -> DesignKind {
        match self {
            DesignSpec::Nonadaptive { .. } => DesignKind::Nonadaptive,
            DesignSpec::Adaptive { .. } => DesignKind::Adaptive,
        }
    }

    pub fn threshold(&self) -> f64 {
        match *self {
            DesignSpec::Nonadaptive { threshold, .. } | DesignSpec::Adaptive { threshold, .. } => threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs: &[f64] = match self {
            DesignSpec::Nonadaptive { p, .. } => &[*p],
            DesignSpec::Adaptive { p1, p2, .. } => &[*p1, *p2],
        };
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(input_err!("probability {p} not in [0, 1]"));
        }
        let t = self.threshold();
        if !(t > 0.0 && t < 1.0) {
            return Err(input_err!("threshold {t} not in (0, 1)"));
        }
        let sizes: &[usize] = match self {
            DesignSpec::Nonadaptive { tests, .. } => &[*tests],
            DesignSpec::Adaptive { t1, t2, .. } => &[*t1, *t2],
        };
        if sizes.contains(&0) {
            return Err(input_err!("test counts must be positive"));
        }
        Ok(())
    }
}
