//! Group testing under the immune defectives graph model.
//!
//! Items are inhibitors, defectives or normal. A test is positive iff it
//! contains a defective and none of that defective's associated inhibitors.
//! The crate builds random pooling designs, decodes defectives and
//! inhibitor→defective associations from outcomes, computes exact outcome
//! statistics and counting lower bounds, and runs seeded Monte Carlo
//! verification of the whole pipeline.

pub mod analysis;
pub mod decode;
pub mod design;
pub mod error;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod sim;

pub use decode::{DecodeConfig, DecodeFailure, DecodeResult};
pub use design::{compute_params, DesignKind, DesignParams, DesignSpec, ParamOverrides};
pub use error::{IdgError, Result};
pub use matrix::{generate_matrix, PoolingMatrix};
pub use model::{sample_graph, AssociationGraph, SideInfo, TestPool};
pub use oracle::{enumerate_consistent, exact_error_probability, ConsistencySet};
pub use sim::{run_sweep, run_trial, Cell, FailureKind, SweepConfig, SweepTable, TrialReport};
