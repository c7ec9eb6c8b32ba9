use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use idg_core::analysis::{bound_report, conditional_stat, counting_lower_bound, StatKind};
use idg_core::decode::{decode_adaptive_from_outcomes, decode_nonadaptive, DecodeConfig};
use idg_core::oracle::{enumerate_consistent, exact_error_probability};
use idg_core::sim::{run_sweep, run_trial};
use idg_core::{
    compute_params, generate_matrix, sample_graph, AssociationGraph, Cell, DesignKind, DesignSpec, IdgError,
    ParamOverrides, PoolingMatrix, SideInfo, SweepConfig, TestPool,
};

fn err(e: IdgError) -> PyErr {
    match e {
        IdgError::Capacity(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn side(i_max: Option<usize>) -> SideInfo {
    i_max.map_or(SideInfo::Nsi, |i_max| SideInfo::Wsi { i_max })
}

/// Serializes through JSON into plain Python dicts and lists.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(json_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(json_err)
}

/// Binary T×n pooling matrix.
#[pyclass(name = "Matrix", module = "idg", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMatrix {
    inner: PoolingMatrix,
}

#[pymethods]
impl PyMatrix {
    #[new]
    fn new(rows: Vec<Vec<bool>>) -> PyResult<Self> {
        Ok(Self { inner: PoolingMatrix::from_rows(&rows).map_err(err)? })
    }

    /// Each entry 1 independently with probability `p`.
    #[staticmethod]
    fn generate(tests: usize, n: usize, p: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: generate_matrix(tests, n, p, seed).map_err(err)? })
    }

    /// Parses the text format: a "T n" header, then T rows over {0,1}.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: text.parse().map_err(err)? })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn get(&self, row: usize, col: usize) -> PyResult<bool> {
        if row >= self.inner.rows() || col >= self.inner.cols() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(row, col))
    }

    fn to_rows(&self) -> Vec<Vec<bool>> {
        self.inner.to_rows()
    }

    fn to_text(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Matrix(rows={}, cols={})", self.inner.rows(), self.inner.cols())
    }
}

/// Inhibitor and defective sets with inhibitor→defective edges.
#[pyclass(name = "Graph", module = "idg", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyGraph {
    inner: AssociationGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, inhibitors: Vec<usize>, defectives: Vec<usize>, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self { inner: AssociationGraph::new(n, inhibitors, defectives, edges).map_err(err)? })
    }

    /// Uniform random graph; `i_max` selects the weak side-information model.
    #[staticmethod]
    #[pyo3(signature = (n, r, d, seed, i_max=None))]
    fn sample(n: usize, r: usize, d: usize, seed: u64, i_max: Option<usize>) -> PyResult<Self> {
        Ok(Self { inner: sample_graph(n, r, d, side(i_max), seed).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(json_err)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("graphs serialize")
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn inhibitors(&self) -> Vec<usize> {
        self.inner.inhibitors().to_vec()
    }

    #[getter]
    fn defectives(&self) -> Vec<usize> {
        self.inner.defectives().to_vec()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    /// Outcome of a single pool given as a list of items.
    fn outcome(&self, pool: Vec<usize>) -> PyResult<bool> {
        self.inner.outcome(&TestPool::new(pool)).map_err(err)
    }

    fn outcome_vector(&self, matrix: &PyMatrix) -> PyResult<Vec<bool>> {
        self.inner.outcome_vector(&matrix.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n={}, inhibitors={:?}, defectives={:?}, edges={:?})",
            self.inner.n(),
            self.inner.inhibitors(),
            self.inner.defectives(),
            self.inner.edges()
        )
    }
}

/// Designed constants as a dict.
#[pyfunction]
#[pyo3(signature = (n, r, d, delta=1.0, i_max=None))]
fn params<'py>(
    py: Python<'py>,
    n: usize,
    r: usize,
    d: usize,
    delta: f64,
    i_max: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &compute_params(n, r, d, side(i_max), delta).map_err(err)?)
}

#[pyfunction]
fn decode<'py>(
    py: Python<'py>,
    matrix: &PyMatrix,
    outcomes: Vec<bool>,
    threshold: f64,
    expected_d: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = DecodeConfig { threshold_fraction: threshold, expected_d };
    to_py(py, &decode_nonadaptive(&matrix.inner, &outcomes, cfg).map_err(err)?)
}

/// Two-stage decoding; `stage2_outcomes` holds one vector per declared
/// defective, in ascending order.
#[pyfunction]
fn decode_adaptive<'py>(
    py: Python<'py>,
    stage1: &PyMatrix,
    outcomes: Vec<bool>,
    stage2: &PyMatrix,
    stage2_outcomes: Vec<Vec<bool>>,
    threshold: f64,
    expected_d: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = DecodeConfig { threshold_fraction: threshold, expected_d };
    let res =
        decode_adaptive_from_outcomes(&stage1.inner, &outcomes, &stage2.inner, &stage2_outcomes, cfg).map_err(err)?;
    to_py(py, &res)
}

/// `kind` is one of q1_exact, q1_lb, q2_exact, q2_ub, q3_exact.
#[pyfunction]
fn stat(graph: &PyGraph, p: f64, item: usize, kind: &str) -> PyResult<f64> {
    let kind: StatKind = kind.parse().map_err(err)?;
    Ok(conditional_stat(&graph.inner, p, item, kind).map_err(err)?.value)
}

#[pyfunction]
#[pyo3(signature = (n, r, d, i_max=None))]
fn counting_bound(n: usize, r: usize, d: usize, i_max: Option<usize>) -> PyResult<u64> {
    counting_lower_bound(n, r, d, side(i_max)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n, r, d, i_max=None))]
fn bounds<'py>(py: Python<'py>, n: usize, r: usize, d: usize, i_max: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &bound_report(n, r, d, side(i_max)).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (matrix, outcomes, r, d, i_max=None))]
fn consistent_graphs(
    matrix: &PyMatrix,
    outcomes: Vec<bool>,
    r: usize,
    d: usize,
    i_max: Option<usize>,
) -> PyResult<Vec<PyGraph>> {
    let set = enumerate_consistent(&matrix.inner, &outcomes, matrix.inner.cols(), r, d, side(i_max)).map_err(err)?;
    Ok(set.candidates.into_iter().map(|inner| PyGraph { inner }).collect())
}

/// `spec` is a dict such as {"design": "nonadaptive", "tests": 12, "p": 0.2, "threshold": 0.5}.
#[pyfunction]
fn error_probability(spec: &Bound<'_, PyAny>, graph: &PyGraph) -> PyResult<f64> {
    let spec: DesignSpec = from_py(spec)?;
    exact_error_probability(&spec, &graph.inner).map_err(err)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (n, r, d, seed, design="adaptive", delta=1.0, i_max=None))]
fn trial<'py>(
    py: Python<'py>,
    n: usize,
    r: usize,
    d: usize,
    seed: u64,
    design: &str,
    delta: f64,
    i_max: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let design: DesignKind = design.parse().map_err(err)?;
    let cell = Cell { n, r, d, side: side(i_max), delta, design, overrides: ParamOverrides::default() };
    to_py(py, &run_trial(&cell, seed).map_err(err)?)
}

/// Runs a sweep config dict; returns the CSV text.
#[pyfunction]
fn sweep_csv(py: Python<'_>, config: &Bound<'_, PyAny>) -> PyResult<String> {
    let config: SweepConfig = from_py(config)?;
    py.detach(|| run_sweep(&config).and_then(|t| t.to_csv())).map_err(err)
}

#[pymodule]
fn idg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(params, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(decode_adaptive, m)?)?;
    m.add_function(wrap_pyfunction!(stat, m)?)?;
    m.add_function(wrap_pyfunction!(counting_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(consistent_graphs, m)?)?;
    m.add_function(wrap_pyfunction!(error_probability, m)?)?;
    m.add_function(wrap_pyfunction!(trial, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    Ok(())
}
