//! Python bindings: an `Instance` class plus solver functions returning plain
//! dicts (decoded from the library's JSON records).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use mcnfli::approx::{self, Family, RoundingScheme, SearchMode};
use mcnfli::generator::{self, GenSpec, InterdepMode};
use mcnfli::harness::{self, TrialConfig};
use mcnfli::{ModelKind, PricingRule, SolveOptions};

#[pyclass(name = "Instance", frozen)]
pub struct PyInstance {
    inner: mcnfli::Instance,
}

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pymethods]
impl PyInstance {
    /// Parses the line-oriented instance text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: mcnfli::parse(text).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(value_err)?;
        Self::parse(&text)
    }

    fn to_text(&self) -> String {
        mcnfli::serialize(&self.inner)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind() {
            ModelKind::Lidm => "mcnfli",
            ModelKind::Bidm => "bidm",
        }
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn arc_count(&self) -> usize {
        self.inner.arc_count()
    }

    #[getter]
    fn interdep_count(&self) -> usize {
        self.inner.interdep_count()
    }

    /// Problems found by validation, as strings; empty when valid.
    fn validate(&self) -> Vec<String> {
        mcnfli::validate(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(kind={}, nodes={}, arcs={}, interdeps={})",
            self.kind(),
            self.node_count(),
            self.arc_count(),
            self.interdep_count()
        )
    }
}

/// Linear model (binary instances are relaxed).
#[pyfunction]
#[pyo3(signature = (instance, rule = "dantzig", use_dhat = false))]
fn solve<'py>(py: Python<'py>, instance: &PyInstance, rule: &str, use_dhat: bool) -> PyResult<Bound<'py, PyAny>> {
    let rule = match rule {
        "dantzig" => PricingRule::Dantzig,
        "bland" => PricingRule::Bland,
        other => return Err(value_err(format!("unknown rule {other}"))),
    };
    let opts = SolveOptions {
        rule,
        use_dhat,
        ..Default::default()
    };
    let r = mcnfli::solve(&instance.inner, &opts).map_err(runtime_err)?;
    to_py(py, &r)
}

/// Exact binary model by branch and bound.
#[pyfunction]
fn solve_bidm<'py>(py: Python<'py>, instance: &PyInstance) -> PyResult<Bound<'py, PyAny>> {
    let r = approx::solve_bidm(&instance.inner, SearchMode::Exact).map_err(runtime_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (instance, scheme = "child", epsilon = 0.0, seed = 0, max_attempts = 1000))]
fn round<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    scheme: &str,
    epsilon: f64,
    seed: u64,
    max_attempts: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let family = match scheme {
        "child" => Family::Child,
        "parent" => Family::Parent,
        "fair" => Family::Fair,
        other => return Err(value_err(format!("unknown scheme {other}"))),
    };
    let mut s = RoundingScheme::new(family, epsilon, seed).map_err(value_err)?;
    s.max_attempts = max_attempts;
    let out = approx::round(&instance.inner, &s, None).map_err(runtime_err)?;
    to_py(py, &out)
}

/// Returns `(instance, provenance)`.
#[pyfunction]
#[pyo3(signature = (nodes = 64, arcs_per_node = 4, mode = "unstructured", density = 0.05, seed = 0))]
fn generate<'py>(
    py: Python<'py>,
    nodes: usize,
    arcs_per_node: usize,
    mode: &str,
    density: f64,
    seed: u64,
) -> PyResult<(PyInstance, Bound<'py, PyAny>)> {
    let interdep_mode = match mode {
        "none" => InterdepMode::None,
        "structured" => InterdepMode::StructuredSinkFrac(density),
        "unstructured" => InterdepMode::UnstructuredArcFrac(density),
        other => return Err(value_err(format!("unknown mode {other}"))),
    };
    let spec = GenSpec {
        nodes,
        arcs_per_node,
        interdep_mode,
        seed,
        ..Default::default()
    };
    let g = py.detach(|| generator::generate(&spec)).map_err(runtime_err)?;
    Ok((PyInstance { inner: g.instance }, to_py(py, &g.provenance)?))
}

/// Desk trial batch; returns the group summaries.
#[pyfunction]
#[pyo3(signature = (densities, trials = 30, seed = 1))]
#[pyo3(name = "bench")]
fn run_bench<'py>(py: Python<'py>, densities: Vec<f64>, trials: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let config = TrialConfig::desk(&densities, trials, seed);
    let (_, summaries) = py.detach(|| harness::run_trials(&config));
    to_py(py, &summaries)
}

#[pymodule]
#[pyo3(name = "mcnfli")]
fn mcnfli_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_bidm, m)?)?;
    m.add_function(wrap_pyfunction!(round, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
