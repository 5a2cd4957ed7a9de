//! Python bindings for `lacelab`.
//!
//! Heavy work runs with the interpreter detached. Structured reports come
//! back as plain dicts and lists, built from the same JSON the CLI prints.

use lacelab::gauss_approx::{conv_power, lclt_error_scan, StepLaw as CoreStepLaw};
use lacelab::laces::{compatible_edges, enumerate_laces, verify_lace_recursion, PiTable};
use lacelab::local_fp::{saw_pipeline_with, PipelineOptions, SawTables as CoreTables};
use lacelab::scalar_fp::SolveOptions;
use lacelab::walks::{enumerate_connectivity, ModelParams, DEFAULT_BUDGET};
use lacelab::{Error, Rational, Scalar, SignedMeasure};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyTuple;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::MassMismatch { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Stage { ref source, .. } if matches!(**source, Error::MassMismatch { .. }) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn to_json<S: serde::Serialize>(value: &S) -> PyResult<serde_json::Value> {
    serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Interaction strength: a float, or a string such as `"1/10"` or `"0.1"`.
#[derive(FromPyObject)]
enum Lambda {
    Text(String),
    Number(f64),
}

impl Lambda {
    fn parse<T: Scalar>(&self) -> PyResult<T> {
        let text = match self {
            Lambda::Text(s) => s.clone(),
            Lambda::Number(v) => format!("{v}"),
        };
        T::parse_scalar(&text).map_err(to_py_err)
    }
}

fn model<T: Scalar>(dim: usize, lambda: &Lambda, n_max: usize) -> PyResult<ModelParams<T>> {
    ModelParams::new(dim, lambda.parse()?, n_max).map_err(to_py_err)
}

/// A finitely supported signed measure on Z^d, sorted by point.
#[pyclass(frozen, module = "pylacelab")]
struct Measure {
    dim: usize,
    points: Vec<Vec<i64>>,
    weights: Vec<f64>,
    /// Exact weights as `"p/q"` strings, when computed in rational arithmetic.
    exact: Option<Vec<String>>,
    mass: f64,
}

impl Measure {
    fn from_core<T: Scalar>(m: &SignedMeasure<T>, exact: bool) -> Self {
        let entries = m.sorted_entries();
        Measure {
            dim: m.dim(),
            points: entries.iter().map(|(p, _)| p.to_vec()).collect(),
            weights: entries.iter().map(|(_, w)| w.to_f64()).collect(),
            exact: exact.then(|| entries.iter().map(|(_, w)| w.to_string()).collect()),
            mass: m.mass().to_f64(),
        }
    }

    fn index(&self, point: &[i64]) -> Option<usize> {
        self.points.binary_search_by(|p| p.as_slice().cmp(point)).ok()
    }
}

#[pymethods]
impl Measure {
    #[getter]
    fn dim(&self) -> usize {
        self.dim
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.mass
    }

    #[getter]
    fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Sum of |x|^2 times the weight.
    fn second_moment(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p.iter().map(|c| (c * c) as f64).sum::<f64>() * w)
            .sum()
    }

    /// `[(point, weight)]` with points as tuples, in sorted order.
    fn items<'py>(&self, py: Python<'py>) -> PyResult<Vec<(Bound<'py, PyTuple>, f64)>> {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| Ok((PyTuple::new(py, p)?, w)))
            .collect()
    }

    /// Like `items` with exact `"p/q"` weights; None for float measures.
    fn exact_items<'py>(&self, py: Python<'py>) -> PyResult<Option<Vec<(Bound<'py, PyTuple>, String)>>> {
        let Some(exact) = &self.exact else {
            return Ok(None);
        };
        let items = self
            .points
            .iter()
            .zip(exact)
            .map(|(p, w)| Ok((PyTuple::new(py, p)?, w.clone())))
            .collect::<PyResult<_>>()?;
        Ok(Some(items))
    }

    /// Weight at `point`, zero off the support.
    fn get(&self, point: Vec<i64>) -> PyResult<f64> {
        if point.len() != self.dim {
            return Err(PyValueError::new_err(format!("expected a point in {} dimensions", self.dim)));
        }
        Ok(self.index(&point).map_or(0.0, |i| self.weights[i]))
    }

    fn __getitem__(&self, point: Vec<i64>) -> PyResult<f64> {
        self.get(point)
    }

    fn __len__(&self) -> usize {
        self.points.len()
    }

    fn __repr__(&self) -> String {
        format!("Measure(dim={}, support={}, mass={})", self.dim, self.points.len(), self.mass)
    }
}

/// Connectivity C_n(x) of n-step walks, by exact enumeration.
#[pyfunction]
#[pyo3(signature = (dim, lam, n, exact = false, budget = DEFAULT_BUDGET))]
fn connectivity(py: Python<'_>, dim: usize, lam: Lambda, n: usize, exact: bool, budget: u128) -> PyResult<Measure> {
    if exact {
        let p = model::<Rational>(dim, &lam, n)?;
        let m = py.detach(|| enumerate_connectivity(&p, n, budget)).map_err(to_py_err)?;
        Ok(Measure::from_core(&m, true))
    } else {
        let p = model::<f64>(dim, &lam, n)?;
        let m = py.detach(|| enumerate_connectivity(&p, n, budget)).map_err(to_py_err)?;
        Ok(Measure::from_core(&m, false))
    }
}

fn lace_measure<T: Scalar>(dim: usize, lambda: &T, m: usize, order: Option<usize>, budget: u128) -> lacelab::Result<SignedMeasure<T>> {
    let table = PiTable::enumerate(dim, m, budget)?;
    table.measure(m, lambda, order)
}

/// Lace function Pi_m(x), optionally truncated to laces with at most
/// `order` edges.
#[pyfunction]
#[pyo3(signature = (dim, lam, m, order = None, exact = false, budget = DEFAULT_BUDGET))]
fn lace_function(
    py: Python<'_>,
    dim: usize,
    lam: Lambda,
    m: usize,
    order: Option<usize>,
    exact: bool,
    budget: u128,
) -> PyResult<Measure> {
    if m == 0 {
        return Err(PyValueError::new_err("m must be positive"));
    }
    if exact {
        let p = model::<Rational>(dim, &lam, m)?;
        let out = py.detach(|| lace_measure(dim, &p.lambda, m, order, budget)).map_err(to_py_err)?;
        Ok(Measure::from_core(&out, true))
    } else {
        let p = model::<f64>(dim, &lam, m)?;
        let out = py.detach(|| lace_measure(dim, &p.lambda, m, order, budget)).map_err(to_py_err)?;
        Ok(Measure::from_core(&out, false))
    }
}

/// Laces on [0, m] as dicts with `order`, `edges` and `compatible` edge lists.
#[pyfunction]
#[pyo3(signature = (m, order = None))]
fn laces<'py>(py: Python<'py>, m: u32, order: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    if m == 0 {
        return Err(PyValueError::new_err("m must be positive"));
    }
    let pair = |e: &lacelab::laces::Edge| [e.s(), e.t()];
    let mut out = Vec::new();
    for k in 1..=order.unwrap_or(m as usize) {
        for lace in enumerate_laces(0, m, k) {
            let edges: Vec<_> = lace.chain().iter().map(pair).collect();
            let compatible: Vec<_> = compatible_edges(&lace).iter().map(pair).collect();
            out.push(serde_json::json!({ "order": k, "edges": edges, "compatible": compatible }));
        }
    }
    json_to_py(py, &serde_json::Value::Array(out))
}

/// Exact check of the lace-expansion recursion at each 1 <= n <= n_max.
/// Returns `{"holds": bool, "levels": [...]}`.
#[pyfunction]
#[pyo3(signature = (dim, lam, n_max, budget = DEFAULT_BUDGET))]
fn verify_recursion<'py>(py: Python<'py>, dim: usize, lam: Lambda, n_max: usize, budget: u128) -> PyResult<Bound<'py, PyAny>> {
    let p = model::<Rational>(dim, &lam, n_max)?;
    let reports = py
        .detach(|| (1..=n_max).map(|n| verify_lace_recursion(&p, n, budget)).collect::<lacelab::Result<Vec<_>>>())
        .map_err(to_py_err)?;
    let holds = reports.iter().all(|r| r.holds);
    json_to_py(py, &serde_json::json!({ "holds": holds, "levels": to_json(&reports)? }))
}

/// Walk and lace-function counts to a fixed depth, enumerated once and
/// reused for any interaction strength.
#[pyclass(frozen, module = "pylacelab")]
struct SawTables {
    inner: CoreTables,
}

#[pymethods]
impl SawTables {
    #[new]
    #[pyo3(signature = (dim, depth, budget = DEFAULT_BUDGET))]
    fn new(py: Python<'_>, dim: usize, depth: usize, budget: u128) -> PyResult<Self> {
        let inner = py.detach(|| CoreTables::enumerate(dim, depth, budget)).map_err(to_py_err)?;
        Ok(SawTables { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.m_max()
    }

    /// Full pipeline at one interaction strength: kernel, mass sequence,
    /// constants, error table and growth rows, as a dict.
    #[pyo3(signature = (lam, seq_len = 32, clt_n_max = None, nu = None, force = false, keep_rows = false))]
    fn report<'py>(
        &self,
        py: Python<'py>,
        lam: Lambda,
        seq_len: usize,
        clt_n_max: Option<usize>,
        nu: Option<f64>,
        force: bool,
        keep_rows: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let lambda = model::<f64>(self.inner.dim(), &lam, self.inner.m_max())?.lambda;
        let opts = PipelineOptions {
            n_max: seq_len,
            clt_n_max,
            nu,
            solve: SolveOptions {
                force,
                ..SolveOptions::default()
            },
            keep_rows,
        };
        let rep = py.detach(|| saw_pipeline_with(&self.inner, lambda, &opts)).map_err(to_py_err)?;
        json_to_py(py, &to_json(&rep)?)
    }

    fn __repr__(&self) -> String {
        format!("SawTables(dim={}, depth={})", self.inner.dim(), self.inner.m_max())
    }
}

/// Symmetric, mass-one step distribution of bounded range.
#[pyclass(frozen, module = "pylacelab")]
struct StepLaw {
    inner: CoreStepLaw<f64>,
}

#[pymethods]
impl StepLaw {
    /// Stays put with probability 1 - p, else takes a nearest-neighbour step.
    #[staticmethod]
    fn lazy(dim: usize, p: f64) -> PyResult<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(PyValueError::new_err("p must lie in (0, 1]"));
        }
        Ok(StepLaw {
            inner: CoreStepLaw::lazy(dim, p).map_err(to_py_err)?,
        })
    }

    /// Simple random walk.
    #[staticmethod]
    fn simple(dim: usize) -> PyResult<Self> {
        Ok(StepLaw {
            inner: CoreStepLaw::simple(dim).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Per-coordinate variance.
    #[getter]
    fn eta(&self) -> f64 {
        *self.inner.eta()
    }

    /// Range in the sup norm.
    #[getter]
    fn ell(&self) -> i64 {
        self.inner.ell()
    }

    #[getter]
    fn is_periodic(&self) -> bool {
        self.inner.is_periodic()
    }

    /// n-fold convolution power.
    #[pyo3(signature = (n, budget = DEFAULT_BUDGET))]
    fn power(&self, py: Python<'_>, n: usize, budget: u128) -> PyResult<Measure> {
        let m = py.detach(|| conv_power(&self.inner, n, budget)).map_err(to_py_err)?;
        Ok(Measure::from_core(&m, false))
    }

    /// Weighted sup-error of the n-step law against the Gaussian for each n,
    /// with the fitted decay exponent. `nu_prime` defaults to 2 eta.
    #[pyo3(signature = (n_list, nu_prime = None, budget = DEFAULT_BUDGET))]
    fn lclt_scan<'py>(&self, py: Python<'py>, n_list: Vec<usize>, nu_prime: Option<f64>, budget: u128) -> PyResult<Bound<'py, PyAny>> {
        let nu = nu_prime.unwrap_or(2.0 * *self.inner.eta());
        let rep = py.detach(|| lclt_error_scan(&self.inner, &n_list, nu, budget)).map_err(to_py_err)?;
        json_to_py(py, &to_json(&rep)?)
    }
}

#[pymodule]
pub fn pylacelab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("DEFAULT_BUDGET", DEFAULT_BUDGET)?;
    m.add_class::<Measure>()?;
    m.add_class::<SawTables>()?;
    m.add_class::<StepLaw>()?;
    m.add_function(wrap_pyfunction!(connectivity, m)?)?;
    m.add_function(wrap_pyfunction!(lace_function, m)?)?;
    m.add_function(wrap_pyfunction!(laces, m)?)?;
    m.add_function(wrap_pyfunction!(verify_recursion, m)?)?;
    Ok(())
}
