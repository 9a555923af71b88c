use evans_parity::dichotomy::{has_dichotomy as rs_has_dichotomy, DichotomyConfig, HalfAxis};
use evans_parity::evans::{self, CriticalKind, EvansConfig};
use evans_parity::homoclinic::{self, HomoclinicConfig};
use evans_parity::ode::{transition_matrix as rs_transition_matrix, IntegratorConfig};
use evans_parity::spectrum::dichotomy_spectrum;
use evans_parity::{load_model, ModelSpec};
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(evans_parity, EvansParityError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    EvansParityError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

/// A model: right-hand side, Jacobian and reference branch.
#[pyclass(name = "Model", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: load_model(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn example10() -> Self {
        PyModel {
            inner: ModelSpec::example10(),
        }
    }

    /// Block system with coupling entries given as expressions in `lambda`
    /// (row-major, n*n strings).
    #[staticmethod]
    #[pyo3(signature = (n, alpha, coupling))]
    fn example9(n: usize, alpha: f64, coupling: Vec<String>) -> PyResult<Self> {
        let c: Vec<&str> = coupling.iter().map(String::as_str).collect();
        Ok(PyModel {
            inner: ModelSpec::example9(n, alpha, &c).map_err(err)?,
        })
    }

    #[staticmethod]
    fn proto(nu: f64, mu: f64) -> PyResult<Self> {
        Ok(PyModel {
            inner: ModelSpec::proto(nu, mu).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints().to_vec()
    }

    #[getter]
    fn param_domain(&self) -> (f64, f64) {
        let [a, b] = self.inner.param_domain();
        (a, b)
    }

    fn rhs(&self, t: f64, x: Vec<f64>, lam: f64) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self
            .inner
            .rhs_vec(t, &x, lam)
            .map_err(err)?
            .as_slice()
            .to_vec())
    }

    fn jacobian(&self, t: f64, x: Vec<f64>, lam: f64) -> PyResult<Vec<Vec<f64>>> {
        self.check_dim(&x)?;
        Ok(rows(&self.inner.jacobian(t, &x, lam).map_err(err)?))
    }

    fn branch(&self, lam: f64, t: f64) -> PyResult<Vec<f64>> {
        Ok(self.inner.branch(lam, t).map_err(err)?.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(name={:?}, dimension={})",
            self.inner.name(),
            self.inner.dimension()
        )
    }
}

impl PyModel {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dimension() {
            return Err(PyValueError::new_err(format!(
                "state has length {}, model dimension is {}",
                x.len(),
                self.inner.dimension()
            )));
        }
        Ok(())
    }
}

/// Φ(t, s) of the variation equation at `lam`.
#[pyfunction]
#[pyo3(signature = (model, lam, s, t, rel_tol = 1e-10))]
fn transition_matrix(
    py: Python<'_>,
    model: &PyModel,
    lam: f64,
    s: f64,
    t: f64,
    rel_tol: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = IntegratorConfig {
        rel_tol,
        abs_tol: 1e-2 * rel_tol,
        ..IntegratorConfig::default()
    };
    let m = model.inner.clone();
    let phi = py
        .detach(move || rs_transition_matrix(&m, lam, s, t, &cfg))
        .map_err(err)?;
    Ok(rows(&phi.value))
}

/// Dichotomy spectrum as a list of dicts with keys lo, hi, multiplicity, merged.
#[pyfunction]
#[pyo3(signature = (model, lam, gamma_range = None, resolution = 1e-3, horizon = 10.0))]
fn spectrum<'py>(
    py: Python<'py>,
    model: &PyModel,
    lam: f64,
    gamma_range: Option<(f64, f64)>,
    resolution: f64,
    horizon: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let m = model.inner.clone();
    let s = py
        .detach(move || {
            dichotomy_spectrum(
                &m,
                lam,
                gamma_range.map(|(a, b)| [a, b]),
                resolution,
                horizon,
                &DichotomyConfig::default(),
            )
        })
        .map_err(err)?;
    s.intervals
        .iter()
        .map(|i| {
            let d = PyDict::new(py);
            d.set_item("lo", i.lo)?;
            d.set_item("hi", i.hi)?;
            d.set_item("multiplicity", i.multiplicity)?;
            d.set_item("merged", i.merged)?;
            Ok(d)
        })
        .collect()
}

/// Whole-line dichotomy test of the γ-shifted variation equation.
#[pyfunction]
#[pyo3(signature = (model, lam, gamma = 0.0, horizon = 10.0))]
fn has_dichotomy<'py>(
    py: Python<'py>,
    model: &PyModel,
    lam: f64,
    gamma: f64,
    horizon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = model.inner.clone();
    let v = py
        .detach(move || {
            rs_has_dichotomy(
                &m,
                lam,
                gamma,
                HalfAxis::Whole,
                horizon,
                &DichotomyConfig::default(),
            )
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("dichotomic", v.dichotomic)?;
    d.set_item("gap", v.gap)?;
    d.set_item("morse_index", v.morse_index)?;
    d.set_item("min_angle", v.min_angle)?;
    Ok(d)
}

/// Evans function sampled on a λ grid.
#[pyclass(name = "EvansCurve", frozen)]
struct PyEvansCurve {
    inner: evans::EvansCurve,
}

#[pymethods]
impl PyEvansCurve {
    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid.clone()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn morse_index(&self) -> (usize, usize) {
        (self.inner.morse_plus, self.inner.morse_minus)
    }

    #[getter]
    fn zero_tol(&self) -> f64 {
        self.inner.zero_tol
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn evaluate_at(&self, lam: f64) -> PyResult<f64> {
        Ok(self.inner.evaluate_at(lam).map_err(err)?.value)
    }

    /// σ over the whole interval, or over [lo, hi] when both are given.
    #[pyo3(signature = (lo = None, hi = None))]
    fn parity(&self, lo: Option<f64>, hi: Option<f64>) -> PyResult<i8> {
        let r = match (lo, hi) {
            (Some(a), Some(b)) => self.inner.parity_between(a, b),
            (None, None) => evans::parity(&self.inner),
            _ => return Err(PyValueError::new_err("give both lo and hi or neither")),
        };
        Ok(r.map_err(err)?.value)
    }

    fn parity_index(&self, lam: f64) -> PyResult<i8> {
        Ok(evans::parity_index(&self.inner, lam).map_err(err)?.value)
    }

    /// List of dicts with keys lambda, parity_index (None if undefined), kind.
    fn critical_values<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let cv = self.inner.find_critical_values().map_err(err)?;
        cv.iter()
            .map(|c| {
                let d = PyDict::new(py);
                d.set_item("lambda", c.lambda)?;
                d.set_item("parity_index", c.parity_index)?;
                d.set_item(
                    "kind",
                    match c.kind {
                        CriticalKind::SignChange => "sign_change",
                        CriticalKind::InconclusiveZero => "inconclusive_zero",
                    },
                )?;
                Ok(d)
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.grid.len()
    }
}

#[pyfunction]
#[pyo3(signature = (model, a, b, grid = 101, horizon = 10.0, anchor_seed = None))]
fn evans_curve(
    py: Python<'_>,
    model: &PyModel,
    a: f64,
    b: f64,
    grid: usize,
    horizon: f64,
    anchor_seed: Option<u64>,
) -> PyResult<PyEvansCurve> {
    let cfg = EvansConfig {
        horizon,
        anchor_seed,
        ..EvansConfig::default()
    };
    let m = model.inner.clone();
    let inner = py
        .detach(move || evans::evans_curve(&m, [a, b], grid, &cfg))
        .map_err(err)?;
    Ok(PyEvansCurve { inner })
}

#[pyfunction]
#[pyo3(signature = (model, lam, horizon = 10.0))]
fn geometric_multiplicity(
    py: Python<'_>,
    model: &PyModel,
    lam: f64,
    horizon: f64,
) -> PyResult<usize> {
    let m = model.inner.clone();
    py.detach(move || evans::geometric_multiplicity(&m, lam, horizon, &EvansConfig::default()))
        .map_err(err)
}

/// Parity sgn det M(a) · sgn det M(b) of a matrix path given as a callable.
#[pyfunction]
#[pyo3(signature = (path, a, b, partition = Vec::new()))]
fn finite_dim_parity(path: Bound<'_, PyAny>, a: f64, b: f64, partition: Vec<f64>) -> PyResult<i8> {
    let mut failure: Option<PyErr> = None;
    let eval = |l: f64| -> DMatrix<f64> {
        let m = path
            .call1((l,))
            .and_then(|v| v.extract::<Vec<Vec<f64>>>())
            .and_then(|r| from_rows(&r));
        match m {
            Ok(m) => m,
            Err(e) => {
                failure.get_or_insert(e);
                DMatrix::from_element(1, 1, f64::NAN)
            }
        }
    };
    let r = {
        let cell = std::cell::RefCell::new(eval);
        evans::finite_dim_parity(|l| (cell.borrow_mut())(l), a, b, &partition)
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let r = r.map_err(err)?;
    if r.partition_consistent == Some(false) {
        return Err(err("partition product disagrees with the endpoint formula"));
    }
    Ok(r.result.value)
}

/// Converged homoclinic solution y = x − φ_λ on [−T, T].
#[pyclass(name = "HomoclinicSolution", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHomoclinic {
    inner: homoclinic::HomoclinicSolution,
}

#[pymethods]
impl PyHomoclinic {
    #[getter(lambda_)]
    fn lambda(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid.clone()
    }

    #[getter]
    fn y(&self) -> Vec<Vec<f64>> {
        self.inner.y.clone()
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.amplitude
    }

    #[getter]
    fn boundary_angles(&self) -> (f64, f64) {
        (self.inner.boundary_angles[0], self.inner.boundary_angles[1])
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "HomoclinicSolution(lambda={}, amplitude={:.6e}, residual={:.2e})",
            self.inner.lambda, self.inner.amplitude, self.inner.residual
        )
    }
}

/// Solve the homoclinic boundary-value problem from a sampled guess
/// (`times` increasing, `values[k]` the guess for y at `times[k]`).
#[pyfunction]
#[pyo3(signature = (model, lam, times, values, horizon = 12.0))]
fn solve_homoclinic(
    py: Python<'_>,
    model: &PyModel,
    lam: f64,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    horizon: f64,
) -> PyResult<PyHomoclinic> {
    if times.len() != values.len() || times.is_empty() {
        return Err(PyValueError::new_err(
            "times and values must be non-empty and of equal length",
        ));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PyValueError::new_err("times must be strictly increasing"));
    }
    let m = model.inner.clone();
    let inner = py
        .detach(move || {
            let samples = homoclinic::HomoclinicSolution {
                lambda: lam,
                horizon,
                grid: times,
                y: values,
                residual: f64::NAN,
                amplitude: f64::NAN,
                newton_iterations: 0,
                boundary_angles: [f64::NAN; 2],
            };
            let guess = |t: f64| -> DVector<f64> { samples.interpolate(t) };
            homoclinic::solve_homoclinic(&m, lam, horizon, &guess, &HomoclinicConfig::default())
        })
        .map_err(err)?;
    Ok(PyHomoclinic { inner })
}

/// First branch point at λ* + direction·step, seeded along the kernel.
#[pyfunction]
#[pyo3(signature = (model, lambda_star, direction, step, horizon = 12.0))]
fn seed_branch(
    py: Python<'_>,
    model: &PyModel,
    lambda_star: f64,
    direction: f64,
    step: f64,
    horizon: f64,
) -> PyResult<PyHomoclinic> {
    let m = model.inner.clone();
    let inner = py
        .detach(move || {
            homoclinic::seed_from_kernel(
                &m,
                lambda_star,
                direction,
                step,
                horizon,
                &HomoclinicConfig::default(),
            )
        })
        .map_err(err)?;
    Ok(PyHomoclinic { inner })
}

/// Continue a solution to `lam_end`; the seed is not included.
#[pyfunction]
fn trace_branch(
    py: Python<'_>,
    model: &PyModel,
    seed: &PyHomoclinic,
    lam_end: f64,
    step: f64,
) -> PyResult<Vec<PyHomoclinic>> {
    let m = model.inner.clone();
    let s = seed.inner.clone();
    let out = py
        .detach(move || {
            homoclinic::trace_branch(&m, lam_end, step, &s, &HomoclinicConfig::default())
        })
        .map_err(err)?;
    Ok(out
        .into_iter()
        .map(|inner| PyHomoclinic { inner })
        .collect())
}

#[pymodule(name = "evans_parity")]
fn evans_parity_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EvansParityError", m.py().get_type::<EvansParityError>())?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyEvansCurve>()?;
    m.add_class::<PyHomoclinic>()?;
    m.add_function(wrap_pyfunction!(transition_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(has_dichotomy, m)?)?;
    m.add_function(wrap_pyfunction!(evans_curve, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_multiplicity, m)?)?;
    m.add_function(wrap_pyfunction!(finite_dim_parity, m)?)?;
    m.add_function(wrap_pyfunction!(solve_homoclinic, m)?)?;
    m.add_function(wrap_pyfunction!(seed_branch, m)?)?;
    m.add_function(wrap_pyfunction!(trace_branch, m)?)?;
    Ok(())
}
