//! Python bindings: model parameters, chart maps, the complete flow and the
//! verification helpers, with vectors passed as lists of floats.

use mcgehee::chart::{self, ChartPoint, ExtendedPoint};
use mcgehee::model::{self, PhasePoint};
use mcgehee::verify;
use mcgehee::Error;
use nalgebra::DVector;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

pyo3::create_exception!(mcgehee_py, NoPericenterError, PyArithmeticError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParams(_) | Error::Dimension { .. } | Error::Domain(_) | Error::OutsideChart(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::NotOnCollisionCourse(_) | Error::Unsupported(_) => PyValueError::new_err(e.to_string()),
        Error::NoPericenter(_) => NoPericenterError::new_err(e.to_string()),
        Error::StepFailure(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn point(q: Vec<f64>, p: Vec<f64>) -> PyResult<PhasePoint> {
    if q.len() != p.len() {
        return Err(PyValueError::new_err(format!("q has {} components but p has {}", q.len(), p.len())));
    }
    Ok(PhasePoint::new(q, p))
}

fn list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[pyclass(name = "ModelParams", module = "mcgehee_py", from_py_object)]
#[derive(Clone)]
pub struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (n, d, m = 1.0, Z = 1.0, eps = 0.1))]
    #[allow(non_snake_case)]
    fn new(n: u32, d: usize, m: f64, Z: f64, eps: f64) -> PyResult<Self> {
        Ok(PyModelParams { inner: model::ModelParams::new(n, d, m, Z, eps).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> u32 {
        self.inner.n
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    #[getter(Z)]
    fn z(&self) -> f64 {
        self.inner.z
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    fn potential_at_radius(&self, r: f64) -> f64 {
        self.inner.potential_at_radius(r)
    }

    /// Upper bound on the time an orbit spends in the chart domain.
    fn transit_bound(&self) -> f64 {
        self.inner.transit_bound()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("ModelParams(n={}, d={}, m={}, Z={}, eps={})", p.n, p.d, p.m, p.z, p.eps)
    }
}

#[pyclass(name = "ChartPoint", module = "mcgehee_py", from_py_object)]
#[derive(Clone)]
pub struct PyChartPoint {
    inner: ChartPoint,
}

#[pymethods]
impl PyChartPoint {
    #[new]
    fn new(t: f64, h: f64, a: Vec<f64>, b: Vec<f64>) -> Self {
        PyChartPoint { inner: ChartPoint { t, h, a: DVector::from_vec(a), b: DVector::from_vec(b) } }
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        list(&self.inner.a)
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        list(&self.inner.b)
    }

    fn __repr__(&self) -> String {
        format!("ChartPoint(t={}, h={}, a={:?}, b={:?})", self.inner.t, self.inner.h, self.a(), self.b())
    }
}

/// A phase point or a collision state `(h, a)`.
#[pyclass(name = "ExtendedPoint", module = "mcgehee_py", from_py_object)]
#[derive(Clone)]
pub struct PyExtendedPoint {
    inner: ExtendedPoint,
}

#[pymethods]
impl PyExtendedPoint {
    #[staticmethod]
    fn regular(q: Vec<f64>, p: Vec<f64>) -> PyResult<Self> {
        Ok(PyExtendedPoint { inner: ExtendedPoint::Regular(point(q, p)?) })
    }

    #[staticmethod]
    fn collision(h: f64, a: Vec<f64>) -> Self {
        PyExtendedPoint { inner: ExtendedPoint::Collision { h, a: DVector::from_vec(a) } }
    }

    #[getter]
    fn is_collision(&self) -> bool {
        matches!(self.inner, ExtendedPoint::Collision { .. })
    }

    /// Position; the origin for a collision state.
    #[getter]
    fn q(&self) -> Vec<f64> {
        list(&chart::project_to_config(&self.inner))
    }

    /// Momentum, or `None` at a collision.
    #[getter]
    fn p(&self) -> Option<Vec<f64>> {
        self.inner.as_regular().map(|x| list(&x.p))
    }

    fn energy(&self, params: &PyModelParams) -> PyResult<f64> {
        self.inner.energy(&params.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            ExtendedPoint::Regular(x) => format!("ExtendedPoint.regular({:?}, {:?})", list(&x.q), list(&x.p)),
            ExtendedPoint::Collision { h, a } => format!("ExtendedPoint.collision({h}, {:?})", list(a)),
        }
    }
}

#[pyfunction]
fn hamiltonian(params: &PyModelParams, q: Vec<f64>, p: Vec<f64>) -> PyResult<f64> {
    model::hamiltonian(&params.inner, &point(q, p)?).map_err(to_py)
}

#[pyfunction]
fn angular_momentum(q: Vec<f64>, p: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let l = model::angular_momentum(&point(q, p)?);
    let d = l.0.nrows();
    Ok((0..d).map(|i| (0..d).map(|j| l.get(i, j)).collect()).collect())
}

#[pyfunction]
fn l_squared(q: Vec<f64>, p: Vec<f64>) -> PyResult<f64> {
    Ok(model::l_squared_point(&point(q, p)?))
}

/// `(dq/dt, dp/dt)` at `(q, p)`.
#[pyfunction]
fn vector_field(params: &PyModelParams, q: Vec<f64>, p: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let f = model::vector_field(&params.inner, &point(q, p)?).map_err(to_py)?;
    Ok((list(&f.q), list(&f.p)))
}

#[pyfunction]
fn in_u_eps(params: &PyModelParams, q: Vec<f64>, p: Vec<f64>) -> PyResult<bool> {
    Ok(chart::in_u_eps(&params.inner, &point(q, p)?))
}

#[pyfunction]
fn chart_forward(params: &PyModelParams, q: Vec<f64>, p: Vec<f64>) -> PyResult<PyChartPoint> {
    Ok(PyChartPoint { inner: chart::chart_forward(&params.inner, &point(q, p)?).map_err(to_py)? })
}

#[pyfunction]
fn chart_inverse(params: &PyModelParams, c: &PyChartPoint) -> PyResult<PyExtendedPoint> {
    Ok(PyExtendedPoint { inner: chart::chart_inverse(&params.inner, &c.inner).map_err(to_py)? })
}

/// Flow for time `t` through collisions.
#[pyfunction]
fn global_flow(py: Python<'_>, params: &PyModelParams, x: &PyExtendedPoint, t: f64) -> PyResult<PyExtendedPoint> {
    let (p, x0) = (params.inner, x.inner.clone());
    let out = py.detach(move || chart::global_flow(&p, &x0, t)).map_err(to_py)?;
    Ok(PyExtendedPoint { inner: out })
}

#[pyfunction]
#[pyo3(name = "r_min")]
#[allow(non_snake_case)]
fn r_min_py(params: &PyModelParams, E: f64, l2: f64) -> PyResult<f64> {
    chart::r_min(&params.inner, E, l2).map_err(to_py)
}

/// Signed time since pericenter of a Kepler orbit in the chart domain.
#[pyfunction]
fn kepler_time(params: &PyModelParams, q: Vec<f64>, p: Vec<f64>) -> PyResult<f64> {
    chart::kepler_time_closed_form(&params.inner, &point(q, p)?).map_err(to_py)
}

/// Largest bracket-table residual and the measured sign of the `(A,B)` block.
#[pyfunction]
fn bracket_table(py: Python<'_>, params: &PyModelParams, q: Vec<f64>, p: Vec<f64>) -> PyResult<(f64, f64)> {
    let (par, x) = (params.inner, point(q, p)?);
    let r = py.detach(move || verify::bracket_table(&par, &x)).map_err(to_py)?;
    Ok((r.max_residual, r.measured_sign))
}

/// `(measured, bound)` for the transit starting at an inward point on `|q| = eps`.
#[pyfunction]
fn transit_time(params: &PyModelParams, q: Vec<f64>, p: Vec<f64>) -> PyResult<(f64, f64)> {
    let c = verify::transit_time_check(&params.inner, &point(q, p)?).map_err(to_py)?;
    Ok((c.measured, c.bound))
}

#[pyfunction]
fn chart_roundtrip_error(params: &PyModelParams, q: Vec<f64>, p: Vec<f64>) -> PyResult<f64> {
    verify::chart_roundtrip_error(&params.inner, &point(q, p)?).map_err(to_py)
}

#[pymodule]
fn mcgehee_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyChartPoint>()?;
    m.add_class::<PyExtendedPoint>()?;
    m.add("NoPericenterError", m.py().get_type::<NoPericenterError>())?;
    m.add_function(wrap_pyfunction!(hamiltonian, m)?)?;
    m.add_function(wrap_pyfunction!(angular_momentum, m)?)?;
    m.add_function(wrap_pyfunction!(l_squared, m)?)?;
    m.add_function(wrap_pyfunction!(vector_field, m)?)?;
    m.add_function(wrap_pyfunction!(in_u_eps, m)?)?;
    m.add_function(wrap_pyfunction!(chart_forward, m)?)?;
    m.add_function(wrap_pyfunction!(chart_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(global_flow, m)?)?;
    m.add_function(wrap_pyfunction!(r_min_py, m)?)?;
    m.add_function(wrap_pyfunction!(kepler_time, m)?)?;
    m.add_function(wrap_pyfunction!(bracket_table, m)?)?;
    m.add_function(wrap_pyfunction!(transit_time, m)?)?;
    m.add_function(wrap_pyfunction!(chart_roundtrip_error, m)?)?;
    Ok(())
}
