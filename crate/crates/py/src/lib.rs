//! Python module `degenbeam`.
//!
//! Node vectors cross the boundary as lists of floats of length `n + 1`.
//! Invalid input raises `ValueError`; numerical failures raise `RuntimeError`.

use degenbeam::dynamics::TimeGrid;
use degenbeam::observability::identity_residuals;
use degenbeam::{
    estimate_ct, make_power_profile, observability_bounds, synthesize_control, BeamModel, BeamState, ControlProblem,
    ControlSettings, DegeneracyClass, DegeneracyProfile, Error, ModalBasis,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

type Res<T> = PyResult<T>;

fn fitted(t_final: f64, dt: f64) -> Res<TimeGrid> {
    TimeGrid::fitted(t_final, dt).map_err(to_py)
}

/// Coefficient `a(x)` with `a(0) = 0`.
#[pyclass(name = "Profile", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyProfile {
    inner: DegeneracyProfile,
}

#[pymethods]
impl PyProfile {
    /// `scale · x^alpha`.
    #[staticmethod]
    #[pyo3(signature = (alpha, scale = 1.0))]
    fn power(alpha: f64, scale: f64) -> Res<Self> {
        Ok(Self {
            inner: make_power_profile(alpha, scale).map_err(to_py)?,
        })
    }

    /// Cubic Hermite interpolant of `(x, a, a')` knots.
    #[staticmethod]
    #[pyo3(signature = (knots, scale = 1.0))]
    fn table(knots: Vec<[f64; 3]>, scale: f64) -> Res<Self> {
        Ok(Self {
            inner: DegeneracyProfile::from_table(&knots, scale).map_err(to_py)?,
        })
    }

    /// Constant coefficient; not degenerate, so it cannot be classified.
    #[staticmethod]
    #[pyo3(signature = (scale = 1.0))]
    fn uniform(scale: f64) -> Res<Self> {
        Ok(Self {
            inner: DegeneracyProfile::uniform(scale).map_err(to_py)?,
        })
    }

    fn value(&self, x: f64) -> f64 {
        self.inner.value(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.inner.derivative(x)
    }

    fn __repr__(&self) -> String {
        format!("Profile({})", self.inner.describe())
    }
}

#[pyclass(name = "Classification", frozen, skip_from_py_object, get_all)]
#[derive(Clone, Debug)]
pub struct PyClassification {
    #[pyo3(name = "K")]
    pub k: f64,
    /// `"WD"` or `"SD"`.
    pub regime: String,
    pub a_at_1: f64,
    #[pyo3(name = "T0")]
    pub t0: f64,
}

impl From<DegeneracyClass> for PyClassification {
    fn from(c: DegeneracyClass) -> Self {
        Self {
            k: c.k,
            regime: c.regime.to_string(),
            a_at_1: c.a_at_1,
            t0: degenbeam::observability_time(&c),
        }
    }
}

#[pymethods]
impl PyClassification {
    fn __repr__(&self) -> String {
        format!(
            "Classification(K={}, regime={}, a_at_1={}, T0={})",
            self.k, self.regime, self.a_at_1, self.t0
        )
    }
}

#[pyclass(name = "Simulation", frozen, skip_from_py_object, get_all)]
#[derive(Clone, Debug)]
pub struct PySimulation {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// `y_xx(t, 1)` at every step.
    pub trace: Vec<f64>,
    pub final_position: Vec<f64>,
    pub final_velocity: Vec<f64>,
    pub max_relative_energy_drift: f64,
}

#[pyclass(name = "ObservabilityEstimate", frozen, skip_from_py_object, get_all)]
#[derive(Clone, Debug)]
pub struct PyObservability {
    #[pyo3(name = "T")]
    pub t_final: f64,
    pub dt: f64,
    #[pyo3(name = "T0")]
    pub t0: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    #[pyo3(name = "C_T_estimate")]
    pub c_t_estimate: f64,
    #[pyo3(name = "c_T")]
    pub cost: Option<f64>,
    pub quotients: Vec<f64>,
}

#[pyclass(name = "ControlResult", frozen, skip_from_py_object, get_all)]
#[derive(Clone, Debug)]
pub struct PyControl {
    pub times: Vec<f64>,
    /// Boundary control `f(t)` applied as `u_xx(t, 1)`.
    pub control: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub cg_residual: f64,
    pub converged: bool,
    pub energy_reduction: f64,
    pub initial_energy: f64,
    pub terminal_energy: f64,
    pub control_cost: f64,
    pub warnings: Vec<String>,
}

/// Discretized degenerate beam on `n` cells.
#[pyclass(name = "Model", frozen, skip_from_py_object)]
pub struct PyModel {
    inner: BeamModel,
}

impl PyModel {
    fn state(&self, y: Vec<f64>, v: Vec<f64>) -> Res<BeamState> {
        BeamState::new(self.inner.grid(), y, v, 0.0).map_err(to_py)
    }
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(profile: &PyProfile, n: usize) -> Res<Self> {
        Ok(Self {
            inner: BeamModel::new(profile.inner.clone(), n).map_err(to_py)?,
        })
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.inner.grid().nodes().to_vec()
    }

    fn classify(&self) -> Res<PyClassification> {
        Ok(self.inner.classify().map_err(to_py)?.into())
    }

    fn energy(&self, y: Vec<f64>, v: Vec<f64>) -> Res<f64> {
        Ok(self.inner.energy(&self.state(y, v)?))
    }

    /// Lowest `count` eigenvalues and unit weighted-norm node vectors.
    fn modes(&self, count: usize) -> Res<(Vec<f64>, Vec<Vec<f64>>)> {
        let basis = ModalBasis::compute(&self.inner, count).map_err(to_py)?;
        let vecs = (0..count).map(|k| basis.mode(k).to_vec()).collect();
        Ok((basis.eigenvalues().to_vec(), vecs))
    }

    /// Homogeneous solve to `T` with steps no longer than `dt`.
    #[pyo3(name = "simulate")]
    fn simulate(&self, y: Vec<f64>, v: Vec<f64>, t_final: f64, dt: f64) -> Res<PySimulation> {
        let initial = self.state(y, v)?;
        let time = fitted(t_final, dt)?;
        let e0 = self.inner.energy(&initial);
        let mut out = PySimulation {
            times: Vec::with_capacity(time.steps() + 1),
            energies: Vec::with_capacity(time.steps() + 1),
            trace: Vec::with_capacity(time.steps() + 1),
            final_position: Vec::new(),
            final_velocity: Vec::new(),
            max_relative_energy_drift: 0.0,
        };
        let last = self
            .inner
            .propagate(&initial, time, |k, s| {
                let e = self.inner.energy(s);
                out.times.push(time.time(k));
                out.energies.push(e);
                out.trace.push(self.inner.trace(&s.y));
                if e0 > 0.0 {
                    out.max_relative_energy_drift = out.max_relative_energy_drift.max(((e - e0) / e0).abs());
                }
            })
            .map_err(to_py)?;
        out.final_position = last.y;
        out.final_velocity = last.v;
        Ok(out)
    }

    /// Relative residuals of the two boundary-trace identities.
    fn identities(&self, y: Vec<f64>, v: Vec<f64>, t_final: f64, dt: f64) -> Res<(f64, f64)> {
        let initial = self.state(y, v)?;
        let (a, b) = identity_residuals(&self.inner, &initial, fitted(t_final, dt)?).map_err(to_py)?;
        Ok((a.relative_residual, b.relative_residual))
    }

    #[pyo3(signature = (t_final, dt, mode_count = 10, samples = 100, seed = 0))]
    fn estimate_ct(&self, t_final: f64, dt: f64, mode_count: usize, samples: usize, seed: u64) -> Res<PyObservability> {
        let r = estimate_ct(&self.inner, fitted(t_final, dt)?, mode_count, samples, seed).map_err(to_py)?;
        Ok(PyObservability {
            t_final: r.t_final,
            dt: r.dt,
            t0: r.t0,
            lower_bound: r.lower_bound,
            upper_bound: r.upper_bound,
            c_t_estimate: r.c_t_estimate,
            cost: r.cost,
            quotients: r.quotients,
        })
    }

    /// HUM control driving `(u0, u1)` to rest at `T`.
    #[pyo3(signature = (u0, u1, t_final, dt, filter_modes = 10, cg_tol = 1e-10, max_iter = 500, tikhonov = 0.0, allow_short_horizon = false))]
    #[allow(clippy::too_many_arguments)]
    fn synthesize_control(
        &self,
        u0: Vec<f64>,
        u1: Vec<f64>,
        t_final: f64,
        dt: f64,
        filter_modes: usize,
        cg_tol: f64,
        max_iter: usize,
        tikhonov: f64,
        allow_short_horizon: bool,
    ) -> Res<PyControl> {
        let time = fitted(t_final, dt)?;
        let settings = ControlSettings {
            filter_modes,
            cg_tol,
            max_iter,
            tikhonov,
            allow_short_horizon,
        };
        let problem = ControlProblem::new(self.inner.clone(), u0, u1, time, settings).map_err(to_py)?;
        let sol = synthesize_control(&problem).map_err(to_py)?;
        Ok(PyControl {
            times: (0..=time.steps()).map(|k| time.time(k)).collect(),
            control: sol.control.samples,
            coefficients: sol.coefficients,
            iterations: sol.iterations,
            cg_residual: sol.cg_residual,
            converged: sol.converged,
            energy_reduction: sol.energy_reduction,
            initial_energy: sol.initial_energy,
            terminal_energy: sol.terminal_energy,
            control_cost: sol.control_cost,
            warnings: sol.warnings,
        })
    }
}

/// `T0` for exponent `K` and `a(1)`.
#[pyfunction]
#[pyo3(name = "observability_time", signature = (k, a_at_1 = 1.0))]
fn py_observability_time(k: f64, a_at_1: f64) -> Res<f64> {
    let cls = DegeneracyClass::new(k, a_at_1).map_err(to_py)?;
    Ok(degenbeam::observability_time(&cls))
}

/// `(lower, upper)` bounds on the observability constant at horizon `T`.
#[pyfunction]
#[pyo3(name = "observability_bounds", signature = (k, t_final, a_at_1 = 1.0))]
fn py_observability_bounds(k: f64, t_final: f64, a_at_1: f64) -> Res<(f64, f64)> {
    let cls = DegeneracyClass::new(k, a_at_1).map_err(to_py)?;
    Ok(observability_bounds(&cls, t_final))
}

#[pymodule]
#[pyo3(name = "degenbeam")]
fn degenbeam_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProfile>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyClassification>()?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PyObservability>()?;
    m.add_class::<PyControl>()?;
    m.add_function(wrap_pyfunction!(py_observability_time, m)?)?;
    m.add_function(wrap_pyfunction!(py_observability_bounds, m)?)?;
    Ok(())
}
