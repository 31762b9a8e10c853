//! Null control at `x = 1` by the Hilbert Uniqueness Method.
//!
//! Everything lives on the span of the lowest `filter_modes` eigenmodes, in
//! the energy-normalized phase-space basis `W_j` of [`ModalBasis`]. For each
//! `W_j` the backward problem is solved once, giving its boundary trace
//! `O_j(t) = w_xx(t, 1)` and its value at `t = 0`. Then
//!
//! * `G_ij = ∫ O_i O_j dt` (time trapezoid) represents `Λ`,
//! * `b_j = ℒ(W_j) = ⟨u1, w_j(0)⟩ − ⟨u0, w_{j,t}(0)⟩` with the weighted
//!   `L²_{1/a}` pivot pairing for both terms,
//! * `(G + τ I) x = b` is solved by conjugate gradients and the control is
//!   `f = Σ x_j O_j`.
//!
//! The controlled terminal state is defined by transposition: for every `W`
//! in the filtered space, `⟨u_t(T), w⁰⟩ − ⟨u(T), w¹⟩ = ℒ(W) − ∫ f w_xx(·,1)`.
//! Reading this off on the basis gives the terminal modal coordinates
//! directly, so the discrete duality holds to roundoff by construction.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::Grid;
use crate::dynamics::{solve_backward_on, BeamState, TimeGrid, TraceSeries};
use crate::error::{Error, Result};
use crate::model::BeamModel;
use crate::modes::ModalBasis;
use crate::observability::trace_gramian;

#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub model: BeamModel,
    /// Initial position, node vector in `L²_{1/a}`.
    pub u0: Vec<f64>,
    /// Weighted-`L²` representative of the dual initial velocity.
    pub u1: Vec<f64>,
    pub time: TimeGrid,
    pub filter_modes: usize,
    pub cg_tol: f64,
    pub max_iter: usize,
    pub tikhonov: f64,
    pub warnings: Vec<String>,
}

/// Tunables of [`ControlProblem::new`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControlSettings {
    pub filter_modes: usize,
    pub cg_tol: f64,
    pub max_iter: usize,
    pub tikhonov: f64,
    /// Accept `T ≤ T₀`, recording a warning instead of failing.
    pub allow_short_horizon: bool,
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            filter_modes: 10,
            cg_tol: 1e-10,
            max_iter: 500,
            tikhonov: 0.0,
            allow_short_horizon: false,
        }
    }
}

fn check_node_vector(grid: &Grid, u: &[f64], name: &str) -> Result<()> {
    if u.len() != grid.len() {
        return Err(Error::InvalidParameter(format!(
            "{name} has {} entries, grid has {}",
            u.len(),
            grid.len()
        )));
    }
    if u[0] != 0.0 || u[grid.len() - 1] != 0.0 {
        return Err(Error::InvalidParameter(format!("{name} must vanish at both ends")));
    }
    if u.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
    }
    Ok(())
}

impl ControlProblem {
    pub fn new(
        model: BeamModel,
        u0: Vec<f64>,
        u1: Vec<f64>,
        time: TimeGrid,
        settings: ControlSettings,
    ) -> Result<Self> {
        check_node_vector(model.grid(), &u0, "u0")?;
        check_node_vector(model.grid(), &u1, "u1")?;
        let ControlSettings {
            filter_modes,
            cg_tol,
            max_iter,
            tikhonov,
            allow_short_horizon,
        } = settings;
        if filter_modes == 0 {
            return Err(Error::InvalidParameter("filter_modes must be at least 1".into()));
        }
        if filter_modes > model.operator().dim() {
            return Err(Error::TooManyModes {
                requested: filter_modes,
                available: model.operator().dim(),
            });
        }
        if !(cg_tol.is_finite() && cg_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cg_tol must be positive, got {cg_tol}"
            )));
        }
        if max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(tikhonov.is_finite() && tikhonov >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tikhonov must be >= 0, got {tikhonov}"
            )));
        }
        let t0 = model.observability_time()?;
        let mut warnings = Vec::new();
        if time.t_final() <= t0 {
            let msg = format!(
                "horizon T = {} does not exceed the observability time T0 = {t0}",
                time.t_final()
            );
            if !allow_short_horizon {
                return Err(Error::InvalidParameter(msg));
            }
            warnings.push(msg);
        }
        Ok(Self {
            model,
            u0,
            u1,
            time,
            filter_modes,
            cg_tol,
            max_iter,
            tikhonov,
            warnings,
        })
    }

    /// `½ (‖u0‖²_{L²_{1/a}} + ‖u1‖²_*)`, with the dual norm of `H²` taken
    /// through the pivot pairing: `‖u1‖²_* = zᵀ (h K)⁻¹ z`, `z = h u1 / a`.
    pub fn initial_energy(&self) -> Result<f64> {
        let quad = self.model.quadrature();
        let grid = self.model.grid();
        let op = self.model.operator();
        let h = grid.h();
        let z: Vec<f64> = grid
            .interior(&self.u1)
            .iter()
            .zip(op.profile_values())
            .map(|(u, a)| h * u / a)
            .collect();
        let k_inv_z = op.stiffness().factor()?.solve(&z);
        let dual: f64 = z.iter().zip(&k_inv_z).map(|(a, b)| a * b).sum::<f64>() / h;
        Ok(0.5 * (quad.weighted_inner(&self.u0, &self.u0) + dual))
    }
}

/// Filtered basis, its backward traces and the Gramian, for one `(model, T)`.
#[derive(Clone, Debug)]
pub struct HumSystem {
    basis: ModalBasis,
    time: TimeGrid,
    traces: Vec<TraceSeries>,
    initial_states: Vec<BeamState>,
    gramian: DMatrix<f64>,
}

impl HumSystem {
    /// One backward solve per basis element, run in parallel.
    pub fn assemble(model: &BeamModel, time: TimeGrid, filter_modes: usize) -> Result<Self> {
        let basis = ModalBasis::compute(model, filter_modes)?;
        let solved = (0..basis.phase_dim())
            .into_par_iter()
            .map(|j| {
                let traj = solve_backward_on(model, &basis.phase_state(j), time)?;
                let start = traj.states.into_iter().next().expect("non-empty trajectory");
                Ok((traj.trace, start))
            })
            .collect::<Result<Vec<_>>>()?;
        let (traces, initial_states): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
        let gramian = trace_gramian(&traces);
        Ok(Self {
            basis,
            time,
            traces,
            initial_states,
            gramian,
        })
    }

    pub fn basis(&self) -> &ModalBasis {
        &self.basis
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.traces.len()
    }

    pub fn gramian(&self) -> &DMatrix<f64> {
        &self.gramian
    }

    /// Backward trace of basis element `j`.
    pub fn basis_trace(&self, j: usize) -> &TraceSeries {
        &self.traces[j]
    }

    /// `O x`: trace of the backward solution from `Σ x_j W_j`.
    pub fn observe(&self, coords: &[f64]) -> TraceSeries {
        assert_eq!(coords.len(), self.dim());
        let mut out = TraceSeries::zeros(self.time);
        for (c, tr) in coords.iter().zip(&self.traces) {
            for (o, s) in out.samples.iter_mut().zip(&tr.samples) {
                *o += c * s;
            }
        }
        out
    }

    /// `Oᵀ M_t f`: the time-weighted trace pairing of `f` with each basis trace.
    pub fn observe_transpose(&self, f: &TraceSeries) -> Result<Vec<f64>> {
        if f.len() != self.time.steps() + 1 || (f.dt - self.time.dt()).abs() > 1e-15 * self.time.dt() {
            return Err(Error::TimeGridMismatch(format!(
                "control has {} samples with dt = {}, expected {} with dt = {}",
                f.len(),
                f.dt,
                self.time.steps() + 1,
                self.time.dt()
            )));
        }
        Ok(self.traces.iter().map(|tr| tr.inner(f)).collect())
    }

    /// `G x = Oᵀ M_t O x`, applied matrix free.
    pub fn gramian_apply(&self, coords: &[f64]) -> Vec<f64> {
        self.observe_transpose(&self.observe(coords))
            .expect("series built on the system's own time grid")
    }

    /// `b_j = ℒ(W_j)`.
    pub fn rhs_functional(&self, model: &BeamModel, u0: &[f64], u1: &[f64]) -> Vec<f64> {
        let quad = model.quadrature();
        self.initial_states
            .iter()
            .map(|w| quad.weighted_inner(u1, &w.y) - quad.weighted_inner(u0, &w.v))
            .collect()
    }

    /// Discrete transposition solution at `t = T` under control `f`.
    pub fn terminal_state(&self, model: &BeamModel, u0: &[f64], u1: &[f64], f: &TraceSeries) -> Result<TerminalState> {
        let b = self.rhs_functional(model, u0, u1);
        let of = self.observe_transpose(f)?;
        let g: Vec<f64> = b.iter().zip(&of).map(|(b, o)| b - o).collect();
        Ok(TerminalState::from_duality(&self.basis, &g))
    }

    /// Terminal state and norms for control `f`, compared with the free evolution.
    pub fn verify(&self, problem: &ControlProblem, f: &TraceSeries) -> Result<ControlVerification> {
        let controlled = self.terminal_state(&problem.model, &problem.u0, &problem.u1, f)?;
        let free = self.terminal_state(&problem.model, &problem.u0, &problem.u1, &TraceSeries::zeros(self.time))?;
        let terminal_energy = controlled.energy();
        let uncontrolled_terminal_energy = free.energy();
        let energy_reduction = if uncontrolled_terminal_energy > 0.0 {
            terminal_energy / uncontrolled_terminal_energy
        } else {
            0.0
        };
        Ok(ControlVerification {
            terminal_state_norm: controlled.state_norm(),
            terminal_velocity_norm: controlled.velocity_norm(),
            energy_reduction,
            terminal_energy,
            uncontrolled_terminal_energy,
            initial_energy: problem.initial_energy()?,
            terminal: controlled,
        })
    }
}

/// Controlled state at `t = T` on the filtered space: `u(T) = Σ q_k φ_k`,
/// `u_t(T) = Σ p_k φ_k` (the latter as a pivot representative).
#[derive(Clone, Debug, Serialize)]
pub struct TerminalState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(skip)]
    lambdas: Vec<f64>,
}

impl TerminalState {
    /// `g_j = ⟨u_t(T), w_j⁰⟩ − ⟨u(T), w_j¹⟩` on the basis gives
    /// `p_k = √λ_k g_{2k}` and `q_k = −g_{2k+1}`.
    fn from_duality(basis: &ModalBasis, g: &[f64]) -> Self {
        let m = basis.count();
        let len = basis.mode(0).len();
        let mut position = vec![0.0; len];
        let mut velocity = vec![0.0; len];
        let mut p = Vec::with_capacity(m);
        let mut q = Vec::with_capacity(m);
        for k in 0..m {
            let pk = basis.frequency(k) * g[2 * k];
            let qk = -g[2 * k + 1];
            for (i, phi) in basis.mode(k).iter().enumerate() {
                position[i] += qk * phi;
                velocity[i] += pk * phi;
            }
            p.push(pk);
            q.push(qk);
        }
        Self {
            position,
            velocity,
            q,
            p,
            lambdas: basis.eigenvalues().to_vec(),
        }
    }

    /// `‖u(T)‖_{L²_{1/a}}`.
    pub fn state_norm(&self) -> f64 {
        self.q.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Dual norm `‖u_t(T)‖_*`, `Σ p_k² / λ_k`.
    pub fn velocity_norm(&self) -> f64 {
        self.p
            .iter()
            .zip(&self.lambdas)
            .map(|(p, l)| p * p / l)
            .sum::<f64>()
            .sqrt()
    }

    /// `½ (‖u(T)‖² + ‖u_t(T)‖²_*)`.
    pub fn energy(&self) -> f64 {
        0.5 * (self.state_norm().powi(2) + self.velocity_norm().powi(2))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ControlVerification {
    pub terminal_state_norm: f64,
    pub terminal_velocity_norm: f64,
    /// Controlled over uncontrolled terminal energy.
    pub energy_reduction: f64,
    pub terminal_energy: f64,
    pub uncontrolled_terminal_energy: f64,
    pub initial_energy: f64,
    #[serde(skip)]
    pub terminal: TerminalState,
}

#[derive(Clone, Debug, Serialize)]
pub struct HumSolution {
    /// Minimizer `V̄_T`, the terminal datum of the optimal adjoint state.
    pub v_bar: BeamState,
    pub coefficients: Vec<f64>,
    /// `f(t_k) = v̄_xx(t_k, 1)`.
    pub control: TraceSeries,
    pub iterations: usize,
    pub cg_residual: f64,
    pub converged: bool,
    pub terminal_state_norm: f64,
    pub terminal_velocity_norm: f64,
    pub energy_reduction: f64,
    pub initial_energy: f64,
    pub terminal_energy: f64,
    pub uncontrolled_terminal_energy: f64,
    /// `∫ f² dt`.
    pub control_cost: f64,
    pub warnings: Vec<String>,
}

/// Outcome of [`conjugate_gradient`].
#[derive(Clone, Debug, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b − A x‖ / ‖b‖`, zero when `b = 0`.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradients from a zero initial guess for SPD `apply`.
/// Returns the iterate with the smallest residual seen.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> CgResult
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return CgResult {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut best = (rr.sqrt() / b_norm, x.clone(), 0);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // true residual guards against drift of the recursion
        let ax = apply(&x);
        let true_res = b.iter().zip(&ax).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt() / b_norm;
        if true_res < best.0 {
            best = (true_res, x.clone(), it);
        }
        if true_res <= tol {
            return CgResult {
                x,
                iterations: it,
                relative_residual: true_res,
                converged: true,
            };
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    CgResult {
        x: best.1,
        iterations: best.2,
        relative_residual: best.0,
        converged: false,
    }
}

/// Backward trace of `V_T` on the problem's time grid.
pub fn observation_map(model: &BeamModel, v_t: &BeamState, time: TimeGrid) -> Result<TraceSeries> {
    Ok(solve_backward_on(model, v_t, time)?.trace)
}

/// Assembles the filtered system and runs HUM.
pub fn synthesize_control(problem: &ControlProblem) -> Result<HumSolution> {
    let system = HumSystem::assemble(&problem.model, problem.time, problem.filter_modes)?;
    synthesize_with(problem, &system)
}

/// HUM on an already assembled system.
pub fn synthesize_with(problem: &ControlProblem, system: &HumSystem) -> Result<HumSolution> {
    if system.time() != problem.time || system.basis().count() != problem.filter_modes {
        return Err(Error::TimeGridMismatch(
            "HUM system was assembled for a different problem".into(),
        ));
    }
    let b = system.rhs_functional(&problem.model, &problem.u0, &problem.u1);
    let g = system.gramian();
    let tau = problem.tikhonov;
    let apply = |x: &[f64]| -> Vec<f64> {
        let gx = g * nalgebra::DVector::from_column_slice(x);
        gx.iter().zip(x).map(|(a, xi)| a + tau * xi).collect()
    };
    let cg = conjugate_gradient(apply, &b, problem.cg_tol, problem.max_iter);
    let control = system.observe(&cg.x);
    let check = system.verify(problem, &control)?;
    let mut v_bar = system.basis().state_from_coordinates(&cg.x);
    v_bar.t = problem.time.t_final();
    let solution = HumSolution {
        v_bar,
        coefficients: cg.x,
        control_cost: control.l2_norm_sq(),
        control,
        iterations: cg.iterations,
        cg_residual: cg.relative_residual,
        converged: cg.converged,
        terminal_state_norm: check.terminal_state_norm,
        terminal_velocity_norm: check.terminal_velocity_norm,
        energy_reduction: check.energy_reduction,
        initial_energy: check.initial_energy,
        terminal_energy: check.terminal_energy,
        uncontrolled_terminal_energy: check.uncontrolled_terminal_energy,
        warnings: problem.warnings.clone(),
    };
    if !cg.converged {
        return Err(Error::ControlSynthesisFailed {
            best: Box::new(solution),
        });
    }
    Ok(solution)
}

/// Terminal norms of the controlled run for an arbitrary control `f`.
pub fn verify_null_control(problem: &ControlProblem, control: &TraceSeries) -> Result<ControlVerification> {
    let system = HumSystem::assemble(&problem.model, problem.time, problem.filter_modes)?;
    system.verify(problem, control)
}
