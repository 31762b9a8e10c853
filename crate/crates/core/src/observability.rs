//! Boundary-trace identities, observability bounds and the constant `C_T`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{
    clamped_first_differences, h2_seminorm_sq, second_differences, trapezoid_nodes, EndClosure,
};
use crate::dynamics::{BeamState, TimeGrid, TraceSeries, Trajectory};
use crate::error::{Error, Result};
use crate::model::BeamModel;
use crate::modes::ModalBasis;
use crate::profiles::{observability_time, DegeneracyClass};

/// Guards the relative residual of two vanishing sides.
pub const RESIDUAL_FLOOR: f64 = 1e-14;

/// Largest modal subspace used for `C_T`.
pub const MAX_MODE_COUNT: usize = 30;

/// Random samples combine at most this many of the lowest modes.
pub const SAMPLE_MODES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Identity {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub relative_residual: f64,
    pub which: Identity,
}

impl IdentityReport {
    pub fn new(lhs: f64, rhs: f64, which: Identity) -> Self {
        let relative_residual = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(RESIDUAL_FLOOR);
        Self {
            lhs,
            rhs,
            relative_residual,
            which,
        }
    }
}

/// Accumulates both identities state by state, so a trajectory never has to
/// be stored.
///
/// First:  `½∫ y_xx(t,1)² = [∫ y_t x² y_x / a]₀ᵀ + ½∬ x y_t² (2 − x a'/a) / a + 3∬ x y_xx²`
///
/// Second: `½∫ y_xx(t,1)² = [∫ x y_t y_x / a]₀ᵀ + ½∬ y_t² (1 − x a'/a) / a + (3/2)∬ y_xx²`
#[derive(Clone, Debug)]
pub struct IdentityAccumulator<'a> {
    model: &'a BeamModel,
    time: TimeGrid,
    // per node: w x² / a, w x / a, w x (2 - s) / a, w (1 - s) / a, w_trap x
    c_bnd1: Vec<f64>,
    c_bnd2: Vec<f64>,
    c_kin1: Vec<f64>,
    c_kin2: Vec<f64>,
    c_pot1: Vec<f64>,
    lhs: f64,
    bnd1: f64,
    bnd2: f64,
    kin1: f64,
    kin2: f64,
    pot1: f64,
    pot2: f64,
    seen: usize,
}

impl<'a> IdentityAccumulator<'a> {
    pub fn new(model: &'a BeamModel, time: TimeGrid) -> Self {
        let grid = model.grid();
        let profile = model.profile();
        let w = model.quadrature().weights_plain();
        let xs = grid.nodes();
        let per_node = |f: &dyn Fn(f64, f64, f64) -> f64| -> Vec<f64> {
            xs.iter()
                .zip(w)
                .map(|(&x, &wi)| if wi == 0.0 { 0.0 } else { f(x, wi, profile.value(x)) })
                .collect()
        };
        let c_bnd1 = per_node(&|x, wi, a| wi * x * x / a);
        let c_bnd2 = per_node(&|x, wi, a| wi * x / a);
        let c_kin1 = per_node(&|x, wi, a| wi * x * (2.0 - profile.log_slope(x)) / a);
        let c_kin2 = per_node(&|x, wi, a| wi * (1.0 - profile.log_slope(x)) / a);
        let c_pot1 = trapezoid_nodes(grid).zip(xs).map(|(wi, &x)| wi * x).collect();
        Self {
            model,
            time,
            c_bnd1,
            c_bnd2,
            c_kin1,
            c_kin2,
            c_pot1,
            lhs: 0.0,
            bnd1: 0.0,
            bnd2: 0.0,
            kin1: 0.0,
            kin2: 0.0,
            pot1: 0.0,
            pot2: 0.0,
            seen: 0,
        }
    }

    /// Feeds the state at time index `k`. Indices must arrive as `0..=steps`.
    pub fn push(&mut self, k: usize, state: &BeamState) {
        debug_assert_eq!(k, self.seen);
        let grid = self.model.grid();
        let mu = self.time.weight(k);
        let tr = self.model.trace(&state.y);
        self.lhs += 0.5 * mu * tr * tr;

        let v = &state.v;
        let dot = |c: &[f64], a: &[f64], b: &[f64]| -> f64 {
            c.iter().zip(a.iter().zip(b)).map(|(c, (x, y))| c * x * y).sum()
        };
        self.kin1 += 0.5 * mu * dot(&self.c_kin1, v, v);
        self.kin2 += 0.5 * mu * dot(&self.c_kin2, v, v);
        let yxx = second_differences(&state.y, grid, EndClosure::Clamped);
        self.pot1 += 3.0 * mu * dot(&self.c_pot1, &yxx, &yxx);
        self.pot2 += 1.5 * mu * h2_seminorm_sq(&state.y, grid, EndClosure::Clamped);

        if k == 0 || k == self.time.steps() {
            let sign = if k == 0 { -1.0 } else { 1.0 };
            let yx = clamped_first_differences(&state.y, grid);
            self.bnd1 += sign * dot(&self.c_bnd1, v, &yx);
            self.bnd2 += sign * dot(&self.c_bnd2, v, &yx);
        }
        self.seen += 1;
    }

    pub fn finish(self) -> (IdentityReport, IdentityReport) {
        assert_eq!(
            self.seen,
            self.time.steps() + 1,
            "identity accumulator fed an incomplete trajectory"
        );
        (
            IdentityReport::new(self.lhs, self.bnd1 + self.kin1 + self.pot1, Identity::First),
            IdentityReport::new(self.lhs, self.bnd2 + self.kin2 + self.pot2, Identity::Second),
        )
    }
}

fn identities(traj: &Trajectory, model: &BeamModel) -> (IdentityReport, IdentityReport) {
    let mut acc = IdentityAccumulator::new(model, traj.time_grid());
    for (k, s) in traj.states.iter().enumerate() {
        acc.push(k, s);
    }
    acc.finish()
}

pub fn identity_residual_first(traj: &Trajectory, model: &BeamModel) -> IdentityReport {
    identities(traj, model).0
}

pub fn identity_residual_second(traj: &Trajectory, model: &BeamModel) -> IdentityReport {
    identities(traj, model).1
}

/// Both identities from a streamed homogeneous solve.
pub fn identity_residuals(
    model: &BeamModel,
    initial: &BeamState,
    time: TimeGrid,
) -> Result<(IdentityReport, IdentityReport)> {
    let mut acc = IdentityAccumulator::new(model, time);
    model.propagate(initial, time, |k, s| acc.push(k, s))?;
    Ok(acc.finish())
}

/// `(T(2−K) − 4M, 12T + 4 max{4/a(1), 1})` with `M = max{1, 4/a(1), 4K/a(1)}`.
pub fn observability_bounds(cls: &DegeneracyClass, t_final: f64) -> (f64, f64) {
    let lower = t_final * (2.0 - cls.k) - 4.0 * cls.boundary_constant();
    let upper = 12.0 * t_final + 4.0 * (4.0 / cls.a_at_1).max(1.0);
    (lower, upper)
}

/// `∫₀ᵀ y_xx(t,1)² dt / E(0)` for the homogeneous solve from `initial`.
pub fn quotient(model: &BeamModel, initial: &BeamState, time: TimeGrid) -> Result<f64> {
    let e0 = model.energy(initial);
    if e0 <= 0.0 {
        return Err(Error::ZeroEnergyData);
    }
    Ok(model.trace_series(initial, time)?.l2_norm_sq() / e0)
}

#[derive(Clone, Debug, Serialize)]
pub struct ObservabilityReport {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub a_at_1: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub mode_count: usize,
    pub quotient_min: f64,
    pub quotient_max: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    #[serde(rename = "C_T_estimate")]
    pub c_t_estimate: f64,
    /// `1/C_T`, only when the estimate is positive and `T > T₀`.
    #[serde(rename = "c_T")]
    pub cost: Option<f64>,
    /// Largest eigenvalue of the energy-normalized Gramian.
    pub gramian_max: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(skip)]
    pub quotients: Vec<f64>,
}

/// Gramian `G_ij = ∫ f_i f_j dt` of the given trace series.
pub fn trace_gramian(traces: &[TraceSeries]) -> DMatrix<f64> {
    let n = traces.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = traces[i].inner(&traces[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Extreme eigenvalues of `2 G` relative to the energy Gram matrix of the
/// basis states, i.e. the extreme observability quotients on their span.
fn normalized_extremes(model: &BeamModel, states: &[BeamState], g: &DMatrix<f64>) -> Result<(f64, f64)> {
    let n = states.len();
    let quad = model.quadrature();
    let grid = model.grid();
    let op = model.operator();
    let h = grid.h();
    // energy bilinear form: E(c) = ½ cᵀ M c
    let mut m = DMatrix::zeros(n, n);
    let ky: Vec<Vec<f64>> = states.iter().map(|s| op.stiffness_apply(grid.interior(&s.y))).collect();
    for i in 0..n {
        for j in 0..=i {
            let pot: f64 = h * grid
                .interior(&states[j].y)
                .iter()
                .zip(&ky[i])
                .map(|(a, b)| a * b)
                .sum::<f64>();
            let v = quad.weighted_inner(&states[i].v, &states[j].v) + pot;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::InternalSolverFailure("energy Gram matrix is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::InternalSolverFailure("singular energy Gram factor".into()))?;
    let sym = &l_inv * (g * 2.0) * l_inv.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    Ok((eig.min(), eig.max()))
}

/// Estimates `C_T` on the span of the lowest `mode_count` modes.
///
/// The Gramian of the trace map is assembled from one homogeneous solve per
/// phase-space basis element, then normalized by the energy. Its smallest
/// generalized eigenvalue is the estimate. Independently, `samples` random
/// combinations of the lowest `min(8, mode_count)` modes (coefficients uniform
/// in `[-1, 1]`, ChaCha8 seeded with `seed`) are solved directly and their
/// quotients reported.
pub fn estimate_ct(
    model: &BeamModel,
    time: TimeGrid,
    mode_count: usize,
    samples: usize,
    seed: u64,
) -> Result<ObservabilityReport> {
    let available = MAX_MODE_COUNT.min(model.operator().dim());
    if mode_count > available {
        return Err(Error::TooManyModes {
            requested: mode_count,
            available,
        });
    }
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "observability needs at least one sample".into(),
        ));
    }
    let cls = model.classify()?;
    let basis = ModalBasis::compute(model, mode_count)?;
    let states: Vec<BeamState> = (0..basis.phase_dim()).map(|j| basis.phase_state(j)).collect();
    let traces = states
        .par_iter()
        .map(|s| model.trace_series(s, time))
        .collect::<Result<Vec<_>>>()?;
    let g = trace_gramian(&traces);
    let (c_t, g_max) = normalized_extremes(model, &states, &g)?;

    let quotients = sample_quotients(model, &basis, time, samples, seed)?;
    let (lower, upper) = observability_bounds(&cls, time.t_final());
    let t0 = observability_time(&cls);
    let cost = (c_t > 0.0 && time.t_final() > t0).then(|| 1.0 / c_t);
    Ok(ObservabilityReport {
        t_final: time.t_final(),
        dt: time.dt(),
        k: cls.k,
        a_at_1: cls.a_at_1,
        t0,
        mode_count,
        quotient_min: quotients.iter().copied().fold(f64::INFINITY, f64::min),
        quotient_max: quotients.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lower_bound: lower,
        upper_bound: upper,
        c_t_estimate: c_t,
        cost,
        gramian_max: g_max,
        samples,
        seed,
        quotients,
    })
}

/// Seeded random low-mode data: `samples` coefficient vectors over the
/// lowest `min(8, count)` modes in the phase-space basis.
pub fn random_coefficients(basis: &ModalBasis, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let active = 2 * SAMPLE_MODES.min(basis.count());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let mut c = vec![0.0; basis.phase_dim()];
            for e in c.iter_mut().take(active) {
                *e = rng.gen_range(-1.0..=1.0);
            }
            c
        })
        .collect()
}

fn sample_quotients(
    model: &BeamModel,
    basis: &ModalBasis,
    time: TimeGrid,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    random_coefficients(basis, samples, seed)
        .par_iter()
        .map(|c| quotient(model, &basis.state_from_coordinates(c), time))
        .collect()
}
