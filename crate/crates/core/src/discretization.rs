//! Uniform grid on `[0, 1]`, weighted quadratures and the clamped beam operator.
//!
//! Node vectors have length `N + 1` and include both endpoints. The clamped
//! conditions `y(0) = y(1) = 0` remove the end nodes; `y_x(0) = y_x(1) = 0`
//! are imposed through the ghost reflection `y_{-1} = y_1`, `y_{N+1} = y_{N-1}`.
//! The unknowns are therefore nodes `1..=N-1`.

use crate::banded::SymmetricPentadiagonal;
use crate::error::{Error, Result};
use crate::profiles::DegeneracyProfile;

pub const MIN_CELLS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    n_cells: usize,
    h: f64,
    nodes: Vec<f64>,
}

/// Uniform grid with `n_cells` cells.
pub fn build_grid(n_cells: usize) -> Result<Grid> {
    if n_cells < MIN_CELLS {
        return Err(Error::GridTooCoarse {
            n_cells,
            min: MIN_CELLS,
        });
    }
    let nf = n_cells as f64;
    let nodes = (0..=n_cells).map(|i| i as f64 / nf).collect();
    Ok(Grid {
        n_cells,
        h: 1.0 / nf,
        nodes,
    })
}

impl Grid {
    pub fn new(n_cells: usize) -> Result<Self> {
        build_grid(n_cells)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of unknowns of the clamped problem.
    pub fn interior_dim(&self) -> usize {
        self.n_cells - 1
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Node vector from interior unknowns, zero at both ends.
    pub fn embed(&self, interior: &[f64]) -> Vec<f64> {
        assert_eq!(interior.len(), self.interior_dim());
        let mut u = Vec::with_capacity(self.len());
        u.push(0.0);
        u.extend_from_slice(interior);
        u.push(0.0);
        u
    }

    pub fn interior<'a>(&self, u: &'a [f64]) -> &'a [f64] {
        assert_eq!(u.len(), self.len());
        &u[1..self.n_cells]
    }
}

/// Trapezoidal weights for `∫ u²/a dx` and `∫ u² dx`, with the node `x = 0`
/// carrying zero weight in both.
#[derive(Clone, Debug)]
pub struct WeightedQuadrature {
    weights_inv_a: Vec<f64>,
    weights_plain: Vec<f64>,
}

impl WeightedQuadrature {
    pub fn new(profile: &DegeneracyProfile, grid: &Grid) -> Self {
        let n = grid.n_cells();
        let h = grid.h();
        let mut weights_plain = vec![h; n + 1];
        weights_plain[0] = 0.0;
        weights_plain[n] = 0.5 * h;
        let weights_inv_a = grid
            .nodes()
            .iter()
            .zip(&weights_plain)
            .map(|(&x, &w)| if w == 0.0 { 0.0 } else { w / profile.value(x) })
            .collect();
        Self {
            weights_inv_a,
            weights_plain,
        }
    }

    pub fn weights_inv_a(&self) -> &[f64] {
        &self.weights_inv_a
    }

    pub fn weights_plain(&self) -> &[f64] {
        &self.weights_plain
    }

    /// `∫ u v / a dx`. No check on the node at the origin.
    pub fn weighted_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), self.weights_inv_a.len());
        assert_eq!(v.len(), self.weights_inv_a.len());
        self.weights_inv_a
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// `∫ u v dx`.
    pub fn plain_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights_plain
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

/// `‖u‖²` in `L²_{1/a}`, trapezoidal with the origin excluded.
pub fn weighted_l2_norm_sq(u: &[f64], quad: &WeightedQuadrature) -> Result<f64> {
    if u[0] != 0.0 {
        return Err(Error::SingularAtOrigin { value: u[0] });
    }
    Ok(quad.weighted_inner(u, u))
}

/// How the second difference is closed at the two endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndClosure {
    /// Ghost reflection from `u_x = 0`. Matches the beam operator exactly.
    Clamped,
    /// Second order one-sided four point stencil; no boundary assumptions.
    OneSided,
}

/// `u''` at every node by centered differences plus the chosen end closure.
pub fn second_differences(u: &[f64], grid: &Grid, closure: EndClosure) -> Vec<f64> {
    let n = grid.n_cells();
    assert_eq!(u.len(), n + 1);
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut s = vec![0.0; n + 1];
    for i in 1..n {
        s[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv_h2;
    }
    match closure {
        EndClosure::Clamped => {
            s[0] = 2.0 * (u[1] - u[0]) * inv_h2;
            s[n] = 2.0 * (u[n - 1] - u[n]) * inv_h2;
        }
        EndClosure::OneSided => {
            s[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) * inv_h2;
            s[n] = (2.0 * u[n] - 5.0 * u[n - 1] + 4.0 * u[n - 2] - u[n - 3]) * inv_h2;
        }
    }
    s
}

/// Centered first differences, with the clamped slope `0` at both ends.
pub fn clamped_first_differences(u: &[f64], grid: &Grid) -> Vec<f64> {
    let n = grid.n_cells();
    assert_eq!(u.len(), n + 1);
    let inv_2h = 0.5 / grid.h();
    let mut d = vec![0.0; n + 1];
    for i in 1..n {
        d[i] = (u[i + 1] - u[i - 1]) * inv_2h;
    }
    d
}

/// Trapezoidal weights over all `N + 1` nodes.
pub(crate) fn trapezoid_nodes(grid: &Grid) -> impl Iterator<Item = f64> + '_ {
    let n = grid.n_cells();
    let h = grid.h();
    (0..=n).map(move |i| if i == 0 || i == n { 0.5 * h } else { h })
}

/// `∫ (u'')² dx` by trapezoid on [`second_differences`].
///
/// With [`EndClosure::Clamped`] and `u(0) = u(1) = 0` this equals
/// `h uᵀ K u` for the stiffness `K` of [`BeamOperator`] exactly.
pub fn h2_seminorm_sq(u: &[f64], grid: &Grid, closure: EndClosure) -> f64 {
    let s = second_differences(u, grid, closure);
    trapezoid_nodes(grid).zip(&s).map(|(w, v)| w * v * v).sum()
}

/// Approximation of `u''(1)`.
///
/// `Clamped` uses `u_x(1) = 0` to get a second order formula from
/// `u_N, u_{N-1}, u_{N-2}`; `OneSided` is the four point stencil.
pub fn trace_y_xx_at_1(u: &[f64], grid: &Grid, closure: EndClosure) -> f64 {
    let n = grid.n_cells();
    assert_eq!(u.len(), n + 1);
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    match closure {
        EndClosure::Clamped => (8.0 * u[n - 1] - u[n - 2] - 7.0 * u[n]) * 0.5 * inv_h2,
        EndClosure::OneSided => (2.0 * u[n] - 5.0 * u[n - 1] + 4.0 * u[n - 2] - u[n - 3]) * inv_h2,
    }
}

/// `u ↦ a u''''` on the clamped unknowns.
///
/// Stored as `diag(a) K` with `K` the symmetric pentadiagonal fourth
/// difference (rows `(1, -4, 6, -4, 1)/h⁴`, corner entries `7/h⁴` from the
/// ghost reflection). `diag(1/a) · matrix = K` is symmetric positive definite.
#[derive(Clone, Debug)]
pub struct BeamOperator {
    stiffness: SymmetricPentadiagonal,
    profile_values: Vec<f64>,
    h: f64,
}

pub fn assemble_beam_operator(profile: &DegeneracyProfile, grid: &Grid) -> BeamOperator {
    let n = grid.interior_dim();
    let inv_h4 = grid.h().powi(-4);
    let mut diag = vec![6.0 * inv_h4; n];
    diag[0] = 7.0 * inv_h4;
    diag[n - 1] = 7.0 * inv_h4;
    let stiffness = SymmetricPentadiagonal::new(diag, vec![-4.0 * inv_h4; n - 1], vec![inv_h4; n - 2]);
    let profile_values = grid.interior(grid.nodes()).iter().map(|&x| profile.value(x)).collect();
    BeamOperator {
        stiffness,
        profile_values,
        h: grid.h(),
    }
}

impl BeamOperator {
    pub fn dim(&self) -> usize {
        self.profile_values.len()
    }

    /// The symmetric factor `K`.
    pub fn stiffness(&self) -> &SymmetricPentadiagonal {
        &self.stiffness
    }

    /// `a(x_i)` at the unknowns `i = 1..N-1`.
    pub fn profile_values(&self) -> &[f64] {
        &self.profile_values
    }

    /// `K u`, evaluated as the second difference of the clamped second
    /// differences. Same matrix as [`Self::stiffness`], but rounding stays at
    /// the scale of `u''/h²` instead of `u/h⁴`, which keeps low modes clean.
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(u.len(), n);
        let inv_h2 = 1.0 / (self.h * self.h);
        let at = |i: usize| if i == 0 || i > n { 0.0 } else { u[i - 1] };
        // s over nodes 0..=N, with ghost closure at both ends
        let s: Vec<f64> = (0..=n + 1)
            .map(|i| match i {
                0 => 2.0 * at(1) * inv_h2,
                i if i == n + 1 => 2.0 * at(n) * inv_h2,
                i => (at(i - 1) - 2.0 * at(i) + at(i + 1)) * inv_h2,
            })
            .collect();
        (1..=n).map(|i| (s[i - 1] - 2.0 * s[i] + s[i + 1]) * inv_h2).collect()
    }

    /// `(diag(a) K) u` on interior unknowns.
    pub fn apply_interior(&self, u: &[f64]) -> Vec<f64> {
        let mut y = self.stiffness_apply(u);
        for (yi, ai) in y.iter_mut().zip(&self.profile_values) {
            *yi *= ai;
        }
        y
    }

    /// Operator entry `[diag(a) K]_{ij}` in interior indexing.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.profile_values[i] * self.stiffness.get(i, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::make_power_profile;

    #[test]
    fn nested_stiffness_apply_matches_banded_product() {
        let g = build_grid(17).unwrap();
        let op = assemble_beam_operator(&make_power_profile(0.5, 1.0).unwrap(), &g);
        let u: Vec<f64> = (0..op.dim()).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let a = op.stiffness().mul_vec(&u);
        let b = op.stiffness_apply(&u);
        let scale = a.iter().map(|e| e.abs()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
    }
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn bump(x: f64) -> f64 {
        x * x * (1.0 - x) * (1.0 - x)
    }

    #[test]
    fn grid_nodes() {
        let g = build_grid(10).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[10], 1.0);
        assert_relative_eq!(g.nodes()[3], 0.3, epsilon = 1e-15);
        assert_eq!(g.h(), 0.1);
        let g = build_grid(200).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g.h(), 0.005);
        assert!(matches!(build_grid(4), Err(Error::GridTooCoarse { n_cells: 4, .. })));
        assert!(build_grid(8).is_ok());
    }

    #[test]
    fn quadrature_weights() {
        let p = make_power_profile(1.0, 1.0).unwrap();
        let g = build_grid(20).unwrap();
        let q = WeightedQuadrature::new(&p, &g);
        assert!(q.weights_inv_a().iter().all(|&w| w >= 0.0));
        assert!(q.weights_plain().iter().all(|&w| w >= 0.0));
        assert_eq!(q.weights_inv_a()[0], 0.0);
        assert_eq!(weighted_l2_norm_sq(&[0.0; 21], &q).unwrap(), 0.0);
        for i in 1..20 {
            let x = g.nodes()[i];
            assert_relative_eq!(q.weights_inv_a()[i] * x, q.weights_plain()[i], epsilon = 1e-15);
        }

        let q1 = WeightedQuadrature::new(&DegeneracyProfile::uniform(1.0).unwrap(), &g);
        assert_eq!(q1.weights_inv_a(), q1.weights_plain());
    }

    #[test]
    fn weighted_norm_of_bump_against_beta_function() {
        // ∫ x^3 (1-x)^4 dx = B(4, 5) = 3! 4! / 8! = 1/280
        let p = make_power_profile(1.0, 1.0).unwrap();
        let g = build_grid(400).unwrap();
        let q = WeightedQuadrature::new(&p, &g);
        let u = g.sample(bump);
        let v = weighted_l2_norm_sq(&u, &q).unwrap();
        assert_relative_eq!(v, 1.0 / 280.0, max_relative = 1e-3);
    }

    #[test]
    fn weighted_norm_rejects_nonzero_origin() {
        let p = make_power_profile(0.5, 1.0).unwrap();
        let g = build_grid(16).unwrap();
        let q = WeightedQuadrature::new(&p, &g);
        let u = g.sample(|x| 1.0 - x);
        assert!(matches!(
            weighted_l2_norm_sq(&u, &q),
            Err(Error::SingularAtOrigin { .. })
        ));
    }

    #[test]
    fn h2_seminorm_oracles() {
        let g = build_grid(400).unwrap();
        // u'' = 2 - 12x + 12x², ∫ (u'')² = 4/5
        let u = g.sample(bump);
        assert_relative_eq!(h2_seminorm_sq(&u, &g, EndClosure::Clamped), 0.8, max_relative = 5e-4);
        assert_relative_eq!(h2_seminorm_sq(&u, &g, EndClosure::OneSided), 0.8, max_relative = 5e-4);
        let q1 = WeightedQuadrature::new(&DegeneracyProfile::uniform(1.0).unwrap(), &g);
        let s = g.sample(|x| (PI * x).sin());
        assert_relative_eq!(weighted_l2_norm_sq(&s, &q1).unwrap(), 0.5, max_relative = 1e-6);
        assert_relative_eq!(
            h2_seminorm_sq(&s, &g, EndClosure::OneSided),
            PI.powi(4) / 2.0,
            max_relative = 1e-3
        );
        assert_eq!(h2_seminorm_sq(&vec![0.0; 401], &g, EndClosure::Clamped), 0.0);
    }

    #[test]
    fn clamped_seminorm_is_stiffness_energy() {
        let p = make_power_profile(0.7, 1.0).unwrap();
        let g = build_grid(30).unwrap();
        let op = assemble_beam_operator(&p, &g);
        let u = g.sample(|x| (x * 7.0).sin() * x * (1.0 - x));
        let ui = g.interior(&u);
        let ku = op.stiffness().mul_vec(ui);
        let quad_form: f64 = g.h() * ui.iter().zip(&ku).map(|(a, b)| a * b).sum::<f64>();
        assert_relative_eq!(
            h2_seminorm_sq(&u, &g, EndClosure::Clamped),
            quad_form,
            max_relative = 1e-12
        );
    }

    #[test]
    fn trace_oracles() {
        let g = build_grid(400).unwrap();
        let u = g.sample(bump);
        assert_relative_eq!(trace_y_xx_at_1(&u, &g, EndClosure::Clamped), 2.0, max_relative = 1e-4);
        assert_relative_eq!(trace_y_xx_at_1(&u, &g, EndClosure::OneSided), 2.0, max_relative = 1e-4);
        let s = g.sample(|x| (PI * x).sin());
        assert!(trace_y_xx_at_1(&s, &g, EndClosure::OneSided).abs() < 1e-3);
        assert_eq!(trace_y_xx_at_1(&vec![0.0; 401], &g, EndClosure::Clamped), 0.0);
    }

    #[test]
    fn trace_converges_at_second_order() {
        for closure in [EndClosure::Clamped, EndClosure::OneSided] {
            let err = |n: usize| {
                let g = build_grid(n).unwrap();
                (trace_y_xx_at_1(&g.sample(bump), &g, closure) - 2.0).abs()
            };
            let (e1, e2, e3) = (err(50), err(100), err(200));
            assert!((e1 / e2 - 4.0).abs() < 0.2, "{closure:?}: {}", e1 / e2);
            assert!((e2 / e3 - 4.0).abs() < 0.2, "{closure:?}: {}", e2 / e3);
        }
    }

    #[test]
    fn operator_rows() {
        let g = build_grid(20).unwrap();
        let h4 = g.h().powi(4);
        let p = make_power_profile(1.0, 1.0).unwrap();
        let op = assemble_beam_operator(&p, &g);
        assert_eq!(op.dim(), 19);
        // row for node x_5 (interior index 4): x_5 * (1,-4,6,-4,1)/h⁴
        let x5 = g.nodes()[5];
        let expected = [1.0, -4.0, 6.0, -4.0, 1.0];
        for (k, e) in expected.iter().enumerate() {
            assert_relative_eq!(op.entry(4, 2 + k) * h4, x5 * e, epsilon = 1e-12);
        }
        assert_eq!(op.entry(4, 0), 0.0);
        assert_relative_eq!(op.stiffness().get(0, 0) * h4, 7.0, epsilon = 1e-12);
    }
}
