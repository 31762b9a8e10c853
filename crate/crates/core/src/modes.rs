//! Eigenmodes of the discrete generator.
//!
//! Solves `K φ = λ diag(1/a) φ` through the symmetric matrix
//! `diag(√a) K diag(√a)`. Modes are normalized in the discrete weighted norm
//! `h Σ φ²/a = 1` and signed so their trace `φ''(1)` is positive.

use nalgebra::DMatrix;

use crate::dynamics::BeamState;
use crate::error::{Error, Result};
use crate::model::BeamModel;

#[derive(Clone, Debug)]
pub struct ModalBasis {
    eigenvalues: Vec<f64>,
    modes: Vec<Vec<f64>>,
    traces: Vec<f64>,
}

/// Smallest generalized eigenvalues of the model, ascending, without vectors.
pub fn generalized_eigenvalues(model: &BeamModel) -> Vec<f64> {
    let mut vals = scaled_stiffness(model).symmetric_eigenvalues().as_slice().to_vec();
    vals.sort_by(f64::total_cmp);
    vals
}

fn scaled_stiffness(model: &BeamModel) -> DMatrix<f64> {
    let op = model.operator();
    let k = op.stiffness();
    let sa: Vec<f64> = op.profile_values().iter().map(|a| a.sqrt()).collect();
    let n = op.dim();
    DMatrix::from_fn(n, n, |i, j| sa[i] * k.get(i, j) * sa[j])
}

/// Lowest `count` generalized eigenpairs on the interior unknowns.
///
/// The dense symmetric solver only resolves the low modes to about
/// `ε ‖K‖ / gap`, which is poor since `‖K‖ ~ h⁻⁴`. Two sweeps of block inverse
/// iteration with a Rayleigh–Ritz step (projections use the nested product
/// [`crate::discretization::BeamOperator::stiffness_apply`]) bring them to
/// roundoff. The Ritz vectors come out `diag(1/a)`-orthonormal.
fn refined_lowest(model: &BeamModel, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let op = model.operator();
    let n = op.dim();
    let block = (count + 4).min(n);
    let eig = scaled_stiffness(model).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let sa: Vec<f64> = op.profile_values().iter().map(|a| a.sqrt()).collect();
    let inv_a: Vec<f64> = op.profile_values().iter().map(|a| 1.0 / a).collect();
    let mut x: Vec<Vec<f64>> = order[..block]
        .iter()
        .map(|&c| eig.eigenvectors.column(c).iter().zip(&sa).map(|(p, s)| p * s).collect())
        .collect();

    let factor = op.stiffness().factor()?;
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut y = factor.solve(rhs);
        let ky = op.stiffness_apply(&y);
        let mut r: Vec<f64> = rhs.iter().zip(&ky).map(|(b, k)| b - k).collect();
        factor.solve_in_place(&mut r);
        y.iter_mut().zip(&r).for_each(|(y, r)| *y += r);
        y
    };
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let d_dot = |u: &[f64], v: &[f64]| u.iter().zip(v).zip(&inv_a).map(|((a, b), w)| a * b * w).sum::<f64>();

    let mut lams = Vec::new();
    for _ in 0..2 {
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|xi| solve(&xi.iter().zip(&inv_a).map(|(v, w)| v * w).collect::<Vec<_>>()))
            .collect();
        let ky: Vec<Vec<f64>> = y.iter().map(|yi| op.stiffness_apply(yi)).collect();
        let a = DMatrix::from_fn(block, block, |i, j| 0.5 * (dot(&y[i], &ky[j]) + dot(&y[j], &ky[i])));
        let b = DMatrix::from_fn(block, block, |i, j| d_dot(&y[i], &y[j]));
        let chol = b
            .cholesky()
            .ok_or_else(|| Error::InternalSolverFailure("Ritz basis lost independence".into()))?;
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::InternalSolverFailure("singular Ritz Gram factor".into()))?;
        let c = &l_inv * a * l_inv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let small = c.symmetric_eigen();
        let mut idx: Vec<usize> = (0..block).collect();
        idx.sort_by(|&i, &j| small.eigenvalues[i].total_cmp(&small.eigenvalues[j]));
        // Ritz vectors: Y Lᵀ⁻¹ z
        let coef = l_inv.transpose() * &small.eigenvectors;
        x = idx
            .iter()
            .map(|&col| {
                let mut v = vec![0.0; n];
                for (r, yr) in y.iter().enumerate() {
                    let c = coef[(r, col)];
                    v.iter_mut().zip(yr).for_each(|(v, y)| *v += c * y);
                }
                v
            })
            .collect();
        lams = idx.iter().map(|&i| small.eigenvalues[i]).collect();
    }
    x.truncate(count);
    lams.truncate(count);
    Ok((lams, x))
}

impl ModalBasis {
    /// Lowest `count` modes. Fails with `TooManyModes` beyond the interior dimension.
    pub fn compute(model: &BeamModel, count: usize) -> Result<Self> {
        let n = model.operator().dim();
        if count == 0 {
            return Err(Error::InvalidParameter("mode count must be at least 1".into()));
        }
        if count > n {
            return Err(Error::TooManyModes {
                requested: count,
                available: n,
            });
        }
        let (lams, vecs) = refined_lowest(model, count)?;
        let quad = model.quadrature();
        let mut eigenvalues = Vec::with_capacity(count);
        let mut modes = Vec::with_capacity(count);
        let mut traces = Vec::with_capacity(count);
        for (lam, interior) in lams.into_iter().zip(vecs) {
            let mut phi = model.grid().embed(&interior);
            let norm = quad.weighted_inner(&phi, &phi).sqrt();
            phi.iter_mut().for_each(|e| *e /= norm);
            let mut tr = model.trace(&phi);
            if tr < 0.0 {
                phi.iter_mut().for_each(|e| *e = -*e);
                tr = -tr;
            }
            eigenvalues.push(lam);
            modes.push(phi);
            traces.push(tr);
        }
        Ok(Self {
            eigenvalues,
            modes,
            traces,
        })
    }

    pub fn count(&self) -> usize {
        self.modes.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.eigenvalues[k].sqrt()
    }

    /// Node vector of mode `k` (zero based).
    pub fn mode(&self, k: usize) -> &[f64] {
        &self.modes[k]
    }

    pub fn trace(&self, k: usize) -> f64 {
        self.traces[k]
    }

    /// Size of the energy-normalized phase-space basis, `2 · count`.
    pub fn phase_dim(&self) -> usize {
        2 * self.count()
    }

    /// Phase-space basis element `j` with unit energy norm:
    /// `2k ↦ (φ_k/√λ_k, 0)` and `2k+1 ↦ (0, φ_k)`. Its energy is ½.
    pub fn phase_state(&self, j: usize) -> BeamState {
        let k = j / 2;
        let zero = vec![0.0; self.modes[k].len()];
        if j.is_multiple_of(2) {
            let s = 1.0 / self.frequency(k);
            BeamState {
                y: self.modes[k].iter().map(|e| s * e).collect(),
                v: zero,
                t: 0.0,
            }
        } else {
            BeamState {
                y: zero,
                v: self.modes[k].clone(),
                t: 0.0,
            }
        }
    }

    /// `Σ c_j · phase_state(j)`.
    pub fn state_from_coordinates(&self, coords: &[f64]) -> BeamState {
        assert_eq!(coords.len(), self.phase_dim());
        let len = self.modes[0].len();
        let mut y = vec![0.0; len];
        let mut v = vec![0.0; len];
        for (k, phi) in self.modes.iter().enumerate() {
            let cy = coords[2 * k] / self.frequency(k);
            let cv = coords[2 * k + 1];
            for i in 0..len {
                y[i] += cy * phi[i];
                v[i] += cv * phi[i];
            }
        }
        BeamState { y, v, t: 0.0 }
    }

    /// Energy-orthogonal projection coordinates of a state onto the basis.
    pub fn coordinates(&self, model: &BeamModel, state: &BeamState) -> Vec<f64> {
        let quad = model.quadrature();
        let mut c = Vec::with_capacity(self.phase_dim());
        for (k, phi) in self.modes.iter().enumerate() {
            c.push(self.frequency(k) * quad.weighted_inner(phi, &state.y));
            c.push(quad.weighted_inner(phi, &state.v));
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{make_power_profile, DegeneracyProfile};
    use approx::assert_relative_eq;

    #[test]
    fn clamped_beam_fundamental_eigenvalue() {
        // k₁ is the first positive root of cos k cosh k = 1
        let k1: f64 = 4.730_040_744_862_704;
        let m = BeamModel::new(DegeneracyProfile::uniform(1.0).unwrap(), 400).unwrap();
        let basis = ModalBasis::compute(&m, 3).unwrap();
        assert_relative_eq!(basis.eigenvalue(0), k1.powi(4), max_relative = 1e-3);
        // the dense solver alone is only good to about ε‖K‖/λ₁
        assert_relative_eq!(generalized_eigenvalues(&m)[0], basis.eigenvalue(0), max_relative = 1e-7);
    }

    #[test]
    fn modes_are_orthonormal_and_satisfy_the_eigen_relation() {
        let m = BeamModel::new(make_power_profile(0.5, 1.0).unwrap(), 120).unwrap();
        let basis = ModalBasis::compute(&m, 6).unwrap();
        let quad = m.quadrature();
        for i in 0..6 {
            for j in 0..6 {
                let ip = quad.weighted_inner(basis.mode(i), basis.mode(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-11, "({i},{j}) -> {ip}");
            }
            let phi = basis.mode(i);
            let interior = m.grid().interior(phi);
            let au = m.operator().apply_interior(interior);
            for (r, p) in au.iter().zip(interior) {
                assert!((r - basis.eigenvalue(i) * p).abs() < 1e-7 * basis.eigenvalue(i));
            }
            assert!(basis.trace(i) > 0.0);
        }
        assert!(basis.eigenvalues().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn phase_states_have_energy_one_half_and_roundtrip() {
        let m = BeamModel::new(make_power_profile(1.2, 1.0).unwrap(), 80).unwrap();
        let basis = ModalBasis::compute(&m, 4).unwrap();
        for j in 0..basis.phase_dim() {
            assert_relative_eq!(m.energy(&basis.phase_state(j)), 0.5, max_relative = 1e-10);
        }
        let c = [0.3, -1.0, 0.25, 2.0, 0.0, 0.5, -0.7, 0.1];
        let s = basis.state_from_coordinates(&c);
        let back = basis.coordinates(&m, &s);
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_relative_eq!(
            m.energy(&s),
            0.5 * c.iter().map(|x| x * x).sum::<f64>(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn too_many_modes() {
        let m = BeamModel::new(make_power_profile(0.5, 1.0).unwrap(), 10).unwrap();
        assert!(matches!(
            ModalBasis::compute(&m, 10),
            Err(Error::TooManyModes {
                requested: 10,
                available: 9
            })
        ));
        assert!(ModalBasis::compute(&m, 9).is_ok());
    }
}
