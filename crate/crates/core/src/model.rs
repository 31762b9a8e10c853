use crate::discretization::{
    assemble_beam_operator, build_grid, h2_seminorm_sq, trace_y_xx_at_1, BeamOperator, EndClosure, Grid,
    WeightedQuadrature,
};
use crate::dynamics::BeamState;
use crate::error::Result;
use crate::profiles::{classify, observability_time, DegeneracyClass, DegeneracyProfile};

/// Resolution used whenever the model needs the degeneracy class.
pub const CLASSIFY_RESOLUTION: usize = 2000;

/// A profile discretized on a grid: everything a solve needs, immutable.
#[derive(Clone, Debug)]
pub struct BeamModel {
    profile: DegeneracyProfile,
    grid: Grid,
    quad: WeightedQuadrature,
    op: BeamOperator,
}

impl BeamModel {
    pub fn new(profile: DegeneracyProfile, n_cells: usize) -> Result<Self> {
        let grid = build_grid(n_cells)?;
        let quad = WeightedQuadrature::new(&profile, &grid);
        let op = assemble_beam_operator(&profile, &grid);
        Ok(Self {
            profile,
            grid,
            quad,
            op,
        })
    }

    pub fn profile(&self) -> &DegeneracyProfile {
        &self.profile
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn quadrature(&self) -> &WeightedQuadrature {
        &self.quad
    }

    pub fn operator(&self) -> &BeamOperator {
        &self.op
    }

    pub fn classify(&self) -> Result<DegeneracyClass> {
        classify(&self.profile, CLASSIFY_RESOLUTION)
    }

    pub fn observability_time(&self) -> Result<f64> {
        Ok(observability_time(&self.classify()?))
    }

    /// `½ (∫ v²/a + ∫ (y'')²)`.
    pub fn energy(&self, state: &BeamState) -> f64 {
        energy(state, &self.quad, &self.grid)
    }

    /// Boundary observation `y_xx(t, 1)` of a clamped state vector.
    pub fn trace(&self, y: &[f64]) -> f64 {
        trace_y_xx_at_1(y, &self.grid, EndClosure::Clamped)
    }
}

/// Energy of a clamped state: `½ (‖v‖²_{L²_{1/a}} + ‖y''‖²_{L²})`.
pub fn energy(state: &BeamState, quad: &WeightedQuadrature, grid: &Grid) -> f64 {
    0.5 * (quad.weighted_inner(&state.v, &state.v) + h2_seminorm_sq(&state.y, grid, EndClosure::Clamped))
}
