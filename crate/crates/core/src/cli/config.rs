//! Experiment configuration: JSON schema, validation and resolution.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BeamState, TimeGrid};
use crate::error::{Error, Result};
use crate::hum::ControlSettings;
use crate::model::BeamModel;
use crate::modes::ModalBasis;
use crate::observability::SAMPLE_MODES;
use crate::profiles::{make_power_profile, DegeneracyProfile};

pub const AUTO_HORIZON: &str = "auto2T0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: ProfileSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub observability: ObservabilitySpec,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    /// `power`, `table` or `uniform`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "one")]
    pub scale: f64,
    /// `[x, a, a']` knots for `type = "table"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 3]>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
}

/// A number, or `"auto2T0"` for twice the observability time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Value(f64),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(rename = "T", default = "auto_horizon")]
    pub horizon: Horizon,
    /// Largest step; defaults to `min(1e-3, T/1000)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Times at which `simulate` dumps full states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<f64>>,
}

fn auto_horizon() -> Horizon {
    Horizon::Named(AUTO_HORIZON.into())
}

impl Default for TimeSpec {
    fn default() -> Self {
        Self {
            horizon: auto_horizon(),
            dt: None,
            snapshots: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "bump")]
    pub y: String,
    #[serde(default = "zero")]
    pub v: String,
}

fn bump() -> String {
    "bump".into()
}

fn zero() -> String {
    "zero".into()
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { y: bump(), v: zero() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservabilitySpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_mode_count")]
    pub mode_count: usize,
}

fn default_samples() -> usize {
    100
}

fn default_mode_count() -> usize {
    10
}

impl Default for ObservabilitySpec {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            mode_count: default_mode_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(default = "default_filter")]
    pub filter_modes: usize,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub tikhonov: f64,
    #[serde(default)]
    pub allow_short_horizon: bool,
}

fn default_filter() -> usize {
    10
}

fn default_cg_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    500
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            filter_modes: default_filter(),
            cg_tol: default_cg_tol(),
            max_iter: default_max_iter(),
            tikhonov: 0.0,
            allow_short_horizon: false,
        }
    }
}

impl From<&ControlSpec> for ControlSettings {
    fn from(c: &ControlSpec) -> Self {
        ControlSettings {
            filter_modes: c.filter_modes,
            cg_tol: c.cg_tol,
            max_iter: c.max_iter,
            tikhonov: c.tikhonov,
            allow_short_horizon: c.allow_short_horizon,
        }
    }
}

/// Cells of the `(K, T)` sweep; profiles are `scale · x^K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// Parses a config, reporting the line and column of syntax and schema errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {msg}"))
}

impl ExperimentConfig {
    /// Checks everything that does not need numerics.
    pub fn validate(&self) -> Result<()> {
        self.build_profile()?;
        if self.grid.n < crate::discretization::MIN_CELLS {
            return Err(field_err(
                "grid.n",
                format!(
                    "must be at least {}, got {}",
                    crate::discretization::MIN_CELLS,
                    self.grid.n
                ),
            ));
        }
        match &self.time.horizon {
            Horizon::Value(t) if !(t.is_finite() && *t > 0.0) => {
                return Err(field_err("time.T", format!("must be positive, got {t}")))
            }
            Horizon::Named(s) if s != AUTO_HORIZON => {
                return Err(field_err(
                    "time.T",
                    format!("expected a number or \"{AUTO_HORIZON}\", got \"{s}\""),
                ))
            }
            _ => {}
        }
        if let Some(dt) = self.time.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(field_err("time.dt", format!("must be positive, got {dt}")));
            }
        }
        if let Some(snaps) = &self.time.snapshots {
            if snaps.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(field_err("time.snapshots", "times must be finite and non-negative"));
            }
        }
        parse_shape(&self.initial.y).map_err(|e| field_err("initial.y", e))?;
        parse_shape(&self.initial.v).map_err(|e| field_err("initial.v", e))?;
        if self.observability.samples == 0 {
            return Err(field_err("observability.samples", "must be at least 1"));
        }
        if self.observability.mode_count == 0 || self.observability.mode_count > crate::observability::MAX_MODE_COUNT {
            return Err(field_err(
                "observability.mode_count",
                format!("must lie in 1..={}", crate::observability::MAX_MODE_COUNT),
            ));
        }
        let c = &self.control;
        if c.filter_modes == 0 {
            return Err(field_err("control.filter_modes", "must be at least 1"));
        }
        if !(c.cg_tol.is_finite() && c.cg_tol > 0.0) {
            return Err(field_err("control.cg_tol", "must be positive"));
        }
        if c.max_iter == 0 {
            return Err(field_err("control.max_iter", "must be at least 1"));
        }
        if !(c.tikhonov.is_finite() && c.tikhonov >= 0.0) {
            return Err(field_err("control.tikhonov", "must be non-negative"));
        }
        if let Some(s) = &self.sweep {
            if s.k.is_empty() || s.t.is_empty() {
                return Err(field_err("sweep", "K and T lists must be non-empty"));
            }
            if s.t.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return Err(field_err("sweep.T", "values must be positive"));
            }
            if s.workers == Some(0) {
                return Err(field_err("sweep.workers", "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn build_profile(&self) -> Result<DegeneracyProfile> {
        let p = &self.profile;
        let unexpected = |name: &str| field_err(&format!("profile.{name}"), format!("not used by type \"{}\"", p.kind));
        match p.kind.as_str() {
            "power" => {
                if p.table.is_some() {
                    return Err(unexpected("table"));
                }
                let alpha = p
                    .alpha
                    .ok_or_else(|| field_err("profile.alpha", "required for type \"power\""))?;
                make_power_profile(alpha, p.scale)
            }
            "table" => {
                if p.alpha.is_some() {
                    return Err(unexpected("alpha"));
                }
                let t = p
                    .table
                    .as_ref()
                    .ok_or_else(|| field_err("profile.table", "required for type \"table\""))?;
                DegeneracyProfile::from_table(t, p.scale)
            }
            "uniform" => {
                if p.alpha.is_some() {
                    return Err(unexpected("alpha"));
                }
                if p.table.is_some() {
                    return Err(unexpected("table"));
                }
                DegeneracyProfile::uniform(p.scale)
            }
            other => Err(field_err(
                "profile.type",
                format!("expected \"power\", \"table\" or \"uniform\", got \"{other}\""),
            )),
        }
    }

    /// Numeric `T`, resolving `"auto2T0"` through the model's class.
    pub fn resolve_horizon(&self, model: &BeamModel) -> Result<f64> {
        match &self.time.horizon {
            Horizon::Value(t) => Ok(*t),
            Horizon::Named(_) => Ok(2.0 * model.observability_time()?),
        }
    }

    /// Requested step bound: `time.dt` or `min(1e-3, T/1000)`.
    pub fn max_dt(&self, t_final: f64) -> f64 {
        self.time.dt.unwrap_or_else(|| 1e-3f64.min(t_final / 1000.0))
    }

    pub fn time_grid(&self, t_final: f64) -> Result<TimeGrid> {
        TimeGrid::fitted(t_final, self.max_dt(t_final))
    }
}

/// Named initial shapes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Zero,
    /// `x²(1−x)²`.
    Bump,
    /// Discrete eigenmode `k` (1 based), unit weighted norm.
    Mode(usize),
    /// Seeded uniform `[-1, 1]` combination of the lowest eight modes.
    Random(u64),
}

pub fn parse_shape(s: &str) -> std::result::Result<Shape, String> {
    match s {
        "zero" => return Ok(Shape::Zero),
        "bump" => return Ok(Shape::Bump),
        _ => {}
    }
    if let Some(k) = s.strip_prefix("mode:") {
        return match k.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Shape::Mode(k)),
            _ => Err(format!("\"{s}\": mode index must be a positive integer")),
        };
    }
    if let Some(seed) = s.strip_prefix("random:") {
        return seed
            .parse::<u64>()
            .map(Shape::Random)
            .map_err(|_| format!("\"{s}\": seed must be an unsigned integer"));
    }
    Err(format!(
        "unknown shape \"{s}\"; expected zero, bump, mode:<k> or random:<seed>"
    ))
}

/// Node vector of a shape. Random positions are weighted by `1/√λ_k` so that
/// every mode carries comparable energy.
pub fn shape_vector(model: &BeamModel, shape: Shape, as_position: bool) -> Result<Vec<f64>> {
    let grid = model.grid();
    match shape {
        Shape::Zero => Ok(vec![0.0; grid.len()]),
        Shape::Bump => Ok(grid.sample(|x| x * x * (1.0 - x) * (1.0 - x))),
        Shape::Mode(k) => Ok(ModalBasis::compute(model, k)?.mode(k - 1).to_vec()),
        Shape::Random(seed) => {
            let count = SAMPLE_MODES.min(model.operator().dim());
            let basis = ModalBasis::compute(model, count)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = vec![0.0; grid.len()];
            for k in 0..count {
                let c: f64 = rng.gen_range(-1.0..=1.0);
                let w = if as_position { c / basis.frequency(k) } else { c };
                for (o, p) in out.iter_mut().zip(basis.mode(k)) {
                    *o += w * p;
                }
            }
            Ok(out)
        }
    }
}

impl ExperimentConfig {
    pub fn initial_state(&self, model: &BeamModel) -> Result<BeamState> {
        let y = parse_shape(&self.initial.y).map_err(|e| field_err("initial.y", e))?;
        let v = parse_shape(&self.initial.v).map_err(|e| field_err("initial.v", e))?;
        BeamState::new(
            model.grid(),
            shape_vector(model, y, true)?,
            shape_vector(model, v, false)?,
            0.0,
        )
    }
}
