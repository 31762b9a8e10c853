//! Degeneracy coefficients `a(x)` on `[0, 1]` with `a(0) = 0`.
//!
//! A profile is classified by its degeneracy exponent
//! `K = sup_{x in (0,1]} x |a'(x)| / a(x)`: weakly degenerate (WD) when
//! `K < 1`, strongly degenerate (SD) when `1 <= K < 2`. Everything else in the
//! crate consumes the classification through `K` and `a(1)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest sample abscissa used when estimating the supremum defining `K`.
///
/// The supremum is often reached only as `x -> 0+` (for example `a = x(2 - x)`),
/// so the log-spaced sample reaches far enough that `f64` resolves the limit.
const LOG_SAMPLE_FLOOR_EXP: f64 = -30.0;

/// Upper end of the window on which the monotonicity of `x^K / a` is checked
/// for custom profiles.
const MONOTONE_WINDOW: f64 = 0.1;

pub const MIN_RESOLUTION: usize = 100;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User supplied coefficient together with its derivative.
#[derive(Clone)]
pub struct CustomCoefficient {
    label: String,
    a: ScalarFn,
    a_prime: ScalarFn,
}

impl CustomCoefficient {
    pub fn new<A, D>(label: impl Into<String>, a: A, a_prime: D) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            a: Arc::new(a),
            a_prime: Arc::new(a_prime),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for CustomCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCoefficient")
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum ProfileKind {
    /// `a(x) = scale * x^alpha`.
    Power { alpha: f64 },
    /// `a(x) = scale * c(x)` for a user supplied `c` and `c'`.
    Custom(CustomCoefficient),
    /// `a(x) = scale`. Not degenerate; only for reference computations,
    /// [`classify`] rejects it.
    Uniform,
}

/// The coefficient `a(x)` of the fourth-order term.
#[derive(Clone, Debug)]
pub struct DegeneracyProfile {
    kind: ProfileKind,
    scale: f64,
}

/// Builds `a(x) = scale * x^alpha`.
pub fn make_power_profile(alpha: f64, scale: f64) -> Result<DegeneracyProfile> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidProfile(format!(
            "scale must be positive and finite, got {scale}"
        )));
    }
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 2.0) {
        return Err(Error::DegeneracyOutOfRange { k: alpha });
    }
    Ok(DegeneracyProfile {
        kind: ProfileKind::Power { alpha },
        scale,
    })
}

impl DegeneracyProfile {
    pub fn power(alpha: f64, scale: f64) -> Result<Self> {
        make_power_profile(alpha, scale)
    }

    /// Wraps a custom coefficient. The values `a(0) = 0` and `a > 0` on `(0, 1]`
    /// are checked on a dense sample; `K` is checked by [`classify`].
    pub fn custom(coefficient: CustomCoefficient, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        let profile = Self {
            kind: ProfileKind::Custom(coefficient),
            scale,
        };
        let a0 = profile.value(0.0);
        if !a0.is_finite() || a0.abs() > 1e-12 * profile.value(1.0).abs().max(1.0) {
            return Err(Error::InvalidProfile(format!("a(0) must vanish, got {a0:e}")));
        }
        for j in 1..=1000 {
            let x = j as f64 / 1000.0;
            let ax = profile.value(x);
            if !(ax.is_finite() && ax > 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "a must be positive on (0, 1], got a({x}) = {ax:e}"
                )));
            }
        }
        Ok(profile)
    }

    /// Cubic Hermite interpolant through `(x, a, a')` knots.
    ///
    /// Knots must be sorted, start at `x = 0` with `a = 0` and end at `x = 1`.
    pub fn from_table(points: &[[f64; 3]], scale: f64) -> Result<Self> {
        let table = HermiteTable::new(points)?;
        let table = Arc::new(table);
        let t2 = Arc::clone(&table);
        let coefficient = CustomCoefficient::new(
            format!("table({} knots)", points.len()),
            move |x| table.value(x),
            move |x| t2.derivative(x),
        );
        Self::custom(coefficient, scale)
    }

    /// Constant coefficient `a ≡ scale`, the classical clamped beam.
    pub fn uniform(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self {
            kind: ProfileKind::Uniform,
            scale,
        })
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            ProfileKind::Power { alpha } => self.scale * x.powf(*alpha),
            ProfileKind::Custom(c) => self.scale * (c.a)(x),
            ProfileKind::Uniform => self.scale,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            ProfileKind::Power { alpha } => self.scale * alpha * x.powf(alpha - 1.0),
            ProfileKind::Custom(c) => self.scale * (c.a_prime)(x),
            ProfileKind::Uniform => 0.0,
        }
    }

    /// `x a'(x) / a(x)` for `x` in `(0, 1]`, exact for power profiles.
    pub fn log_slope(&self, x: f64) -> f64 {
        match &self.kind {
            ProfileKind::Power { alpha } => *alpha,
            ProfileKind::Custom(c) => x * (c.a_prime)(x) / (c.a)(x),
            ProfileKind::Uniform => 0.0,
        }
    }

    /// Short human readable description used in reports.
    pub fn describe(&self) -> String {
        match &self.kind {
            ProfileKind::Power { alpha } => format!("{} * x^{}", self.scale, alpha),
            ProfileKind::Custom(c) => format!("{} * {}", self.scale, c.label),
            ProfileKind::Uniform => format!("{} (uniform)", self.scale),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "WD")]
    Weak,
    #[serde(rename = "SD")]
    Strong,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Weak => "WD",
            Regime::Strong => "SD",
        })
    }
}

/// Degeneracy exponent `K`, regime and `a(1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyClass {
    #[serde(rename = "K")]
    pub k: f64,
    pub regime: Regime,
    pub a_at_1: f64,
}

impl DegeneracyClass {
    /// Validates `K` in `(0, 2)` and `a(1) > 0` and derives the regime.
    pub fn new(k: f64, a_at_1: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0 && k < 2.0) {
            return Err(Error::DegeneracyOutOfRange { k });
        }
        if !(a_at_1.is_finite() && a_at_1 > 0.0) {
            return Err(Error::InvalidProfile(format!("a(1) must be positive, got {a_at_1}")));
        }
        let regime = if k < 1.0 { Regime::Weak } else { Regime::Strong };
        Ok(Self { k, regime, a_at_1 })
    }

    /// `max{1, 4/a(1), 4K/a(1)}`, the constant shared by `T0` and the lower bound.
    pub fn boundary_constant(&self) -> f64 {
        1f64.max(4.0 / self.a_at_1).max(4.0 * self.k / self.a_at_1)
    }
}

/// Computes `K` and the regime of `profile`.
///
/// Power profiles return `alpha` exactly. Custom profiles take the maximum of
/// `x |a'| / a` over `resolution` log-spaced samples in `(0, 1]` and must have
/// `x^K / a` non-decreasing on `(0, 0.1]`.
pub fn classify(profile: &DegeneracyProfile, resolution: usize) -> Result<DegeneracyClass> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidParameter(format!(
            "classification resolution must be at least {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    let a1 = profile.value(1.0);
    let k = match profile.kind() {
        ProfileKind::Power { alpha } => *alpha,
        ProfileKind::Uniform => return Err(Error::DegeneracyOutOfRange { k: 0.0 }),
        ProfileKind::Custom(_) => {
            let samples = log_samples(resolution);
            let mut k = 0.0f64;
            for &x in &samples {
                let ax = profile.value(x);
                if !(ax.is_finite() && ax > 0.0) {
                    return Err(Error::InvalidProfile(format!(
                        "non-positive coefficient a({x:e}) = {ax:e}"
                    )));
                }
                let slope = (x * profile.derivative(x) / ax).abs();
                if !slope.is_finite() {
                    return Err(Error::InvalidProfile(format!("x a'/a is not finite at x = {x:e}")));
                }
                k = k.max(slope);
            }
            if !(k > 0.0 && k < 2.0) {
                return Err(Error::DegeneracyOutOfRange { k });
            }
            check_monotone_near_origin(profile, k, &samples)?;
            k
        }
    };
    DegeneracyClass::new(k, a1)
}

fn log_samples(resolution: usize) -> Vec<f64> {
    let last = (resolution - 1) as f64;
    let mut xs: Vec<f64> = (0..resolution)
        .map(|j| 10f64.powf(LOG_SAMPLE_FLOOR_EXP * (1.0 - j as f64 / last)))
        .collect();
    if let Some(x) = xs.last_mut() {
        *x = 1.0;
    }
    xs
}

fn check_monotone_near_origin(profile: &DegeneracyProfile, k: f64, samples: &[f64]) -> Result<()> {
    // ln(x^K / a) along increasing x inside the window
    let mut prev: Option<(f64, f64)> = None;
    for &x in samples.iter().take_while(|&&x| x <= MONOTONE_WINDOW) {
        let g = k * x.ln() - profile.value(x).ln();
        if let Some((px, pg)) = prev {
            if g < pg - 1e-9 * pg.abs().max(1.0) {
                return Err(Error::InvalidProfile(format!(
                    "x^K/a decreases between x = {px:e} and x = {x:e}"
                )));
            }
        }
        prev = Some((x, g));
    }
    Ok(())
}

/// Minimal observability time `T0 = 4/(2-K) * max{1, 4/a(1), 4K/a(1)}`.
pub fn observability_time(cls: &DegeneracyClass) -> f64 {
    4.0 / (2.0 - cls.k) * cls.boundary_constant()
}

/// Piecewise cubic Hermite interpolation of `a` from values and slopes.
#[derive(Debug)]
struct HermiteTable {
    x: Vec<f64>,
    a: Vec<f64>,
    da: Vec<f64>,
}

impl HermiteTable {
    fn new(points: &[[f64; 3]]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidProfile("table needs at least two knots".into()));
        }
        if points[0][0] != 0.0 || points[points.len() - 1][0] != 1.0 {
            return Err(Error::InvalidProfile("table knots must span [0, 1]".into()));
        }
        if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return Err(Error::InvalidProfile("table knots must be strictly increasing".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("table entries must be finite".into()));
        }
        Ok(Self {
            x: points.iter().map(|p| p[0]).collect(),
            a: points.iter().map(|p| p[1]).collect(),
            da: points.iter().map(|p| p[2]).collect(),
        })
    }

    fn segment(&self, x: f64) -> usize {
        let j = self.x.partition_point(|&xk| xk <= x);
        j.clamp(1, self.x.len() - 1) - 1
    }

    fn value(&self, x: f64) -> f64 {
        let j = self.segment(x);
        let h = self.x[j + 1] - self.x[j];
        let s = (x - self.x[j]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.a[j] + h10 * h * self.da[j] + h01 * self.a[j + 1] + h11 * h * self.da[j + 1]
    }

    fn derivative(&self, x: f64) -> f64 {
        let j = self.segment(x);
        let h = self.x[j + 1] - self.x[j];
        let s = (x - self.x[j]) / h;
        let d00 = 6.0 * s * (s - 1.0) / h;
        let d10 = (1.0 - s) * (1.0 - 3.0 * s);
        let d01 = -d00;
        let d11 = s * (3.0 * s - 2.0);
        d00 * self.a[j] + d10 * self.da[j] + d01 * self.a[j + 1] + d11 * self.da[j + 1]
    }
}
