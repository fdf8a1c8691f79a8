//! Plant description: physical parameters, coupling profile, mode indices,
//! and measurement selection.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{CascadeError, Result};

/// Spatial coupling profile `beta` feeding the wave displacement into the
/// heat equation. All variants are evaluable at any `x` in `[0, L]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BetaProfile {
    /// `beta(x) = value` everywhere.
    Constant(f64),
    /// `beta(x) = amplitude` on `[a, b]`, zero elsewhere.
    Indicator { amplitude: f64, a: f64, b: f64 },
    /// Polynomial in `x`, coefficients in ascending degree order.
    Polynomial(Vec<f64>),
    /// Piecewise-linear interpolation of `(x, value)` samples sorted by `x`.
    Tabulated(Vec<(f64, f64)>),
}

impl BetaProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BetaProfile::Constant(v) => *v,
            BetaProfile::Indicator { amplitude, a, b } => {
                if x >= *a && x <= *b {
                    *amplitude
                } else {
                    0.0
                }
            }
            BetaProfile::Polynomial(coeffs) => {
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() {
                    acc = acc * x + c;
                }
                acc
            }
            BetaProfile::Tabulated(table) => {
                if table.is_empty() {
                    return 0.0;
                }
                if x <= table[0].0 {
                    return table[0].1;
                }
                if x >= table[table.len() - 1].0 {
                    return table[table.len() - 1].1;
                }
                let idx = table.partition_point(|(xi, _)| *xi <= x);
                let (x0, v0) = table[idx - 1];
                let (x1, v1) = table[idx];
                if x1 == x0 {
                    v0
                } else {
                    v0 + (v1 - v0) * (x - x0) / (x1 - x0)
                }
            }
        }
    }

    /// Interior points where the profile is not smooth. Quadrature grids
    /// must split panels here to keep Gauss-Legendre exactness.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            BetaProfile::Constant(_) | BetaProfile::Polynomial(_) => Vec::new(),
            BetaProfile::Indicator { a, b, .. } => vec![*a, *b],
            BetaProfile::Tabulated(table) => table.iter().map(|(x, _)| *x).collect(),
        }
    }

    /// True when the profile is identically zero (decoupled cascade).
    pub fn is_zero(&self) -> bool {
        match self {
            BetaProfile::Constant(v) => *v == 0.0,
            BetaProfile::Indicator { amplitude, a, b } => *amplitude == 0.0 || a >= b,
            BetaProfile::Polynomial(coeffs) => coeffs.iter().all(|c| *c == 0.0),
            BetaProfile::Tabulated(table) => table.iter().all(|(_, v)| *v == 0.0),
        }
    }

    fn check(&self, length: f64) -> Result<()> {
        match self {
            BetaProfile::Indicator { amplitude, a, b } => {
                if !(0.0 <= *a && a < b && *b <= length) {
                    return Err(CascadeError::InvalidConfig(format!(
                        "indicator support [{a}, {b}] must satisfy 0 <= a < b <= L = {length}"
                    )));
                }
                if *amplitude == 0.0 {
                    return Err(CascadeError::InvalidConfig(
                        "indicator amplitude must be nonzero".into(),
                    ));
                }
                Ok(())
            }
            BetaProfile::Tabulated(table) => {
                if table.is_empty() {
                    return Err(CascadeError::InvalidConfig(
                        "tabulated profile needs at least one sample".into(),
                    ));
                }
                if table.windows(2).any(|w| w[0].0 > w[1].0) {
                    return Err(CascadeError::InvalidConfig(
                        "tabulated profile samples must be sorted by x".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Index into one of the two eigenvalue families of the damped generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Mode {
    /// Heat-like family, `n >= 1`.
    Parabolic(usize),
    /// Wave-like family, any signed integer.
    Hyperbolic(i64),
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Parabolic(n) => write!(f, "parabolic n={n}"),
            Mode::Hyperbolic(m) => write!(f, "hyperbolic m={m}"),
        }
    }
}

/// Physical and design parameters of the cascade.
#[derive(Debug, Clone, Serialize)]
pub struct PlantConfig {
    /// Domain length `L > 0`.
    pub length: f64,
    /// Reaction coefficient `c` of the heat equation.
    pub reaction: f64,
    /// Coupling profile `beta`.
    pub beta: BetaProfile,
    /// Boundary velocity-feedback gain `alpha > 1`.
    pub alpha: f64,
    /// Target closed-loop decay rate `delta > 0`.
    pub delta: f64,
}

impl PlantConfig {
    /// Real part shared by the whole hyperbolic spectrum:
    /// `rho = log((alpha-1)/(alpha+1)) / (2 L)`.
    pub fn rho(&self) -> f64 {
        ((self.alpha - 1.0) / (self.alpha + 1.0)).ln() / (2.0 * self.length)
    }

    /// Damping magnitude `mu = -rho > 0`.
    pub fn mu(&self) -> f64 {
        -self.rho()
    }

    /// Parabolic eigenvalue `c - n^2 pi^2 / L^2`.
    pub fn parabolic_eigenvalue(&self, n: usize) -> f64 {
        let k = n as f64 * std::f64::consts::PI / self.length;
        self.reaction - k * k
    }

    /// Full validation report. `tol_alpha` is the tolerance used to detect
    /// collisions between the hyperbolic line and parabolic eigenvalues.
    pub fn validate(&self, tol_alpha: f64) -> ValidationReport {
        let mut violations = Vec::new();
        if !(self.length > 0.0) {
            violations.push(Violation::NonPositiveLength(self.length));
        }
        if !(self.delta > 0.0) {
            violations.push(Violation::NonPositiveDelta(self.delta));
        }
        if !(self.alpha > 1.0) {
            violations.push(Violation::AlphaOutOfRange(self.alpha));
            return ValidationReport { violations };
        }
        if let Err(CascadeError::InvalidConfig(msg)) = self.beta.check(self.length) {
            violations.push(Violation::BadBetaProfile(msg));
        }
        let rho = self.rho();
        if self.delta > 0.0 && rho >= -self.delta {
            violations.push(Violation::DampingTooWeak {
                rho,
                delta: self.delta,
            });
        }
        // Collision of the hyperbolic line with c - n^2 pi^2 / L^2. Only
        // finitely many n can come close since the gap grows like n^2;
        // n = 0 covers the real hyperbolic eigenvalue itself.
        let l = self.length;
        let mut n = 0usize;
        loop {
            let k2 = (n as f64 * std::f64::consts::PI / l).powi(2);
            let gap = self.reaction - rho - k2;
            if gap.abs() < tol_alpha {
                violations.push(Violation::AlphaResonance { n, gap });
            }
            if k2 > self.reaction - rho + tol_alpha + 1.0 {
                break;
            }
            n += 1;
        }
        ValidationReport { violations }
    }

    /// Validate and reject on any violation.
    pub fn validated(&self, tol_alpha: f64) -> Result<()> {
        let report = self.validate(tol_alpha);
        if report.ok() {
            Ok(())
        } else {
            Err(CascadeError::InvalidConfig(report.to_string()))
        }
    }
}

/// One violated invariant found by [`PlantConfig::validate`].
#[derive(Debug, Clone, Serialize)]
pub enum Violation {
    NonPositiveLength(f64),
    NonPositiveDelta(f64),
    /// `alpha <= 1`: the velocity feedback no longer shifts the wave
    /// spectrum onto a damped vertical line; out of supported range.
    AlphaOutOfRange(f64),
    BadBetaProfile(String),
    /// `rho >= -delta`: the preliminary feedback cannot meet the target rate.
    DampingTooWeak {
        rho: f64,
        delta: f64,
    },
    /// `c` within `tol_alpha` of `rho + n^2 pi^2 / L^2`: a parabolic
    /// eigenvalue collides with the real hyperbolic eigenvalue.
    AlphaResonance {
        n: usize,
        gap: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveLength(l) => write!(f, "length must be positive, got {l}"),
            Violation::NonPositiveDelta(d) => write!(f, "delta must be positive, got {d}"),
            Violation::AlphaOutOfRange(a) => {
                write!(f, "alpha must exceed 1 (got {a}); alpha in (0,1) is unsupported")
            }
            Violation::BadBetaProfile(msg) => write!(f, "beta profile invalid: {msg}"),
            Violation::DampingTooWeak { rho, delta } => write!(
                f,
                "rho = {rho:.6} >= -delta = {:.6}: wave damping too weak for the target rate",
                -delta
            ),
            Violation::AlphaResonance { n, gap } => write!(
                f,
                "c collides with rho + n^2 pi^2 / L^2 at n = {n} (gap {gap:.3e})"
            ),
        }
    }
}

/// Outcome of [`PlantConfig::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            write!(f, "ok")
        } else {
            let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            write!(f, "{}", msgs.join("; "))
        }
    }
}

/// Default tolerance for the resonance check in [`PlantConfig::validate`].
pub const DEFAULT_TOL_ALPHA: f64 = 1e-9;

/// Heat measurement wired to the observer.
#[derive(Clone)]
pub enum MeasurementKind {
    /// Weighted average `integral of c_o(x) y(t,x) dx`.
    Distributed(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Point temperature `y(t, xi_p)`.
    PointwiseDirichlet(f64),
    /// Point heat flux `d/dx y(t, xi_p)`.
    PointwiseNeumann(f64),
}

impl fmt::Debug for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementKind::Distributed(_) => write!(f, "Distributed(<weight fn>)"),
            MeasurementKind::PointwiseDirichlet(x) => write!(f, "PointwiseDirichlet({x})"),
            MeasurementKind::PointwiseNeumann(x) => write!(f, "PointwiseNeumann({x})"),
        }
    }
}

/// Measurement choice plus the mode-index weighting exponent used by the
/// certificate bookkeeping (0 distributed, 1 pointwise temperature,
/// 7/4 pointwise flux).
#[derive(Debug, Clone)]
pub struct MeasurementSpec {
    pub kind: MeasurementKind,
}

impl MeasurementSpec {
    pub fn distributed<F>(weight: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        MeasurementSpec {
            kind: MeasurementKind::Distributed(Arc::new(weight)),
        }
    }

    pub fn dirichlet(xi: f64) -> Self {
        MeasurementSpec {
            kind: MeasurementKind::PointwiseDirichlet(xi),
        }
    }

    pub fn neumann(xi: f64) -> Self {
        MeasurementSpec {
            kind: MeasurementKind::PointwiseNeumann(xi),
        }
    }

    pub fn kappa(&self) -> f64 {
        match self.kind {
            MeasurementKind::Distributed(_) => 0.0,
            MeasurementKind::PointwiseDirichlet(_) => 1.0,
            MeasurementKind::PointwiseNeumann(_) => 1.75,
        }
    }

    pub fn check(&self, length: f64) -> Result<()> {
        match self.kind {
            MeasurementKind::PointwiseDirichlet(xi) | MeasurementKind::PointwiseNeumann(xi) => {
                if xi < 0.0 || xi > length {
                    return Err(CascadeError::InvalidConfig(format!(
                        "measurement location {xi} outside [0, {length}]"
                    )));
                }
                Ok(())
            }
            MeasurementKind::Distributed(_) => Ok(()),
        }
    }
}
