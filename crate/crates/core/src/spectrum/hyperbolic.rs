//! Wave-family modes: damped-line eigenvalues, sinh eigenvectors, and the
//! heat component obtained from the coupled second-order problem.
//!
//! The heat component is evaluated in the split form
//!
//! ```text
//! phi1(x) = ( sinh(r (L-x)) F1(x) + sinh(r x) F2(x) ) / (A_m r sinh(r L))
//! F1(x) = int_0^x beta(s) sinh(lambda s) sinh(r s) ds
//! F2(x) = int_x^L beta(s) sinh(lambda s) sinh(r (L-s)) ds
//! ```
//!
//! which is free of the cancellation between counter-growing exponentials
//! that the single-integral expression suffers from once `|m|` grows.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::plant::{BetaProfile, PlantConfig};
use crate::quadrature::{panel_complex, GaussLegendre, Grid};

use super::{FieldSample, GridHints};

pub(crate) struct HyperbolicMode {
    pub lambda: Complex64,
    pub r: Complex64,
    pub norm_const: f64,
    /// Amplitude normalizer used on the eigenvector side. Differs from
    /// `norm_const` only under fault injection, which must corrupt one side
    /// of the pairing to be observable at all.
    phi_norm: f64,
    length: f64,
    beta: BetaProfile,
    breaks: Vec<f64>,
    beta_zero: bool,
    panels: usize,
    rule: GaussLegendre,
    tables: OnceLock<HypTables>,
}

struct HypTables {
    edges: Vec<f64>,
    f1_prefix: Vec<Complex64>,
    f2_suffix: Vec<Complex64>,
}

impl HyperbolicMode {
    pub fn new(
        cfg: &PlantConfig,
        m: i64,
        order: usize,
        base_panels: usize,
        norm_scale: f64,
    ) -> Self {
        let l = cfg.length;
        let mu = cfg.mu();
        let lambda = Complex64::new(cfg.rho(), m as f64 * std::f64::consts::PI / l);
        // Principal square root keeps Re(r) >= 0.
        let r = (lambda - cfg.reaction).sqrt();
        let m_pi = m as f64 * std::f64::consts::PI;
        let norm_const = ((mu * mu * l * l + m_pi * m_pi) * (2.0 * mu * l).sinh()).sqrt()
            / (l * (2.0 * mu).sqrt());
        HyperbolicMode {
            lambda,
            r,
            norm_const,
            phi_norm: norm_const * norm_scale,
            length: l,
            beta: cfg.beta.clone(),
            breaks: cfg.beta.breakpoints(),
            beta_zero: cfg.beta.is_zero(),
            panels: base_panels.max(8).max(2 * m.unsigned_abs() as usize),
            rule: GaussLegendre::new(order),
            tables: OnceLock::new(),
        }
    }

    fn tables(&self) -> &HypTables {
        self.tables.get_or_init(|| {
            let grid = Grid::uniform(0.0, self.length, self.panels).split_at(&self.breaks);
            let edges = grid.edges().to_vec();
            let n_edges = edges.len();
            let mut f1_prefix = vec![Complex64::new(0.0, 0.0); n_edges];
            let mut f2_suffix = vec![Complex64::new(0.0, 0.0); n_edges];
            for k in 1..n_edges {
                f1_prefix[k] = f1_prefix[k - 1]
                    + panel_complex(&self.rule, edges[k - 1], edges[k], &mut |s| self.j1(s));
            }
            for k in (0..n_edges - 1).rev() {
                f2_suffix[k] = f2_suffix[k + 1]
                    + panel_complex(&self.rule, edges[k], edges[k + 1], &mut |s| self.j2(s));
            }
            HypTables {
                edges,
                f1_prefix,
                f2_suffix,
            }
        })
    }

    #[inline]
    fn j1(&self, s: f64) -> Complex64 {
        (self.lambda * s).sinh() * (self.r * s).sinh() * self.beta.eval(s)
    }

    #[inline]
    fn j2(&self, s: f64) -> Complex64 {
        (self.lambda * s).sinh() * (self.r * (self.length - s)).sinh() * self.beta.eval(s)
    }

    fn f_parts(&self, x: f64) -> (Complex64, Complex64) {
        let t = self.tables();
        let x = x.clamp(0.0, self.length);
        let k = t.edges.partition_point(|e| *e < x).max(1) - 1;
        let mut f1 = t.f1_prefix[k];
        if x > t.edges[k] {
            f1 += panel_complex(&self.rule, t.edges[k], x, &mut |s| self.j1(s));
        }
        let mut f2 = t.f2_suffix[k + 1];
        if x < t.edges[k + 1] {
            f2 += panel_complex(&self.rule, x, t.edges[k + 1], &mut |s| self.j2(s));
        }
        (f1, f2)
    }

    /// Heat component and its spatial derivative.
    pub fn phi1_and_prime(&self, x: f64) -> (Complex64, Complex64) {
        if self.beta_zero {
            return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        }
        let (f1, f2) = self.f_parts(x);
        let r = self.r;
        let l = self.length;
        let denom = (r * l).sinh() * self.phi_norm;
        let value = ((r * (l - x)).sinh() * f1 + (r * x).sinh() * f2) / (denom * r);
        let deriv = ((r * x).cosh() * f2 - (r * (l - x)).cosh() * f1) / denom;
        (value, deriv)
    }

    pub fn phi_sample(&self, x: f64) -> FieldSample {
        let (heat, heat_prime) = self.phi1_and_prime(x);
        let sh = (self.lambda * x).sinh();
        let ch = (self.lambda * x).cosh();
        FieldSample {
            heat,
            heat_prime,
            wave: sh / self.phi_norm,
            wave_prime: self.lambda * ch / self.phi_norm,
            velocity: self.lambda * sh / self.phi_norm,
        }
    }

    pub fn psi_sample(&self, x: f64) -> FieldSample {
        let zero = Complex64::new(0.0, 0.0);
        let lc = self.lambda.conj();
        let sh = (lc * x).sinh();
        let ch = (lc * x).cosh();
        let a_over_l = self.norm_const / self.length;
        FieldSample {
            heat: zero,
            heat_prime: zero,
            wave: a_over_l * sh / (lc * lc),
            wave_prime: a_over_l * ch / lc,
            velocity: -a_over_l * sh / lc,
        }
    }

    pub fn hints(&self) -> GridHints {
        GridHints {
            osc_panels: self.panels,
            layers: Vec::new(),
        }
    }
}

/// Minimum panel count accepted for a wave-family mode of index `m`.
pub(crate) fn required_panels(m: i64) -> usize {
    (2 * m.unsigned_abs() as usize).max(8)
}

/// Hyperbolic eigenvalue without building the mode.
pub(crate) fn eigenvalue(cfg: &PlantConfig, m: i64) -> Complex64 {
    Complex64::new(cfg.rho(), m as f64 * std::f64::consts::PI / cfg.length)
}
