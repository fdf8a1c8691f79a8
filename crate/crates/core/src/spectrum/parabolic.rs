//! Heat-family modes: sine eigenvectors and the explicit dual eigenvectors
//! of the adjoint generator.
//!
//! The dual components are evaluated through the Green's-function form
//!
//! ```text
//! B(x) = ( C(x) * int_0^x sinh(lambda s) g(s) ds
//!        + sinh(lambda x) * int_x^L C(s) g(s) ds ) / C(0)
//! ```
//!
//! with `g(s) = beta(s) sin(n pi s / L)` and
//! `C(x) = cosh(lambda (x-L)) - alpha sinh(lambda (x-L))`, which solves
//! `B'' = lambda^2 B - lambda g`, `B(0) = 0`, `B'(L) + alpha lambda B(L) = 0`.
//! Every factor is kept under an explicit exponential envelope so the
//! evaluation stays finite and cancellation-free for strongly damped modes,
//! where the textbook expression overflows `f64`.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::plant::{BetaProfile, PlantConfig};
use crate::quadrature::{concentrated_grid, panel_real, GaussLegendre, Grid};

use super::{FieldSample, GridHints};

/// Relative threshold below which `lambda` is treated as zero and the
/// degenerate dual formulas are used. The two branches agree analytically
/// but the generic one loses precision like `eps / lambda` near zero.
pub(crate) fn zero_branch_tol(reaction: f64) -> f64 {
    1e-9 * reaction.abs().max(1.0)
}

pub(crate) struct ParabolicMode {
    pub n: usize,
    pub lambda: f64,
    pub degenerate: bool,
    length: f64,
    alpha: f64,
    beta: BetaProfile,
    breaks: Vec<f64>,
    beta_zero: bool,
    scale: f64, // sqrt(2/L)
    freq: f64,  // n pi / L
    rule: GaussLegendre,
    base_panels: usize,
    tables: OnceLock<PrefixTables>,
}

struct PrefixTables {
    edges: Vec<f64>,
    /// integral of g over [0, edges[k]]
    g_prefix: Vec<f64>,
    /// integral of s g(s) over [0, edges[k]]
    sg_prefix: Vec<f64>,
}

impl ParabolicMode {
    pub fn new(cfg: &PlantConfig, n: usize, order: usize, base_panels: usize) -> Self {
        let lambda = cfg.parabolic_eigenvalue(n);
        let breaks = cfg.beta.breakpoints();
        ParabolicMode {
            n,
            lambda,
            degenerate: lambda.abs() < zero_branch_tol(cfg.reaction),
            length: cfg.length,
            alpha: cfg.alpha,
            beta: cfg.beta.clone(),
            beta_zero: cfg.beta.is_zero(),
            breaks,
            scale: (2.0 / cfg.length).sqrt(),
            freq: n as f64 * std::f64::consts::PI / cfg.length,
            rule: GaussLegendre::new(order),
            base_panels: base_panels.max(2 * n).max(8),
            tables: OnceLock::new(),
        }
    }

    #[inline]
    fn g(&self, s: f64) -> f64 {
        self.beta.eval(s) * (self.freq * s).sin()
    }

    fn tables(&self) -> &PrefixTables {
        self.tables.get_or_init(|| {
            let grid = Grid::uniform(0.0, self.length, self.base_panels).split_at(&self.breaks);
            let edges = grid.edges().to_vec();
            let mut g_prefix = Vec::with_capacity(edges.len());
            let mut sg_prefix = Vec::with_capacity(edges.len());
            let mut acc_g = 0.0;
            let mut acc_sg = 0.0;
            g_prefix.push(0.0);
            sg_prefix.push(0.0);
            for w in edges.windows(2) {
                acc_g += panel_real(&self.rule, w[0], w[1], &mut |s| self.g(s));
                acc_sg += panel_real(&self.rule, w[0], w[1], &mut |s| s * self.g(s));
                g_prefix.push(acc_g);
                sg_prefix.push(acc_sg);
            }
            PrefixTables {
                edges,
                g_prefix,
                sg_prefix,
            }
        })
    }

    fn prefix_to(&self, x: f64, weighted: bool) -> f64 {
        let t = self.tables();
        let x = x.clamp(0.0, self.length);
        let k = t.edges.partition_point(|e| *e < x).max(1) - 1;
        let base = if weighted {
            t.sg_prefix[k]
        } else {
            t.g_prefix[k]
        };
        let lo = t.edges[k];
        if x - lo <= 0.0 {
            return base;
        }
        base + panel_real(&self.rule, lo, x, &mut |s| {
            if weighted {
                s * self.g(s)
            } else {
                self.g(s)
            }
        })
    }

    /// `int_x^L g`
    fn g_suffix(&self, x: f64) -> f64 {
        let t = self.tables();
        t.g_prefix.last().unwrap() - self.prefix_to(x, false)
    }

    /// Iterated coupling integral `int_0^x int_tau^L g(s) ds dtau`,
    /// computed as `x int_x^L g + int_0^x s g(s) ds`.
    fn t3(&self, x: f64) -> f64 {
        x * self.g_suffix(x) + self.prefix_to(x, true)
    }

    /// Scaled kernels for the Green's-function form. `a` is `|lambda|`.
    fn f_tildes(&self, x: f64) -> (f64, f64) {
        if self.beta_zero {
            return (0.0, 0.0);
        }
        let lam = self.lambda;
        let a = lam.abs();
        let sgn = lam.signum();
        let (p, q) = (1.0 - self.alpha, 1.0 + self.alpha);
        let l = self.length;
        let osc = 2.0 * self.n as f64 / l;

        let g1 = concentrated_grid(0.0, x, true, a, osc, &self.breaks);
        let f1 = g1.integrate_real(&self.rule, |s| {
            let k1 = sgn * 0.5 * ((a * (s - x)).exp() - (-a * (s + x)).exp());
            self.g(s) * k1
        });

        let g2 = concentrated_grid(x, l, false, a, osc, &self.breaks);
        let f2 = g2.integrate_real(&self.rule, |s| {
            let e1 = (lam * (s - l) - a * (l - x)).exp();
            let e2 = (-lam * (s - l) - a * (l - x)).exp();
            self.g(s) * 0.5 * (p * e1 + q * e2)
        });
        (f1, f2)
    }

    /// Envelope-scaled boundary-value factors at `x`.
    fn envelopes(&self, x: f64) -> Envelopes {
        let lam = self.lambda;
        let a = lam.abs();
        let sgn = lam.signum();
        let (p, q) = (1.0 - self.alpha, 1.0 + self.alpha);
        let l = self.length;
        let e1 = (-(lam + a) * (l - x)).exp();
        let e2 = ((lam - a) * (l - x)).exp();
        Envelopes {
            c: 0.5 * (p * e1 + q * e2),
            c_prime: 0.5 * (p * e1 - q * e2),
            sinh: sgn * 0.5 * (1.0 - (-2.0 * a * x).exp()),
            cosh: 0.5 * (1.0 + (-2.0 * a * x).exp()),
        }
    }

    fn c_tilde_zero(&self) -> f64 {
        self.envelopes(0.0).c
    }

    /// `(B(x), B'(x))` for the generic branch.
    fn b_parts(&self, x: f64) -> (f64, f64) {
        let (f1, f2) = self.f_tildes(x);
        let env = self.envelopes(x);
        let c0 = self.c_tilde_zero();
        let b = (env.c * f1 + env.sinh * f2) / c0;
        let bp = self.lambda * (env.c_prime * f1 + env.cosh * f2) / c0;
        (b, bp)
    }

    /// Coupling coefficient. Generic branch: `int_0^L g sinh(lambda s) ds`,
    /// which overflows to +/-inf for strongly damped modes; degenerate
    /// branch: the iterated integral, equal to `int_0^L s g(s) ds`.
    pub fn gamma(&self) -> f64 {
        if self.degenerate {
            return self.prefix_to(self.length, true);
        }
        let a = self.lambda.abs();
        let (f1, _) = self.f_tildes(self.length);
        if f1 == 0.0 {
            return 0.0;
        }
        let log_mag = a * self.length + f1.abs().ln();
        if log_mag > 709.0 {
            f64::INFINITY * f1.signum()
        } else {
            f1 * (a * self.length).exp()
        }
    }

    pub fn phi_sample(&self, x: f64) -> FieldSample {
        let zero = Complex64::new(0.0, 0.0);
        FieldSample {
            heat: Complex64::new(self.scale * (self.freq * x).sin(), 0.0),
            heat_prime: Complex64::new(self.scale * self.freq * (self.freq * x).cos(), 0.0),
            wave: zero,
            wave_prime: zero,
            velocity: zero,
        }
    }

    pub fn psi_sample(&self, x: f64) -> FieldSample {
        let s = self.scale;
        let (wave, wave_prime, velocity) = if self.beta_zero {
            (0.0, 0.0, 0.0)
        } else if self.degenerate {
            let gamma0 = self.prefix_to(self.length, true);
            (
                self.alpha * gamma0 * s * x,
                self.alpha * gamma0 * s,
                s * self.t3(x),
            )
        } else {
            let (b, bp) = self.b_parts(x);
            let il = 1.0 / self.lambda;
            (
                s * (self.t3(x) * il - b * il * il),
                s * (self.g_suffix(x) * il - bp * il * il),
                s * b * il,
            )
        };
        FieldSample {
            heat: Complex64::new(s * (self.freq * x).sin(), 0.0),
            heat_prime: Complex64::new(s * self.freq * (self.freq * x).cos(), 0.0),
            wave: Complex64::new(wave, 0.0),
            wave_prime: Complex64::new(wave_prime, 0.0),
            velocity: Complex64::new(velocity, 0.0),
        }
    }

    /// Outer-integration hints: resolve the sine plus the exponential
    /// boundary layers of the dual components.
    pub fn hints(&self) -> GridHints {
        let a = self.lambda.abs();
        let mut layers = Vec::new();
        if a * self.length > 40.0 {
            layers.push((0.0, 1.0 / a));
            layers.push((self.length, 1.0 / a));
        }
        GridHints {
            osc_panels: (2 * self.n).max(8),
            layers,
        }
    }
}

struct Envelopes {
    /// `C(x) e^{-|lambda|(L-x)}`
    c: f64,
    /// `(sinh - alpha cosh)(lambda (x-L)) e^{-|lambda|(L-x)}`
    c_prime: f64,
    /// `sinh(lambda x) e^{-|lambda| x}`
    sinh: f64,
    /// `cosh(lambda x) e^{-|lambda| x}`
    cosh: f64,
}
