//! Composite Gauss-Legendre quadrature with grids tuned for oscillatory
//! integrands and exponentially concentrated kernels.

use num_complex::Complex64;

use crate::error::{CascadeError, Result};

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights by Newton iteration on the Legendre polynomial.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be at least 1");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Legendre recurrence for P_n(x) and P'_n(x).
                let mut p0 = 1.0;
                let mut p1 = x;
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// User-facing quadrature control: a Gauss-Legendre order and a base panel
/// count over the domain. Operations refine internally where a mode demands
/// more resolution than the base grid provides.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub panels: usize,
    pub order: usize,
    rule: GaussLegendre,
}

impl Quadrature {
    pub fn new(panels: usize, order: usize) -> Result<Self> {
        if panels < 1 || order < 2 {
            return Err(CascadeError::InvalidConfig(format!(
                "quadrature needs panels >= 1 and order >= 2, got {panels} x {order}"
            )));
        }
        Ok(Quadrature {
            panels,
            order,
            rule: GaussLegendre::new(order),
        })
    }

    /// 32-point rule, 16 panels. Callers working with modes above index 8
    /// should scale `panels` to twice the highest mode index.
    pub fn default_rule() -> Self {
        Quadrature::new(16, 32).expect("static sizes are valid")
    }

    /// Base panel count plus rule suited for modes up to the given index.
    pub fn for_max_mode(max_index: usize) -> Self {
        Quadrature::new(16.max(2 * max_index), 32).expect("static sizes are valid")
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    pub fn total_nodes(&self) -> usize {
        self.panels * self.order
    }
}

/// Panel partition of an interval.
#[derive(Debug, Clone)]
pub struct Grid {
    edges: Vec<f64>,
}

impl Grid {
    pub fn uniform(lo: f64, hi: f64, panels: usize) -> Self {
        let panels = panels.max(1);
        let mut edges = Vec::with_capacity(panels + 1);
        for i in 0..=panels {
            edges.push(lo + (hi - lo) * i as f64 / panels as f64);
        }
        Grid { edges }
    }

    pub fn from_edges(mut edges: Vec<f64>) -> Self {
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * (1.0 + a.abs()));
        assert!(edges.len() >= 2, "grid needs at least one panel");
        Grid { edges }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn panel_count(&self) -> usize {
        self.edges.len() - 1
    }

    /// Insert interior breakpoints (values outside the span are ignored).
    pub fn split_at(mut self, points: &[f64]) -> Self {
        let lo = self.edges[0];
        let hi = *self.edges.last().unwrap();
        let mut extra: Vec<f64> = points
            .iter()
            .copied()
            .filter(|p| *p > lo && *p < hi)
            .collect();
        if extra.is_empty() {
            return self;
        }
        self.edges.append(&mut extra);
        Grid::from_edges(self.edges)
    }

    /// Add geometrically growing panels around `center` starting at `width`,
    /// to resolve a boundary layer of that scale.
    pub fn refined_at(mut self, center: f64, width: f64) -> Self {
        let lo = self.edges[0];
        let hi = *self.edges.last().unwrap();
        if width <= 0.0 || !width.is_finite() {
            return self;
        }
        let span = hi - lo;
        let mut w = width;
        let mut extra = Vec::new();
        while w < span {
            for p in [center - w, center + w] {
                if p > lo && p < hi {
                    extra.push(p);
                }
            }
            w *= 2.0;
        }
        if extra.is_empty() {
            return self;
        }
        self.edges.append(&mut extra);
        Grid::from_edges(self.edges)
    }

    pub fn integrate_complex<F>(&self, rule: &GaussLegendre, mut f: F) -> Complex64
    where
        F: FnMut(f64) -> Complex64,
    {
        let mut acc = Complex64::new(0.0, 0.0);
        for w in self.edges.windows(2) {
            acc += panel_complex(rule, w[0], w[1], &mut f);
        }
        acc
    }

    pub fn integrate_real<F>(&self, rule: &GaussLegendre, mut f: F) -> f64
    where
        F: FnMut(f64) -> f64,
    {
        let mut acc = 0.0;
        for w in self.edges.windows(2) {
            acc += panel_real(rule, w[0], w[1], &mut f);
        }
        acc
    }
}

/// Single-panel Gauss-Legendre for a complex integrand.
pub fn panel_complex<F>(rule: &GaussLegendre, a: f64, b: f64, f: &mut F) -> Complex64
where
    F: FnMut(f64) -> Complex64,
{
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, w) in rule.nodes.iter().zip(rule.weights.iter()) {
        acc += f(mid + half * x) * *w;
    }
    acc * half
}

/// Single-panel Gauss-Legendre for a real integrand.
pub fn panel_real<F>(rule: &GaussLegendre, a: f64, b: f64, f: &mut F) -> f64
where
    F: FnMut(f64) -> f64,
{
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(rule.weights.iter()) {
        acc += f(mid + half * x) * *w;
    }
    acc * half
}

/// Exponent drop beyond which a concentrated kernel is treated as zero
/// (`exp(-46) ~ 1e-20`).
const KERNEL_CUTOFF: f64 = 46.0;
/// Target exponent variation per panel for concentrated kernels.
const PANEL_E_RANGE: f64 = 5.0;
/// Hard cap on automatically generated panels for one concentrated integral.
const MAX_CONCENTRATED_PANELS: usize = 96;

/// Grid for integrating a kernel of the form `g(s) * exp(k(s))` over
/// `[lo, hi]`, where `k <= 0`, `k = 0` at one endpoint (`peak_at_hi`
/// selects which), and `|k'| ~ rate`. The oscillation density of `g` is
/// `osc_per_len` panels per unit length. `breaks` are discontinuities of `g`.
pub fn concentrated_grid(
    lo: f64,
    hi: f64,
    peak_at_hi: bool,
    rate: f64,
    osc_per_len: f64,
    breaks: &[f64],
) -> Grid {
    debug_assert!(hi >= lo);
    let rate = rate.abs();
    let full = hi - lo;
    if full <= 4e-15 * (1.0 + lo.abs()) {
        // Degenerate span: one vanishing panel keeps the integral zero.
        return Grid {
            edges: vec![lo, hi.max(lo)],
        };
    }
    let kept = if rate > 0.0 {
        full.min(KERNEL_CUTOFF / rate)
    } else {
        full
    };
    let (a, b) = if peak_at_hi {
        (hi - kept, hi)
    } else {
        (lo, lo + kept)
    };
    let n_exp = (kept * rate / PANEL_E_RANGE).ceil() as usize;
    let n_osc = (kept * osc_per_len).ceil() as usize;
    let panels = n_exp.max(n_osc).clamp(1, MAX_CONCENTRATED_PANELS);
    Grid::uniform(a, b, panels).split_at(breaks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        // degree 15 is exact for an 8-point rule
        let val = panel_real(&gl, 0.0, 1.0, &mut |x: f64| x.powi(15));
        assert_relative_eq!(val, 1.0 / 16.0, max_relative = 1e-14);
        assert_relative_eq!(gl.weights.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn composite_handles_oscillation() {
        let gl = GaussLegendre::new(32);
        let grid = Grid::uniform(0.0, 1.0, 16);
        let k = 20.0 * std::f64::consts::PI;
        let val = grid.integrate_real(&gl, |x| (k * x).sin());
        assert_relative_eq!(val, (1.0 - (k).cos()) / k, epsilon = 1e-14);
    }

    #[test]
    fn concentrated_grid_resolves_stiff_exponential() {
        let gl = GaussLegendre::new(32);
        let rate = 4.0e4;
        let grid = concentrated_grid(0.0, 1.0, false, rate, 2.0, &[]);
        let val = grid.integrate_real(&gl, |x| (-rate * x).exp());
        assert_relative_eq!(val, (1.0 - (-rate).exp()) / rate, max_relative = 1e-12);
    }

    #[test]
    fn concentrated_grid_peak_at_high_end() {
        let gl = GaussLegendre::new(32);
        let rate = 1.0e3;
        let grid = concentrated_grid(0.0, 2.0, true, rate, 1.0, &[]);
        let val = grid.integrate_real(&gl, |x| (rate * (x - 2.0)).exp());
        assert_relative_eq!(val, (1.0 - (-2.0 * rate).exp()) / rate, max_relative = 1e-12);
    }

    #[test]
    fn grid_splits_at_breakpoints() {
        let grid = Grid::uniform(0.0, 1.0, 4).split_at(&[0.33, 2.0]);
        assert_eq!(grid.panel_count(), 5);
        let gl = GaussLegendre::new(16);
        // A step function is integrated exactly once the jump is an edge.
        let val = grid.integrate_real(&gl, |x| if x < 0.33 { 1.0 } else { 0.0 });
        assert_relative_eq!(val, 0.33, max_relative = 1e-14);
    }

    #[test]
    fn quadrature_rejects_degenerate_sizes() {
        assert!(Quadrature::new(0, 32).is_err());
        assert!(Quadrature::new(4, 1).is_err());
    }
}
