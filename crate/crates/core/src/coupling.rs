//! Modal coupling and I/O coefficients: the controllability integrals
//! `gamma_n`, the lifted input coefficients, the measurement coefficient
//! families, and the tail sums consumed by the stability certificate.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CascadeError, Result};
use crate::plant::{BetaProfile, MeasurementKind, MeasurementSpec, Mode, PlantConfig};
use crate::quadrature::Quadrature;
use crate::spectrum::{inner_product_h0, outer_grid, EigenPair, FieldSample, FieldTriple};

/// Which formula produced a coupling coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GammaBranch {
    /// `int_0^L beta(s) sin(n pi s / L) sinh(lambda_n s) ds`
    Generic,
    /// Iterated integral used when `lambda_n = 0`.
    ZeroEigenvalue,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaCoefficient {
    pub n: usize,
    pub value: f64,
    pub branch: GammaBranch,
}

/// Coupling coefficient of heat mode `n` by quadrature.
pub fn gamma(cfg: &PlantConfig, n: usize, quad: &Quadrature) -> Result<GammaCoefficient> {
    let pair = EigenPair::compute(cfg, Mode::Parabolic(n), quad)?;
    let value = pair.gamma.expect("parabolic mode carries gamma");
    let branch = if pair.lambda.re.abs()
        < crate::spectrum::parabolic_zero_tol(cfg.reaction)
    {
        GammaBranch::ZeroEigenvalue
    } else {
        GammaBranch::Generic
    };
    Ok(GammaCoefficient { n, value, branch })
}

/// Closed form of `gamma_n` for an indicator coupling profile.
pub fn gamma_closed_form_indicator(cfg: &PlantConfig, n: usize) -> Result<f64> {
    let BetaProfile::Indicator { amplitude, a, b } = cfg.beta else {
        return Err(CascadeError::UnsupportedProfile(
            "closed-form gamma requires an indicator coupling profile".into(),
        ));
    };
    Ok(gamma_indicator_value(cfg, n, amplitude, a, b))
}

fn gamma_indicator_value(cfg: &PlantConfig, n: usize, amplitude: f64, a: f64, b: f64) -> f64 {
    let l = cfg.length;
    let k = n as f64 * std::f64::consts::PI / l;
    let lam = cfg.parabolic_eigenvalue(n);
    if lam.abs() < crate::spectrum::parabolic_zero_tol(cfg.reaction) {
        // antiderivative of s sin(k s): sin(k s)/k^2 - s cos(k s)/k
        -amplitude * (b * (k * b).cos() - a * (k * a).cos()) / k
            + amplitude * ((k * b).sin() - (k * a).sin()) / (k * k)
    } else {
        let num = -k * (lam * b).sinh() * (k * b).cos() + k * (lam * a).sinh() * (k * a).cos()
            + lam * (lam * b).cosh() * (k * b).sin()
            - lam * (lam * a).cosh() * (k * a).sin();
        amplitude * num / (lam * lam + k * k)
    }
}

/// Sweep of `gamma_n` as the indicator upper endpoint `b` varies, with sign
/// changes refined by bisection. Bisection (rather than Newton) keeps every
/// root bracketed even when roots cluster.
#[derive(Debug, Clone, Serialize)]
pub struct GammaScan {
    pub n: usize,
    /// `(b, gamma_n(b))` samples.
    pub points: Vec<(f64, f64)>,
    /// Refined roots, each with `|gamma| < 1e-10`.
    pub roots: Vec<f64>,
}

pub fn gamma_scan(
    cfg: &PlantConfig,
    n: usize,
    b_range: (f64, f64),
    samples: usize,
) -> Result<GammaScan> {
    let BetaProfile::Indicator { amplitude, a, .. } = cfg.beta else {
        return Err(CascadeError::UnsupportedProfile(
            "gamma scan varies the upper endpoint of an indicator profile".into(),
        ));
    };
    if samples < 2 {
        return Err(CascadeError::InvalidConfig(
            "gamma scan needs at least 2 samples".into(),
        ));
    }
    if !(b_range.1 > b_range.0) {
        return Err(CascadeError::InvalidConfig(format!(
            "empty scan range [{}, {}]",
            b_range.0, b_range.1
        )));
    }
    let eval = |b: f64| gamma_indicator_value(cfg, n, amplitude, a, b);
    let points: Vec<(f64, f64)> = (0..samples)
        .map(|i| {
            let b = b_range.0 + (b_range.1 - b_range.0) * i as f64 / (samples - 1) as f64;
            (b, eval(b))
        })
        .collect();

    let mut roots = Vec::new();
    for w in points.windows(2) {
        let (b0, g0) = w[0];
        let (b1, g1) = w[1];
        if g0 == 0.0 {
            roots.push(b0);
            continue;
        }
        if g0 * g1 < 0.0 {
            let (mut lo, mut hi) = (b0, b1);
            let mut glo = g0;
            let mut root = 0.5 * (lo + hi);
            for _ in 0..200 {
                root = 0.5 * (lo + hi);
                let gm = eval(root);
                if gm.abs() < 1e-10 {
                    break;
                }
                if glo * gm < 0.0 {
                    hi = root;
                } else {
                    lo = root;
                    glo = gm;
                }
            }
            roots.push(root);
        }
    }
    if let Some((last_b, last_g)) = points.last().copied() {
        if last_g == 0.0 && roots.last().map_or(true, |r| *r != last_b) {
            roots.push(last_b);
        }
    }
    Ok(GammaScan { n, points, roots })
}

/// Lifted boundary-input profile `(0, x/(alpha L), 0)`.
struct LiftA {
    alpha_l: f64,
}

impl FieldTriple for LiftA {
    fn sample(&self, x: f64) -> FieldSample {
        let mut s = FieldSample::zero();
        s.wave = Complex64::new(x / self.alpha_l, 0.0);
        s.wave_prime = Complex64::new(1.0 / self.alpha_l, 0.0);
        s
    }
}

/// Lifted boundary-input rate profile `(0, 0, -x/(alpha L))`.
struct LiftB {
    alpha_l: f64,
}

impl FieldTriple for LiftB {
    fn sample(&self, x: f64) -> FieldSample {
        let mut s = FieldSample::zero();
        s.velocity = Complex64::new(-x / self.alpha_l, 0.0);
        s
    }
}

/// Modal input coefficients of one mode: pairings of the lifted input
/// profiles with the dual eigenvector, plus their combination
/// `beta_coeff = a + lambda b`, which equals `conj(psi3(L))` (the adjoint
/// boundary trace of the control operator).
#[derive(Debug, Clone, Serialize)]
pub struct ModalInputCoeffs {
    pub index: Mode,
    pub a: Complex64,
    pub b: Complex64,
    pub beta_coeff: Complex64,
}

/// Input coefficients by quadrature against the dual eigenvector.
pub fn input_coeffs(cfg: &PlantConfig, pair: &EigenPair, quad: &Quadrature) -> ModalInputCoeffs {
    let alpha_l = cfg.alpha * cfg.length;
    let a = inner_product_h0(&LiftA { alpha_l }, &pair.psi_field(), cfg, quad);
    let b = inner_product_h0(&LiftB { alpha_l }, &pair.psi_field(), cfg, quad);
    ModalInputCoeffs {
        index: pair.index,
        a,
        b,
        beta_coeff: a + pair.lambda * b,
    }
}

/// Input coefficients from boundary traces of the dual eigenvector:
/// `a = conj(psi2(L)) / (alpha L)` (fundamental theorem of calculus on the
/// pairing, since `psi2(0) = 0`) and `b = (conj(psi3(L)) - a) / lambda`.
/// Falls back to quadrature for a zero eigenvalue.
pub fn input_coeffs_boundary(
    cfg: &PlantConfig,
    pair: &EigenPair,
    quad: &Quadrature,
) -> ModalInputCoeffs {
    let tol = crate::spectrum::parabolic_zero_tol(cfg.reaction);
    if pair.lambda.norm() < tol {
        return input_coeffs(cfg, pair, quad);
    }
    let end = pair.psi(cfg.length);
    let a = end.wave.conj() / (cfg.alpha * cfg.length);
    let beta_coeff = end.velocity.conj();
    let b = (beta_coeff - a) / pair.lambda;
    ModalInputCoeffs {
        index: pair.index,
        a,
        b,
        beta_coeff,
    }
}

/// Measurement coefficient of one mode for the selected output.
#[derive(Debug, Clone, Serialize)]
pub struct MeasurementCoeffs {
    pub index: Mode,
    pub c: Complex64,
}

pub fn measurement_coeffs(
    cfg: &PlantConfig,
    spec: &MeasurementSpec,
    pair: &EigenPair,
    quad: &Quadrature,
) -> MeasurementCoeffs {
    let c = match &spec.kind {
        MeasurementKind::Distributed(weight) => {
            let hints = pair.grid_hints();
            let grid = outer_grid(cfg, quad, &[&hints]);
            grid.integrate_complex(quad.rule(), |x| pair.phi(x).heat * weight(x))
        }
        MeasurementKind::PointwiseDirichlet(xi) => pair.phi(*xi).heat,
        MeasurementKind::PointwiseNeumann(xi) => pair.phi(*xi).heat_prime,
    };
    MeasurementCoeffs {
        index: pair.index,
        c,
    }
}

/// Per-mode coefficient tables shared by the reduced model, the tail sums,
/// and the simulator. Input coefficients use the boundary-trace route
/// (validated against the quadrature route by the coupling tests).
pub struct ModalCache {
    pub n_cutoff: usize,
    pub m_cutoff: usize,
    pub kappa: f64,
    /// Heat family, index k holds mode n = k + 1.
    pub par: Vec<CachedMode>,
    /// Wave family in canonical interleaved order 0, -1, +1, ...
    pub hyp: Vec<CachedMode>,
}

#[derive(Debug, Clone)]
pub struct CachedMode {
    pub index: Mode,
    pub lambda: Complex64,
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub gamma: Option<f64>,
}

impl ModalCache {
    pub fn build(
        cfg: &PlantConfig,
        spec: &MeasurementSpec,
        n_cutoff: usize,
        m_cutoff: usize,
        quad: &Quadrature,
    ) -> Result<Self> {
        let mode_quad = Quadrature::new(quad.panels.max(2 * m_cutoff).max(8), quad.order)?;
        let modes = crate::spectrum::mode_list(n_cutoff, m_cutoff);
        let entries: Vec<Result<CachedMode>> = modes
            .par_iter()
            .map(|&mode| {
                let pair = EigenPair::compute(cfg, mode, &mode_quad)?;
                let io = input_coeffs_boundary(cfg, &pair, &mode_quad);
                let meas = measurement_coeffs(cfg, spec, &pair, &mode_quad);
                Ok(CachedMode {
                    index: mode,
                    lambda: pair.lambda,
                    a: io.a,
                    b: io.b,
                    c: meas.c,
                    gamma: pair.gamma,
                })
            })
            .collect();
        let mut par = Vec::with_capacity(n_cutoff);
        let mut hyp = Vec::with_capacity(2 * m_cutoff + 1);
        for e in entries {
            let e = e?;
            match e.index {
                Mode::Parabolic(_) => par.push(e),
                Mode::Hyperbolic(_) => hyp.push(e),
            }
        }
        Ok(ModalCache {
            n_cutoff,
            m_cutoff,
            kappa: spec.kappa(),
            par,
            hyp,
        })
    }

    pub fn parabolic(&self, n: usize) -> &CachedMode {
        &self.par[n - 1]
    }

    /// Wave-family entry by signed index.
    pub fn hyperbolic(&self, m: i64) -> &CachedMode {
        let k = if m == 0 {
            0
        } else if m < 0 {
            2 * m.unsigned_abs() as usize - 1
        } else {
            2 * m as usize
        };
        &self.hyp[k]
    }

    /// Weight applied to a squared parabolic measurement term in the
    /// truncation tail (variant-dependent).
    fn c1_tail_weight(&self, n: usize) -> f64 {
        let nf = n as f64;
        if self.kappa == 0.0 {
            1.0
        } else if self.kappa == 1.0 {
            1.0 / (nf * nf)
        } else {
            1.0 / nf.powf(3.5)
        }
    }
}

/// Squared-coefficient sums over the modes a truncated design neglects,
/// with power-law remainder estimates.
#[derive(Debug, Clone, Serialize)]
pub struct TailSums {
    pub s_a: f64,
    pub s_b: f64,
    pub s_c1: f64,
    pub s_c2: f64,
    /// Heat-family contributions alone (diagnostic; exactly zero for a
    /// decoupled plant).
    pub s_a_parabolic: f64,
    pub s_b_parabolic: f64,
    pub n_trunc: usize,
    pub m_trunc: usize,
    pub n_cutoff: usize,
    pub m_cutoff: usize,
    pub remainder_a: f64,
    pub remainder_b: f64,
    pub remainder_c1: f64,
    pub remainder_c2: f64,
    /// Set when any remainder estimate exceeds 10% of its partial sum.
    pub remainder_flagged: bool,
}

pub fn tail_sums(
    cfg: &PlantConfig,
    spec: &MeasurementSpec,
    n_trunc: usize,
    m_trunc: usize,
    cutoff: usize,
    quad: &Quadrature,
) -> Result<TailSums> {
    if cutoff <= n_trunc.max(m_trunc) + 10 {
        return Err(CascadeError::InvalidConfig(format!(
            "tail cutoff {cutoff} must exceed max(N, M) + 10 = {}",
            n_trunc.max(m_trunc) + 10
        )));
    }
    let cache = ModalCache::build(cfg, spec, cutoff, cutoff, quad)?;
    tail_sums_from_cache(&cache, n_trunc, m_trunc)
}

pub fn tail_sums_from_cache(cache: &ModalCache, n_trunc: usize, m_trunc: usize) -> Result<TailSums> {
    if cache.n_cutoff <= n_trunc + 10 || cache.m_cutoff <= m_trunc + 10 {
        return Err(CascadeError::InvalidConfig(format!(
            "cached cutoffs ({}, {}) too small for truncation ({}, {})",
            cache.n_cutoff, cache.m_cutoff, n_trunc, m_trunc
        )));
    }

    // Per-index term sequences (hyperbolic terms pair +/-l).
    let mut a_terms = Vec::new();
    let mut b_terms = Vec::new();
    let mut c1_terms = Vec::new();
    let mut c2_terms = Vec::new();
    let mut s_a_par = 0.0;
    let mut s_b_par = 0.0;
    for n in (n_trunc + 1)..=cache.n_cutoff {
        let e = cache.parabolic(n);
        let (a2, b2) = (e.a.norm_sqr(), e.b.norm_sqr());
        s_a_par += a2;
        s_b_par += b2;
        a_terms.push((n as f64, a2));
        b_terms.push((n as f64, b2));
        c1_terms.push((n as f64, e.c.norm_sqr() * cache.c1_tail_weight(n)));
    }
    let mut a_hyp_terms = Vec::new();
    let mut b_hyp_terms = Vec::new();
    for l in (m_trunc as i64 + 1)..=(cache.m_cutoff as i64) {
        let plus = cache.hyperbolic(l);
        let minus = cache.hyperbolic(-l);
        a_hyp_terms.push((l as f64, plus.a.norm_sqr() + minus.a.norm_sqr()));
        b_hyp_terms.push((l as f64, plus.b.norm_sqr() + minus.b.norm_sqr()));
        c2_terms.push((l as f64, plus.c.norm_sqr() + minus.c.norm_sqr()));
    }

    let sum = |terms: &[(f64, f64)]| terms.iter().map(|(_, t)| t).sum::<f64>();
    let s_a = s_a_par + sum(&a_hyp_terms);
    let s_b = s_b_par + sum(&b_hyp_terms);
    let s_c1 = sum(&c1_terms);
    let s_c2 = sum(&c2_terms);

    let remainder_a = remainder_estimate(&a_terms, "input coefficients a (heat family)")?
        + remainder_estimate(&a_hyp_terms, "input coefficients a (wave family)")?;
    let remainder_b = remainder_estimate(&b_terms, "input coefficients b (heat family)")?
        + remainder_estimate(&b_hyp_terms, "input coefficients b (wave family)")?;
    let remainder_c1 = remainder_estimate(&c1_terms, "measurement tail (heat family)")?;
    let remainder_c2 = remainder_estimate(&c2_terms, "measurement tail (wave family)")?;

    let flagged = [
        (remainder_a, s_a),
        (remainder_b, s_b),
        (remainder_c1, s_c1),
        (remainder_c2, s_c2),
    ]
    .iter()
    .any(|(r, s)| *r > 0.1 * s && *s > 0.0);

    Ok(TailSums {
        s_a,
        s_b,
        s_c1,
        s_c2,
        s_a_parabolic: s_a_par,
        s_b_parabolic: s_b_par,
        n_trunc,
        m_trunc,
        n_cutoff: cache.n_cutoff,
        m_cutoff: cache.m_cutoff,
        remainder_a,
        remainder_b,
        remainder_c1,
        remainder_c2,
        remainder_flagged: flagged,
    })
}

/// Extrapolate the neglected remainder of a term sequence by fitting
/// `|term| ~ C k^p` on the last block of computed terms (block averages
/// absorb the oscillation of measurement coefficients) and integrating the
/// fitted law past the cutoff. A non-decaying fit is an error.
fn remainder_estimate(terms: &[(f64, f64)], what: &str) -> Result<f64> {
    if terms.len() < 8 {
        return Ok(0.0);
    }
    let block = (terms.len() / 2).min(32).max(4);
    let tail = &terms[terms.len() - 2 * block..];
    let (first, second) = tail.split_at(block);
    let avg = |chunk: &[(f64, f64)]| {
        let v: f64 = chunk.iter().map(|(_, t)| t).sum::<f64>() / chunk.len() as f64;
        let k: f64 = chunk.iter().map(|(k, _)| k).sum::<f64>() / chunk.len() as f64;
        (k, v)
    };
    let (k1, v1) = avg(first);
    let (k2, v2) = avg(second);
    if v2 == 0.0 {
        return Ok(0.0);
    }
    if v1 == 0.0 {
        // Sequence vanished and reappeared; treat conservatively.
        return Ok(v2 * k2);
    }
    let p = (v2 / v1).ln() / (k2 / k1).ln();
    if p >= 0.0 {
        return Err(CascadeError::DivergingTail(format!(
            "{what}: fitted power-law slope {p:.3} >= 0"
        )));
    }
    let k_max = terms.last().unwrap().0;
    if p > -1.0 {
        // Divergent integral: report an infinite remainder so the caller's
        // 10% consistency flag trips.
        return Ok(f64::INFINITY);
    }
    let c = v2 / k2.powf(p);
    Ok(c * k_max.powf(p + 1.0) / (-(p + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::BetaProfile;
    use crate::quadrature::{panel_real, GaussLegendre};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cfg6() -> PlantConfig {
        PlantConfig {
            length: 1.0,
            reaction: 10.0,
            beta: BetaProfile::Polynomial(vec![1.0, 0.0, 1.0]),
            alpha: 1.1,
            delta: 1.0,
        }
    }

    fn meas6() -> MeasurementSpec {
        MeasurementSpec::dirichlet(3.0f64.sqrt() / 2.0)
    }

    #[test]
    fn gamma_vanishes_for_decoupled_plant() {
        let cfg = PlantConfig {
            beta: BetaProfile::Constant(0.0),
            ..cfg6()
        };
        let quad = Quadrature::default_rule();
        for n in 1..=5 {
            assert_eq!(gamma(&cfg, n, &quad).unwrap().value, 0.0);
        }
    }

    #[test]
    fn gamma_constant_profile_matches_closed_form() {
        let cfg = PlantConfig {
            beta: BetaProfile::Indicator {
                amplitude: 1.0,
                a: 0.0,
                b: 1.0,
            },
            ..cfg6()
        };
        let quad = Quadrature::default_rule();
        let by_quad = gamma(&cfg, 1, &quad).unwrap();
        let closed = gamma_closed_form_indicator(&cfg, 1).unwrap();
        assert_eq!(by_quad.branch, GammaBranch::Generic);
        assert_relative_eq!(by_quad.value, closed, max_relative = 1e-10);
        // lambda_1 = 10 - pi^2; gamma_1 = -pi sinh(lambda) (-1)^1 / (lambda^2 + pi^2)
        assert_relative_eq!(closed, 0.041553, max_relative = 1e-4);
    }

    #[test]
    fn gamma_zero_eigenvalue_branch_matches_iterated_integral() {
        // c = pi^2 makes lambda_1 = 0 exactly.
        let cfg = PlantConfig {
            reaction: PI * PI,
            beta: BetaProfile::Constant(1.0),
            ..cfg6()
        };
        let quad = Quadrature::default_rule();
        let g = gamma(&cfg, 1, &quad).unwrap();
        assert_eq!(g.branch, GammaBranch::ZeroEigenvalue);

        // Brute-force 2-D quadrature oracle for the iterated integral.
        let gl = GaussLegendre::new(32);
        let grid = crate::quadrature::Grid::uniform(0.0, 1.0, 16);
        let oracle = grid.integrate_real(&gl, |tau| {
            panel_real(&gl, tau, 1.0, &mut |s| (PI * s).sin())
        });
        assert_relative_eq!(g.value, oracle, max_relative = 1e-12);
        assert_relative_eq!(g.value, 1.0 / PI, max_relative = 1e-12);
    }

    #[test]
    fn closed_form_agrees_with_quadrature_on_indicator_profiles() {
        // Long-domain configuration keeps every gamma_n at a representable
        // scale for n up to 10.
        for (a, b) in [(0.0, 61.0), (12.5, 80.0), (3.0, 97.0)] {
            let cfg = PlantConfig {
                length: 100.0,
                reaction: 0.05,
                beta: BetaProfile::Indicator {
                    amplitude: 0.7,
                    a,
                    b,
                },
                alpha: 1.1,
                delta: 0.01,
            };
            let quad = Quadrature::for_max_mode(10);
            for n in 1..=10 {
                let closed = gamma_closed_form_indicator(&cfg, n).unwrap();
                let by_quad = gamma(&cfg, n, &quad).unwrap().value;
                assert!(
                    (closed - by_quad).abs() < 1e-10,
                    "n={n} a={a} b={b}: closed {closed:.15e} vs quad {by_quad:.15e}"
                );
            }
        }
    }

    #[test]
    fn gamma_closed_form_zero_width_support_is_zero() {
        let cfg = PlantConfig {
            reaction: 50.0,
            beta: BetaProfile::Indicator {
                amplitude: 1.0,
                a: 0.4,
                b: 0.4,
            },
            ..cfg6()
        };
        assert_eq!(gamma_closed_form_indicator(&cfg, 3).unwrap(), 0.0);
    }

    #[test]
    fn gamma_closed_form_rejects_other_profiles() {
        let cfg = cfg6();
        assert!(matches!(
            gamma_closed_form_indicator(&cfg, 1),
            Err(CascadeError::UnsupportedProfile(_))
        ));
    }

    #[test]
    fn scan_locates_the_known_controllability_loss() {
        let cfg = PlantConfig {
            reaction: 50.0,
            beta: BetaProfile::Indicator {
                amplitude: 1.0,
                a: 0.0,
                b: 1.0,
            },
            ..cfg6()
        };
        let scan = gamma_scan(&cfg, 2, (0.01, 1.0), 200).unwrap();
        assert_eq!(scan.roots.len(), 1, "roots: {:?}", scan.roots);
        let root = scan.roots[0];
        assert!((root - 0.586).abs() < 0.005, "root at {root}");
        assert!(gamma_indicator_value(&cfg, 2, 1.0, 0.0, root).abs() < 1e-10);
    }

    #[test]
    fn scan_roots_verified_for_first_mode() {
        let cfg = PlantConfig {
            reaction: 50.0,
            beta: BetaProfile::Indicator {
                amplitude: 1.0,
                a: 0.0,
                b: 1.0,
            },
            ..cfg6()
        };
        let scan = gamma_scan(&cfg, 1, (0.01, 1.0), 400).unwrap();
        for root in &scan.roots {
            assert!(
                gamma_indicator_value(&cfg, 1, 1.0, 0.0, *root).abs() < 1e-10,
                "unrefined root {root}"
            );
        }
    }

    #[test]
    fn scan_is_homogeneous_in_the_amplitude() {
        let base = PlantConfig {
            reaction: 50.0,
            beta: BetaProfile::Indicator {
                amplitude: 1.0,
                a: 0.0,
                b: 1.0,
            },
            ..cfg6()
        };
        let scaled = PlantConfig {
            beta: BetaProfile::Indicator {
                amplitude: 10.0,
                a: 0.0,
                b: 1.0,
            },
            ..base.clone()
        };
        let s1 = gamma_scan(&base, 2, (0.01, 1.0), 150).unwrap();
        let s2 = gamma_scan(&scaled, 2, (0.01, 1.0), 150).unwrap();
        assert_eq!(s1.roots.len(), s2.roots.len());
        for (r1, r2) in s1.roots.iter().zip(s2.roots.iter()) {
            assert!((r1 - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_homogeneity_under_scaling() {
        let quad = Quadrature::default_rule();
        let base = cfg6();
        for s in [-1.0, 2.0, 10.0] {
            let scaled = PlantConfig {
                beta: BetaProfile::Polynomial(vec![s, 0.0, s]),
                ..base.clone()
            };
            for n in 1..=4 {
                let g0 = gamma(&base, n, &quad).unwrap().value;
                let g1 = gamma(&scaled, n, &quad).unwrap().value;
                assert_relative_eq!(g1, s * g0, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn decoupled_parabolic_modes_have_no_input_coefficients() {
        let cfg = PlantConfig {
            beta: BetaProfile::Constant(0.0),
            ..cfg6()
        };
        let quad = Quadrature::default_rule();
        let pair = EigenPair::compute(&cfg, Mode::Parabolic(2), &quad).unwrap();
        let io = input_coeffs(&cfg, &pair, &quad);
        assert_eq!(io.a, Complex64::new(0.0, 0.0));
        assert_eq!(io.b, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn control_trace_identity_holds_across_both_families() {
        // a + lambda b must equal conj(psi3(L)).
        let cfg = cfg6();
        let quad = Quadrature::for_max_mode(8);
        for mode in [
            Mode::Parabolic(1),
            Mode::Parabolic(4),
            Mode::Hyperbolic(0),
            Mode::Hyperbolic(-3),
            Mode::Hyperbolic(7),
        ] {
            let pair = EigenPair::compute(&cfg, mode, &quad).unwrap();
            let io = input_coeffs(&cfg, &pair, &quad);
            let trace = pair.psi(cfg.length).velocity.conj();
            let err = (io.beta_coeff - trace).norm();
            assert!(
                err <= 1e-8 * (1.0 + trace.norm()),
                "{mode}: |beta - conj(psi3(L))| = {err:.3e}"
            );
        }
    }

    #[test]
    fn quadrature_and_boundary_routes_agree() {
        let cfg = cfg6();
        let quad = Quadrature::default_rule();
        let pair = EigenPair::compute(&cfg, Mode::Parabolic(1), &quad).unwrap();
        let by_quad = input_coeffs(&cfg, &pair, &quad);
        let by_trace = input_coeffs_boundary(&cfg, &pair, &quad);
        assert!((by_quad.a - by_trace.a).norm() < 1e-9);
        assert!((by_quad.b - by_trace.b).norm() < 1e-9);
    }

    #[test]
    fn dirichlet_measurement_hits_sine_node() {
        let cfg = cfg6();
        let quad = Quadrature::default_rule();
        let spec = MeasurementSpec::dirichlet(0.5);
        let pair = EigenPair::compute(&cfg, Mode::Parabolic(2), &quad).unwrap();
        let c = measurement_coeffs(&cfg, &spec, &pair, &quad).c;
        assert!(c.norm() < 1e-13);
    }

    #[test]
    fn dirichlet_measurement_first_mode_value() {
        let cfg = cfg6();
        let quad = Quadrature::default_rule();
        let pair = EigenPair::compute(&cfg, Mode::Parabolic(1), &quad).unwrap();
        let c = measurement_coeffs(&cfg, &meas6(), &pair, &quad).c;
        let expected = 2.0f64.sqrt() * (PI * 3.0f64.sqrt() / 2.0).sin();
        assert_relative_eq!(c.re, expected, max_relative = 1e-13);
        assert_relative_eq!(c.re, 0.578, max_relative = 1e-3);
    }

    #[test]
    fn distributed_measurement_respects_sine_orthonormality() {
        let cfg = cfg6();
        let quad = Quadrature::default_rule();
        let weight = |x: f64| (2.0f64).sqrt() * (3.0 * PI * x).sin();
        let spec = MeasurementSpec::distributed(weight);
        for n in 1..=5 {
            let pair = EigenPair::compute(&cfg, Mode::Parabolic(n), &quad).unwrap();
            let c = measurement_coeffs(&cfg, &spec, &pair, &quad).c;
            let expected = if n == 3 { 1.0 } else { 0.0 };
            assert!(
                (c.re - expected).abs() < 1e-12,
                "n={n}: c = {c}"
            );
        }
    }

    #[test]
    fn neumann_measurement_uses_the_analytic_derivative() {
        let cfg = cfg6();
        let quad = Quadrature::default_rule();
        let spec = MeasurementSpec::neumann(0.25);
        let pair = EigenPair::compute(&cfg, Mode::Parabolic(2), &quad).unwrap();
        let c = measurement_coeffs(&cfg, &spec, &pair, &quad).c;
        let expected = 2.0f64.sqrt() * 2.0 * PI * (2.0 * PI * 0.25).cos();
        assert_relative_eq!(c.re, expected, max_relative = 1e-13);
    }

    #[test]
    fn tail_sums_decoupled_parabolic_part_vanishes() {
        let cfg = PlantConfig {
            beta: BetaProfile::Constant(0.0),
            ..cfg6()
        };
        let quad = Quadrature::default_rule();
        let tails = tail_sums(&cfg, &meas6(), 2, 4, 48, &quad).unwrap();
        assert_eq!(tails.s_a_parabolic, 0.0);
        assert_eq!(tails.s_b_parabolic, 0.0);
        assert!(tails.s_a > 0.0, "wave-family input tail must remain");
    }

    #[test]
    fn tail_sums_shrink_with_larger_truncation() {
        let cfg = cfg6();
        let quad = Quadrature::default_rule();
        let cache = ModalCache::build(&cfg, &meas6(), 64, 64, &quad).unwrap();
        let coarse = tail_sums_from_cache(&cache, 2, 8).unwrap();
        let fine = tail_sums_from_cache(&cache, 4, 16).unwrap();
        assert!(fine.s_a < coarse.s_a);
        assert!(fine.s_b < coarse.s_b);
        assert!(fine.s_c1 < coarse.s_c1);
        assert!(fine.s_c2 < coarse.s_c2);
    }

    #[test]
    fn doubling_the_cutoff_stays_within_the_remainder_estimate() {
        let cfg = cfg6();
        let quad = Quadrature::default_rule();
        let t64 = tail_sums(&cfg, &meas6(), 2, 8, 64, &quad).unwrap();
        let t128 = tail_sums(&cfg, &meas6(), 2, 8, 128, &quad).unwrap();
        assert!((t128.s_a - t64.s_a).abs() <= t64.remainder_a.max(1e-12));
        assert!((t128.s_b - t64.s_b).abs() <= t64.remainder_b.max(1e-12));
        assert!((t128.s_c1 - t64.s_c1).abs() <= t64.remainder_c1.max(1e-12));
        assert!((t128.s_c2 - t64.s_c2).abs() <= t64.remainder_c2.max(1e-12));
        assert!(!t64.remainder_flagged);
    }

    #[test]
    fn tail_cutoff_precondition_is_enforced() {
        let cfg = cfg6();
        let quad = Quadrature::default_rule();
        assert!(tail_sums(&cfg, &meas6(), 4, 8, 18, &quad).is_err());
    }
}
