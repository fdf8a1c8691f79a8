//! Dense Lyapunov solver for complex Hurwitz matrices.
//!
//! `solve_shifted` computes the Hermitian `P > 0` with
//! `F^* P + P F + 2 delta P = -I` by realifying the problem, running a real
//! Schur decomposition, and back-substituting through the quasi-triangular
//! Sylvester recursion (Bartels-Stewart). Realification doubles the
//! dimension but keeps everything inside the real Schur path, which is the
//! only dense Schur variant available here.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{CascadeError, Result};

/// Largest real part of the spectrum of a complex matrix, computed through
/// the realified eigenproblem (the realification has the same spectrum plus
/// its conjugate).
pub fn spectral_abscissa(f: &DMatrix<Complex64>) -> f64 {
    let fr = realify(f);
    fr.complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug)]
pub struct LyapunovSolution {
    pub p: DMatrix<Complex64>,
    /// `max-entry |F* P + P F + 2 delta P + I| / max-entry |P|`
    pub residual: f64,
    pub min_eigenvalue: f64,
}

/// Solve `F^* P + P F + 2 delta P = -I`.
pub fn solve_shifted(f: &DMatrix<Complex64>, delta: f64) -> Result<LyapunovSolution> {
    let n = f.nrows();
    if n != f.ncols() {
        return Err(CascadeError::DimensionMismatch(
            "Lyapunov matrix must be square".into(),
        ));
    }
    let mut shifted = f.clone();
    for i in 0..n {
        shifted[(i, i)] += Complex64::new(delta, 0.0);
    }
    let abscissa = spectral_abscissa(&shifted);
    if abscissa >= 0.0 {
        return Err(CascadeError::NoLyapunovSolution(abscissa));
    }

    let a = realify(&shifted);
    let pr = solve_real(&a)?;

    // Recover the complex solution from the realified one: for Hermitian P,
    // the unique real solution is [[Re P, -Im P], [Im P, Re P]].
    let mut p = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (pr[(i, j)] + pr[(n + i, n + j)]);
            let im = 0.5 * (pr[(n + i, j)] - pr[(i, n + j)]);
            p[(i, j)] = Complex64::new(re, im);
        }
    }
    // Hermitize to remove rounding asymmetry.
    let p = (&p + p.adjoint()) * Complex64::new(0.5, 0.0);

    let residual = residual_norm(f, delta, &p);
    let min_eigenvalue = hermitian_eigen_range(&p).0;
    Ok(LyapunovSolution {
        p,
        residual,
        min_eigenvalue,
    })
}

/// `max-entry` relative residual of the shifted Lyapunov equation.
pub fn residual_norm(f: &DMatrix<Complex64>, delta: f64, p: &DMatrix<Complex64>) -> f64 {
    let n = f.nrows();
    let mut r = f.adjoint() * p + p * f + p * Complex64::new(2.0 * delta, 0.0);
    for i in 0..n {
        r[(i, i)] += Complex64::new(1.0, 0.0);
    }
    let num = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let den = p.iter().map(|z| z.norm()).fold(0.0, f64::max);
    num / den.max(f64::MIN_POSITIVE)
}

/// `(min, max)` eigenvalues of a Hermitian matrix.
pub fn hermitian_eigen_range(m: &DMatrix<Complex64>) -> (f64, f64) {
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in eig.eigenvalues.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    (lo, hi)
}

/// `[[Re F, -Im F], [Im F, Re F]]`
pub fn realify(f: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = f.nrows();
    let m = f.ncols();
    let mut out = DMatrix::zeros(2 * n, 2 * m);
    for i in 0..n {
        for j in 0..m {
            let z = f[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + m)] = -z.im;
            out[(i + n, j)] = z.im;
            out[(i + n, j + m)] = z.re;
        }
    }
    out
}

/// Solve `A' P + P A = -I` for real Hurwitz `A`.
fn solve_real(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-14, 100_000).ok_or_else(|| {
        CascadeError::CertificateNumerics("real Schur decomposition did not converge".into())
    })?;
    let (q, t) = schur.unpack();
    // A = Q T Q'; with P = Q Y Q' the equation becomes T' Y + Y T = -I.
    let c = DMatrix::<f64>::identity(n, n);
    let y = quasi_sylvester(&t, &c)?;
    Ok(&q * y * q.transpose())
}

/// Diagonal block partition of a quasi-upper-triangular matrix.
fn block_starts(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut j = 0;
    while j < n {
        let two = j + 1 < n
            && t[(j + 1, j)].abs()
                > f64::EPSILON * (t[(j, j)].abs() + t[(j + 1, j + 1)].abs()).max(1e-300);
        let size = if two { 2 } else { 1 };
        blocks.push((j, size));
        j += size;
    }
    blocks
}

/// Solve `T' Y + Y T = -C` with `T` quasi-upper-triangular, by block
/// forward substitution over the Schur blocks.
fn quasi_sylvester(t: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let blocks = block_starts(t);
    let mut y = DMatrix::<f64>::zeros(n, n);

    for &(jc, qs) in &blocks {
        // Accumulated contribution of already-solved column blocks:
        // rhs_col = -C[:, J] - Y[:, 0..jc] * T[0..jc, J]
        let mut rhs_col = -c.columns(jc, qs).clone_owned();
        if jc > 0 {
            rhs_col -= y.columns(0, jc) * t.view((0, jc), (jc, qs));
        }
        for &(ir, ps) in &blocks {
            // rhs_block = rhs_col[I, :] - sum_{k<I} T[k, I]' Y[k, J]
            let mut rhs = rhs_col.rows(ir, ps).clone_owned();
            if ir > 0 {
                rhs -= t.view((0, ir), (ir, ps)).transpose() * y.view((0, jc), (ir, qs));
            }
            let a_blk = t.view((ir, ir), (ps, ps)).transpose().clone_owned();
            let b_blk = t.view((jc, jc), (qs, qs)).clone_owned();
            let x = small_sylvester(&a_blk, &b_blk, &rhs)?;
            y.view_mut((ir, jc), (ps, qs)).copy_from(&x);
        }
    }
    Ok(y)
}

/// Solve `A X + X B = RHS` for blocks up to 2x2 via the Kronecker system.
fn small_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let q = b.nrows();
    let dim = p * q;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    // vec(AX) = (I_q kron A) vec X ; vec(XB) = (B' kron I_p) vec X
    for col in 0..q {
        for row in 0..p {
            let idx = col * p + row;
            for r2 in 0..p {
                k[(col * p + r2, idx)] += a[(r2, row)];
            }
            for c2 in 0..q {
                k[(c2 * p + row, idx)] += b[(col, c2)];
            }
        }
    }
    let mut v = DVector::<f64>::zeros(dim);
    for col in 0..q {
        for row in 0..p {
            v[col * p + row] = rhs[(row, col)];
        }
    }
    let sol = k.lu().solve(&v).ok_or_else(|| {
        CascadeError::CertificateNumerics("singular Sylvester block (eigenvalue collision)".into())
    })?;
    let mut x = DMatrix::<f64>::zeros(p, q);
    for col in 0..q {
        for row in 0..p {
            x[(row, col)] = sol[col * p + row];
        }
    }
    Ok(x)
}
