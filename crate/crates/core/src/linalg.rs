//! Thin helpers over `faer` for the dense complex kernels used throughout the crate.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;

/// `(B + Bᴴ) / 2`.
pub fn hermitize(m: MatRef<'_, c64>) -> CMat {
    assert_eq!(m.nrows(), m.ncols());
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: MatRef<'_, c64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn trace_re(m: MatRef<'_, c64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).sum()
}

/// Frobenius norm.
pub fn fro(m: MatRef<'_, c64>) -> f64 {
    m.norm_l2()
}

/// Largest singular value.
pub fn spectral_norm(m: MatRef<'_, c64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let s = m
        .singular_values()
        .map_err(|e| Error::EigFailure(format!("svd: {e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

pub fn singular_values(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    m.singular_values()
        .map_err(|e| Error::EigFailure(format!("svd: {e:?}")))
}

/// Numerical rank with a relative cutoff on the largest singular value.
pub fn numerical_rank(m: MatRef<'_, c64>, rel_tol: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > rel_tol * top).count())
}

/// Ascending eigenvalues of a Hermitian matrix (lower triangle is read).
pub fn hermitian_eigenvalues(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::EigFailure(format!("hermitian evd: {e:?}")))
}

/// Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: MatRef<'_, c64>) -> Result<(Vec<f64>, CMat)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigFailure(format!("hermitian evd: {e:?}")))?;
    let vals = evd.S().column_vector().iter().map(|v| v.re).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Eigenvalues and right eigenvectors of a general square matrix.
pub fn eigen(m: MatRef<'_, c64>) -> Result<(Vec<c64>, CMat)> {
    if m.nrows() == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let evd = m
        .eigen()
        .map_err(|e| Error::EigFailure(format!("general evd: {e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn eigenvalues(m: MatRef<'_, c64>) -> Result<Vec<c64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.eigenvalues()
        .map_err(|e| Error::EigFailure(format!("general evd: {e:?}")))
}

/// Lower Cholesky factor `L` with `G = L Lᴴ`, or `None` if `G` is not numerically positive definite.
pub fn cholesky_lower(g: MatRef<'_, c64>) -> Option<CMat> {
    let llt = g.llt(Side::Lower).ok()?;
    let l = llt.L().to_owned();
    let finite = (0..l.nrows()).all(|i| l[(i, i)].re.is_finite() && l[(i, i)].re > 0.0);
    finite.then_some(l)
}

/// Solves `G X = B` for Hermitian positive definite `G`.
pub fn hpd_solve(g: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Option<CMat> {
    let llt = g.llt(Side::Lower).ok()?;
    let x = llt.solve(b);
    is_finite(x.as_ref()).then_some(x)
}

/// `L⁻¹ B` for lower triangular `L`.
pub fn lower_solve(l: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let mut x = b.to_owned();
    l.solve_lower_triangular_in_place(x.as_mut());
    x
}

/// `L⁻¹ H L⁻ᴴ` for Hermitian `H`, re-Hermitized.
pub fn congruence_inv(l: MatRef<'_, c64>, h: MatRef<'_, c64>) -> CMat {
    let left = lower_solve(l, h);
    let both = lower_solve(l, left.adjoint().to_owned().as_ref());
    hermitize(both.as_ref())
}

/// `L⁻¹ B L⁻ᴴ` for general square `B`.
pub fn similarity_inv(l: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let left = lower_solve(l, b);
    // (L⁻¹ (L⁻¹ B)ᴴ)ᴴ = L⁻¹ B L⁻ᴴ
    lower_solve(l, left.adjoint().to_owned().as_ref())
        .adjoint()
        .to_owned()
}

/// Upper-triangular factor of a thin QR of `m`.
pub fn thin_r(m: MatRef<'_, c64>) -> CMat {
    m.qr().thin_R().to_owned()
}

pub fn quadratic_form(m: MatRef<'_, c64>, v: &[c64]) -> c64 {
    let n = v.len();
    let mut acc = c64::new(0.0, 0.0);
    for j in 0..n {
        let mut col = c64::new(0.0, 0.0);
        for i in 0..n {
            col += v[i].conj() * m[(i, j)];
        }
        acc += col * v[j];
    }
    acc
}

pub fn mat_vec(m: MatRef<'_, c64>, v: &[c64]) -> Vec<c64> {
    let mut out = vec![c64::new(0.0, 0.0); m.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * vj;
        }
    }
    out
}

pub fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(m: MatRef<'_, c64>) -> bool {
    m.col_iter()
        .all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
}
