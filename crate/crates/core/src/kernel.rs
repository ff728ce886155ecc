//! Kernel EDMD and kernelized residuals.
//!
//! With `Ψ` the (possibly infinite) feature map of the kernel, the `M×M` Gram
//! matrices are `Ĝ = (1/M)Ψ_XΨ_Xᴴ`, `Â = (1/M)Ψ_XΨ_Yᴴ` and `Ĵ = (1/M)Ψ_YΨ_Yᴴ`, i.e.
//! `Ĝ_il = k(x_l, x_i)/M`, `Â_il = k(S(x_l), x_i)/M` and `Ĵ_il = k(S(x_l), S(x_i))/M`
//! with `k(w, z) = Σ_j conj(ψ_j(w)) ψ_j(z)`.
//!
//! A truncated eigendecomposition `Ĝ ≈ Q̃Σ̃²Q̃ᴴ` of rank `r` fixes the subspace.
//! [`KernelResDmd::kres_hat`] is the original kernelized residual and
//! [`KernelResDmd::kres`] the modified one, whose square equals
//! `Σ_j |⟨ψ_j, (L − λ̄) h⟩|²` in the large-data limit for the minimizing `h` with
//! `‖h‖ = 1`, where `h(xᵢ) = √M (Q̃w)ᵢ`.

use faer::{c64, Mat};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionaries::SnapshotSet;
use crate::error::{Error, RankDeficiency, Result};
use crate::linalg::{self, CMat};
use crate::residual::{clamped_sqrt, FieldMeta, ResidualField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(−‖w − z‖²/c²)` on the real embedding of the states.
    Gaussian { c_sq: f64 },
    /// Explicit Mercer-type kernel `Σ_n a_n² conj(w)ⁿ zⁿ` on circle states, i.e. the
    /// features `ψ_n(z) = a_n zⁿ`.
    FourierFeatures { indices: Vec<i64>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Upper bound on the largest Mercer multiplier `μ₁`, if known.
    pub mercer_top_bound: Option<f64>,
}

impl KernelSpec {
    pub fn gaussian(c_sq: f64) -> Result<Self> {
        let k = Self {
            kind: KernelKind::Gaussian { c_sq },
            // k(x, x) = 1 bounds μ₁ by the measure of the state space (normalized).
            mercer_top_bound: Some(1.0),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn fourier_features(indices: Vec<i64>, weights: Vec<f64>) -> Result<Self> {
        let top = weights.iter().fold(0.0f64, |a, w| a.max(w * w));
        let k = Self {
            kind: KernelKind::FourierFeatures { indices, weights },
            mercer_top_bound: Some(top),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            KernelKind::Gaussian { c_sq } if !(*c_sq > 0.0 && c_sq.is_finite()) => {
                Err(Error::Domain(format!("c_sq = {c_sq} must be positive")))
            }
            KernelKind::FourierFeatures { indices, weights } if indices.len() != weights.len() => {
                Err(Error::Shape("feature indices and weights differ in length".into()))
            }
            _ => Ok(()),
        }
    }

    /// `k(w, z)` for states given as coordinate slices.
    pub fn eval(&self, w: &[C64], z: &[C64]) -> C64 {
        match &self.kind {
            KernelKind::Gaussian { c_sq } => {
                let d2: f64 = w.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum();
                C64::new((-d2 / c_sq).exp(), 0.0)
            }
            KernelKind::FourierFeatures { indices, weights } => {
                let t = w[0].conj() * z[0];
                indices
                    .iter()
                    .zip(weights)
                    .map(|(&n, &a)| t.powi(n as i32) * (a * a))
                    .sum()
            }
        }
    }
}

/// Bandwidth `c²` from the spectral norm `c` of the empirical covariance of the
/// states (complex coordinates split into real and imaginary parts).
pub fn auto_cov_c_sq(snaps: &SnapshotSet) -> Result<f64> {
    let m = snaps.len();
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    let d = snaps.dim();
    let real: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..d)
                .flat_map(|k| [snaps.x[(i, k)].re, snaps.x[(i, k)].im])
                .collect()
        })
        .collect();
    let p = 2 * d;
    let mean: Vec<f64> = (0..p)
        .map(|k| real.iter().map(|r| r[k]).sum::<f64>() / m as f64)
        .collect();
    let cov = Mat::<c64>::from_fn(p, p, |a, b| {
        let s: f64 = real
            .iter()
            .map(|r| (r[a] - mean[a]) * (r[b] - mean[b]))
            .sum();
        c64::new(s / m as f64, 0.0)
    });
    let c = linalg::spectral_norm(cov.as_ref())?;
    if !(c > 0.0) {
        return Err(Error::Degenerate("states have zero covariance".into()));
    }
    Ok(c * c)
}

#[derive(Debug, Clone)]
pub struct KernelGrams {
    pub ghat: CMat,
    pub ahat: CMat,
    pub jhat: CMat,
}

fn state(m: &CMat, i: usize) -> Vec<C64> {
    (0..m.ncols()).map(|k| m[(i, k)]).collect()
}

fn gram(kernel: &KernelSpec, left: &CMat, right: &CMat, m: usize) -> CMat {
    // entry (i, l) = k(left_l, right_i) / M
    let ls: Vec<Vec<C64>> = (0..m).map(|i| state(left, i)).collect();
    let rs: Vec<Vec<C64>> = (0..m).map(|i| state(right, i)).collect();
    let inv = 1.0 / m as f64;
    let cols: Vec<Vec<C64>> = (0..m)
        .into_par_iter()
        .map(|l| rs.iter().map(|r| kernel.eval(&ls[l], r) * inv).collect())
        .collect();
    Mat::from_fn(m, m, |i, l| cols[l][i])
}

pub fn kernel_grams(kernel: &KernelSpec, snaps: &SnapshotSet) -> Result<KernelGrams> {
    kernel.validate()?;
    if matches!(kernel.kind, KernelKind::FourierFeatures { .. }) && snaps.dim() != 1 {
        return Err(Error::Shape("Fourier feature kernels need scalar circle states".into()));
    }
    let m = snaps.len();
    let ghat = linalg::hermitize(gram(kernel, &snaps.x, &snaps.x, m).as_ref());
    let ahat = gram(kernel, &snaps.y, &snaps.x, m);
    let jhat = linalg::hermitize(gram(kernel, &snaps.y, &snaps.y, m).as_ref());
    Ok(KernelGrams { ghat, ahat, jhat })
}

/// Rank-`r` truncation `Ĝ ≈ Q̃ Σ̃² Q̃ᴴ` from the largest eigenpairs.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub qt: CMat,
    /// Diagonal of `Σ̃`, nonincreasing.
    pub sigt: Vec<f64>,
    pub rank_r: usize,
    pub warning: Option<RankDeficiency>,
}

pub fn truncated_eig(ghat: &CMat, rank_r: Option<usize>) -> Result<TruncatedSvd> {
    let m = ghat.nrows();
    if let Some(r) = rank_r {
        if r == 0 || r > m {
            return Err(Error::Domain(format!("rank_r = {r} must lie in 1..={m}")));
        }
    }
    let (vals, vecs) = linalg::hermitian_eigen(ghat.as_ref())?;
    let trace: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let cutoff = 1e-14 * trace;
    // descending order
    let order: Vec<usize> = (0..m).rev().collect();
    let significant = order.iter().take_while(|&&k| vals[k] > cutoff).count();
    let requested = rank_r.unwrap_or_else(|| {
        let mut acc = 0.0;
        let mut r = 0;
        for &k in &order[..significant] {
            acc += vals[k];
            r += 1;
            if acc >= (1.0 - 1e-10) * trace {
                break;
            }
        }
        r.max(1)
    });
    let effective = requested.min(significant);
    if effective == 0 {
        return Err(Error::Degenerate("kernel Gram matrix is zero".into()));
    }
    let warning = (effective < requested).then(|| {
        log::warn!("kernel Gram has numerical rank {effective} < requested {requested}");
        RankDeficiency {
            requested,
            effective,
        }
    });
    let qt = Mat::from_fn(m, effective, |i, j| vecs[(i, order[j])]);
    let sigt = order[..effective].iter().map(|&k| vals[k].sqrt()).collect();
    Ok(TruncatedSvd {
        qt,
        sigt,
        rank_r: effective,
        warning,
    })
}

/// Compressed matrices shared by kernel EDMD and both kernel residuals.
#[derive(Debug, Clone)]
pub struct KernelResDmd {
    pub svd: TruncatedSvd,
    /// `K̂ = Σ̃⁻¹Q̃ᴴÂQ̃Σ̃⁻¹`
    pub khat: CMat,
    /// `Σ̃⁻¹Q̃ᴴĴQ̃Σ̃⁻¹`
    pub jhat_scaled: CMat,
    /// `J̃ = Q̃ᴴĴQ̃`
    pub jt: CMat,
    /// `Ã = Q̃ᴴÂQ̃`
    pub at: CMat,
    m: usize,
}

/// Kernel EDMD eigenvalue with its eigenvector lifted to the data points, `Q̃Σ̃v`.
#[derive(Debug, Clone)]
pub struct KernelEigenpair {
    pub value: C64,
    pub coeffs: Vec<C64>,
    pub lifted: Vec<C64>,
}

impl KernelResDmd {
    pub fn new(kg: &KernelGrams, rank_r: Option<usize>) -> Result<Self> {
        let svd = truncated_eig(&kg.ghat, rank_r)?;
        let q = &svd.qt;
        let jt = linalg::hermitize((q.adjoint() * &kg.jhat * q).as_ref());
        let at = q.adjoint() * &kg.ahat * q;
        let r = svd.rank_r;
        let inv: Vec<f64> = svd.sigt.iter().map(|s| 1.0 / s).collect();
        let khat = Mat::from_fn(r, r, |i, j| at[(i, j)] * (inv[i] * inv[j]));
        let jhat_scaled = linalg::hermitize(
            Mat::from_fn(r, r, |i, j| jt[(i, j)] * (inv[i] * inv[j])).as_ref(),
        );
        Ok(Self {
            svd,
            khat,
            jhat_scaled,
            jt,
            at,
            m: kg.ghat.nrows(),
        })
    }

    pub fn rank(&self) -> usize {
        self.svd.rank_r
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Eigenvalues of `K̂` with eigenvectors lifted to the data points.
    pub fn kedmd(&self) -> Result<Vec<KernelEigenpair>> {
        let (vals, vecs) = linalg::eigen(self.khat.as_ref())?;
        let r = self.rank();
        Ok(vals
            .into_iter()
            .enumerate()
            .map(|(k, value)| {
                let coeffs: Vec<C64> = (0..r).map(|i| vecs[(i, k)]).collect();
                let scaled: Vec<C64> = coeffs
                    .iter()
                    .zip(&self.svd.sigt)
                    .map(|(v, s)| v * *s)
                    .collect();
                let lifted = linalg::mat_vec(self.svd.qt.as_ref(), &scaled);
                KernelEigenpair {
                    value,
                    coeffs,
                    lifted,
                }
            })
            .collect())
    }

    /// `Û(z) = Σ̃⁻¹Q̃ᴴĴQ̃Σ̃⁻¹ − z̄K̂ − zK̂ᴴ + |z|²I`.
    pub fn u_hat(&self, z: C64) -> CMat {
        let r = self.rank();
        let zc = z.conj();
        let m = Mat::from_fn(r, r, |i, j| {
            let d = if i == j { z.norm_sqr() } else { 0.0 };
            self.jhat_scaled[(i, j)] - zc * self.khat[(i, j)] - z * self.khat[(j, i)].conj() + d
        });
        linalg::hermitize(m.as_ref())
    }

    /// `Ũ(z) = J̃ − zÃ − z̄Ãᴴ + |z|²Σ̃²`.
    pub fn u_tilde(&self, z: C64) -> CMat {
        let r = self.rank();
        let zc = z.conj();
        let m = Mat::from_fn(r, r, |i, j| {
            let d = if i == j {
                z.norm_sqr() * self.svd.sigt[i] * self.svd.sigt[i]
            } else {
                0.0
            };
            self.jt[(i, j)] - z * self.at[(i, j)] - zc * self.at[(j, i)].conj() + d
        });
        linalg::hermitize(m.as_ref())
    }

    fn smallest(u: &CMat) -> Result<(f64, Vec<C64>)> {
        let (vals, vecs) = linalg::hermitian_eigen(u.as_ref())?;
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let v = clamped_sqrt(vals[0], scale)?;
        Ok((v, vecs.col(0).iter().copied().collect()))
    }

    /// Original kernelized residual.
    pub fn kres_hat(&self, z: C64) -> Result<f64> {
        Ok(Self::smallest(&self.u_hat(z))?.0)
    }

    /// Modified kernelized residual.
    pub fn kres(&self, z: C64) -> Result<f64> {
        Ok(Self::smallest(&self.u_tilde(z))?.0)
    }

    /// Modified residual and its minimizing unit vector `w` (with `w = Σ̃u`).
    pub fn kres_minimizer(&self, z: C64) -> Result<(f64, Vec<C64>)> {
        Self::smallest(&self.u_tilde(z))
    }

    /// Modified residual of a fixed `w`, normalized by `‖w‖`.
    pub fn kres_of(&self, z: C64, w: &[C64]) -> Result<f64> {
        let nw = linalg::vec_norm(w);
        if nw == 0.0 {
            return Err(Error::Domain("zero coefficient vector".into()));
        }
        let u = self.u_tilde(z);
        let q = linalg::quadratic_form(u.as_ref(), w).re / (nw * nw);
        clamped_sqrt(q, linalg::fro(u.as_ref()))
    }

    /// Expansion coefficients `β = Q̃Σ̃⁻²w/√M` with `h(x) = Σᵢ k(xᵢ, x) βᵢ`.
    pub fn lift_coefficients(&self, w: &[C64]) -> Vec<C64> {
        let s = 1.0 / (self.m as f64).sqrt();
        let scaled: Vec<C64> = w
            .iter()
            .zip(&self.svd.sigt)
            .map(|(v, sig)| v * (s / (sig * sig)))
            .collect();
        linalg::mat_vec(self.svd.qt.as_ref(), &scaled)
    }
}

/// Evaluates `h(x) = Σᵢ k(xᵢ, x) βᵢ` at a state `x`.
pub fn eval_expansion(kernel: &KernelSpec, snaps: &SnapshotSet, beta: &[C64], x: &[C64]) -> C64 {
    (0..snaps.len())
        .map(|i| kernel.eval(&state(&snaps.x, i), x) * beta[i])
        .sum()
}

pub fn kresdmd_original_grid(model: &KernelResDmd, grid: Vec<C64>, meta: FieldMeta) -> ResidualField {
    ResidualField::evaluate(grid, meta, |z| model.kres_hat(z))
}

pub fn kresdmd_modified_grid(model: &KernelResDmd, grid: Vec<C64>, meta: FieldMeta) -> ResidualField {
    ResidualField::evaluate(grid, meta, |z| model.kres(z))
}
