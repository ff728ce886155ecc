//! Inner-product spaces and assembly of the Gram triple `(G, A, J)`.
//!
//! For the empirical L² space the triple is read off the data matrices. The weighted
//! spaces (Sobolev `H^s` and the Hardy dual `X_r`) are diagonal in the Fourier basis,
//! so the triple is built from Fourier coefficients of `ψ_l ∘ S` obtained by FFT of
//! dense equispaced samples of the map.

use std::sync::Arc;

use faer::{c64, Mat};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dictionaries::{equispaced_circle, DataMatrices, Dictionary, DictionaryKind};
use crate::dynamics::CircleMap;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

const TAIL_TOL: f64 = 1e-10;
const MAX_BAND: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerProductSpec {
    EmpiricalL2,
    SobolevHs { s: f64 },
    HardyDual { radius_r: f64 },
}

impl InnerProductSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::HardyDual { radius_r } if !(radius_r > 0.0 && radius_r < 1.0) => Err(
                Error::Domain(format!("radius_r = {radius_r} must lie in (0, 1)")),
            ),
            Self::SobolevHs { s } if !s.is_finite() => {
                Err(Error::Domain("Sobolev exponent must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Fourier weight `w(n)`; `None` for the empirical space.
    pub fn weight(&self, n: i64) -> Option<f64> {
        let nf = n as f64;
        match *self {
            Self::EmpiricalL2 => None,
            Self::SobolevHs { s } => Some((1.0 + nf * nf).powf(s)),
            Self::HardyDual { radius_r } => Some(radius_r.powi(2 * n.unsigned_abs() as i32)),
        }
    }

    pub fn is_weighted(&self) -> bool {
        !matches!(self, Self::EmpiricalL2)
    }

    pub fn label(&self) -> String {
        match *self {
            Self::EmpiricalL2 => "l2".into(),
            Self::SobolevHs { s } => format!("sobolev(s={s})"),
            Self::HardyDual { radius_r } => format!("hardy-dual(r={radius_r})"),
        }
    }
}

/// How many Fourier modes of `ψ_l ∘ S` enter the weighted sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "band", rename_all = "snake_case")]
pub enum CoeffBand {
    /// Start at `max|n| + 64` and double until the tail check passes.
    Auto,
    /// Use exactly this band and fail with `BandTooSmall` if the tail is too heavy.
    Fixed(usize),
    /// Use this band without any tail check.
    Literal(usize),
}

pub enum GramSource<'a> {
    /// Quadrature over snapshot data (empirical L²).
    Data {
        matrices: &'a DataMatrices,
        weights: &'a [f64],
    },
    /// Dense equispaced sampling of a closed-form map (weighted spaces). At least
    /// `min_samples` points are used for the coefficient analysis.
    Map {
        map: &'a CircleMap,
        min_samples: usize,
    },
}

/// Square-root factors with `G = R_Xᴴ R_X`, `A = R_Xᴴ R_Y`, `J = R_Yᴴ R_Y`.
///
/// Residuals evaluated from these avoid the squaring of `U(λ)` and stay accurate
/// down to roundoff in `‖R_Y‖`.
#[derive(Debug, Clone)]
pub struct SqrtFactor {
    pub rx: CMat,
    pub ry: CMat,
}

/// The common input of all residual algorithms.
#[derive(Debug, Clone)]
pub struct GramTriple {
    pub g: CMat,
    pub a: CMat,
    pub j: CMat,
    chol: CMat,
    factor: Option<SqrtFactor>,
    jittered: bool,
    band: Option<usize>,
}

impl GramTriple {
    /// Builds a triple from explicit matrices, re-Hermitizing `G` and `J`.
    pub fn from_parts(g: CMat, a: CMat, j: CMat) -> Result<Self> {
        let n = g.nrows();
        for (name, m) in [("G", &g), ("A", &a), ("J", &j)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Shape(format!(
                    "{name} is {}×{}, expected {n}×{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !linalg::is_finite(m.as_ref()) {
                return Err(Error::Domain(format!("{name} has non-finite entries")));
            }
        }
        let mut g = linalg::hermitize(g.as_ref());
        let j = linalg::hermitize(j.as_ref());
        let mut jittered = false;
        let chol = match linalg::cholesky_lower(g.as_ref()) {
            Some(l) => l,
            None => {
                let eps = 1e-14 * linalg::trace_re(g.as_ref()).abs() / n.max(1) as f64;
                for i in 0..n {
                    g[(i, i)] += c64::new(eps, 0.0);
                }
                jittered = true;
                log::warn!("G failed Cholesky; retrying with diagonal jitter {eps:.3e}");
                linalg::cholesky_lower(g.as_ref()).ok_or(Error::NotPositiveDefinite)?
            }
        };
        Ok(Self {
            g,
            a,
            j,
            chol,
            factor: None,
            jittered,
            band: None,
        })
    }

    fn with_factor(mut self, factor: SqrtFactor) -> Self {
        if !self.jittered {
            self.factor = Some(factor);
        }
        self
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// Lower Cholesky factor of `G`.
    pub fn chol(&self) -> &CMat {
        &self.chol
    }

    pub fn factor(&self) -> Option<&SqrtFactor> {
        self.factor.as_ref()
    }

    /// Drops the square-root factor so that residuals go through `U(λ)` explicitly.
    pub fn without_factor(&self) -> Self {
        Self {
            factor: None,
            ..self.clone()
        }
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// Coefficient band used for weighted assembly.
    pub fn band(&self) -> Option<usize> {
        self.band
    }

    /// `U(λ) = J − λ̄A − λAᴴ + |λ|²G`.
    pub fn u_matrix(&self, lambda: C64) -> CMat {
        let n = self.n();
        let lc = lambda.conj();
        let l2 = lambda.norm_sqr();
        let u = Mat::from_fn(n, n, |i, k| {
            self.j[(i, k)] - lc * self.a[(i, k)] - lambda * self.a[(k, i)].conj()
                + self.g[(i, k)] * l2
        });
        linalg::hermitize(u.as_ref())
    }
}

/// Per-mode scalings `1/√w(n)` that make the Fourier dictionary orthonormal.
pub fn orthonormalize(dict: &Dictionary, space: &InnerProductSpec) -> Result<Vec<f64>> {
    space.validate()?;
    if dict.kind() != DictionaryKind::FourierOnCircle || dict.pi_scaling() {
        return Err(Error::Domain(
            "orthonormalization needs the standard Fourier dictionary".into(),
        ));
    }
    dict.indices()
        .iter()
        .zip(dict.scales())
        .map(|(&n, &s)| {
            let w = space.weight(n).ok_or_else(|| {
                Error::Domain("the empirical space has no Fourier weights".into())
            })?;
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Domain(format!("weight w({n}) = {w} is not positive")));
            }
            Ok(1.0 / (w.sqrt() * s))
        })
        .collect()
}

pub fn assemble_gram_triple(
    source: GramSource<'_>,
    dict: &Dictionary,
    space: &InnerProductSpec,
    band: CoeffBand,
) -> Result<GramTriple> {
    space.validate()?;
    match (source, space) {
        (GramSource::Data { matrices, weights }, InnerProductSpec::EmpiricalL2) => {
            empirical(matrices, weights)
        }
        (GramSource::Map { map, min_samples }, InnerProductSpec::EmpiricalL2) => {
            // Equispaced quadrature at the requested resolution.
            let snaps = crate::dictionaries::make_snapshots(
                map,
                min_samples.max(1),
                crate::dictionaries::SnapshotScheme::EquispacedCircle,
            )?;
            let dm = crate::dictionaries::assemble_data_matrices(dict, &snaps)?;
            empirical(&dm, &snaps.weights)
        }
        (GramSource::Map { map, min_samples }, s) => weighted(map, min_samples, dict, s, band),
        (GramSource::Data { .. }, _) => Err(Error::Domain(
            "weighted spaces need Fourier coefficients of the map; pass GramSource::Map".into(),
        )),
    }
}

fn empirical(dm: &DataMatrices, weights: &[f64]) -> Result<GramTriple> {
    let m = dm.psi_x.nrows();
    let n = dm.psi_x.ncols();
    if weights.len() != m || dm.psi_y.nrows() != m || dm.psi_y.ncols() != n {
        return Err(Error::Shape("data matrices and weights disagree".into()));
    }
    let b = Mat::from_fn(m, 2 * n, |i, k| {
        let sw = weights[i].sqrt();
        if k < n {
            dm.psi_x[(i, k)] * sw
        } else {
            dm.psi_y[(i, k - n)] * sw
        }
    });
    finish(b, n, None)
}

/// Splits the Gram of the weighted stacked matrix `B = W^{1/2}[C_X | C_Y]`.
fn finish(b: CMat, n: usize, band: Option<usize>) -> Result<GramTriple> {
    let full = b.adjoint() * &b;
    let g = full.as_ref().submatrix(0, 0, n, n).to_owned();
    let a = full.as_ref().submatrix(0, n, n, n).to_owned();
    let j = full.as_ref().submatrix(n, n, n, n).to_owned();
    let r = linalg::thin_r(b.as_ref());
    let factor = SqrtFactor {
        rx: r.as_ref().subcols(0, n).to_owned(),
        ry: r.as_ref().subcols(n, n).to_owned(),
    };
    let mut gt = GramTriple::from_parts(g, a, j)?.with_factor(factor);
    gt.band = band;
    Ok(gt)
}

/// Fourier coefficients `c_n(ψ_l ∘ S)` for `|n| ≤ band`, row `n + band`.
fn koopman_coefficients(
    map: &CircleMap,
    dict: &Dictionary,
    m_fft: usize,
    fft: &Arc<dyn Fft<f64>>,
) -> Result<Vec<Vec<C64>>> {
    let images = equispaced_circle(m_fft)
        .into_iter()
        .map(|z| map.eval_unchecked(z))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..dict.len())
        .into_par_iter()
        .map(|l| {
            let mut buf: Vec<C64> = images.iter().map(|&y| dict.eval(l, y)).collect();
            fft.process(&mut buf);
            let inv = 1.0 / m_fft as f64;
            buf.iter_mut().for_each(|v| *v *= inv);
            buf
        })
        .collect())
}

fn coeff(spectrum: &[C64], n: i64) -> C64 {
    let m = spectrum.len() as i64;
    spectrum[n.rem_euclid(m) as usize]
}

/// Largest ratio of weighted energy beyond `band` to the total, over all columns.
fn tail_ratio(spectra: &[Vec<C64>], space: &InnerProductSpec, band: usize) -> f64 {
    spectra
        .iter()
        .map(|spec| {
            let m = spec.len() as i64;
            let half = (m - 1) / 2;
            let mut total = 0.0;
            let mut tail = 0.0;
            for n in -half..=half {
                let e = space.weight(n).unwrap_or(1.0) * coeff(spec, n).norm_sqr();
                total += e;
                if n.unsigned_abs() as usize > band {
                    tail += e;
                }
            }
            if total > 0.0 {
                tail / total
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn weighted(
    map: &CircleMap,
    min_samples: usize,
    dict: &Dictionary,
    space: &InnerProductSpec,
    band: CoeffBand,
) -> Result<GramTriple> {
    if dict.kind() != DictionaryKind::FourierOnCircle || dict.pi_scaling() {
        return Err(Error::Domain(
            "weighted spaces need the standard Fourier dictionary".into(),
        ));
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut b = match band {
        CoeffBand::Auto => dict.max_abs_index() + 64,
        CoeffBand::Fixed(b) | CoeffBand::Literal(b) => b,
    };
    if b < dict.max_abs_index() {
        return Err(Error::Domain(format!(
            "band {b} is narrower than the dictionary (max |n| = {})",
            dict.max_abs_index()
        )));
    }
    let spectra = loop {
        let m_fft = min_samples.max(4096).max(8 * b);
        let fft = planner.plan_fft_forward(m_fft);
        let spectra = koopman_coefficients(map, dict, m_fft, &fft)?;
        if matches!(band, CoeffBand::Literal(_)) {
            break spectra;
        }
        let ratio = tail_ratio(&spectra, space, b);
        if ratio <= TAIL_TOL {
            break spectra;
        }
        match band {
            CoeffBand::Auto if 2 * b <= MAX_BAND => {
                log::debug!("band {b} leaves tail ratio {ratio:.2e}; doubling");
                b *= 2;
            }
            _ => return Err(Error::BandTooSmall { band: b, ratio }),
        }
    };

    let n = dict.len();
    let rows = 2 * b + 1;
    let sqrt_w: Vec<f64> = (-(b as i64)..=b as i64)
        .map(|k| space.weight(k).expect("weighted space").sqrt())
        .collect();
    let mut stacked = Mat::<c64>::zeros(rows, 2 * n);
    for (j, (&nj, &sj)) in dict.indices().iter().zip(dict.scales()).enumerate() {
        let row = (nj + b as i64) as usize;
        stacked[(row, j)] = c64::new(sqrt_w[row] * sj, 0.0);
    }
    for (l, spec) in spectra.iter().enumerate() {
        for (row, &sw) in sqrt_w.iter().enumerate() {
            stacked[(row, n + l)] = coeff(spec, row as i64 - b as i64) * sw;
        }
    }
    finish(stacked, n, Some(b))
}
