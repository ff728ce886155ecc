//! Dictionaries of observables, snapshot sets and the data matrices `Ψ_X`, `Ψ_Y`.

use std::io::Read;
use std::path::Path;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::CircleMap;
use crate::error::{Error, RankWarning, Result};
use crate::linalg::{self, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    FourierOnCircle,
    ImplicitKernelFeatures,
}

/// A finite family of observables `ψ_1..ψ_N`.
///
/// Fourier modes are `ψ_n(z) = s_n zⁿ` with per-mode scales `s_n` (all one unless the
/// dictionary was orthonormalized or carries feature weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    kind: DictionaryKind,
    indices: Vec<i64>,
    scales: Vec<f64>,
    pi_scaling: bool,
}

/// Ascending Fourier indices for a dictionary of size `n`.
///
/// Odd sizes give the symmetric range `−(n−1)/2..=(n−1)/2`; even sizes give
/// `−n/2..=n/2−1`.
pub fn fourier_indices(n: usize) -> Vec<i64> {
    let n = n as i64;
    let lo = -(n / 2);
    (lo..lo + n).collect()
}

impl Dictionary {
    pub fn fourier(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("dictionary size must be at least 1".into()));
        }
        Ok(Self {
            kind: DictionaryKind::FourierOnCircle,
            indices: fourier_indices(n),
            scales: vec![1.0; n],
            pi_scaling: false,
        })
    }

    /// Fourier modes read literally as `e^{iπnθ}` for `z = e^{iθ}`, `θ ∈ [0, 2π)`.
    ///
    /// These are not periodic for odd `n`, so only the empirical L² space accepts them.
    pub fn fourier_pi_scaled(n: usize) -> Result<Self> {
        Ok(Self {
            pi_scaling: true,
            ..Self::fourier(n)?
        })
    }

    /// Placeholder for a dictionary defined implicitly through a kernel.
    pub fn implicit_kernel_features(n: usize) -> Self {
        Self {
            kind: DictionaryKind::ImplicitKernelFeatures,
            indices: (0..n as i64).collect(),
            scales: vec![1.0; n],
            pi_scaling: false,
        }
    }

    /// Returns a copy with each mode multiplied by the matching scale.
    pub fn with_scales(&self, scales: &[f64]) -> Result<Self> {
        if scales.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} scales for a dictionary of size {}",
                scales.len(),
                self.len()
            )));
        }
        Ok(Self {
            scales: self
                .scales
                .iter()
                .zip(scales)
                .map(|(a, b)| a * b)
                .collect(),
            ..self.clone()
        })
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn pi_scaling(&self) -> bool {
        self.pi_scaling
    }

    /// `ψ_j(z)` for the `j`-th column.
    pub fn eval(&self, j: usize, z: C64) -> C64 {
        let n = self.indices[j];
        let base = if self.pi_scaling {
            let mut theta = z.arg();
            if theta < 0.0 {
                theta += 2.0 * std::f64::consts::PI;
            }
            C64::from_polar(1.0, std::f64::consts::PI * n as f64 * theta)
        } else {
            z.powi(n as i32)
        };
        base * self.scales[j]
    }

    /// Position of mode `n` in the column ordering.
    pub fn position(&self, n: i64) -> Option<usize> {
        self.indices.binary_search(&n).ok()
    }

    pub fn max_abs_index(&self) -> usize {
        self.indices.iter().map(|n| n.unsigned_abs()).max().unwrap_or(0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SnapshotScheme {
    EquispacedCircle,
    MonteCarlo { seed: u64 },
    TrajectoryPairs,
}

/// Paired samples `{xᵢ, S(xᵢ)}` with quadrature weights.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub x: CMat,
    pub y: CMat,
    pub weights: Vec<f64>,
    pub scheme: SnapshotScheme,
}

impl SnapshotSet {
    pub fn new(x: CMat, y: CMat, weights: Vec<f64>, scheme: SnapshotScheme) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if x.nrows() != y.nrows() || x.ncols() != y.ncols() || weights.len() != x.nrows() {
            return Err(Error::Shape(format!(
                "X is {}×{}, Y is {}×{}, {} weights",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Domain("quadrature weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            x,
            y,
            weights,
            scheme,
        })
    }

    /// Number of pairs `M`.
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Pairs consecutive states of a trajectory (one state per row) after keeping every
    /// `stride`-th row.
    pub fn from_trajectory(states: &[Vec<f64>], stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Domain("stride must be at least 1".into()));
        }
        let kept: Vec<&Vec<f64>> = states.iter().step_by(stride).collect();
        if kept.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: kept.len(),
            });
        }
        let d = kept[0].len();
        if d == 0 || kept.iter().any(|s| s.len() != d) {
            return Err(Error::Shape("trajectory states have inconsistent dimension".into()));
        }
        let m = kept.len() - 1;
        let x = Mat::from_fn(m, d, |i, k| C64::new(kept[i][k], 0.0));
        let y = Mat::from_fn(m, d, |i, k| C64::new(kept[i + 1][k], 0.0));
        Self::new(x, y, vec![1.0 / m as f64; m], SnapshotScheme::TrajectoryPairs)
    }

    /// Circle states of a one-dimensional snapshot set.
    pub fn circle_states(&self) -> Result<(Vec<C64>, Vec<C64>)> {
        if self.dim() != 1 {
            return Err(Error::Shape(format!(
                "expected scalar circle states, got dimension {}",
                self.dim()
            )));
        }
        Ok((
            (0..self.len()).map(|i| self.x[(i, 0)]).collect(),
            (0..self.len()).map(|i| self.y[(i, 0)]).collect(),
        ))
    }
}

/// `m` equispaced points `e^{2πik/m}` on the circle.
pub fn equispaced_circle(m: usize) -> Vec<C64> {
    (0..m)
        .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / m as f64))
        .collect()
}

/// Samples the map on the circle.
pub fn make_snapshots(map: &CircleMap, m: usize, scheme: SnapshotScheme) -> Result<SnapshotSet> {
    if m == 0 {
        return Err(Error::Domain("number of snapshots must be positive".into()));
    }
    let xs = match scheme {
        SnapshotScheme::EquispacedCircle => equispaced_circle(m),
        SnapshotScheme::MonteCarlo { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m)
                .map(|_| C64::from_polar(1.0, rng.random_range(0.0..2.0 * std::f64::consts::PI)))
                .collect()
        }
        SnapshotScheme::TrajectoryPairs => {
            return Err(Error::Domain(
                "trajectory pairs come from data; use SnapshotSet::from_trajectory".into(),
            ))
        }
    };
    let ys = xs
        .iter()
        .map(|&z| crate::dynamics::eval_map(map, z))
        .collect::<Result<Vec<_>>>()?;
    SnapshotSet::new(
        Mat::from_fn(m, 1, |i, _| xs[i]),
        Mat::from_fn(m, 1, |i, _| ys[i]),
        vec![1.0 / m as f64; m],
        scheme,
    )
}

/// Data matrices `(Ψ_X)_{ij} = ψ_j(xᵢ)` and `(Ψ_Y)_{ij} = ψ_j(S(xᵢ))`.
#[derive(Debug, Clone)]
pub struct DataMatrices {
    pub psi_x: CMat,
    pub psi_y: CMat,
    pub rank_warning: Option<RankWarning>,
}

pub fn assemble_data_matrices(dict: &Dictionary, snaps: &SnapshotSet) -> Result<DataMatrices> {
    if dict.kind() != DictionaryKind::FourierOnCircle {
        return Err(Error::Domain(
            "data matrices need an explicit dictionary; kernels use the kernel module".into(),
        ));
    }
    let (xs, ys) = snaps.circle_states()?;
    let n = dict.len();
    let psi_x = Mat::from_fn(xs.len(), n, |i, j| dict.eval(j, xs[i]));
    let psi_y = Mat::from_fn(ys.len(), n, |i, j| dict.eval(j, ys[i]));
    if !linalg::is_finite(psi_x.as_ref()) || !linalg::is_finite(psi_y.as_ref()) {
        return Err(Error::Domain("non-finite dictionary evaluation".into()));
    }
    let expected = xs.len().min(n);
    // R of a thin QR has the singular values of Ψ_X at a fraction of the cost.
    let r = if xs.len() > n {
        linalg::thin_r(psi_x.as_ref())
    } else {
        psi_x.clone()
    };
    let rank = linalg::numerical_rank(r.as_ref(), 1e-10)?;
    let rank_warning = (rank < expected).then(|| {
        log::warn!("Ψ_X has numerical rank {rank} < {expected}");
        RankWarning {
            numerical_rank: rank,
            expected_rank: expected,
        }
    });
    Ok(DataMatrices {
        psi_x,
        psi_y,
        rank_warning,
    })
}

/// Reads a trajectory CSV (one state per row, header optional).
pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse {
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(k + 1);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        if rows.is_empty() && width.is_none() && parsed.iter().all(|p| p.is_err()) {
            // Non-numeric first row: a header.
            width = Some(record.len());
            continue;
        }
        let mut row = Vec::with_capacity(parsed.len());
        for (col, p) in parsed.into_iter().enumerate() {
            match p {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(Error::Parse {
                        line,
                        column: col + 1,
                        message: format!("not a finite number: {:?}", &record[col]),
                    })
                }
            }
        }
        match width {
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line,
                    column: row.len().min(w) + 1,
                    message: format!("expected {w} columns, found {}", row.len()),
                })
            }
            None => width = Some(row.len()),
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Loads a trajectory file and pairs consecutive states after subsampling.
pub fn ingest_trajectory(path: &Path, stride: usize) -> Result<SnapshotSet> {
    let file = std::fs::File::open(path)?;
    let rows = read_trajectory_csv(std::io::BufReader::new(file))?;
    SnapshotSet::from_trajectory(&rows, stride)
}
