//! Eigenvalue classification, comparison with analytic spectra and metastable
//! clustering.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrueSpectrum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenEntry {
    pub re: f64,
    pub im: f64,
    /// `None` when the residual could not be evaluated.
    pub residual: Option<f64>,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dist_to_truth: Option<f64>,
}

impl EigenEntry {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<EigenEntry>,
    pub epsilon: f64,
}

impl SpectralReport {
    pub fn accepted(&self) -> impl Iterator<Item = &EigenEntry> {
        self.eigenvalues.iter().filter(|e| e.accepted)
    }
}

/// Orders by modulus (descending), then real and imaginary part.
pub fn modulus_order(a: &C64, b: &C64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

/// Attaches a residual to every eigenvalue and accepts those below `epsilon`.
///
/// `residual_fn` receives the index into `eigs` and the eigenvalue.
pub fn classify_eigenvalues<F>(
    eigs: &[C64],
    residual_fn: F,
    epsilon: f64,
    truth: Option<&TrueSpectrum>,
) -> SpectralReport
where
    F: Fn(usize, C64) -> Result<f64>,
{
    let mut order: Vec<usize> = (0..eigs.len()).collect();
    order.sort_by(|&i, &j| modulus_order(&eigs[i], &eigs[j]));
    let eigenvalues = order
        .into_iter()
        .map(|i| {
            let z = eigs[i];
            let residual = match residual_fn(i, z) {
                Ok(r) if r.is_finite() => Some(r),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("residual of eigenvalue {z} failed: {e}");
                    None
                }
            };
            EigenEntry {
                re: z.re,
                im: z.im,
                residual,
                accepted: residual.is_some_and(|r| r < epsilon),
                dist_to_truth: truth.map(|t| t.distance(z)),
            }
        })
        .collect();
    SpectralReport {
        eigenvalues,
        epsilon,
    }
}

/// Re-thresholds an existing report.
pub fn reclassify(report: &SpectralReport, epsilon: f64) -> SpectralReport {
    SpectralReport {
        eigenvalues: report
            .eigenvalues
            .iter()
            .map(|e| EigenEntry {
                accepted: e.residual.is_some_and(|r| r < epsilon),
                ..e.clone()
            })
            .collect(),
        epsilon,
    }
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &[C64], b: &[C64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet("Hausdorff distance of an empty set".into()));
    }
    let directed = |p: &[C64], q: &[C64]| {
        p.iter()
            .map(|x| q.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Hausdorff distance between eigenvalues and the analytic spectrum, both restricted
/// to `|λ| ≥ modulus_floor`.
pub fn hausdorff_to_truth(eigs: &[C64], truth: &TrueSpectrum, modulus_floor: f64) -> Result<f64> {
    let keep = |v: &[C64]| -> Vec<C64> {
        v.iter().copied().filter(|z| z.norm() >= modulus_floor).collect()
    };
    hausdorff(&keep(eigs), &keep(&truth.points))
}

/// Indices of real eigenvalues close to 1: `Re λ > 1 − gap_tol` and `|Im λ| < im_tol`.
pub fn near_one(eigs: &[C64], gap_tol: f64, im_tol: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..eigs.len())
        .filter(|&i| eigs[i].re > 1.0 - gap_tol && eigs[i].im.abs() < im_tol)
        .collect();
    idx.sort_by(|&i, &j| modulus_order(&eigs[i], &eigs[j]));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetastablePartition {
    pub n_clusters: usize,
    pub labels: Vec<usize>,
    pub dominant_eigs: Vec<C64>,
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 10,
            max_iter: 300,
        }
    }
}

/// Unit norm with the first significant entry made positive real.
pub fn canonicalize(v: &[C64]) -> Result<Vec<C64>> {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate("zero or non-finite eigenvector".into()));
    }
    let top = v.iter().fold(0.0f64, |a, x| a.max(x.norm()));
    let pivot = v
        .iter()
        .find(|x| x.norm() > 1e-8 * top)
        .copied()
        .expect("nonzero vector has a significant entry");
    let phase = pivot.conj() / pivot.norm();
    Ok(v.iter().map(|x| x * phase / norm).collect())
}

/// Clusters samples by the real parts of canonicalized eigenvectors.
///
/// `vectors[k][i]` is the value of the `k`-th eigenvector at sample `i`.
pub fn metastable_partition(
    vectors: &[Vec<C64>],
    dominant_eigs: &[C64],
    n_clusters: usize,
    cfg: KMeansConfig,
) -> Result<MetastablePartition> {
    if vectors.is_empty() {
        return Err(Error::EmptySet("no eigenvectors to cluster".into()));
    }
    let m = vectors[0].len();
    if vectors.iter().any(|v| v.len() != m) {
        return Err(Error::Shape("eigenvectors differ in length".into()));
    }
    if n_clusters == 0 || n_clusters > m {
        return Err(Error::Domain(format!(
            "n_clusters = {n_clusters} must lie in 1..={m}"
        )));
    }
    let canon = vectors
        .iter()
        .map(|v| canonicalize(v))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<Vec<f64>> = (0..m)
        .map(|i| canon.iter().map(|v| v[i].re).collect())
        .collect();
    let labels = kmeans(&points, n_clusters, cfg)?;
    Ok(MetastablePartition {
        n_clusters,
        labels,
        dominant_eigs: dominant_eigs.to_vec(),
    })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means with k-means++ seeding; returns labels of the lowest-inertia restart.
pub fn kmeans(points: &[Vec<f64>], k: usize, cfg: KMeansConfig) -> Result<Vec<usize>> {
    let m = points.len();
    if m == 0 {
        return Err(Error::EmptySet("no points to cluster".into()));
    }
    if k == 1 {
        return Ok(vec![0; m]);
    }
    let spread = points.iter().map(|p| dist2(p, &points[0])).fold(0.0, f64::max);
    if spread == 0.0 {
        return Err(Error::Degenerate(format!(
            "zero-variance input cannot be split into {k} clusters"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..cfg.restarts.max(1) {
        if let Some((inertia, labels)) = lloyd(points, k, cfg.max_iter, &mut rng) {
            if best.as_ref().is_none_or(|b| inertia < b.0) {
                best = Some((inertia, labels));
            }
        }
    }
    best.map(|b| b.1).ok_or_else(|| {
        Error::Convergence(format!("k-means did not converge in {} iterations", cfg.max_iter))
    })
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> Option<(f64, Vec<usize>)> {
    let m = points.len();
    let d = points[0].len();
    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..m)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random_range(0.0..total);
            let mut pick = m - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        } else {
            rng.random_range(0..m)
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(p, &centers[centers.len() - 1]));
        }
    }

    let mut labels = vec![usize::MAX; m];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, ctr) in centers.iter().enumerate() {
                let dd = dist2(p, ctr);
                if dd < best.0 {
                    best = (dd, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its center.
                let far = (0..m)
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centers[labels[a]])
                            .total_cmp(&dist2(&points[b], &centers[labels[b]]))
                    })
                    .unwrap();
                centers[c] = points[far].clone();
                labels[far] = c;
                changed = true;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            let inertia = points
                .iter()
                .zip(&labels)
                .map(|(p, &l)| dist2(p, &centers[l]))
                .sum();
            return Some((inertia, labels));
        }
    }
    None
}

/// Fraction of samples on which two labelings agree, maximized over relabelings of
/// `labels` (at most 8 clusters).
pub fn partition_agreement(labels: &[usize], truth: &[usize]) -> Result<f64> {
    if labels.len() != truth.len() || labels.is_empty() {
        return Err(Error::Shape("labelings differ in length or are empty".into()));
    }
    let k = labels.iter().chain(truth).max().unwrap() + 1;
    if k > 8 {
        return Err(Error::Domain("too many clusters to match by permutation".into()));
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0usize;
    loop {
        let hits = labels.iter().zip(truth).filter(|(&l, &t)| perm[l] == t).count();
        best = best.max(hits);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best as f64 / labels.len() as f64)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<C64> {
        v.iter().map(|&(a, b)| C64::new(a, b)).collect()
    }

    #[test]
    fn hausdorff_basics() {
        let a = pts(&[(1.0, 0.0), (0.5, 0.5)]);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let ts = TrueSpectrum::from_base(C64::new(0.0, 0.0), Some(1));
        assert_eq!(hausdorff_to_truth(&pts(&[(1.0, 0.0)]), &ts, 0.5).unwrap(), 0.0);
        assert!(matches!(
            hausdorff_to_truth(&pts(&[(0.1, 0.0)]), &ts, 0.5),
            Err(Error::EmptySet(_))
        ));
    }

    #[test]
    fn empty_report() {
        let r = classify_eigenvalues(&[], |_, _| Ok(0.0), 0.1, None);
        assert!(r.eigenvalues.is_empty());
    }

    #[test]
    fn report_is_sorted_and_flags_nan() {
        let eigs = pts(&[(0.2, 0.0), (1.0, 0.0), (0.0, -0.5)]);
        let r = classify_eigenvalues(
            &eigs,
            |i, _| match i {
                0 => Ok(0.5),
                1 => Ok(0.001),
                _ => Ok(f64::NAN),
            },
            0.005,
            None,
        );
        let mods: Vec<f64> = r.eigenvalues.iter().map(|e| e.value().norm()).collect();
        assert_eq!(mods, vec![1.0, 0.5, 0.2]);
        assert!(r.eigenvalues[0].accepted);
        assert!(!r.eigenvalues[1].accepted && r.eigenvalues[1].residual.is_none());
        assert!(!r.eigenvalues[2].accepted);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"residual\":null"));
    }

    #[test]
    fn partition_of_two_blobs() {
        let v1: Vec<C64> = (0..40)
            .map(|i| C64::new(if i < 25 { 1.0 } else { -1.0 } + 0.01 * (i % 3) as f64, 0.0))
            .collect();
        let truth: Vec<usize> = (0..40).map(|i| usize::from(i >= 25)).collect();
        let p = metastable_partition(std::slice::from_ref(&v1), &[C64::new(0.99, 0.0)], 2, KMeansConfig::default()).unwrap();
        assert_eq!(partition_agreement(&p.labels, &truth).unwrap(), 1.0);
        // scaling by a complex number leaves the partition unchanged
        let scaled: Vec<C64> = v1.iter().map(|x| x * C64::new(-0.3, 2.0)).collect();
        let q = metastable_partition(&[scaled], &[], 2, KMeansConfig::default()).unwrap();
        assert_eq!(p.labels, q.labels);
    }

    #[test]
    fn constant_vector_cannot_be_split() {
        let v = vec![C64::new(0.5, 0.0); 10];
        assert!(matches!(
            metastable_partition(std::slice::from_ref(&v), &[], 2, KMeansConfig::default()),
            Err(Error::Degenerate(_))
        ));
        let p = metastable_partition(&[v], &[], 1, KMeansConfig::default()).unwrap();
        assert!(p.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn near_one_selection() {
        let eigs = pts(&[(1.0, 0.0), (0.95, 0.01), (0.95, 0.1), (0.8, 0.0), (0.86, 0.0)]);
        assert_eq!(near_one(&eigs, 0.15, 0.02), vec![0, 1, 4]);
    }

    #[test]
    fn agreement_is_permutation_invariant() {
        assert_eq!(partition_agreement(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(partition_agreement(&[0, 1, 2, 2], &[2, 0, 1, 0]).unwrap(), 0.75);
    }

    proptest! {
        #[test]
        fn classification_is_monotone_in_epsilon(
            res in prop::collection::vec(0.0..1.0f64, 1..30),
            e1 in 0.0..1.0f64,
            e2 in 0.0..1.0f64,
        ) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let eigs: Vec<C64> = (0..res.len()).map(|i| C64::new(i as f64 / 30.0, 0.0)).collect();
            let a = classify_eigenvalues(&eigs, |i, _| Ok(res[i]), lo, None);
            let b = reclassify(&a, hi);
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                prop_assert!(!x.accepted || y.accepted);
                prop_assert_eq!(x.accepted, x.residual.unwrap() < lo);
            }
        }

        #[test]
        fn hausdorff_is_a_metric(
            a in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..8),
            b in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..8),
            c in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..8),
        ) {
            let (a, b, c) = (pts(&a), pts(&b), pts(&c));
            let ab = hausdorff(&a, &b).unwrap();
            prop_assert_eq!(ab, hausdorff(&b, &a).unwrap());
            prop_assert!(ab <= hausdorff(&a, &c).unwrap() + hausdorff(&c, &b).unwrap() + 1e-12);
        }
    }
}
