//! EDMD matrices, the ResDMD residual and related diagnostics.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dictionaries::{assemble_data_matrices, make_snapshots, Dictionary, SnapshotScheme};
use crate::dynamics::CircleMap;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::residual::{clamped_sqrt, FieldMeta, ResidualField};
use crate::spaces::{
    assemble_gram_triple, orthonormalize, CoeffBand, GramSource, GramTriple, InnerProductSpec,
};

/// Koopman matrix `K = G⁻¹A` and transfer matrix `L = G⁻¹Aᴴ`.
#[derive(Debug, Clone)]
pub struct EdmdOperators {
    pub k: CMat,
    pub l: CMat,
}

/// An eigenvalue with its right eigenvector in dictionary coordinates.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: C64,
    pub vector: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Koopman,
    Transfer,
}

pub fn fit_edmd(gt: &GramTriple) -> Result<EdmdOperators> {
    let solve = |b: &CMat| {
        linalg::hpd_solve(gt.g.as_ref(), b.as_ref())
            .ok_or_else(|| Error::SingularGram("Cholesky solve with G failed".into()))
    };
    let k = solve(&gt.a)?;
    let l = solve(&gt.a.adjoint().to_owned())?;
    Ok(EdmdOperators { k, l })
}

impl EdmdOperators {
    pub fn matrix(&self, op: Operator) -> &CMat {
        match op {
            Operator::Koopman => &self.k,
            Operator::Transfer => &self.l,
        }
    }

    pub fn eigenvalues(&self, op: Operator) -> Result<Vec<C64>> {
        linalg::eigenvalues(self.matrix(op).as_ref())
    }

    pub fn eigenpairs(&self, op: Operator) -> Result<Vec<Eigenpair>> {
        let (vals, vecs) = linalg::eigen(self.matrix(op).as_ref())?;
        Ok(vals
            .into_iter()
            .enumerate()
            .map(|(i, value)| Eigenpair {
                value,
                vector: vecs.col(i).iter().copied().collect(),
            })
            .collect())
    }
}

/// Precomputed state for evaluating `res(λ)` at many points.
pub struct ResidualEvaluator<'a> {
    gt: &'a GramTriple,
    // (R_Y L⁻ᴴ, R_X L⁻ᴴ) when a square-root factor is available.
    factored: Option<(CMat, CMat)>,
}

impl<'a> ResidualEvaluator<'a> {
    pub fn new(gt: &'a GramTriple) -> Self {
        let factored = gt.factor().map(|f| {
            let l = gt.chol();
            let right = |r: &CMat| {
                linalg::lower_solve(l.as_ref(), r.adjoint().to_owned().as_ref())
                    .adjoint()
                    .to_owned()
            };
            (right(&f.ry), right(&f.rx))
        });
        Self { gt, factored }
    }

    /// `res(λ) = sqrt(λ_min(U(λ), G))`.
    pub fn res(&self, lambda: C64) -> Result<f64> {
        match &self.factored {
            Some((by, bx)) => {
                if by.nrows() < by.ncols() {
                    return Ok(0.0);
                }
                let m = Mat::from_fn(by.nrows(), by.ncols(), |i, j| {
                    by[(i, j)] - lambda * bx[(i, j)]
                });
                let s = linalg::singular_values(m.as_ref())?;
                Ok(s.last().copied().unwrap_or(0.0))
            }
            None => {
                let u = self.gt.u_matrix(lambda);
                let c = linalg::congruence_inv(self.gt.chol().as_ref(), u.as_ref());
                let eig = linalg::hermitian_eigenvalues(c.as_ref())?;
                let scale = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                clamped_sqrt(eig[0], scale)
            }
        }
    }
}

/// Evaluates `res(λ)` over a grid.
pub fn resdmd_grid(gt: &GramTriple, grid: Vec<C64>, meta: FieldMeta) -> ResidualField {
    let ev = ResidualEvaluator::new(gt);
    ResidualField::evaluate(grid, meta, |z| ev.res(z))
}

/// `sqrt(cᴴU(λ)c / cᴴGc)` for a fixed coefficient vector.
pub fn residual_of_pair(gt: &GramTriple, lambda: C64, c: &[C64]) -> Result<f64> {
    if c.len() != gt.n() {
        return Err(Error::Shape(format!("vector of length {} for N = {}", c.len(), gt.n())));
    }
    if linalg::vec_norm(c) == 0.0 {
        return Err(Error::Domain("zero coefficient vector".into()));
    }
    if let Some(f) = gt.factor() {
        let rc_x = linalg::mat_vec(f.rx.as_ref(), c);
        let rc_y = linalg::mat_vec(f.ry.as_ref(), c);
        let num: Vec<C64> = rc_y.iter().zip(&rc_x).map(|(y, x)| y - lambda * x).collect();
        let den = linalg::vec_norm(&rc_x);
        if den == 0.0 {
            return Err(Error::Domain("cᴴGc vanishes".into()));
        }
        return Ok(linalg::vec_norm(&num) / den);
    }
    let den = linalg::quadratic_form(gt.g.as_ref(), c).re;
    if !(den > 0.0) {
        return Err(Error::Domain("cᴴGc vanishes".into()));
    }
    let u = gt.u_matrix(lambda);
    let num = linalg::quadratic_form(u.as_ref(), c).re;
    let scale = linalg::fro(u.as_ref()) * linalg::vec_norm(c).powi(2);
    clamped_sqrt(num / den, scale / den)
}

/// `‖(Aᴴ − λG)c‖` with `cᴴGc = 1`.
///
/// This only measures a scaled, projected residual of the transfer operator and is
/// kept as a diagnostic.
pub fn naive_transfer_residual(gt: &GramTriple, lambda: C64, c: &[C64]) -> Result<f64> {
    if c.len() != gt.n() {
        return Err(Error::Shape(format!("vector of length {} for N = {}", c.len(), gt.n())));
    }
    let den = linalg::quadratic_form(gt.g.as_ref(), c).re;
    if linalg::vec_norm(c) == 0.0 || !(den > 0.0) {
        return Err(Error::Domain("zero coefficient vector".into()));
    }
    let scale = 1.0 / den.sqrt();
    let n = gt.n();
    let m = Mat::from_fn(n, n, |i, j| gt.a[(j, i)].conj() - lambda * gt.g[(i, j)]);
    let v = linalg::mat_vec(m.as_ref(), c);
    Ok(linalg::vec_norm(&v) * scale)
}

/// Spectral norm of `LK − KL` in a basis that is orthonormal for `space`.
///
/// Weighted spaces rescale the Fourier dictionary by `1/√w(n)`; the empirical space
/// uses `m` equispaced points, on which the Fourier dictionary is already orthonormal.
pub fn deviation_from_normality(
    map: &CircleMap,
    dict: &Dictionary,
    m: usize,
    space: &InnerProductSpec,
    band: CoeffBand,
) -> Result<f64> {
    let gt = if space.is_weighted() {
        let scaled = dict.with_scales(&orthonormalize(dict, space)?)?;
        assemble_gram_triple(
            GramSource::Map {
                map,
                min_samples: m,
            },
            &scaled,
            space,
            band,
        )?
    } else {
        let snaps = make_snapshots(map, m, SnapshotScheme::EquispacedCircle)?;
        let dm = assemble_data_matrices(dict, &snaps)?;
        assemble_gram_triple(
            GramSource::Data {
                matrices: &dm,
                weights: &snaps.weights,
            },
            dict,
            space,
            band,
        )?
    };
    let ops = fit_edmd(&gt)?;
    let comm = &ops.l * &ops.k - &ops.k * &ops.l;
    linalg::spectral_norm(comm.as_ref())
}

/// Galerkin defect `max(‖GK − A‖, ‖GL − Aᴴ‖) / ‖A‖` (Frobenius).
pub fn galerkin_defect(gt: &GramTriple, ops: &EdmdOperators) -> f64 {
    let na = linalg::fro(gt.a.as_ref()).max(f64::MIN_POSITIVE);
    let dk = linalg::fro((&gt.g * &ops.k - &gt.a).as_ref());
    let dl = linalg::fro((&gt.g * &ops.l - gt.a.adjoint()).as_ref());
    dk.max(dl) / na
}

/// `c` scaled so that `cᴴGc = 1`.
pub fn g_normalize(gt: &GramTriple, c: &[C64]) -> Result<Vec<C64>> {
    let q = linalg::quadratic_form(gt.g.as_ref(), c).re;
    if !(q > 0.0) {
        return Err(Error::Domain("cᴴGc vanishes".into()));
    }
    let s = 1.0 / q.sqrt();
    Ok(c.iter().map(|v| v * s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::c64;
    use crate::dynamics::reference_mu;
    use crate::spectral::hausdorff_to_truth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero() -> c64 {
        c64::new(0.0, 0.0)
    }

    fn l2_setup(map: &CircleMap, n: usize, m: usize, scheme: SnapshotScheme) -> (GramTriple, crate::dictionaries::DataMatrices) {
        let dict = Dictionary::fourier(n).unwrap();
        let snaps = make_snapshots(map, m, scheme).unwrap();
        let dm = assemble_data_matrices(&dict, &snaps).unwrap();
        let gt = assemble_gram_triple(
            GramSource::Data {
                matrices: &dm,
                weights: &snaps.weights,
            },
            &dict,
            &InnerProductSpec::EmpiricalL2,
            CoeffBand::Auto,
        )
        .unwrap();
        (gt, dm)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identity_map_gives_identity_operators() {
        let mut g = Mat::<c64>::zeros(3, 3);
        for i in 0..3 {
            g[(i, i)] = c64::new(1.0 + i as f64, 0.0);
        }
        g[(0, 1)] = c64::new(0.2, 0.1);
        g[(1, 0)] = c64::new(0.2, -0.1);
        let gt = GramTriple::from_parts(g.clone(), g.clone(), g).unwrap();
        let ops = fit_edmd(&gt).unwrap();
        let eye = Mat::<c64>::identity(3, 3);
        assert!(linalg::fro((&ops.k - &eye).as_ref()) < 1e-14);
        assert!(linalg::fro((&ops.l - &eye).as_ref()) < 1e-14);
    }

    /// For the doubling map the Koopman matrix sends mode `n` to mode `2n` when both
    /// are in range and to zero otherwise.
    #[test]
    fn doubling_map_matrix() {
        let map = CircleMap::blaschke_product(C64::new(0.0, 0.0)).unwrap();
        let (gt, _) = l2_setup(&map, 5, 64, SnapshotScheme::EquispacedCircle);
        let ops = fit_edmd(&gt).unwrap();
        let idx = crate::dictionaries::fourier_indices(5);
        let oracle = Mat::<c64>::from_fn(5, 5, |i, j| {
            if idx[i] == 2 * idx[j] {
                c64::new(1.0, 0.0)
            } else {
                zero()
            }
        });
        assert!(linalg::fro((&ops.k - &oracle).as_ref()) < 1e-13);
        let eigs = ops.eigenvalues(Operator::Koopman).unwrap();
        for e in eigs {
            assert!(e.norm() < 1e-7 || (e - 1.0).norm() < 1e-12, "{e}");
        }
    }

    #[test]
    fn galerkin_property_and_adjointness() {
        let map = CircleMap::blaschke_product(reference_mu()).unwrap();
        let (gt, _) = l2_setup(&map, 11, 300, SnapshotScheme::MonteCarlo { seed: 5 });
        let ops = fit_edmd(&gt).unwrap();
        assert!(galerkin_defect(&gt, &ops) < 1e-10);
        let (gt, _) = l2_setup(&map, 11, 300, SnapshotScheme::EquispacedCircle);
        let ops = fit_edmd(&gt).unwrap();
        let diff = linalg::fro((&ops.l - ops.k.adjoint()).as_ref());
        assert!(diff < 1e-12);
    }

    #[test]
    fn l2_transfer_eigenvalues_match_blaschke_spectrum() {
        let mu = reference_mu();
        let map = CircleMap::blaschke_product(mu).unwrap();
        let (gt, _) = l2_setup(&map, 41, 1000, SnapshotScheme::EquispacedCircle);
        let ops = fit_edmd(&gt).unwrap();
        let eigs = ops.eigenvalues(Operator::Transfer).unwrap();
        // |μ|⁴ ≈ 0.316, so the modulus floor 0.3 keeps powers up to n = 4.
        let truth = crate::dynamics::true_spectrum(&map, None).unwrap();
        let h = hausdorff_to_truth(&eigs, &truth, 0.3).unwrap();
        assert!(h < 1e-6, "{h}");
    }

    #[test]
    fn res_at_one_vanishes_and_far_points_are_large() {
        let map = CircleMap::blaschke_product(reference_mu()).unwrap();
        let (gt, _) = l2_setup(&map, 21, 500, SnapshotScheme::EquispacedCircle);
        let ev = ResidualEvaluator::new(&gt);
        assert!(ev.res(C64::new(1.0, 0.0)).unwrap() < 1e-10);
        assert!(ev.res(C64::new(10.0, 0.0)).unwrap() > 8.0);
        let plain = gt.without_factor();
        let slow = ResidualEvaluator::new(&plain);
        assert!(slow.res(C64::new(10.0, 0.0)).unwrap() > 8.0);
    }

    #[test]
    fn factored_and_eigen_routes_agree() {
        let map = CircleMap::blaschke_product(reference_mu()).unwrap();
        let (gt, _) = l2_setup(&map, 9, 200, SnapshotScheme::MonteCarlo { seed: 2 });
        let plain = gt.without_factor();
        let fast = ResidualEvaluator::new(&gt);
        let slow = ResidualEvaluator::new(&plain);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let z = C64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let (a, b) = (fast.res(z).unwrap(), slow.res(z).unwrap());
            assert!((a - b).abs() < 1e-7, "{z}: {a} vs {b}");
        }
    }

    #[test]
    fn pair_residual_equals_data_regression_error() {
        let map = CircleMap::blaschke_product(reference_mu()).unwrap();
        let m = 300;
        let (gt, dm) = l2_setup(&map, 9, m, SnapshotScheme::MonteCarlo { seed: 11 });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let c = random_vec(&mut rng, 9);
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let px = linalg::mat_vec(dm.psi_x.as_ref(), &c);
            let py = linalg::mat_vec(dm.psi_y.as_ref(), &c);
            let diff: Vec<C64> = py.iter().zip(&px).map(|(y, x)| y - z * x).collect();
            let oracle = linalg::vec_norm(&diff) / linalg::vec_norm(&px);
            let got = residual_of_pair(&gt, z, &c).unwrap();
            assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
            let got = residual_of_pair(&gt.without_factor(), z, &c).unwrap();
            assert!((got - oracle).abs() < 1e-7);
        }
        let mut e0 = vec![C64::new(0.0, 0.0); 9];
        e0[4] = C64::new(1.0, 0.0);
        assert!(residual_of_pair(&gt, C64::new(1.0, 0.0), &e0).unwrap() < 1e-14);
        assert!(residual_of_pair(&gt, C64::new(1.0, 0.0), &[C64::new(0.0, 0.0); 9]).is_err());
    }

    #[test]
    fn naive_residual_identities() {
        let map = CircleMap::blaschke_product(reference_mu()).unwrap();
        let (gt, _) = l2_setup(&map, 9, 200, SnapshotScheme::EquispacedCircle);
        let ops = fit_edmd(&gt).unwrap();
        // G = I: equals ‖(L − λ)c‖ for normalized c.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_vec(&mut rng, 9);
        let c = g_normalize(&gt, &c).unwrap();
        let z = C64::new(0.3, -0.2);
        let lc = linalg::mat_vec(ops.l.as_ref(), &c);
        let direct: Vec<C64> = lc.iter().zip(&c).map(|(a, b)| a - z * b).collect();
        let got = naive_transfer_residual(&gt, z, &c).unwrap();
        assert!((got - linalg::vec_norm(&direct)).abs() < 1e-13);
        for p in ops.eigenpairs(Operator::Transfer).unwrap() {
            assert!(naive_transfer_residual(&gt, p.value, &p.vector).unwrap() < 1e-10);
        }
    }

    #[test]
    fn naive_residual_sandwich() {
        let map = CircleMap::blaschke_product(reference_mu()).unwrap();
        let (gt, _) = l2_setup(&map, 7, 60, SnapshotScheme::MonteCarlo { seed: 4 });
        let ops = fit_edmd(&gt).unwrap();
        let sv = linalg::singular_values(gt.g.as_ref()).unwrap();
        let (smax, smin) = (sv[0], *sv.last().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let c = g_normalize(&gt, &random_vec(&mut rng, 7)).unwrap();
            let z = C64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let lc = linalg::mat_vec(ops.l.as_ref(), &c);
            let d: Vec<C64> = lc.iter().zip(&c).map(|(a, b)| a - z * b).collect();
            let base = linalg::vec_norm(&d);
            let v = naive_transfer_residual(&gt, z, &c).unwrap();
            assert!(v >= smin * base * (1.0 - 1e-10) && v <= smax * base * (1.0 + 1e-10));
        }
    }

    #[test]
    fn normal_matrix_has_zero_deviation() {
        // K unitary-diagonal in an orthonormal basis: LK − KL = 0.
        let d = Mat::<c64>::from_fn(4, 4, |i, j| {
            if i == j {
                C64::from_polar(0.9, i as f64)
            } else {
                zero()
            }
        });
        let gt = GramTriple::from_parts(
            Mat::identity(4, 4),
            d.clone(),
            d.adjoint() * &d,
        )
        .unwrap();
        let ops = fit_edmd(&gt).unwrap();
        let comm = &ops.l * &ops.k - &ops.k * &ops.l;
        assert!(linalg::spectral_norm(comm.as_ref()).unwrap() < 1e-15);
    }

    #[test]
    fn deviation_from_normality_is_positive_on_l2() {
        let map = CircleMap::blaschke_product(reference_mu()).unwrap();
        let dict = Dictionary::fourier(21).unwrap();
        let v = deviation_from_normality(&map, &dict, 1000, &InnerProductSpec::EmpiricalL2, CoeffBand::Auto)
            .unwrap();
        assert!(v > 1e-3);
        let a = deviation_from_normality(&map, &dict, 1000, &InnerProductSpec::SobolevHs { s: -1.0 }, CoeffBand::Auto)
            .unwrap();
        let b = deviation_from_normality(&map, &dict, 1000, &InnerProductSpec::SobolevHs { s: -6.0 }, CoeffBand::Auto)
            .unwrap();
        assert!(b < a, "{b} !< {a}");
    }

    #[test]
    fn generalized_minimum_beats_random_vectors() {
        let map = CircleMap::blaschke_product(reference_mu()).unwrap();
        let (gt, _) = l2_setup(&map, 7, 100, SnapshotScheme::MonteCarlo { seed: 6 });
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let z = C64::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2));
            let r = ResidualEvaluator::new(&gt).res(z).unwrap();
            for _ in 0..1000 {
                let c = random_vec(&mut rng, 7);
                assert!(residual_of_pair(&gt, z, &c).unwrap() >= r - 1e-8);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn res_is_one_lipschitz(a in -1.5..1.5f64, b in -1.5..1.5f64, c in -1.5..1.5f64, d in -1.5..1.5f64) {
            static GT: std::sync::LazyLock<GramTriple> = std::sync::LazyLock::new(|| {
                let map = CircleMap::blaschke_product(reference_mu()).unwrap();
                l2_setup(&map, 9, 150, SnapshotScheme::MonteCarlo { seed: 12 }).0
            });
            let ev = ResidualEvaluator::new(&GT);
            let (z1, z2) = (C64::new(a, b), C64::new(c, d));
            let (r1, r2) = (ev.res(z1).unwrap(), ev.res(z2).unwrap());
            prop_assert!((r1 - r2).abs() <= (z1 - z2).norm() + 1e-12);
            prop_assert!(r1 >= 0.0);
        }
    }
}
