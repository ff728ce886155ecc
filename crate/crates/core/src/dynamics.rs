//! Benchmark circle maps with analytically known transfer-operator spectra.
//!
//! Two rational maps of the unit circle are provided:
//!
//! * the Blaschke product `z ↦ z (z − μ) / (1 − μ̄ z)`, whose transfer operator on
//!   the Hardy space of an annulus has eigenvalues `{μⁿ, μ̄ⁿ}` together with `0`;
//! * the squared Blaschke factor `z ↦ ((z − μ) / (1 − μ̄ z))²`, uniformly expanding
//!   for `|μ| < 1/3`, whose eigenvalues are the powers of `S′(z*)` at the attracting
//!   fixed point `z*` inside the disk.
//!
//! States on the circle are complex numbers throughout.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CIRCLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    BlaschkeProduct,
    BlaschkeSquared,
    UserTrajectory,
}

/// A circle map `S: T → T` with parameter `μ` and analyticity annulus radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleMap {
    kind: MapKind,
    mu: C64,
    annulus_radius: f64,
}

impl CircleMap {
    pub fn new(kind: MapKind, mu: C64, annulus_radius: f64) -> Result<Self> {
        let m = mu.norm();
        match kind {
            MapKind::BlaschkeProduct if m >= 1.0 => {
                return Err(Error::Domain(format!("|mu| = {m} must be < 1")))
            }
            MapKind::BlaschkeSquared if m >= 1.0 / 3.0 => {
                return Err(Error::Domain(format!(
                    "|mu| = {m} must be < 1/3 for a uniformly expanding squared Blaschke map"
                )))
            }
            _ => {}
        }
        if !(annulus_radius > 0.0 && annulus_radius < 1.0) {
            return Err(Error::Domain(format!(
                "annulus radius {annulus_radius} must lie in (0, 1)"
            )));
        }
        if kind != MapKind::UserTrajectory && annulus_radius < m {
            return Err(Error::Domain(format!(
                "annulus radius {annulus_radius} must be at least |mu| = {m}"
            )));
        }
        Ok(Self {
            kind,
            mu,
            annulus_radius,
        })
    }

    fn default_radius(mu: C64) -> f64 {
        if mu.norm() > 0.0 {
            mu.norm()
        } else {
            0.5
        }
    }

    pub fn blaschke_product(mu: C64) -> Result<Self> {
        Self::new(MapKind::BlaschkeProduct, mu, Self::default_radius(mu))
    }

    pub fn blaschke_squared(mu: C64) -> Result<Self> {
        Self::new(MapKind::BlaschkeSquared, mu, Self::default_radius(mu))
    }

    /// Placeholder for dynamics known only through sampled trajectories.
    pub fn user_trajectory() -> Self {
        Self {
            kind: MapKind::UserTrajectory,
            mu: C64::new(0.0, 0.0),
            annulus_radius: 0.5,
        }
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn mu(&self) -> C64 {
        self.mu
    }

    pub fn annulus_radius(&self) -> f64 {
        self.annulus_radius
    }

    fn require_analytic(&self) -> Result<()> {
        if self.kind == MapKind::UserTrajectory {
            return Err(Error::UnsupportedMap(
                "trajectory data has no closed-form map".into(),
            ));
        }
        Ok(())
    }

    fn blaschke_factor(&self, z: C64) -> C64 {
        (z - self.mu) / (C64::new(1.0, 0.0) - self.mu.conj() * z)
    }

    fn blaschke_factor_derivative(&self, z: C64) -> C64 {
        let d = C64::new(1.0, 0.0) - self.mu.conj() * z;
        C64::new(1.0 - self.mu.norm_sqr(), 0.0) / (d * d)
    }

    /// Evaluates the rational map anywhere off its pole (no circle check).
    pub fn eval_unchecked(&self, z: C64) -> Result<C64> {
        self.require_analytic()?;
        Ok(match self.kind {
            MapKind::BlaschkeProduct => z * self.blaschke_factor(z),
            _ => {
                let b = self.blaschke_factor(z);
                b * b
            }
        })
    }

    /// Complex derivative `S′(z)`.
    pub fn derivative(&self, z: C64) -> Result<C64> {
        self.require_analytic()?;
        Ok(match self.kind {
            MapKind::BlaschkeProduct => {
                self.blaschke_factor(z) + z * self.blaschke_factor_derivative(z)
            }
            _ => 2.0 * self.blaschke_factor(z) * self.blaschke_factor_derivative(z),
        })
    }

    /// The two preimages `{y ∈ T : S(y) = w}` for `w` on the circle.
    pub fn preimages(&self, w: C64) -> Result<[C64; 2]> {
        self.require_analytic()?;
        check_on_circle(w)?;
        let one = C64::new(1.0, 0.0);
        Ok(match self.kind {
            MapKind::BlaschkeProduct => {
                // y² + (w μ̄ − μ) y − w = 0
                let b = w * self.mu.conj() - self.mu;
                let disc = (b * b + 4.0 * w).sqrt();
                [(-b + disc) * 0.5, (-b - disc) * 0.5]
            }
            _ => {
                let v = w.sqrt();
                [
                    (v + self.mu) / (one + self.mu.conj() * v),
                    (-v + self.mu) / (one - self.mu.conj() * v),
                ]
            }
        })
    }
}

fn check_on_circle(z: C64) -> Result<()> {
    let dev = (z.norm() - 1.0).abs();
    if dev > CIRCLE_TOL || !dev.is_finite() {
        return Err(Error::Domain(format!(
            "state {z} is off the unit circle by {dev:.3e}"
        )));
    }
    Ok(())
}

/// `S(z)` for `z` on the unit circle.
pub fn eval_map(map: &CircleMap, z: C64) -> Result<C64> {
    map.require_analytic()?;
    check_on_circle(z)?;
    map.eval_unchecked(z)
}

/// Attracting fixed point of the squared Blaschke map and the derivative there.
pub fn attracting_fixed_point(map: &CircleMap) -> Result<(C64, C64)> {
    if map.kind != MapKind::BlaschkeSquared {
        return Err(Error::UnsupportedMap(
            "attracting fixed points are defined for the squared Blaschke map".into(),
        ));
    }
    let accept = |z: C64| -> Option<(C64, C64)> {
        let fz = map.eval_unchecked(z).ok()?;
        let d = map.derivative(z).ok()?;
        ((fz - z).norm() < 1e-12 && z.norm() < 1.0 && d.norm() < 1.0).then_some((z, d))
    };

    if let Some(z) = newton(map, C64::new(0.0, 0.0), 100) {
        if let Some(hit) = accept(z) {
            return Ok(hit);
        }
    }

    // Newton diverged from the origin: seed from the best point of a disk lattice.
    let n = 200;
    let mut best = (f64::INFINITY, C64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let z = C64::new(
                -1.0 + 2.0 * (i as f64 + 0.5) / n as f64,
                -1.0 + 2.0 * (j as f64 + 0.5) / n as f64,
            );
            if z.norm() >= 1.0 {
                continue;
            }
            let r = (map.eval_unchecked(z)? - z).norm();
            if r < best.0 {
                best = (r, z);
            }
        }
    }
    newton(map, best.1, 100)
        .and_then(accept)
        .ok_or_else(|| Error::Convergence("fixed-point search did not converge".into()))
}

fn newton(map: &CircleMap, mut z: C64, max_iter: usize) -> Option<C64> {
    for _ in 0..max_iter {
        let f = map.eval_unchecked(z).ok()? - z;
        let df = map.derivative(z).ok()? - C64::new(1.0, 0.0);
        if df.norm() == 0.0 {
            return None;
        }
        let step = f / df;
        z -= step;
        if !(z.re.is_finite() && z.im.is_finite()) {
            return None;
        }
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    Some(z)
}

/// Analytic spectrum `{baseⁿ, conj(base)ⁿ : n ≤ n_max} ∪ {0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueSpectrum {
    pub base: C64,
    pub points: Vec<C64>,
    pub n_max: usize,
}

impl TrueSpectrum {
    pub fn from_base(base: C64, n_max: Option<usize>) -> Self {
        let n_max = n_max.unwrap_or_else(|| default_n_max(base.norm()));
        let mut points: Vec<C64> = Vec::with_capacity(2 * n_max + 2);
        let mut push = |p: C64| {
            if !points.iter().any(|q| (q - p).norm() <= 1e-15) {
                points.push(p);
            }
        };
        for n in 0..=n_max {
            let p = base.powu(n as u32);
            push(p);
            push(p.conj());
        }
        push(C64::new(0.0, 0.0));
        // Stable sort keeps each power next to its conjugate.
        points.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        Self {
            base,
            points,
            n_max,
        }
    }

    /// Distance from `z` to the nearest spectral point.
    pub fn distance(&self, z: C64) -> f64 {
        self.points
            .iter()
            .map(|p| (p - z).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

fn default_n_max(modulus: f64) -> usize {
    if modulus < 1e-8 {
        return 1;
    }
    if modulus >= 1.0 {
        return 1;
    }
    (1e-8f64.ln() / modulus.ln()).floor() as usize + 1
}

pub fn true_spectrum(map: &CircleMap, n_max: Option<usize>) -> Result<TrueSpectrum> {
    let base = match map.kind {
        // 0 is the attracting fixed point and S′(0) = −μ.
        MapKind::BlaschkeProduct => -map.mu,
        MapKind::BlaschkeSquared => attracting_fixed_point(map)?.1,
        MapKind::UserTrajectory => {
            return Err(Error::UnsupportedMap(
                "no analytic spectrum for trajectory data".into(),
            ))
        }
    };
    Ok(TrueSpectrum::from_base(base, n_max))
}

/// The first benchmark parameter `μ = (3/4) e^{iπ/4}`.
pub fn reference_mu() -> C64 {
    C64::from_polar(0.75, std::f64::consts::FRAC_PI_4)
}
