//! Reference computations shared by the integration tests. Nothing here calls into
//! the library's map or residual code.

#![allow(dead_code)]

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// `S(z) = z(z − μ)/(1 − μ̄z)`.
pub fn blaschke(mu: C64, z: C64) -> C64 {
    z * (z - mu) / (1.0 - mu.conj() * z)
}

pub fn blaschke_prime(mu: C64, z: C64) -> C64 {
    let d = 1.0 - mu.conj() * z;
    ((2.0 * z - mu) * d + mu.conj() * z * (z - mu)) / (d * d)
}

/// Both solutions of `S(y) = w`: `y² + (wμ̄ − μ)y − w = 0`.
pub fn preimages(mu: C64, w: C64) -> [C64; 2] {
    let b = w * mu.conj() - mu;
    let disc = (b * b + 4.0 * w).sqrt();
    [(-b + disc) / 2.0, (-b - disc) / 2.0]
}

/// `(Lh)(z) = Σ_{S(y) = z} h(y)/|S′(y)|` for the Lebesgue transfer operator on the circle.
pub fn transfer(mu: C64, h: &dyn Fn(C64) -> C64, z: C64) -> C64 {
    preimages(mu, z)
        .iter()
        .map(|&y| h(y) / blaschke_prime(mu, y).norm())
        .sum()
}

pub fn circle_grid(k: usize) -> Vec<C64> {
    (0..k)
        .map(|i| C64::from_polar(1.0, 2.0 * PI * i as f64 / k as f64))
        .collect()
}

/// `Σ_n |a_n|² |⟨zⁿ, f⟩|²` by the trapezoidal rule on the grid where `f` was sampled.
pub fn feature_energy(grid: &[C64], f: &[C64], indices: &[i64], weights: &[f64]) -> f64 {
    let k = grid.len() as f64;
    indices
        .iter()
        .zip(weights)
        .map(|(&n, &a)| {
            let c: C64 = grid
                .iter()
                .zip(f)
                .map(|(z, v)| z.powi(n as i32) * v.conj())
                .sum::<C64>()
                / k;
            a * a * c.norm_sqr()
        })
        .sum()
}

pub fn l2_norm(f: &[C64]) -> f64 {
    (f.iter().map(|v| v.norm_sqr()).sum::<f64>() / f.len() as f64).sqrt()
}
