//! Residual fields over grids in the complex plane.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular lattice `[re_min, re_max] × [im_min, im_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            re_min: -1.5,
            re_max: 1.5,
            im_min: -1.5,
            im_max: 1.5,
            n_re: 101,
            n_im: 101,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_re == 0 || self.n_im == 0 {
            return Err(Error::Domain("grid resolution must be positive".into()));
        }
        let ok = |a: f64, b: f64, n: usize| a.is_finite() && b.is_finite() && (a < b || (n == 1 && a == b));
        if !ok(self.re_min, self.re_max, self.n_re) || !ok(self.im_min, self.im_max, self.n_im) {
            return Err(Error::Domain("grid extent must be finite and increasing".into()));
        }
        Ok(())
    }

    /// Points in row-major order: imaginary part outer, real part inner.
    pub fn points(&self) -> Vec<C64> {
        let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                vec![lo]
            } else {
                (0..n)
                    .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                    .collect()
            }
        };
        let re = axis(self.re_min, self.re_max, self.n_re);
        let im = axis(self.im_min, self.im_max, self.n_im);
        im.iter()
            .flat_map(|&y| re.iter().map(move |&x| C64::new(x, y)))
            .collect()
    }
}

/// Residual values `res(λ_ν)` on a list of grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualField {
    pub grid: Vec<C64>,
    pub values: Vec<f64>,
    pub meta: FieldMeta,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldMeta {
    pub m: usize,
    pub n: usize,
    pub space: String,
    pub method: String,
}

impl ResidualField {
    /// Evaluates `f` at every grid point in parallel; per-point failures become NaN.
    pub fn evaluate<F>(grid: Vec<C64>, meta: FieldMeta, f: F) -> Self
    where
        F: Fn(C64) -> Result<f64> + Sync,
    {
        let values = grid
            .par_iter()
            .map(|&z| match f(z) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("residual at {z} failed: {e}");
                    f64::NAN
                }
            })
            .collect();
        Self { grid, values, meta }
    }

    /// Grid point with the smallest finite residual.
    pub fn argmin(&self) -> Option<(C64, f64)> {
        self.grid
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(z, v)| (*z, *v))
    }
}

/// Square root of a smallest eigenvalue, clamping roundoff-level negatives to zero.
pub fn clamped_sqrt(xi: f64, scale: f64) -> Result<f64> {
    if xi.is_nan() {
        return Err(Error::EigFailure("NaN eigenvalue".into()));
    }
    if xi >= 0.0 {
        Ok(xi.sqrt())
    } else if xi >= -1e-12 * scale.max(f64::MIN_POSITIVE) {
        Ok(0.0)
    } else {
        Err(Error::EigFailure(format!(
            "smallest eigenvalue {xi:.3e} is negative beyond roundoff (scale {scale:.3e})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lattice() {
        let g = GridSpec::default();
        let pts = g.points();
        assert_eq!(pts.len(), 101 * 101);
        assert_eq!(pts[0], C64::new(-1.5, -1.5));
        assert_eq!(pts[100], C64::new(1.5, -1.5));
        assert_eq!(pts[101 * 101 - 1], C64::new(1.5, 1.5));
        assert!(pts.contains(&C64::new(0.0, 0.0)));
    }

    #[test]
    fn clamp_rule() {
        assert_eq!(clamped_sqrt(4.0, 1.0).unwrap(), 2.0);
        assert_eq!(clamped_sqrt(-1e-13, 1.0).unwrap(), 0.0);
        assert!(clamped_sqrt(-1e-6, 1.0).is_err());
        assert!(clamped_sqrt(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn failures_become_nan() {
        let f = ResidualField::evaluate(
            vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            FieldMeta::default(),
            |z| {
                if z.re > 0.5 {
                    Err(Error::EigFailure("x".into()))
                } else {
                    Ok(0.25)
                }
            },
        );
        assert_eq!(f.values[0], 0.25);
        assert!(f.values[1].is_nan());
        assert_eq!(f.argmin(), Some((C64::new(0.0, 0.0), 0.25)));
    }
}
