//! Real, antipodally symmetric spherical-harmonic resampling of shell data.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings for optional SH resampling. The defaults are not tuned against any
/// reference data set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShResampling {
    pub order: usize,
    pub lambda: f64,
}

impl Default for ShResampling {
    fn default() -> Self {
        Self { order: 6, lambda: 0.006 }
    }
}

/// Number of even-order real SH coefficients up to `order`.
pub fn sh_coefficient_count(order: usize) -> usize {
    (order / 2 + 1) * (order + 1)
}

/// Orthonormal associated Legendre values P̄_l^m(x) for 0 ≤ m ≤ l ≤ lmax,
/// indexed `[l][m]`, without the Condon–Shortley phase.
fn legendre_table(lmax: usize, x: f64) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; lmax + 1]; lmax + 1];
    let s = (1.0 - x * x).max(0.0).sqrt();
    p[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=lmax {
        p[m][m] = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s * p[m - 1][m - 1];
    }
    for m in 0..lmax {
        p[m + 1][m] = ((2 * m + 3) as f64).sqrt() * x * p[m][m];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[l][m] = a * (x * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    p
}

/// Real spherical harmonic Y_lm at a unit direction.
///
/// m < 0 uses √2·P̄_l^|m|·sin(|m|φ), m > 0 uses √2·P̄_l^m·cos(mφ).
pub fn real_sh(l: usize, m: i64, dir: &Vector3<f64>) -> f64 {
    let p = legendre_table(l, dir.z.clamp(-1.0, 1.0));
    let phi = dir.y.atan2(dir.x);
    let am = m.unsigned_abs() as usize;
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => p[l][0],
        std::cmp::Ordering::Greater => 2f64.sqrt() * p[l][am] * (am as f64 * phi).cos(),
        std::cmp::Ordering::Less => 2f64.sqrt() * p[l][am] * (am as f64 * phi).sin(),
    }
}

fn design_row(order: usize, dir: &Vector3<f64>) -> Vec<f64> {
    let p = legendre_table(order, dir.z.clamp(-1.0, 1.0));
    let phi = dir.y.atan2(dir.x);
    let mut row = Vec::with_capacity(sh_coefficient_count(order));
    for l in (0..=order).step_by(2) {
        for m in -(l as i64)..=(l as i64) {
            let am = m.unsigned_abs() as usize;
            row.push(match m.cmp(&0) {
                std::cmp::Ordering::Equal => p[l][0],
                std::cmp::Ordering::Greater => 2f64.sqrt() * p[l][am] * (am as f64 * phi).cos(),
                std::cmp::Ordering::Less => 2f64.sqrt() * p[l][am] * (am as f64 * phi).sin(),
            });
        }
    }
    row
}

fn design_matrix(order: usize, dirs: &[Vector3<f64>]) -> DMatrix<f64> {
    let k = sh_coefficient_count(order);
    let mut b = DMatrix::zeros(dirs.len(), k);
    for (i, d) in dirs.iter().enumerate() {
        for (j, v) in design_row(order, d).into_iter().enumerate() {
            b[(i, j)] = v;
        }
    }
    b
}

/// Fit an even-order SH series with Laplace–Beltrami penalty `lambda` to
/// `signals` sampled at `directions`, then evaluate it at `targets`.
pub fn resample_shell_sh(
    signals: &[f64],
    directions: &[Vector3<f64>],
    targets: &[Vector3<f64>],
    order: usize,
    lambda: f64,
) -> Result<Vec<f64>> {
    if order % 2 != 0 {
        return Err(Error::Input(format!("SH order must be even, got {order}")));
    }
    if signals.len() != directions.len() {
        return Err(Error::Input(format!(
            "{} signals for {} directions",
            signals.len(),
            directions.len()
        )));
    }
    if signals.iter().any(|s| !s.is_finite()) || !(lambda >= 0.0) {
        return Err(Error::Input("SH resampling needs finite signals and lambda >= 0".into()));
    }
    let k = sh_coefficient_count(order);
    let n = directions.len();
    if n < k {
        return Err(Error::RankDeficient(format!(
            "{n} directions cannot determine {k} SH coefficients (order {order})"
        )));
    }
    let b = design_matrix(order, directions);
    let sv = b.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::RankDeficient(format!(
            "SH design matrix condition {:.3e} for order {order}",
            smax / smin
        )));
    }

    // Penalized least squares as one augmented system [B; √λ·L] c = [s; 0].
    let mut aug = DMatrix::zeros(n + k, k);
    aug.view_mut((0, 0), (n, k)).copy_from(&b);
    let mut j = 0;
    for l in (0..=order).step_by(2) {
        let lb = (l * (l + 1)) as f64;
        for _ in 0..(2 * l + 1) {
            aug[(n + j, j)] = lambda.sqrt() * lb;
            j += 1;
        }
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from_slice(signals);
    let coeffs = aug
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;

    let t = design_matrix(order, targets);
    Ok((t * coeffs).iter().copied().collect())
}
