//! Gradient tables, shell structure and direction matching.

mod bundles;
mod sh;
mod shells;

pub use bundles::{match_directions, DirectionBundle, DirectionBundleSet, DEFAULT_ANGULAR_TOL_DEG};
pub use sh::{real_sh, resample_shell_sh, sh_coefficient_count, ShResampling};
pub use shells::{group_shells, ShellGrouping, DEFAULT_B_TOLERANCE};

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIT_NORM_TOL: f64 = 1e-6;

/// q-space magnitude [mm⁻¹] for a b-value [s/mm²] at effective diffusion time `tau` [s].
pub fn q_from_b(b: f64, tau: f64) -> f64 {
    (b / (4.0 * PI * PI * tau)).sqrt()
}

/// b-value [s/mm²] for a q magnitude [mm⁻¹].
pub fn b_from_q(q: f64, tau: f64) -> f64 {
    4.0 * PI * PI * tau * q * q
}

/// Effective diffusion time Δ − δ/3, all in seconds.
pub fn effective_diffusion_time(small_delta: f64, big_delta: f64) -> f64 {
    big_delta - small_delta / 3.0
}

/// Acquisition geometry of a diffusion experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientScheme {
    pub directions: Vec<Vector3<f64>>,
    /// b-values [s/mm²].
    pub bvals: Vec<f64>,
    /// q magnitudes [mm⁻¹], derived from `bvals` and `tau`.
    pub q_mags: Vec<f64>,
    /// Effective diffusion time [s].
    pub tau: f64,
    /// Non-fatal issues found while building the scheme (renormalized vectors, ...).
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl GradientScheme {
    /// Validate and build a scheme. Non-unit, nonzero directions are renormalized.
    pub fn new(directions: Vec<Vector3<f64>>, bvals: Vec<f64>, tau: f64) -> Result<Self> {
        if directions.len() != bvals.len() {
            return Err(Error::LengthMismatch { bvals: bvals.len(), bvecs: directions.len() });
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Gradient(format!("effective diffusion time must be positive, got {tau}")));
        }
        let mut warnings = Vec::new();
        let mut dirs = Vec::with_capacity(directions.len());
        for (i, (g, &b)) in directions.iter().zip(&bvals).enumerate() {
            if !b.is_finite() || g.iter().any(|c| !c.is_finite()) {
                return Err(Error::Gradient(format!("non-finite entry at measurement {i}")));
            }
            if b < 0.0 {
                return Err(Error::Gradient(format!("negative b-value {b} at measurement {i}")));
            }
            let norm = g.norm();
            if norm == 0.0 {
                if b > 0.0 {
                    return Err(Error::Gradient(format!(
                        "zero gradient direction with b = {b} at measurement {i}"
                    )));
                }
                dirs.push(*g);
            } else if (norm - 1.0).abs() > UNIT_NORM_TOL {
                warnings.push(format!("direction {i} had norm {norm:.6}, renormalized"));
                dirs.push(g / norm);
            } else {
                dirs.push(*g);
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        let q_mags = bvals.iter().map(|&b| q_from_b(b, tau)).collect();
        Ok(Self { directions: dirs, bvals, q_mags, tau, warnings })
    }

    pub fn n_measurements(&self) -> usize {
        self.bvals.len()
    }
}

fn parse_numbers(text: &str, what: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|line| {
            line.split_whitespace()
                .map(|tok| {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| Error::Gradient(format!("{what}: cannot parse {tok:?}")))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::Gradient(format!("{what}: non-finite entry {tok:?}")))
                    }
                })
                .collect()
        })
        .collect()
}

/// Parse FSL-style `bvals` / `bvecs` text.
///
/// `bvals` may be a row or a column. `bvecs` may be 3 rows of N values or
/// N rows of 3; a 3×3 table is read as 3 rows of N.
pub fn parse_gradient_scheme(bvals_text: &str, bvecs_text: &str, tau: f64) -> Result<GradientScheme> {
    let bvals: Vec<f64> = parse_numbers(bvals_text, "bvals")?.into_iter().flatten().collect();
    let rows = parse_numbers(bvecs_text, "bvecs")?;
    let n = bvals.len();

    let directions: Vec<Vector3<f64>> = if rows.len() == 3 && rows.iter().all(|r| r.len() == rows[0].len()) {
        let m = rows[0].len();
        if m != n {
            return Err(Error::LengthMismatch { bvals: n, bvecs: m });
        }
        (0..m).map(|i| Vector3::new(rows[0][i], rows[1][i], rows[2][i])).collect()
    } else if rows.iter().all(|r| r.len() == 3) {
        if rows.len() != n {
            return Err(Error::LengthMismatch { bvals: n, bvecs: rows.len() });
        }
        rows.iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect()
    } else {
        return Err(Error::Gradient(
            "bvecs must be 3 rows of N values or N rows of 3 values".to_string(),
        ));
    };
    GradientScheme::new(directions, bvals, tau)
}

/// Format a scheme as FSL `(bvals, bvecs)` text, bvecs as 3 rows.
pub fn format_fsl(scheme: &GradientScheme) -> (String, String) {
    let join = |it: &mut dyn Iterator<Item = f64>| it.map(|v| format!("{v}")).collect::<Vec<_>>().join(" ");
    let bvals = join(&mut scheme.bvals.iter().copied()) + "\n";
    let mut bvecs = String::new();
    for axis in 0..3 {
        bvecs += &join(&mut scheme.directions.iter().map(|g| g[axis]));
        bvecs.push('\n');
    }
    (bvals, bvecs)
}

/// `n` roughly uniform unit vectors on the upper hemisphere (z ≥ 0), deterministic.
///
/// Antipodal pairs are redundant for q-space signals, so acquisition tables
/// only need to cover half the sphere.
pub fn hemisphere_directions(n: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (1.0 + 5f64.sqrt());
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            let z = 1.0 - t;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * (i as f64 + 0.5);
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
