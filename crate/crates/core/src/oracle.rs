//! Brute-force q-space moments by 3-D tensor-product quadrature.
//!
//! Integrates qⁿ⁺² exp(−(4π²τq²D(g))^α(g)) over a truncated radial interval
//! and the unit sphere without using the closed-form radial reduction, so it
//! can check the estimators independently.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_range, Execution};
use crate::sphere::gauss_legendre;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes on [0, q_max].
    pub radial_nodes: usize,
    /// Gauss–Legendre nodes in cos θ.
    pub theta_nodes: usize,
    /// Trapezoidal nodes in φ.
    pub phi_nodes: usize,
    /// Radial cutoff [mm⁻¹]; chosen from the field when `None`.
    pub q_max: Option<f64>,
    /// Target relative error.
    pub tol: f64,
    /// How many times node counts may be doubled.
    pub max_refinements: usize,
    pub execution: Execution,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            radial_nodes: 128,
            theta_nodes: 32,
            phi_nodes: 64,
            q_max: None,
            tol: 1e-6,
            max_refinements: 3,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    /// Relative change under node doubling and under doubling q_max, whichever is larger.
    pub error_estimate: f64,
    pub q_max: f64,
    pub radial_nodes: usize,
    pub theta_nodes: usize,
    pub phi_nodes: usize,
}

/// Exponent of the integrand at the cutoff.
const CUTOFF_EXPONENT: f64 = 40.0;

/// q at which (4π²τq²·d)^α = 40.
pub fn default_q_max(d_min: f64, alpha_min: f64, tau: f64) -> f64 {
    (CUTOFF_EXPONENT.powf(1.0 / alpha_min) / (4.0 * PI * PI * tau * d_min)).sqrt()
}

fn integrate<D, A>(d_fn: &D, alpha_fn: &A, tau: f64, n: u32, q_max: f64, nr: usize, nt: usize, np: usize, exec: Execution) -> f64
where
    D: Fn(&Vector3<f64>) -> f64 + Sync,
    A: Fn(&Vector3<f64>) -> f64 + Sync,
{
    let (xr, wr) = gauss_legendre(nr);
    let half = 0.5 * q_max;
    // radial nodes mapped to [0, q_max]: (q, w·q^{n+2}, 4π²τq²)
    let radial: Vec<(f64, f64)> = xr
        .iter()
        .zip(&wr)
        .map(|(x, w)| {
            let q = half * (x + 1.0);
            (half * w * q.powi(n as i32 + 2), 4.0 * PI * PI * tau * q * q)
        })
        .collect();
    let (xt, wt) = gauss_legendre(nt);
    let dphi = 2.0 * PI / np as f64;
    let rows = map_range(exec, nt, |i| {
        let ct = xt[i];
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        let mut row = 0.0;
        for j in 0..np {
            let phi = dphi * j as f64;
            let g = Vector3::new(st * phi.cos(), st * phi.sin(), ct);
            let (d, a) = (d_fn(&g), alpha_fn(&g));
            let mut radial_sum = 0.0;
            for &(w, b) in &radial {
                radial_sum += w * (-(b * d).powf(a)).exp();
            }
            row += radial_sum;
        }
        wt[i] * dphi * row
    });
    // fixed summation order keeps the result independent of scheduling
    rows.iter().sum()
}

/// ∫ ‖q‖ⁿ E(q) d³q for E = exp(−(4π²τ‖q‖²D(g))^α(g)).
///
/// Node counts are doubled until the relative change is below `spec.tol`,
/// and the result is checked against a run with q_max doubled.
pub fn brute_force_moment<D, A>(d_fn: D, alpha_fn: A, tau: f64, n: u32, spec: &QuadratureSpec) -> Result<OracleResult>
where
    D: Fn(&Vector3<f64>) -> f64 + Sync,
    A: Fn(&Vector3<f64>) -> f64 + Sync,
{
    if spec.radial_nodes < 2 || spec.theta_nodes < 2 || spec.phi_nodes < 2 {
        return Err(Error::Input("quadrature node counts must be at least 2".into()));
    }
    if !(tau > 0.0 && spec.tol > 0.0) {
        return Err(Error::Input(format!("need tau > 0 and tol > 0, got {tau} and {}", spec.tol)));
    }
    let q_max = match spec.q_max {
        Some(q) if q > 0.0 => q,
        Some(q) => return Err(Error::Input(format!("q_max must be positive, got {q}"))),
        None => {
            // field extremes from a fine angular probe
            let probe = crate::sphere::SphereRule::gauss_product(2 * spec.theta_nodes, 2 * spec.phi_nodes);
            let mut d_min = f64::INFINITY;
            let mut a_min = f64::INFINITY;
            for p in &probe.points {
                let (d, a) = (d_fn(p), alpha_fn(p));
                if !(d > 0.0 && d.is_finite() && a > 0.0 && a <= 1.0) {
                    return Err(Error::Input(format!("field invalid at {p:?}: D = {d}, alpha = {a}")));
                }
                d_min = d_min.min(d);
                a_min = a_min.min(a);
            }
            default_q_max(d_min, a_min, tau)
        }
    };

    let run = |nr: usize, nt: usize, np: usize, qm: f64| {
        integrate(&d_fn, &alpha_fn, tau, n, qm, nr, nt, np, spec.execution)
    };
    let (mut nr, mut nt, mut np) = (spec.radial_nodes, spec.theta_nodes, spec.phi_nodes);
    let mut coarse = run(nr, nt, np, q_max);
    let mut estimate = f64::INFINITY;
    for _ in 0..=spec.max_refinements {
        let fine = run(2 * nr, 2 * nt, 2 * np, q_max);
        let refine_err = ((fine - coarse) / fine).abs();
        (nr, nt, np) = (2 * nr, 2 * nt, 2 * np);
        if refine_err <= spec.tol {
            let tail = run(2 * nr, nt, np, 2.0 * q_max);
            let tail_err = ((tail - fine) / fine).abs();
            estimate = refine_err.max(tail_err);
            if estimate <= spec.tol {
                return Ok(OracleResult { value: fine, error_estimate: estimate, q_max, radial_nodes: nr, theta_nodes: nt, phi_nodes: np });
            }
        } else {
            estimate = refine_err;
        }
        coarse = fine;
    }
    Err(Error::Quadrature { estimate, tol: spec.tol })
}
