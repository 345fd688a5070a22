//! Q-space moments M_n = ∫ ‖q‖ⁿ E(q) d³q and the derived scalar maps.
//!
//! RTOP = M₀ [mm⁻³], QMSD = M₂ [mm⁻⁵], QMFD = M₄ [mm⁻⁷].
//!
//! For E = exp(−(4π²τq²D(g))^α(g)) the radial integral is closed-form and
//!
//! ```text
//! M_n = C_n ∮ Γ((n+3)/(2α)) α⁻¹ D^{−(n+3)/2} dΣ,   C_n = 2^{−n−4} π^{−n−3} τ^{−(n+3)/2}
//! ```
//!
//! The shell estimators replace D(g) by its value inverted from E on one
//! shell of radius q, giving 2π·q^{n+3}·(direction mean of Γ(z)α⁻¹X^{−z})
//! with X = −ln E and z = (n+3)/(2α). The surface integral is realized as
//! (4π/N)·Σ over the shell directions, which is exact for the isotropic
//! Gaussian and accurate for any uniform direction set.

mod maps;

pub use maps::{
    compute_dti_maps, compute_maps, measured_members, DtiConvention, ESource, MapConfig, MapEstimator, MapMetadata,
    QMaps,
};

use std::f64::consts::{LN_2, PI};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::LAMBDA_FLOOR;
use crate::signal_model::clamp_attenuation;
use crate::special::{checked_exp, ln_gamma, log_sum_exp};
use crate::sphere::SphereRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentEstimator {
    Direct,
    Expansion,
    Analytic,
    Dti,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub n: u32,
    /// [mm^{−(n+3)}]
    pub value: f64,
    pub estimator: MomentEstimator,
    /// Shell the estimate came from, for shell-based estimators.
    pub shell_b: Option<f64>,
    /// Directions whose attenuation was clamped into the log-safe window.
    pub n_clamped: usize,
    /// Directions dropped for invalid attenuation or exponent.
    pub n_excluded: usize,
}

/// Per-direction (X = −ln E, α) after clamping; drops invalid entries.
struct ShellTerms {
    x: Vec<f64>,
    alpha: Vec<f64>,
    n_clamped: usize,
    n_excluded: usize,
}

fn shell_terms(e_shell: &[f64], alphas: &[f64], q: f64, eps: f64) -> Result<ShellTerms> {
    if e_shell.len() != alphas.len() {
        return Err(Error::Input(format!(
            "{} attenuations but {} exponents",
            e_shell.len(),
            alphas.len()
        )));
    }
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::Input(format!("shell radius q must be positive, got {q}")));
    }
    let mut t = ShellTerms { x: Vec::new(), alpha: Vec::new(), n_clamped: 0, n_excluded: 0 };
    for (&e, &a) in e_shell.iter().zip(alphas) {
        let ok_alpha = a > 0.0 && a <= 1.0;
        match clamp_attenuation(e, eps) {
            Ok(c) if ok_alpha => {
                t.n_clamped += c.clamped as usize;
                t.x.push(-c.value.ln());
                t.alpha.push(a);
            }
            _ => t.n_excluded += 1,
        }
    }
    if t.x.is_empty() {
        return Err(Error::Estimation(format!("no valid direction among {} on the shell", e_shell.len())));
    }
    if t.n_clamped > 0 {
        log::debug!("{} of {} attenuations clamped", t.n_clamped, e_shell.len());
    }
    Ok(t)
}

fn z_of(n: u32, alpha: f64) -> f64 {
    (n as f64 + 3.0) / (2.0 * alpha)
}

/// Direct single-shell estimator M_n⁽¹⁾.
///
/// `e_shell` and `alphas` are per-direction attenuations and exponents on a
/// shell of radius `q` [mm⁻¹]; the directions should cover the sphere (or
/// hemisphere) uniformly.
pub fn moment_direct(e_shell: &[f64], alphas: &[f64], q: f64, n: u32, eps: f64) -> Result<MomentResult> {
    let t = shell_terms(e_shell, alphas, q, eps)?;
    let terms: Vec<f64> = t
        .x
        .iter()
        .zip(&t.alpha)
        .map(|(&x, &a)| {
            let z = z_of(n, a);
            ln_gamma(z) - a.ln() - z * x.ln()
        })
        .collect();
    let ln_mean = log_sum_exp(&terms) - (terms.len() as f64).ln();
    let ln_value = (2.0 * PI).ln() + (n as f64 + 3.0) * q.ln() + ln_mean;
    Ok(MomentResult {
        n,
        value: checked_exp(ln_value, "direct moment")?,
        estimator: MomentEstimator::Direct,
        shell_b: None,
        n_clamped: t.n_clamped,
        n_excluded: t.n_excluded,
    })
}

/// Second-order expansion estimator M_n⁽²⁾.
///
/// Expands the direction mean of Γ(z)α⁻¹X^{−z} around ⟨X⟩ to second order;
/// only the mean and second moment of X enter.
pub fn moment_expansion(e_shell: &[f64], alphas: &[f64], q: f64, n: u32, eps: f64) -> Result<MomentResult> {
    let t = shell_terms(e_shell, alphas, q, eps)?;
    let m = t.x.len() as f64;
    let k = n as f64 + 3.0;
    let mean = |f: &dyn Fn(f64, f64) -> f64| t.x.iter().zip(&t.alpha).map(|(&x, &a)| f(x, a)).sum::<f64>() / m;

    let mx = mean(&|x, _| x);
    if !(mx > 0.0) {
        return Err(Error::Estimation(format!("mean of -ln E is {mx}, expected positive")));
    }
    let mx2 = mean(&|x, _| x * x);
    let mz = mean(&|_, a| z_of(n, a));
    let mb = mean(&|_, a| k + 2.0 * a);
    let mc = mean(&|_, a| 8.0 * a * a - 2.0 * k * a - k * k);
    let bracket = k * mb * mx2 / (mx * mx) + mc;
    if !(bracket > 0.0) {
        return Err(Error::Estimation(format!("expansion bracket {bracket} is not positive")));
    }
    // ⟨⅛Γ(z)α⁻³⟩ in log space
    let ga: Vec<f64> = t.alpha.iter().map(|&a| ln_gamma(z_of(n, a)) - 3.0 * a.ln() - 3.0 * LN_2).collect();
    let ln_ga = log_sum_exp(&ga) - m.ln();
    let ln_value = (2.0 * PI).ln() + k * q.ln() + ln_ga - mz * mx.ln() + bracket.ln();
    Ok(MomentResult {
        n,
        value: checked_exp(ln_value, "expansion moment")?,
        estimator: MomentEstimator::Expansion,
        shell_b: None,
        n_clamped: t.n_clamped,
        n_excluded: t.n_excluded,
    })
}

/// ln C_n.
fn ln_prefactor(n: u32, tau: f64) -> f64 {
    let k = n as f64 + 3.0;
    -(n as f64 + 4.0) * LN_2 - k * PI.ln() - 0.5 * k * tau.ln()
}

/// M_n from a known (D(g), α(g)) field by surface quadrature of the exact
/// radial reduction.
pub fn moment_analytic(
    d_fn: impl Fn(&Vector3<f64>) -> f64,
    alpha_fn: impl Fn(&Vector3<f64>) -> f64,
    tau: f64,
    n: u32,
    rule: &SphereRule,
) -> Result<MomentResult> {
    if !(tau > 0.0) {
        return Err(Error::Input(format!("tau must be positive, got {tau}")));
    }
    let k = n as f64 + 3.0;
    let mut terms = Vec::with_capacity(rule.len());
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let (d, a) = (d_fn(p), alpha_fn(p));
        if !(d > 0.0 && d.is_finite()) || !(a > 0.0 && a <= 1.0) {
            return Err(Error::Input(format!("field invalid at {p:?}: D = {d}, alpha = {a}")));
        }
        terms.push(w.ln() + ln_gamma(k / (2.0 * a)) - a.ln() - 0.5 * k * d.ln());
    }
    let ln_value = ln_prefactor(n, tau) + log_sum_exp(&terms);
    Ok(MomentResult {
        n,
        value: checked_exp(ln_value, "analytic moment")?,
        estimator: MomentEstimator::Analytic,
        shell_b: None,
        n_clamped: 0,
        n_excluded: 0,
    })
}

/// Isotropic closed form: M_n for constant D and α.
pub fn moment_constant(d: f64, alpha: f64, tau: f64, n: u32) -> Result<f64> {
    let k = n as f64 + 3.0;
    checked_exp(
        ln_prefactor(n, tau) + (4.0 * PI).ln() + ln_gamma(k / (2.0 * alpha)) - alpha.ln() - 0.5 * k * d.ln(),
        "constant-field moment",
    )
}

fn check_eigenvalues(eigs: &[f64; 3], tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::Input(format!("tau must be positive, got {tau}")));
    }
    if let Some(l) = eigs.iter().find(|&&l| !(l >= LAMBDA_FLOOR)) {
        return Err(Error::Input(format!("eigenvalue {l} below the floor {LAMBDA_FLOOR}")));
    }
    Ok(())
}

/// RTOP from diffusion tensor eigenvalues.
pub fn rtop_dti(eigs: &[f64; 3], tau: f64, convention: DtiConvention) -> Result<f64> {
    check_eigenvalues(eigs, tau)?;
    let c = match convention {
        DtiConvention::ThreePi => 3.0 * PI * tau,
        DtiConvention::Gaussian => 4.0 * PI * tau,
    };
    Ok(c.powf(-1.5) / (eigs[0] * eigs[1] * eigs[2]).sqrt())
}

/// (M₀, M₂, M₄) of the Gaussian propagator whose diffusion tensor has eigenvalues `eigs`.
///
/// With Σ = D⁻¹/(8π²τ): M₂ = M₀·tr Σ and M₄ = M₀·[(tr Σ)² + 2 tr Σ²].
pub fn gaussian_tensor_moments(eigs: &[f64; 3], tau: f64) -> Result<(f64, f64, f64)> {
    check_eigenvalues(eigs, tau)?;
    let m0 = rtop_dti(eigs, tau, DtiConvention::Gaussian)?;
    let s: Vec<f64> = eigs.iter().map(|l| 1.0 / (8.0 * PI * PI * tau * l)).collect();
    let tr: f64 = s.iter().sum();
    let tr2: f64 = s.iter().map(|x| x * x).sum();
    Ok((m0, m0 * tr, m0 * (tr * tr + 2.0 * tr2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{b_from_q, q_from_b};
    use nalgebra::Matrix3;

    const TAU: f64 = 0.048333;
    const D: f64 = 0.7e-3;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn closed(n: u32) -> f64 {
        let m0 = (4.0 * PI * TAU * D).powf(-1.5);
        match n {
            0 => m0,
            2 => m0 * 3.0 / (8.0 * PI * PI * TAU * D),
            4 => m0 * 15.0 / (64.0 * PI.powi(4) * TAU * TAU * D * D),
            _ => unreachable!(),
        }
    }

    #[test]
    fn gaussian_reduction_all_routes() {
        assert!(rel(closed(0), 1.1408e5) < 1e-4);
        assert!(rel(closed(2), 1.281e8) < 1e-3);
        let rule = SphereRule::fibonacci(64);
        for q in [10.0, 22.89, 40.0] {
            let e = vec![(-b_from_q(q, TAU) * D).exp(); 30];
            let a = vec![1.0; 30];
            for n in [0, 2, 4] {
                let want = closed(n);
                assert!(rel(moment_direct(&e, &a, q, n, 1e-6).unwrap().value, want) < 1e-10);
                assert!(rel(moment_expansion(&e, &a, q, n, 1e-6).unwrap().value, want) < 1e-10);
                assert!(rel(moment_analytic(|_| D, |_| 1.0, TAU, n, &rule).unwrap().value, want) < 1e-10);
                assert!(rel(moment_constant(D, 1.0, TAU, n).unwrap(), want) < 1e-12);
            }
        }
        let g = rtop_dti(&[D; 3], TAU, DtiConvention::Gaussian).unwrap();
        assert!(rel(g, closed(0)) < 1e-12);
        let (m0, m2, m4) = gaussian_tensor_moments(&[D; 3], TAU).unwrap();
        assert!(rel(m0, closed(0)) < 1e-12 && rel(m2, closed(2)) < 1e-12 && rel(m4, closed(4)) < 1e-12);
    }

    #[test]
    fn dti_conventions_differ_by_fixed_ratio() {
        let eigs = [1.2e-3, 0.5e-3, 0.4e-3];
        let p = rtop_dti(&eigs, TAU, DtiConvention::ThreePi).unwrap();
        let g = rtop_dti(&eigs, TAU, DtiConvention::Gaussian).unwrap();
        assert!(rel(p / g, (4.0f64 / 3.0).powf(1.5)) < 1e-14);
        assert!((p / g - 1.5396).abs() < 1e-4);
        assert!(rtop_dti(&[1e-3, 1e-3, 1e-7], TAU, DtiConvention::Gaussian).is_err());
    }

    #[test]
    fn zero_variance_collapse() {
        let q = q_from_b(2000.0, TAU);
        for alpha in [0.3, 0.55, 0.8, 1.0] {
            let e = vec![0.31; 17];
            let a = vec![alpha; 17];
            for n in [0, 2, 4, 6] {
                let d = moment_direct(&e, &a, q, n, 1e-6).unwrap().value;
                let x = moment_expansion(&e, &a, q, n, 1e-6).unwrap().value;
                assert!(rel(x, d) < 1e-12, "alpha {alpha} n {n}: {x} vs {d}");
            }
        }
    }

    #[test]
    fn tensor_profile_identity() {
        // ∮ (gᵀDg)^{-3/2} dΣ = 4π det(D)^{-1/2}
        let t = Matrix3::new(1.5e-3, 0.2e-3, 0.0, 0.2e-3, 0.6e-3, 0.1e-3, 0.0, 0.1e-3, 0.4e-3);
        let eigs = crate::fitting::sorted_eigenvalues(&t);
        let want = rtop_dti(&eigs, TAU, DtiConvention::Gaussian).unwrap();
        let got = moment_analytic(|g| (g.transpose() * t * g)[0], |_| 1.0, TAU, 0, &SphereRule::gauss_product(48, 96))
            .unwrap()
            .value;
        assert!(rel(got, want) < 1e-9, "{got} vs {want}");
        let (_, m2, m4) = gaussian_tensor_moments(&eigs, TAU).unwrap();
        let rule = SphereRule::gauss_product(48, 96);
        assert!(rel(moment_analytic(|g| (g.transpose() * t * g)[0], |_| 1.0, TAU, 2, &rule).unwrap().value, m2) < 1e-9);
        assert!(rel(moment_analytic(|g| (g.transpose() * t * g)[0], |_| 1.0, TAU, 4, &rule).unwrap().value, m4) < 1e-9);
    }

    #[test]
    fn tau_scaling() {
        let rule = SphereRule::fibonacci(100);
        let d = |g: &Vector3<f64>| 1e-3 + 0.5e-3 * g.x * g.x;
        let a = |g: &Vector3<f64>| 0.6 + 0.2 * g.z * g.z;
        for n in [0u32, 2, 4] {
            let m1 = moment_analytic(d, a, TAU, n, &rule).unwrap().value;
            let m2 = moment_analytic(d, a, 3.0 * TAU, n, &rule).unwrap().value;
            assert!(rel(m2 / m1, 3f64.powf(-(n as f64 + 3.0) / 2.0)) < 1e-12);
        }
    }

    #[test]
    fn fitted_mode_is_invariant_to_shell() {
        let dirs = SphereRule::fibonacci(60);
        let d: Vec<f64> = dirs.points.iter().map(|g| 0.4e-3 + 1e-3 * g.y * g.y).collect();
        let a: Vec<f64> = dirs.points.iter().map(|g| 0.5 + 0.4 * g.x.abs()).collect();
        let at = |b: f64| -> Vec<f64> { d.iter().zip(&a).map(|(d, a)| (-(b * d).powf(*a)).exp()).collect() };
        for n in [0, 2, 4] {
            let v1 = moment_direct(&at(1000.0), &a, q_from_b(1000.0, TAU), n, 1e-9).unwrap().value;
            let v2 = moment_direct(&at(3000.0), &a, q_from_b(3000.0, TAU), n, 1e-9).unwrap().value;
            assert!(rel(v1, v2) < 1e-10);
            let analytic = moment_analytic(
                |g| 0.4e-3 + 1e-3 * g.y * g.y,
                |g| 0.5 + 0.4 * g.x.abs(),
                TAU,
                n,
                &dirs,
            )
            .unwrap()
            .value;
            assert!(rel(v1, analytic) < 1e-10);
        }
    }

    #[test]
    fn positivity_overflow_and_errors() {
        let q = q_from_b(1000.0, TAU);
        assert!(matches!(moment_direct(&[0.5], &[0.01], q, 4, 1e-6), Err(Error::Range(_))));
        assert!(matches!(moment_direct(&[f64::NAN], &[0.5], q, 0, 1e-6), Err(Error::Estimation(_))));
        assert!(moment_direct(&[0.5], &[0.5, 0.6], q, 0, 1e-6).is_err());
        assert!(moment_direct(&[0.5], &[0.5], 0.0, 0, 1e-6).is_err());
        let r = moment_direct(&[0.5, f64::NAN, 1.2], &[0.5, 0.5, 0.9], q, 0, 1e-6).unwrap();
        assert_eq!((r.n_excluded, r.n_clamped), (1, 1));
        assert!(r.value > 0.0);
        let r = moment_expansion(&[0.2, 0.6, 0.9], &[0.5, 0.8, 1.0], q, 2, 1e-6).unwrap();
        assert!(r.value > 0.0 && r.value.is_finite());
    }
}
