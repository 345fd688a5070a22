//! `qstretch verify`: estimator checks against closed forms and brute-force quadrature.

use std::f64::consts::PI;

use anyhow::Result;
use nalgebra::{Matrix3, Rotation3, Vector3};
use qstretch::acquisition::q_from_b;
use qstretch::measures::{gaussian_tensor_moments, moment_analytic, moment_direct, moment_expansion, rtop_dti, DtiConvention};
use qstretch::oracle::{brute_force_moment, QuadratureSpec};
use qstretch::phantom::TRUTH_SPHERE_LEVEL;
use qstretch::signal_model::DEFAULT_EPS_E;
use qstretch::sphere::SphereRule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{pick, FileConfig};
use crate::{Suite, VerifyArgs};

const TAU: f64 = 0.048333;
const SHELL_B: f64 = 3000.0;
const DIRECT_POINTS: usize = 256;

#[derive(Debug)]
pub struct VerifyFailed(pub usize);

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} check(s) outside tolerance", self.0)
    }
}

impl std::error::Error for VerifyFailed {}

struct Check {
    suite: &'static str,
    name: String,
    n: u32,
    value: f64,
    reference: f64,
    tol: f64,
}

impl Check {
    fn rel_err(&self) -> f64 {
        ((self.value - self.reference) / self.reference).abs()
    }

    fn passed(&self) -> bool {
        self.rel_err() <= self.tol
    }
}

/// ∫ ‖q‖ⁿ exp(−4π²τD‖q‖²) d³q for n = 0, 2, 4.
fn gaussian_moment(d: f64, n: u32) -> f64 {
    let a = 4.0 * PI * PI * TAU * d;
    let m0 = (4.0 * PI * TAU * d).powf(-1.5);
    match n {
        0 => m0,
        2 => m0 * 1.5 / a,
        4 => m0 * 15.0 / (4.0 * a * a),
        _ => unreachable!(),
    }
}

/// Attenuations and exponents of a field sampled on a direction set.
fn shell_samples(rule: &SphereRule, d_fn: &dyn Fn(&Vector3<f64>) -> f64, a_fn: &dyn Fn(&Vector3<f64>) -> f64) -> (Vec<f64>, Vec<f64>) {
    rule.points
        .iter()
        .map(|g| {
            let a = a_fn(g);
            ((-(SHELL_B * d_fn(g)).powf(a)).exp(), a)
        })
        .unzip()
}

fn gaussian_suite(out: &mut Vec<Check>) -> Result<()> {
    let d = 0.7e-3;
    let fib = SphereRule::fibonacci(DIRECT_POINTS);
    let (e, a) = shell_samples(&fib, &|_| d, &|_| 1.0);
    let q = q_from_b(SHELL_B, TAU);
    let ico = SphereRule::icosahedral(TRUTH_SPHERE_LEVEL);
    let spec = QuadratureSpec::default();
    let (_, m2, m4) = gaussian_tensor_moments(&[d; 3], TAU)?;
    for n in [0u32, 2, 4] {
        let reference = gaussian_moment(d, n);
        let mut push = |name: &str, value: f64| {
            out.push(Check { suite: "gaussian", name: name.into(), n, value, reference, tol: 1e-6 })
        };
        push("direct", moment_direct(&e, &a, q, n, DEFAULT_EPS_E)?.value);
        push("expansion", moment_expansion(&e, &a, q, n, DEFAULT_EPS_E)?.value);
        push("analytic", moment_analytic(|_| d, |_| 1.0, TAU, n, &ico)?.value);
        push("oracle", brute_force_moment(|_| d, |_| 1.0, TAU, n, &spec)?.value);
        let dti = match n {
            0 => rtop_dti(&[d; 3], TAU, DtiConvention::Gaussian)?,
            2 => m2,
            _ => m4,
        };
        push("dti-gaussian", dti);
    }
    Ok(())
}

/// SPD tensor with eigenvalues in [0.2, 2]e-3 and a direction-dependent α in [0.5, 1].
fn random_field(rng: &mut ChaCha8Rng) -> (Matrix3<f64>, Vector3<f64>, f64, f64) {
    let eig = Vector3::from_fn(|_, _| rng.gen_range(0.2e-3..2e-3));
    let rot = Rotation3::from_euler_angles(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), rng.gen_range(-PI..PI));
    let tensor = rot.matrix() * Matrix3::from_diagonal(&eig) * rot.matrix().transpose();
    let axis = rot * Vector3::new(1.0, 0.0, 0.0);
    let a0 = rng.gen_range(0.5..1.0);
    let a1 = rng.gen_range(0.0..(1.0 - a0));
    (tensor, axis, a0, a1)
}

fn oracle_suite(out: &mut Vec<Check>, fields: usize, seed: u64) -> Result<()> {
    let spec = QuadratureSpec::default();
    let ico = SphereRule::icosahedral(TRUTH_SPHERE_LEVEL);
    for alpha in [0.5, 0.75, 1.0] {
        for n in [0u32, 2, 4] {
            let reference = brute_force_moment(|_| 1e-3, |_| alpha, TAU, n, &spec)?.value;
            let value = moment_analytic(|_| 1e-3, |_| alpha, TAU, n, &ico)?.value;
            out.push(Check { suite: "oracle", name: format!("analytic iso a={alpha}"), n, value, reference, tol: 1e-6 });
        }
    }
    let fib = SphereRule::fibonacci(DIRECT_POINTS);
    let q = q_from_b(SHELL_B, TAU);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..fields {
        let (tensor, axis, a0, a1) = random_field(&mut rng);
        let d_fn = |g: &Vector3<f64>| (g.transpose() * tensor * g)[0];
        let a_fn = |g: &Vector3<f64>| a0 + a1 * g.dot(&axis).powi(2);
        let (e, a) = shell_samples(&fib, &d_fn, &a_fn);
        for n in [0u32, 2, 4] {
            let reference = brute_force_moment(d_fn, a_fn, TAU, n, &spec)?.value;
            let direct = moment_direct(&e, &a, q, n, DEFAULT_EPS_E)?.value;
            out.push(Check { suite: "oracle", name: format!("direct field {k}"), n, value: direct, reference, tol: 1e-2 });
            let analytic = moment_analytic(d_fn, a_fn, TAU, n, &ico)?.value;
            out.push(Check { suite: "oracle", name: format!("analytic field {k}"), n, value: analytic, reference, tol: 1e-3 });
        }
    }
    Ok(())
}

pub fn run(a: VerifyArgs, file: &FileConfig) -> Result<()> {
    let seed = pick(a.seed, &file.seed).unwrap_or(0);
    let mut checks = Vec::new();
    if matches!(a.suite, Suite::Gaussian | Suite::All) {
        gaussian_suite(&mut checks)?;
    }
    if matches!(a.suite, Suite::Oracle | Suite::All) {
        oracle_suite(&mut checks, a.fields, seed)?;
    }
    println!("{:<9} {:<22} {:>2} {:>15} {:>15} {:>10} {:>8}  result", "suite", "check", "n", "value", "reference", "rel_err", "tol");
    let mut failed = 0;
    for c in &checks {
        let ok = c.passed();
        failed += usize::from(!ok);
        println!(
            "{:<9} {:<22} {:>2} {:>15.8e} {:>15.8e} {:>10.2e} {:>8.0e}  {}",
            c.suite,
            c.name,
            c.n,
            c.value,
            c.reference,
            c.rel_err(),
            c.tol,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        return Err(VerifyFailed(failed).into());
    }
    Ok(())
}
