//! Acceptance checks, one line per criterion.
//!
//! Built with `harness = false` so every line is printed even when all pass.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix3, Rotation3, Vector3};
use qstretch::acquisition::{group_shells, match_directions, q_from_b, GradientScheme, ShellGrouping, DirectionBundleSet};
use qstretch::analysis::{bmax_sweep, pearson, SweepConfig};
use qstretch::fitting::{fit_stretched_volume, FitOptions, StretchedFitPlan, StretchedFitVolume};
use qstretch::io::fitfile::encode_fit_volume;
use qstretch::io::{read_nifti_bytes, write_nifti_bytes, NiftiDatatype, Volume4D};
use qstretch::measures::{
    compute_maps, gaussian_tensor_moments, measured_members, moment_analytic, moment_direct, moment_expansion,
    rtop_dti, DtiConvention, ESource, MapConfig, MapEstimator, QMaps,
};
use qstretch::oracle::{brute_force_moment, QuadratureSpec};
use qstretch::par::with_threads;
use qstretch::phantom::{generate_phantom, Noise, PhantomSpec, PhantomTruth, ProtocolSpec, Ramp, RegionSpec, Shape};
use qstretch::signal_model::DEFAULT_EPS_E;
use qstretch::sphere::SphereRule;
use qstretch::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAU: f64 = 0.048333;
const EPS: f64 = DEFAULT_EPS_E;

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// ∫ ‖q‖ⁿ exp(−4π²τD‖q‖²) d³q = 2π Γ((n+3)/2) (4π²τD)^{−(n+3)/2}, written out for n = 0, 2, 4.
fn gaussian_closed_form(d: f64, tau: f64, n: u32) -> f64 {
    let a = 4.0 * PI * PI * tau * d;
    let half_gamma = match n {
        0 => PI.sqrt() / 4.0,
        2 => 3.0 * PI.sqrt() / 8.0,
        4 => 15.0 * PI.sqrt() / 16.0,
        _ => unreachable!(),
    };
    4.0 * PI * half_gamma * a.powf(-(n as f64 + 3.0) / 2.0)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sample_shell(rule: &SphereRule, b: f64, d_fn: impl Fn(&Vector3<f64>) -> f64, a_fn: impl Fn(&Vector3<f64>) -> f64) -> (Vec<f64>, Vec<f64>) {
    rule.points
        .iter()
        .map(|g| {
            let a = a_fn(g);
            ((-(b * d_fn(g)).powf(a)).exp(), a)
        })
        .unzip()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let d = 0.7e-3;
    let b = 1000.0;
    let q = q_from_b(b, TAU);
    let (e, a) = sample_shell(&SphereRule::fibonacci(256), b, |_| d, |_| 1.0);
    let rule = SphereRule::icosahedral(2);
    let spec = QuadratureSpec::default();
    let (_, m2, m4) = gaussian_tensor_moments(&[d; 3], TAU).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for n in [0u32, 2, 4] {
        let want = gaussian_closed_form(d, TAU, n);
        let dti = [rtop_dti(&[d; 3], TAU, DtiConvention::Gaussian).map_err(|e| e.to_string())?, m2, m4][n as usize / 2];
        let got = [
            moment_direct(&e, &a, q, n, EPS).map_err(|e| e.to_string())?.value,
            moment_expansion(&e, &a, q, n, EPS).map_err(|e| e.to_string())?.value,
            moment_analytic(|_| d, |_| 1.0, TAU, n, &rule).map_err(|e| e.to_string())?.value,
            brute_force_moment(|_| d, |_| 1.0, TAU, n, &spec).map_err(|e| e.to_string())?.value,
            dti,
        ];
        for v in got {
            worst = worst.max(rel(v, want));
        }
    }
    let rtop = gaussian_closed_form(d, TAU, 0);
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 1.0 && (rtop - 1.141e5).abs() < 0.001e5,
        format!("RTOP {rtop:.4e}, max rel err {worst:.2e} over 5 routes x n=0,2,4, {secs:.2} s"),
    )
}

/// SPD tensor with eigenvalues in [0.2, 2]e-3 and α(g) = a0 + a1 (g·u)² inside [0.5, 1].
struct Field {
    tensor: Matrix3<f64>,
    axis: Vector3<f64>,
    a0: f64,
    a1: f64,
}

impl Field {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let eig = Vector3::from_fn(|_, _| rng.gen_range(0.2e-3..=2e-3));
        let r = Rotation3::from_euler_angles(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), rng.gen_range(-PI..PI));
        let tensor = r.matrix() * Matrix3::from_diagonal(&eig) * r.matrix().transpose();
        let axis = Rotation3::from_euler_angles(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), 0.0) * Vector3::z();
        let a0 = rng.gen_range(0.5..=1.0);
        let a1 = rng.gen_range(0.0..=1.0 - a0);
        Self { tensor, axis, a0, a1 }
    }

    fn d(&self, g: &Vector3<f64>) -> f64 {
        (g.transpose() * self.tensor * g)[0]
    }

    fn alpha(&self, g: &Vector3<f64>) -> f64 {
        self.a0 + self.a1 * g.dot(&self.axis).powi(2)
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let fib = SphereRule::fibonacci(256);
    let rule = SphereRule::icosahedral(5);
    let spec = QuadratureSpec::default();
    let b = 2000.0;
    let q = q_from_b(b, TAU);
    let (mut worst_direct, mut worst_analytic): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let f = Field::random(&mut rng);
        let (e, a) = sample_shell(&fib, b, |g| f.d(g), |g| f.alpha(g));
        for n in [0u32, 2, 4] {
            let truth = brute_force_moment(|g| f.d(g), |g| f.alpha(g), TAU, n, &spec).map_err(|e| e.to_string())?.value;
            let direct = moment_direct(&e, &a, q, n, EPS).map_err(|e| e.to_string())?.value;
            let analytic = moment_analytic(|g| f.d(g), |g| f.alpha(g), TAU, n, &rule).map_err(|e| e.to_string())?.value;
            worst_direct = worst_direct.max(rel(direct, truth));
            worst_analytic = worst_analytic.max(rel(analytic, truth));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_direct <= 1e-2 && worst_analytic <= 1e-3 && secs < 60.0,
        format!("20 fields x n=0,2,4: direct max rel err {worst_direct:.2e}, analytic {worst_analytic:.2e}, {secs:.1} s"),
    )
}

struct Setup {
    dwi: Volume4D,
    truth: PhantomTruth,
    scheme: GradientScheme,
    grouping: ShellGrouping,
    bundles: DirectionBundleSet,
}

fn setup(spec: &PhantomSpec, exec: Execution) -> Result<Setup, String> {
    let (dwi, truth) = generate_phantom(spec, exec).map_err(|e| e.to_string())?;
    let scheme = spec.protocol.scheme().map_err(|e| e.to_string())?;
    let grouping = group_shells(&scheme, 25.0);
    let bundles = match_directions(&scheme, &grouping, 1.0);
    Ok(Setup { dwi, truth, scheme, grouping, bundles })
}

impl Setup {
    fn fit(&self, exec: Execution) -> Result<StretchedFitVolume, String> {
        let all: Vec<usize> = (0..self.grouping.n_shells()).collect();
        let plan = StretchedFitPlan::new(&self.scheme, &self.grouping, &self.bundles, &all).map_err(|e| e.to_string())?;
        fit_stretched_volume(&self.dwi, &plan, self.scheme.tau, None, &FitOptions::default(), exec).map_err(|e| e.to_string())
    }

    fn maps(&self, fits: &StretchedFitVolume, estimator: MapEstimator, shell_b: f64, source: &ESource) -> Result<QMaps, String> {
        let config = MapConfig { estimator, shell_b, ..Default::default() };
        compute_maps(fits, &self.grouping, &config, source, None, Execution::Parallel).map_err(|e| e.to_string())
    }
}

const TISSUE: [f64; 6] = [1.0e-3, 0.7e-3, 0.6e-3, 0.05e-3, 0.0, 0.0];

fn tissue_phantom(dims: [usize; 3], protocol: ProtocolSpec, noise: Noise) -> PhantomSpec {
    let mut spec = PhantomSpec::uniform(dims, TISSUE, 0.7, protocol);
    spec.regions[0].ramp = Some(Ramp { axis: 0, d_scale: 0.4, alpha_shift: 0.2 });
    spec.noise = noise;
    spec.seed = 39;
    spec
}

/// Per-direction |Δα|, |Δα|/α and |ΔD|/D against the truth, and how many fits sat on a bound.
fn fit_errors(s: &Setup, fits: &StretchedFitVolume) -> (Vec<f64>, Vec<f64>, Vec<f64>, usize) {
    let (mut da, mut ra, mut dd, mut at_bound) = (Vec::new(), Vec::new(), Vec::new(), 0);
    for (i, v) in fits.voxels.iter().enumerate() {
        let Some(v) = v else { continue };
        for f in &v.fits {
            let d_true = s.truth.diffusivity(i, &f.direction);
            da.push((f.params.alpha - s.truth.alpha[i]).abs());
            ra.push(rel(f.params.alpha, s.truth.alpha[i]));
            dd.push(rel(f.params.d, d_true));
            at_bound += usize::from(f.at_bound.iter().any(|&x| x));
        }
    }
    (da, ra, dd, at_bound)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    with_threads(4, || {
        let clean = setup(&tissue_phantom([16, 16, 4], ProtocolSpec::human_five_shell(), Noise::None), Execution::Parallel)?;
        let fits = clean.fit(Execution::Parallel)?;
        let (_, ra, dd, bound_clean) = fit_errors(&clean, &fits);
        let alpha_max = ra.iter().copied().fold(0.0f64, f64::max);
        let d_max = dd.iter().copied().fold(0.0f64, f64::max);
        let clean_ok = fits.n_fitted() == 16 * 16 * 4 && alpha_max <= 1e-6 && d_max <= 1e-6 && bound_clean == 0;

        let noisy = setup(
            &tissue_phantom([16, 16, 4], ProtocolSpec::human_five_shell(), Noise::Rician { snr: 39.0 }),
            Execution::Parallel,
        )?;
        let fits = noisy.fit(Execution::Parallel)?;
        let (da, _, dd, _) = fit_errors(&noisy, &fits);
        let (ma, md) = (median(da), median(dd));
        let secs = start.elapsed().as_secs_f64();
        check(
            clean_ok && ma <= 0.05 && md <= 0.05 && secs < 120.0,
            format!(
                "noiseless max rel err alpha {alpha_max:.2e}, D {d_max:.2e}; SNR 39 median |da| {ma:.4}, median rel dD {md:.4}; {secs:.1} s"
            ),
        )
    })
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut spec = PhantomSpec::uniform([8, 8, 2], TISSUE, 0.7, ProtocolSpec::ex_vivo_sweep());
    spec.regions[0].ramp = Some(Ramp { axis: 0, d_scale: 0.4, alpha_shift: 0.0 });
    let s = setup(&spec, Execution::Parallel)?;
    let fits = s.fit(Execution::Parallel)?;
    let shells = [1000.0, 3000.0, 5000.0];
    let mut fitted = Vec::new();
    let mut gauss = Vec::new();
    for b in shells {
        fitted.push(s.maps(&fits, MapEstimator::Direct, b, &ESource::Fitted)?);
        let members = measured_members(&fits, &s.bundles, &s.grouping, b).map_err(|e| e.to_string())?;
        gauss.push(s.maps(&fits, MapEstimator::Gaussian, b, &ESource::Measured { dwi: &s.dwi, members })?);
    }
    let mut worst_fitted: f64 = 0.0;
    for m in &fitted[1..] {
        for name in QMaps::MEASURES {
            for (x, y) in m.measure(name).unwrap().iter().zip(fitted[0].measure(name).unwrap()) {
                worst_fitted = worst_fitted.max(rel(*x, *y));
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let g: Vec<f64> = gauss.iter().map(|m| mean(&m.rtop)).collect();
    let min_pair = [(0, 1), (0, 2), (1, 2)].iter().map(|&(i, j)| rel(g[i], g[j]).min(rel(g[j], g[i]))).fold(f64::INFINITY, f64::min);

    let b_max: Vec<f64> = s.grouping.shell_b_centers[1..].to_vec();
    let configs = [SweepConfig::StretchedAtBmax, SweepConfig::StretchedFixed { b_eval: 1000.0 }, SweepConfig::GaussianAtBmax];
    let sweep = bmax_sweep(&s.dwi, &s.scheme, &s.grouping, &s.bundles, &b_max, &configs, None, &FitOptions::default(), Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let total = |c: usize, m: usize| sweep.mean_abs_change[c][m].iter().sum::<f64>();
    let worst_ratio = (0..3)
        .flat_map(|m| [total(0, m) / total(2, m), total(1, m) / total(2, m)])
        .fold(0.0f64, f64::max);
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_fitted <= 1e-6 && min_pair > 0.1 && worst_ratio < 0.01,
        format!(
            "fitted maps at 1000/3000/5000 max rel diff {worst_fitted:.2e}; Gaussian RTOP min pairwise diff {:.1}%; sweep change ratio stretched/Gaussian {worst_ratio:.2e}; {secs:.1} s",
            100.0 * min_pair
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut worst_const: f64 = 0.0;
    for (e, a, b) in [(0.3, 0.6, 1000.0), (0.05, 0.9, 3000.0), (0.8, 1.0, 200.0), (0.01, 0.5, 5000.0)] {
        let q = q_from_b(b, TAU);
        for n in [0u32, 2, 4] {
            let es = vec![e; 33];
            let al = vec![a; 33];
            let m1 = moment_direct(&es, &al, q, n, EPS).map_err(|e| e.to_string())?.value;
            let m2 = moment_expansion(&es, &al, q, n, EPS).map_err(|e| e.to_string())?.value;
            worst_const = worst_const.max(rel(m2, m1));
        }
    }

    // mildly anisotropic phantom: background plus a more anisotropic core
    let mut spec = tissue_phantom([12, 12, 2], ProtocolSpec::human_five_shell(), Noise::None);
    spec.regions.insert(
        0,
        RegionSpec {
            shape: Shape::Sphere { center: [5.5, 5.5, 0.5], radius: 3.5 },
            tensor: [1.3e-3, 0.6e-3, 0.5e-3, 0.0, 0.1e-3, 0.0],
            alpha: 0.75,
            ramp: Some(Ramp { axis: 1, d_scale: 0.3, alpha_shift: 0.15 }),
        },
    );
    let s = setup(&spec, Execution::Parallel)?;
    let fits = s.fit(Execution::Parallel)?;
    let mut rho = f64::INFINITY;
    for b in [1000.0, 3000.0] {
        let direct = s.maps(&fits, MapEstimator::Direct, b, &ESource::Fitted)?;
        let expansion = s.maps(&fits, MapEstimator::Expansion, b, &ESource::Fitted)?;
        rho = rho.min(pearson(&direct.rtop, &expansion.rtop, None).map_err(|e| e.to_string())?);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_const <= 1e-12 && rho >= 0.99,
        format!("direction-constant max rel diff {worst_const:.2e}; RTOP Pearson rho {rho:.8} (min over b=1000, 3000); {secs:.1} s"),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    // float64 round trip on a non-trivial volume
    let mut vol = Volume4D::new([5, 4, 3, 2], [1.25, 2.0, 0.5], (0..120).map(|i| (i as f64 * 0.37).sin() * 1e3 + 1e-9).collect())
        .map_err(|e| e.to_string())?;
    vol.affine[0][3] = -10.0;
    vol.affine[1][3] = 4.5;
    let bytes = write_nifti_bytes(&vol, NiftiDatatype::Float64).map_err(|e| e.to_string())?;
    let back = read_nifti_bytes(&bytes).map_err(|e| e.to_string())?;
    let identical = back.dims == vol.dims
        && back.voxel_size == vol.voxel_size
        && back.affine == vol.affine
        && back.data.iter().zip(&vol.data).all(|(a, b)| a.to_bits() == b.to_bits());

    // whole pipeline on 1 and 4 threads
    let spec = tissue_phantom([8, 8, 2], ProtocolSpec::human_five_shell(), Noise::Rician { snr: 30.0 });
    let run = |threads: usize| -> Result<Vec<Vec<u8>>, String> {
        with_threads(threads, || {
            let s = setup(&spec, Execution::Parallel)?;
            let fits = s.fit(Execution::Parallel)?;
            let maps = s.maps(&fits, MapEstimator::Expansion, 2400.0, &ESource::Fitted)?;
            let mut out = vec![
                write_nifti_bytes(&s.dwi, NiftiDatatype::Float64).map_err(|e| e.to_string())?,
                encode_fit_volume(&fits),
            ];
            for name in QMaps::MEASURES {
                out.push(write_nifti_bytes(&maps.to_volume(name).map_err(|e| e.to_string())?, NiftiDatatype::Float32).map_err(|e| e.to_string())?);
            }
            Ok(out)
        })
    };
    let same_threads = run(1)? == run(4)?;
    let secs = start.elapsed().as_secs_f64();
    check(
        identical && same_threads,
        format!("float64 round trip bit-exact: {identical}; dwi, fit and map bytes equal on 1 vs 4 threads: {same_threads}; {secs:.1} s"),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let spec = QuadratureSpec::default();
    let rule = SphereRule::icosahedral(3);
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 0.75, 1.0] {
        for d in [0.4e-3, 1.5e-3] {
            for n in [0u32, 2, 4] {
                let oracle = brute_force_moment(|_| d, |_| alpha, TAU, n, &spec).map_err(|e| e.to_string())?;
                let analytic = moment_analytic(|_| d, |_| alpha, TAU, n, &rule).map_err(|e| e.to_string())?.value;
                worst = worst.max(rel(analytic, oracle.value));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 1e-6, format!("alpha 0.5/0.75/1, two D, n=0,2,4: max rel diff {worst:.2e}; {secs:.1} s"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("gaussian closed form", criterion_1),
        ("oracle equivalence on random fields", criterion_2),
        ("exact and noisy fit recovery", criterion_3),
        ("b-value consistency", criterion_4),
        ("expansion vs direct", criterion_5),
        ("I/O round trip and thread independence", criterion_6),
        ("surface reduction vs 3-D quadrature", criterion_7),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", k + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        match f() {
            Ok(detail) => println!("PASS {label}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
