use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qstretch::acquisition::{group_shells, match_directions};
use qstretch::fitting::{fit_stretched_volume, FitOptions, StretchedFitPlan};
use qstretch::measures::{compute_maps, ESource, MapConfig, MapEstimator};
use qstretch::oracle::{brute_force_moment, QuadratureSpec};
use qstretch::phantom::{generate_phantom, Noise, PhantomSpec, ProtocolSpec};
use qstretch::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_fit(c: &mut Criterion) {
    let mut spec = PhantomSpec::uniform([8, 8, 4], [1.0e-3, 0.7e-3, 0.6e-3, 0.0, 0.0, 0.0], 0.7, ProtocolSpec::human_five_shell());
    spec.noise = Noise::Rician { snr: 39.0 };
    let (dwi, _) = generate_phantom(&spec, Execution::Parallel).unwrap();
    let scheme = spec.protocol.scheme().unwrap();
    let grouping = group_shells(&scheme, 25.0);
    let bundles = match_directions(&scheme, &grouping, 1.0);
    let shells: Vec<usize> = (0..grouping.n_shells()).collect();
    let plan = StretchedFitPlan::new(&scheme, &grouping, &bundles, &shells).unwrap();
    let options = FitOptions::default();

    let mut group = c.benchmark_group("fit_volume_256_voxels");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fit_stretched_volume(&dwi, &plan, scheme.tau, None, &options, exec).unwrap())
        });
    }
    group.finish();

    let fits = fit_stretched_volume(&dwi, &plan, scheme.tau, None, &options, Execution::Parallel).unwrap();
    let config = MapConfig { estimator: MapEstimator::Expansion, shell_b: 1000.0, ..Default::default() };
    let mut group = c.benchmark_group("maps_256_voxels");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| compute_maps(&fits, &grouping, &config, &ESource::Fitted, None, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle_anisotropic");
    group.sample_size(10);
    for (name, exec) in MODES {
        let spec = QuadratureSpec { execution: exec, ..Default::default() };
        group.bench_function(name, |b| {
            b.iter(|| {
                brute_force_moment(|g| 0.5e-3 + 1e-3 * g.x * g.x, |g| 0.7 + 0.2 * g.z * g.z, 0.048333, 2, &spec).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_fit, bench_oracle);
criterion_main!(benches);
