use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qstretch::acquisition::{
    format_fsl, group_shells, match_directions, parse_gradient_scheme, DirectionBundleSet, GradientScheme,
    ShResampling, ShellGrouping, DEFAULT_ANGULAR_TOL_DEG, DEFAULT_B_TOLERANCE,
};
use qstretch::analysis::{bmax_sweep, correlation_csv, correlation_matrix, scatter_csv, SweepConfig};
use qstretch::fitting::{fit_dti, fit_stretched_volume, FitOptions, StretchedFitPlan, StretchedFitVolume};
use qstretch::io::csv::{summarize, summary_csv};
use qstretch::io::fitfile::{read_fit_volume, write_fit_volume};
use qstretch::io::{mask_from_volume, read_nifti, write_nifti, NiftiDatatype, Volume4D};
use qstretch::measures::{
    compute_dti_maps, compute_maps, measured_members, DtiConvention, ESource, MapConfig, MapEstimator, QMaps,
};
use qstretch::par::{map_range, with_threads};
use qstretch::phantom::{generate_phantom, PhantomSpec};
use qstretch::{Error, Execution};
use serde::Serialize;

use crate::config::{pick, record_input, write_json, FileConfig, InputRecord, Provenance};
use crate::{
    usage, AnalyzeCommand, Cli, Command, CorrArgs, ESourceArg, EstimatorArg, FitArgs, MeasuresArgs, PhantomArgs,
    SweepArgs, TableArgs,
};

const EXEC: Execution = Execution::Parallel;

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let threads = pick(cli.threads.map(|t| t as usize), &file.threads);
    if threads == Some(0) {
        return Err(usage("threads must be at least 1"));
    }
    let command = cli.command;
    let work = move || match command {
        Command::Phantom(a) => phantom(a, &file),
        Command::Fit(a) => fit(a, &file),
        Command::Measures(a) => measures(a, &file),
        Command::Verify(a) => crate::verify::run(a, &file),
        Command::Analyze { which: AnalyzeCommand::Corr(a) } => corr(a, &file),
        Command::Analyze { which: AnalyzeCommand::Sweep(a) } => sweep(a, &file),
    };
    match threads {
        Some(t) => with_threads(t, work),
        None => work(),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing required {flag}")))
}

fn existing(path: PathBuf, flag: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(usage(format!("{flag}: {} does not exist", path.display())))
    }
}

fn check_tau(tau: f64) -> Result<f64> {
    if tau > 0.0 && tau.is_finite() {
        Ok(tau)
    } else {
        Err(usage(format!("--tau must be a positive number of seconds, got {tau}")))
    }
}

/// Table flags merged with the config file.
struct Inputs {
    dwi: Option<PathBuf>,
    bvals: Option<PathBuf>,
    bvecs: Option<PathBuf>,
    mask: Option<PathBuf>,
    tau: Option<f64>,
    b_tolerance: f64,
    angular_tolerance: f64,
}

impl Inputs {
    fn resolve(a: TableArgs, file: &FileConfig) -> Result<Self> {
        let opt_path = |flag: Option<PathBuf>, f: &Option<PathBuf>, name: &str| -> Result<Option<PathBuf>> {
            pick(flag, f).map(|p| existing(p, name)).transpose()
        };
        Ok(Self {
            dwi: opt_path(a.dwi, &file.dwi, "--dwi")?,
            bvals: opt_path(a.bvals, &file.bvals, "--bvals")?,
            bvecs: opt_path(a.bvecs, &file.bvecs, "--bvecs")?,
            mask: opt_path(a.mask, &file.mask, "--mask")?,
            tau: pick(a.tau, &file.tau).map(check_tau).transpose()?,
            b_tolerance: pick(a.b_tolerance, &file.b_tolerance).unwrap_or(DEFAULT_B_TOLERANCE),
            angular_tolerance: pick(a.angular_tolerance, &file.angular_tolerance).unwrap_or(DEFAULT_ANGULAR_TOL_DEG),
        })
    }

    fn has_table(&self) -> bool {
        self.bvals.is_some() || self.bvecs.is_some()
    }

    fn table(&self, tau: f64) -> Result<Table> {
        let bvals = required(self.bvals.as_ref(), "--bvals")?;
        let bvecs = required(self.bvecs.as_ref(), "--bvecs")?;
        let scheme = parse_gradient_scheme(
            &fs::read_to_string(bvals).with_context(|| format!("reading {}", bvals.display()))?,
            &fs::read_to_string(bvecs).with_context(|| format!("reading {}", bvecs.display()))?,
            tau,
        )?;
        for w in &scheme.warnings {
            log::warn!("{w}");
        }
        let grouping = group_shells(&scheme, self.b_tolerance);
        let bundles = match_directions(&scheme, &grouping, self.angular_tolerance);
        log::info!("{} measurements, shells {:?}, {} b0", scheme.n_measurements(), grouping.shell_b_centers, grouping.b0_indices.len());
        Ok(Table { scheme, grouping, bundles })
    }

    fn dwi(&self, table: &Table) -> Result<Volume4D> {
        let path = required(self.dwi.as_ref(), "--dwi")?;
        let vol = read_nifti(path).with_context(|| format!("reading {}", path.display()))?;
        if vol.n_volumes() != table.scheme.n_measurements() {
            return Err(Error::Input(format!(
                "dwi has {} volumes, gradient table has {} entries",
                vol.n_volumes(),
                table.scheme.n_measurements()
            ))
            .into());
        }
        Ok(vol)
    }

    fn mask(&self, dims: [usize; 3]) -> Result<Option<Vec<bool>>> {
        let Some(path) = &self.mask else { return Ok(None) };
        let vol = read_nifti(path).with_context(|| format!("reading {}", path.display()))?;
        if vol.spatial_dims() != dims {
            return Err(Error::Input(format!("mask is {:?}, data is {dims:?}", vol.spatial_dims())).into());
        }
        Ok(Some(mask_from_volume(&vol)))
    }

    fn records(&self) -> Result<Vec<InputRecord>> {
        let mut out = Vec::new();
        for (role, p) in [("dwi", &self.dwi), ("bvals", &self.bvals), ("bvecs", &self.bvecs), ("mask", &self.mask)] {
            if let Some(p) = p {
                out.push(record_input(role, p)?);
            }
        }
        Ok(out)
    }
}

struct Table {
    scheme: GradientScheme,
    grouping: ShellGrouping,
    bundles: DirectionBundleSet,
}

impl Table {
    /// Shell indices for the requested b-values, all shells when `None`.
    fn shell_subset(&self, shells: Option<&[f64]>) -> Result<Vec<usize>> {
        match shells {
            None => Ok((0..self.grouping.n_shells()).collect()),
            Some(list) => list
                .iter()
                .map(|&b| {
                    self.grouping.shell_index(b).ok_or_else(|| {
                        Error::Input(format!("shell b = {b} not found (shells: {:?})", self.grouping.shell_b_centers)).into()
                    })
                })
                .collect(),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

// ---- phantom ----

#[derive(Serialize)]
struct PhantomSidecar<'a> {
    #[serde(flatten)]
    provenance: Provenance,
    tau: f64,
    outputs: Vec<&'a str>,
}

fn phantom(a: PhantomArgs, file: &FileConfig) -> Result<()> {
    let out = required(pick(a.output, &file.output), "--output")?;
    let spec_path = existing(a.spec, "--spec")?;
    let text = fs::read_to_string(&spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec: PhantomSpec =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("phantom spec {}: {e}", spec_path.display())))?;
    if let Some(seed) = pick(a.seed, &file.seed) {
        spec.seed = seed;
    }
    let (dwi, truth) = generate_phantom(&spec, EXEC)?;
    let scheme = spec.protocol.scheme()?;
    create_dir(&out)?;

    let dt = if a.float32 { NiftiDatatype::Float32 } else { NiftiDatatype::Float64 };
    write_nifti(&dwi, out.join("dwi.nii"), dt)?;
    let (bvals, bvecs) = format_fsl(&scheme);
    fs::write(out.join("dwi.bval"), bvals)?;
    fs::write(out.join("dwi.bvec"), bvecs)?;
    for (name, values) in [("rtop", &truth.rtop), ("qmsd", &truth.qmsd), ("qmfd", &truth.qmfd), ("alpha", &truth.alpha)] {
        write_nifti(&dwi.like_3d(values.clone())?, out.join(format!("truth_{name}.nii")), NiftiDatatype::Float64)?;
    }
    write_json(&out.join("truth.json"), &truth)?;
    let outputs = vec![
        "dwi.nii", "dwi.bval", "dwi.bvec", "truth_rtop.nii", "truth_qmsd.nii", "truth_qmfd.nii", "truth_alpha.nii", "truth.json",
    ];
    let provenance = Provenance::new("phantom", &spec, vec![record_input("spec", &spec_path)?])?;
    write_json(&out.join("phantom.json"), &PhantomSidecar { provenance, tau: spec.protocol.tau, outputs })?;
    log::info!("phantom written to {}", out.display());
    Ok(())
}

// ---- fit ----

#[derive(Serialize)]
struct FitRecord {
    tau: f64,
    shells: Vec<f64>,
    b_tolerance: f64,
    angular_tolerance: f64,
    fit_options: FitOptions,
}

#[derive(Serialize)]
struct FitSidecar {
    #[serde(flatten)]
    provenance: Provenance,
    tau: f64,
    shells: Vec<f64>,
    n_directions: usize,
    n_voxels: usize,
    n_fitted: usize,
}

fn run_fit(inputs: &Inputs, table: &Table, dwi: &Volume4D, shells: Option<&[f64]>, file: &FileConfig) -> Result<(StretchedFitVolume, FitRecord)> {
    let tau = table.scheme.tau;
    let subset = table.shell_subset(shells)?;
    let plan = StretchedFitPlan::new(&table.scheme, &table.grouping, &table.bundles, &subset)?;
    let mask = inputs.mask(dwi.spatial_dims())?;
    let options = file.fit_options.unwrap_or_default();
    log::info!("fitting {} directions on shells {:?}", plan.n_directions(), plan.shell_b());
    let fv = fit_stretched_volume(dwi, &plan, tau, mask.as_deref(), &options, EXEC)?;
    if fv.n_fitted() == 0 {
        return Err(Error::Estimation("no voxel could be fitted".into()).into());
    }
    let record = FitRecord {
        tau,
        shells: plan.shell_b().to_vec(),
        b_tolerance: inputs.b_tolerance,
        angular_tolerance: inputs.angular_tolerance,
        fit_options: options,
    };
    Ok((fv, record))
}

fn fit(a: FitArgs, file: &FileConfig) -> Result<()> {
    let out = required(pick(a.output, &file.output), "--output")?;
    let shells = pick(a.shells, &file.shells);
    let inputs = Inputs::resolve(a.table, file)?;
    let tau = required(inputs.tau, "--tau")?;
    let table = inputs.table(tau)?;
    let dwi = inputs.dwi(&table)?;
    let (fv, record) = run_fit(&inputs, &table, &dwi, shells.as_deref(), file)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_fit_volume(&fv, &out)?;
    let sidecar = FitSidecar {
        provenance: Provenance::new("fit", &record, inputs.records()?)?,
        tau,
        shells: record.shells.clone(),
        n_directions: fv.directions.len(),
        n_voxels: fv.n_voxels(),
        n_fitted: fv.n_fitted(),
    };
    let mut side = out.clone().into_os_string();
    side.push(".json");
    write_json(Path::new(&side), &sidecar)?;
    log::info!("{} of {} voxels fitted", fv.n_fitted(), fv.n_voxels());
    Ok(())
}

// ---- measures ----

#[derive(Serialize)]
struct MeasuresRecord {
    estimator: &'static str,
    e_source: Option<&'static str>,
    shell: Option<f64>,
    tau: f64,
    resample: Option<ShResampling>,
    resample_points: Option<usize>,
    fit: Option<FitRecord>,
}

#[derive(Serialize)]
struct MeasuresSidecar {
    #[serde(flatten)]
    provenance: Provenance,
    estimator: String,
    shell_b: Option<f64>,
    tau: f64,
    metadata: qstretch::measures::MapMetadata,
    outputs: Vec<String>,
}

fn measures(a: MeasuresArgs, file: &FileConfig) -> Result<()> {
    let out = required(pick(a.output, &file.output), "--output")?;
    let estimator = match (a.estimator, &file.estimator) {
        (Some(e), _) => e,
        (None, Some(s)) => EstimatorArg::parse(s).ok_or_else(|| usage(format!("unknown estimator {s:?} in config")))?,
        (None, None) => EstimatorArg::Direct,
    };
    let e_source = match (a.e_source, &file.e_source) {
        (Some(e), _) => Some(e),
        (None, Some(s)) => match s.as_str() {
            "fitted" => Some(ESourceArg::Fitted),
            "measured" => Some(ESourceArg::Measured),
            _ => return Err(usage(format!("unknown e_source {s:?} in config"))),
        },
        (None, None) => None,
    };
    let shell = pick(a.shell, &file.shell);
    let fit_shells = pick(a.shells, &file.shells);
    let resample = (a.resample_sh || file.resample_sh.unwrap_or(false)).then(|| {
        let d = ShResampling::default();
        ShResampling {
            order: pick(a.sh_order, &file.sh_order).unwrap_or(d.order),
            lambda: pick(a.sh_lambda, &file.sh_lambda).unwrap_or(d.lambda),
        }
    });
    let fit_path = pick(a.fit, &file.fit).map(|p| existing(p, "--fit")).transpose()?;
    let inputs = Inputs::resolve(a.table, file)?;
    let mut records = inputs.records()?;

    let (maps, record) = match estimator {
        EstimatorArg::Dti3Pi | EstimatorArg::DtiGaussian => {
            let tau = required(inputs.tau, "--tau")?;
            let table = inputs.table(tau)?;
            let dwi = inputs.dwi(&table)?;
            let mask = inputs.mask(dwi.spatial_dims())?;
            let subset = table.shell_subset(fit_shells.as_deref())?;
            let tensors = map_range(EXEC, dwi.n_voxels(), |i| {
                if mask.as_ref().is_some_and(|m| !m[i]) {
                    return None;
                }
                fit_dti(&dwi.voxel_series(i), &table.scheme, &table.grouping, &subset, None).ok()
            });
            let convention = if estimator == EstimatorArg::Dti3Pi { DtiConvention::ThreePi } else { DtiConvention::Gaussian };
            let subset_b: Vec<f64> = subset.iter().map(|&s| table.grouping.shell_b_centers[s]).collect();
            let maps = compute_dti_maps(
                &tensors,
                dwi.spatial_dims(),
                dwi.voxel_size,
                dwi.affine,
                tau,
                &subset_b,
                convention,
                mask.as_deref(),
            )?;
            let record = MeasuresRecord {
                estimator: estimator.name(),
                e_source: None,
                shell: None,
                tau,
                resample: None,
                resample_points: None,
                fit: None,
            };
            (maps, record)
        }
        _ => {
            let shell = required(shell, "--shell")?;
            let map_estimator = match estimator {
                EstimatorArg::Direct => MapEstimator::Direct,
                EstimatorArg::Expansion => MapEstimator::Expansion,
                _ => MapEstimator::Gaussian,
            };
            let (fits, fit_record, table, dwi) = match &fit_path {
                Some(p) => {
                    let fits = read_fit_volume(p).with_context(|| format!("reading {}", p.display()))?;
                    records.push(record_input("fit", p)?);
                    if let Some(t) = inputs.tau {
                        if (t - fits.tau).abs() > 1e-12 * fits.tau {
                            return Err(Error::Input(format!("--tau {t} differs from the fit's tau {}", fits.tau)).into());
                        }
                    }
                    let (table, dwi) = if inputs.has_table() {
                        let table = inputs.table(fits.tau)?;
                        let dwi = inputs.dwi.as_ref().map(|_| inputs.dwi(&table)).transpose()?;
                        (Some(table), dwi)
                    } else {
                        (None, None)
                    };
                    (fits, None, table, dwi)
                }
                None => {
                    let tau = required(inputs.tau, "--tau")?;
                    let table = inputs.table(tau)?;
                    let dwi = inputs.dwi(&table)?;
                    let (fits, rec) = run_fit(&inputs, &table, &dwi, fit_shells.as_deref(), file)?;
                    (fits, Some(rec), Some(table), Some(dwi))
                }
            };
            if let Some(d) = &dwi {
                if d.spatial_dims() != fits.dims {
                    return Err(Error::Input(format!("dwi is {:?}, fit is {:?}", d.spatial_dims(), fits.dims)).into());
                }
            }
            // measured attenuations need the raw data; the Gaussian estimator defaults to them
            let e_source = e_source.unwrap_or(if map_estimator == MapEstimator::Gaussian && dwi.is_some() {
                ESourceArg::Measured
            } else {
                ESourceArg::Fitted
            });
            let grouping = match &table {
                Some(t) => t.grouping.clone(),
                None => ShellGrouping {
                    shell_b_centers: fits.shell_b.clone(),
                    shell_members: vec![Vec::new(); fits.shell_b.len()],
                    b0_indices: Vec::new(),
                    b_tolerance: inputs.b_tolerance,
                },
            };
            let source = match e_source {
                ESourceArg::Fitted => ESource::Fitted,
                ESourceArg::Measured => {
                    let (Some(t), Some(d)) = (&table, &dwi) else {
                        return Err(usage("--e-source measured needs --dwi, --bvals and --bvecs"));
                    };
                    ESource::Measured { dwi: d, members: measured_members(&fits, &t.bundles, &t.grouping, shell)? }
                }
            };
            let mask = inputs.mask(fits.dims)?;
            let config = MapConfig { estimator: map_estimator, shell_b: shell, resample, ..Default::default() };
            let maps = compute_maps(&fits, &grouping, &config, &source, mask.as_deref(), EXEC)?;
            let record = MeasuresRecord {
                estimator: estimator.name(),
                e_source: Some(source.name()),
                shell: Some(shell),
                tau: fits.tau,
                resample,
                resample_points: resample.map(|_| config.resample_points),
                fit: fit_record,
            };
            (maps, record)
        }
    };

    create_dir(&out)?;
    let mut outputs = Vec::new();
    for name in QMaps::MEASURES {
        let file_name = format!("{name}.nii");
        write_nifti(&maps.to_volume(name)?, out.join(&file_name), NiftiDatatype::Float32)?;
        outputs.push(file_name);
    }
    let mask = inputs.mask(maps.dims)?;
    let region = if mask.is_some() { "mask" } else { "all" };
    let rows: Vec<_> = QMaps::MEASURES
        .iter()
        .filter_map(|m| summarize(region, m, estimator.name(), maps.metadata.shell_b, maps.measure(m).unwrap(), mask.as_deref()))
        .collect();
    fs::write(out.join("summary.csv"), summary_csv(&rows))?;
    outputs.push("summary.csv".into());
    if maps.metadata.n_failed > 0 {
        log::warn!("{} voxel(s) have no estimate", maps.metadata.n_failed);
    }
    let sidecar = MeasuresSidecar {
        provenance: Provenance::new("measures", &record, records)?,
        estimator: estimator.name().into(),
        shell_b: maps.metadata.shell_b,
        tau: maps.metadata.tau,
        metadata: maps.metadata.clone(),
        outputs,
    };
    write_json(&out.join("measures.json"), &sidecar)?;
    Ok(())
}

// ---- analyze ----

fn corr(a: CorrArgs, file: &FileConfig) -> Result<()> {
    if a.maps.len() < 2 {
        return Err(usage("need at least two --map NAME=PATH"));
    }
    let mut names = Vec::new();
    let mut vols = Vec::new();
    for spec in &a.maps {
        let (name, path) = spec.split_once('=').ok_or_else(|| usage(format!("--map expects NAME=PATH, got {spec:?}")))?;
        let path = existing(PathBuf::from(path), "--map")?;
        let vol = read_nifti(&path).with_context(|| format!("reading {}", path.display()))?;
        if vol.n_volumes() != 1 {
            return Err(Error::Input(format!("{} has {} volumes, expected a 3-D map", path.display(), vol.n_volumes())).into());
        }
        if let Some(first) = vols.first().map(Volume4D::spatial_dims) {
            if vol.spatial_dims() != first {
                return Err(Error::Input(format!("{} is {:?}, {} is {first:?}", path.display(), vol.spatial_dims(), names[0])).into());
            }
        }
        names.push(name.to_string());
        vols.push(vol);
    }
    let mask_path = pick(a.mask, &file.mask).map(|p| existing(p, "--mask")).transpose()?;
    let mask = match &mask_path {
        Some(p) => {
            let m = read_nifti(p)?;
            if m.spatial_dims() != vols[0].spatial_dims() {
                return Err(Error::Input(format!("mask is {:?}, maps are {:?}", m.spatial_dims(), vols[0].spatial_dims())).into());
            }
            Some(mask_from_volume(&m))
        }
        None => None,
    };
    let data: Vec<&[f64]> = vols.iter().map(|v| v.data.as_slice()).collect();
    let matrix = correlation_matrix(&data, mask.as_deref())?;
    if let Some(p) = &a.scatter {
        fs::write(p, scatter_csv(&names[0], data[0], &names[1], data[1], mask.as_deref())?)?;
    }
    write_text(a.output.as_deref(), &correlation_csv(&names, &matrix))
}

#[derive(Serialize)]
struct SweepRecord {
    tau: f64,
    b_max: Vec<f64>,
    configs: Vec<SweepConfig>,
    b_tolerance: f64,
    angular_tolerance: f64,
    fit_options: FitOptions,
}

#[derive(Serialize)]
struct SweepSidecar {
    #[serde(flatten)]
    provenance: Provenance,
    tau: f64,
    result: qstretch::analysis::SweepResult,
}

fn sweep(a: SweepArgs, file: &FileConfig) -> Result<()> {
    let output = pick(a.output, &file.output);
    let inputs = Inputs::resolve(a.table, file)?;
    let tau = required(inputs.tau, "--tau")?;
    let table = inputs.table(tau)?;
    let dwi = inputs.dwi(&table)?;
    let mask = inputs.mask(dwi.spatial_dims())?;
    let centers = &table.grouping.shell_b_centers;
    let b_max = a.bmax.unwrap_or_else(|| centers.iter().skip(1).copied().collect());
    if b_max.len() < 2 {
        return Err(usage("a sweep needs at least two b_max values"));
    }
    let b_eval = match a.b_eval.or(file.shell) {
        Some(b) => b,
        None => *centers.first().ok_or_else(|| Error::Input("no diffusion-weighted shell".into()))?,
    };
    let configs = vec![SweepConfig::StretchedFixed { b_eval }, SweepConfig::StretchedAtBmax, SweepConfig::GaussianAtBmax];
    let options = file.fit_options.unwrap_or_default();
    let result = bmax_sweep(&dwi, &table.scheme, &table.grouping, &table.bundles, &b_max, &configs, mask.as_deref(), &options, EXEC)?;
    write_text(output.as_deref(), &result.to_csv())?;
    if let Some(p) = &output {
        let record = SweepRecord {
            tau,
            b_max,
            configs,
            b_tolerance: inputs.b_tolerance,
            angular_tolerance: inputs.angular_tolerance,
            fit_options: options,
        };
        let mut side = p.clone().into_os_string();
        side.push(".json");
        let sidecar = SweepSidecar { provenance: Provenance::new("sweep", &record, inputs.records()?)?, tau, result };
        write_json(Path::new(&side), &sidecar)?;
    }
    Ok(())
}
