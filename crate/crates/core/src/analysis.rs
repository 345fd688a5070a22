//! Comparisons between measure maps: correlations and b_max stability sweeps.

use serde::{Deserialize, Serialize};

use crate::acquisition::{DirectionBundleSet, GradientScheme, ShellGrouping};
use crate::error::{Error, Result};
use crate::fitting::{fit_stretched_volume, FitOptions, StretchedFitPlan};
use crate::io::Volume4D;
use crate::measures::{compute_maps, measured_members, ESource, MapConfig, MapEstimator, QMaps};
use crate::par::Execution;

/// Linearly interpolated percentile of already sorted data, `p` in [0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn paired(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() || mask.is_some_and(|m| m.len() != a.len()) {
        return Err(Error::Input("maps and mask must have the same number of voxels".into()));
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..a.len() {
        if mask.map_or(true, |m| m[i]) && a[i].is_finite() && b[i].is_finite() {
            x.push(a[i]);
            y.push(b[i]);
        }
    }
    Ok((x, y))
}

/// Sample Pearson correlation over masked voxels where both maps are finite.
pub fn pearson(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    let (x, y) = paired(a, b, mask)?;
    if x.len() < 2 {
        return Err(Error::Input(format!("{} usable voxels; correlation needs at least 2", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (u, v) in x.iter().zip(&y) {
        let (du, dv) = (u - mx, v - my);
        sxy += du * dv;
        sxx += du * du;
        syy += dv * dv;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::Estimation("a map has zero variance over the mask".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Symmetric matrix of pairwise correlations.
pub fn correlation_matrix(maps: &[&[f64]], mask: Option<&[bool]>) -> Result<Vec<Vec<f64>>> {
    let k = maps.len();
    let mut out = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let r = pearson(maps[i], maps[j], mask)?;
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    Ok(out)
}

pub fn correlation_csv(names: &[String], matrix: &[Vec<f64>]) -> String {
    let mut out = String::from("map");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (n, row) in names.iter().zip(matrix) {
        out.push_str(n);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Voxel-wise value pairs for external scatter plots.
pub fn scatter_csv(name_a: &str, a: &[f64], name_b: &str, b: &[f64], mask: Option<&[bool]>) -> Result<String> {
    let (x, y) = paired(a, b, mask)?;
    let mut out = format!("{name_a},{name_b}\n");
    for (u, v) in x.iter().zip(&y) {
        out.push_str(&format!("{u},{v}\n"));
    }
    Ok(out)
}

/// One way of turning a refit at a given b_max into maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SweepConfig {
    /// Stretched fit on shells ≤ b_max, evaluated at a fixed shell.
    StretchedFixed { b_eval: f64 },
    /// Stretched fit on shells ≤ b_max, evaluated at b_max.
    StretchedAtBmax,
    /// α ≡ 1 single-shell estimate from the measured b_max shell.
    GaussianAtBmax,
}

impl SweepConfig {
    pub fn label(&self) -> String {
        match self {
            SweepConfig::StretchedFixed { b_eval } => format!("stretched@{b_eval}"),
            SweepConfig::StretchedAtBmax => "stretched@bmax".into(),
            SweepConfig::GaussianAtBmax => "gaussian@bmax".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub b_max: Vec<f64>,
    pub configs: Vec<String>,
    pub measures: Vec<String>,
    /// How consecutive configurations are paired.
    pub pairing: String,
    /// `[config][measure][k]`: mean over voxels of |map(b_max[k+1]) − map(b_max[k])|.
    pub mean_abs_change: Vec<Vec<Vec<f64>>>,
    /// The same change divided by the mean |map(b_max[k])|.
    pub relative_change: Vec<Vec<Vec<f64>>>,
    /// `[config][measure][k]`: mean map value at b_max[k].
    pub mean_value: Vec<Vec<Vec<f64>>>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,measure,b_max_from,b_max_to,mean_abs_change,relative_change\n");
        for (c, name) in self.configs.iter().enumerate() {
            for (m, measure) in self.measures.iter().enumerate() {
                for k in 0..self.mean_abs_change[c][m].len() {
                    out.push_str(&format!(
                        "{name},{measure},{},{},{},{}\n",
                        self.b_max[k],
                        self.b_max[k + 1],
                        self.mean_abs_change[c][m][k],
                        self.relative_change[c][m][k]
                    ));
                }
            }
        }
        out
    }
}

fn mean_finite(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Refit with shells up to each b_max and report how much each configuration's
/// maps move between consecutive b_max values.
#[allow(clippy::too_many_arguments)]
pub fn bmax_sweep(
    data: &Volume4D,
    scheme: &GradientScheme,
    grouping: &ShellGrouping,
    bundles: &DirectionBundleSet,
    b_max_list: &[f64],
    configs: &[SweepConfig],
    mask: Option<&[bool]>,
    options: &FitOptions,
    exec: Execution,
) -> Result<SweepResult> {
    if data.n_volumes() != scheme.n_measurements() {
        return Err(Error::Input(format!(
            "data has {} volumes, gradient table has {} entries",
            data.n_volumes(),
            scheme.n_measurements()
        )));
    }
    let measures: Vec<String> = QMaps::MEASURES.iter().map(|s| s.to_string()).collect();
    // maps[config][b_max index]
    let mut maps: Vec<Vec<QMaps>> = vec![Vec::new(); configs.len()];
    for &b_max in b_max_list {
        let shells = grouping.shells_up_to(b_max);
        if shells.len() < 2 {
            return Err(Error::Underdetermined(format!(
                "b_max = {b_max} leaves {} shell(s); the stretched fit needs 2",
                shells.len()
            )));
        }
        let top = *shells.last().unwrap();
        let top_b = grouping.shell_b_centers[top];
        let plan = StretchedFitPlan::new(scheme, grouping, bundles, &shells)?;
        let fits = fit_stretched_volume(data, &plan, scheme.tau, mask, options, exec)?;
        for (c, cfg) in configs.iter().enumerate() {
            let (estimator, shell_b, measured) = match cfg {
                SweepConfig::StretchedFixed { b_eval } => (MapEstimator::Direct, *b_eval, false),
                SweepConfig::StretchedAtBmax => (MapEstimator::Direct, top_b, false),
                SweepConfig::GaussianAtBmax => (MapEstimator::Gaussian, top_b, true),
            };
            let config = MapConfig { estimator, shell_b, eps_e: options.eps_e, ..Default::default() };
            let source = if measured {
                ESource::Measured { dwi: data, members: measured_members(&fits, bundles, grouping, shell_b)? }
            } else {
                ESource::Fitted
            };
            maps[c].push(compute_maps(&fits, grouping, &config, &source, mask, exec)?);
        }
    }

    let n_pairs = b_max_list.len().saturating_sub(1);
    let mut abs = vec![vec![vec![0.0; n_pairs]; measures.len()]; configs.len()];
    let mut rel = abs.clone();
    let mut mean_value = vec![vec![vec![0.0; b_max_list.len()]; measures.len()]; configs.len()];
    for c in 0..configs.len() {
        for (m, name) in measures.iter().enumerate() {
            let series: Vec<&[f64]> = maps[c].iter().map(|q| q.measure(name).expect("known measure")).collect();
            for (k, s) in series.iter().enumerate() {
                mean_value[c][m][k] = mean_finite(s.iter().copied());
            }
            for k in 0..n_pairs {
                let (prev, next) = (series[k], series[k + 1]);
                let change = mean_finite(prev.iter().zip(next).map(|(a, b)| (b - a).abs()));
                abs[c][m][k] = change;
                rel[c][m][k] = change / mean_finite(prev.iter().map(|a| a.abs()));
            }
        }
    }
    Ok(SweepResult {
        b_max: b_max_list.to_vec(),
        configs: configs.iter().map(SweepConfig::label).collect(),
        measures,
        pairing: "consecutive".into(),
        mean_abs_change: abs,
        relative_change: rel,
        mean_value,
    })
}
