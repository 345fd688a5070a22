use serde::{Deserialize, Serialize};

use super::{gaussian_tensor_moments, moment_direct, moment_expansion, rtop_dti, MomentResult};
use crate::acquisition::{q_from_b, resample_shell_sh, DirectionBundleSet, ShResampling, ShellGrouping};
use crate::error::{Error, Result};
use crate::fitting::{StretchedFitVolume, TensorFit};
use crate::io::Volume4D;
use crate::par::{map_range, Execution};
use crate::signal_model::{predict_attenuation, DEFAULT_EPS_E};
use crate::sphere::SphereRule;

/// Prefactor convention for RTOP from tensor eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtiConvention {
    /// (3πτ)^{−3/2}(λ1λ2λ3)^{−1/2}
    ThreePi,
    /// (4πτ)^{−3/2}(λ1λ2λ3)^{−1/2}, the integral of the Gaussian signal.
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapEstimator {
    Direct,
    Expansion,
    /// Direct estimator with α ≡ 1: the single-shell Gaussian baseline.
    Gaussian,
}

impl MapEstimator {
    pub fn name(self) -> &'static str {
        match self {
            MapEstimator::Direct => "direct",
            MapEstimator::Expansion => "expansion",
            MapEstimator::Gaussian => "gaussian",
        }
    }
}

/// Where the shell attenuations come from.
#[derive(Clone, Debug)]
pub enum ESource<'a> {
    /// Predicted from each direction's fit at the evaluation shell.
    Fitted,
    /// Raw signals divided by the voxel's s0. `members[j]` is the measurement
    /// index of the j-th fitted direction on the evaluation shell.
    Measured { dwi: &'a Volume4D, members: Vec<Option<usize>> },
}

impl ESource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            ESource::Fitted => "fitted",
            ESource::Measured { .. } => "measured",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub estimator: MapEstimator,
    /// Evaluation shell [s/mm²].
    pub shell_b: f64,
    pub eps_e: f64,
    /// Resample each voxel's shell onto a uniform direction set first.
    pub resample: Option<ShResampling>,
    /// Size of the uniform set used when resampling.
    pub resample_points: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { estimator: MapEstimator::Direct, shell_b: 1000.0, eps_e: DEFAULT_EPS_E, resample: None, resample_points: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub estimator: String,
    pub e_source: Option<String>,
    pub shell_b: Option<f64>,
    /// Shells the underlying fit used.
    pub shell_subset: Vec<f64>,
    pub tau: f64,
    pub version: String,
    /// Masked voxels left as NaN because no estimate could be formed.
    pub n_failed: usize,
}

/// RTOP, QMSD and QMFD volumes. NaN outside the mask and where estimation failed.
#[derive(Clone, Debug, PartialEq)]
pub struct QMaps {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub affine: [[f64; 4]; 4],
    pub rtop: Vec<f64>,
    pub qmsd: Vec<f64>,
    pub qmfd: Vec<f64>,
    pub metadata: MapMetadata,
}

impl QMaps {
    pub const MEASURES: [&'static str; 3] = ["rtop", "qmsd", "qmfd"];

    pub fn measure(&self, name: &str) -> Option<&[f64]> {
        match name {
            "rtop" => Some(&self.rtop),
            "qmsd" => Some(&self.qmsd),
            "qmfd" => Some(&self.qmfd),
            _ => None,
        }
    }

    pub fn to_volume(&self, name: &str) -> Result<Volume4D> {
        let data = self.measure(name).ok_or_else(|| Error::Input(format!("unknown measure {name}")))?;
        let [nx, ny, nz] = self.dims;
        let mut v = Volume4D::new([nx, ny, nz, 1], self.voxel_size, data.to_vec())?;
        v.affine = self.affine;
        Ok(v)
    }
}

/// Measurement index on shell `shell_b` for each fitted direction.
pub fn measured_members(
    fits: &StretchedFitVolume,
    bundles: &DirectionBundleSet,
    grouping: &ShellGrouping,
    shell_b: f64,
) -> Result<Vec<Option<usize>>> {
    let s = grouping
        .shell_index(shell_b)
        .ok_or_else(|| Error::Input(format!("shell b = {shell_b} is not part of the acquisition")))?;
    fits.directions
        .iter()
        .map(|(k, _)| {
            bundles
                .bundles
                .get(*k)
                .map(|b| b.members[s])
                .ok_or_else(|| Error::Input(format!("fit refers to bundle {k}, which the acquisition lacks")))
        })
        .collect()
}

fn check_mask(mask: Option<&[bool]>, n: usize) -> Result<()> {
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::Input(format!("mask has {} voxels, maps have {n}", m.len())));
        }
        if !m.iter().any(|&b| b) {
            return Err(Error::Input("mask is empty".into()));
        }
    }
    Ok(())
}

fn voxel_moments(
    e: &[f64],
    alpha: &[f64],
    q: f64,
    config: &MapConfig,
    uniform: Option<&SphereRule>,
    dirs: &[nalgebra::Vector3<f64>],
) -> Result<[f64; 3]> {
    let (e, alpha) = match (config.resample, uniform) {
        (Some(sh), Some(rule)) => {
            let e2 = resample_shell_sh(e, dirs, &rule.points, sh.order, sh.lambda)?;
            let a2 = if config.estimator == MapEstimator::Gaussian {
                vec![1.0; rule.len()]
            } else {
                resample_shell_sh(alpha, dirs, &rule.points, sh.order, sh.lambda)?
                    .into_iter()
                    .map(|a| a.clamp(1e-2, 1.0))
                    .collect()
            };
            (e2, a2)
        }
        _ => (e.to_vec(), alpha.to_vec()),
    };
    let f: fn(&[f64], &[f64], f64, u32, f64) -> Result<MomentResult> = match config.estimator {
        MapEstimator::Direct | MapEstimator::Gaussian => moment_direct,
        MapEstimator::Expansion => moment_expansion,
    };
    Ok([
        f(&e, &alpha, q, 0, config.eps_e)?.value,
        f(&e, &alpha, q, 2, config.eps_e)?.value,
        f(&e, &alpha, q, 4, config.eps_e)?.value,
    ])
}

/// Measure maps from per-direction fits evaluated on one shell.
///
/// Unconverged directions are left out of the direction averages. A masked
/// voxel with no usable direction, or whose estimate fails, is NaN and counted
/// in `metadata.n_failed`.
pub fn compute_maps(
    fits: &StretchedFitVolume,
    grouping: &ShellGrouping,
    config: &MapConfig,
    source: &ESource,
    mask: Option<&[bool]>,
    exec: Execution,
) -> Result<QMaps> {
    let n = fits.n_voxels();
    check_mask(mask, n)?;
    if grouping.shell_index(config.shell_b).is_none() {
        return Err(Error::Input(format!(
            "shell b = {} is not part of the acquisition (shells: {:?})",
            config.shell_b, grouping.shell_b_centers
        )));
    }
    if let ESource::Measured { dwi, members } = source {
        if dwi.spatial_dims() != fits.dims {
            return Err(Error::Input(format!("dwi dims {:?} differ from fit dims {:?}", dwi.spatial_dims(), fits.dims)));
        }
        if members.len() != fits.directions.len() {
            return Err(Error::Input("measured members do not match the fitted directions".into()));
        }
    }
    let inside = |i: usize| mask.map_or(true, |m| m[i]);
    if !(0..n).any(|i| inside(i) && fits.voxels[i].is_some()) {
        return Err(Error::Input("mask is empty: no fitted voxel inside it".into()));
    }

    let b = config.shell_b;
    let q = q_from_b(b, fits.tau);
    let uniform = config.resample.map(|_| SphereRule::fibonacci(config.resample_points));
    let per_voxel = map_range(exec, n, |i| -> Option<[f64; 3]> {
        if !inside(i) {
            return None;
        }
        let voxel = fits.voxels[i].as_ref()?;
        let mut e = Vec::with_capacity(voxel.fits.len());
        let mut alpha = Vec::with_capacity(voxel.fits.len());
        let mut dirs = Vec::with_capacity(voxel.fits.len());
        for (j, f) in voxel.fits.iter().enumerate() {
            if !f.converged {
                continue;
            }
            let ej = match source {
                ESource::Fitted => predict_attenuation(&f.params, b),
                ESource::Measured { dwi, members } => match members[j] {
                    Some(m) => dwi.data[i + m * n] / voxel.s0,
                    None => continue,
                },
            };
            e.push(ej);
            alpha.push(if config.estimator == MapEstimator::Gaussian { 1.0 } else { f.params.alpha });
            dirs.push(f.direction);
        }
        if e.is_empty() {
            return None;
        }
        match voxel_moments(&e, &alpha, q, config, uniform.as_ref(), &dirs) {
            Ok(m) => Some(m),
            Err(err) => {
                log::debug!("voxel {:?}: {err}", voxel.voxel_index);
                None
            }
        }
    });

    let mut maps = empty_maps(fits.dims, fits.voxel_size, fits.affine);
    let mut n_failed = 0;
    for (i, m) in per_voxel.into_iter().enumerate() {
        match m {
            Some([m0, m2, m4]) => {
                maps.rtop[i] = m0;
                maps.qmsd[i] = m2;
                maps.qmfd[i] = m4;
            }
            None if inside(i) => n_failed += 1,
            None => {}
        }
    }
    if n_failed > 0 {
        log::warn!("{n_failed} masked voxel(s) without an estimate");
    }
    maps.metadata = MapMetadata {
        estimator: config.estimator.name().to_string(),
        e_source: Some(source.name().to_string()),
        shell_b: Some(b),
        shell_subset: fits.shell_b.clone(),
        tau: fits.tau,
        version: crate::VERSION.to_string(),
        n_failed,
    };
    Ok(maps)
}

fn empty_maps(dims: [usize; 3], voxel_size: [f64; 3], affine: [[f64; 4]; 4]) -> QMaps {
    let n = dims.iter().product();
    QMaps {
        dims,
        voxel_size,
        affine,
        rtop: vec![f64::NAN; n],
        qmsd: vec![f64::NAN; n],
        qmfd: vec![f64::NAN; n],
        metadata: MapMetadata {
            estimator: String::new(),
            e_source: None,
            shell_b: None,
            shell_subset: Vec::new(),
            tau: 0.0,
            version: crate::VERSION.to_string(),
            n_failed: 0,
        },
    }
}

/// Maps from tensor fits. RTOP follows `convention`; QMSD and QMFD are the
/// moments of the Gaussian propagator of the (floored) tensor.
#[allow(clippy::too_many_arguments)]
pub fn compute_dti_maps(
    tensors: &[Option<TensorFit>],
    dims: [usize; 3],
    voxel_size: [f64; 3],
    affine: [[f64; 4]; 4],
    tau: f64,
    shell_subset: &[f64],
    convention: DtiConvention,
    mask: Option<&[bool]>,
) -> Result<QMaps> {
    let n: usize = dims.iter().product();
    if tensors.len() != n {
        return Err(Error::Input(format!("{} tensor fits for {n} voxels", tensors.len())));
    }
    check_mask(mask, n)?;
    let mut maps = empty_maps(dims, voxel_size, affine);
    let mut n_failed = 0;
    for (i, t) in tensors.iter().enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let Some(t) = t else {
            n_failed += 1;
            continue;
        };
        match (rtop_dti(&t.eigenvalues, tau, convention), gaussian_tensor_moments(&t.eigenvalues, tau)) {
            (Ok(r), Ok((_, m2, m4))) => {
                maps.rtop[i] = r;
                maps.qmsd[i] = m2;
                maps.qmfd[i] = m4;
            }
            _ => n_failed += 1,
        }
    }
    maps.metadata = MapMetadata {
        estimator: match convention {
            DtiConvention::ThreePi => "dti-3pi".into(),
            DtiConvention::Gaussian => "dti-gaussian".into(),
        },
        e_source: None,
        shell_b: None,
        shell_subset: shell_subset.to_vec(),
        tau,
        version: crate::VERSION.to_string(),
        n_failed,
    };
    Ok(maps)
}
