use nalgebra::Vector3;

use super::stretched::{FitOptions, StretchedFitPlan, StretchedVoxelFit};
use crate::error::{Error, Result};
use crate::io::Volume4D;
use crate::par::{map_range, Execution};

/// Per-direction fits for every voxel of a volume.
#[derive(Clone, Debug, PartialEq)]
pub struct StretchedFitVolume {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub affine: [[f64; 4]; 4],
    pub tau: f64,
    /// Shell centers the fits were computed from.
    pub shell_b: Vec<f64>,
    /// (bundle index, canonical direction), in the order of each voxel's fits.
    pub directions: Vec<(usize, Vector3<f64>)>,
    /// `None` outside the mask or where the baseline was unusable.
    pub voxels: Vec<Option<StretchedVoxelFit>>,
}

impl StretchedFitVolume {
    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    /// Voxels that carry a fit.
    pub fn n_fitted(&self) -> usize {
        self.voxels.iter().filter(|v| v.is_some()).count()
    }
}

/// Fit every masked voxel with `plan`.
///
/// Voxels whose baseline is unusable are left empty and logged; results are
/// independent of how the work is scheduled.
pub fn fit_stretched_volume(
    vol: &Volume4D,
    plan: &StretchedFitPlan,
    tau: f64,
    mask: Option<&[bool]>,
    options: &FitOptions,
    exec: Execution,
) -> Result<StretchedFitVolume> {
    let n = vol.n_voxels();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::Input(format!("mask has {} voxels, volume has {n}", m.len())));
        }
    }
    let voxels = map_range(exec, n, |i| {
        if mask.is_some_and(|m| !m[i]) {
            return None;
        }
        let signals = vol.voxel_series(i);
        match plan.fit_voxel(&signals, None, options, vol.voxel_coords(i)) {
            Ok(fit) => Some(fit),
            Err(e) => {
                log::debug!("voxel {:?} skipped: {e}", vol.voxel_coords(i));
                None
            }
        }
    });
    let skipped = (0..n).filter(|&i| mask.map_or(true, |m| m[i]) && voxels[i].is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} voxel(s) inside the mask had no usable baseline and were skipped");
    }
    Ok(StretchedFitVolume {
        dims: vol.spatial_dims(),
        voxel_size: vol.voxel_size,
        affine: vol.affine,
        tau,
        shell_b: plan.shell_b().to_vec(),
        directions: plan.directions(),
        voxels,
    })
}
