use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{GradientScheme, ShellGrouping};

pub const DEFAULT_ANGULAR_TOL_DEG: f64 = 1.0;

/// One gradient direction tracked across shells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionBundle {
    pub direction: Vector3<f64>,
    /// Measurement index on each shell, `None` where the direction was not acquired.
    pub members: Vec<Option<usize>>,
}

impl DirectionBundle {
    pub fn is_complete(&self) -> bool {
        self.members.iter().all(Option::is_some)
    }

    pub fn is_complete_over(&self, shells: &[usize]) -> bool {
        shells.iter().all(|&s| self.members[s].is_some())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionBundleSet {
    pub bundles: Vec<DirectionBundle>,
    /// Bundles present on every shell.
    pub n_complete: usize,
}

impl DirectionBundleSet {
    pub fn complete_over(&self, shells: &[usize]) -> Vec<usize> {
        (0..self.bundles.len()).filter(|&i| self.bundles[i].is_complete_over(shells)).collect()
    }
}

/// Angle in degrees between two axes, ignoring sign.
fn axis_angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.dot(b).abs().min(1.0).acos().to_degrees()
}

/// Match gradient directions across shells.
///
/// Bundles are seeded from the first shell. Each later shell's directions are
/// matched greedily, in measurement order, to the closest unclaimed bundle
/// within `angular_tol_deg` (antipodes count as the same axis); unmatched
/// directions open new, incomplete bundles.
pub fn match_directions(scheme: &GradientScheme, grouping: &ShellGrouping, angular_tol_deg: f64) -> DirectionBundleSet {
    let n_shells = grouping.n_shells();
    let mut bundles: Vec<DirectionBundle> = Vec::new();

    for (s, members) in grouping.shell_members.iter().enumerate() {
        let mut claimed = vec![false; bundles.len()];
        for &idx in members {
            let d = scheme.directions[idx];
            let best = bundles
                .iter()
                .enumerate()
                .filter(|(k, _)| !claimed[*k])
                .map(|(k, b)| (k, axis_angle_deg(&d, &b.direction)))
                .filter(|(_, angle)| *angle <= angular_tol_deg)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((k, _)) => {
                    claimed[k] = true;
                    bundles[k].members[s] = Some(idx);
                }
                None => {
                    let mut members = vec![None; n_shells];
                    members[s] = Some(idx);
                    bundles.push(DirectionBundle { direction: d, members });
                    claimed.push(true);
                }
            }
        }
    }
    let n_complete = bundles.iter().filter(|b| b.is_complete()).count();
    DirectionBundleSet { bundles, n_complete }
}
