use serde::{Deserialize, Serialize};

use super::GradientScheme;

/// Default shell clustering tolerance [s/mm²].
pub const DEFAULT_B_TOLERANCE: f64 = 25.0;

/// Partition of the measurements into b0 images and b-value shells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellGrouping {
    /// Mean b-value of each shell, strictly increasing.
    pub shell_b_centers: Vec<f64>,
    /// Measurement indices of each shell, ascending.
    pub shell_members: Vec<Vec<usize>>,
    pub b0_indices: Vec<usize>,
    pub b_tolerance: f64,
}

impl ShellGrouping {
    pub fn n_shells(&self) -> usize {
        self.shell_b_centers.len()
    }

    /// Index of the shell whose center is within tolerance of `b`.
    pub fn shell_index(&self, b: f64) -> Option<usize> {
        self.shell_b_centers
            .iter()
            .enumerate()
            .filter(|(_, c)| (*c - b).abs() <= self.b_tolerance)
            .min_by(|a, b2| (a.1 - b).abs().total_cmp(&(b2.1 - b).abs()))
            .map(|(i, _)| i)
    }

    /// Shells whose centers do not exceed `b_max` (with tolerance).
    pub fn shells_up_to(&self, b_max: f64) -> Vec<usize> {
        (0..self.n_shells())
            .filter(|&i| self.shell_b_centers[i] <= b_max + self.b_tolerance)
            .collect()
    }
}

/// Group measurements into shells by 1-D single linkage on b.
///
/// Measurements with b ≤ `b_tolerance` are b0 images. A gap larger than
/// `b_tolerance` between consecutive sorted b-values starts a new shell.
pub fn group_shells(scheme: &GradientScheme, b_tolerance: f64) -> ShellGrouping {
    let mut b0_indices = Vec::new();
    let mut weighted: Vec<(f64, usize)> = Vec::new();
    for (i, &b) in scheme.bvals.iter().enumerate() {
        if b <= b_tolerance {
            b0_indices.push(i);
        } else {
            weighted.push((b, i));
        }
    }
    weighted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut shell_members: Vec<Vec<usize>> = Vec::new();
    let mut last_b = f64::NEG_INFINITY;
    for (b, i) in weighted {
        if shell_members.is_empty() || b - last_b > b_tolerance {
            shell_members.push(Vec::new());
        }
        shell_members.last_mut().unwrap().push(i);
        last_b = b;
    }
    for m in &mut shell_members {
        m.sort_unstable();
    }
    let shell_b_centers = shell_members
        .iter()
        .map(|m| m.iter().map(|&i| scheme.bvals[i]).sum::<f64>() / m.len() as f64)
        .collect();

    ShellGrouping { shell_b_centers, shell_members, b0_indices, b_tolerance }
}
