use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::solver::{minimize, LeastSquaresProblem, StopCriteria};
use crate::acquisition::{GradientScheme, ShellGrouping};
use crate::error::{Error, Result};

/// Eigenvalues are floored here [mm²/s].
pub const LAMBDA_FLOOR: f64 = 1e-6;

const D_SCALE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorFit {
    /// (Dxx, Dyy, Dzz, Dxy, Dxz, Dyz) [mm²/s]
    pub components: [f64; 6],
    /// λ1 ≥ λ2 ≥ λ3, floored at [`LAMBDA_FLOOR`].
    pub eigenvalues: [f64; 3],
    pub converged: bool,
}

impl TensorFit {
    pub fn tensor(&self) -> Matrix3<f64> {
        tensor_from_components(&self.components)
    }
}

pub fn tensor_from_components(c: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(c[0], c[3], c[4], c[3], c[1], c[5], c[4], c[5], c[2])
}

/// Eigenvalues of a symmetric matrix in descending order.
pub fn sorted_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let mut ev: Vec<f64> = SymmetricEigen::new(*m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2]]
}

fn design_row(g: &Vector3<f64>, b: f64) -> [f64; 6] {
    [
        b * g.x * g.x,
        b * g.y * g.y,
        b * g.z * g.z,
        2.0 * b * g.x * g.y,
        2.0 * b * g.x * g.z,
        2.0 * b * g.y * g.z,
    ]
}

struct TensorProblem {
    rows: Vec<[f64; 6]>,
    /// Normalized signals S/s0.
    e: Vec<f64>,
}

impl LeastSquaresProblem for TensorProblem {
    fn n_params(&self) -> usize {
        6
    }
    fn n_residuals(&self) -> usize {
        self.rows.len()
    }
    fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for (i, row) in self.rows.iter().enumerate() {
            let arg: f64 = (0..6).map(|k| row[k] * x[k] * D_SCALE).sum();
            out[i] = self.e[i] - (-arg).exp();
        }
    }
    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        for (i, row) in self.rows.iter().enumerate() {
            let arg: f64 = (0..6).map(|k| row[k] * x[k] * D_SCALE).sum();
            let m = (-arg).exp();
            for k in 0..6 {
                out[(i, k)] = m * row[k] * D_SCALE;
            }
        }
    }
}

/// Diffusion tensor fit on the shells in `shell_subset`.
///
/// A weighted log-linear solution (weights S²) seeds a damped nonlinear
/// least-squares refinement of S = s0·exp(−b·gᵀDg).
pub fn fit_dti(
    voxel_signals: &[f64],
    scheme: &GradientScheme,
    grouping: &ShellGrouping,
    shell_subset: &[usize],
    s0: Option<f64>,
) -> Result<TensorFit> {
    let s0 = match s0 {
        Some(v) => v,
        None if !grouping.b0_indices.is_empty() => {
            grouping.b0_indices.iter().map(|&i| voxel_signals[i]).sum::<f64>() / grouping.b0_indices.len() as f64
        }
        None => return Err(Error::Baseline("no b0 measurement and no explicit s0".into())),
    };
    if !(s0.is_finite() && s0 > 0.0) {
        return Err(Error::Baseline(format!("baseline signal {s0} is not positive")));
    }

    let mut rows = Vec::new();
    let mut e = Vec::new();
    for &s in shell_subset {
        for &m in grouping
            .shell_members
            .get(s)
            .ok_or_else(|| Error::Input(format!("shell index {s} out of range")))?
        {
            let v = voxel_signals[m] / s0;
            if v.is_finite() && v > 0.0 {
                rows.push(design_row(&scheme.directions[m], scheme.bvals[m]));
                e.push(v);
            }
        }
    }
    if rows.len() < 6 {
        return Err(Error::RankDeficient(format!("{} usable measurements for 6 tensor components", rows.len())));
    }
    let a = DMatrix::from_fn(rows.len(), 6, |i, k| rows[i][k] * D_SCALE);
    let sv = a.clone().singular_values();
    if !(sv.min() > 1e-10 * sv.max()) {
        return Err(Error::RankDeficient(
            "gradient directions do not span the 6 tensor components".into(),
        ));
    }

    // weighted log-linear: minimize Σ e²(−ln e − a·x)²
    let w = DMatrix::from_fn(rows.len(), 6, |i, k| a[(i, k)] * e[i]);
    let y = DVector::from_fn(rows.len(), |i, _| -e[i].ln() * e[i]);
    let x0 = w
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|err| Error::RankDeficient(err.to_string()))?;

    let problem = TensorProblem { rows, e };
    let inf = [f64::INFINITY; 6];
    let neg = [f64::NEG_INFINITY; 6];
    let sol = minimize(&problem, x0, &neg, &inf, &StopCriteria::default());

    let c: [f64; 6] = std::array::from_fn(|k| sol.x[k] * D_SCALE);
    let ev = sorted_eigenvalues(&tensor_from_components(&c));
    Ok(TensorFit {
        components: c,
        eigenvalues: ev.map(|l| l.max(LAMBDA_FLOOR)),
        converged: sol.converged(),
    })
}
