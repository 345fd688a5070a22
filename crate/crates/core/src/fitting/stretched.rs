use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::solver::{minimize, LeastSquaresProblem, StopCriteria};
use crate::acquisition::{q_from_b, DirectionBundleSet, GradientScheme, ShellGrouping};
use crate::error::{Error, Result};
use crate::signal_model::{invert_diffusivity, StretchedParams, DEFAULT_EPS_E, D_MAX, D_MIN};

/// Internal scale so both fit variables are O(1).
const D_SCALE: f64 = 1e-3;

const INIT_ALPHA_RANGE: (f64, f64) = (0.3, 1.0);
const FALLBACK: StretchedParams = StretchedParams { d: 0.7e-3, alpha: 0.8 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub d: (f64, f64),
    pub alpha: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        // (0, 1] is open at zero; Γ((n+3)/(2α)) is meaningless below ~1e-2 anyway.
        Self { d: (D_MIN, D_MAX), alpha: (1e-2, 1.0) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub bounds: FitBounds,
    pub stop: StopCriteria,
    pub eps_e: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { bounds: FitBounds::default(), stop: StopCriteria::default(), eps_e: DEFAULT_EPS_E }
    }
}

/// Stretched-exponential fit along one gradient direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionFit {
    pub direction: Vector3<f64>,
    /// Index into the bundle set the samples came from.
    pub bundle: usize,
    pub params: StretchedParams,
    /// Sum of squared residuals in signal units².
    pub rss: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// `[D, α]` sitting on a bound.
    pub at_bound: [bool; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StretchedVoxelFit {
    pub fits: Vec<DirectionFit>,
    pub s0: f64,
    pub voxel_index: [usize; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitGuess {
    pub params: StretchedParams,
    /// Fallback values were used because the data could not support a log-log slope.
    pub degraded: bool,
}

/// Samples with b > 0 whose attenuation lies strictly inside the clamp window.
fn usable(samples: &[(f64, f64)], s0: f64, eps: f64) -> Vec<(f64, f64)> {
    samples
        .iter()
        .filter(|(b, s)| *b > 0.0 && s.is_finite())
        .map(|&(b, s)| (b, s / s0))
        .filter(|&(_, e)| e >= eps && e <= 1.0 - eps)
        .collect()
}

fn mean_attenuation_at(samples: &[(f64, f64)], b: f64) -> f64 {
    let at: Vec<f64> = samples.iter().filter(|(bb, _)| *bb == b).map(|(_, e)| *e).collect();
    at.iter().sum::<f64>() / at.len() as f64
}

/// Starting point from the log-log slope of −ln E against b between the
/// lowest and highest usable b-values; the slope equals α for noiseless data.
pub fn init_stretched(samples: &[(f64, f64)], s0: f64) -> InitGuess {
    let fallback = InitGuess { params: FALLBACK, degraded: true };
    if !(s0 > 0.0) {
        return fallback;
    }
    let ok = usable(samples, s0, DEFAULT_EPS_E);
    let b_lo = ok.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let b_hi = ok.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if ok.is_empty() || b_hi <= b_lo {
        return fallback;
    }
    let (e_lo, e_hi) = (mean_attenuation_at(&ok, b_lo), mean_attenuation_at(&ok, b_hi));
    let slope = ((-e_hi.ln()).ln() - (-e_lo.ln()).ln()) / (b_hi.ln() - b_lo.ln());
    if !slope.is_finite() {
        return fallback;
    }
    let alpha = slope.clamp(INIT_ALPHA_RANGE.0, INIT_ALPHA_RANGE.1);
    // D from the lowest shell; tau cancels, so any positive value will do.
    let d = match invert_diffusivity(e_lo, alpha, q_from_b(b_lo, 1.0), 1.0, DEFAULT_EPS_E) {
        Ok(d) if d.is_finite() => d,
        _ => return fallback,
    };
    InitGuess { params: StretchedParams { d: d.clamp(D_MIN, D_MAX), alpha }, degraded: false }
}

struct StretchedProblem<'a> {
    samples: &'a [(f64, f64)],
}

impl StretchedProblem<'_> {
    #[inline]
    fn parts(b: f64, x: &DVector<f64>) -> (f64, f64, f64) {
        let bd = b * x[0] * D_SCALE;
        let u = bd.powf(x[1]);
        (bd, u, (-u).exp())
    }
}

impl LeastSquaresProblem for StretchedProblem<'_> {
    fn n_params(&self) -> usize {
        2
    }
    fn n_residuals(&self) -> usize {
        self.samples.len()
    }
    fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for (i, &(b, e)) in self.samples.iter().enumerate() {
            out[i] = e - Self::parts(b, x).2;
        }
    }
    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        for (i, &(b, _)) in self.samples.iter().enumerate() {
            let (bd, u, m) = Self::parts(b, x);
            out[(i, 0)] = m * x[1] * u / x[0];
            out[(i, 1)] = m * u * bd.ln();
        }
    }
}

/// Fit (D, α) to `(b, S)` samples along one direction, minimizing
/// ½Σ[S − s0·exp(−(bD)^α)]² within the bounds.
///
/// Only samples whose attenuation survives the clamp window take part.
pub fn fit_stretched_direction(samples: &[(f64, f64)], s0: f64, options: &FitOptions) -> Result<DirectionFit> {
    if !(s0.is_finite() && s0 > 0.0) {
        return Err(Error::Baseline(format!("s0 must be positive, got {s0}")));
    }
    if samples.iter().any(|(b, s)| !b.is_finite() || !s.is_finite()) {
        return Err(Error::Input("non-finite sample".into()));
    }
    let ok = usable(samples, s0, options.eps_e);
    let mut distinct: Vec<f64> = ok.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Underdetermined(format!(
            "{} usable samples at {} distinct b-values; need 2",
            ok.len(),
            distinct.len()
        )));
    }

    let init = init_stretched(&ok.iter().map(|&(b, e)| (b, e)).collect::<Vec<_>>(), 1.0);
    let bounds = &options.bounds;
    let lo = [bounds.d.0 / D_SCALE, bounds.alpha.0];
    let hi = [bounds.d.1 / D_SCALE, bounds.alpha.1];
    let x0 = DVector::from_vec(vec![init.params.d / D_SCALE, init.params.alpha]);
    let sol = minimize(&StretchedProblem { samples: &ok }, x0, &lo, &hi, &options.stop);

    Ok(DirectionFit {
        direction: Vector3::zeros(),
        bundle: 0,
        params: StretchedParams { d: sol.x[0] * D_SCALE, alpha: sol.x[1] },
        rss: 2.0 * sol.cost * s0 * s0,
        n_iter: sol.n_iter,
        converged: sol.converged(),
        at_bound: [sol.at_lower[0] || sol.at_upper[0], sol.at_lower[1] || sol.at_upper[1]],
    })
}

/// Precomputed sample layout for fitting every voxel of one acquisition.
#[derive(Clone, Debug)]
pub struct StretchedFitPlan {
    /// (bundle index, canonical direction, [(measurement, b)])
    bundles: Vec<(usize, Vector3<f64>, Vec<(usize, f64)>)>,
    b0_indices: Vec<usize>,
    shell_b: Vec<f64>,
}

impl StretchedFitPlan {
    /// Use the bundles complete over `shell_subset` (indices into the grouping).
    pub fn new(
        scheme: &GradientScheme,
        grouping: &ShellGrouping,
        bundles: &DirectionBundleSet,
        shell_subset: &[usize],
    ) -> Result<Self> {
        if let Some(&bad) = shell_subset.iter().find(|&&s| s >= grouping.n_shells()) {
            return Err(Error::Input(format!("shell index {bad} out of range")));
        }
        let complete = bundles.complete_over(shell_subset);
        if complete.is_empty() {
            return Err(Error::Underdetermined(
                "no gradient direction is present on every selected shell".into(),
            ));
        }
        let plan = complete
            .into_iter()
            .map(|k| {
                let bundle = &bundles.bundles[k];
                let samples = shell_subset
                    .iter()
                    .map(|&s| {
                        let m = bundle.members[s].expect("bundle complete over subset");
                        (m, scheme.bvals[m])
                    })
                    .collect();
                (k, bundle.direction, samples)
            })
            .collect();
        Ok(Self {
            bundles: plan,
            b0_indices: grouping.b0_indices.clone(),
            shell_b: shell_subset.iter().map(|&s| grouping.shell_b_centers[s]).collect(),
        })
    }

    pub fn n_directions(&self) -> usize {
        self.bundles.len()
    }

    /// Shell centers used by the plan.
    pub fn shell_b(&self) -> &[f64] {
        &self.shell_b
    }

    pub fn directions(&self) -> Vec<(usize, Vector3<f64>)> {
        self.bundles.iter().map(|(k, d, _)| (*k, *d)).collect()
    }

    /// Mean of the b0 signals of one voxel.
    pub fn baseline(&self, signals: &[f64]) -> Option<f64> {
        if self.b0_indices.is_empty() {
            return None;
        }
        Some(self.b0_indices.iter().map(|&i| signals[i]).sum::<f64>() / self.b0_indices.len() as f64)
    }

    /// Fit every direction of one voxel. Directions that cannot be fitted are
    /// kept with `converged = false` instead of failing the voxel.
    pub fn fit_voxel(
        &self,
        signals: &[f64],
        s0: Option<f64>,
        options: &FitOptions,
        voxel_index: [usize; 3],
    ) -> Result<StretchedVoxelFit> {
        let s0 = match s0.or_else(|| self.baseline(signals)) {
            Some(v) if v.is_finite() && v > 0.0 => v,
            Some(v) => return Err(Error::Baseline(format!("baseline signal {v} is not positive"))),
            None => return Err(Error::Baseline("no b0 measurement and no explicit s0".into())),
        };
        let fits = self
            .bundles
            .iter()
            .map(|(k, dir, idx)| {
                let samples: Vec<(f64, f64)> = idx.iter().map(|&(m, b)| (b, signals[m])).collect();
                let mut fit = fit_stretched_direction(&samples, s0, options).unwrap_or_else(|e| {
                    log::debug!("voxel {voxel_index:?} bundle {k}: {e}");
                    DirectionFit {
                        direction: Vector3::zeros(),
                        bundle: 0,
                        params: FALLBACK,
                        rss: f64::INFINITY,
                        n_iter: 0,
                        converged: false,
                        at_bound: [false, false],
                    }
                });
                fit.direction = *dir;
                fit.bundle = *k;
                fit
            })
            .collect();
        Ok(StretchedVoxelFit { fits, s0, voxel_index })
    }
}

/// Fit one voxel: build a plan for `shell_subset` and fit every complete bundle.
pub fn fit_stretched_voxel(
    voxel_signals: &[f64],
    scheme: &GradientScheme,
    grouping: &ShellGrouping,
    bundles: &DirectionBundleSet,
    shell_subset: &[usize],
    s0: Option<f64>,
    options: &FitOptions,
) -> Result<StretchedVoxelFit> {
    if voxel_signals.len() != scheme.n_measurements() {
        return Err(Error::Input(format!(
            "voxel has {} signals, scheme has {} measurements",
            voxel_signals.len(),
            scheme.n_measurements()
        )));
    }
    StretchedFitPlan::new(scheme, grouping, bundles, shell_subset)?.fit_voxel(voxel_signals, s0, options, [0, 0, 0])
}
