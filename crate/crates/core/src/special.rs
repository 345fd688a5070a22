//! Gamma function helpers.
//!
//! The moment estimators need Γ((n+3)/(2α)), which overflows f64 for small α.
//! All estimator terms are therefore assembled from ln Γ and only
//! exponentiated at the end.

use crate::error::{Error, Result};

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Γ(x) for x > 0, failing when the result is not representable.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Range(format!("gamma argument must be positive, got {x}")));
    }
    // the Lanczos form overflows internally a little below the f64 limit
    let v = if x < 150.0 { statrs::function::gamma::gamma(x) } else { ln_gamma(x).exp() };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Range(format!("gamma({x}) overflows f64")))
    }
}

/// ln Σ exp(v_i), stable for large magnitudes.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// exp(v) or a range error naming `what`.
pub(crate) fn checked_exp(v: f64, what: &str) -> Result<f64> {
    let out = v.exp();
    if out.is_finite() && out > 0.0 {
        Ok(out)
    } else {
        Err(Error::Range(format!("{what}: exp({v:.6e}) is not representable")))
    }
}
