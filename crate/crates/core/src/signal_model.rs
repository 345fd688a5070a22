//! Stretched-exponential signal attenuation E(b) = exp(−(b·D)^α).

use serde::{Deserialize, Serialize};

use crate::acquisition::b_from_q;
use crate::error::{Error, Result};

/// Attenuations are kept inside [ε, 1 − ε] before taking logarithms.
pub const DEFAULT_EPS_E: f64 = 1e-6;

/// Physically plausible diffusivity range [mm²/s] used as fit bounds.
pub const D_MIN: f64 = 1e-6;
pub const D_MAX: f64 = 1e-2;

/// Apparent diffusivity and stretching exponent along one direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StretchedParams {
    /// Apparent diffusivity [mm²/s].
    pub d: f64,
    /// Stretching exponent in (0, 1].
    pub alpha: f64,
}

impl StretchedParams {
    pub fn new(d: f64, alpha: f64) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Input(format!("diffusivity must be positive, got {d}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Input(format!("stretching exponent must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { d, alpha })
    }

    pub fn attenuation(&self, b: f64) -> f64 {
        predict_attenuation(self, b)
    }
}

/// E = exp(−(b·D)^α). Equals 1 at b = 0.
pub fn predict_attenuation(params: &StretchedParams, b: f64) -> f64 {
    if b == 0.0 {
        return 1.0;
    }
    (-(b * params.d).powf(params.alpha)).exp()
}

/// Attenuation clamped into [eps, 1 − eps].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClampedAttenuation {
    pub value: f64,
    pub clamped: bool,
}

/// Clamp an attenuation into the log-safe window. Non-finite and negative
/// values are rejected; 0 and values ≥ 1 − eps (noise can push E above 1)
/// are clamped.
pub fn clamp_attenuation(e: f64, eps: f64) -> Result<ClampedAttenuation> {
    if !e.is_finite() || e < 0.0 {
        return Err(Error::InvalidAttenuation(e));
    }
    let (lo, hi) = (eps, 1.0 - eps);
    if e < lo {
        Ok(ClampedAttenuation { value: lo, clamped: true })
    } else if e > hi {
        Ok(ClampedAttenuation { value: hi, clamped: true })
    } else {
        Ok(ClampedAttenuation { value: e, clamped: false })
    }
}

/// Invert the model for D at a known α: D = (−ln E)^{1/α} / (4π²τq²).
pub fn invert_diffusivity(e: f64, alpha: f64, q: f64, tau: f64, eps: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Input(format!("stretching exponent must lie in (0, 1], got {alpha}")));
    }
    if !(q > 0.0 && tau > 0.0) {
        return Err(Error::Input(format!("need q > 0 and tau > 0, got q = {q}, tau = {tau}")));
    }
    let e = clamp_attenuation(e, eps)?.value;
    let b = b_from_q(q, tau);
    Ok((-e.ln()).powf(1.0 / alpha) / b)
}
