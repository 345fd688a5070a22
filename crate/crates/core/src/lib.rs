//! Stretched-exponential diffusion MRI fitting and q-space scalar measures.
//!
//! The signal along each gradient direction g is modelled as
//! E = exp(−(b·D(g))^α(g)). Per-direction fits feed closed-form radial
//! integrals that give the return-to-origin probability (RTOP) and the
//! q-space mean square and fourth-order displacements (QMSD, QMFD).
//!
//! Typical flow:
//!
//! 1. [`acquisition::parse_gradient_scheme`], [`acquisition::group_shells`],
//!    [`acquisition::match_directions`]
//! 2. [`fitting::StretchedFitPlan`] and [`fitting::fit_stretched_volume`]
//! 3. [`measures::compute_maps`]
//!
//! [`oracle`] and [`phantom`] provide independent checks and synthetic data.

pub mod acquisition;
pub mod analysis;
pub mod error;
pub mod fitting;
pub mod io;
pub mod measures;
pub mod oracle;
pub mod par;
pub mod phantom;
pub mod signal_model;
pub mod special;
pub mod sphere;

pub use error::{Error, ErrorKind, Result};
pub use par::Execution;

/// Library version, recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
