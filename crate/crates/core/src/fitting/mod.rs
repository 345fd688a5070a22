//! Per-direction stretched-exponential fitting and a diffusion tensor baseline.

mod dti;
pub mod solver;
mod stretched;
mod volume;

pub use dti::{fit_dti, sorted_eigenvalues, tensor_from_components, TensorFit, LAMBDA_FLOOR};
pub use stretched::{
    fit_stretched_direction, fit_stretched_voxel, init_stretched, DirectionFit, FitBounds, FitOptions, InitGuess,
    StretchedFitPlan, StretchedVoxelFit,
};
pub use volume::{fit_stretched_volume, StretchedFitVolume};
