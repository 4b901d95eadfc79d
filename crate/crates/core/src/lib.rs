//! Adaptive quantile sparse image (AQuaSI) prior for inverse imaging.
//!
//! The prior penalizes `||f - Q_{p,w}(f)||_1`, the L1 norm of the residual
//! between an image and its guidance-weighted p-quantile filtered version.
//! The filter is linearized into a one-hot selection operator so the prior
//! plugs into gradient descent and ADMM. The crate also provides the
//! comparison regularizers (anisotropic TV, RED), seeded degradation models,
//! and quality metrics.

pub mod degradation;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod quantile;
pub mod regularizers;
pub mod solvers;

pub use error::{Error, Result};
pub use image::{channel_average, ChannelWeights, Image, MultiChannelImage, Window};
pub use quantile::{
    apply_filter, build_selection, guidance_weight, weighted_quantile, Guidance, QuantileConfig,
    SelectionOperator,
};
pub use solvers::{
    solve_admm, solve_gd, solve_multichannel, solve_red, DataTerm, EnergyTrace, Solution, SolverConfig,
};
