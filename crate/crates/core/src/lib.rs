//! Hierarchical Bayesian estimation of time-varying diffusion speed across
//! country-product panels.
//!
//! The sampler combines a free-knot natural cubic spline for the common time
//! effect, spike-and-slab selection of country covariates, and random effects
//! for products and country-years. See the crate README for a tour.

// NaN must fail range checks, so `!(x > 0.0)` is intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod analytics;
pub mod bars;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod geweke;
pub mod io;
pub mod model;
pub mod par;
pub mod sampler;
pub mod selection;
pub mod simulate;
pub mod spline;
pub mod state;

pub use design::{Design, ModelVariant};
pub use error::{Error, Result};
pub use model::{HyperParams, PanelDataset, TimeAxisMode};

pub use sampler::{run_chain, run_chains, ChainOutput, SamplerConfig};
pub use spline::SplineState;
pub use state::ModelState;
