pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod likelihoods;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rank_selection;
pub mod rng;
pub mod simulation;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
