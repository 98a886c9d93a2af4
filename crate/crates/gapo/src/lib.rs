//! Desk-scale laboratory for gap-aware preference optimization of a tiny
//! conditional video diffusion model.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod gvid;
pub mod losses;
pub mod pairs;
pub mod reward;
pub mod rng;
pub mod scenes;
pub mod trainer;
pub mod video;

pub use error::{Error, Result};
