//! Attention-modulated traffic-accident anticipation on synthetic dashcam-like
//! episodes: a foveated observation environment, a stochastic multi-task agent,
//! a soft actor-critic trainer, and the matching evaluation toolkit.

pub mod agent;
pub mod config;
pub mod error;
pub mod evalkit;
pub mod percept;
pub mod reward;
pub mod rng;
pub mod substrate;
pub mod synthdata;
pub mod trainer;

pub use error::{DriveError, Result};
