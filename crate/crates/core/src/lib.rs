//! Separation of two-sided show-through image mixtures.
//!
//! The pipeline: [`imagery`] and [`align`] prepare a co-registered mixture
//! pair, [`trainer`] fits a [`network`] separator by maximizing the entropy of
//! its CDF-squashed outputs, and [`metrics`] scores the extracted components
//! against known sources. [`mixsim`] produces synthetic sources and mixtures
//! with a known ground truth.

pub mod align;
pub mod config;
pub mod error;
pub mod imagery;
pub mod metrics;
pub mod mixsim;
pub mod network;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
pub use imagery::{ImageGray, PixelPairSet};
