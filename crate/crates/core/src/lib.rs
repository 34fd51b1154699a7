//! Tactile localization with a learned histogram Bayes filter.

pub mod datagen;
pub mod error;
pub mod evalharness;
pub mod filter;
pub mod models;
pub mod seeds;
pub mod simworld;
pub mod training;

pub use error::{Error, Result};
