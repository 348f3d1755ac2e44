//! Optical + map-layer fusion for semantic labeling of aerial imagery:
//! rasters, synthetic scenes, models, training, tiled inference, metrics
//! and experiment drivers.

pub mod dataset;
pub mod encoding;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod metrics;
pub mod models;
pub mod rasters;
pub mod scenegen;
pub mod training;

pub use error::{Error, Result};
