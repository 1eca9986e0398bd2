//! Detection and correction of split and merge errors in 2D cell
//! segmentations.
//!
//! The engine scores boundaries between adjacent segments with a small
//! convolutional classifier, proposes watershed splits inside segments, and
//! walks the ranked candidates with an oracle, a fixed threshold, or a human
//! making forced choices.

pub mod cnn;
pub mod config;
pub mod correct;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod grid;
pub mod imageops;
pub mod metrics;
pub mod patches;
pub mod synth;

pub use config::EngineConfig;
pub use dataset::{load_dataset, save_labels, Dataset, Section, SectionGeometry};
pub use error::{Error, Result};
pub use grid::{BinaryMask, FloatMap, Grid, LabelId, LabelMap, Pixel};
