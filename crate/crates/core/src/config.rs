use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Engine-wide tunables shared by patch extraction, detection and correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Side length of the square classifier window, in pixels.
    pub patch_size: usize,
    /// Radius used to thicken a boundary into the border-mask channel.
    pub border_dilation: usize,
    /// Radius by which a segment is grown before generating split hypotheses.
    pub merge_dilation: usize,
    /// Watershed seed pairs drawn per segment.
    pub n_merge_candidates: usize,
    pub max_patches_per_boundary: usize,
    /// Acceptance threshold for automatic decisions and merge-candidate filtering.
    pub p_t: f64,
    /// Segments smaller than this are never considered for merge correction.
    pub min_segment_area: usize,
    /// A split hypothesis is kept only if each side holds at least this
    /// fraction of the segment once clipped back to it.
    pub min_side_fraction: f64,
    pub rng_seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            patch_size: 75,
            border_dilation: 5,
            merge_dilation: 20,
            n_merge_candidates: 50,
            max_patches_per_boundary: 10,
            p_t: 0.95,
            min_segment_area: 200,
            min_side_fraction: 0.1,
            rng_seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn with_seed(rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 3 || self.patch_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "patch_size must be odd and >= 3, got {}",
                self.patch_size
            )));
        }
        if !(self.p_t > 0.0 && self.p_t < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "p_t must lie strictly between 0 and 1, got {}",
                self.p_t
            )));
        }
        if self.n_merge_candidates == 0 {
            return Err(Error::InvalidConfig(
                "n_merge_candidates must be >= 1".into(),
            ));
        }
        if self.max_patches_per_boundary == 0 {
            return Err(Error::InvalidConfig(
                "max_patches_per_boundary must be >= 1".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.min_side_fraction) {
            return Err(Error::InvalidConfig(format!(
                "min_side_fraction must lie in [0, 0.5), got {}",
                self.min_side_fraction
            )));
        }
        Ok(())
    }
}
