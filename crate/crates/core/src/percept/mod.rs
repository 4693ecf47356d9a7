//! The traffic observation environment: foveation, bottom-up and top-down
//! saliency, dynamic attention fusion, and pooled state construction.

mod foveate;
mod observe;
mod saliency;

pub use foveate::{foveate, gaussian_blur};
pub use observe::{build_state, daf_fuse, daf_mix, observe, Observation};
pub use saliency::{
    mixture_map_from_centers, pretrain_conv_saliency, ConvSaliency, OracleSaliency, SaliencyModel,
    EGO_POINT, FEATURE_CHANNELS,
};

use crate::substrate::{NdArray, Real};
use crate::{DriveError, Result};
use serde::{Deserialize, Serialize};

/// One observation frame: RGB pixels in [0,1], laid out [3 x H x W].
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<R> {
    pub pixels: NdArray<R>,
    pub t: usize,
}

impl<R: Real> Frame<R> {
    pub fn new(pixels: NdArray<R>, t: usize) -> Result<Self> {
        if pixels.shape().len() != 3 || pixels.shape()[0] != 3 {
            return Err(DriveError::contract("Frame: pixels must be [3 x H x W]"));
        }
        Ok(Frame { pixels, t })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }
}

/// Spatial attention weights in [0,1] at the feature-grid resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap<R>(NdArray<R>);

impl<R: Real> AttentionMap<R> {
    pub fn new(weights: NdArray<R>) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(DriveError::contract("AttentionMap: weights must be 2-d"));
        }
        for &v in weights.data() {
            if v < R::zero() || v > R::one() {
                return Err(DriveError::contract("AttentionMap: weights outside [0,1]"));
            }
        }
        Ok(AttentionMap(weights))
    }

    pub fn weights(&self) -> &NdArray<R> {
        &self.0
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }
}

/// CNN-style feature maps [C x H' x W'] sharing the attention-map extent.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume<R>(NdArray<R>);

impl<R: Real> FeatureVolume<R> {
    pub fn new(features: NdArray<R>) -> Result<Self> {
        if features.shape().len() != 3 {
            return Err(DriveError::contract("FeatureVolume: features must be [C x H' x W']"));
        }
        Ok(FeatureVolume(features))
    }

    pub fn features(&self) -> &NdArray<R> {
        &self.0
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.0.shape()[1], self.0.shape()[2])
    }
}

/// Normalized image coordinate in [0,1]^2 (x along width, y along height).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixationPoint {
    pub x: f64,
    pub y: f64,
}

impl FixationPoint {
    pub fn center() -> Self {
        FixationPoint { x: 0.5, y: 0.5 }
    }

    pub fn in_bounds(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }
}

/// Pooled observation state: concat of L2-normalized global max-pool and
/// global average-pool halves, each of length C.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationState<R>(pub NdArray<R>);

impl<R: Real> ObservationState<R> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &NdArray<R> {
        &self.0
    }
}

/// Attention replacement applied after fusion, used by intervention tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InterventionMode {
    #[default]
    None,
    Remove,
    Inverse,
}

/// Static percept parameters threaded through `observe`.
#[derive(Clone, Debug)]
pub struct PerceptConfig {
    /// Cap on how much top-down attention the fusion may use.
    pub m: f64,
    pub fov_levels: usize,
    pub fov_falloff: f64,
    pub no_top_down: bool,
    pub no_bottom_up: bool,
    pub no_fixation: bool,
    pub intervention: InterventionMode,
}

impl Default for PerceptConfig {
    fn default() -> Self {
        PerceptConfig {
            m: 0.5,
            fov_levels: 5,
            fov_falloff: 0.35,
            no_top_down: false,
            no_bottom_up: false,
            no_fixation: false,
            intervention: InterventionMode::None,
        }
    }
}
