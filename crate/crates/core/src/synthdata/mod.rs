//! Procedural synthetic episodes: moving Gaussian-blob vehicles on a textured
//! background. Positive episodes contain one hazard blob that converges on
//! the ego position and grows in brightness and size before the accident
//! onset; that growth is the learnable pre-accident cue.

mod gen;
mod io;

pub use gen::{gen_episode, EpisodeMeta, ObjectTrack, SceneSpec};
pub use io::{
    load_dataset, read_episode, read_manifest, write_episode, write_manifest, Dataset,
    DatasetManifest, Split,
};

use crate::percept::Frame;
use crate::substrate::{NdArray, Real};

/// Episode ground truth: label, onset step (positives only), and per-step
/// fixation targets that exist only after the onset.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeAnnotation {
    pub label: bool,
    pub onset: Option<usize>,
    /// One slot per step; Some only for positive episodes at t > onset.
    pub fixations: Vec<Option<(f64, f64)>>,
    pub horizon: usize,
}

impl EpisodeAnnotation {
    pub fn fixation_at(&self, t: usize) -> Option<(f64, f64)> {
        self.fixations.get(t).copied().flatten()
    }

    pub fn check(&self) -> crate::Result<()> {
        use crate::DriveError;
        if self.fixations.len() != self.horizon {
            return Err(DriveError::contract("annotation: fixation list length != horizon"));
        }
        match self.onset {
            Some(t_a) => {
                if !self.label {
                    return Err(DriveError::contract("annotation: onset without positive label"));
                }
                if t_a == 0 || t_a >= self.horizon {
                    return Err(DriveError::contract(format!(
                        "annotation: onset {t_a} outside [1, {})",
                        self.horizon
                    )));
                }
                for (t, f) in self.fixations.iter().enumerate() {
                    if f.is_some() && t <= t_a {
                        return Err(DriveError::contract("annotation: fixation at or before onset"));
                    }
                }
            }
            None => {
                if self.label {
                    return Err(DriveError::contract("annotation: positive label without onset"));
                }
                if self.fixations.iter().any(|f| f.is_some()) {
                    return Err(DriveError::contract("annotation: fixations on negative episode"));
                }
            }
        }
        Ok(())
    }
}

/// A full synthetic episode: frames, ground truth, and per-frame oracle
/// saliency maps at the feature-grid resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode<R> {
    pub frames: Vec<Frame<R>>,
    pub annotation: EpisodeAnnotation,
    pub saliency_gt: Vec<NdArray<R>>,
}

impl<R: Real> Episode<R> {
    pub fn horizon(&self) -> usize {
        self.frames.len()
    }
}
