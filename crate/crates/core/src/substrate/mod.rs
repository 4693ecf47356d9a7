//! Minimal numerical layer: flat multidimensional arrays, a reverse-mode tape,
//! the handful of layers the agent needs, Adam, and checkpoint I/O.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod kernels;
mod layers;
mod ndarray;

pub use adam::{adam_step, AdamHyper, AdamState, Param};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CKPT_VERSION};
pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use kernels::{mm_acc, mm_at_acc};
pub use layers::{
    conv2d_forward, dense_forward, global_pool, lstm_step, tanh_gaussian, tanh_gaussian_graph,
    Activation, LstmParams, PoolMode, LOG_STD_MAX, LOG_STD_MIN, TANH_CORRECTION_EPS,
};
pub use ndarray::NdArray;

use std::fmt;

/// Scalar precision used throughout: 32-bit for training, 64-bit for
/// verification runs and gradient checks.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssignOps
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;
    const BYTE_WIDTH: usize;

    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    const BYTE_WIDTH: usize = 4;

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    const BYTE_WIDTH: usize = 8;

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}
