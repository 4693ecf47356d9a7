use super::{FixationPoint, Frame};
use crate::substrate::{NdArray, Real};
use crate::{DriveError, Result};

/// Separable Gaussian blur with edge-clamped sampling; radius is 3 sigma.
pub fn gaussian_blur<R: Real>(img: &NdArray<R>, sigma: f64) -> NdArray<R> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut weights = Vec::with_capacity((2 * radius + 1) as usize);
    let mut total = 0.0f64;
    for k in -radius..=radius {
        let w = (-(k as f64 * k as f64) / (2.0 * sigma * sigma)).exp();
        weights.push(w);
        total += w;
    }
    let weights: Vec<R> = weights.into_iter().map(|w| R::of(w / total)).collect();

    let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;

    // horizontal pass
    let mut tmp = NdArray::zeros(img.shape());
    for ch in 0..c {
        for y in 0..h {
            let row = &img.data()[(ch * h + y) * w..(ch * h + y + 1) * w];
            let out = &mut tmp.data_mut()[(ch * h + y) * w..(ch * h + y + 1) * w];
            for x in 0..w {
                let mut s = R::zero();
                for (ki, &wt) in weights.iter().enumerate() {
                    let sx = clamp(x as isize + ki as isize - radius, w);
                    s += wt * row[sx];
                }
                out[x] = s;
            }
        }
    }
    // vertical pass
    let mut out = NdArray::zeros(img.shape());
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut s = R::zero();
                for (ki, &wt) in weights.iter().enumerate() {
                    let sy = clamp(y as isize + ki as isize - radius, h);
                    s += wt * tmp.data()[(ch * h + sy) * w + x];
                }
                out.data_mut()[(ch * h + y) * w + x] = s;
            }
        }
    }
    out
}

/// Acuity-falloff rendering: a Gaussian pyramid of progressively blurred
/// copies, blended per pixel by eccentricity from the fixation point.
///
/// The fixation is snapped to its pixel center and eccentricity is measured
/// between pixel centers in normalized coordinates, so the fixated pixel
/// always blends at level 0 and stays bit-identical to the input.
pub fn foveate<R: Real>(
    frame: &Frame<R>,
    fixation: FixationPoint,
    levels: usize,
    falloff: f64,
) -> Result<Frame<R>> {
    if !fixation.in_bounds() {
        return Err(DriveError::contract(format!(
            "foveate: fixation ({}, {}) outside [0,1]^2",
            fixation.x, fixation.y
        )));
    }
    if levels < 2 {
        return Err(DriveError::contract("foveate: levels must be >= 2"));
    }
    if !(falloff > 0.0) {
        return Err(DriveError::contract("foveate: falloff must be positive"));
    }

    let (h, w) = (frame.height(), frame.width());
    let mut pyramid: Vec<NdArray<R>> = Vec::with_capacity(levels);
    pyramid.push(frame.pixels.clone());
    for level in 1..levels {
        let sigma = (1 << (level - 1)) as f64;
        pyramid.push(gaussian_blur(&frame.pixels, sigma));
    }

    let fx = ((fixation.x * w as f64).floor().clamp(0.0, w as f64 - 1.0) + 0.5) / w as f64;
    let fy = ((fixation.y * h as f64).floor().clamp(0.0, h as f64 - 1.0) + 0.5) / h as f64;

    let mut out = NdArray::zeros(frame.pixels.shape());
    for y in 0..h {
        let cy = (y as f64 + 0.5) / h as f64;
        for x in 0..w {
            let cx = (x as f64 + 0.5) / w as f64;
            let ecc = ((cx - fx).powi(2) + (cy - fy).powi(2)).sqrt();
            let lvl = (ecc / falloff).clamp(0.0, 1.0) * (levels - 1) as f64;
            let lo = lvl.floor() as usize;
            let hi = (lo + 1).min(levels - 1);
            let frac = R::of(lvl - lo as f64);
            let one_minus = R::one() - frac;
            for ch in 0..3 {
                let idx = (ch * h + y) * w + x;
                let a = pyramid[lo].data()[idx];
                let b = pyramid[hi].data()[idx];
                out.data_mut()[idx] = one_minus * a + frac * b;
            }
        }
    }
    Frame::new(out, frame.t)
}
