use super::foveate::gaussian_blur;
use super::{AttentionMap, FeatureVolume, Frame};
use crate::substrate::{AdamHyper, Graph, NdArray, Param, Real};
use crate::{DriveError, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Channel count of the feature volume every saliency variant produces.
pub const FEATURE_CHANNELS: usize = 64;

/// Normalized image coordinate the hazard trajectories converge on; shared
/// with the episode generator and the proximity feature channels.
pub const EGO_POINT: (f64, f64) = (0.5, 0.95);

/// Saliency predictor: either the analytic oracle for synthetic scenes or a
/// small frozen convolutional network.
pub enum SaliencyModel<R: Real> {
    Oracle(OracleSaliency),
    Conv(ConvSaliency<R>),
}

impl<R: Real> SaliencyModel<R> {
    pub fn predict(&self, frame: &Frame<R>) -> Result<(AttentionMap<R>, FeatureVolume<R>)> {
        match self {
            SaliencyModel::Oracle(o) => o.predict(frame),
            SaliencyModel::Conv(c) => c.predict(frame),
        }
    }

    pub fn is_frozen(&self) -> bool {
        match self {
            SaliencyModel::Oracle(_) => true,
            SaliencyModel::Conv(c) => c.frozen,
        }
    }
}

/// Analytic saliency for synthetic frames: bright blobs are detected as local
/// maxima of the smoothed luminance, and the map is a peak-normalized mixture
/// of isotropic Gaussians at the detected centers. Blurring a region (as the
/// foveal pathway does) lowers its detected prominence, so the same model
/// serves both the bottom-up and the top-down pass.
#[derive(Clone, Debug)]
pub struct OracleSaliency {
    /// Gaussian width as a fraction of the frame diagonal.
    pub sigma_frac: f64,
    /// Minimum prominence of a detected peak over the background level.
    pub detect_threshold: f64,
    pub max_components: usize,
}

impl Default for OracleSaliency {
    fn default() -> Self {
        OracleSaliency { sigma_frac: 0.06, detect_threshold: 0.12, max_components: 8 }
    }
}

impl OracleSaliency {
    pub fn predict<R: Real>(&self, frame: &Frame<R>) -> Result<(AttentionMap<R>, FeatureVolume<R>)> {
        let (h, w) = (frame.height(), frame.width());
        if h % 8 != 0 || w % 8 != 0 {
            return Err(DriveError::contract("saliency: frame dims must be multiples of 8"));
        }
        let lum = luminance(frame);
        let g1 = gaussian_blur(&lum, 1.0);
        let peaks = detect_peaks(&g1, self.detect_threshold, self.max_components);
        let map = mixture_map::<R>(&peaks, h, w, h / 8, w / 8, self.sigma_frac);
        let features = feature_bank(frame, &lum, &g1)?;
        Ok((AttentionMap::new(map)?, features))
    }
}

fn luminance<R: Real>(frame: &Frame<R>) -> NdArray<f64> {
    let (h, w) = (frame.height(), frame.width());
    let px = frame.pixels.data();
    NdArray::from_fn(&[h, w], |i| {
        let r = px[i].as_f64();
        let g = px[h * w + i].as_f64();
        let b = px[2 * h * w + i].as_f64();
        (r + g + b) / 3.0
    })
}

struct Peak {
    y: usize,
    x: usize,
    weight: f64,
}

fn detect_peaks(g1: &NdArray<f64>, threshold: f64, max_components: usize) -> Vec<Peak> {
    let (h, w) = (g1.shape()[0], g1.shape()[1]);
    let bg = g1.sum() / (h * w) as f64;
    let mut peaks = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = g1.at2(y, x);
            if v - bg < threshold {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let nv = g1.at2((y as i32 + dy) as usize, (x as i32 + dx) as usize);
                    if nv > v || (nv == v && (dy < 0 || (dy == 0 && dx < 0))) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push(Peak { y, x, weight: v - bg });
            }
        }
    }
    peaks.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    peaks.truncate(max_components);
    peaks
}

fn mixture_map<R: Real>(
    peaks: &[Peak],
    h: usize,
    w: usize,
    gh: usize,
    gw: usize,
    sigma_frac: f64,
) -> NdArray<R> {
    let centers: Vec<(f64, f64, f64)> =
        peaks.iter().map(|p| (p.y as f64 + 0.5, p.x as f64 + 0.5, p.weight)).collect();
    mixture_map_from_centers(&centers, h, w, gh, gw, sigma_frac)
}

/// Peak-normalized Gaussian mixture rendered at the cell centers of the
/// (gh x gw) grid, from component centers in pixel coordinates. Distances are
/// measured in diagonal-normalized units. Also used by the episode generator
/// for ground-truth maps.
pub fn mixture_map_from_centers<R: Real>(
    centers: &[(f64, f64, f64)],
    h: usize,
    w: usize,
    gh: usize,
    gw: usize,
    sigma_frac: f64,
) -> NdArray<R> {
    let mut map = NdArray::<f64>::zeros(&[gh, gw]);
    if centers.is_empty() {
        return map.cast();
    }
    let diag = ((h * h + w * w) as f64).sqrt();
    let two_s2 = 2.0 * sigma_frac * sigma_frac;
    for gy in 0..gh {
        for gx in 0..gw {
            let cy = (gy as f64 + 0.5) * h as f64 / gh as f64;
            let cx = (gx as f64 + 0.5) * w as f64 / gw as f64;
            let mut s = 0.0;
            for &(py, px, wt) in centers {
                let dy = (cy - py) / diag;
                let dx = (cx - px) / diag;
                s += wt * (-(dx * dx + dy * dy) / two_s2).exp();
            }
            map.set2(gy, gx, s);
        }
    }
    let mut peak = 0.0f64;
    for &v in map.data() {
        if v > peak {
            peak = v;
        }
    }
    if peak > 0.0 {
        map.scale_in_place(1.0 / peak);
    }
    map.cast()
}

/// 64 hand-built statistics per grid cell: multi-scale luminance, gradients,
/// center-surround responses, color stats, sub-block layout, coordinate
/// encodings, and a few global broadcasts. Gradient and texture channels
/// respond to the cluttered background, which is what makes attention
/// weighting informative rather than redundant.
fn feature_bank<R: Real>(
    frame: &Frame<R>,
    lum: &NdArray<f64>,
    g1: &NdArray<f64>,
) -> Result<FeatureVolume<R>> {
    let (h, w) = (frame.height(), frame.width());
    let (gh, gw) = (h / 8, w / 8);
    let (bh, bw) = (h / gh, w / gw);
    let g2 = gaussian_blur(lum, 2.0);
    let g4 = gaussian_blur(lum, 4.0);
    let g8 = gaussian_blur(lum, 8.0);

    let mut dx = NdArray::<f64>::zeros(&[h, w]);
    let mut dy = NdArray::<f64>::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w {
            let xm = lum.at2(y, x.saturating_sub(1));
            let xp = lum.at2(y, (x + 1).min(w - 1));
            let ym = lum.at2(y.saturating_sub(1), x);
            let yp = lum.at2((y + 1).min(h - 1), x);
            dx.set2(y, x, 0.5 * (xp - xm));
            dy.set2(y, x, 0.5 * (yp - ym));
        }
    }

    let global_mean_l = lum.sum() / (h * w) as f64;
    let mut global_max_l = 0.0f64;
    for &v in lum.data() {
        if v > global_max_l {
            global_max_l = v;
        }
    }
    let bg1 = g1.sum() / (h * w) as f64;

    let px = frame.pixels.data();
    let chan = |c: usize, y: usize, x: usize| px[(c * h + y) * w + x].as_f64();

    let mut out = NdArray::<f64>::zeros(&[FEATURE_CHANNELS, gh, gw]);
    let mut set = |c: usize, gy: usize, gx: usize, v: f64| {
        out.data_mut()[(c * gh + gy) * gw + gx] = v.clamp(0.0, 1.0);
    };

    for gy in 0..gh {
        for gx in 0..gw {
            let (y0, x0) = (gy * bh, gx * bw);
            let n = (bh * bw) as f64;

            // block statistic helpers over an arbitrary plane
            let stats = |plane: &NdArray<f64>| {
                let (mut mean, mut max, mut min) = (0.0, f64::NEG_INFINITY, f64::INFINITY);
                for y in y0..y0 + bh {
                    for x in x0..x0 + bw {
                        let v = plane.at2(y, x);
                        mean += v;
                        if v > max {
                            max = v;
                        }
                        if v < min {
                            min = v;
                        }
                    }
                }
                mean /= n;
                let mut var = 0.0;
                for y in y0..y0 + bh {
                    for x in x0..x0 + bw {
                        let d = plane.at2(y, x) - mean;
                        var += d * d;
                    }
                }
                (mean, max, min, (var / n).sqrt())
            };

            let (l_mean, l_max, l_min, l_std) = stats(lum);
            let (g1_mean, g1_max, g1_min, g1_std) = stats(&g1.clone());
            let (g2_mean, g2_max, _, g2_std) = stats(&g2);
            let (g4_mean, g4_max, _, _) = stats(&g4);
            let (_, g8_max, _, _) = stats(&g8);

            set(0, gy, gx, l_mean);
            set(1, gy, gx, l_max);
            set(2, gy, gx, l_min);
            set(3, gy, gx, l_std);
            set(4, gy, gx, g1_mean);
            set(5, gy, gx, g1_max);
            set(6, gy, gx, g1_std);
            set(7, gy, gx, g1_min);
            set(8, gy, gx, g2_mean);
            set(9, gy, gx, g2_max);
            set(10, gy, gx, g2_std);
            set(11, gy, gx, g4_mean);
            set(12, gy, gx, g4_max);
            set(13, gy, gx, g8_max);

            let mut acc = [0.0f64; 10];
            let mut frac_dog = 0.0;
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    let gx_v = dx.at2(y, x);
                    let gy_v = dy.at2(y, x);
                    let mag = (gx_v * gx_v + gy_v * gy_v).sqrt();
                    acc[0] += gx_v.abs();
                    acc[1] += gy_v.abs();
                    acc[2] += mag;
                    if mag > acc[3] {
                        acc[3] = mag;
                    }
                    acc[4] += gx_v;
                    acc[5] += gy_v;
                    if gx_v.abs() > acc[6] {
                        acc[6] = gx_v.abs();
                    }
                    if gy_v.abs() > acc[7] {
                        acc[7] = gy_v.abs();
                    }
                    acc[8] += (gx_v + gy_v).abs() * std::f64::consts::FRAC_1_SQRT_2;
                    acc[9] += (gx_v - gy_v).abs() * std::f64::consts::FRAC_1_SQRT_2;
                    if lum.at2(y, x) - g8.at2(y, x) > 0.15 {
                        frac_dog += 1.0;
                    }
                }
            }
            set(14, gy, gx, 4.0 * acc[0] / n);
            set(15, gy, gx, 4.0 * acc[1] / n);
            set(16, gy, gx, 4.0 * acc[2] / n);
            set(17, gy, gx, acc[3]);
            set(18, gy, gx, 0.5 + 2.0 * acc[4] / n);
            set(19, gy, gx, 0.5 + 2.0 * acc[5] / n);
            set(20, gy, gx, acc[6]);
            set(21, gy, gx, acc[7]);
            set(22, gy, gx, 4.0 * acc[8] / n);
            set(23, gy, gx, 4.0 * acc[9] / n);

            // center-surround and top-hat responses
            let mut cs = [0.0f64; 9];
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    let a = lum.at2(y, x) - g2.at2(y, x);
                    let b = g1.at2(y, x) - g4.at2(y, x);
                    let t = lum.at2(y, x) - g8.at2(y, x);
                    cs[0] += a.max(0.0);
                    if a > cs[1] {
                        cs[1] = a;
                    }
                    cs[2] += a.abs();
                    cs[3] += b.max(0.0);
                    if b > cs[4] {
                        cs[4] = b;
                    }
                    cs[5] += b.abs();
                    cs[6] += t.max(0.0);
                    if t > cs[7] {
                        cs[7] = t;
                    }
                    cs[8] += t.abs();
                }
            }
            set(24, gy, gx, 2.0 * cs[0] / n);
            set(25, gy, gx, cs[1]);
            set(26, gy, gx, 2.0 * cs[2] / n);
            set(27, gy, gx, 2.0 * cs[3] / n);
            set(28, gy, gx, cs[4]);
            set(29, gy, gx, 2.0 * cs[5] / n);
            set(30, gy, gx, 2.0 * cs[6] / n);
            set(31, gy, gx, cs[7]);
            set(32, gy, gx, frac_dog / n);

            for c in 0..3 {
                let (mut mean, mut max) = (0.0, 0.0f64);
                for y in y0..y0 + bh {
                    for x in x0..x0 + bw {
                        let v = chan(c, y, x);
                        mean += v;
                        if v > max {
                            max = v;
                        }
                    }
                }
                set(33 + c, gy, gx, mean / n);
                set(36 + c, gy, gx, max);
            }
            let mut rg = 0.0;
            let mut by = 0.0;
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    rg += chan(0, y, x) - chan(1, y, x);
                    by += chan(2, y, x) - 0.5 * (chan(0, y, x) + chan(1, y, x));
                }
            }
            set(39, gy, gx, 0.5 + rg / n);
            set(40, gy, gx, 0.5 + by / n);

            // 2x2 sub-block layout
            let (hb, wb) = (bh / 2, bw / 2);
            for q in 0..4 {
                let qy = y0 + (q / 2) * hb;
                let qx = x0 + (q % 2) * wb;
                let (mut mean, mut max) = (0.0, 0.0f64);
                for y in qy..qy + hb {
                    for x in qx..qx + wb {
                        let v = lum.at2(y, x);
                        mean += v;
                        if v > max {
                            max = v;
                        }
                    }
                }
                set(41 + q, gy, gx, mean / (hb * wb) as f64);
                set(45 + q, gy, gx, max);
            }

            let mut e2 = 0.0;
            let mut fr5 = 0.0;
            let mut fr75 = 0.0;
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    let v = lum.at2(y, x);
                    e2 += v * v;
                    if v > 0.5 {
                        fr5 += 1.0;
                    }
                    if v > 0.75 {
                        fr75 += 1.0;
                    }
                }
            }
            set(49, gy, gx, e2 / n);
            set(50, gy, gx, l_max - l_min);
            set(51, gy, gx, fr5 / n);
            set(52, gy, gx, fr75 / n);

            let xc = (gx as f64 + 0.5) / gw as f64;
            let yc = (gy as f64 + 0.5) / gh as f64;
            let dist =
                (((xc - EGO_POINT.0).powi(2) + (yc - EGO_POINT.1).powi(2)) / 2.0).sqrt();
            set(53, gy, gx, xc);
            set(54, gy, gx, yc);
            set(55, gy, gx, dist);
            set(56, gy, gx, 1.0);
            set(57, gy, gx, l_mean * xc);
            set(58, gy, gx, l_mean * yc);
            set(59, gy, gx, l_mean * (1.0 - dist));
            set(60, gy, gx, global_mean_l);
            set(61, gy, gx, global_max_l);

            let mut frac_bright = 0.0;
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    if g1.at2(y, x) > bg1 + 0.1 {
                        frac_bright += 1.0;
                    }
                }
            }
            set(62, gy, gx, frac_bright / n);
            set(63, gy, gx, g1_max - bg1);
        }
    }
    FeatureVolume::new(out.cast())
}

/// Three stride-2 convolutions with ReLU down to the feature grid, a 1x1 head
/// for the saliency logits, and min-max normalization for the map. The
/// penultimate 64-channel activation is the feature volume.
pub struct ConvSaliency<R: Real> {
    pub c1: ConvLayer<R>,
    pub c2: ConvLayer<R>,
    pub c3: ConvLayer<R>,
    pub head: ConvLayer<R>,
    pub frozen: bool,
    pub frame_h: usize,
    pub frame_w: usize,
}

pub struct ConvLayer<R: Real> {
    pub w: Param<R>,
    pub b: Param<R>,
    pub stride: usize,
    pub pad: usize,
}

impl<R: Real> ConvLayer<R> {
    fn init(
        name: &str,
        c_out: usize,
        c_in: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        let w = NdArray::from_fn(&[c_out, c_in, k, k], |_| R::of(rng.gen_range(-bound..bound)));
        let b = NdArray::from_fn(&[c_out], |_| R::of(rng.gen_range(-bound..bound)));
        ConvLayer {
            w: Param::new(format!("{name}.w"), w),
            b: Param::new(format!("{name}.b"), b),
            stride,
            pad,
        }
    }
}

impl<R: Real> ConvSaliency<R> {
    pub fn new(frame_h: usize, frame_w: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if frame_h % 8 != 0 || frame_w % 8 != 0 {
            return Err(DriveError::config("conv saliency: frame dims must be multiples of 8"));
        }
        Ok(ConvSaliency {
            c1: ConvLayer::init("saliency.c1", 16, 3, 3, 2, 1, rng),
            c2: ConvLayer::init("saliency.c2", 32, 16, 3, 2, 1, rng),
            c3: ConvLayer::init("saliency.c3", FEATURE_CHANNELS, 32, 3, 2, 1, rng),
            head: ConvLayer::init("saliency.head", 1, FEATURE_CHANNELS, 1, 1, 0, rng),
            frozen: false,
            frame_h,
            frame_w,
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<R>> {
        vec![
            &mut self.c1.w,
            &mut self.c1.b,
            &mut self.c2.w,
            &mut self.c2.b,
            &mut self.c3.w,
            &mut self.c3.b,
            &mut self.head.w,
            &mut self.head.b,
        ]
    }

    pub fn params(&self) -> Vec<&Param<R>> {
        vec![
            &self.c1.w,
            &self.c1.b,
            &self.c2.w,
            &self.c2.b,
            &self.c3.w,
            &self.c3.b,
            &self.head.w,
            &self.head.b,
        ]
    }

    fn forward_raw(&self, frame: &Frame<R>) -> Result<(NdArray<R>, NdArray<R>)> {
        use crate::substrate::conv2d_forward;
        let relu = |a: NdArray<R>| a.map(|v| if v > R::zero() { v } else { R::zero() });
        let a1 = relu(conv2d_forward(&frame.pixels, &self.c1.w.value, &self.c1.b.value, 2, 1)?);
        let a2 = relu(conv2d_forward(&a1, &self.c2.w.value, &self.c2.b.value, 2, 1)?);
        let v = relu(conv2d_forward(&a2, &self.c3.w.value, &self.c3.b.value, 2, 1)?);
        let logits = conv2d_forward(&v, &self.head.w.value, &self.head.b.value, 1, 0)?;
        Ok((v, logits))
    }

    pub fn predict(&self, frame: &Frame<R>) -> Result<(AttentionMap<R>, FeatureVolume<R>)> {
        if frame.height() != self.frame_h || frame.width() != self.frame_w {
            return Err(DriveError::contract(format!(
                "conv saliency configured for {}x{}, got {}x{}",
                self.frame_h,
                self.frame_w,
                frame.height(),
                frame.width()
            )));
        }
        let (v, logits) = self.forward_raw(frame)?;
        let (gh, gw) = (logits.shape()[1], logits.shape()[2]);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in logits.data() {
            let x = x.as_f64();
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let map = if hi > lo {
            NdArray::from_fn(&[gh, gw], |i| R::of((logits.data()[i].as_f64() - lo) / (hi - lo)))
        } else {
            NdArray::zeros(&[gh, gw])
        };
        Ok((AttentionMap::new(map)?, FeatureVolume::new(v)?))
    }
}

/// Pixelwise MSE regression of the conv head onto ground-truth maps; the
/// parameters are frozen afterwards. Returns the mean loss of the final pass.
pub fn pretrain_conv_saliency<R: Real>(
    conv: &mut ConvSaliency<R>,
    samples: &[(Frame<R>, NdArray<R>)],
    epochs: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(DriveError::config("saliency pretraining: no samples"));
    }
    let hp = AdamHyper::with_lr(lr);
    let mut last = 0.0;
    for _ in 0..epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        for &i in &order {
            let (frame, gt) = &samples[i];
            let mut g = Graph::new();
            let x = g.constant(frame.pixels.clone());
            let w1 = g.leaf(conv.c1.w.value.clone());
            let b1 = g.leaf(conv.c1.b.value.clone());
            let w2 = g.leaf(conv.c2.w.value.clone());
            let b2 = g.leaf(conv.c2.b.value.clone());
            let w3 = g.leaf(conv.c3.w.value.clone());
            let b3 = g.leaf(conv.c3.b.value.clone());
            let wh = g.leaf(conv.head.w.value.clone());
            let bh = g.leaf(conv.head.b.value.clone());
            let a1 = g.conv2d(x, w1, b1, 2, 1);
            let a1 = g.relu(a1);
            let a2 = g.conv2d(a1, w2, b2, 2, 1);
            let a2 = g.relu(a2);
            let v = g.conv2d(a2, w3, b3, 2, 1);
            let v = g.relu(v);
            let logits = g.conv2d(v, wh, bh, 1, 0);
            let gt_c = g.constant(NdArray::from_vec(&[1, gt.shape()[0], gt.shape()[1]], gt.data().to_vec())?);
            let diff = g.sub(logits, gt_c);
            let sq = g.square(diff);
            let loss = g.mean_all(sq);
            total += g.value(loss).item().as_f64();
            g.backward(loss);
            let grads = [
                g.grad(w1),
                g.grad(b1),
                g.grad(w2),
                g.grad(b2),
                g.grad(w3),
                g.grad(b3),
                g.grad(wh),
                g.grad(bh),
            ];
            for (p, gr) in conv.params_mut().into_iter().zip(grads.iter()) {
                crate::substrate::adam_step(&mut p.value, gr, &mut p.adam, &hp);
            }
        }
        last = total / samples.len() as f64;
    }
    conv.frozen = true;
    Ok(last)
}
