use super::{Episode, EpisodeAnnotation};
use crate::percept::{mixture_map_from_centers, Frame, EGO_POINT};
use crate::substrate::{NdArray, Real};
use crate::{DriveError, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator parameters. The hazard size multiplier reaches its ceiling
/// exactly at the onset step; brightness saturates a few steps after the cue
/// begins so the pre-accident window carries a strong early signal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub horizon: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    pub noise_level: f64,
    /// Steps before onset at which the hazard cue starts growing.
    pub hazard_lead: usize,
    /// Gaussian width of ground-truth saliency, fraction of frame diagonal.
    pub sigma_frac: f64,
    pub fps: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            height: 48,
            width: 64,
            horizon: 30,
            objects_min: 2,
            objects_max: 4,
            noise_level: 0.04,
            hazard_lead: 10,
            sigma_frac: 0.06,
            fps: 10.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height % 8 != 0 || self.width % 8 != 0 {
            return Err(DriveError::config("scene: frame dims must be multiples of 8"));
        }
        if self.horizon < 6 {
            return Err(DriveError::config("scene: horizon too short"));
        }
        if self.objects_min == 0 || self.objects_max < self.objects_min {
            return Err(DriveError::config("scene: bad object count range"));
        }
        Ok(())
    }
}

/// Per-step track of one rendered blob.
#[derive(Clone, Debug)]
pub struct ObjectTrack {
    pub center: Vec<(f64, f64)>, // (y, x) pixels
    pub sigma: Vec<f64>,
    pub brightness: Vec<f64>,
    pub color: [f64; 3],
    pub is_hazard: bool,
}

/// Generator-side metadata, kept out of the serialized episode. The hazard
/// index is enough for an oracle classifier to separate the classes.
#[derive(Clone, Debug)]
pub struct EpisodeMeta {
    pub objects: Vec<ObjectTrack>,
    pub hazard: Option<usize>,
}

const HAZARD_SIZE_GROWTH: f64 = 0.8;
const BRIGHTNESS_RAMP_STEPS: f64 = 3.0;

fn ordinary_track(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> ObjectTrack {
    let (h, w, l) = (spec.height as f64, spec.width as f64, spec.horizon);
    let margin = 5.0;
    let mut y = rng.gen_range(margin..h - margin);
    let mut x = rng.gen_range(margin..w - margin);
    let speed = rng.gen_range(0.3..1.2);
    let dir = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut vy = speed * dir.sin();
    let mut vx = speed * dir.cos();
    let sigma = rng.gen_range(2.2..3.2);
    let brightness = rng.gen_range(0.30..0.55);
    let color = [rng.gen_range(0.7..1.0), rng.gen_range(0.7..1.0), rng.gen_range(0.7..1.0)];
    let mut track = ObjectTrack {
        center: Vec::with_capacity(l),
        sigma: vec![sigma; l],
        brightness: vec![brightness; l],
        color,
        is_hazard: false,
    };
    for _ in 0..l {
        track.center.push((y, x));
        y += vy;
        x += vx;
        if y < margin || y > h - margin {
            vy = -vy;
            y = y.clamp(margin, h - margin);
        }
        if x < margin || x > w - margin {
            vx = -vx;
            x = x.clamp(margin, w - margin);
        }
    }
    track
}

fn hazard_track(spec: &SceneSpec, t_a: usize, rng: &mut ChaCha8Rng) -> ObjectTrack {
    let (h, w, l) = (spec.height as f64, spec.width as f64, spec.horizon);
    let start_y = rng.gen_range(6.0..h * 0.35);
    let start_x = rng.gen_range(8.0..w - 8.0);
    let ego_y = EGO_POINT.1 * h;
    let ego_x = EGO_POINT.0 * w + rng.gen_range(-4.0..4.0);
    let sigma0 = rng.gen_range(2.4..3.0);
    let base_brightness = rng.gen_range(0.32..0.45);
    let cue_start = t_a.saturating_sub(spec.hazard_lead);
    let color = [rng.gen_range(0.85..1.0), rng.gen_range(0.6..0.85), rng.gen_range(0.5..0.8)];

    let mut track = ObjectTrack {
        center: Vec::with_capacity(l),
        sigma: Vec::with_capacity(l),
        brightness: Vec::with_capacity(l),
        color,
        is_hazard: true,
    };
    for t in 0..l {
        let progress = (t as f64 / t_a as f64).min(1.0);
        let y = start_y + (ego_y - start_y) * progress;
        let x = start_x + (ego_x - start_x) * progress;
        track.center.push((y.clamp(2.0, h - 2.0), x.clamp(2.0, w - 2.0)));

        // size multiplier hits 1 + HAZARD_SIZE_GROWTH exactly at t = t_a
        let size_phase = if t < cue_start {
            0.0
        } else {
            ((t - cue_start) as f64 / (t_a - cue_start) as f64).min(1.0)
        };
        track.sigma.push(sigma0 * (1.0 + HAZARD_SIZE_GROWTH * size_phase));

        // brightness saturates quickly once the cue starts
        let bright_phase = if t < cue_start {
            0.0
        } else {
            (((t - cue_start) as f64) / BRIGHTNESS_RAMP_STEPS).min(1.0)
        };
        track.brightness.push(base_brightness + (1.0 - base_brightness) * bright_phase);
    }
    track
}

fn render_frame<R: Real>(
    spec: &SceneSpec,
    objects: &[ObjectTrack],
    t: usize,
    bg: &BackgroundField,
    rng: &mut ChaCha8Rng,
) -> Frame<R> {
    let (h, w) = (spec.height, spec.width);
    let mut px = vec![0f64; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let base = bg.at(y, x, t);
            let n = spec.noise_level * rng.gen::<f64>();
            for (c, tint) in bg.tint.iter().enumerate() {
                px[(c * h + y) * w + x] = (base * tint + n).clamp(0.0, 1.0);
            }
        }
    }
    for obj in objects {
        let (cy, cx) = obj.center[t];
        let sigma = obj.sigma[t];
        let bright = obj.brightness[t];
        let radius = (3.0 * sigma).ceil() as isize;
        let two_s2 = 2.0 * sigma * sigma;
        let y0 = ((cy as isize) - radius).max(0) as usize;
        let y1 = ((cy as isize) + radius).min(h as isize - 1) as usize;
        let x0 = ((cx as isize) - radius).max(0) as usize;
        let x1 = ((cx as isize) + radius).min(w as isize - 1) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2);
                let v = bright * (-d2 / two_s2).exp();
                for c in 0..3 {
                    let idx = (c * h + y) * w + x;
                    px[idx] = (px[idx] + v * obj.color[c]).clamp(0.0, 1.0);
                }
            }
        }
    }
    // quantize through f32 so episodes round-trip bit-exactly at any precision
    let data: Vec<R> = px.into_iter().map(|v| R::of(v as f32 as f64)).collect();
    Frame::new(NdArray::from_vec(&[3, h, w], data).unwrap(), t).unwrap()
}

struct BackgroundField {
    amp1: f64,
    amp2: f64,
    fy1: f64,
    fx1: f64,
    fy2: f64,
    fx2: f64,
    phase1: f64,
    phase2: f64,
    drift1: f64,
    drift2: f64,
    tint: [f64; 3],
    h: f64,
    w: f64,
}

impl BackgroundField {
    fn sample(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Self {
        BackgroundField {
            amp1: rng.gen_range(0.03..0.05),
            amp2: rng.gen_range(0.02..0.04),
            fy1: rng.gen_range(1.0..3.0),
            fx1: rng.gen_range(1.0..3.0),
            fy2: rng.gen_range(2.0..5.0),
            fx2: rng.gen_range(2.0..5.0),
            phase1: rng.gen_range(0.0..std::f64::consts::TAU),
            phase2: rng.gen_range(0.0..std::f64::consts::TAU),
            drift1: rng.gen_range(-0.05..0.05),
            drift2: rng.gen_range(-0.05..0.05),
            tint: [rng.gen_range(0.9..1.1), rng.gen_range(0.9..1.1), rng.gen_range(0.9..1.1)],
            h: spec.height as f64,
            w: spec.width as f64,
        }
    }

    fn at(&self, y: usize, x: usize, t: usize) -> f64 {
        let ny = y as f64 / self.h;
        let nx = x as f64 / self.w;
        let t = t as f64;
        0.12 + self.amp1
            * (std::f64::consts::TAU * (self.fy1 * ny + self.fx1 * nx + self.phase1 + self.drift1 * t))
                .sin()
            + self.amp2
                * (std::f64::consts::TAU
                    * (self.fy2 * ny - self.fx2 * nx + self.phase2 + self.drift2 * t))
                    .sin()
    }
}

/// Generate one episode. Pure given the RNG: the same seed reproduces the
/// episode bit for bit.
pub fn gen_episode<R: Real>(
    spec: &SceneSpec,
    positive: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Episode<R>, EpisodeMeta)> {
    spec.validate()?;
    let l = spec.horizon;
    let bg = BackgroundField::sample(spec, rng);

    // onset in the final third of the horizon, jittered
    let onset_lo = (2 * l) / 3;
    let t_a = rng.gen_range(onset_lo..l);

    let n_objects = rng.gen_range(spec.objects_min..=spec.objects_max);
    let mut objects: Vec<ObjectTrack> = (0..n_objects).map(|_| ordinary_track(spec, rng)).collect();
    let hazard_idx = if positive {
        objects.push(hazard_track(spec, t_a, rng));
        Some(objects.len() - 1)
    } else {
        None
    };

    let mut frames = Vec::with_capacity(l);
    let mut maps = Vec::with_capacity(l);
    let (gh, gw) = (spec.height / 8, spec.width / 8);
    for t in 0..l {
        frames.push(render_frame::<R>(spec, &objects, t, &bg, rng));
        let centers: Vec<(f64, f64, f64)> = objects
            .iter()
            .map(|o| (o.center[t].0, o.center[t].1, o.brightness[t]))
            .collect();
        let map64: NdArray<f64> =
            mixture_map_from_centers(&centers, spec.height, spec.width, gh, gw, spec.sigma_frac);
        // same f32 quantization as the frames
        maps.push(NdArray::from_vec(
            &[gh, gw],
            map64.data().iter().map(|&v| R::of(v as f32 as f64)).collect(),
        )?);
    }

    let mut fixations = vec![None; l];
    if let Some(hi) = hazard_idx {
        for (t, slot) in fixations.iter_mut().enumerate() {
            if t > t_a {
                let (cy, cx) = objects[hi].center[t];
                *slot = Some((
                    (cx / spec.width as f64).clamp(0.0, 1.0),
                    (cy / spec.height as f64).clamp(0.0, 1.0),
                ));
            }
        }
    }

    let annotation = EpisodeAnnotation {
        label: positive,
        onset: if positive { Some(t_a) } else { None },
        fixations,
        horizon: l,
    };
    annotation.check()?;
    Ok((Episode { frames, annotation, saliency_gt: maps }, EpisodeMeta { objects, hazard: hazard_idx }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, STREAM_DATA};

    #[test]
    fn onset_lands_in_final_third() {
        let spec = SceneSpec::default();
        for seed in 0..1000u64 {
            let mut rng = derive_rng(seed, STREAM_DATA, 0);
            let (ep, meta) = gen_episode::<f32>(&spec, true, &mut rng).unwrap();
            let t_a = ep.annotation.onset.unwrap();
            assert!((20..=29).contains(&t_a), "t_a = {t_a}");
            assert!(meta.hazard.is_some());
            // hazard size multiplier reaches its ceiling exactly at onset
            let hz = &meta.objects[meta.hazard.unwrap()];
            let ratio = hz.sigma[t_a] / hz.sigma[0];
            assert!((ratio - (1.0 + HAZARD_SIZE_GROWTH)).abs() < 1e-12);
            if t_a + 1 < ep.horizon() {
                assert!(ep.annotation.fixation_at(t_a + 1).is_some());
            }
            assert!(ep.annotation.fixation_at(t_a).is_none());
        }
    }

    #[test]
    fn negative_episode_has_no_onset() {
        let spec = SceneSpec::default();
        let mut rng = derive_rng(3, STREAM_DATA, 1);
        let (ep, meta) = gen_episode::<f32>(&spec, false, &mut rng).unwrap();
        assert!(!ep.annotation.label);
        assert!(ep.annotation.onset.is_none());
        assert!(ep.annotation.fixations.iter().all(|f| f.is_none()));
        assert!(meta.hazard.is_none());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SceneSpec::default();
        let gen = |seed| {
            let mut rng = derive_rng(seed, STREAM_DATA, 7);
            gen_episode::<f32>(&spec, true, &mut rng).unwrap().0
        };
        let a = gen(11);
        let b = gen(11);
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_maps_are_valid_attention() {
        let spec = SceneSpec::default();
        let mut rng = derive_rng(5, STREAM_DATA, 2);
        let (ep, _) = gen_episode::<f32>(&spec, true, &mut rng).unwrap();
        for map in &ep.saliency_gt {
            let mut peak = 0.0f32;
            for &v in map.data() {
                assert!((0.0..=1.0).contains(&v));
                peak = peak.max(v);
            }
            assert!((peak - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn hazard_metadata_separates_classes() {
        // oracle classifier on generator metadata: presence of a hazard index
        let spec = SceneSpec::default();
        for i in 0..50 {
            let positive = i % 2 == 0;
            let mut rng = derive_rng(1, STREAM_DATA, i);
            let (_, meta) = gen_episode::<f32>(&spec, positive, &mut rng).unwrap();
            assert_eq!(meta.hazard.is_some(), positive);
        }
    }
}
