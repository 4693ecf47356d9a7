use super::foveate::foveate;
use super::{
    AttentionMap, FeatureVolume, FixationPoint, Frame, InterventionMode, ObservationState,
    PerceptConfig, SaliencyModel,
};
use crate::substrate::{NdArray, Real};
use crate::{DriveError, Result};

/// Convex blend of the two attention maps with an explicit mixing weight.
pub fn daf_mix<R: Real>(
    s_bu: &AttentionMap<R>,
    s_td: &AttentionMap<R>,
    rho: f64,
) -> Result<AttentionMap<R>> {
    if s_bu.shape() != s_td.shape() {
        return Err(DriveError::contract(format!(
            "attention fusion: extents {:?} vs {:?}",
            s_bu.shape(),
            s_td.shape()
        )));
    }
    let r = R::of(rho);
    let one_minus = R::one() - r;
    let fused = s_bu.weights().zip_map(s_td.weights(), |a, b| one_minus * a + r * b);
    AttentionMap::new(fused)
}

/// Dynamic attention fusion: rho = min(m, previous accident score), so the
/// top-down map is trusted in proportion to the agent's own alarm level,
/// capped by m.
pub fn daf_fuse<R: Real>(
    s_bu: &AttentionMap<R>,
    s_td: &AttentionMap<R>,
    score_prev: f64,
    m: f64,
) -> Result<AttentionMap<R>> {
    if !(0.0 < m && m < 1.0) {
        return Err(DriveError::contract("daf_fuse: m must lie in (0,1)"));
    }
    if !(0.0..=1.0).contains(&score_prev) {
        return Err(DriveError::contract("daf_fuse: score must lie in [0,1]"));
    }
    daf_mix(s_bu, s_td, m.min(score_prev))
}

/// Pooled state: per channel, the attention-modulated feature map is reduced
/// by global max pooling and global average pooling; each pooled C-vector is
/// L2-normalized independently (zero vectors stay zero) and the two halves
/// are concatenated.
pub fn build_state<R: Real>(
    s: &AttentionMap<R>,
    v: &FeatureVolume<R>,
) -> Result<ObservationState<R>> {
    let (gh, gw) = v.grid();
    if s.shape() != [gh, gw] {
        return Err(DriveError::contract(format!(
            "build_state: map extent {:?} vs feature grid {:?}",
            s.shape(),
            (gh, gw)
        )));
    }
    let c = v.channels();
    let hw = gh * gw;
    let mut gmp = NdArray::<R>::zeros(&[c]);
    let mut gap = NdArray::<R>::zeros(&[c]);
    let sm = s.weights().data();
    for ch in 0..c {
        let plane = &v.features().data()[ch * hw..(ch + 1) * hw];
        let mut best = R::neg_infinity();
        let mut sum = R::zero();
        for (i, &fv) in plane.iter().enumerate() {
            let m = sm[i] * fv;
            if m > best {
                best = m;
            }
            sum += m;
        }
        gmp.data_mut()[ch] = best;
        gap.data_mut()[ch] = sum / R::of(hw as f64);
    }
    l2_normalize(&mut gmp);
    l2_normalize(&mut gap);
    let mut out = NdArray::zeros(&[2 * c]);
    out.data_mut()[..c].copy_from_slice(gmp.data());
    out.data_mut()[c..].copy_from_slice(gap.data());
    Ok(ObservationState(out))
}

fn l2_normalize<R: Real>(v: &mut NdArray<R>) {
    let norm = v.sum_sq().sqrt();
    if norm > R::of(1e-12) {
        let inv = R::one() / norm;
        v.scale_in_place(inv);
    } else {
        v.fill(R::zero());
    }
}

/// Full observation for one step together with its attention diagnostics.
pub struct Observation<R: Real> {
    pub state: ObservationState<R>,
    pub s_bu: AttentionMap<R>,
    pub s_td: Option<AttentionMap<R>>,
    pub s_fused: AttentionMap<R>,
}

/// One pass of the observation pipeline. `prev` carries the accident score
/// and fixation emitted at the previous step; at the first step of an episode
/// rho is 0 and the fixation defaults to the frame center. The feature volume
/// always comes from the bottom-up pass so it stays action-independent.
pub fn observe<R: Real>(
    frame: &Frame<R>,
    prev: Option<(f64, FixationPoint)>,
    model: &SaliencyModel<R>,
    cfg: &PerceptConfig,
) -> Result<Observation<R>> {
    if cfg.no_bottom_up && (cfg.no_top_down || cfg.no_fixation) {
        return Err(DriveError::config(
            "observe: no_bottom_up combined with a disabled top-down pathway leaves no attention",
        ));
    }
    let (s_bu, volume) = model.predict(frame)?;

    let skip_top_down = cfg.no_fixation || cfg.no_top_down;
    let (s_td, fused) = if skip_top_down {
        (None, s_bu.clone())
    } else {
        let (score_prev, fixation) = prev.unwrap_or((0.0, FixationPoint::center()));
        let foveal = foveate(frame, fixation, cfg.fov_levels, cfg.fov_falloff)?;
        let (s_td, _) = model.predict(&foveal)?;
        let fused = if cfg.no_bottom_up {
            daf_mix(&s_bu, &s_td, 1.0)?
        } else {
            daf_fuse(&s_bu, &s_td, score_prev, cfg.m)?
        };
        (Some(s_td), fused)
    };

    let fused = match cfg.intervention {
        InterventionMode::None => fused,
        InterventionMode::Remove => {
            AttentionMap::new(NdArray::full(&[fused.shape()[0], fused.shape()[1]], R::one()))?
        }
        InterventionMode::Inverse => {
            AttentionMap::new(fused.weights().map(|v| R::one() - v))?
        }
    };

    let state = build_state(&fused, &volume)?;
    Ok(Observation { state, s_bu, s_td, s_fused: fused })
}
