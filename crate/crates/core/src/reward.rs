//! Reward computation: dense anticipation reward with earliness weighting,
//! sparse fixation reward, and the supervised regularizer terms used in the
//! actor update. All functions are pure f64; the trainer casts at the buffer
//! boundary.

use crate::substrate::{Graph, Real, Var};
use crate::synthdata::EpisodeAnnotation;
use crate::{DriveError, Result};

/// Score clamp used inside the binary cross-entropy logarithms.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug)]
pub struct RewardConfig {
    /// Alarm threshold on the accident score.
    pub a0: f64,
    /// Width of the fixation reward kernel.
    pub eta: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { a0: 0.5, eta: 0.1 }
    }
}

/// Normalized exponential earliness weight: 1 at t = 0, 0 at t = t_a,
/// strictly decreasing in between.
pub fn earliness_weight(t: usize, t_a: usize) -> Result<f64> {
    if t_a == 0 {
        return Err(DriveError::contract("earliness_weight: t_a must be >= 1"));
    }
    let delta = t_a.saturating_sub(t) as f64;
    let ta = t_a as f64;
    if ta <= 700.0 {
        Ok((delta.exp() - 1.0) / (ta.exp() - 1.0))
    } else {
        // overflow-safe form for very long horizons
        Ok((delta - ta).exp() * (1.0 - (-delta).exp()) / (1.0 - (-ta).exp()))
    }
}

fn xnor(pred: bool, label: bool) -> f64 {
    if pred == label {
        1.0
    } else {
        0.0
    }
}

/// Earliness-weighted XNOR reward for the accident score. Positives are
/// weighted by `earliness_weight` and earn nothing after onset; negatives
/// earn the full XNOR reward at every step.
pub fn anticipation_reward(
    score: f64,
    annotation: &EpisodeAnnotation,
    t: usize,
    cfg: &RewardConfig,
) -> f64 {
    let pred = score > cfg.a0;
    match annotation.onset {
        Some(t_a) => {
            if t > t_a {
                0.0
            } else {
                let w = earliness_weight(t, t_a).expect("positive episodes have t_a >= 1");
                w * xnor(pred, true)
            }
        }
        None => xnor(pred, false),
    }
}

/// Radial-kernel fixation reward, active only after onset when ground truth
/// exists: exp(-||p_hat - p_gt||^2 / eta).
pub fn fixation_reward(
    p_hat: (f64, f64),
    p_gt: (f64, f64),
    t: usize,
    t_a: usize,
    eta: f64,
) -> f64 {
    if t <= t_a {
        return 0.0;
    }
    let dx = p_hat.0 - p_gt.0;
    let dy = p_hat.1 - p_gt.1;
    (-(dx * dx + dy * dy) / eta).exp()
}

/// Total per-step reward r_A + r_F given the annotation.
pub fn step_reward(
    score: f64,
    fixation: (f64, f64),
    annotation: &EpisodeAnnotation,
    t: usize,
    cfg: &RewardConfig,
) -> f64 {
    let r_a = anticipation_reward(score, annotation, t, cfg);
    let r_f = match (annotation.onset, annotation.fixation_at(t)) {
        (Some(t_a), Some(gt)) => fixation_reward(fixation, gt, t, t_a, cfg.eta),
        _ => 0.0,
    };
    r_a + r_f
}

/// Exponentially weighted binary cross-entropy on the accident score.
/// Positives: -exp(-max(0, t_a - t)) * log(score); negatives: -log(1 - score).
pub fn exp_bce_loss(score: f64, t: usize, annotation: &EpisodeAnnotation) -> f64 {
    let s = score.clamp(BCE_EPS, 1.0 - BCE_EPS);
    match annotation.onset {
        Some(t_a) => {
            let w = (-(t_a.saturating_sub(t) as f64)).exp();
            -w * s.ln()
        }
        None => -(1.0 - s).ln(),
    }
}

/// Euclidean fixation regression penalty, active only after onset.
pub fn fixation_reg_loss(p_hat: (f64, f64), p_gt: (f64, f64), t: usize, t_a: usize) -> f64 {
    if t <= t_a {
        return 0.0;
    }
    let dx = p_hat.0 - p_gt.0;
    let dy = p_hat.1 - p_gt.1;
    (dx * dx + dy * dy).sqrt()
}

/// Differentiable batch form of `exp_bce_loss` for the actor update.
///
/// `score` is a [b x 1] tape node in [0, 1]; per-row weights come in as
/// constants. The score is squeezed into [eps, 1-eps] with an affine map so
/// the logarithms stay finite while the expression remains smooth.
pub fn exp_bce_loss_graph<R: Real>(
    g: &mut Graph<R>,
    score: Var,
    pos_weight: &[R],
    neg_weight: &[R],
) -> Var {
    let b = pos_weight.len();
    let eps = R::of(BCE_EPS);
    let one = R::one();
    let squeezed = {
        let scaled = g.mul_scalar(score, one - R::of(2.0 * BCE_EPS));
        g.add_scalar(scaled, eps)
    };
    let pos_w = g.constant(crate::substrate::NdArray::from_vec(&[b, 1], pos_weight.to_vec()).unwrap());
    let neg_w = g.constant(crate::substrate::NdArray::from_vec(&[b, 1], neg_weight.to_vec()).unwrap());
    let log_s = g.ln(squeezed);
    let neg_s = g.neg(squeezed);
    let one_minus = g.add_scalar(neg_s, one);
    let log_1ms = g.ln(one_minus);
    let pos_term = g.mul(pos_w, log_s);
    let neg_term = g.mul(neg_w, log_1ms);
    let total = g.add(pos_term, neg_term);
    let neg_total = g.neg(total);
    g.mean_all(neg_total)
}

/// Differentiable batch form of `fixation_reg_loss`: mean over rows of
/// mask * ||p_hat - p_gt||, with a tiny epsilon inside the square root.
pub fn fixation_reg_loss_graph<R: Real>(
    g: &mut Graph<R>,
    fixation: Var,
    gt: &crate::substrate::NdArray<R>,
    mask: &[R],
) -> Var {
    let b = mask.len();
    let gt_c = g.constant(gt.clone());
    let diff = g.sub(fixation, gt_c);
    let sq = g.square(diff);
    let ssq = g.sum_cols(sq);
    let dist = g.sqrt_eps(ssq, R::of(1e-12));
    let mask_c = g.constant(crate::substrate::NdArray::from_vec(&[b], mask.to_vec()).unwrap());
    let masked = g.mul(mask_c, dist);
    g.mean_all(masked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::EpisodeAnnotation;

    fn positive(t_a: usize, horizon: usize) -> EpisodeAnnotation {
        let mut fixations = vec![None; horizon];
        for item in fixations.iter_mut().skip(t_a + 1) {
            *item = Some((0.5, 0.5));
        }
        EpisodeAnnotation { label: true, onset: Some(t_a), fixations, horizon }
    }

    fn negative(horizon: usize) -> EpisodeAnnotation {
        EpisodeAnnotation { label: false, onset: None, fixations: vec![None; horizon], horizon }
    }

    #[test]
    fn earliness_endpoints() {
        assert_eq!(earliness_weight(0, 7).unwrap(), 1.0);
        assert_eq!(earliness_weight(7, 7).unwrap(), 0.0);
        assert!(earliness_weight(3, 0).is_err());
    }

    #[test]
    fn earliness_interior_value() {
        // (e^2 - 1) / (e^5 - 1), frozen from a high-precision evaluation
        let w = earliness_weight(3, 5).unwrap();
        assert!((w - 0.043_341_151_465_1).abs() < 1e-12, "w = {w}");
    }

    #[test]
    fn earliness_strictly_decreasing() {
        let t_a = 12;
        let mut last = f64::INFINITY;
        for t in 0..=t_a {
            let w = earliness_weight(t, t_a).unwrap();
            assert!(w < last);
            last = w;
        }
    }

    #[test]
    fn anticipation_xnor_truth_table() {
        let cfg = RewardConfig::default();
        let pos = positive(5, 10);
        let neg = negative(10);
        // true positive at t=0 earns the full weight
        assert_eq!(anticipation_reward(0.7, &pos, 0, &cfg), 1.0);
        // false negative earns nothing
        assert_eq!(anticipation_reward(0.3, &pos, 2, &cfg), 0.0);
        // true negative earns full reward at every step
        assert_eq!(anticipation_reward(0.3, &neg, 4, &cfg), 1.0);
        // false positive earns nothing
        assert_eq!(anticipation_reward(0.9, &neg, 4, &cfg), 0.0);
    }

    #[test]
    fn anticipation_zero_after_onset_and_equality_counts_as_no_alarm() {
        let cfg = RewardConfig::default();
        let pos = positive(5, 10);
        assert_eq!(anticipation_reward(1.0, &pos, 6, &cfg), 0.0);
        // score exactly at the threshold is "no alarm"
        let neg = negative(10);
        assert_eq!(anticipation_reward(0.5, &neg, 0, &cfg), 1.0);
    }

    #[test]
    fn fixation_reward_kernel() {
        assert_eq!(fixation_reward((0.1, 0.1), (0.9, 0.9), 3, 5, 0.1), 0.0);
        assert_eq!(fixation_reward((0.4, 0.6), (0.4, 0.6), 6, 5, 0.1), 1.0);
        // ||d|| = 0.2 -> exp(-0.04 / 0.1)
        let r = fixation_reward((0.5, 0.5), (0.5, 0.7), 6, 5, 0.1);
        assert!((r - (-0.4f64).exp()).abs() < 1e-15);
        assert!((r - 0.670_320_046_035_639).abs() < 1e-12);
    }

    #[test]
    fn exp_bce_values() {
        let pos = positive(4, 10);
        let l = exp_bce_loss(0.5, 4, &pos);
        assert!((l - 0.693_147_180_559_945).abs() < 1e-9);
        let l = exp_bce_loss(0.5, 2, &pos);
        assert!((l - (-2.0f64).exp() * 0.693_147_180_559_945).abs() < 1e-9);
        let neg = negative(10);
        assert!(exp_bce_loss(1e-9, 0, &neg).abs() < 1e-6);
    }

    #[test]
    fn fixation_reg_cases() {
        assert_eq!(fixation_reg_loss((0.1, 0.2), (0.9, 0.9), 3, 5), 0.0);
        assert_eq!(fixation_reg_loss((0.4, 0.4), (0.4, 0.4), 6, 5), 0.0);
        let d = fixation_reg_loss((0.0, 0.0), (0.3, 0.4), 6, 5);
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rewards_bounded_under_fuzz() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cfg = RewardConfig::default();
        for _ in 0..10_000 {
            let t_a = rng.gen_range(1..40usize);
            let horizon = t_a + rng.gen_range(1..20usize);
            let ann = if rng.gen_bool(0.5) { positive(t_a, horizon) } else { negative(horizon) };
            let t = rng.gen_range(0..horizon);
            let score: f64 = rng.gen();
            let r_a = anticipation_reward(score, &ann, t, &cfg);
            assert!((0.0..=1.0).contains(&r_a));
            let r_f = fixation_reward((rng.gen(), rng.gen()), (rng.gen(), rng.gen()), t, t_a, cfg.eta);
            assert!((0.0..=1.0).contains(&r_f));
        }
    }
}
