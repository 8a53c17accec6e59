//! Training-time perturbations of normalised skeleton sequences.
//!
//! Geometry is perturbed on the joints and the descriptors are recomputed
//! afterwards, so velocities and accelerations stay consistent with the
//! perturbed positions.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::AugmentConfig;
use crate::features::NormalizedSkeleton;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Shift applied to both segment boundaries, in frames.
    pub shift: i64,
    /// Rotation about the pelvis, radians.
    pub theta: f64,
    pub scale: f64,
    pub noise_sigma: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            shift: 0,
            theta: 0.0,
            scale: 1.0,
            noise_sigma: 0.0,
        }
    }

    /// Draws one parameter set; disabled augmentations stay at identity and
    /// consume no randomness.
    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        let mut p = Self::identity();
        if cfg.mode.temporal() && cfg.max_jitter > 0 {
            p.shift = rng.random_range(-cfg.max_jitter..=cfg.max_jitter);
        }
        if cfg.mode.geometric() {
            if cfg.max_rotation > 0.0 {
                p.theta = rng.random_range(-cfg.max_rotation..=cfg.max_rotation);
            }
            if cfg.scale_max > cfg.scale_min {
                p.scale = rng.random_range(cfg.scale_min..=cfg.scale_max);
            }
        }
        if cfg.mode.noise() {
            p.noise_sigma = cfg.noise_sigma;
        }
        p
    }
}

/// Shifts an inclusive `[start, end]` range by `shift`, clamped to `0..len`.
pub fn shift_bounds(start: usize, end: usize, shift: i64, len: usize) -> (usize, usize) {
    let last = len.saturating_sub(1) as i64;
    let s = (start as i64 + shift).clamp(0, last) as usize;
    let e = (end as i64 + shift).clamp(0, last) as usize;
    (s, e.max(s))
}

/// Noise on every observed coordinate, then rotation and scaling about the pelvis.
pub fn perturb_skeletons<R: Rng + ?Sized>(
    seq: &[Option<NormalizedSkeleton>],
    p: &AugmentParams,
    rng: &mut R,
) -> Vec<Option<NormalizedSkeleton>> {
    let noise = (p.noise_sigma > 0.0).then(|| Normal::new(0.0, p.noise_sigma).expect("positive sigma"));
    let (sin, cos) = p.theta.sin_cos();
    seq.iter()
        .map(|ns| {
            let mut ns = (*ns)?;
            for (pt, &seen) in ns.joints.iter_mut().zip(&ns.observed) {
                if let (Some(n), true) = (&noise, seen) {
                    pt[0] += n.sample(rng);
                    pt[1] += n.sample(rng);
                }
                let [x, y] = *pt;
                *pt = [p.scale * (x * cos - y * sin), p.scale * (x * sin + y * cos)];
            }
            Some(ns)
        })
        .collect()
}
