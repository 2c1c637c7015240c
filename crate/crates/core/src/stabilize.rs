//! Hover-drift removal.
//!
//! Each frame is registered to a reference frame through a similarity
//! transform estimated from point correspondences with MLESAC: minimal
//! two-point hypotheses are scored by the negative log-likelihood of a
//! Gaussian-inlier / uniform-outlier mixture, and the winner is refined by
//! least squares on its inliers.
//!
//! Feature detection and matching happen upstream; correspondences are an input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{rotate, wrap_pi};
use crate::Vec2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StabilizeError {
    #[error("at least 2 correspondences are required, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("every minimal sample is degenerate")]
    DegenerateSample,
    #[error("no consensus: inlier ratio {ratio:.3} below minimum {min:.3}")]
    NoConsensus { ratio: f64, min: f64 },
    #[error("estimated scale {0} outside the plausibility gate")]
    ImplausibleScale(f64),
    #[error("invalid transform: {0}")]
    InvalidTransform(&'static str),
}

/// Matched point pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub ref_pt: Vec2,
    pub cur_pt: Vec2,
}

impl Correspondence {
    pub fn new(ref_pt: Vec2, cur_pt: Vec2) -> Self {
        Self { ref_pt, cur_pt }
    }
}

/// Maps current-frame pixels into the reference frame:
/// `ref = scale · R(rotation) · cur + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    /// Radians.
    pub rotation: f64,
    pub translation: [f64; 2],
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: f64, translation: Vec2) -> Result<Self, StabilizeError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(StabilizeError::InvalidTransform("scale must be positive"));
        }
        if !rotation.is_finite() || !translation.x.is_finite() || !translation.y.is_finite() {
            return Err(StabilizeError::InvalidTransform("non-finite parameter"));
        }
        Ok(Self { scale, rotation: wrap_pi(rotation), translation: [translation.x, translation.y] })
    }

    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: 0.0, translation: [0.0, 0.0] }
    }

    pub fn t(&self) -> Vec2 {
        Vec2::new(self.translation[0], self.translation[1])
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        rotate(p, self.rotation) * self.scale + self.t()
    }

    pub fn inverse(&self) -> Self {
        let scale = 1.0 / self.scale;
        let rotation = -self.rotation;
        let t = -rotate(self.t(), rotation) * scale;
        Self { scale, rotation: wrap_pi(rotation), translation: [t.x, t.y] }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let t = self.apply(other.t());
        Self {
            scale: self.scale * other.scale,
            rotation: wrap_pi(self.rotation + other.rotation),
            translation: [t.x, t.y],
        }
    }

    /// Exact solution from two correspondences; `None` if the current-frame
    /// points coincide.
    pub fn from_two(a: &Correspondence, b: &Correspondence) -> Option<Self> {
        let dc = b.cur_pt - a.cur_pt;
        let dr = b.ref_pt - a.ref_pt;
        let n = dc.norm_squared();
        if n == 0.0 {
            return None;
        }
        // complex division dr / dc
        let re = (dr.x * dc.x + dr.y * dc.y) / n;
        let im = (dr.y * dc.x - dr.x * dc.y) / n;
        let scale = re.hypot(im);
        if scale == 0.0 {
            return None;
        }
        let rotation = im.atan2(re);
        let t = a.ref_pt - rotate(a.cur_pt, rotation) * scale;
        Some(Self { scale, rotation, translation: [t.x, t.y] })
    }

    /// Least-squares similarity over all given correspondences.
    pub fn least_squares(corrs: &[Correspondence]) -> Option<Self> {
        if corrs.len() < 2 {
            return None;
        }
        let n = corrs.len() as f64;
        let cm = corrs.iter().map(|c| c.cur_pt).sum::<Vec2>() / n;
        let rm = corrs.iter().map(|c| c.ref_pt).sum::<Vec2>() / n;
        let (mut re, mut im, mut den) = (0.0, 0.0, 0.0);
        for c in corrs {
            let dc = c.cur_pt - cm;
            let dr = c.ref_pt - rm;
            re += dc.x * dr.x + dc.y * dr.y;
            im += dc.x * dr.y - dc.y * dr.x;
            den += dc.norm_squared();
        }
        if den == 0.0 {
            return None;
        }
        let (re, im) = (re / den, im / den);
        let scale = re.hypot(im);
        if scale == 0.0 {
            return None;
        }
        let rotation = im.atan2(re);
        let t = rm - rotate(cm, rotation) * scale;
        Some(Self { scale, rotation, translation: [t.x, t.y] })
    }

    /// Reference-frame residual of one correspondence, pixels.
    pub fn residual(&self, c: &Correspondence) -> f64 {
        (self.apply(c.cur_pt) - c.ref_pt).norm()
    }
}

/// Maps current-frame pixels into reference-frame pixels.
pub fn apply_transform(t: &SimilarityTransform, pts: &[Vec2]) -> Vec<Vec2> {
    pts.iter().map(|&p| t.apply(p)).collect()
}

/// Parameters of the MLESAC estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustFitConfig {
    /// Inlier noise standard deviation, pixels.
    pub sigma: f64,
    /// Inlier residual threshold in units of `sigma`.
    pub threshold_sigmas: f64,
    /// Fixed inlier mixing weight of the likelihood.
    pub mixing: f64,
    /// Image size, bounds the uniform outlier density.
    pub image_size: [f64; 2],
    pub max_iterations: usize,
    /// Probability of drawing at least one all-inlier sample.
    pub confidence: f64,
    pub min_inlier_ratio: f64,
    /// Minimal samples closer than this (pixels) are rejected.
    pub min_sample_separation: f64,
    /// Accepted scale range.
    pub scale_gate: [f64; 2],
    pub seed: u64,
}

impl Default for RobustFitConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            threshold_sigmas: 3.0,
            mixing: 0.5,
            image_size: [1920.0, 1080.0],
            max_iterations: 2000,
            confidence: 0.99,
            min_inlier_ratio: 0.3,
            min_sample_separation: 1.0,
            scale_gate: [0.5, 2.0],
            seed: 0,
        }
    }
}

impl RobustFitConfig {
    pub fn threshold(&self) -> f64 {
        self.threshold_sigmas * self.sigma
    }
}

/// Diagnostics of a robust fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustFitReport {
    pub inlier_count: usize,
    pub inlier_ratio: f64,
    pub residual_rms: f64,
    pub iterations_used: usize,
}

/// MLESAC cost of a hypothesis (lower is better).
pub fn mixture_score(t: &SimilarityTransform, corrs: &[Correspondence], cfg: &RobustFitConfig) -> f64 {
    let var = cfg.sigma * cfg.sigma;
    let gauss_norm = cfg.mixing / (2.0 * std::f64::consts::PI * var);
    let uniform = (1.0 - cfg.mixing) / (cfg.image_size[0] * cfg.image_size[1]);
    corrs
        .iter()
        .map(|c| {
            let r2 = (t.apply(c.cur_pt) - c.ref_pt).norm_squared();
            -(gauss_norm * (-r2 / (2.0 * var)).exp() + uniform).ln()
        })
        .sum()
}

fn inliers(t: &SimilarityTransform, corrs: &[Correspondence], threshold: f64) -> Vec<Correspondence> {
    corrs.iter().filter(|c| t.residual(c) < threshold).copied().collect()
}

fn adaptive_iterations(inlier_ratio: f64, cfg: &RobustFitConfig) -> usize {
    let w2 = inlier_ratio * inlier_ratio;
    if w2 >= 1.0 {
        return 1;
    }
    if w2 <= 0.0 {
        return cfg.max_iterations;
    }
    let n = (1.0 - cfg.confidence).ln() / (1.0 - w2).ln();
    (n.ceil() as usize).clamp(1, cfg.max_iterations)
}

fn is_degenerate(a: &Correspondence, b: &Correspondence, min_sep: f64) -> bool {
    (a.cur_pt - b.cur_pt).norm() < min_sep || (a.ref_pt - b.ref_pt).norm() < min_sep
}

fn any_valid_pair(corrs: &[Correspondence], min_sep: f64) -> bool {
    (0..corrs.len()).any(|i| (i + 1..corrs.len()).any(|j| !is_degenerate(&corrs[i], &corrs[j], min_sep)))
}

/// Robust similarity estimate, current frame → reference frame.
pub fn estimate_transform(
    corrs: &[Correspondence],
    cfg: &RobustFitConfig,
) -> Result<(SimilarityTransform, RobustFitReport), StabilizeError> {
    let n = corrs.len();
    if n < 2 {
        return Err(StabilizeError::InsufficientCorrespondences(n));
    }
    if !any_valid_pair(corrs, cfg.min_sample_separation) {
        return Err(StabilizeError::DegenerateSample);
    }
    let threshold = cfg.threshold();
    let in_gate = |t: &SimilarityTransform| t.scale >= cfg.scale_gate[0] && t.scale <= cfg.scale_gate[1];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best: Option<(f64, SimilarityTransform)> = None;
    let mut needed = cfg.max_iterations;
    let mut iterations = 0;
    let mut draws = 0;
    let max_draws = cfg.max_iterations.saturating_mul(20).max(1000);
    while iterations < needed && draws < max_draws {
        draws += 1;
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if is_degenerate(&corrs[i], &corrs[j], cfg.min_sample_separation) {
            continue;
        }
        iterations += 1;
        let Some(hyp) = SimilarityTransform::from_two(&corrs[i], &corrs[j]) else { continue };
        if !in_gate(&hyp) {
            continue;
        }
        let score = mixture_score(&hyp, corrs, cfg);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            let ratio = inliers(&hyp, corrs, threshold).len() as f64 / n as f64;
            needed = adaptive_iterations(ratio, cfg).max(iterations);
            best = Some((score, hyp));
        }
    }
    let Some((_, mut model)) = best else {
        return Err(if iterations == 0 {
            StabilizeError::DegenerateSample
        } else {
            StabilizeError::NoConsensus { ratio: 0.0, min: cfg.min_inlier_ratio }
        });
    };

    let mut set = inliers(&model, corrs, threshold);
    for _ in 0..5 {
        let Some(refit) = SimilarityTransform::least_squares(&set) else { break };
        let next = inliers(&refit, corrs, threshold);
        model = refit;
        if next == set {
            break;
        }
        set = next;
    }
    let inlier_ratio = set.len() as f64 / n as f64;
    if inlier_ratio < cfg.min_inlier_ratio {
        return Err(StabilizeError::NoConsensus { ratio: inlier_ratio, min: cfg.min_inlier_ratio });
    }
    if !in_gate(&model) {
        return Err(StabilizeError::ImplausibleScale(model.scale));
    }
    let residual_rms = if set.is_empty() {
        0.0
    } else {
        (set.iter().map(|c| model.residual(c).powi(2)).sum::<f64>() / set.len() as f64).sqrt()
    };
    model.rotation = wrap_pi(model.rotation);
    Ok((model, RobustFitReport { inlier_count: set.len(), inlier_ratio, residual_rms, iterations_used: iterations }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn truth() -> SimilarityTransform {
        SimilarityTransform::new(1.02, 0.5f64.to_radians(), Vec2::new(3.0, -2.0)).unwrap()
    }

    /// `n` correspondences whose reference points are `t` applied to random
    /// current-frame points, with a fraction of uniform outliers.
    fn synth(
        rng: &mut ChaCha8Rng,
        t: &SimilarityTransform,
        n: usize,
        outliers: f64,
        sigma: f64,
    ) -> Vec<Correspondence> {
        let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        let n_out = (n as f64 * outliers).round() as usize;
        (0..n)
            .map(|k| {
                let cur = Vec2::new(rng.random_range(0.0..1920.0), rng.random_range(0.0..1080.0));
                let r = if k < n_out {
                    Vec2::new(rng.random_range(0.0..1920.0), rng.random_range(0.0..1080.0))
                } else if sigma > 0.0 {
                    t.apply(cur) + Vec2::new(noise.sample(rng), noise.sample(rng))
                } else {
                    t.apply(cur)
                };
                Correspondence::new(r, cur)
            })
            .collect()
    }

    #[test]
    fn exact_recovery_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = synth(&mut rng, &truth(), 100, 0.0, 0.0);
        let (t, rep) = estimate_transform(&c, &RobustFitConfig::default()).unwrap();
        assert!((t.scale - 1.02).abs() < 1e-6);
        assert!((t.rotation - 0.5f64.to_radians()).abs() < 1e-6);
        assert!((t.t() - truth().t()).norm() < 1e-4);
        assert_eq!(rep.inlier_count, 100);
    }

    #[test]
    fn identity_scene() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = synth(&mut rng, &SimilarityTransform::identity(), 50, 0.0, 0.0);
        let (t, rep) = estimate_transform(&c, &RobustFitConfig::default()).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12 && t.rotation.abs() < 1e-12 && t.t().norm() < 1e-9);
        assert_eq!(rep.inlier_ratio, 1.0);
    }

    #[test]
    fn half_outliers_monte_carlo() {
        let cfg = RobustFitConfig { sigma: 0.5, ..Default::default() };
        let mut ok = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let c = synth(&mut rng, &truth(), 100, 0.5, 0.5);
            let (t, rep) = estimate_transform(&c, &RobustFitConfig { seed, ..cfg.clone() }).unwrap();
            let good = (t.scale - 1.02).abs() < 1e-3
                && (t.rotation - 0.5f64.to_radians()).abs().to_degrees() < 0.05
                && (t.t() - truth().t()).norm() < 0.5
                && (rep.inlier_ratio - 0.5).abs() <= 0.05;
            ok += good as usize;
        }
        assert!(ok >= 95, "{ok}/100");
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = synth(&mut rng, &truth(), 80, 0.4, 0.5);
        let cfg = RobustFitConfig { seed: 42, ..Default::default() };
        let a = estimate_transform(&c, &cfg).unwrap();
        let b = estimate_transform(&c, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn true_model_scores_below_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = RobustFitConfig::default();
        let c = synth(&mut rng, &truth(), 100, 0.3, 0.5);
        assert!(mixture_score(&truth(), &c, &cfg) < mixture_score(&SimilarityTransform::identity(), &c, &cfg));
    }

    #[test]
    fn errors() {
        let p = Correspondence::new(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0));
        assert_eq!(
            estimate_transform(&[p], &RobustFitConfig::default()),
            Err(StabilizeError::InsufficientCorrespondences(1))
        );
        assert_eq!(estimate_transform(&[p; 10], &RobustFitConfig::default()), Err(StabilizeError::DegenerateSample));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = synth(&mut rng, &truth(), 100, 0.95, 0.5);
        assert!(matches!(estimate_transform(&c, &RobustFitConfig::default()), Err(StabilizeError::NoConsensus { .. })));
    }

    #[test]
    fn warped_detections_restored() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let drift = SimilarityTransform::new(0.99, -0.8f64.to_radians(), Vec2::new(-6.0, 4.5)).unwrap();
        // drift maps ref → cur; the estimator recovers cur → ref
        let to_ref = drift.inverse();
        let c = synth(&mut rng, &to_ref, 120, 0.5, 0.5);
        let (t, _) = estimate_transform(&c, &RobustFitConfig { sigma: 0.5, ..Default::default() }).unwrap();
        let dets = [Vec2::new(100.0, 200.0), Vec2::new(1800.0, 900.0), Vec2::new(960.0, 540.0)];
        let seen = apply_transform(&drift, &dets);
        for (back, orig) in apply_transform(&t, &seen).iter().zip(&dets) {
            assert!((back - orig).norm() < 0.5);
        }
    }

    proptest! {
        #[test]
        fn minimal_solver_exact(s in 0.5f64..2.0, r in -3.1f64..3.1, tx in -100f64..100.0, ty in -100f64..100.0,
                                ax in 0f64..1920.0, ay in 0f64..1080.0, bx in 0f64..1920.0, by in 0f64..1080.0) {
            let t = SimilarityTransform::new(s, r, Vec2::new(tx, ty)).unwrap();
            let (a, b) = (Vec2::new(ax, ay), Vec2::new(bx, by));
            prop_assume!((a - b).norm() > 1.0);
            let ca = Correspondence::new(t.apply(a), a);
            let cb = Correspondence::new(t.apply(b), b);
            let h = SimilarityTransform::from_two(&ca, &cb).unwrap();
            prop_assert!(h.residual(&ca) < 1e-9 && h.residual(&cb) < 1e-9);
            prop_assert!((h.scale - s).abs() < 1e-9);
        }

        #[test]
        fn inverse_is_identity(s in 0.5f64..2.0, r in -3.1f64..3.1, tx in -100f64..100.0, ty in -100f64..100.0,
                               px in 0f64..1920.0, py in 0f64..1080.0) {
            let t = SimilarityTransform::new(s, r, Vec2::new(tx, ty)).unwrap();
            let p = Vec2::new(px, py);
            prop_assert!((t.inverse().apply(t.apply(p)) - p).norm() < 1e-9);
            prop_assert!((t.compose(&t.inverse()).apply(p) - p).norm() < 1e-9);
        }
    }
}
