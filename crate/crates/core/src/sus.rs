//! Entropy-gated update of semantic Gaussians from Monte Carlo proposals.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::classes::NUM_CLASSES;
use crate::config::RefinementConfig;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianDelta, Logits, SemanticGaussian, SCALE_FLOOR};
use crate::quat::Quat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticDistribution {
    pub p: Logits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateDecision {
    pub ratio: f64,
    pub skipped: bool,
    pub entropy: f64,
}

/// Softmax with max subtraction.
pub fn softmax(logits: &Logits) -> Logits {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    out
}

pub fn mean_distribution(samples: &[Logits], c: &Logits) -> Result<SemanticDistribution> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut p = [0.0; NUM_CLASSES];
    for dc in samples {
        let mut shifted = *c;
        shifted.iter_mut().zip(dc).for_each(|(s, d)| *s += d);
        let q = softmax(&shifted);
        p.iter_mut().zip(&q).for_each(|(a, b)| *a += b);
    }
    let m = samples.len() as f64;
    p.iter_mut().for_each(|v| *v /= m);
    Ok(SemanticDistribution { p })
}

/// Shannon entropy divided by `ln(num_classes)`, clamped to `[0, 1]`.
pub fn normalized_entropy(dist: &SemanticDistribution, num_classes: usize) -> f64 {
    let h: f64 = dist
        .p
        .iter()
        .filter(|&&pj| pj > 0.0)
        .map(|&pj| -pj * pj.ln())
        .sum();
    (h / (num_classes as f64).ln()).clamp(0.0, 1.0)
}

/// Entropy above `tau_unc` becomes the update ratio; anything else is skipped.
pub fn update_ratio(entropy: f64, tau_unc: f64) -> UpdateDecision {
    let ratio = if entropy > tau_unc { entropy } else { 0.0 };
    UpdateDecision {
        ratio,
        skipped: ratio == 0.0,
        entropy,
    }
}

/// `ratio * g_new + (1 - ratio) * g`, with rotations blended by sign-aligned nlerp.
pub fn blended_update(
    g: &SemanticGaussian,
    g_new: &SemanticGaussian,
    ratio: f64,
) -> Result<SemanticGaussian> {
    if g.id != g_new.id {
        return Err(Error::IdMismatch {
            left: g.id,
            right: g_new.id,
        });
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("update ratio {ratio} outside [0,1]")));
    }
    if ratio == 0.0 {
        return Ok(g.clone());
    }
    if ratio == 1.0 {
        return Ok(g_new.clone());
    }
    let keep = 1.0 - ratio;
    let mut logits = [0.0; NUM_CLASSES];
    for (j, l) in logits.iter_mut().enumerate() {
        *l = ratio * g_new.logits[j] + keep * g.logits[j];
    }
    Ok(SemanticGaussian {
        id: g.id,
        mean: g_new.mean * ratio + g.mean * keep,
        scale: (g_new.scale * ratio + g.scale * keep).map(|s| s.max(SCALE_FLOOR)),
        rotation: g.rotation.nlerp(&g_new.rotation, ratio).canonical(),
        opacity: (ratio * g_new.opacity + keep * g.opacity).clamp(0.0, 1.0),
        logits,
        fixed_weight: g.fixed_weight,
    })
}

/// Adds `ratio` times the residual to `g` (rotation residual scaled by nlerp from identity).
pub fn scaled_residual_update(g: &SemanticGaussian, d: &GaussianDelta, ratio: f64) -> SemanticGaussian {
    if ratio == 0.0 {
        return g.clone();
    }
    let mut logits = g.logits;
    logits.iter_mut().zip(&d.d_logits).for_each(|(c, dc)| *c += ratio * dc);
    let d_rot = Quat::IDENTITY.nlerp(&d.d_rotation, ratio);
    SemanticGaussian {
        id: g.id,
        mean: g.mean + d.d_mean * ratio,
        scale: (g.scale + d.d_scale * ratio).map(|s| s.max(SCALE_FLOOR)),
        rotation: (d_rot * g.rotation).normalized().canonical(),
        opacity: (g.opacity + ratio * d.d_opacity).clamp(0.0, 1.0),
        logits,
        fixed_weight: g.fixed_weight,
    }
}

/// Componentwise mean of the samples; rotations are sign-aligned to the first
/// sample before averaging and renormalized.
pub fn mean_delta(samples: &[GaussianDelta]) -> Result<GaussianDelta> {
    let first = samples.first().ok_or(Error::EmptySamples)?;
    let m = samples.len() as f64;
    let mut d_mean = Vector3::zeros();
    let mut d_scale = Vector3::zeros();
    let mut d_opacity = 0.0;
    let mut d_logits = [0.0; NUM_CLASSES];
    let mut rot = Quat::new(0.0, 0.0, 0.0, 0.0);
    for s in samples {
        d_mean += s.d_mean;
        d_scale += s.d_scale;
        d_opacity += s.d_opacity;
        d_logits.iter_mut().zip(&s.d_logits).for_each(|(a, b)| *a += b);
        let aligned = if s.d_rotation.dot(&first.d_rotation) < 0.0 {
            s.d_rotation.scaled(-1.0)
        } else {
            s.d_rotation
        };
        rot = rot.add(&aligned);
    }
    d_logits.iter_mut().for_each(|v| *v /= m);
    Ok(GaussianDelta {
        d_mean: d_mean / m,
        d_scale: d_scale / m,
        d_rotation: rot.normalized().canonical(),
        d_opacity: d_opacity / m,
        d_logits,
    })
}

/// Entropy decision from `M` proposals plus the mean proposal to apply.
pub fn sample_and_decide(
    g: &SemanticGaussian,
    proposals: &[GaussianDelta],
    cfg: &RefinementConfig,
) -> Result<(UpdateDecision, GaussianDelta)> {
    let semantic: Vec<Logits> = proposals.iter().map(|d| d.d_logits).collect();
    let dist = mean_distribution(&semantic, &g.logits)?;
    let entropy = normalized_entropy(&dist, cfg.num_classes);
    Ok((update_ratio(entropy, cfg.tau_unc), mean_delta(proposals)?))
}
