//! Plane-regularized position refinement.
//!
//! A position residual is split along the sampled surface normal and its
//! normal component is suppressed by a weight `w` fused from a curvature cue
//! and a proximity-to-depth cue: `w * perp + (1 - w) * d_m`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{sample_cues, CameraFrame, GeometricCues};
use crate::config::{CurvatureOrientation, FusionStrategy, RefinementConfig};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianDelta, SemanticGaussian};
use crate::knn::DepthIndex;

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintWeights {
    pub w_kappa: f64,
    pub w_depth: f64,
    pub w_fused: f64,
}

/// Splits `d_m` into its components along and across the unit normal `n`.
pub fn decompose_delta(d_m: &Vector3<f64>, n: &Vector3<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let norm = n.norm();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(Error::NormalNotUnit { norm });
    }
    let parallel = n * d_m.dot(n);
    let perp = d_m - parallel;
    Ok((parallel, perp))
}

pub fn constrain_delta(d_m: &Vector3<f64>, n: &Vector3<f64>, w: f64) -> Result<Vector3<f64>> {
    let (_, perp) = decompose_delta(d_m, n)?;
    Ok(perp * w + d_m * (1.0 - w))
}

pub fn curvature_weight(kappa: f64, cfg: &RefinementConfig) -> Result<f64> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::NegativeCurvature(kappa));
    }
    let (lo, hi) = (cfg.kappa_low, cfg.kappa_high);
    let (w_min, w_max) = (cfg.w_min, cfg.w_max);
    let t = (kappa - lo) / (hi - lo);
    Ok(match cfg.curvature_orientation {
        CurvatureOrientation::AsWritten => {
            if kappa <= lo {
                w_min
            } else if kappa >= hi {
                w_max
            } else {
                w_min + t * (w_max - w_min)
            }
        }
        CurvatureOrientation::Inverted => {
            if kappa <= lo {
                w_max
            } else if kappa >= hi {
                w_min
            } else {
                w_max - t * (w_max - w_min)
            }
        }
    })
}

pub fn depth_weight(d_min: f64, cfg: &RefinementConfig) -> f64 {
    ((cfg.d_far - d_min) / (cfg.d_far - cfg.d_near)).clamp(0.0, 1.0)
}

/// Cue values some strategies consult besides the two weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionContext {
    pub kappa: f64,
    /// Nearest-depth distance, `None` when no depth neighborhood exists.
    pub d_min: Option<f64>,
}

pub fn fuse_weights(
    w_depth: f64,
    w_kappa: f64,
    strategy: FusionStrategy,
    ctx: &FusionContext,
    cfg: &RefinementConfig,
) -> f64 {
    let w = match strategy {
        FusionStrategy::Product => w_depth * w_kappa,
        FusionStrategy::Max => w_depth.max(w_kappa),
        FusionStrategy::Min => w_depth.min(w_kappa),
        FusionStrategy::WeightedSum => 0.5 * w_depth + 0.5 * w_kappa,
        FusionStrategy::KappaOnly => w_kappa,
        FusionStrategy::DepthOnly => w_depth,
        FusionStrategy::Adaptive => match ctx.d_min {
            Some(d) if d <= cfg.d_far => w_depth,
            _ => w_kappa,
        },
        FusionStrategy::ConfidenceBased => w_kappa * w_depth * w_depth,
        FusionStrategy::RegionAdaptive => {
            if ctx.kappa >= cfg.kappa_high {
                w_depth.max(w_kappa)
            } else {
                w_depth * w_kappa
            }
        }
    };
    w.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefineStatus {
    Constrained,
    /// The projected pixel carries no surface.
    InvalidCue,
    /// No depth points were available.
    UnconstrainedFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub delta: GaussianDelta,
    pub weights: Option<ConstraintWeights>,
    pub status: RefineStatus,
}

/// Replaces the position residual of a visible Gaussian by its plane-constrained version.
pub fn refine_position(
    g: &SemanticGaussian,
    d: &GaussianDelta,
    frame: &CameraFrame,
    cues: &GeometricCues,
    cloud: &DepthIndex,
    cfg: &RefinementConfig,
) -> Result<RefineOutcome> {
    let sample = sample_cues(frame, cues, g);
    if !sample.valid {
        return Ok(RefineOutcome {
            delta: d.clone(),
            weights: None,
            status: RefineStatus::InvalidCue,
        });
    }
    let d_min = match cloud.nearest_depth_distance(&g.mean, cfg.knn_k, cfg.knn_aggregate) {
        Ok(v) => v,
        Err(Error::EmptyCloud) => {
            return Ok(RefineOutcome {
                delta: d.clone(),
                weights: None,
                status: RefineStatus::UnconstrainedFallback,
            })
        }
        Err(e) => return Err(e),
    };
    let w_kappa = curvature_weight(sample.kappa, cfg)?;
    let w_depth = depth_weight(d_min, cfg);
    let ctx = FusionContext {
        kappa: sample.kappa,
        d_min: Some(d_min),
    };
    let w_fused = fuse_weights(w_depth, w_kappa, cfg.fusion, &ctx, cfg);
    let mut delta = d.clone();
    delta.d_mean = constrain_delta(&d.d_mean, &sample.normal_world, w_fused)?;
    Ok(RefineOutcome {
        delta,
        weights: Some(ConstraintWeights {
            w_kappa,
            w_depth,
            w_fused,
        }),
        status: RefineStatus::Constrained,
    })
}
