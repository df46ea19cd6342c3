//! Semantic Gaussians, their residual deltas, and the covariance construction.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::classes::NUM_CLASSES;
use crate::quat::Quat;

pub type Logits = [f64; NUM_CLASSES];

/// Smallest scale component kept after a residual update, in meters.
pub const SCALE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGaussian {
    pub id: u64,
    pub mean: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: Quat,
    pub opacity: f64,
    pub logits: Logits,
    /// Retention weight used by the fixed-weight baseline update.
    pub fixed_weight: f64,
}

/// Proposed residual for one Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDelta {
    pub d_mean: Vector3<f64>,
    pub d_scale: Vector3<f64>,
    pub d_rotation: Quat,
    pub d_opacity: f64,
    pub d_logits: Logits,
}

impl GaussianDelta {
    pub fn zero() -> Self {
        Self {
            d_mean: Vector3::zeros(),
            d_scale: Vector3::zeros(),
            d_rotation: Quat::IDENTITY,
            d_opacity: 0.0,
            d_logits: [0.0; NUM_CLASSES],
        }
    }
}

impl SemanticGaussian {
    pub fn new(id: u64, mean: Vector3<f64>, scale: f64) -> Self {
        Self {
            id,
            mean,
            scale: Vector3::repeat(scale),
            rotation: Quat::IDENTITY,
            opacity: 0.1,
            logits: [0.0; NUM_CLASSES],
            fixed_weight: 0.5,
        }
    }

    /// Checks the element invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Option<String> {
        if (self.rotation.norm() - 1.0).abs() > 1e-9 {
            return Some(format!("rotation norm {}", self.rotation.norm()));
        }
        if self.scale.iter().any(|&s| !(s > 0.0)) {
            return Some(format!("non-positive scale {:?}", self.scale));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Some(format!("opacity {} outside [0,1]", self.opacity));
        }
        if !(0.0..=1.0).contains(&self.fixed_weight) {
            return Some(format!("fixed weight {} outside [0,1]", self.fixed_weight));
        }
        if self.mean.iter().chain(self.logits.iter()).any(|v| !v.is_finite()) {
            return Some("non-finite mean or logits".into());
        }
        None
    }

    /// Rotation as a matrix (columns are the Gaussian's principal axes).
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix()
    }

    /// `R diag(s^2) R^T`, assembled so the result is exactly symmetric.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let d = self.scale.component_mul(&self.scale);
        symmetric_sandwich(&r, &d)
    }

    /// `R diag(1/s^2) R^T`, the analytic inverse of [`covariance`](Self::covariance).
    pub fn precision(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let d = self.scale.map(|s| 1.0 / (s * s));
        symmetric_sandwich(&r, &d)
    }
}

fn symmetric_sandwich(r: &Matrix3<f64>, d: &Vector3<f64>) -> Matrix3<f64> {
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let v = (0..3).map(|k| r[(i, k)] * r[(j, k)] * d[k]).sum::<f64>();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Applies a residual: additive on mean, scale, opacity and logits,
/// left-multiplied on rotation.
pub fn compose_refined(g: &SemanticGaussian, d: &GaussianDelta) -> SemanticGaussian {
    let mut logits = g.logits;
    for (c, dc) in logits.iter_mut().zip(d.d_logits.iter()) {
        *c += dc;
    }
    SemanticGaussian {
        id: g.id,
        mean: g.mean + d.d_mean,
        scale: (g.scale + d.d_scale).map(|s| s.max(SCALE_FLOOR)),
        rotation: (d.d_rotation * g.rotation).normalized().canonical(),
        opacity: (g.opacity + d.d_opacity).clamp(0.0, 1.0),
        logits,
        fixed_weight: g.fixed_weight,
    }
}
