//! Pinhole cameras, frustum-box visibility, and per-Gaussian cue lookup.
//!
//! Camera axes follow the usual pinhole convention: x right, y down, z forward.
//! The world frame is z-up. Pixel `(i, j)` is centered at continuous image
//! coordinates `(i, j)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::SemanticGaussian;

/// Depth value stored for pixels whose ray hits nothing.
pub const NO_SURFACE_DEPTH: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Intrinsics {
    /// 160x120 sensor with a ~77 degree horizontal field of view.
    fn default() -> Self {
        Self {
            fx: 100.0,
            fy: 100.0,
            cx: 79.5,
            cy: 59.5,
            width: 160,
            height: 120,
        }
    }
}

/// Local prediction volume in front of the camera, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrustumBox {
    /// Extent along the optical axis.
    pub depth: f64,
    /// Horizontal extent across the optical axis.
    pub width: f64,
    /// Vertical extent.
    pub height: f64,
}

impl Default for FrustumBox {
    fn default() -> Self {
        Self {
            depth: 4.8,
            width: 4.8,
            height: 2.88,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
    pub intrinsics: Intrinsics,
    pub frustum: FrustumBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    InFront { u: f64, v: f64, z: f64 },
    Behind,
}

impl CameraFrame {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        intrinsics: Intrinsics,
    ) -> Result<Self> {
        let frame = Self {
            rotation,
            translation,
            intrinsics,
            frustum: FrustumBox::default(),
        };
        frame.validate()?;
        Ok(frame)
    }

    /// Camera at `eye` looking toward `target`, with world z as up.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, intrinsics: Intrinsics) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidFrame("eye and target coincide".into()))?;
        let right = forward
            .cross(&Vector3::z())
            .try_normalize(1e-9)
            .ok_or_else(|| Error::InvalidFrame("view direction parallel to up".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(rotation, translation, intrinsics)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
        if ortho > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidFrame(format!(
                "rotation is not proper orthonormal (|RR^T - I| = {ortho:e}, det = {})",
                r.determinant()
            )));
        }
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || k.width == 0 || k.height == 0 {
            return Err(Error::InvalidFrame("focal lengths and image size must be positive".into()));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidFrame("non-finite translation".into()));
        }
        Ok(())
    }

    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_world + self.translation
    }

    pub fn to_world(&self, p_cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p_cam - self.translation)
    }

    pub fn project(&self, p_world: &Vector3<f64>) -> Projection {
        let p = self.to_camera(p_world);
        if p.z <= 0.0 {
            return Projection::Behind;
        }
        let k = &self.intrinsics;
        Projection::InFront {
            u: k.fx * p.x / p.z + k.cx,
            v: k.fy * p.y / p.z + k.cy,
            z: p.z,
        }
    }

    /// World point at image location `(u, v)` with camera depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let p_cam = Vector3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
        self.to_world(&p_cam)
    }

    /// Camera-frame ray through pixel `(i, j)`, scaled to unit depth.
    pub fn pixel_ray(&self, i: u32, j: u32) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((i as f64 - k.cx) / k.fx, (j as f64 - k.cy) / k.fy, 1.0)
    }

    fn in_image(&self, u: f64, v: f64) -> bool {
        let k = &self.intrinsics;
        u >= 0.0 && u < k.width as f64 && v >= 0.0 && v < k.height as f64
    }

    fn in_frustum_box(&self, p_cam: &Vector3<f64>) -> bool {
        let b = &self.frustum;
        p_cam.z > 0.0
            && p_cam.z <= b.depth
            && p_cam.x.abs() <= 0.5 * b.width
            && p_cam.y.abs() <= 0.5 * b.height
    }

    /// Mean-only visibility: inside the image and inside the frustum box.
    pub fn is_visible(&self, g: &SemanticGaussian) -> bool {
        self.is_point_visible(&g.mean)
    }

    pub fn is_point_visible(&self, p_world: &Vector3<f64>) -> bool {
        let p = self.to_camera(p_world);
        if !self.in_frustum_box(&p) {
            return false;
        }
        match self.project(p_world) {
            Projection::InFront { u, v, .. } => self.in_image(u, v),
            Projection::Behind => false,
        }
    }

    /// Nearest pixel to `(u, v)`, clamped into the image.
    pub fn nearest_pixel(&self, u: f64, v: f64) -> (u32, u32) {
        let k = &self.intrinsics;
        let i = (u.round().max(0.0) as u32).min(k.width - 1);
        let j = (v.round().max(0.0) as u32).min(k.height - 1);
        (i, j)
    }
}

/// Per-pixel geometric cues of one frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricCues {
    pub width: u32,
    pub height: u32,
    /// Unit normals in camera coordinates; zero where there is no surface.
    pub normals: Vec<Vector3<f64>>,
    pub curvature: Vec<f64>,
    /// Camera depth; [`NO_SURFACE_DEPTH`] where there is no surface.
    pub depth: Vec<f64>,
}

impl GeometricCues {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Self {
            width,
            height,
            normals: vec![Vector3::zeros(); n],
            curvature: vec![0.0; n],
            depth: vec![NO_SURFACE_DEPTH; n],
        }
    }

    pub fn index(&self, i: u32, j: u32) -> usize {
        (j * self.width + i) as usize
    }

    pub fn has_surface(&self, idx: usize) -> bool {
        self.depth[idx] > NO_SURFACE_DEPTH
    }

    pub fn validate(&self) -> Result<()> {
        let n = (self.width * self.height) as usize;
        if self.normals.len() != n || self.curvature.len() != n || self.depth.len() != n {
            return Err(Error::Format("cue map sizes disagree with width x height".into()));
        }
        for idx in 0..n {
            if self.curvature[idx] < 0.0 || !self.curvature[idx].is_finite() {
                return Err(Error::Format(format!("pixel {idx}: invalid curvature")));
            }
            if self.has_surface(idx) && (self.normals[idx].norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Format(format!("pixel {idx}: normal is not unit length")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueSample {
    pub normal_world: Vector3<f64>,
    pub kappa: f64,
    pub valid: bool,
}

/// Nearest-pixel cue lookup at the Gaussian's projection.
///
/// Panics if the Gaussian is not visible in `frame`.
pub fn sample_cues(frame: &CameraFrame, cues: &GeometricCues, g: &SemanticGaussian) -> CueSample {
    assert!(frame.is_visible(g), "sample_cues requires a visible gaussian (id {})", g.id);
    let Projection::InFront { u, v, .. } = frame.project(&g.mean) else {
        unreachable!("visible gaussians project in front of the camera");
    };
    let (i, j) = frame.nearest_pixel(u, v);
    let idx = cues.index(i, j);
    if !cues.has_surface(idx) {
        return CueSample {
            normal_world: Vector3::zeros(),
            kappa: 0.0,
            valid: false,
        };
    }
    CueSample {
        normal_world: frame.rotation.transpose() * cues.normals[idx],
        kappa: cues.curvature[idx],
        valid: true,
    }
}
