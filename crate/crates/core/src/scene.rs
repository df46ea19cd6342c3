//! Procedural indoor scenes: an axis-aligned room with box objects.
//!
//! The room spans `[0, size]` on every axis. Surfaces are axis-aligned
//! rectangles: six inward-facing room faces plus the outward faces of every
//! object that are not flush against a room face. Cue maps are rendered by
//! casting one ray per pixel against that surface list.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraFrame, GeometricCues, Intrinsics};
use crate::classes::SemanticClass;
use crate::error::{Error, Result};
use crate::splat::{GridSpec, VoxelGrid};

/// Maps the largest neighbor normal deviation (radians) to curvature units;
/// a 90 degree crease reads as 25.
pub const CURVATURE_SCALE: f64 = 50.0 / PI;

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub class: SemanticClass,
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl SceneObject {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScene {
    /// Room extent; the room occupies `[0, room]`.
    pub room: Vector3<f64>,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub axis: usize,
    pub offset: f64,
    /// +1 or -1: direction of the normal along `axis`.
    pub sign: f64,
    /// Bounds on the two remaining axes, in ascending axis order.
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub class: SemanticClass,
}

impl Surface {
    pub fn normal(&self) -> Vector3<f64> {
        let mut n = Vector3::zeros();
        n[self.axis] = self.sign;
        n
    }

    fn other_axes(&self) -> [usize; 2] {
        match self.axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    pub fn closest_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let mut q = *p;
        q[self.axis] = self.offset;
        for (k, ax) in self.other_axes().into_iter().enumerate() {
            q[ax] = q[ax].clamp(self.lo[k], self.hi[k]);
        }
        q
    }

    pub fn signed_distance_to_plane(&self, p: &Vector3<f64>) -> f64 {
        self.sign * (p[self.axis] - self.offset)
    }

    /// Identifies the supporting plane together with its facing.
    pub fn plane_key(&self) -> (usize, bool, u64) {
        (self.axis, self.sign > 0.0, self.offset.to_bits())
    }

    /// Front-facing ray hit parameter, if any.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let da = d[self.axis];
        if da * self.sign >= 0.0 {
            return None;
        }
        let t = (self.offset - o[self.axis]) / da;
        if t <= HIT_EPS {
            return None;
        }
        for (k, ax) in self.other_axes().into_iter().enumerate() {
            let c = o[ax] + t * d[ax];
            if c < self.lo[k] || c > self.hi[k] {
                return None;
            }
        }
        Some(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestSurface {
    pub point: Vector3<f64>,
    pub distance: f64,
    pub surface: usize,
    pub class: SemanticClass,
}

impl SyntheticScene {
    pub fn empty_room(room: Vector3<f64>) -> Result<Self> {
        let s = Self {
            room,
            objects: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_objects(room: Vector3<f64>, objects: Vec<SceneObject>) -> Result<Self> {
        let s = Self { room, objects };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.room.iter().any(|&v| !(v >= 1.0) || !v.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "room dimensions must be >= 1 m, got {:?}",
                self.room.as_slice()
            )));
        }
        for (index, o) in self.objects.iter().enumerate() {
            let bad = |reason: String| Err(Error::InvalidObject { index, reason });
            if o.class == SemanticClass::Empty || o.class.is_structural() {
                return bad(format!("class '{}' is reserved for the room", o.class.name()));
            }
            if !(0..3).all(|i| o.min[i] < o.max[i]) {
                return bad(format!("min {:?} must be below max {:?}", o.min.as_slice(), o.max.as_slice()));
            }
            let tol = 1e-9;
            if !(0..3).all(|i| o.min[i] >= -tol && o.max[i] <= self.room[i] + tol) {
                return bad(format!(
                    "box [{:?}, {:?}] leaves the room",
                    o.min.as_slice(),
                    o.max.as_slice()
                ));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::zeros(), self.room)
    }

    pub fn center(&self) -> Vector3<f64> {
        self.room * 0.5
    }

    /// Visible planar surfaces: room faces first, then object faces.
    pub fn surfaces(&self) -> Vec<Surface> {
        let mut out = Vec::new();
        let r = self.room;
        for axis in 0..3 {
            let class = if axis == 2 { None } else { Some(SemanticClass::Wall) };
            let [a, b] = other_axes(axis);
            let (lo, hi) = ([0.0, 0.0], [r[a], r[b]]);
            out.push(Surface {
                axis,
                offset: 0.0,
                sign: 1.0,
                lo,
                hi,
                class: class.unwrap_or(SemanticClass::Floor),
            });
            out.push(Surface {
                axis,
                offset: r[axis],
                sign: -1.0,
                lo,
                hi,
                class: class.unwrap_or(SemanticClass::Ceiling),
            });
        }
        for o in &self.objects {
            for axis in 0..3 {
                let [a, b] = other_axes(axis);
                let (lo, hi) = ([o.min[a], o.min[b]], [o.max[a], o.max[b]]);
                if o.min[axis] > 0.0 {
                    out.push(Surface { axis, offset: o.min[axis], sign: -1.0, lo, hi, class: o.class });
                }
                if o.max[axis] < r[axis] {
                    out.push(Surface { axis, offset: o.max[axis], sign: 1.0, lo, hi, class: o.class });
                }
            }
        }
        out
    }

    /// Nearest surface hit along a ray, as `(t, surface index)`.
    pub fn cast_ray(&self, surfaces: &[Surface], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, s) in surfaces.iter().enumerate() {
            if let Some(t) = s.intersect(origin, dir) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        best
    }

    /// Closest point on any surface; ties go to the lower surface index.
    pub fn nearest_surface(&self, surfaces: &[Surface], p: &Vector3<f64>) -> NearestSurface {
        let mut best: Option<NearestSurface> = None;
        for (i, s) in surfaces.iter().enumerate() {
            let q = s.closest_point(p);
            let d = (q - p).norm();
            if best.is_none_or(|b| d < b.distance) {
                best = Some(NearestSurface { point: q, distance: d, surface: i, class: s.class });
            }
        }
        best.expect("a scene always has room surfaces")
    }

    /// Ground-truth label of a world point.
    pub fn label_at(&self, p: &Vector3<f64>, shell: f64) -> SemanticClass {
        if let Some(o) = self.objects.iter().find(|o| o.contains(p)) {
            return o.class;
        }
        let r = self.room;
        if !(0..3).all(|i| p[i] >= 0.0 && p[i] <= r[i]) {
            return SemanticClass::Empty;
        }
        if p.z < shell {
            SemanticClass::Floor
        } else if r.z - p.z < shell {
            SemanticClass::Ceiling
        } else if p.x < shell || r.x - p.x < shell || p.y < shell || r.y - p.y < shell {
            SemanticClass::Wall
        } else {
            SemanticClass::Empty
        }
    }
}

fn other_axes(axis: usize) -> [usize; 2] {
    match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

fn snap(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// Randomized scene: room dims on a 0.16 m lattice, 3 to 6 floor objects of
/// at least three distinct classes, and possibly a window.
pub fn generate_scene(seed: u64) -> SyntheticScene {
    const STEP: f64 = 0.08;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE4_E5EE_D000_0001);
    let room = Vector3::new(
        rng.random_range(24..=35) as f64 * 0.16,
        rng.random_range(24..=35) as f64 * 0.16,
        rng.random_range(15..=18) as f64 * 0.16,
    );

    let mut floor_classes: Vec<SemanticClass> = SemanticClass::OBJECT_CLASSES
        .iter()
        .copied()
        .filter(|c| *c != SemanticClass::Window)
        .collect();
    floor_classes.shuffle(&mut rng);
    let count = rng.random_range(3..=6);
    let mut objects: Vec<SceneObject> = Vec::new();
    let mut attempts = 0;
    while objects.len() < count && attempts < 500 {
        attempts += 1;
        // The first three objects take distinct classes.
        let class = if objects.len() < 3 {
            floor_classes[objects.len()]
        } else {
            floor_classes[rng.random_range(0..floor_classes.len())]
        };
        let shrink = if attempts > 200 { 0.5 } else { 1.0 };
        let sx = snap(rng.random_range(0.4..1.6) * shrink, STEP).max(STEP * 3.0);
        let sy = snap(rng.random_range(0.4..1.6) * shrink, STEP).max(STEP * 3.0);
        let sz = snap(rng.random_range(0.4..1.2), STEP);
        let x0 = snap(rng.random_range(0.16..(room.x - sx - 0.16)), STEP);
        let y0 = snap(rng.random_range(0.16..(room.y - sy - 0.16)), STEP);
        let candidate = SceneObject {
            class,
            min: Vector3::new(x0, y0, 0.0),
            max: Vector3::new(x0 + sx, y0 + sy, sz),
        };
        let clear = objects.iter().all(|o| {
            (0..2).any(|i| candidate.max[i] + 0.16 <= o.min[i] || o.max[i] + 0.16 <= candidate.min[i])
        });
        // Keep a free disc around the room center for cameras.
        let c = room * 0.5;
        let center_clear = (0..2).any(|i| candidate.max[i] < c[i] - 1.0 || candidate.min[i] > c[i] + 1.0);
        if clear && center_clear {
            objects.push(candidate);
        }
    }

    if rng.random_bool(0.5) {
        let width = snap(rng.random_range(0.8..1.6), STEP);
        let x0 = snap(rng.random_range(0.32..(room.x - width - 0.32)), STEP);
        objects.push(SceneObject {
            class: SemanticClass::Window,
            min: Vector3::new(x0, room.y - STEP, 0.96),
            max: Vector3::new(x0 + width, room.y, 1.92_f64.min(room.z - 0.32)),
        });
    }

    SyntheticScene { room, objects }
}

/// Cue maps, the world-frame depth cloud, and per-pixel surface ids of one frame.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub cues: GeometricCues,
    pub cloud: Vec<Vector3<f64>>,
    pub surface_ids: Vec<Option<u32>>,
}

pub fn render_cues(scene: &SyntheticScene, frame: &CameraFrame) -> RenderedFrame {
    let surfaces = scene.surfaces();
    let k: Intrinsics = frame.intrinsics;
    let (w, h) = (k.width, k.height);
    let origin = frame.camera_center();
    let rt: Matrix3<f64> = frame.rotation.transpose();

    let hits: Vec<Option<(f64, usize)>> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % w, idx / w);
            let dir = rt * frame.pixel_ray(i, j);
            scene.cast_ray(&surfaces, &origin, &dir)
        })
        .collect();

    let mut cues = GeometricCues::empty(w, h);
    let mut cloud = Vec::new();
    let mut surface_ids = vec![None; hits.len()];
    for (idx, hit) in hits.iter().enumerate() {
        if let Some((t, s)) = *hit {
            let (i, j) = (idx as u32 % w, idx as u32 / w);
            cues.depth[idx] = t;
            cues.normals[idx] = frame.rotation * surfaces[s].normal();
            surface_ids[idx] = Some(s as u32);
            cloud.push(origin + t * (rt * frame.pixel_ray(i, j)));
        }
    }

    for j in 0..h {
        for i in 0..w {
            let idx = cues.index(i, j);
            let Some(s) = surface_ids[idx] else { continue };
            let key = surfaces[s as usize].plane_key();
            let n = cues.normals[idx];
            let mut worst: f64 = 0.0;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if (di == 0 && dj == 0) || ni < 0 || nj < 0 || ni >= w as i64 || nj >= h as i64 {
                        continue;
                    }
                    let nidx = cues.index(ni as u32, nj as u32);
                    let dev = match surface_ids[nidx] {
                        None => FRAC_PI_2,
                        Some(ns) if surfaces[ns as usize].plane_key() == key => 0.0,
                        Some(_) => n.dot(&cues.normals[nidx]).clamp(-1.0, 1.0).acos().max(FRAC_PI_2),
                    };
                    worst = worst.max(dev);
                }
            }
            cues.curvature[idx] = CURVATURE_SCALE * worst;
        }
    }

    RenderedFrame {
        cues,
        cloud,
        surface_ids,
    }
}

/// Rigid map from a grid's local frame to the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl GridPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }
}

pub fn voxelize_gt(scene: &SyntheticScene, spec: &GridSpec) -> VoxelGrid {
    voxelize_gt_posed(scene, spec, &GridPose::identity())
}

/// Labels voxel centers of a grid placed in the world by `pose`; the room
/// shell is one voxel thick.
pub fn voxelize_gt_posed(scene: &SyntheticScene, spec: &GridSpec, pose: &GridPose) -> VoxelGrid {
    let labels: Vec<u8> = (0..spec.num_voxels())
        .into_par_iter()
        .map(|idx| scene.label_at(&pose.to_world(&spec.center_of(idx)), spec.voxel_size).id())
        .collect();
    let density = labels.iter().map(|&l| if l != 0 { 1.0 } else { 0.0 }).collect();
    VoxelGrid {
        spec: *spec,
        labels,
        density,
    }
}

/// Cameras on a horizontal circle around the room center, looking outward
/// and pitched by `pitch` radians (negative looks down).
pub fn orbit_trajectory(
    scene: &SyntheticScene,
    frames: usize,
    radius: f64,
    height: f64,
    pitch: f64,
    intrinsics: Intrinsics,
) -> Result<Vec<CameraFrame>> {
    let c = scene.center();
    (0..frames)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / frames as f64;
            let eye = Vector3::new(c.x + radius * theta.cos(), c.y + radius * theta.sin(), height);
            let dir = Vector3::new(theta.cos() * pitch.cos(), theta.sin() * pitch.cos(), pitch.sin());
            CameraFrame::look_at(eye, eye + dir, intrinsics)
        })
        .collect()
}
