//! Gaussian-to-voxel splatting.
//!
//! Each voxel center `v` accumulates `a(g, v) = o * exp(-0.5 * q)` with
//! `q = (v - m)^T Sigma^-1 (v - m)` over the Gaussians whose Mahalanobis
//! distance is within the cutoff. Contributions are added in ascending id
//! order so the result does not depend on input order or thread count.
//! A voxel is occupied when its density reaches the threshold; its label is
//! the argmax of the opacity-weighted logits over the occupied channels.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::NUM_CLASSES;
use crate::config::SplatConfig;
use crate::error::{Error, Result};
use crate::gaussian::{Logits, SemanticGaussian};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Minimum corner, meters.
    pub origin: Vector3<f64>,
    pub dims: [usize; 3],
    pub voxel_size: f64,
}

impl GridSpec {
    pub fn new(origin: Vector3<f64>, dims: [usize; 3], voxel_size: f64) -> Result<Self> {
        let spec = Self {
            origin,
            dims,
            voxel_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid exactly covering `[min, max]`, rounding the extent to whole voxels.
    pub fn covering(min: Vector3<f64>, max: Vector3<f64>, voxel_size: f64) -> Result<Self> {
        let ext = max - min;
        let dims = [0, 1, 2].map(|i| ((ext[i] / voxel_size).round() as usize).max(1));
        Self::new(min, dims, voxel_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidArgument("grid dims must be positive".into()));
        }
        if !(self.voxel_size > 0.0) || !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("grid voxel size must be positive and origin finite".into()));
        }
        Ok(())
    }

    pub fn num_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    /// Linear index, x fastest.
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let y = (idx / self.dims[0]) % self.dims[1];
        let z = idx / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    pub fn center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        let h = 0.5 * self.voxel_size;
        self.origin
            + Vector3::new(
                x as f64 * self.voxel_size + h,
                y as f64 * self.voxel_size + h,
                z as f64 * self.voxel_size + h,
            )
    }

    pub fn center_of(&self, idx: usize) -> Vector3<f64> {
        let [x, y, z] = self.coords(idx);
        self.center(x, y, z)
    }

    pub fn max_corner(&self) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                self.dims[0] as f64,
                self.dims[1] as f64,
                self.dims[2] as f64,
            ) * self.voxel_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    /// Class id per voxel; 0 is empty.
    pub labels: Vec<u8>,
    pub density: Vec<f64>,
}

impl VoxelGrid {
    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.num_voxels();
        Self {
            spec,
            labels: vec![0; n],
            density: vec![0.0; n],
        }
    }

    pub fn label_at(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.spec.index(x, y, z)]
    }

    pub fn occupied_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}

/// Per-Gaussian quantities shared by the fast path and the oracle.
struct Prepared {
    mean: Vector3<f64>,
    precision: Matrix3<f64>,
    opacity: f64,
    logits: Logits,
    half_extent: Vector3<f64>,
}

fn prepare(gaussians: &[SemanticGaussian]) -> Vec<Prepared> {
    let mut sorted: Vec<&SemanticGaussian> = gaussians.iter().collect();
    sorted.sort_by_key(|g| g.id);
    sorted
        .into_iter()
        .map(|g| {
            let cov = g.covariance();
            Prepared {
                mean: g.mean,
                precision: g.precision(),
                opacity: g.opacity,
                logits: g.logits,
                half_extent: Vector3::new(cov[(0, 0)], cov[(1, 1)], cov[(2, 2)]).map(f64::sqrt),
            }
        })
        .collect()
}

/// Squared Mahalanobis distance and contribution weight of one Gaussian at `v`.
#[inline]
fn kernel(p: &Prepared, v: &Vector3<f64>) -> (f64, f64) {
    let d = v - p.mean;
    let q = d.dot(&(p.precision * d));
    (q, p.opacity * (-0.5 * q).exp())
}

#[derive(Clone, Copy)]
struct Accum {
    density: f64,
    semantic: Logits,
}

impl Accum {
    fn new() -> Self {
        Self {
            density: 0.0,
            semantic: [0.0; NUM_CLASSES],
        }
    }

    fn add(&mut self, a: f64, logits: &Logits) {
        self.density += a;
        self.semantic.iter_mut().zip(logits).for_each(|(s, l)| *s += a * l);
    }

    fn label(&self, occ_threshold: f64) -> u8 {
        if self.density < occ_threshold {
            return 0;
        }
        let mut best = 1;
        for j in 2..NUM_CLASSES {
            if self.semantic[j] > self.semantic[best] {
                best = j;
            }
        }
        best as u8
    }
}

/// Splats with a Mahalanobis cutoff; `cutoff_sigma = inf` disables truncation.
pub fn splat(gaussians: &[SemanticGaussian], spec: &GridSpec, cfg: &SplatConfig) -> Result<VoxelGrid> {
    spec.validate()?;
    if !(cfg.occ_threshold > 0.0) {
        return Err(Error::InvalidArgument("occ_threshold must be > 0".into()));
    }
    if !(cfg.cutoff_sigma >= 3.0) {
        return Err(Error::InvalidArgument("cutoff_sigma must be >= 3".into()));
    }
    let prepared = prepare(gaussians);
    let cutoff_sq = cfg.cutoff_sigma * cfg.cutoff_sigma;
    let buckets = Buckets::build(&prepared, spec, cfg.cutoff_sigma);

    let accums: Vec<Accum> = (0..spec.num_voxels())
        .into_par_iter()
        .map(|idx| {
            let [x, y, z] = spec.coords(idx);
            let v = spec.center(x, y, z);
            let mut acc = Accum::new();
            for &gi in buckets.candidates(x, y, z) {
                let p = &prepared[gi as usize];
                let (q, a) = kernel(p, &v);
                if q <= cutoff_sq {
                    acc.add(a, &p.logits);
                }
            }
            acc
        })
        .collect();
    Ok(finish(spec, &accums, cfg.occ_threshold))
}

/// Exhaustive O(N * V) reference: every Gaussian at every voxel, ascending id order.
pub fn brute_force_splat(
    gaussians: &[SemanticGaussian],
    spec: &GridSpec,
    occ_threshold: f64,
) -> Result<VoxelGrid> {
    spec.validate()?;
    let prepared = prepare(gaussians);
    let mut accums = vec![Accum::new(); spec.num_voxels()];
    for (idx, acc) in accums.iter_mut().enumerate() {
        let v = spec.center_of(idx);
        for p in &prepared {
            let (_, a) = kernel(p, &v);
            acc.add(a, &p.logits);
        }
    }
    Ok(finish(spec, &accums, occ_threshold))
}

fn finish(spec: &GridSpec, accums: &[Accum], occ_threshold: f64) -> VoxelGrid {
    VoxelGrid {
        spec: *spec,
        labels: accums.iter().map(|a| a.label(occ_threshold)).collect(),
        density: accums.iter().map(|a| a.density).collect(),
    }
}

/// Upper bound on the density lost to truncation at any voxel.
pub fn truncation_bound(gaussians: &[SemanticGaussian], cutoff_sigma: f64) -> f64 {
    let o_max = gaussians.iter().map(|g| g.opacity).fold(0.0, f64::max);
    gaussians.len() as f64 * o_max * (-0.5 * cutoff_sigma * cutoff_sigma).exp()
}

const BUCKET: usize = 8;

/// Coarse blocks of voxels listing, in ascending id order, the Gaussians whose
/// cutoff bounding box touches the block.
struct Buckets {
    dims: [usize; 3],
    lists: Vec<Vec<u32>>,
}

impl Buckets {
    fn build(prepared: &[Prepared], spec: &GridSpec, cutoff_sigma: f64) -> Self {
        let dims = spec.dims.map(|d| d.div_ceil(BUCKET));
        let mut lists = vec![Vec::new(); dims.iter().product()];
        for (gi, p) in prepared.iter().enumerate() {
            let Some(range) = voxel_range(p, spec, cutoff_sigma) else {
                continue;
            };
            let [lo, hi] = range;
            for bz in lo[2] / BUCKET..=hi[2] / BUCKET {
                for by in lo[1] / BUCKET..=hi[1] / BUCKET {
                    for bx in lo[0] / BUCKET..=hi[0] / BUCKET {
                        lists[bx + dims[0] * (by + dims[1] * bz)].push(gi as u32);
                    }
                }
            }
        }
        Self { dims, lists }
    }

    fn candidates(&self, x: usize, y: usize, z: usize) -> &[u32] {
        let (bx, by, bz) = (x / BUCKET, y / BUCKET, z / BUCKET);
        &self.lists[bx + self.dims[0] * (by + self.dims[1] * bz)]
    }
}

/// Inclusive voxel index range whose centers may lie within the cutoff ellipsoid.
fn voxel_range(p: &Prepared, spec: &GridSpec, cutoff_sigma: f64) -> Option<[[usize; 3]; 2]> {
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for i in 0..3 {
        let reach = cutoff_sigma * p.half_extent[i] * (1.0 + 1e-9) + 1e-12;
        let n = spec.dims[i];
        if !reach.is_finite() {
            lo[i] = 0;
            hi[i] = n - 1;
            continue;
        }
        // Centers sit at origin + (k + 0.5) * voxel.
        let a = ((p.mean[i] - reach - spec.origin[i]) / spec.voxel_size - 0.5).ceil();
        let b = ((p.mean[i] + reach - spec.origin[i]) / spec.voxel_size - 0.5).floor();
        if b < 0.0 || a > (n - 1) as f64 || a > b {
            return None;
        }
        lo[i] = a.max(0.0) as usize;
        hi[i] = (b as usize).min(n - 1);
    }
    Some([lo, hi])
}
