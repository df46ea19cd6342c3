//! Occupancy metrics and planar-drift measurement.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classes::{SemanticClass, NUM_SEMANTIC};
use crate::error::{Error, Result};
use crate::gaussian::SemanticGaussian;
use crate::scene::SyntheticScene;
use crate::splat::VoxelGrid;

fn check_specs(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<()> {
    let (a, b) = (&pred.spec, &gt.spec);
    if a.dims != b.dims || a.origin != b.origin || a.voxel_size != b.voxel_size {
        return Err(Error::GridMismatch(format!(
            "pred dims {:?} origin {:?} voxel {} vs gt dims {:?} origin {:?} voxel {}",
            a.dims,
            a.origin.as_slice(),
            a.voxel_size,
            b.dims,
            b.origin.as_slice(),
            b.voxel_size
        )));
    }
    if pred.labels.len() != a.num_voxels() || gt.labels.len() != b.num_voxels() {
        return Err(Error::GridMismatch("label array length disagrees with dims".into()));
    }
    Ok(())
}

/// Binary occupancy IoU. Two all-empty grids score 1.
pub fn scene_iou(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<f64> {
    check_specs(pred, gt)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        match (p != 0, g != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let union = tp + fp + fneg;
    Ok(if union == 0 { 1.0 } else { tp as f64 / union as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    /// Classes 1..=11; `None` when absent from both grids.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// Per-class IoU over the occupied classes and their mean over present classes.
pub fn miou(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<ClassIou> {
    check_specs(pred, gt)?;
    let mut tp = [0usize; NUM_SEMANTIC];
    let mut fp = [0usize; NUM_SEMANTIC];
    let mut fneg = [0usize; NUM_SEMANTIC];
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if p == g {
            if p != 0 {
                tp[p as usize - 1] += 1;
            }
            continue;
        }
        if p != 0 {
            fp[p as usize - 1] += 1;
        }
        if g != 0 {
            fneg[g as usize - 1] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..NUM_SEMANTIC)
        .map(|k| {
            let union = tp[k] + fp[k] + fneg[k];
            (union > 0).then(|| tp[k] as f64 / union as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = if present.is_empty() {
        1.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(ClassIou { per_class, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStats {
    pub rms: f64,
    pub count: usize,
}

/// RMS signed distance of near-surface Gaussians from their nearest plane.
///
/// A Gaussian counts when its nearest surface lies within `voxel_size`, unless
/// a surface on a different plane is also within `2 * voxel_size` (edges and
/// corners are excluded).
pub fn out_of_plane_drift(
    gaussians: &[SemanticGaussian],
    scene: &SyntheticScene,
    voxel_size: f64,
) -> DriftStats {
    let surfaces = scene.surfaces();
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    let mut dist = Vec::with_capacity(surfaces.len());
    for g in gaussians {
        dist.clear();
        dist.extend(surfaces.iter().map(|s| (s.closest_point(&g.mean) - g.mean).norm()));
        let (nearest, d1) = dist
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("scenes have surfaces");
        if d1 > voxel_size {
            continue;
        }
        let key = surfaces[nearest].plane_key();
        let near_edge = surfaces
            .iter()
            .zip(&dist)
            .any(|(s, &d)| s.plane_key() != key && d <= 2.0 * voxel_size);
        if near_edge {
            continue;
        }
        let sd = surfaces[nearest].signed_distance_to_plane(&g.mean);
        sum_sq += sd * sd;
        count += 1;
    }
    DriftStats {
        rms: if count == 0 { 0.0 } else { (sum_sq / count as f64).sqrt() },
        count,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateTotals {
    pub visible: usize,
    pub updated: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub oop_drift_rms: f64,
    pub drift_samples: usize,
    pub updates_per_frame: Vec<usize>,
    pub totals: UpdateTotals,
}

/// Aligned text table: IoU, the eleven class IoUs, then mIoU.
pub fn format_table(rows: &[(String, &EvalReport)]) -> String {
    let label_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<label_w$} {:>7}", "method", "IoU");
    for id in 1..=NUM_SEMANTIC as u8 {
        let name = SemanticClass::from_id(id).map_or("?", |c| c.name());
        let _ = write!(out, " {:>9}", name);
    }
    let _ = writeln!(out, " {:>7} {:>9}", "mIoU", "drift_m");
    for (name, r) in rows {
        let _ = write!(out, "{:<label_w$} {:>7.4}", name, r.iou);
        for v in &r.per_class_iou {
            match v {
                Some(x) => {
                    let _ = write!(out, " {:>9.4}", x);
                }
                None => {
                    let _ = write!(out, " {:>9}", "-");
                }
            }
        }
        let _ = writeln!(out, " {:>7.4} {:>9.5}", r.miou, r.oop_drift_rms);
    }
    out
}
