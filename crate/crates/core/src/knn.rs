//! Uniform-grid spatial index over a depth point cloud.
//!
//! Queries expand cubic cell rings around the query cell. After ring `r` is
//! scanned, every unvisited point lies outside the `(2r+1)^3` cube of cells,
//! so its distance is at least the query's distance to that cube's boundary.
//! The search stops once `k` candidates are held and the k-th best is within
//! that bound, which makes the returned set the exact k nearest points.

use std::collections::{BinaryHeap, HashMap};

use nalgebra::Vector3;
use ordered::OrdDist;

use crate::config::KnnAggregate;
use crate::error::{Error, Result};

type Cell = (i64, i64, i64);

pub struct DepthIndex {
    cell_size: f64,
    points: Vec<Vector3<f64>>,
    cells: HashMap<Cell, Vec<u32>>,
    cell_min: Cell,
    cell_max: Cell,
}

impl DepthIndex {
    pub fn build(points: Vec<Vector3<f64>>, cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        let mut cell_min = (i64::MAX, i64::MAX, i64::MAX);
        let mut cell_max = (i64::MIN, i64::MIN, i64::MIN);
        for (idx, p) in points.iter().enumerate() {
            let c = cell_of(p, cell_size);
            cell_min = (cell_min.0.min(c.0), cell_min.1.min(c.1), cell_min.2.min(c.2));
            cell_max = (cell_max.0.max(c.0), cell_max.1.max(c.1), cell_max.2.max(c.2));
            cells.entry(c).or_default().push(idx as u32);
        }
        Self {
            cell_size,
            points,
            cells,
            cell_min,
            cell_max,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// Distances to the `k` nearest points, ascending.
    pub fn k_nearest(&self, query: &Vector3<f64>, k: usize) -> Result<Vec<f64>> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let k = k.max(1).min(self.points.len());
        let center = cell_of(query, self.cell_size);
        // Max-heap of the best k distances seen so far.
        let mut best: BinaryHeap<OrdDist> = BinaryHeap::with_capacity(k + 1);

        let max_ring = [
            (center.0 - self.cell_min.0).abs(),
            (center.0 - self.cell_max.0).abs(),
            (center.1 - self.cell_min.1).abs(),
            (center.1 - self.cell_max.1).abs(),
            (center.2 - self.cell_min.2).abs(),
            (center.2 - self.cell_max.2).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);

        for ring in 0..=max_ring {
            self.visit_ring(center, ring, |idx| {
                let d = (self.points[idx as usize] - query).norm();
                if best.len() < k {
                    best.push(OrdDist(d));
                } else if d < best.peek().map_or(f64::INFINITY, |b| b.0) {
                    best.pop();
                    best.push(OrdDist(d));
                }
            });
            if best.len() == k {
                let kth = best.peek().map_or(f64::INFINITY, |b| b.0);
                if kth <= self.ring_lower_bound(query, center, ring) {
                    break;
                }
            }
        }

        let mut out: Vec<f64> = best.into_iter().map(|d| d.0).collect();
        out.sort_by(f64::total_cmp);
        Ok(out)
    }

    /// Nearest-depth distance aggregated over the `k` nearest points.
    pub fn nearest_depth_distance(
        &self,
        query: &Vector3<f64>,
        k: usize,
        aggregate: KnnAggregate,
    ) -> Result<f64> {
        let dists = self.k_nearest(query, k)?;
        Ok(match aggregate {
            KnnAggregate::Min => dists[0],
            KnnAggregate::Mean => dists.iter().sum::<f64>() / dists.len() as f64,
        })
    }

    fn visit_ring(&self, c: Cell, ring: i64, mut f: impl FnMut(u32)) {
        let mut visit = |cell: Cell| {
            if let Some(ids) = self.cells.get(&cell) {
                ids.iter().for_each(|&i| f(i));
            }
        };
        if ring == 0 {
            visit(c);
            return;
        }
        for dz in -ring..=ring {
            for dy in -ring..=ring {
                let on_shell = dz.abs() == ring || dy.abs() == ring;
                if on_shell {
                    for dx in -ring..=ring {
                        visit((c.0 + dx, c.1 + dy, c.2 + dz));
                    }
                } else {
                    visit((c.0 - ring, c.1 + dy, c.2 + dz));
                    visit((c.0 + ring, c.1 + dy, c.2 + dz));
                }
            }
        }
    }

    /// Distance from `q` to the boundary of the cube spanned by rings `0..=ring`.
    fn ring_lower_bound(&self, q: &Vector3<f64>, c: Cell, ring: i64) -> f64 {
        let s = self.cell_size;
        let axis = |qv: f64, cv: i64| {
            let lo = (cv - ring) as f64 * s;
            let hi = (cv + ring + 1) as f64 * s;
            (qv - lo).min(hi - qv)
        };
        axis(q.x, c.0).min(axis(q.y, c.1)).min(axis(q.z, c.2)).max(0.0)
    }
}

fn cell_of(p: &Vector3<f64>, s: f64) -> Cell {
    (
        (p.x / s).floor() as i64,
        (p.y / s).floor() as i64,
        (p.z / s).floor() as i64,
    )
}

mod ordered {
    use std::cmp::Ordering;

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct OrdDist(pub f64);

    impl Eq for OrdDist {}

    impl PartialOrd for OrdDist {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for OrdDist {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[Vector3<f64>], q: &Vector3<f64>, k: usize) -> Vec<f64> {
        let mut d: Vec<f64> = points.iter().map(|p| (p - q).norm()).collect();
        d.sort_by(f64::total_cmp);
        d.truncate(k);
        d
    }

    #[test]
    fn coincident_point_is_zero() {
        let idx = DepthIndex::build(vec![Vector3::new(1.0, 2.0, 3.0), Vector3::zeros()], 0.25);
        let d = idx
            .nearest_depth_distance(&Vector3::new(1.0, 2.0, 3.0), 10, KnnAggregate::Min)
            .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn single_point_distance() {
        let idx = DepthIndex::build(vec![Vector3::new(0.2, 0.0, 0.0)], 0.25);
        let d = idx
            .nearest_depth_distance(&Vector3::zeros(), 10, KnnAggregate::Min)
            .unwrap();
        assert_eq!(d, 0.2);
    }

    #[test]
    fn empty_cloud_errors() {
        let idx = DepthIndex::build(Vec::new(), 0.25);
        assert!(matches!(
            idx.nearest_depth_distance(&Vector3::zeros(), 10, KnnAggregate::Min),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn matches_linear_scan_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pts: Vec<Vector3<f64>> = (0..1000)
                .map(|_| Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0)))
                .collect();
            let idx = DepthIndex::build(pts.clone(), 0.25);
            for _ in 0..20 {
                // Includes queries far outside the cloud.
                let q = Vector3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-2.0..4.0));
                assert_eq!(idx.k_nearest(&q, 10).unwrap(), brute_force(&pts, &q, 10));
            }
        }
    }

    #[test]
    fn mean_aggregate() {
        let pts = vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(3.0, 0.0, 0.0)];
        let idx = DepthIndex::build(pts, 0.25);
        let d = idx.nearest_depth_distance(&Vector3::zeros(), 10, KnnAggregate::Mean).unwrap();
        assert_eq!(d, 2.0);
    }
}
