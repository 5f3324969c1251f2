//! Cloud-to-cloud accuracy: kNN plane fitting against a reference cloud,
//! per-axis statistics, quantiles, histograms and DEM-based filtering.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GroundPoint;
use crate::triangulate::PointCloud;

pub const DEFAULT_LEAF_CAPACITY: usize = 32;
pub const DEFAULT_K: usize = 6;
pub const HISTOGRAM_BINS: usize = 32;
const MAX_DEPTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bounds {
    min: [f64; 3],
    max: [f64; 3],
}

impl Bounds {
    fn of(points: &[[f64; 3]], idx: &[usize]) -> Self {
        let mut b = Bounds {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        };
        for &i in idx {
            for (a, v) in points[i].iter().enumerate() {
                b.min[a] = b.min[a].min(*v);
                b.max[a] = b.max[a].max(*v);
            }
        }
        b
    }

    fn distance2(&self, q: &[f64; 3]) -> f64 {
        (0..3)
            .map(|a| {
                let d = (self.min[a] - q[a]).max(0.0).max(q[a] - self.max[a]);
                d * d
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<usize>),
    Split(Vec<(Bounds, Node)>),
}

/// Octree over a fixed point set; leaves hold at most `leaf_capacity`
/// points unless the points coincide.
#[derive(Debug, Clone)]
pub struct Octree {
    points: Vec<[f64; 3]>,
    bounds: Bounds,
    root: Node,
    pub leaf_capacity: usize,
}

/// Neighbor returned by a kNN query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

fn build(points: &[[f64; 3]], idx: Vec<usize>, bounds: Bounds, cap: usize, depth: usize) -> Node {
    if idx.len() <= cap || depth >= MAX_DEPTH {
        return Node::Leaf(idx);
    }
    let mid: [f64; 3] = std::array::from_fn(|a| 0.5 * (bounds.min[a] + bounds.max[a]));
    let mut octants: [Vec<usize>; 8] = Default::default();
    for i in idx {
        let p = &points[i];
        let o = (0..3).fold(0, |o, a| o | (((p[a] > mid[a]) as usize) << a));
        octants[o].push(i);
    }
    if octants.iter().filter(|o| !o.is_empty()).count() == 1 {
        // Coincident points cannot be separated.
        let only = octants.into_iter().find(|o| !o.is_empty()).unwrap_or_default();
        if Bounds::of(points, &only).min == Bounds::of(points, &only).max {
            return Node::Leaf(only);
        }
        let b = Bounds::of(points, &only);
        return build(points, only, b, cap, depth + 1);
    }
    Node::Split(
        octants
            .into_iter()
            .filter(|o| !o.is_empty())
            .map(|o| {
                let b = Bounds::of(points, &o);
                let child = build(points, o, b, cap, depth + 1);
                (b, child)
            })
            .collect(),
    )
}

impl Octree {
    pub fn new(points: &[GroundPoint], leaf_capacity: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("octree needs at least one point"));
        }
        if leaf_capacity == 0 {
            return Err(Error::invalid("leaf capacity must be positive"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("octree points must be finite"));
        }
        let pts: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.h]).collect();
        let idx: Vec<usize> = (0..pts.len()).collect();
        let bounds = Bounds::of(&pts, &idx);
        let root = build(&pts, idx, bounds, leaf_capacity, 0);
        Ok(Self {
            points: pts,
            bounds,
            root,
            leaf_capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> GroundPoint {
        let p = self.points[index];
        GroundPoint::new(p[0], p[1], p[2])
    }

    /// Leaf index lists, for structural checks.
    pub fn leaves(&self) -> Vec<&[usize]> {
        fn walk<'a>(n: &'a Node, out: &mut Vec<&'a [usize]>) {
            match n {
                Node::Leaf(v) => out.push(v),
                Node::Split(children) => children.iter().for_each(|(_, c)| walk(c, out)),
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Exact `k` nearest points ordered by distance, then by index.
    pub fn knn(&self, q: &GroundPoint, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::invalid(format!("k = {k} must lie in 1..={}", self.points.len())));
        }
        let q = [q.x, q.y, q.h];
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(&self.root, self.bounds, &q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        Ok(out
            .into_iter()
            .map(|Candidate(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            })
            .collect())
    }

    fn search(&self, node: &Node, bounds: Bounds, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        if heap.len() == k && bounds.distance2(q) > heap.peek().map_or(f64::INFINITY, |c| c.0) {
            return;
        }
        match node {
            Node::Leaf(idx) => {
                for &i in idx {
                    let p = &self.points[i];
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                    let c = Candidate(d2, i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if heap.peek().is_some_and(|worst| c < *worst) {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split(children) => {
                let mut order: Vec<(f64, usize)> = children
                    .iter()
                    .enumerate()
                    .map(|(i, (b, _))| (b.distance2(q), i))
                    .collect();
                order.sort_by(|a, b| a.0.total_cmp(&b.0));
                for (_, i) in order {
                    let (b, child) = &children[i];
                    self.search(child, *b, q, k, heap);
                }
            }
        }
    }
}

/// Total-least-squares plane through a neighborhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub centroid: Vector3<f64>,
    /// Unit normal.
    pub normal: Vector3<f64>,
}

impl Plane {
    pub fn fit(points: &[GroundPoint]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::DegenerateNeighborhood);
        }
        let n = points.len() as f64;
        let centroid = points.iter().map(|p| p.to_vector()).sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::zeros();
        for p in points {
            let d = p.to_vector() - centroid;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let largest = eig.eigenvalues[order[2]];
        let middle = eig.eigenvalues[order[1]];
        if !(largest > 0.0) || middle <= 1e-12 * largest {
            return Err(Error::DegenerateNeighborhood);
        }
        Ok(Self {
            centroid,
            normal: eig.eigenvectors.column(order[0]).into_owned().normalize(),
        })
    }

    pub fn distance(&self, q: &GroundPoint) -> f64 {
        self.normal.dot(&(q.to_vector() - self.centroid)).abs()
    }

    /// Vector from `q` to its orthogonal projection on the plane.
    pub fn foot_offset(&self, q: &GroundPoint) -> Vector3<f64> {
        -self.normal * self.normal.dot(&(q.to_vector() - self.centroid))
    }
}

/// Perpendicular distance from `q` to the TLS plane of `neighbors`.
pub fn plane_distance(q: &GroundPoint, neighbors: &[GroundPoint]) -> Result<f64> {
    Ok(Plane::fit(neighbors)?.distance(q))
}

/// Type-7 quantile (linear between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean: f64,
    pub std: f64,
    pub rmse: f64,
}

impl AxisStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let ms = values.iter().map(|v| v * v).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            rmse: ms.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// One CSV row of a histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

impl Histogram {
    /// Equal-width bins over `[0, max]`.
    pub fn of(values: &[f64], bins: usize) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        let top = if max > 0.0 { max } else { 1.0 };
        let edges: Vec<f64> = (0..=bins).map(|i| top * i as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / top) * bins as f64).floor() as usize;
            counts[b.min(bins - 1)] += 1;
        }
        Self { edges, counts }
    }

    pub fn rows(&self) -> Vec<HistogramRow> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &count)| HistogramRow {
                bin_left: self.edges[i],
                bin_right: self.edges[i + 1],
                count,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub n_points: usize,
    /// Targets whose neighborhood was degenerate.
    pub n_skipped: usize,
    pub x: AxisStats,
    pub y: AxisStats,
    pub z: AxisStats,
    pub mean_distance: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub histogram: Histogram,
}

/// Per-point plane distances and target-to-foot offsets.
pub fn plane_offsets(target: &[GroundPoint], tree: &Octree, k: usize) -> Result<Vec<Option<Vector3<f64>>>> {
    if k > tree.len() {
        return Err(Error::invalid("reference cloud smaller than k"));
    }
    target
        .par_iter()
        .map(|q| {
            let nb: Vec<GroundPoint> = tree.knn(q, k)?.iter().map(|n| tree.point(n.index)).collect();
            match Plane::fit(&nb) {
                Ok(plane) => Ok(Some(plane.foot_offset(q))),
                Err(Error::DegenerateNeighborhood) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Accuracy of `target` against `reference` by kNN plane fitting.
pub fn cloud_accuracy(target: &PointCloud, reference: &PointCloud, k: usize) -> Result<AccuracyReport> {
    if target.is_empty() {
        return Err(Error::invalid("target cloud is empty"));
    }
    let tree = Octree::new(&reference.positions(), DEFAULT_LEAF_CAPACITY)?;
    let offsets = plane_offsets(&target.positions(), &tree, k)?;
    let valid: Vec<Vector3<f64>> = offsets.iter().flatten().copied().collect();
    let axis = |a: usize| AxisStats::of(&valid.iter().map(|v| v[a]).collect::<Vec<_>>());
    let mut dist: Vec<f64> = valid.iter().map(|v| v.norm()).collect();
    let histogram = Histogram::of(&dist, HISTOGRAM_BINS);
    dist.sort_by(f64::total_cmp);
    let mean_distance = if dist.is_empty() {
        f64::NAN
    } else {
        dist.iter().sum::<f64>() / dist.len() as f64
    };
    Ok(AccuracyReport {
        n_points: valid.len(),
        n_skipped: offsets.len() - valid.len(),
        x: axis(0),
        y: axis(1),
        z: axis(2),
        mean_distance,
        q25: quantile_sorted(&dist, 0.25),
        median: quantile_sorted(&dist, 0.5),
        q75: quantile_sorted(&dist, 0.75),
        histogram,
    })
}

/// Regular height grid sampled bilinearly between node centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dem {
    /// Ground coordinates of node `(0, 0)`.
    pub x0: f64,
    pub y0: f64,
    pub spacing: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major; row index grows with `y`.
    pub heights: Vec<f64>,
}

impl Dem {
    pub fn new(x0: f64, y0: f64, spacing: f64, width: usize, height: usize, heights: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) || width < 2 || height < 2 || heights.len() != width * height {
            return Err(Error::invalid("DEM needs a positive spacing and at least 2x2 nodes"));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::invalid("DEM heights must be finite"));
        }
        Ok(Self {
            x0,
            y0,
            spacing,
            width,
            height,
            heights,
        })
    }

    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let u = (x - self.x0) / self.spacing;
        let v = (y - self.y0) / self.spacing;
        if !(u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64) {
            return None;
        }
        let c0 = (u.floor() as usize).min(self.width - 2);
        let r0 = (v.floor() as usize).min(self.height - 2);
        let (fu, fv) = (u - c0 as f64, v - r0 as f64);
        let at = |r: usize, c: usize| self.heights[r * self.width + c];
        let top = at(r0, c0) * (1.0 - fu) + at(r0, c0 + 1) * fu;
        let bottom = at(r0 + 1, c0) * (1.0 - fu) + at(r0 + 1, c0 + 1) * fu;
        Some(top * (1.0 - fv) + bottom * fv)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub removed: usize,
    pub outside: usize,
}

/// Keeps points within `thresh` meters of the DEM; points off the DEM are
/// dropped and counted separately.
pub fn srtm_filter(cloud: &PointCloud, dem: &Dem, thresh: f64) -> (PointCloud, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        match dem.sample(p.position.x, p.position.y) {
            None => report.outside += 1,
            Some(h) if (p.position.h - h).abs() <= thresh => kept.push(*p),
            Some(_) => report.removed += 1,
        }
    }
    report.kept = kept.len();
    (PointCloud { points: kept }, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_points(seed: u64, n: usize) -> Vec<GroundPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                GroundPoint::new(
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                    rng.random_range(0.0..30.0),
                )
            })
            .collect()
    }

    fn brute(points: &[GroundPoint], q: &GroundPoint, k: usize) -> Vec<(usize, f64)> {
        let mut d: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.h - q.h).powi(2), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().take(k).map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    #[test]
    fn knn_matches_brute_force() {
        let pts = random_points(1, 2000);
        let tree = Octree::new(&pts, 8).unwrap();
        for q in random_points(2, 50) {
            let got: Vec<(usize, f64)> = tree.knn(&q, 6).unwrap().iter().map(|n| (n.index, n.distance)).collect();
            assert_eq!(got, brute(&pts, &q, 6));
        }
    }

    #[test]
    fn knn_edge_cases() {
        let pts = random_points(3, 40);
        let tree = Octree::new(&pts, 4).unwrap();
        let all = tree.knn(&pts[7], 40).unwrap();
        assert_eq!(all.len(), 40);
        assert_eq!(all[0].index, 7);
        assert_eq!(all[0].distance, 0.0);
        assert!(tree.knn(&pts[0], 41).is_err());
        // Duplicates tie-break by index.
        let dup = vec![GroundPoint::new(1.0, 1.0, 1.0); 50];
        let t = Octree::new(&dup, 4).unwrap();
        let nn: Vec<usize> = t.knn(&dup[0], 3).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(nn, vec![0, 1, 2]);
    }

    #[test]
    fn every_point_in_exactly_one_leaf() {
        let pts = random_points(4, 3000);
        let tree = Octree::new(&pts, DEFAULT_LEAF_CAPACITY).unwrap();
        let mut seen = vec![0; pts.len()];
        for leaf in tree.leaves() {
            assert!(leaf.len() <= DEFAULT_LEAF_CAPACITY);
            for &i in leaf {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn plane_distance_basics() {
        let flat = [
            GroundPoint::new(0.0, 0.0, 0.0),
            GroundPoint::new(1.0, 0.0, 0.0),
            GroundPoint::new(0.0, 1.0, 0.0),
            GroundPoint::new(1.0, 1.0, 0.0),
        ];
        assert!((plane_distance(&GroundPoint::new(0.0, 0.0, 1.0), &flat).unwrap() - 1.0).abs() < 1e-12);
        let tilted: Vec<GroundPoint> = flat.iter().map(|p| GroundPoint::new(p.x, p.y, p.x)).collect();
        assert!(plane_distance(&GroundPoint::new(3.0, -2.0, 3.0), &tilted).unwrap() < 1e-12);
        let line: Vec<GroundPoint> = (0..5)
            .map(|i| GroundPoint::new(i as f64, 2.0 * i as f64, 0.0))
            .collect();
        assert!(matches!(
            plane_distance(&GroundPoint::new(0.0, 0.0, 1.0), &line),
            Err(Error::DegenerateNeighborhood)
        ));
    }

    #[test]
    fn plane_distance_matches_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = Normal::new(0.0, 0.05).unwrap();
        for _ in 0..20 {
            let nb: Vec<GroundPoint> = (0..6)
                .map(|_| {
                    let x: f64 = rng.random_range(-3.0..3.0);
                    let y: f64 = rng.random_range(-3.0..3.0);
                    GroundPoint::new(x, y, 0.3 * x - 0.2 * y + noise.sample(&mut rng))
                })
                .collect();
            let q = GroundPoint::new(0.5, -0.5, 1.7);
            // Oracle: right singular vector of the centered data matrix.
            let c = nb.iter().map(|p| p.to_vector()).sum::<Vector3<f64>>() / 6.0;
            let m = nalgebra::DMatrix::from_fn(6, 3, |i, j| nb[i].to_vector()[j] - c[j]);
            let svd = m.svd(false, true);
            let vt = svd.v_t.unwrap();
            let imin = (0..3)
                .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
                .unwrap();
            let n = Vector3::new(vt[(imin, 0)], vt[(imin, 1)], vt[(imin, 2)]);
            let expect = n.dot(&(q.to_vector() - c)).abs();
            assert!((plane_distance(&q, &nb).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn quantiles_match_sort_definition() {
        let v = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 1.0), 8.0);
    }

    fn grid_cloud(noise_z: f64, seed: u64) -> (PointCloud, PointCloud) {
        let reference = PointCloud::from_positions(
            (0..60).flat_map(|i| (0..60).map(move |j| GroundPoint::new(i as f64, j as f64, 100.0))),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise_z.max(1e-300)).unwrap();
        let target = PointCloud::from_positions((0..4000).map(|_| {
            GroundPoint::new(
                rng.random_range(5.0..55.0),
                rng.random_range(5.0..55.0),
                100.0 + if noise_z > 0.0 { n.sample(&mut rng) } else { 0.0 },
            )
        }));
        (target, reference)
    }

    #[test]
    fn accuracy_of_identical_and_noisy_clouds() {
        let (_, reference) = grid_cloud(0.0, 1);
        let same = cloud_accuracy(&reference, &reference, 6).unwrap();
        assert_eq!(same.median, 0.0);
        assert_eq!(same.z.rmse, 0.0);
        let (target, reference) = grid_cloud(1.0, 2);
        let r = cloud_accuracy(&target, &reference, 6).unwrap();
        assert!((r.z.std - 1.0).abs() < 0.1, "{}", r.z.std);
        assert!(r.x.rmse < 1e-9 && r.y.rmse < 1e-9);
        for s in [r.x, r.y, r.z] {
            assert!((s.rmse.powi(2) - (s.mean.powi(2) + s.std.powi(2))).abs() < 1e-9);
        }
        assert!(r.q25 <= r.median && r.median <= r.q75);
        assert_eq!(r.histogram.counts.iter().sum::<usize>(), r.n_points);
        assert_eq!(r.histogram.rows().len(), HISTOGRAM_BINS);
    }

    #[test]
    fn filter_removes_gross_outliers() {
        let dem = Dem::new(0.0, 0.0, 10.0, 7, 7, vec![100.0; 49]).unwrap();
        let mut pts = Vec::new();
        for i in 0..1000 {
            let x = (i % 50) as f64 + 5.0;
            let y = (i / 50) as f64 * 2.0 + 5.0;
            pts.push(GroundPoint::new(x, y, if i % 10 == 0 { 150.0 } else { 101.0 }));
        }
        pts.push(GroundPoint::new(-5.0, 0.0, 100.0));
        let cloud = PointCloud::from_positions(pts);
        let (kept, rep) = srtm_filter(&cloud, &dem, 5.0);
        assert_eq!(rep.removed, 100);
        assert_eq!(rep.outside, 1);
        assert_eq!(kept.len(), 900);
        let (all, _) = srtm_filter(&cloud, &dem, 1e9);
        assert_eq!(all.len(), 1000);
        assert_eq!(dem.sample(15.0, 25.0), Some(100.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn plane_distance_is_rotation_invariant(
            seed in 0u64..1000, ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, angle in 0.0f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nb: Vec<GroundPoint> = (0..6)
                .map(|_| GroundPoint::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-0.5..0.5)))
                .collect();
            let q = GroundPoint::new(1.0, 2.0, 3.0);
            let axis = Vector3::new(ax, ay, az);
            prop_assume!(axis.norm() > 0.1);
            let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let turn = |p: &GroundPoint| GroundPoint::from_vector(&(rot * p.to_vector()));
            let a = plane_distance(&q, &nb).unwrap();
            let b = plane_distance(&turn(&q), &nb.iter().map(turn).collect::<Vec<_>>()).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn quantiles_are_monotone(mut v in proptest::collection::vec(-1e3f64..1e3, 1..200)) {
            v.sort_by(f64::total_cmp);
            let qs: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&p| quantile_sorted(&v, p)).collect();
            prop_assert!(qs.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(qs[0], v[0]);
            prop_assert_eq!(qs[4], v[v.len() - 1]);
        }
    }
}
