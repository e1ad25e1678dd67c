//! Hausdorff distance between finite point clouds in `R^d`.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("clouds have dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Points of `R^d`, stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(MetricError::DimensionMismatch(dim, p.len()));
            }
            coords.extend_from_slice(p);
        }
        Ok(PointCloud { dim, coords })
    }

    /// `C^n` points as `R^{2n}` with coordinates `(re_1, im_1, ...)`.
    pub fn from_complex(points: &[Vec<Complex64>]) -> Result<Self> {
        let dim = 2 * points.first().map_or(0, |p| p.len());
        let real: Vec<Vec<f64>> = points.iter().map(|p| p.iter().flat_map(|c| [c.re, c.im]).collect()).collect();
        Self::new(dim, &real)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut coords = Vec::new();
        for i in (0..self.len()).filter(|&i| keep(i)) {
            coords.extend_from_slice(self.point(i));
        }
        PointCloud { dim: self.dim, coords }
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim && !self.is_empty() && !other.is_empty() {
            return Err(MetricError::DimensionMismatch(self.dim, other.dim));
        }
        let dim = if self.is_empty() { other.dim } else { self.dim };
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(PointCloud { dim, coords })
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    if a.dim != b.dim {
        return Err(MetricError::DimensionMismatch(a.dim, b.dim));
    }
    Ok(())
}

/// Uniform grid over the first `min(d, 3)` coordinates. Projected distance
/// bounds the full distance from below, so ring expansion stays exact.
pub struct GridIndex<'a> {
    cloud: &'a PointCloud,
    k: usize,
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    pub fn new(cloud: &'a PointCloud) -> Self {
        let k = cloud.dim.min(3);
        let cell = Self::cell_size(cloud, k);
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for i in 0..cloud.len() {
            cells.entry(Self::key(cloud.point(i), k, cell)).or_default().push(i);
        }
        GridIndex { cloud, k, cell, cells }
    }

    /// Median projected nearest-neighbour spacing over a deterministic sample.
    fn cell_size(cloud: &PointCloud, k: usize) -> f64 {
        let n = cloud.len();
        let stride = (n / 128).max(1);
        let mut nn: Vec<f64> = (0..n)
            .step_by(stride)
            .filter_map(|i| {
                let p = &cloud.point(i)[..k];
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| dist2(p, &cloud.point(j)[..k]))
                    .filter(|&d| d > 0.0)
                    .min_by(f64::total_cmp)
            })
            .collect();
        if nn.is_empty() {
            return 1.0;
        }
        nn.sort_by(f64::total_cmp);
        nn[nn.len() / 2].sqrt()
    }

    fn key(p: &[f64], k: usize, cell: f64) -> [i64; 3] {
        let mut key = [0i64; 3];
        for (c, v) in key.iter_mut().zip(&p[..k]) {
            *c = (v / cell).floor() as i64;
        }
        key
    }

    /// Nearest point: `(squared distance, index)`, ties to the lower index.
    pub fn nearest(&self, q: &[f64]) -> (f64, usize) {
        let home = Self::key(q, self.k, self.cell);
        let mut best = (f64::INFINITY, usize::MAX);
        let consider = |idx: &[usize], best: &mut (f64, usize)| {
            for &i in idx {
                let d = dist2(q, self.cloud.point(i));
                if d < best.0 || (d == best.0 && i < best.1) {
                    *best = (d, i);
                }
            }
        };
        let ring_of = |key: &[i64; 3]| (0..3).map(|c| (key[c] - home[c]).abs()).max().unwrap_or(0);
        let mut r: i64 = 0;
        loop {
            let side = (2 * r + 1) as usize;
            if side.pow(self.k as u32) > 4 * self.cells.len() {
                // the ring is larger than the occupied set: finish by scanning
                for (key, idx) in &self.cells {
                    if ring_of(key) >= r {
                        consider(idx, &mut best);
                    }
                }
                return best;
            }
            self.visit_ring(home, r, |key| {
                if let Some(idx) = self.cells.get(key) {
                    consider(idx, &mut best);
                }
            });
            let reach = r as f64 * self.cell;
            if best.0 <= reach * reach {
                return best;
            }
            r += 1;
        }
    }

    fn visit_ring(&self, home: [i64; 3], r: i64, mut f: impl FnMut(&[i64; 3])) {
        let span = |c: usize| if c < self.k { -r..=r } else { 0..=0 };
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    if a.abs().max(b.abs()).max(c.abs()) == r {
                        f(&[home[0] + a, home[1] + b, home[2] + c]);
                    }
                }
            }
        }
    }
}

/// `(r_AB, witness in B)`: the radius needed for `A`'s neighbourhood to cover `B`.
fn deviation_with_witness(a: &PointCloud, b: &PointCloud) -> (f64, usize) {
    let index = GridIndex::new(a);
    let mut worst = (f64::NEG_INFINITY, 0);
    for i in 0..b.len() {
        let (d, _) = index.nearest(b.point(i));
        if d > worst.0 {
            worst = (d, i);
        }
    }
    (worst.0.sqrt(), worst.1)
}

/// `max_{b in B} min_{a in A} |a - b|`.
pub fn directed_deviation(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check(a, b)?;
    Ok(deviation_with_witness(a, b).0)
}

/// Double-loop reference for [`directed_deviation`]; returns the witness in `B`.
pub fn directed_deviation_brute(a: &PointCloud, b: &PointCloud) -> Result<(f64, usize)> {
    check(a, b)?;
    let mut worst = (f64::NEG_INFINITY, 0);
    for i in 0..b.len() {
        let d = (0..a.len()).map(|j| dist2(a.point(j), b.point(i))).fold(f64::INFINITY, f64::min);
        if d > worst.0 {
            worst = (d, i);
        }
    }
    Ok((worst.0.sqrt(), worst.1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HausdorffResult {
    pub d_h: f64,
    pub r_ab: f64,
    pub r_ba: f64,
    /// Point of `A` farthest from `B` (attains `r_ba`).
    pub witness_a: usize,
    /// Point of `B` farthest from `A` (attains `r_ab`).
    pub witness_b: usize,
}

pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<HausdorffResult> {
    check(a, b)?;
    let (r_ab, witness_b) = deviation_with_witness(a, b);
    let (r_ba, witness_a) = deviation_with_witness(b, a);
    Ok(HausdorffResult { d_h: r_ab.max(r_ba), r_ab, r_ba, witness_a, witness_b })
}

/// Brute-force [`hausdorff`].
pub fn hausdorff_brute(a: &PointCloud, b: &PointCloud) -> Result<HausdorffResult> {
    let (r_ab, witness_b) = directed_deviation_brute(a, b)?;
    let (r_ba, witness_a) = directed_deviation_brute(b, a)?;
    Ok(HausdorffResult { d_h: r_ab.max(r_ba), r_ab, r_ba, witness_a, witness_b })
}

/// Sampling fill distance estimate: the largest nearest-neighbour spacing
/// divided by `sqrt 2` (exact for square lattices, an upper bound on curves).
pub fn fill_distance(cloud: &PointCloud) -> f64 {
    if cloud.len() < 2 {
        return 0.0;
    }
    let index = GridIndex::new(cloud);
    let mut worst: f64 = 0.0;
    for i in 0..cloud.len() {
        let others = cloud.subset(|j| j != i);
        let d = if cloud.len() <= 64 {
            directed_deviation_brute(&others, &cloud.subset(|j| j == i)).map(|x| x.0).unwrap_or(0.0)
        } else {
            second_nearest(&index, cloud.point(i), i)
        };
        worst = worst.max(d);
    }
    worst / std::f64::consts::SQRT_2
}

fn second_nearest(index: &GridIndex, q: &[f64], own: usize) -> f64 {
    // nearest point other than `own`: search the index for q and, if that is
    // `own` (or a duplicate at distance 0 of it), widen over its cell ring
    let (d, i) = index.nearest(q);
    if i != own {
        return d.sqrt();
    }
    let mut best = f64::INFINITY;
    let home = GridIndex::key(q, index.k, index.cell);
    let mut r = 0;
    loop {
        let side = (2 * r + 1) as usize;
        if side.pow(index.k as u32) > 4 * index.cells.len() {
            for idx in index.cells.values() {
                for &j in idx {
                    if j != own {
                        best = best.min(dist2(q, index.cloud.point(j)));
                    }
                }
            }
            return best.sqrt();
        }
        index.visit_ring(home, r, |key| {
            if let Some(idx) = index.cells.get(key) {
                for &j in idx {
                    if j != own {
                        best = best.min(dist2(q, index.cloud.point(j)));
                    }
                }
            }
        });
        let reach = r as f64 * index.cell;
        if best <= reach * reach {
            return best.sqrt();
        }
        r += 1;
    }
}

impl HausdorffResult {
    pub fn to_json(&self, fill_a: f64, fill_b: f64) -> serde_json::Value {
        serde_json::json!({
            "d_h": self.d_h,
            "r_ab": self.r_ab,
            "r_ba": self.r_ba,
            "witness_a": self.witness_a,
            "witness_b": self.witness_b,
            "fill_distance_a": fill_a,
            "fill_distance_b": fill_b,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn circle(r: f64, m: usize) -> PointCloud {
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / m as f64;
                vec![r * t.cos(), r * t.sin()]
            })
            .collect();
        PointCloud::new(2, &pts).unwrap()
    }

    #[test]
    fn examples() {
        let a = PointCloud::new(2, &[vec![0.0, 0.0]]).unwrap();
        let b = PointCloud::new(2, &[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(directed_deviation(&a, &b).unwrap(), 5.0);
        assert_eq!(directed_deviation(&b, &b).unwrap(), 0.0);
        let h = hausdorff(&circle(1.0, 512), &circle(1.1, 512)).unwrap();
        let spacing = 2.0 * PI * 1.1 / 512.0;
        assert!((h.d_h - 0.1).abs() <= spacing);
        let empty = PointCloud::new(2, &[]).unwrap();
        assert_eq!(hausdorff(&a, &empty), Err(MetricError::EmptyCloud));
    }

    #[test]
    fn fill_distance_of_lattice() {
        let pts: Vec<Vec<f64>> = (0..100).map(|i| vec![(i % 10) as f64 * 0.5, (i / 10) as f64 * 0.5]).collect();
        let c = PointCloud::new(2, &pts).unwrap();
        assert!((fill_distance(&c) - 0.5 / 2f64.sqrt()).abs() < 1e-15);
        let small = PointCloud::new(2, &pts[..20]).unwrap();
        assert!((fill_distance(&small) - 0.5 / 2f64.sqrt()).abs() < 1e-15);
    }

    fn cloud(dim: usize) -> impl Strategy<Value = PointCloud> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), 1..60)
            .prop_map(move |pts| PointCloud::new(dim, &pts).unwrap())
    }

    proptest! {
        #[test]
        fn index_matches_brute_force(a in cloud(4), b in cloud(4)) {
            prop_assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff_brute(&a, &b).unwrap());
        }

        #[test]
        fn metric_axioms(a in cloud(2), b in cloud(2), c in cloud(2)) {
            let ab = hausdorff(&a, &b).unwrap().d_h;
            prop_assert_eq!(hausdorff(&a, &a).unwrap().d_h, 0.0);
            prop_assert_eq!(ab, hausdorff(&b, &a).unwrap().d_h);
            let ac = hausdorff(&a, &c).unwrap().d_h;
            let bc = hausdorff(&b, &c).unwrap().d_h;
            prop_assert!(ac <= ab + bc);
        }

        #[test]
        fn subsampling_cannot_increase_deviation(a in cloud(3), b in cloud(3), drop in 0usize..10) {
            let full = directed_deviation(&a, &b).unwrap();
            let sub = b.subset(|i| i % 10 != drop || i == 0);
            prop_assert!(directed_deviation(&a, &sub).unwrap() <= full);
        }
    }
}
