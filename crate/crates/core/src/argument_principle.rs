//! Cauchy integrals over the boundary trace curves and the interior images
//! they determine.
//!
//! For a holomorphic immersion `w = (w_1, ..., w_n)` with boundary traces
//! `eta_k`, the integral
//! `J_{k,j}(z) = 1/(2 pi i) int eta_k d(eta_j) / (eta_j - z) dl`
//! is the sum of `w_k` over the preimages of `z` under `w_j`, counted with
//! multiplicity. Where `w_j - z` has a single simple zero this recovers the
//! image point itself.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary_calculus::{BoundaryFunction, CalculusError};
use crate::holomorphic_structure::TraceTuple;

/// Upper bound on quadrature nodes, as a multiple of the mode count.
pub const MAX_OVERSAMPLING: usize = 16;
/// Winding values must lie this close to an integer.
pub const WINDING_TOL: f64 = 0.1;
/// Relative (to the cloud diameter) tolerance of the self-consistency check.
pub const CONSISTENCY_TOL: f64 = 1e-6;
/// Relative tolerance for merging duplicate points.
pub const MERGE_TOL: f64 = 1e-6;
/// Relative full-rank tolerance of the Jacobian.
pub const SIGMA_MIN_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ApError {
    #[error("target at distance {dist:e} from the contour, inside the exclusion band {eps_min:e}")]
    TooCloseToContour { dist: f64, eps_min: f64 },
    #[error("winding integral {0} is not close to an integer; increase N")]
    NonIntegerWinding(f64),
    #[error("trace index {0} out of range")]
    BadIndex(usize),
    #[error("empty trace tuple")]
    EmptyTuple,
    #[error("traces disagree on mode count or length")]
    Mismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
}

pub type Result<T> = std::result::Result<T, ApError>;

struct Nodes {
    eta: Vec<Vec<Complex64>>,
    deta_j: Vec<Complex64>,
}

/// Cached trapezoidal quadrature for one chart `j` of a tuple of traces.
///
/// The node count adapts to the distance from the contour: `max(N, 4 L_c /
/// dist)` rounded up to `N 2^p`, capped at `16 N`, where `L_c` is the length
/// of the curve `eta_j(Gamma)`. Samples at each level are exact (zero-padded
/// FFT of the band-limited traces).
pub struct CauchyEvaluator<'a> {
    traces: &'a [BoundaryFunction],
    j: usize,
    n: usize,
    length: f64,
    curve_length: f64,
    contour: Vec<Complex64>,
    cache: RefCell<HashMap<usize, std::rc::Rc<Nodes>>>,
}

impl<'a> CauchyEvaluator<'a> {
    pub fn new(traces: &'a [BoundaryFunction], j: usize) -> Result<Self> {
        let first = traces.first().ok_or(ApError::EmptyTuple)?;
        if j >= traces.len() {
            return Err(ApError::BadIndex(j));
        }
        let (n, length) = (first.n(), first.length());
        if traces.iter().any(|t| t.n() != n || (t.length() - length).abs() > 1e-12 * length) {
            return Err(ApError::Mismatch);
        }
        let contour = traces[j].samples_at(4 * n);
        let speed = traces[j].derivative().samples_at(4 * n);
        let curve_length = speed.iter().map(|d| d.norm()).sum::<f64>() * length / (4 * n) as f64;
        Ok(CauchyEvaluator { traces, j, n, length, curve_length, contour, cache: RefCell::new(HashMap::new()) })
    }

    pub fn chart(&self) -> usize {
        self.j
    }

    /// Length of the curve `eta_j(Gamma)` in the plane.
    pub fn curve_length(&self) -> f64 {
        self.curve_length
    }

    /// Exclusion band: below this distance the plain quadrature is not trusted.
    pub fn eps_min(&self) -> f64 {
        4.0 * self.curve_length / (MAX_OVERSAMPLING * self.n) as f64
    }

    /// Discrete distance from `z` to the contour over `4N` samples.
    pub fn dist(&self, z: Complex64) -> f64 {
        self.contour.iter().map(|c| (c - z).norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn contour(&self) -> &[Complex64] {
        &self.contour
    }

    fn nodes(&self, m: usize) -> std::rc::Rc<Nodes> {
        self.cache
            .borrow_mut()
            .entry(m)
            .or_insert_with(|| {
                std::rc::Rc::new(Nodes {
                    eta: self.traces.iter().map(|t| t.samples_at(m)).collect(),
                    deta_j: self.traces[self.j].derivative().samples_at(m),
                })
            })
            .clone()
    }

    fn node_count(&self, dist: f64, extra: usize) -> usize {
        let need = (4.0 * self.curve_length / dist).ceil() as usize;
        let cap = MAX_OVERSAMPLING * self.n;
        let mut m = self.n;
        while m < need && m < cap {
            m *= 2;
        }
        m.min(cap) << extra
    }

    fn check(&self, z: Complex64) -> Result<f64> {
        let dist = self.dist(z);
        let eps_min = self.eps_min();
        if !(dist >= eps_min) {
            return Err(ApError::TooCloseToContour { dist, eps_min });
        }
        Ok(dist)
    }

    /// `J_{k,j}(z)` for every `k`, plus the `k = 0` (constant 1) integral in front.
    pub fn integrals(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let dist = self.check(z)?;
        Ok(self.sum(z, self.node_count(dist, 0), 1))
    }

    /// `d/dz J_{k,j}(z)` for every `k`, with the `k = 0` entry in front.
    pub fn derivatives(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let dist = self.check(z)?;
        Ok(self.sum(z, self.node_count(dist, 1), 2))
    }

    fn sum(&self, z: Complex64, m: usize, power: i32) -> Vec<Complex64> {
        let nodes = self.nodes(m);
        let ej = &nodes.eta[self.j];
        let mut acc = vec![Complex64::new(0.0, 0.0); self.traces.len() + 1];
        for q in 0..m {
            let w = nodes.deta_j[q] / (ej[q] - z).powi(power);
            acc[0] += w;
            for (k, e) in nodes.eta.iter().enumerate() {
                acc[k + 1] += e[q] * w;
            }
        }
        let scale = Complex64::new(0.0, -1.0) * (self.length / m as f64 / (2.0 * PI));
        acc.iter().map(|a| a * scale).collect()
    }

    /// Distance-checked `J_{0,j}(z)` rounded to an integer.
    pub fn winding(&self, z: Complex64) -> Result<i32> {
        let dist = self.check(z)?;
        let v = self.sum(z, self.node_count(dist, 0), 1)[0];
        let r = v.re.round();
        if (v.re - r).abs() >= WINDING_TOL || v.im.abs() >= WINDING_TOL {
            return Err(ApError::NonIntegerWinding(v.re));
        }
        Ok(r as i32)
    }
}

/// `J_{k,j}(z)`; `eta_k = None` is the constant 1.
pub fn cauchy_integral(eta_k: Option<&BoundaryFunction>, eta_j: &BoundaryFunction, z: Complex64) -> Result<Complex64> {
    single(eta_k, eta_j, |ev| ev.integrals(z))
}

/// `d/dz J_{k,j}(z)`, with doubled node count.
pub fn derivative_integral(eta_k: Option<&BoundaryFunction>, eta_j: &BoundaryFunction, z: Complex64) -> Result<Complex64> {
    single(eta_k, eta_j, |ev| ev.derivatives(z))
}

fn single(
    eta_k: Option<&BoundaryFunction>,
    eta_j: &BoundaryFunction,
    f: impl Fn(&CauchyEvaluator) -> Result<Vec<Complex64>>,
) -> Result<Complex64> {
    let traces: Vec<BoundaryFunction> = match eta_k {
        Some(k) => vec![eta_j.clone(), k.clone()],
        None => vec![eta_j.clone()],
    };
    let ev = CauchyEvaluator::new(&traces, 0)?;
    let v = f(&ev)?;
    Ok(if eta_k.is_some() { v[2] } else { v[0] })
}

/// Winding number of `eta_j` around `z`; requires `dist(z, eta_j) > eps`.
pub fn winding_number(eta_j: &BoundaryFunction, z: Complex64, eps: f64) -> Result<i32> {
    let traces = [eta_j.clone()];
    let ev = CauchyEvaluator::new(&traces, 0)?;
    let dist = ev.dist(z);
    if !(dist > eps) {
        return Err(ApError::TooCloseToContour { dist, eps_min: eps });
    }
    ev.winding(z)
}

/// A rectangular lattice of targets `x0 + i dx + 1i (y0 + k dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridFrame {
    /// Bounding box of `points`, each side padded by 20% of the extent.
    pub fn around(points: &[Complex64], resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(ApError::InvalidParameter("grid resolution must be >= 2".into()));
        }
        let (mut lo, mut hi) = (Complex64::new(f64::INFINITY, f64::INFINITY), Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in points {
            lo.re = lo.re.min(p.re);
            lo.im = lo.im.min(p.im);
            hi.re = hi.re.max(p.re);
            hi.im = hi.im.max(p.im);
        }
        let w = (hi.re - lo.re).max(1e-12);
        let h = (hi.im - lo.im).max(1e-12);
        let (x0, x1) = (lo.re - 0.2 * w, hi.re + 0.2 * w);
        let (y0, y1) = (lo.im - 0.2 * h, hi.im + 0.2 * h);
        let d = resolution as f64 - 1.0;
        Ok(GridFrame { x0, y0, dx: (x1 - x0) / d, dy: (y1 - y0) / d, nx: resolution, ny: resolution })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> Complex64 {
        let (i, k) = (idx % self.nx, idx / self.nx);
        Complex64::new(self.x0 + i as f64 * self.dx, self.y0 + k as f64 * self.dy)
    }

    pub fn spacing(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Winding numbers of one trace curve over a grid; `None` marks points within
/// the clearance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindingField {
    pub chart: usize,
    pub frame: GridFrame,
    pub winding: Vec<Option<i32>>,
    pub epsilon: f64,
}

impl WindingField {
    /// Targets with winding exactly 1 (the sampled `V_j^eps`).
    pub fn winding_one(&self) -> Vec<Complex64> {
        self.winding
            .iter()
            .enumerate()
            .filter(|(_, w)| **w == Some(1))
            .map(|(i, _)| self.frame.point(i))
            .collect()
    }
}

/// Classifies grid targets for chart `j` of `traces`. The frame defaults to
/// the padded bounding box of `eta_j(Gamma)`.
pub fn classify_chart(
    traces: &[BoundaryFunction],
    j: usize,
    resolution: usize,
    eps: f64,
    frame: Option<GridFrame>,
) -> Result<WindingField> {
    if !(eps > 0.0) {
        return Err(ApError::InvalidParameter("clearance must be positive".into()));
    }
    let ev = CauchyEvaluator::new(traces, j)?;
    let frame = match frame {
        Some(f) => f,
        None => GridFrame::around(ev.contour(), resolution)?,
    };
    let clear = eps.max(ev.eps_min());
    let winding = (0..frame.len())
        .map(|i| {
            let z = frame.point(i);
            if ev.dist(z) <= clear {
                Ok(None)
            } else {
                ev.winding(z).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WindingField { chart: j, frame, winding, epsilon: eps })
}

/// [`classify_chart`] for a single trace.
pub fn classify(eta_j: &BoundaryFunction, resolution: usize, eps: f64) -> Result<WindingField> {
    classify_chart(std::slice::from_ref(eta_j), 0, resolution, eps, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointTag {
    Interior(usize),
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub coords: Vec<Complex64>,
    pub tag: PointTag,
    pub source_z: Option<Complex64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionDiagnostics {
    pub candidates: usize,
    pub consistency_failed: usize,
    pub degenerate: usize,
    pub merged: usize,
    pub max_consistency_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructedCloud {
    pub points: Vec<CloudPoint>,
    pub epsilon: f64,
    pub source: String,
    pub diagnostics: ReconstructionDiagnostics,
}

impl ReconstructedCloud {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.coords.len())
    }

    /// Real coordinates in `R^{2n}`.
    pub fn real_points(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.coords.iter().flat_map(|c| [c.re, c.im]).collect()).collect()
    }

    pub fn interior(&self) -> impl Iterator<Item = &CloudPoint> {
        self.points.iter().filter(|p| matches!(p.tag, PointTag::Interior(_)))
    }

    /// CSV with columns `re_1, im_1, ..., re_n, im_n, tag, chart_j, source_z_re, source_z_im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.dim();
        let mut header: Vec<String> = (1..=n).flat_map(|k| [format!("re_{k}"), format!("im_{k}")]).collect();
        header.extend(["tag", "chart_j", "source_z_re", "source_z_im"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for p in &self.points {
            let mut row: Vec<String> = p.coords.iter().flat_map(|c| [fmt(c.re), fmt(c.im)]).collect();
            match p.tag {
                PointTag::Interior(j) => row.extend(["interior".into(), (j + 1).to_string()]),
                PointTag::Boundary => row.extend(["boundary".into(), String::new()]),
            }
            match p.source_z {
                Some(z) => row.extend([fmt(z.re), fmt(z.im)]),
                None => row.extend([String::new(), String::new()]),
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| ApError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Reads the format of [`Self::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        let n = header.iter().filter(|h| h.starts_with("re_")).count();
        let col = |name: &str| header.iter().position(|h| h == name);
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| ApError::Csv("short row".into()))?
                    .parse()
                    .map_err(|e| ApError::Csv(format!("{e}")))
            };
            let mut coords = Vec::with_capacity(n);
            for k in 1..=n {
                let re = col(&format!("re_{k}")).ok_or_else(|| ApError::Csv(format!("missing re_{k}")))?;
                let im = col(&format!("im_{k}")).ok_or_else(|| ApError::Csv(format!("missing im_{k}")))?;
                coords.push(Complex64::new(num(re)?, num(im)?));
            }
            let field = |name: &str| col(name).and_then(|i| rec.get(i)).unwrap_or("");
            let tag = match (field("tag"), field("chart_j").parse::<usize>()) {
                ("interior", Ok(j)) if j >= 1 => PointTag::Interior(j - 1),
                _ => PointTag::Boundary,
            };
            let source_z = match (field("source_z_re").parse::<f64>(), field("source_z_im").parse::<f64>()) {
                (Ok(a), Ok(b)) => Some(Complex64::new(a, b)),
                _ => None,
            };
            points.push(CloudPoint { coords, tag, source_z });
        }
        Ok(ReconstructedCloud { points, epsilon: 0.0, source: "csv".into(), diagnostics: Default::default() })
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn csv_err(e: csv::Error) -> ApError {
    ApError::Csv(e.to_string())
}

/// Boundary samples of the tuple at `m` nodes.
pub fn boundary_samples(traces: &[BoundaryFunction], m: usize) -> Vec<Vec<Complex64>> {
    let cols: Vec<Vec<Complex64>> = traces.iter().map(|t| t.samples_at(m)).collect();
    (0..m).map(|q| cols.iter().map(|c| c[q]).collect()).collect()
}

fn diameter(points: &[Vec<Complex64>]) -> f64 {
    // bounding-box diagonal: within a factor sqrt(2n) of the true diameter
    let Some(first) = points.first() else { return 0.0 };
    let n = first.len();
    let mut acc = 0.0;
    for k in 0..n {
        for part in [|c: Complex64| c.re, |c: Complex64| c.im] {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let v = part(p[k]);
                (lo.min(v), hi.max(v))
            });
            acc += (hi - lo).powi(2);
        }
    }
    acc.sqrt()
}

/// Image points `(J_{1,j}(z), ..., J_{n,j}(z))` for the targets `zs`, with
/// the self-consistency `|J_{j,j}(z) - z| <= tol` and a non-vanishing
/// `d/dz J_{j,j}`. Targets whose winding is not 1 are skipped; failures are
/// counted, not raised.
pub fn reconstruct_at(
    traces: &[BoundaryFunction],
    j: usize,
    zs: &[Complex64],
    tol: f64,
) -> Result<(Vec<CloudPoint>, ReconstructionDiagnostics)> {
    let ev = CauchyEvaluator::new(traces, j)?;
    let mut diag = ReconstructionDiagnostics::default();
    let mut out = Vec::with_capacity(zs.len());
    for &z in zs {
        let v = match ev.integrals(z) {
            Ok(v) => v,
            Err(ApError::TooCloseToContour { .. }) => continue,
            Err(e) => return Err(e),
        };
        let w = v[0].re.round();
        if w != 1.0 || (v[0].re - w).abs() >= WINDING_TOL {
            continue;
        }
        diag.candidates += 1;
        let err = (v[j + 1] - z).norm();
        diag.max_consistency_error = diag.max_consistency_error.max(err);
        if err > tol {
            diag.consistency_failed += 1;
            continue;
        }
        if ev.derivatives(z)?[j + 1].norm() <= 1e-8 {
            diag.degenerate += 1;
            continue;
        }
        out.push(CloudPoint { coords: v[1..].to_vec(), tag: PointTag::Interior(j), source_z: Some(z) });
    }
    Ok((out, diag))
}

/// Samples `E(M)` away from the boundary curve: every chart's winding-1
/// grid targets, plus `4N` boundary samples, with duplicates merged.
pub fn reconstruct(e: &TraceTuple, eps: f64, resolution: usize) -> Result<ReconstructedCloud> {
    let frames = vec![None; e.len()];
    reconstruct_in_frames(e, eps, resolution, &frames)
}

/// [`reconstruct`] with an explicit grid frame per chart.
pub fn reconstruct_in_frames(
    e: &TraceTuple,
    eps: f64,
    resolution: usize,
    frames: &[Option<GridFrame>],
) -> Result<ReconstructedCloud> {
    let traces = &e.traces;
    if traces.is_empty() {
        return Err(ApError::EmptyTuple);
    }
    let bnd = boundary_samples(traces, 4 * traces[0].n());
    let diam = diameter(&bnd);
    let tol = CONSISTENCY_TOL * diam.max(f64::MIN_POSITIVE);
    let mut points = Vec::new();
    let mut diag = ReconstructionDiagnostics::default();
    for j in 0..traces.len() {
        let field = classify_chart(traces, j, resolution, eps, frames.get(j).copied().flatten())?;
        let zs = field.winding_one();
        let (pts, d) = reconstruct_at(traces, j, &zs, tol)?;
        diag.candidates += d.candidates;
        diag.consistency_failed += d.consistency_failed;
        diag.degenerate += d.degenerate;
        diag.max_consistency_error = diag.max_consistency_error.max(d.max_consistency_error);
        points.extend(pts);
    }
    points.extend(bnd.into_iter().map(|coords| CloudPoint { coords, tag: PointTag::Boundary, source_z: None }));
    let before = points.len();
    let points = merge_duplicates(points, MERGE_TOL * diam);
    diag.merged = before - points.len();
    Ok(ReconstructedCloud { points, epsilon: eps, source: format!("trace tuple of {} functions", traces.len()), diagnostics: diag })
}

/// Greedy merge: a point is dropped when within `tol` of a kept point that
/// precedes it in the `(Re w_1, index)` order.
pub fn merge_duplicates(points: Vec<CloudPoint>, tol: f64) -> Vec<CloudPoint> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].coords[0].re.total_cmp(&points[b].coords[0].re).then(a.cmp(&b)));
    let mut keep = vec![true; points.len()];
    let dist = |a: &CloudPoint, b: &CloudPoint| -> f64 {
        a.coords.iter().zip(&b.coords).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
    };
    for (pos, &a) in order.iter().enumerate() {
        if !keep[a] {
            continue;
        }
        for &b in &order[pos + 1..] {
            if points[b].coords[0].re - points[a].coords[0].re > tol {
                break;
            }
            if keep[b] && dist(&points[a], &points[b]) <= tol {
                keep[b] = false;
            }
        }
    }
    points.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

/// Outcome of [`immersion_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmersionReport {
    /// False when no chart has a winding-1 sample.
    pub applicable: bool,
    pub full_rank: bool,
    /// Smallest singular value over all samples divided by the largest.
    pub min_margin: f64,
    pub samples: usize,
}

/// Real `2m x 2` Jacobian of `(w_1, ..., w_m)` in `(Re z, Im z)` at every
/// winding-1 sample of every field. Full rank when the smallest singular
/// value seen is at least [`SIGMA_MIN_TOL`] times the largest.
pub fn immersion_check(e: &TraceTuple, fields: &[WindingField], m: usize) -> Result<ImmersionReport> {
    if m == 0 || m > e.len() {
        return Err(ApError::InvalidParameter(format!("m = {m} must be in 1..={}", e.len())));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut samples = 0;
    for field in fields {
        let zs = field.winding_one();
        if zs.is_empty() {
            continue;
        }
        let ev = CauchyEvaluator::new(&e.traces, field.chart)?;
        for z in zs {
            let d = match ev.derivatives(z) {
                Ok(d) => d,
                Err(ApError::TooCloseToContour { .. }) => continue,
                Err(err) => return Err(err),
            };
            let (smin, smax) = jacobian_singular_values(&d[1..=m]);
            lo = lo.min(smin);
            hi = hi.max(smax);
            samples += 1;
        }
    }
    if samples == 0 {
        return Ok(ImmersionReport { applicable: false, full_rank: false, min_margin: 0.0, samples: 0 });
    }
    let min_margin = if hi > 0.0 { lo / hi } else { 0.0 };
    Ok(ImmersionReport { applicable: true, full_rank: min_margin >= SIGMA_MIN_TOL, min_margin, samples })
}

/// Extreme singular values of the stacked blocks `[[Re d, -Im d], [Im d, Re d]]`.
pub fn jacobian_singular_values(d: &[Complex64]) -> (f64, f64) {
    let jac = nalgebra::DMatrix::from_fn(2 * d.len(), 2, |r, c| {
        let x = d[r / 2];
        match (r % 2, c) {
            (0, 0) | (1, 1) => x.re,
            (0, _) => -x.im,
            _ => x.im,
        }
    });
    let sv = jac.singular_values();
    (sv.min(), sv.max())
}
