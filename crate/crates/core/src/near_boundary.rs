//! Rectified coordinates near the boundary curve and the point pairing
//! between two immersions built from it.
//!
//! A chart at the boundary point `a` uses `zeta(z) = (z - eta_j(a)) / eta_j'(a)`
//! and `psi(l) = zeta(eta_j(l))`. On a window where
//! `Re(eta_j'(l) / eta_j'(a)) >= c0` the map `psi_1` is increasing and
//! `(s, r) = (psi_1^{-1}(zeta_1), zeta_2 - psi_2(s))` sends the curve to `r = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::argument_principle::{ApError, CauchyEvaluator};
use crate::boundary_calculus::BoundaryFunction;
use crate::holomorphic_structure::TraceTuple;

/// Cone constant of every chart.
pub const C0: f64 = 0.5;
/// Smallest admissible `|eta_j'(a)|`.
pub const DERIV_TOL: f64 = 1e-8;
/// Oversampling of the window nodes relative to the mode grid.
pub const WINDOW_OVERSAMPLING: usize = 8;
/// Gauss-Legendre points per panel.
const GL_POINTS: usize = 16;

#[derive(Debug, Error)]
pub enum NearBoundaryError {
    #[error("tangent vanishes at the anchor: |eta'(a)| = {0:e}")]
    DerivativeVanishes(f64),
    #[error("chart window of length {0:e} is shorter than four grid steps")]
    WindowCollapse(f64),
    #[error("point {0} lies outside the chart")]
    OutOfChart(Complex64),
    #[error("split width {delta:e} is below four grid steps ({min:e})")]
    DeltaTooSmall { delta: f64, min: f64 },
    #[error("no chart index gives a valid chart at any anchor")]
    AllChartsFailed,
    #[error("immersions differ in dimension or mode count")]
    Mismatch,
    #[error(transparent)]
    Ap(#[from] ApError),
}

pub type Result<T> = std::result::Result<T, NearBoundaryError>;

/// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    /// `x` strictly increasing, `y` monotone.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        d[0] = del[0];
        d[n - 1] = del[n - 2];
        for i in 1..n - 1 {
            if del[i - 1] * del[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
            }
        }
        MonotoneCubic { x, y, d }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let (h00, h10) = ((1.0 + 2.0 * u) * (1.0 - u).powi(2), u * (1.0 - u).powi(2));
        let (h01, h11) = (u * u * (3.0 - 2.0 * u), u * u * (u - 1.0));
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

/// Rectifying chart at an anchor.
#[derive(Debug, Clone)]
pub struct BoundaryChart {
    pub anchor: f64,
    pub chart_index: usize,
    pub c0: f64,
    pub disk_radius: f64,
    pub zeta_shift: Complex64,
    pub zeta_scale: Complex64,
    /// Arclength window `(lo, hi)`, unwrapped so `lo < anchor < hi`.
    pub gamma_window: (f64, f64),
    pub psi1_inverse: MonotoneCubic,
    /// Bounds of the Jacobian determinant of `(Re z, Im z) -> (s, r)`.
    pub jacobian_bounds: (f64, f64),
    /// `max |eta_j'| / |eta_j'(a)|` on the window.
    pub speed_ratio: f64,
    eta: BoundaryFunction,
}

impl BoundaryChart {
    fn psi(&self, l: f64) -> (Complex64, Complex64) {
        let (v, dv) = self.eta.eval_with_derivative(l);
        ((v - self.zeta_shift) / self.zeta_scale, dv / self.zeta_scale)
    }

    pub fn eta(&self) -> &BoundaryFunction {
        &self.eta
    }
}

/// Builds the chart of `eta_j` at arclength `a`.
pub fn build_chart(eta_j: &BoundaryFunction, chart_index: usize, a: f64) -> Result<BoundaryChart> {
    let (n, length) = (eta_j.n(), eta_j.length());
    let (za, da) = eta_j.eval_with_derivative(a);
    if da.norm() <= DERIV_TOL {
        return Err(NearBoundaryError::DerivativeVanishes(da.norm()));
    }
    let h = length / (WINDOW_OVERSAMPLING * n) as f64;
    let cone = |l: f64| (eta_j.eval_with_derivative(l).1 / da).re;
    let max_k = ((0.5 * length) / h) as usize - 1;
    let mut k = 0;
    while k < max_k && cone(a + (k + 1) as f64 * h) >= C0 && cone(a - (k + 1) as f64 * h) >= C0 {
        k += 1;
    }
    let width = 2.0 * k as f64 * h;
    if width < 4.0 * length / n as f64 {
        return Err(NearBoundaryError::WindowCollapse(width));
    }
    let nodes: Vec<f64> = (-(k as i64)..=k as i64).map(|i| a + i as f64 * h).collect();
    let mut psi1 = Vec::with_capacity(nodes.len());
    let mut dmax: f64 = 0.0;
    for &l in &nodes {
        let (v, dv) = eta_j.eval_with_derivative(l);
        psi1.push(((v - za) / da).re);
        dmax = dmax.max(dv.norm());
    }
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    let reach = (-psi1[0]).min(psi1[psi1.len() - 1]) * da.norm();
    // off-window samples must stay outside the disk
    let m = WINDOW_OVERSAMPLING * n;
    let off = (0..m)
        .map(|q| lo + (hi - lo) + (length - (hi - lo)) * q as f64 / m as f64)
        .filter(|&l| l > hi && l < lo + length)
        .map(|l| (eta_j.eval(l) - za).norm())
        .fold(f64::INFINITY, f64::min);
    let disk_radius = 0.9 * reach.min(off);
    let speed_ratio = dmax / da.norm();
    let d2 = da.norm_sqr();
    Ok(BoundaryChart {
        anchor: a,
        chart_index,
        c0: C0,
        disk_radius,
        zeta_shift: za,
        zeta_scale: da,
        gamma_window: (lo, hi),
        psi1_inverse: MonotoneCubic::new(psi1, nodes),
        jacobian_bounds: (1.0 / (speed_ratio * d2), 1.0 / (C0 * d2)),
        speed_ratio,
        eta: eta_j.clone(),
    })
}

/// `(s, r)` of `z`, defined while `zeta_1(z)` is in the range of `psi_1`.
/// The interior side of a positively oriented curve has `r > 0`.
pub fn rectify(chart: &BoundaryChart, z: Complex64) -> Result<(f64, f64)> {
    let zeta = (z - chart.zeta_shift) / chart.zeta_scale;
    let (x0, x1) = chart.psi1_inverse.domain();
    if zeta.re < x0 || zeta.re > x1 {
        return Err(NearBoundaryError::OutOfChart(z));
    }
    let (lo, hi) = chart.gamma_window;
    let mut s = chart.psi1_inverse.eval(zeta.re);
    for _ in 0..50 {
        let (p, dp) = chart.psi(s);
        let step = (p.re - zeta.re) / dp.re;
        s = (s - step).clamp(lo, hi);
        if step.abs() <= 1e-15 * (1.0 + s.abs()) {
            break;
        }
    }
    let (p, _) = chart.psi(s);
    Ok((s, zeta.im - p.im))
}

/// Inverse of [`rectify`]: `z = eta_j(s) + i r eta_j'(a)`.
pub fn unrectify(chart: &BoundaryChart, s: f64, r: f64) -> Result<Complex64> {
    let (lo, hi) = chart.gamma_window;
    if s < lo || s > hi {
        return Err(NearBoundaryError::OutOfChart(Complex64::new(s, r)));
    }
    Ok(chart.eta.eval(s) + Complex64::new(0.0, r) * chart.zeta_scale)
}

/// Output of [`split_cauchy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCauchy {
    pub value: Complex64,
    /// Largest modulus of the regularized integrand on `Gamma_delta(s)`.
    pub near_max: f64,
}

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    use std::sync::OnceLock;
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        // Golub-Welsch
        let n = GL_POINTS;
        let t = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                let k = i.max(j) as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = t.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> =
            (0..n).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    })
}

/// `1/(2 pi i) int (eta_k - eta_k(s)) d(eta_j) / (eta_j - z) dl + eta_k(s)`,
/// the Cauchy integral for a target `z` close to `eta_j(s)` on the winding-1
/// side. The arc `|l - s| < delta` uses Gauss-Legendre panels graded toward
/// `s`; the rest uses uniform panels.
pub fn split_cauchy(
    eta_k: &BoundaryFunction,
    eta_j: &BoundaryFunction,
    z: Complex64,
    s: f64,
    delta: f64,
) -> Result<SplitCauchy> {
    let (n, length) = (eta_j.n(), eta_j.length());
    if eta_k.n() != n {
        return Err(NearBoundaryError::Mismatch);
    }
    let min = 4.0 * length / n as f64;
    if !(delta >= min) || delta > 0.5 * length {
        return Err(NearBoundaryError::DeltaTooSmall { delta, min });
    }
    let (ek_s, _) = eta_k.eval_with_derivative(s);
    let (ej_s, dj_s) = eta_j.eval_with_derivative(s);
    // finest panel resolves the complex pole at distance ~ |z - eta_j(s)| / |eta_j'(s)|
    let scale = ((z - ej_s).norm() / dj_s.norm()).max(1e-3 * length / n as f64);
    let mut near_panels = Vec::new();
    let mut b = delta;
    while b > scale / 8.0 {
        near_panels.push((0.5 * b, b));
        b *= 0.5;
    }
    near_panels.push((0.0, b));
    let (x, w) = gauss_legendre();
    let integrand = |l: f64| -> Complex64 {
        let (ek, _) = eta_k.eval_with_derivative(l);
        let (ej, dj) = eta_j.eval_with_derivative(l);
        (ek - ek_s) * dj / (ej - z)
    };
    let panel = |a: f64, b: f64, max: &mut f64| -> Complex64 {
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = Complex64::new(0.0, 0.0);
        for (xi, wi) in x.iter().zip(w) {
            let g = integrand(c + r * xi);
            *max = max.max(g.norm());
            acc += g * *wi;
        }
        acc * r
    };
    let mut near_max = 0.0;
    let mut total = Complex64::new(0.0, 0.0);
    for &(a, b) in &near_panels {
        total += panel(s + a, s + b, &mut near_max);
        total += panel(s - b, s - a, &mut near_max);
    }
    let far = length - 2.0 * delta;
    let count = ((far / (2.0 * length / n as f64)).ceil() as usize).max(1);
    let mut far_max = 0.0;
    for q in 0..count {
        let a = s + delta + far * q as f64 / count as f64;
        let b = s + delta + far * (q + 1) as f64 / count as f64;
        total += panel(a, b, &mut far_max);
    }
    let value = total / Complex64::new(0.0, 2.0 * PI) + ek_s;
    Ok(SplitCauchy { value, near_max })
}

/// Pointwise bound on the regularized near integrand for targets
/// `eta_j(s) + i r eta_j'(a)` of `chart` when `Gamma_delta(s)` lies in the window:
/// `|eta_k|_{C^1} * speed_ratio / c0`.
pub fn near_piece_bound(chart: &BoundaryChart, eta_k: &BoundaryFunction) -> f64 {
    eta_k.ck_norm(1) * chart.speed_ratio / chart.c0
}

/// Default split width `max(4 L / N, sqrt(t) L / 2 pi)`.
pub fn default_delta(n: usize, length: f64, t: f64) -> f64 {
    (4.0 * length / n as f64).max(t.max(0.0).sqrt() * length / (2.0 * PI))
}

/// Evaluates the image point over `z` for chart `j`, switching to
/// [`split_cauchy`] within twice the exclusion band. `foot` is the
/// arclength of the nearby boundary point.
pub fn image_point(
    traces: &[BoundaryFunction],
    ev: &CauchyEvaluator,
    z: Complex64,
    foot: f64,
    delta: f64,
) -> Result<Vec<Complex64>> {
    let dist = ev.dist(z);
    if dist >= 2.0 * ev.eps_min() {
        return Ok(ev.integrals(z)?[1..].to_vec());
    }
    let j = ev.chart();
    traces.iter().map(|eta_k| Ok(split_cauchy(eta_k, &traces[j], z, foot, delta)?.value)).collect()
}

/// Pairs a point `p2` of the perturbed image with a point of the reference
/// image: rectify `pi_j p2` in `chart2`, un-rectify in `chart`, and evaluate
/// the reference immersion there. Boundary points (`r = 0`) go to `E(s)`.
pub fn pair_points(
    chart: &BoundaryChart,
    chart2: &BoundaryChart,
    reference: &[BoundaryFunction],
    p2: &[Complex64],
    delta: f64,
) -> Result<Vec<Complex64>> {
    let j = chart.chart_index;
    if chart2.chart_index != j || p2.len() != reference.len() {
        return Err(NearBoundaryError::Mismatch);
    }
    let (s, r) = rectify(chart2, p2[j])?;
    if r == 0.0 {
        return Ok(reference.iter().map(|t| t.eval(s)).collect());
    }
    let z = unrectify(chart, s, r)?;
    let ev = CauchyEvaluator::new(reference, j)?;
    image_point(reference, &ev, z, s, window_delta(chart, s, delta))
}

fn window_delta(chart: &BoundaryChart, s: f64, delta: f64) -> f64 {
    let (lo, hi) = chart.gamma_window;
    let min = 4.0 * chart.eta.length() / chart.eta.n() as f64;
    delta.min(0.9 * (s - lo).min(hi - s)).max(min)
}

/// Sampling plan of [`near_boundary_diagnostic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticOptions {
    pub n_anchors: usize,
    pub depth: f64,
    pub n_depths: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorReport {
    pub a: f64,
    pub chart_j: Option<usize>,
    pub c0: f64,
    pub window: Option<(f64, f64)>,
    pub sup_discrepancy: f64,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearBoundaryReport {
    pub anchors: Vec<AnchorReport>,
    pub global_sup: f64,
}

/// `sup |pair(p2) - p2|` over perturbed points at rectified depths
/// `depth * k / n_depths` below equispaced anchors. Anchors where no chart
/// index works are recorded with `chart_j = None`. Perturbed points are
/// evaluated from `e2`'s traces the same way as paired points.
pub fn near_boundary_diagnostic(e: &TraceTuple, e2: &TraceTuple, opts: &DiagnosticOptions) -> Result<NearBoundaryReport> {
    let (t1, t2) = (&e.traces, &e2.traces);
    if t1.len() != t2.len() || t1.is_empty() || t1[0].n() != t2[0].n() {
        return Err(NearBoundaryError::Mismatch);
    }
    let length = t1[0].length();
    let evs: Vec<CauchyEvaluator> = (0..t1.len()).map(|j| CauchyEvaluator::new(t1, j)).collect::<std::result::Result<_, _>>()?;
    let evs2: Vec<CauchyEvaluator> = (0..t2.len()).map(|j| CauchyEvaluator::new(t2, j)).collect::<std::result::Result<_, _>>()?;
    let mut anchors = Vec::with_capacity(opts.n_anchors);
    let mut any = false;
    for i in 0..opts.n_anchors {
        let a = length * i as f64 / opts.n_anchors as f64;
        let found = (0..t1.len()).find_map(|j| match (build_chart(&t1[j], j, a), build_chart(&t2[j], j, a)) {
            (Ok(c), Ok(c2)) => Some((j, c, c2)),
            _ => None,
        });
        let Some((j, chart, chart2)) = found else {
            anchors.push(AnchorReport { a, chart_j: None, c0: C0, window: None, sup_discrepancy: 0.0, n_failed: opts.n_depths });
            continue;
        };
        any = true;
        let mut sup: f64 = 0.0;
        let mut failed = 0;
        for k in 1..=opts.n_depths {
            let r = opts.depth * k as f64 / opts.n_depths as f64;
            let outcome = (|| -> Result<f64> {
                let z2 = unrectify(&chart2, a, r)?;
                let p2 = image_point(t2, &evs2[j], z2, a, window_delta(&chart2, a, opts.delta))?;
                let (s, r) = rectify(&chart2, p2[j])?;
                let z = unrectify(&chart, s, r)?;
                let p = image_point(t1, &evs[j], z, s, window_delta(&chart, s, opts.delta))?;
                Ok(p.iter().zip(&p2).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
            })();
            match outcome {
                Ok(d) => sup = sup.max(d),
                Err(_) => failed += 1,
            }
        }
        anchors.push(AnchorReport {
            a,
            chart_j: Some(j),
            c0: chart.c0,
            window: Some(chart.gamma_window),
            sup_discrepancy: sup,
            n_failed: failed,
        });
    }
    if !any {
        return Err(NearBoundaryError::AllChartsFailed);
    }
    let global_sup = anchors.iter().map(|r| r.sup_discrepancy).fold(0.0, f64::max);
    Ok(NearBoundaryReport { anchors, global_sup })
}

impl NearBoundaryReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    const TAU: f64 = 2.0 * PI;

    fn power(n: usize, k: i32) -> BoundaryFunction {
        BoundaryFunction::from_fn(n, TAU, |t| Complex64::from_polar(1.0, k as f64 * t)).unwrap()
    }

    #[test]
    fn pchip_is_monotone_and_interpolates() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sinh()).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        let p = MonotoneCubic::new(x.clone(), y.clone());
        for (a, b) in x.iter().zip(&y) {
            assert!((p.eval(*a) - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        let mut prev = f64::NEG_INFINITY;
        for q in 0..1000 {
            let t = x[0] + (x[19] - x[0]) * q as f64 / 999.0;
            let v = p.eval(t);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn disk_chart_closed_form() {
        let eta = power(64, 1);
        let ch = build_chart(&eta, 0, 0.0).unwrap();
        assert!((ch.zeta_scale - Complex64::new(0.0, 1.0)).norm() < 1e-13);
        // cone condition cos t >= 1/2 on the window
        let (lo, hi) = ch.gamma_window;
        let step = TAU / (WINDOW_OVERSAMPLING * 64) as f64;
        assert!((hi - PI / 3.0).abs() <= step && (lo + PI / 3.0).abs() <= step);
        for q in 0..50 {
            let t = -0.9 + 1.8 * q as f64 / 49.0;
            let (s, r) = rectify(&ch, Complex64::from_polar(1.0, t)).unwrap();
            assert!((s - t).abs() < 1e-12 && r.abs() < 1e-10);
        }
        let d = 0.05;
        let (s, r) = rectify(&ch, Complex64::new(1.0 - d, 0.0)).unwrap();
        assert!(s.abs() < 1e-14 && (r - d).abs() < 1e-14);
        // sin s = zeta_1 and r = zeta_2 - (1 - cos s) for the circle
        let z = Complex64::new(0.8, 0.3);
        let (s, r) = rectify(&ch, z).unwrap();
        assert!((s.sin() - 0.3).abs() < 1e-12 && (r - (0.2 - (1.0 - s.cos()))).abs() < 1e-12);
        let back = unrectify(&ch, s, r).unwrap();
        assert!((back - z).norm() < 1e-12);
    }

    #[test]
    fn translation_equivariance() {
        let eta = power(32, 1);
        let shift = Complex64::new(2.0, -1.0);
        let moved = eta.add(&BoundaryFunction::constant(32, TAU, shift).unwrap()).unwrap();
        let a = build_chart(&eta, 0, 1.0).unwrap();
        let b = build_chart(&moved, 0, 1.0).unwrap();
        assert!((b.zeta_shift - a.zeta_shift - shift).norm() < 1e-13);
        assert!((b.zeta_scale - a.zeta_scale).norm() < 1e-13);
        assert_eq!(a.gamma_window, b.gamma_window);
        let z = a.zeta_shift * 0.9;
        let (s1, r1) = rectify(&a, z).unwrap();
        let (s2, r2) = rectify(&b, z + shift).unwrap();
        assert!((s1 - s2).abs() < 1e-12 && (r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_charts() {
        let k = BoundaryFunction::constant(32, TAU, Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(build_chart(&k, 0, 0.0), Err(NearBoundaryError::DerivativeVanishes(_))));
        // tangent turns fast: e^{i 12 t} leaves the cone after about pi/36
        assert!(matches!(build_chart(&power(32, 12), 0, 0.0), Err(NearBoundaryError::WindowCollapse(_))));
    }

    #[test]
    fn split_cauchy_examples() {
        let n = 256;
        let z1 = power(n, 1);
        let z2 = power(n, 2);
        let z = Complex64::new(0.97, 0.0);
        let v = split_cauchy(&z1, &z1, z, 0.0, 0.2).unwrap();
        assert!((v.value - z).norm() < 1e-6);
        let v = split_cauchy(&z2, &z1, z, 0.0, 0.2).unwrap();
        assert!((v.value - z * z).norm() < 1e-5);
        // on the curve itself
        let s = 0.4;
        let v = split_cauchy(&z2, &z1, z1.eval(s), s, 0.2).unwrap();
        assert!((v.value - z2.eval(s)).norm() < 1e-10);
        assert!(matches!(split_cauchy(&z1, &z1, z, 0.0, 1e-3), Err(NearBoundaryError::DeltaTooSmall { .. })));
    }

    #[test]
    fn split_agrees_with_plain_on_overlap() {
        let n = 64;
        let traces = vec![power(n, 1), power(n, 2), BoundaryFunction::from_fn(n, TAU, |t| Complex64::from_polar(1.0, t).exp()).unwrap()];
        let ev = CauchyEvaluator::new(&traces, 0).unwrap();
        let eps = ev.eps_min();
        let chart = build_chart(&traces[0], 0, 0.3).unwrap();
        for q in 0..6 {
            let r = eps * (1.05 + 0.9 * q as f64 / 5.0);
            let z = unrectify(&chart, 0.3, r).unwrap();
            let plain = ev.integrals(z).unwrap();
            for k in 0..3 {
                let sc = split_cauchy(&traces[k], &traces[0], z, 0.3, default_delta(n, TAU, 0.0)).unwrap();
                assert!((sc.value - plain[k + 1]).norm() < 1e-8, "{k} {r}");
                assert!(sc.near_max <= near_piece_bound(&chart, &traces[k]) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn unperturbed_pairing_is_identity() {
        let n = 128;
        let d = Arc::new(crate::dn_backends::dn_disk(n, TAU).unwrap());
        let e = TraceTuple { traces: vec![power(n, 1), power(n, 2)], source_dn: d };
        let ch = build_chart(&e.traces[0], 0, 1.0).unwrap();
        for l in [0.8, 1.0, 1.3] {
            let p = vec![e.traces[0].eval(l), e.traces[1].eval(l)];
            let q = pair_points(&ch, &ch, &e.traces, &p, 0.1).unwrap();
            assert_eq!(q, p);
        }
        let opts = DiagnosticOptions { n_anchors: 16, depth: 0.1, n_depths: 4, delta: default_delta(n, TAU, 0.0) };
        let rep = near_boundary_diagnostic(&e, &e, &opts).unwrap();
        assert_eq!(rep.anchors.len(), 16);
        assert!(rep.anchors.iter().all(|a| a.chart_j == Some(0) && a.n_failed == 0));
        assert!(rep.global_sup < 1e-7, "{}", rep.global_sup);
        let json = rep.to_json();
        assert!(json["anchors"][0]["window"].is_array());
    }
}
