//! Boundary traces of holomorphic functions and their transport between surfaces.
//!
//! For a DN map `Lambda` the real part of a holomorphic trace determines the
//! imaginary part through `Im eta = J Lambda Re eta + const`. The defect
//! `I + (Lambda J)^2` has rank `kappa = 1 - chi` on zero-mean functions; its
//! range is removed from admissible real parts by the projection `P`.
//!
//! `Q` projects onto `span{[I + (Lambda J)^2] d f_j}`. Real parts of traces
//! are exactly the `u` with `[I + (Lambda J)^2] d u = 0`, whose orthogonal
//! complement (in the zero-mean space) is the range of
//! `[I + (Lambda J)^2] d`, so `P = I - Q` lands on real parts.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary_calculus::{
    largest_singular_value, singular_values_desc, BoundaryFunction, BoundaryOperator, CalculusError, OperatorKind,
    SobolevIndex,
};

/// Default relative rank threshold.
pub const TAU_RANK: f64 = 1e-3;
/// Required ratio between the last retained and first dropped singular value.
pub const GAP_FACTOR: f64 = 10.0;
/// Relative certificate tolerance for exact DN maps.
pub const CERT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum HoloError {
    #[error("no spectral gap: kappa {kappa} with gap {gap:.3} < {GAP_FACTOR} (singular values {values:?}); refine the discretization")]
    NoSpectralGap { kappa: usize, gap: f64, values: Vec<f64> },
    #[error("probe functions span only {found} of {kappa} directions")]
    RankDeficientProbes { kappa: usize, found: usize },
    #[error("need at least {need} probe functions, got {got}")]
    InsufficientProbes { need: usize, got: usize },
    #[error("holomorphy certificate failed: residual {residual:e} > tolerance {tol:e}")]
    CertificateFailed { residual: f64, tol: f64 },
    #[error("operators live on different boundaries: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
}

pub type Result<T> = std::result::Result<T, HoloError>;

/// `Lambda J`; zero on constants.
pub fn lambda_j(lambda: &BoundaryOperator) -> Result<BoundaryOperator> {
    let j = BoundaryOperator::integration(lambda.n(), lambda.length())?;
    Ok(lambda.compose(&j)?.with_band(lambda.band()))
}

/// `I + (Lambda J)^2`. Acts as the identity on constants (and on the Nyquist mode).
pub fn defect_operator(lambda: &BoundaryOperator) -> Result<BoundaryOperator> {
    let lj = lambda_j(lambda)?;
    let id = BoundaryOperator::identity(lambda.n(), lambda.length())?;
    Ok(id.add(&lj.compose(&lj)?)?.with_band(lambda.band()))
}

/// Result of [`estimate_kappa`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa: usize,
    /// Singular values of the defect on modes `1 ..= band`, decreasing.
    pub singular_values: Vec<f64>,
    /// `max(|Lambda J|, 1)` on the same block.
    pub scale: f64,
    pub threshold: f64,
    /// `sigma_kappa / sigma_{kappa+1}` with `sigma_0 = scale`; infinite when
    /// nothing is dropped or the next value is zero.
    pub gap: f64,
}

/// Rank of the defect on the resolved zero-mean block.
pub fn estimate_kappa(lambda: &BoundaryOperator, tau_rank: f64) -> Result<KappaEstimate> {
    assert!(tau_rank > 0.0, "tau_rank must be positive");
    let d = defect_operator(lambda)?.resolved_block();
    let lj = lambda_j(lambda)?.resolved_block();
    let scale = largest_singular_value(&lj).max(1.0);
    let sv = singular_values_desc(&d);
    let threshold = tau_rank * scale;
    let kappa = sv.iter().filter(|&&s| s > threshold).count();
    let upper = if kappa == 0 { scale } else { sv[kappa - 1] };
    let gap = match sv.get(kappa) {
        Some(&next) if next > 0.0 => upper / next,
        _ => f64::INFINITY,
    };
    if gap < GAP_FACTOR {
        return Err(HoloError::NoSpectralGap { kappa, gap, values: sv });
    }
    Ok(KappaEstimate { kappa, singular_values: sv, scale, threshold, gap })
}

/// Complementary orthogonal projections with `Q` of rank `kappa`.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub p: BoundaryOperator,
    pub q: BoundaryOperator,
    pub kappa: usize,
    pub basis_h: Vec<BoundaryFunction>,
    /// Norm of `[I + (Lambda J)^2] d P : H^1 -> L^2` on the resolved block;
    /// how far `Lambda` is from an exact DN map on `Ran P`.
    pub defect_floor: f64,
    pub seed: Option<u64>,
}

impl ProjectionPair {
    /// `P = I`, `Q = 0`.
    pub fn trivial(lambda: &BoundaryOperator) -> Result<Self> {
        let (n, l) = (lambda.n(), lambda.length());
        let p = BoundaryOperator::identity(n, l)?.with_kind(OperatorKind::Projection);
        let q = BoundaryOperator::zero(n, l)?.with_kind(OperatorKind::Projection);
        let defect_floor = defect_floor(lambda, &p)?;
        Ok(ProjectionPair { p, q, kappa: 0, basis_h: Vec::new(), defect_floor, seed: None })
    }

    /// Relative certificate tolerance: `1e-8`, or twice the defect floor when
    /// `Lambda` is a discretization that is not exactly consistent.
    pub fn cert_tol(&self) -> f64 {
        CERT_TOL.max(2.0 * self.defect_floor)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "p": self.p.to_json(),
            "q": self.q.to_json(),
            "basis_h": self.basis_h.iter().map(|h| h.to_json()).collect::<Vec<_>>(),
            "defect_floor": self.defect_floor,
            "metadata": { "kappa": self.kappa, "seed": self.seed },
        })
    }
}

fn defect_floor(lambda: &BoundaryOperator, p: &BoundaryOperator) -> Result<f64> {
    let d = BoundaryOperator::derivative(lambda.n(), lambda.length())?;
    let m = defect_operator(lambda)?.compose(&d)?.compose(p)?.with_band(lambda.band());
    let w = m.sobolev_weights(SobolevIndex(1.0));
    let r = m.resolved_indices();
    let mut block = m.resolved_block();
    for (c, j) in r.enumerate() {
        block.column_mut(c).scale_mut(1.0 / w[j]);
    }
    Ok(largest_singular_value(&block))
}

/// `count` random smooth zero-mean real functions with modes `1 ..= max_mode`.
pub fn random_probes(n: usize, length: f64, count: usize, max_mode: usize, seed: u64) -> Result<Vec<BoundaryFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_mode = max_mode.clamp(1, n / 2 - 1);
    (0..count)
        .map(|_| {
            let mut u = DVector::zeros(n);
            for m in 1..=max_mode {
                let w = 1.0 / (m * m) as f64;
                u[2 * m - 1] = w * rng.random_range(-1.0..1.0);
                u[2 * m] = w * rng.random_range(-1.0..1.0);
            }
            Ok(BoundaryFunction::from_real_coords(&u, None, length)?)
        })
        .collect()
}

/// Builds `P`/`Q` from `h_j = [I + (Lambda J)^2] d f_j`, keeping the top
/// `kappa` left singular vectors.
pub fn build_projections(lambda: &BoundaryOperator, kappa: usize, probes: &[BoundaryFunction]) -> Result<ProjectionPair> {
    if kappa == 0 {
        return ProjectionPair::trivial(lambda);
    }
    if probes.len() < 3 * kappa {
        return Err(HoloError::InsufficientProbes { need: 3 * kappa, got: probes.len() });
    }
    let (n, l) = (lambda.n(), lambda.length());
    let a = defect_operator(lambda)?;
    let d = BoundaryOperator::derivative(n, l)?;
    let ad = a.compose(&d)?;
    let r = lambda.resolved_indices();
    let mut h = DMatrix::zeros(n, probes.len());
    for (c, f) in probes.iter().enumerate() {
        let (u, _) = f.re().real_coords();
        let col = ad.matrix() * u;
        for i in r.clone() {
            h[(i, c)] = col[i];
        }
    }
    let svd = h.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].partial_cmp(&svd.singular_values[x]).unwrap());
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let top = s[0];
    let found = s.iter().filter(|&&x| x > 1e-8 * top.max(1e-300)).count();
    let gap_ok = s.get(kappa).is_none_or(|&next| s[kappa - 1] >= GAP_FACTOR * next);
    if top == 0.0 || found < kappa || !gap_ok {
        return Err(HoloError::RankDeficientProbes { kappa, found: found.min(kappa.saturating_sub(1)) });
    }
    let mut qm = DMatrix::zeros(n, n);
    let mut basis_h = Vec::with_capacity(kappa);
    for &k in order.iter().take(kappa) {
        let col = u.column(k).into_owned();
        qm += &col * col.transpose();
        basis_h.push(BoundaryFunction::from_real_coords(&col, None, l)?);
    }
    let q = BoundaryOperator::from_matrix(qm.clone(), l, OperatorKind::Projection)?.with_band(lambda.band());
    let p = BoundaryOperator::from_matrix(DMatrix::identity(n, n) - qm, l, OperatorKind::Projection)?
        .with_band(lambda.band());
    let defect_floor = defect_floor(lambda, &p)?;
    Ok(ProjectionPair { p, q, kappa, basis_h, defect_floor, seed: None })
}

/// `estimate_kappa` followed by `build_projections` with `3 kappa` seeded probes.
pub fn projections_for(lambda: &BoundaryOperator, tau_rank: f64, seed: u64) -> Result<(KappaEstimate, ProjectionPair)> {
    let est = estimate_kappa(lambda, tau_rank)?;
    let max_mode = (lambda.n() / 8).min(lambda.band());
    let probes = random_probes(lambda.n(), lambda.length(), 3 * est.kappa, max_mode, seed)?;
    let mut pp = build_projections(lambda, est.kappa, &probes)?;
    pp.seed = Some(seed);
    Ok((est, pp))
}

fn drop_nyquist(f: &BoundaryFunction) -> BoundaryFunction {
    f.truncated(f.n() / 2 - 1)
}

/// Residuals of the two boundary Cauchy-Riemann identities
/// `d Im eta = Lambda Re eta` and `Lambda Im eta = -d Re eta`, in `L^2`,
/// ignoring the Nyquist mode.
pub fn certificate_residuals(eta: &BoundaryFunction, lambda: &BoundaryOperator) -> Result<(f64, f64)> {
    let re = eta.re();
    let im = eta.im();
    let r1 = drop_nyquist(&im.derivative().sub(&lambda.apply(&re)?)?).l2_norm();
    let r2 = drop_nyquist(&lambda.apply(&im)?.add(&re.derivative())?).l2_norm();
    Ok((r1, r2))
}

/// `eta = P re + i [J Lambda P re + im_mean / L]`, checked against the
/// conjugate identity `Lambda Im eta = -d Re eta`.
///
/// `im_mean` is the boundary integral of the imaginary part, so the result
/// satisfies `<Im eta> = im_mean`.
pub fn complete_trace(
    re_part: &BoundaryFunction,
    im_mean: f64,
    lambda: &BoundaryOperator,
    proj: &ProjectionPair,
) -> Result<BoundaryFunction> {
    let eta = complete_trace_unchecked(re_part, im_mean, lambda, proj)?;
    let (_, r2) = certificate_residuals(&eta, lambda)?;
    let tol = proj.cert_tol() * eta.sobolev_norm(SobolevIndex(1.0));
    if r2 > tol {
        return Err(HoloError::CertificateFailed { residual: r2, tol });
    }
    Ok(eta)
}

/// [`complete_trace`] without the certificate.
pub fn complete_trace_unchecked(
    re_part: &BoundaryFunction,
    im_mean: f64,
    lambda: &BoundaryOperator,
    proj: &ProjectionPair,
) -> Result<BoundaryFunction> {
    let re = proj.p.apply(&re_part.re())?;
    let im = lambda_j_apply(lambda, &re)?;
    let l = lambda.length();
    let im = im.add(&BoundaryFunction::constant(re.n(), l, Complex64::new(im_mean / l, 0.0))?)?;
    Ok(re.add_i(&im)?)
}

fn lambda_j_apply(lambda: &BoundaryOperator, re: &BoundaryFunction) -> Result<BoundaryFunction> {
    let j = BoundaryOperator::integration(lambda.n(), lambda.length())?;
    Ok(j.apply(&lambda.apply(re)?)?)
}

/// `beta' eta = P' Re eta + i [J Lambda' P' Re eta + <Im eta>/L]`.
pub fn beta_gamma(eta: &BoundaryFunction, lambda2: &BoundaryOperator, proj2: &ProjectionPair) -> Result<BoundaryFunction> {
    complete_trace(&eta.re(), eta.im().mean().re, lambda2, proj2)
}

/// Boundary values `(eta_1, ..., eta_n)` of a holomorphic immersion, together
/// with the DN map that certifies them.
#[derive(Debug, Clone)]
pub struct TraceTuple {
    pub traces: Vec<BoundaryFunction>,
    pub source_dn: Arc<BoundaryOperator>,
}

impl TraceTuple {
    /// Checks both certificates for every trace against `tol * |eta|_{H^1}`.
    pub fn certify(traces: Vec<BoundaryFunction>, source_dn: Arc<BoundaryOperator>, tol: f64) -> Result<Self> {
        for eta in &traces {
            let (r1, r2) = certificate_residuals(eta, &source_dn)?;
            let t = tol * eta.sobolev_norm(SobolevIndex(1.0));
            let r = r1.max(r2);
            if r > t {
                return Err(HoloError::CertificateFailed { residual: r, tol: t });
            }
        }
        Ok(TraceTuple { traces, source_dn })
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.traces.first().map_or(0, |t| t.n())
    }

    pub fn length(&self) -> f64 {
        self.source_dn.length()
    }

    pub fn to_json(&self, kappa: usize, seed: Option<u64>) -> serde_json::Value {
        serde_json::json!({
            "traces": self.traces.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
            "source_dn": self.source_dn.to_json(),
            "metadata": { "kappa": kappa, "seed": seed },
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let bad = |m: &str| HoloError::Calculus(CalculusError::Format(m.to_string()));
        let traces = value
            .get("traces")
            .and_then(|t| t.as_array())
            .ok_or_else(|| bad("missing traces"))?
            .iter()
            .map(BoundaryFunction::from_json)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let dn = BoundaryOperator::from_json(value.get("source_dn").ok_or_else(|| bad("missing source_dn"))?, OperatorKind::Dn)?;
        Ok(TraceTuple { traces, source_dn: Arc::new(dn) })
    }
}

/// Componentwise [`beta_gamma`].
pub fn transport_immersion(e: &TraceTuple, lambda2: &BoundaryOperator, proj2: &ProjectionPair) -> Result<TraceTuple> {
    let traces = e.traces.iter().map(|eta| beta_gamma(eta, lambda2, proj2)).collect::<Result<Vec<_>>>()?;
    Ok(TraceTuple { traces, source_dn: Arc::new(lambda2.clone()) })
}

/// `t = |Lambda' - Lambda|_{H^1 -> L^2}`.
pub fn dn_distance(lambda: &BoundaryOperator, lambda2: &BoundaryOperator) -> Result<f64> {
    Ok(lambda2.sub(lambda)?.operator_norm(SobolevIndex(1.0), SobolevIndex(0.0)))
}
