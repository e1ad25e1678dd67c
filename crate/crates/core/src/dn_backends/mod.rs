//! Dirichlet-to-Neumann maps of model surfaces.
//!
//! Three backends: the analytic unit disk, planar domains given by a
//! polynomial conformal map of the disk, and triangulated surfaces (P1
//! finite elements). Every operator is returned in the arclength basis of
//! [`crate::boundary_calculus`].
//!
//! Triangulated surfaces are flat (planar or flat-torus) meshes, optionally
//! with a per-vertex conformal factor; abstract Riemannian metrics are only
//! representable this way.

mod conformal;
mod fem;
mod mesh;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary_calculus::{BoundaryOperator, CalculusError, OperatorKind};

pub use conformal::{dn_conformal, univalence_margin, ConformalDn, THETA_OVERSAMPLING};
pub use fem::{boundary_arclength, cotangent_stiffness, dn_fem, dn_fem_extrapolated, fem_band, richardson, schur_dn, FemOptions, MIN_ANGLE_DEG};
pub use mesh::{make_disk_mesh, make_one_holed_torus_mesh, TriMesh};

#[derive(Debug, Error)]
pub enum DnError {
    #[error("conformal map is not certified univalent: sum k|a_k| = {0} >= 1")]
    UnivalenceViolated(f64),
    #[error("boundary reparametrization under-resolved (relative Fourier tail {0:e}); increase N")]
    InterpolationUnderresolved(f64),
    #[error("interior stiffness block is singular: {0}")]
    SingularInterior(String),
    #[error("mesh is not an oriented manifold with one boundary loop: {0}")]
    NonManifoldMesh(String),
    #[error("mesh has a triangle angle of {0:.2} degrees, below the admissible minimum")]
    PoorMesh(f64),
    #[error("OFF parse error: {0}")]
    OffFormat(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
}

/// Disk DN map `Lambda e^{i n theta} = |n| e^{i n theta}` on a circle of
/// length `length` (symbol `2 pi |n| / L`).
pub fn dn_disk(n: usize, length: f64) -> Result<BoundaryOperator, DnError> {
    Ok(BoundaryOperator::even_symbol(n, length, OperatorKind::Dn, |m| 2.0 * PI * m as f64 / length)?)
}

/// A model surface with one boundary circle.
#[derive(Debug, Clone)]
pub enum SurfaceSpec {
    AnalyticDisk,
    /// `z + sum a_k z^k`, coefficients `[a_2, a_3, ...]`.
    ConformalPolynomialDomain { coeffs: Vec<Complex64> },
    TriangulatedSurface { mesh: TriMesh, rho: Option<Vec<f64>> },
}

impl SurfaceSpec {
    pub fn variant_name(&self) -> &'static str {
        match self {
            SurfaceSpec::AnalyticDisk => "analytic_disk",
            SurfaceSpec::ConformalPolynomialDomain { .. } => "conformal_polynomial_domain",
            SurfaceSpec::TriangulatedSurface { .. } => "triangulated_surface",
        }
    }

    pub fn euler_char(&self) -> Option<i64> {
        match self {
            SurfaceSpec::AnalyticDisk | SurfaceSpec::ConformalPolynomialDomain { .. } => Some(1),
            SurfaceSpec::TriangulatedSurface { mesh, .. } => Some(mesh.euler_char()),
        }
    }

    /// DN map on the boundary rescaled to length `2 pi`, and the original perimeter.
    pub fn dn(&self, n: usize) -> Result<(BoundaryOperator, f64), DnError> {
        match self {
            SurfaceSpec::AnalyticDisk => Ok((dn_disk(n, 2.0 * PI)?, 2.0 * PI)),
            SurfaceSpec::ConformalPolynomialDomain { coeffs } => {
                let c = dn_conformal(coeffs, n, true)?;
                Ok((c.op, c.perimeter))
            }
            SurfaceSpec::TriangulatedSurface { mesh, rho } => {
                let op = dn_fem(mesh, rho.as_deref(), n, FemOptions::default())?;
                Ok((op, boundary_arclength(mesh, rho.as_deref()).1))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DnMetadata {
    pub surface_variant: String,
    pub euler_char: Option<i64>,
    pub perimeter: f64,
}

/// Operator container plus a `metadata` block.
pub fn dn_to_json(op: &BoundaryOperator, meta: &DnMetadata) -> serde_json::Value {
    let mut v = op.to_json();
    v["metadata"] = serde_json::to_value(meta).expect("plain data serializes");
    v
}

pub fn dn_from_json(value: &serde_json::Value) -> Result<(BoundaryOperator, Option<DnMetadata>), DnError> {
    let op = BoundaryOperator::from_json(value, OperatorKind::Dn)?;
    let meta = match value.get("metadata") {
        Some(m) => Some(
            serde_json::from_value(m.clone()).map_err(|e| DnError::InvalidParameter(format!("bad metadata: {e}")))?,
        ),
        None => None,
    };
    Ok((op, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_calculus::BoundaryFunction;

    #[test]
    fn disk_kills_constants() {
        let d = dn_disk(32, 2.0 * PI).unwrap();
        let one = BoundaryFunction::constant(32, 2.0 * PI, Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(d.apply(&one).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn disk_on_cos3_matches_radial_derivative() {
        // harmonic extension r^3 cos 3t, d/dr at r = 1 by a one-sided difference oracle
        let h = 1e-6;
        let ext = |r: f64, t: f64| r.powi(3) * (3.0 * t).cos();
        let d = dn_disk(32, 2.0 * PI).unwrap();
        let f = BoundaryFunction::from_real_fn(32, 2.0 * PI, |t| (3.0 * t).cos()).unwrap();
        let g = d.apply(&f).unwrap();
        for k in 0..32 {
            let t = 2.0 * PI * k as f64 / 32.0;
            let dr = (ext(1.0 + h, t) - ext(1.0 - h, t)) / (2.0 * h);
            assert!((g.samples()[k].re - dr).abs() < 1e-8);
        }
    }

    #[test]
    fn hilbert_identity_on_disk() {
        let d = dn_disk(32, 2.0 * PI).unwrap();
        let j = BoundaryOperator::integration(32, 2.0 * PI).unwrap();
        let jl = j.compose(&d).unwrap();
        for n in 1..=5 {
            let c = BoundaryFunction::from_real_fn(32, 2.0 * PI, |t| (n as f64 * t).cos()).unwrap();
            let s = BoundaryFunction::from_real_fn(32, 2.0 * PI, |t| (n as f64 * t).sin()).unwrap();
            assert!(jl.apply(&c).unwrap().sub(&s).unwrap().l2_norm() < 1e-13);
        }
    }

    #[test]
    fn json_with_metadata() {
        let d = dn_disk(8, 2.0 * PI).unwrap();
        let meta = DnMetadata { surface_variant: "analytic_disk".into(), euler_char: Some(1), perimeter: 2.0 * PI };
        let v = dn_to_json(&d, &meta);
        let (op, m) = dn_from_json(&v).unwrap();
        assert_eq!(op, d);
        assert_eq!(m.unwrap(), meta);
    }
}
