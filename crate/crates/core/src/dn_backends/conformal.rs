//! DN maps of planar domains `Phi(D)`, `Phi(z) = z + sum_k a_k z^k`.
//!
//! The Dirichlet energy is conformally invariant, so in the arclength basis
//! of the image boundary
//! `<Lambda' e_m, e_n> = <Lambda_disk (e_m o s), e_n o s>_{L^2(d theta)}`
//! where `s(theta)` is the (rescaled) arclength of `Phi(e^{i theta})`. The
//! right side is computed on an oversampled `theta` grid, which gives a
//! symmetric matrix by construction.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::DnError;
use crate::boundary_calculus::{basis_value_l2, BoundaryOperator, OperatorKind};
use crate::spectral;

/// Oversampling factor of the `theta` grid.
pub const THETA_OVERSAMPLING: usize = 8;

/// Output of [`dn_conformal`].
#[derive(Debug, Clone)]
pub struct ConformalDn {
    pub op: BoundaryOperator,
    /// Perimeter of the unscaled domain `Phi(D)`.
    pub perimeter: f64,
    /// `theta` grid, `THETA_OVERSAMPLING * n` points.
    pub theta: Vec<f64>,
    /// Arclength of `Phi(e^{i theta})` from the marked point `Phi(1)`, in the
    /// units of `op.length()`.
    pub arclength: Vec<f64>,
    /// Boundary points, scaled like `arclength`.
    pub boundary: Vec<Complex64>,
}

/// Sum of `k |a_k|` over `coeffs = [a_2, a_3, ...]`.
pub fn univalence_margin(coeffs: &[Complex64]) -> f64 {
    coeffs.iter().enumerate().map(|(i, a)| (i + 2) as f64 * a.norm()).sum()
}

/// DN map of `Phi(D)` in arclength parametrization. With `rescale`, the
/// domain is scaled to perimeter `2 pi`.
pub fn dn_conformal(coeffs: &[Complex64], n: usize, rescale: bool) -> Result<ConformalDn, DnError> {
    if n < 8 || n % 2 != 0 {
        return Err(DnError::InvalidParameter(format!("mode count {n} must be even and >= 8")));
    }
    let margin = univalence_margin(coeffs);
    if !(margin < 1.0) {
        return Err(DnError::UnivalenceViolated(margin));
    }
    let nt = THETA_OVERSAMPLING * n;
    let theta: Vec<f64> = (0..nt).map(|k| 2.0 * PI * k as f64 / nt as f64).collect();
    let phi = |z: Complex64| -> (Complex64, Complex64) {
        let mut f = z;
        let mut df = Complex64::new(1.0, 0.0);
        for (i, &a) in coeffs.iter().enumerate() {
            let k = (i + 2) as i32;
            f += a * z.powi(k);
            df += a * k as f64 * z.powi(k - 1);
        }
        (f, df)
    };
    let mut boundary = Vec::with_capacity(nt);
    let mut speed = Vec::with_capacity(nt);
    for &t in &theta {
        let (f, df) = phi(Complex64::from_polar(1.0, t));
        boundary.push(f);
        speed.push(Complex64::new(df.norm(), 0.0));
    }
    let c = spectral::forward(&speed);
    let total: f64 = c.iter().map(|x| x.norm_sqr()).sum();
    let tail: f64 = c
        .iter()
        .enumerate()
        .filter(|(k, _)| spectral::fft_mode(*k, nt).unsigned_abs() as usize >= n / 2)
        .map(|(_, x)| x.norm_sqr())
        .sum();
    let rel_tail = (tail / total).sqrt();
    if rel_tail > 1e-8 {
        return Err(DnError::InterpolationUnderresolved(rel_tail));
    }
    let perimeter = 2.0 * PI * c[0].re;
    // periodic part of the antiderivative of the speed
    let mut integ = vec![Complex64::new(0.0, 0.0); nt];
    for k in 1..nt {
        let m = spectral::fft_mode(k, nt);
        integ[k] = c[k] / Complex64::new(0.0, m as f64);
    }
    let per = spectral::inverse(&integ);
    let s_tilde: Vec<f64> = (0..nt)
        .map(|k| theta[k] + (2.0 * PI / perimeter) * (per[k].re - per[0].re))
        .collect();
    let e = DMatrix::from_fn(nt, n, |k, i| basis_value_l2(i, n, 2.0 * PI, s_tilde[k]));
    let mut le = DMatrix::zeros(nt, n);
    for i in 0..n {
        let col: Vec<Complex64> = (0..nt).map(|k| Complex64::new(e[(k, i)], 0.0)).collect();
        let mut f = spectral::forward(&col);
        for (k, x) in f.iter_mut().enumerate() {
            *x *= spectral::fft_mode(k, nt).unsigned_abs() as f64;
        }
        let back = spectral::inverse(&f);
        for k in 0..nt {
            le[(k, i)] = back[k].re;
        }
    }
    let g = e.transpose() * le * (2.0 * PI / nt as f64);
    let g = (&g + g.transpose()) * 0.5;
    let (op, scale) = if rescale {
        (BoundaryOperator::from_matrix(g, 2.0 * PI, OperatorKind::Dn)?, 2.0 * PI / perimeter)
    } else {
        (BoundaryOperator::from_matrix(g * (2.0 * PI / perimeter), perimeter, OperatorKind::Dn)?, 1.0)
    };
    let to_len = if rescale { 1.0 } else { perimeter / (2.0 * PI) };
    Ok(ConformalDn {
        op,
        perimeter,
        theta,
        arclength: s_tilde.iter().map(|s| s * to_len).collect(),
        boundary: boundary.iter().map(|z| z * scale).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_calculus::{BoundaryFunction, SobolevIndex};
    use crate::dn_backends::dn_disk;

    #[test]
    fn zero_perturbation_is_the_disk() {
        let c = dn_conformal(&[], 64, true).unwrap();
        let d = dn_disk(64, 2.0 * PI).unwrap();
        assert!((c.op.matrix() - d.matrix()).amax() < 1e-12);
        assert!((c.perimeter - 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn kernel_and_range() {
        let c = dn_conformal(&[Complex64::new(0.05, 0.0)], 64, true).unwrap();
        let one = BoundaryFunction::constant(64, 2.0 * PI, Complex64::new(1.0, 0.0)).unwrap();
        assert!(c.op.apply(&one).unwrap().l2_norm() < 1e-12);
        let f = BoundaryFunction::from_real_fn(64, 2.0 * PI, |t| (2.0 * t).sin() + 0.3 * (5.0 * t).cos() + 0.7).unwrap();
        assert!(c.op.apply(&f).unwrap().mean().norm() < 1e-12);
        let a = c.op.matrix();
        assert!((a - a.transpose()).amax() < 1e-8);
    }

    #[test]
    fn arclength_matches_perimeter() {
        let a2 = 0.1;
        let c = dn_conformal(&[Complex64::new(a2, 0.0)], 32, false).unwrap();
        // perimeter of the cardioid-like limacon by direct quadrature
        let m = 4096;
        let quad: f64 = (0..m)
            .map(|k| (Complex64::new(1.0, 0.0) + 2.0 * a2 * Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64)).norm())
            .sum::<f64>()
            * 2.0
            * PI
            / m as f64;
        assert!((c.perimeter - quad).abs() < 1e-12);
        assert!((c.op.length() - quad).abs() < 1e-12);
        assert_eq!(c.arclength[0], 0.0);
        assert!(c.arclength.windows(2).all(|w| w[1] > w[0]));
        let dn2 = dn_conformal(&[Complex64::new(a2, 0.0)], 32, true).unwrap();
        let t = dn2.op.operator_norm(SobolevIndex(1.0), SobolevIndex(0.0));
        assert!(t.is_finite());
    }

    #[test]
    fn rejects_non_univalent() {
        assert!(matches!(dn_conformal(&[Complex64::new(0.5, 0.0)], 16, true), Err(DnError::UnivalenceViolated(_))));
    }

    #[test]
    fn underresolved_reparametrization() {
        // 2|a_2| close to 1 makes |Phi'| decay slowly
        assert!(matches!(dn_conformal(&[Complex64::new(0.49, 0.0)], 16, true), Err(DnError::InterpolationUnderresolved(_))));
    }
}
