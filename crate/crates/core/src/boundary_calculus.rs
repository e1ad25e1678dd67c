//! Band-limited calculus on the boundary circle.
//!
//! A boundary of length `L` is parametrized by arclength `l` in `[0, L)` and
//! sampled at `N` equispaced nodes. Functions are stored by their Fourier
//! coefficients `c_n`, `n = -N/2+1 ..= N/2`, in ascending mode order.
//!
//! Orientation: the arclength parameter runs with the surface on the left, so
//! on the unit disk it is the counterclockwise angle and
//! `J Lambda cos(n theta) = sin(n theta)`.
//!
//! Operators are real-linear maps on real functions. They are stored as real
//! `N x N` matrices in the orthonormal trigonometric basis of `L^2(Gamma, dl)`
//!
//! ```text
//! index 0        1/sqrt(L)
//! index 2n-1     sqrt(2/L) cos(2 pi n l / L)      n = 1 .. N/2-1
//! index 2n       sqrt(2/L) sin(2 pi n l / L)
//! index N-1      cos(pi N l / L) / sqrt(L)        (Nyquist)
//! ```
//!
//! so that symmetry in `L^2(Gamma, dl)` is plain matrix symmetry. Complex
//! functions are acted on componentwise, `A(u + iv) = Au + iAv`.
//!
//! The Nyquist mode has no real derivative among band-limited functions; the
//! derivative and `J` annihilate it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("node count {0} must be even and at least 8")]
    BadModeCount(usize),
    #[error("boundary length {0} must be positive and finite")]
    BadLength(f64),
    #[error("non-finite input value")]
    NonFinite,
    #[error("J needs a zero-mean input, got mean {mean:e} for L2 norm {norm:e}")]
    NonZeroMean { mean: f64, norm: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("boundary length mismatch: {0} vs {1}")]
    LengthMismatch(f64, f64),
    #[error("bad serialized data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CalculusError>;

fn check_n(n: usize) -> Result<()> {
    if n < 8 || n % 2 != 0 {
        return Err(CalculusError::BadModeCount(n));
    }
    Ok(())
}

fn check_length(length: f64) -> Result<()> {
    if !(length.is_finite() && length > 0.0) {
        return Err(CalculusError::BadLength(length));
    }
    Ok(())
}

fn same_length(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(CalculusError::LengthMismatch(a, b));
    }
    Ok(())
}

/// Sobolev exponent `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex(pub f64);

/// Band-limited complex function on the boundary circle.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFunction {
    coeffs: Vec<Complex64>,
    length: f64,
    real: bool,
}

impl BoundaryFunction {
    /// Builds from samples at `N` equispaced arclength nodes `l_k = kL/N`.
    pub fn from_samples(values: &[Complex64], length: f64) -> Result<Self> {
        let n = values.len();
        check_n(n)?;
        check_length(length)?;
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(CalculusError::NonFinite);
        }
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.norm()));
        let real = values.iter().all(|v| v.im.abs() <= 1e-13 * scale);
        let vals: Vec<Complex64> = if real {
            values.iter().map(|v| Complex64::new(v.re, 0.0)).collect()
        } else {
            values.to_vec()
        };
        let fft = spectral::forward(&vals);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        for (k, c) in fft.into_iter().enumerate() {
            let mut m = spectral::fft_mode(k, n);
            if m == -(n as i64) / 2 {
                m = n as i64 / 2;
            }
            coeffs[(m + n as i64 / 2 - 1) as usize] = c;
        }
        let mut f = BoundaryFunction { coeffs, length, real };
        if real {
            f.symmetrize();
        }
        Ok(f)
    }

    pub fn from_real_samples(values: &[f64], length: f64) -> Result<Self> {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_samples(&v, length)
    }

    /// Builds from coefficients in ascending mode order `-N/2+1 ..= N/2`.
    pub fn from_coeffs(coeffs: Vec<Complex64>, length: f64) -> Result<Self> {
        let n = coeffs.len();
        check_n(n)?;
        check_length(length)?;
        if coeffs.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(CalculusError::NonFinite);
        }
        let mut f = BoundaryFunction { coeffs, length, real: false };
        f.real = f.hermitian_defect() <= 1e-14 * f.coeff_scale();
        if f.real {
            f.symmetrize();
        }
        Ok(f)
    }

    /// Samples `g(l)` at the `N` nodes.
    pub fn from_fn(n: usize, length: f64, g: impl Fn(f64) -> Complex64) -> Result<Self> {
        check_n(n)?;
        let v: Vec<Complex64> = (0..n).map(|k| g(length * k as f64 / n as f64)).collect();
        Self::from_samples(&v, length)
    }

    pub fn from_real_fn(n: usize, length: f64, g: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(n, length, |l| Complex64::new(g(l), 0.0))
    }

    pub fn zero(n: usize, length: f64) -> Result<Self> {
        Self::constant(n, length, Complex64::new(0.0, 0.0))
    }

    pub fn constant(n: usize, length: f64, c: Complex64) -> Result<Self> {
        check_n(n)?;
        check_length(length)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        coeffs[n / 2 - 1] = c;
        Ok(BoundaryFunction { coeffs, length, real: c.im == 0.0 })
    }

    fn coeff_scale(&self) -> f64 {
        self.coeffs.iter().fold(1e-300f64, |m, c| m.max(c.norm()))
    }

    fn hermitian_defect(&self) -> f64 {
        let h = self.n() as i64 / 2;
        let mut d: f64 = 0.0;
        for m in 0..h {
            d = d.max((self.coeff(m) - self.coeff(-m).conj()).norm());
        }
        d.max(self.coeff(h).im.abs())
    }

    fn symmetrize(&mut self) {
        let h = self.n() as i64 / 2;
        for m in 1..h {
            let c = 0.5 * (self.coeff(m) + self.coeff(-m).conj());
            *self.coeff_mut(m) = c;
            *self.coeff_mut(-m) = c.conj();
        }
        let c0 = self.coeff(0).re;
        *self.coeff_mut(0) = Complex64::new(c0, 0.0);
        let cn = self.coeff(h).re;
        *self.coeff_mut(h) = Complex64::new(cn, 0.0);
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// True when the function is real-valued (Hermitian coefficients).
    pub fn is_real(&self) -> bool {
        self.real
    }

    /// Coefficients in ascending mode order.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of mode `m`, zero outside the band.
    pub fn coeff(&self, m: i64) -> Complex64 {
        let h = self.n() as i64 / 2;
        if m <= -h || m > h {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[(m + h - 1) as usize]
    }

    fn coeff_mut(&mut self, m: i64) -> &mut Complex64 {
        let h = self.n() as i64 / 2;
        &mut self.coeffs[(m + h - 1) as usize]
    }

    fn map_modes(&self, real: bool, f: impl Fn(i64, Complex64) -> Complex64) -> Self {
        let h = self.n() as i64 / 2;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| f(i as i64 - h + 1, c))
            .collect();
        BoundaryFunction { coeffs, length: self.length, real }
    }

    /// Angular frequency `2 pi m / L` of mode `m`.
    pub fn frequency(&self, m: i64) -> f64 {
        2.0 * PI * m as f64 / self.length
    }

    /// Values at the `N` nodes.
    pub fn samples(&self) -> Vec<Complex64> {
        self.samples_at(self.n())
    }

    /// Exact values of the band-limited function at `m >= N` equispaced nodes
    /// (`m` even). The Nyquist term is the cosine.
    pub fn samples_at(&self, m: usize) -> Vec<Complex64> {
        let n = self.n();
        assert!(m >= n && m % 2 == 0, "oversampling count must be even and >= N");
        let h = n as i64 / 2;
        let mut fft = vec![Complex64::new(0.0, 0.0); m];
        for k in (-h + 1)..h {
            let slot = if k >= 0 { k as usize } else { (m as i64 + k) as usize };
            fft[slot] = self.coeff(k);
        }
        let cn = self.coeff(h);
        if m == n {
            fft[n / 2] = cn;
        } else {
            fft[n / 2] += 0.5 * cn;
            fft[m - n / 2] += 0.5 * cn;
        }
        let mut v = spectral::inverse(&fft);
        if self.real {
            v.iter_mut().for_each(|c| c.im = 0.0);
        }
        v
    }

    /// Point evaluation at arclength `l`.
    pub fn eval(&self, l: f64) -> Complex64 {
        self.eval_with_derivative(l).0
    }

    /// Value and tangential derivative at arclength `l`.
    pub fn eval_with_derivative(&self, l: f64) -> (Complex64, Complex64) {
        let h = self.n() as i64 / 2;
        let w0 = 2.0 * PI / self.length;
        let step = Complex64::from_polar(1.0, w0 * l);
        let mut f = self.coeff(0);
        let mut df = Complex64::new(0.0, 0.0);
        let mut p = Complex64::new(1.0, 0.0);
        for m in 1..h {
            p *= step;
            let cp = self.coeff(m) * p;
            let cm = self.coeff(-m) * p.conj();
            f += cp + cm;
            df += Complex64::new(0.0, w0 * m as f64) * (cp - cm);
        }
        f += self.coeff(h) * (w0 * h as f64 * l).cos();
        (f, df)
    }

    /// Tangential derivative `d/dl`: mode `m` is multiplied by `i 2 pi m / L`.
    pub fn derivative(&self) -> Self {
        let h = self.n() as i64 / 2;
        let w0 = 2.0 * PI / self.length;
        self.map_modes(self.real, |m, c| {
            if m == h {
                Complex64::new(0.0, 0.0)
            } else {
                c * Complex64::new(0.0, w0 * m as f64)
            }
        })
    }

    /// Integration `J`, the inverse of the derivative on zero-mean functions,
    /// normalized to return zero mean.
    pub fn integrate_j(&self) -> Result<Self> {
        let norm = self.l2_norm();
        let mean_part = self.coeff(0).norm() * self.length.sqrt();
        if mean_part > 1e-10 * norm {
            return Err(CalculusError::NonZeroMean { mean: self.mean().norm(), norm });
        }
        Ok(self.integrate_j_unchecked())
    }

    /// `J` applied after discarding the mean.
    pub fn integrate_j_unchecked(&self) -> Self {
        let h = self.n() as i64 / 2;
        let w0 = 2.0 * PI / self.length;
        self.map_modes(self.real, |m, c| {
            if m == 0 || m == h {
                Complex64::new(0.0, 0.0)
            } else {
                c / Complex64::new(0.0, w0 * m as f64)
            }
        })
    }

    /// The integral over the boundary, `L c_0`.
    pub fn mean(&self) -> Complex64 {
        self.coeff(0) * self.length
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(SobolevIndex(0.0))
    }

    /// `(sum_n (1 + (2 pi n / L)^2)^s |c_n|^2 L)^(1/2)`.
    pub fn sobolev_norm(&self, s: SobolevIndex) -> f64 {
        let h = self.n() as i64 / 2;
        let mut acc = 0.0;
        for m in (-h + 1)..=h {
            let w = self.frequency(m);
            acc += (1.0 + w * w).powf(s.0) * self.coeff(m).norm_sqr();
        }
        (acc * self.length).sqrt()
    }

    /// Max over derivative orders `j <= k` of the sup of `|f^(j)|`, taken on
    /// `4N` nodes.
    pub fn ck_norm(&self, k: usize) -> f64 {
        assert!(k <= 2, "C^k norms are provided for k <= 2");
        let mut g = self.clone();
        let mut best: f64 = 0.0;
        for j in 0..=k {
            if j > 0 {
                g = g.derivative();
            }
            let sup = g.samples_at(4 * self.n()).iter().fold(0.0f64, |m, v| m.max(v.norm()));
            best = best.max(sup);
        }
        best
    }

    pub fn re(&self) -> Self {
        let h = self.n() as i64 / 2;
        self.map_modes(true, |m, c| {
            if m == 0 || m == h {
                Complex64::new(c.re, 0.0)
            } else {
                0.5 * (c + self.coeff(-m).conj())
            }
        })
    }

    pub fn im(&self) -> Self {
        let h = self.n() as i64 / 2;
        self.map_modes(true, |m, c| {
            if m == 0 || m == h {
                Complex64::new(c.im, 0.0)
            } else {
                (c - self.coeff(-m).conj()) / Complex64::new(0.0, 2.0)
            }
        })
    }

    pub fn conj(&self) -> Self {
        let h = self.n() as i64 / 2;
        self.map_modes(self.real, |m, _| {
            if m == h {
                self.coeff(h).conj()
            } else {
                self.coeff(-m).conj()
            }
        })
    }

    pub fn scale(&self, a: Complex64) -> Self {
        self.map_modes(self.real && a.im == 0.0, |_, c| a * c)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    /// `self + i other`.
    pub fn add_i(&self, other: &Self) -> Result<Self> {
        let mut out = self.zip(other, |a, b| a + Complex64::new(0.0, 1.0) * b)?;
        out.real = false;
        Ok(out)
    }

    fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.n() != other.n() {
            return Err(CalculusError::DimensionMismatch(self.n(), other.n()));
        }
        same_length(self.length, other.length)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| f(a, b)).collect();
        Ok(BoundaryFunction { coeffs, length: self.length, real: self.real && other.real })
    }

    /// Drops modes above `band` (the Nyquist mode included when `band < N/2`).
    pub fn truncated(&self, band: usize) -> Self {
        self.map_modes(self.real, |m, c| {
            if m.unsigned_abs() as usize > band {
                Complex64::new(0.0, 0.0)
            } else {
                c
            }
        })
    }

    /// Real coordinates of `(Re f, Im f)` in the orthonormal trigonometric basis.
    pub fn real_coords(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.n();
        let h = n as i64 / 2;
        let sl = self.length.sqrt();
        let s2l = (2.0 * self.length).sqrt();
        let mut u = DVector::zeros(n);
        let mut v = DVector::zeros(n);
        let c0 = self.coeff(0);
        u[0] = sl * c0.re;
        v[0] = sl * c0.im;
        for m in 1..h {
            let (cp, cm) = (self.coeff(m), self.coeff(-m).conj());
            let cu = 0.5 * (cp + cm);
            let cv = (cp - cm) / Complex64::new(0.0, 2.0);
            let i = 2 * m as usize;
            u[i - 1] = s2l * cu.re;
            u[i] = -s2l * cu.im;
            v[i - 1] = s2l * cv.re;
            v[i] = -s2l * cv.im;
        }
        let cn = self.coeff(h);
        u[n - 1] = sl * cn.re;
        v[n - 1] = sl * cn.im;
        (u, v)
    }

    /// Inverse of [`real_coords`](Self::real_coords).
    pub fn from_real_coords(u: &DVector<f64>, v: Option<&DVector<f64>>, length: f64) -> Result<Self> {
        let n = u.len();
        check_n(n)?;
        check_length(length)?;
        if let Some(v) = v {
            if v.len() != n {
                return Err(CalculusError::DimensionMismatch(n, v.len()));
            }
        }
        let h = n as i64 / 2;
        let sl = length.sqrt();
        let s2l = (2.0 * length).sqrt();
        let one = |x: &DVector<f64>, m: i64| -> Complex64 {
            if m == 0 {
                Complex64::new(x[0] / sl, 0.0)
            } else if m == h {
                Complex64::new(x[n - 1] / sl, 0.0)
            } else {
                let i = 2 * m.unsigned_abs() as usize;
                let c = Complex64::new(x[i - 1], -x[i]) / s2l;
                if m > 0 {
                    c
                } else {
                    c.conj()
                }
            }
        };
        let coeffs = ((-h + 1)..=h)
            .map(|m| {
                let mut c = one(u, m);
                if let Some(v) = v {
                    c += Complex64::new(0.0, 1.0) * one(v, m);
                }
                c
            })
            .collect();
        Ok(BoundaryFunction { coeffs, length, real: v.is_none() })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(FunctionWire {
            n_modes: self.n(),
            length: self.length,
            coeffs_re: self.coeffs.iter().map(|c| c.re).collect(),
            coeffs_im: self.coeffs.iter().map(|c| c.im).collect(),
        })
        .expect("plain data serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let w: FunctionWire = serde_json::from_value(value.clone())
            .map_err(|e| CalculusError::Format(e.to_string()))?;
        if w.coeffs_re.len() != w.n_modes || w.coeffs_im.len() != w.n_modes {
            return Err(CalculusError::Format("coefficient arrays do not match n_modes".into()));
        }
        let coeffs = w.coeffs_re.iter().zip(&w.coeffs_im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        Self::from_coeffs(coeffs, w.length)
    }
}

#[derive(Serialize, Deserialize)]
struct FunctionWire {
    n_modes: usize,
    length: f64,
    coeffs_re: Vec<f64>,
    coeffs_im: Vec<f64>,
}

/// Mode number of real basis index `i` for `N` nodes.
pub fn basis_mode(i: usize, n: usize) -> usize {
    if i == 0 {
        0
    } else if i == n - 1 {
        n / 2
    } else {
        i.div_ceil(2)
    }
}

/// Value of the `i`-th orthonormal basis function at arclength `l`, using the
/// continuous cosine for the Nyquist slot.
pub fn basis_value(i: usize, n: usize, length: f64, l: f64) -> f64 {
    let m = basis_mode(i, n) as f64;
    let x = 2.0 * PI * m * l / length;
    if i == 0 {
        1.0 / length.sqrt()
    } else if i == n - 1 {
        x.cos() / length.sqrt()
    } else if i % 2 == 1 {
        (2.0 / length).sqrt() * x.cos()
    } else {
        (2.0 / length).sqrt() * x.sin()
    }
}

/// Like [`basis_value`] but with the Nyquist cosine normalized in the
/// continuous `L^2` norm, `sqrt(2/L) cos(pi N l / L)`. Used for Galerkin
/// projections evaluated off the nodes.
pub fn basis_value_l2(i: usize, n: usize, length: f64, l: f64) -> f64 {
    if i == n - 1 {
        std::f64::consts::SQRT_2 * basis_value(i, n, length, l)
    } else {
        basis_value(i, n, length, l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    Dn,
    Derivative,
    Integration,
    Projection,
    Composite,
}

/// Real-linear operator on real boundary functions.
///
/// `band` is the highest mode on which the matrix is trusted. Analytic
/// operators use `N/2 - 1`; discretized ones report less.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryOperator {
    matrix: DMatrix<f64>,
    length: f64,
    kind: OperatorKind,
    band: usize,
}

impl BoundaryOperator {
    pub fn from_matrix(matrix: DMatrix<f64>, length: f64, kind: OperatorKind) -> Result<Self> {
        let n = matrix.nrows();
        check_n(n)?;
        check_length(length)?;
        if matrix.ncols() != n {
            return Err(CalculusError::DimensionMismatch(n, matrix.ncols()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(CalculusError::NonFinite);
        }
        Ok(BoundaryOperator { matrix, length, kind, band: n / 2 - 1 })
    }

    pub fn identity(n: usize, length: f64) -> Result<Self> {
        Self::from_matrix(DMatrix::identity(n, n), length, OperatorKind::Identity)
    }

    pub fn zero(n: usize, length: f64) -> Result<Self> {
        Self::from_matrix(DMatrix::zeros(n, n), length, OperatorKind::Composite)
    }

    /// Fourier multiplier with a real even symbol `sym(mode)` (same on cos and sin).
    pub fn even_symbol(n: usize, length: f64, kind: OperatorKind, sym: impl Fn(usize) -> f64) -> Result<Self> {
        check_n(n)?;
        let d = DVector::from_iterator(n, (0..n).map(|i| sym(basis_mode(i, n))));
        Self::from_matrix(DMatrix::from_diagonal(&d), length, kind)
    }

    /// Tangential derivative; zero on constants and on the Nyquist mode.
    pub fn derivative(n: usize, length: f64) -> Result<Self> {
        Self::rotation(n, length, OperatorKind::Derivative, |w| w)
    }

    /// `J`: inverse derivative on zero-mean functions, zero on constants and Nyquist.
    pub fn integration(n: usize, length: f64) -> Result<Self> {
        Self::rotation(n, length, OperatorKind::Integration, |w| -1.0 / w)
    }

    // cos_m -> -g sin_m, sin_m -> g cos_m, with g = f(2 pi m / L)
    fn rotation(n: usize, length: f64, kind: OperatorKind, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_n(n)?;
        check_length(length)?;
        let mut a = DMatrix::zeros(n, n);
        for m in 1..n / 2 {
            let g = f(2.0 * PI * m as f64 / length);
            let i = 2 * m;
            a[(i, i - 1)] = -g;
            a[(i - 1, i)] = g;
        }
        Self::from_matrix(a, length, kind)
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn with_band(mut self, band: usize) -> Self {
        self.band = band.min(self.n() / 2 - 1);
        self
    }

    pub fn with_kind(mut self, kind: OperatorKind) -> Self {
        self.kind = kind;
        self
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.n() != other.n() {
            return Err(CalculusError::DimensionMismatch(self.n(), other.n()));
        }
        same_length(self.length, other.length)
    }

    pub fn apply(&self, f: &BoundaryFunction) -> Result<BoundaryFunction> {
        if f.n() != self.n() {
            return Err(CalculusError::DimensionMismatch(self.n(), f.n()));
        }
        same_length(self.length, f.length())?;
        let (u, v) = f.real_coords();
        if f.is_real() {
            BoundaryFunction::from_real_coords(&(&self.matrix * u), None, self.length)
        } else {
            BoundaryFunction::from_real_coords(&(&self.matrix * u), Some(&(&self.matrix * v)), self.length)
        }
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(BoundaryOperator {
            matrix: &self.matrix * &other.matrix,
            length: self.length,
            kind: OperatorKind::Composite,
            band: self.band.min(other.band),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(BoundaryOperator {
            matrix: &self.matrix + &other.matrix,
            length: self.length,
            kind: OperatorKind::Composite,
            band: self.band.min(other.band),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(BoundaryOperator {
            matrix: &self.matrix - &other.matrix,
            length: self.length,
            kind: OperatorKind::Composite,
            band: self.band.min(other.band),
        })
    }

    pub fn scale(&self, a: f64) -> Self {
        BoundaryOperator { matrix: &self.matrix * a, ..self.clone() }
    }

    pub fn transpose(&self) -> Self {
        BoundaryOperator { matrix: self.matrix.transpose(), ..self.clone() }
    }

    /// Sobolev weights `(1 + (2 pi m / L)^2)^(s/2)` per basis index.
    pub fn sobolev_weights(&self, s: SobolevIndex) -> DVector<f64> {
        let n = self.n();
        DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let w = 2.0 * PI * basis_mode(i, n) as f64 / self.length;
                (1.0 + w * w).powf(0.5 * s.0)
            }),
        )
    }

    /// Largest singular value of `D_to A D_from^{-1}`.
    pub fn operator_norm(&self, s_from: SobolevIndex, s_to: SobolevIndex) -> f64 {
        let dt = self.sobolev_weights(s_to);
        let df = self.sobolev_weights(s_from);
        let mut m = self.matrix.clone();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                m[(i, j)] *= dt[i] / df[j];
            }
        }
        largest_singular_value(&m)
    }

    /// Indices of the zero-mean resolved block: modes `1 ..= band`.
    pub fn resolved_indices(&self) -> std::ops::Range<usize> {
        1..2 * self.band + 1
    }

    /// The matrix restricted to modes `1 ..= band`.
    pub fn resolved_block(&self) -> DMatrix<f64> {
        let r = self.resolved_indices();
        self.matrix.view((r.start, r.start), (r.len(), r.len())).into_owned()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(OperatorWire {
            n: self.n(),
            length: self.length,
            matrix_row_major: self.matrix.transpose().as_slice().to_vec(),
            band: Some(self.band),
        })
        .expect("plain data serializes")
    }

    pub fn from_json(value: &serde_json::Value, kind: OperatorKind) -> Result<Self> {
        let w: OperatorWire = serde_json::from_value(value.clone())
            .map_err(|e| CalculusError::Format(e.to_string()))?;
        if w.matrix_row_major.len() != w.n * w.n {
            return Err(CalculusError::Format("matrix_row_major must hold n*n entries".into()));
        }
        let m = DMatrix::from_row_slice(w.n, w.n, &w.matrix_row_major);
        let op = Self::from_matrix(m, w.length, kind)?;
        Ok(match w.band {
            Some(b) => op.with_band(b),
            None => op,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct OperatorWire {
    n: usize,
    length: f64,
    matrix_row_major: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    band: Option<usize>,
}

pub(crate) fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0f64, |a, &b| a.max(b))
}

/// Singular values in decreasing order.
pub(crate) fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = 2.0 * PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn constant_samples() {
        let f = BoundaryFunction::from_real_samples(&[1.0; 16], TAU).unwrap();
        assert!(f.is_real());
        assert_eq!(f.coeff(0), c(1.0, 0.0));
        for m in -7..=8 {
            if m != 0 {
                assert!(f.coeff(m).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn cosine_samples() {
        let n = 16;
        let v: Vec<f64> = (0..n).map(|k| (TAU * k as f64 / n as f64).cos()).collect();
        let f = BoundaryFunction::from_real_samples(&v, TAU).unwrap();
        assert!((f.coeff(1) - c(0.5, 0.0)).norm() < 1e-15);
        assert!((f.coeff(-1) - c(0.5, 0.0)).norm() < 1e-15);
        let rest: f64 = (-7..=8).filter(|m: &i64| m.abs() != 1).map(|m| f.coeff(m).norm()).sum();
        assert!(rest < 1e-14);
    }

    #[test]
    fn single_mode_against_direct_dft() {
        let n = 32;
        let v: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(1.0, 3.0 * TAU * k as f64 / n as f64)).collect();
        let f = BoundaryFunction::from_samples(&v, 1.7).unwrap();
        for m in -15..=16i64 {
            let direct: Complex64 = v
                .iter()
                .enumerate()
                .map(|(k, x)| x * Complex64::from_polar(1.0, -TAU * (m * k as i64) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64;
            assert!((f.coeff(m) - direct).norm() < 1e-14);
        }
        assert!((f.coeff(3) - c(1.0, 0.0)).norm() < 1e-14);
        let back = f.samples();
        let err = v.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(BoundaryFunction::from_real_samples(&[0.0; 9], 1.0), Err(CalculusError::BadModeCount(9)));
        assert_eq!(BoundaryFunction::from_real_samples(&[0.0; 6], 1.0), Err(CalculusError::BadModeCount(6)));
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert_eq!(BoundaryFunction::from_real_samples(&v, 1.0), Err(CalculusError::NonFinite));
    }

    #[test]
    fn derivative_examples() {
        let s = BoundaryFunction::from_real_fn(16, TAU, f64::sin).unwrap();
        let d = s.derivative();
        let cos = BoundaryFunction::from_real_fn(16, TAU, f64::cos).unwrap();
        assert!(d.sub(&cos).unwrap().l2_norm() < 1e-14);
        let k = BoundaryFunction::constant(16, TAU, c(2.0, 0.0)).unwrap();
        assert_eq!(k.derivative().l2_norm(), 0.0);
    }

    #[test]
    fn derivative_against_finite_differences() {
        let n = 256;
        let f = BoundaryFunction::from_fn(n, TAU, |t| Complex64::from_polar(1.0, 5.0 * t)).unwrap();
        let d = f.derivative();
        assert!((d.coeff(5) - c(0.0, 5.0)).norm() < 1e-12);
        let h = TAU / n as f64;
        let v = f.samples();
        let dv = d.samples();
        for k in 0..n {
            let fd = (v[(k + 1) % n] - v[(k + n - 1) % n]) / (2.0 * h);
            // second-order error 25 h^2 / 6 * 5
            assert!((fd - dv[k]).norm() < 5.0 * 25.0 * h * h / 6.0 * 1.01);
        }
        let g = |t: f64| Complex64::from_polar(1.0, 5.0 * t);
        let step = 1e-5;
        let err = (0..n)
            .map(|k| {
                let l = TAU * (k as f64 + 0.37) / n as f64;
                ((g(l + step) - g(l - step)) / (2.0 * step) - d.eval(l)).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn finite_difference_error_is_second_order() {
        let f = BoundaryFunction::from_real_fn(64, TAU, |t| (3.0 * t).sin() + 0.5 * (7.0 * t).cos()).unwrap();
        let d = f.derivative();
        let fd_err = |m: usize| {
            let h = TAU / m as f64;
            let v = f.samples_at(m);
            let dv = d.samples_at(m);
            (0..m)
                .map(|k| ((v[(k + 1) % m] - v[(k + m - 1) % m]) / (2.0 * h) - dv[k]).norm())
                .fold(0.0, f64::max)
        };
        let ratio = fd_err(128) / fd_err(256);
        assert!((3.8..4.2).contains(&ratio), "{ratio}");
    }

    #[test]
    fn integration_examples() {
        let cos = BoundaryFunction::from_real_fn(32, TAU, f64::cos).unwrap();
        let sin = BoundaryFunction::from_real_fn(32, TAU, f64::sin).unwrap();
        assert!(cos.integrate_j().unwrap().sub(&sin).unwrap().l2_norm() < 1e-14);
        let z = BoundaryFunction::zero(32, TAU).unwrap();
        assert_eq!(z.integrate_j().unwrap().l2_norm(), 0.0);
        let s4 = BoundaryFunction::from_real_fn(32, TAU, |t| (4.0 * t).sin()).unwrap();
        let want = BoundaryFunction::from_real_fn(32, TAU, |t| -(4.0 * t).cos() / 4.0).unwrap();
        let j = s4.integrate_j().unwrap();
        assert!(j.sub(&want).unwrap().l2_norm() < 1e-14);
        assert!(j.derivative().sub(&s4).unwrap().l2_norm() < 1e-13);
        assert!(s4.derivative().integrate_j().unwrap().sub(&s4).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn integration_rejects_mean() {
        let f = BoundaryFunction::from_real_fn(16, TAU, |t| 1.0 + t.cos()).unwrap();
        assert!(matches!(f.integrate_j(), Err(CalculusError::NonZeroMean { .. })));
    }

    #[test]
    fn mean_examples() {
        let one = BoundaryFunction::constant(16, TAU, c(1.0, 0.0)).unwrap();
        assert!((one.mean() - c(TAU, 0.0)).norm() < 1e-14);
        let s = BoundaryFunction::from_real_fn(16, TAU, f64::sin).unwrap();
        assert!(s.mean().norm() < 1e-15);
        let g = |t: f64| 3.0 + (2.0 * t).cos();
        let f = BoundaryFunction::from_real_fn(16, TAU, g).unwrap();
        let quad: f64 = (0..512).map(|k| g(TAU * k as f64 / 512.0)).sum::<f64>() * TAU / 512.0;
        assert!((f.mean().re - quad).abs() < 1e-12);
        assert!((quad - 6.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn sobolev_examples() {
        let one = BoundaryFunction::constant(16, TAU, c(1.0, 0.0)).unwrap();
        assert!((one.sobolev_norm(SobolevIndex(3.0)) - TAU.sqrt()).abs() < 1e-14);
        assert_eq!(BoundaryFunction::zero(16, TAU).unwrap().sobolev_norm(SobolevIndex(1.0)), 0.0);
        let cos = BoundaryFunction::from_real_fn(16, TAU, f64::cos).unwrap();
        let quad: f64 = (0..512)
            .map(|k| {
                let t = TAU * k as f64 / 512.0;
                t.cos().powi(2) + t.sin().powi(2)
            })
            .sum::<f64>()
            * TAU
            / 512.0;
        assert!((cos.sobolev_norm(SobolevIndex(1.0)) - quad.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn ck_examples() {
        let five = BoundaryFunction::constant(16, TAU, c(5.0, 0.0)).unwrap();
        assert!((five.ck_norm(2) - 5.0).abs() < 1e-14);
        let s = BoundaryFunction::from_real_fn(16, TAU, f64::sin).unwrap();
        assert!((s.ck_norm(1) - 1.0).abs() < 1e-12);
        let s3 = BoundaryFunction::from_real_fn(32, TAU, |t| (3.0 * t).sin()).unwrap();
        assert!((s3.ck_norm(2) - 9.0).abs() < 1e-6);
    }

    #[test]
    fn operator_norm_examples() {
        let id = BoundaryOperator::identity(64, TAU).unwrap();
        assert!((id.operator_norm(SobolevIndex(1.0), SobolevIndex(0.0)) - 1.0).abs() < 1e-12);
        let z = BoundaryOperator::zero(64, TAU).unwrap();
        assert_eq!(z.operator_norm(SobolevIndex(1.0), SobolevIndex(0.0)), 0.0);
        let dn = BoundaryOperator::even_symbol(64, TAU, OperatorKind::Dn, |m| m as f64).unwrap();
        let want = (1..=32).map(|m| m as f64 / (1.0 + (m * m) as f64).sqrt()).fold(0.0, f64::max);
        assert!((want - 32.0 / (1.0f64 + 1024.0).sqrt()).abs() < 1e-15);
        assert!((dn.operator_norm(SobolevIndex(1.0), SobolevIndex(0.0)) - want).abs() < 1e-12);
    }

    #[test]
    fn derivative_and_j_invert_each_other() {
        let d = BoundaryOperator::derivative(32, 3.0).unwrap();
        let j = BoundaryOperator::integration(32, 3.0).unwrap();
        let f = BoundaryFunction::from_real_fn(32, 3.0, |l| (TAU * l / 3.0).sin() + 0.2 * (TAU * 5.0 * l / 3.0).cos()).unwrap();
        let dj = d.compose(&j).unwrap();
        assert!(dj.apply(&f).unwrap().sub(&f).unwrap().l2_norm() < 1e-13);
        let opj = j.apply(&f).unwrap();
        assert!(opj.sub(&f.integrate_j().unwrap()).unwrap().l2_norm() < 1e-14);
        let opd = d.apply(&f).unwrap();
        assert!(opd.sub(&f.derivative()).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn apply_identity_and_linearity() {
        let f = BoundaryFunction::from_fn(16, TAU, |t| c(t.cos(), (2.0 * t).sin())).unwrap();
        let id = BoundaryOperator::identity(16, TAU).unwrap();
        assert!(id.apply(&f).unwrap().sub(&f).unwrap().l2_norm() < 1e-14);
        let a = BoundaryOperator::from_matrix(DMatrix::from_fn(16, 16, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0), TAU, OperatorKind::Composite).unwrap();
        let b = BoundaryOperator::from_matrix(DMatrix::from_fn(16, 16, |i, j| ((i + 2 * j) % 3) as f64), TAU, OperatorKind::Composite).unwrap();
        let lhs = a.add(&b).unwrap().apply(&f).unwrap();
        let rhs = a.apply(&f).unwrap().add(&b.apply(&f).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().l2_norm() < 1e-12 * lhs.l2_norm());
    }

    #[test]
    fn dimension_mismatch() {
        let a = BoundaryOperator::identity(16, TAU).unwrap();
        let b = BoundaryOperator::identity(32, TAU).unwrap();
        assert!(matches!(a.compose(&b), Err(CalculusError::DimensionMismatch(16, 32))));
    }

    #[test]
    fn real_coords_roundtrip() {
        let f = BoundaryFunction::from_fn(16, 2.5, |l| c((3.0 * l).cos() + 0.1, (l).sin() - (8.0 * TAU * l / 2.5).cos())).unwrap();
        let (u, v) = f.real_coords();
        let g = BoundaryFunction::from_real_coords(&u, Some(&v), 2.5).unwrap();
        assert!(f.sub(&g).unwrap().l2_norm() < 1e-14);
        assert!((u.norm_squared() + v.norm_squared() - f.l2_norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn basis_matches_coords() {
        let n = 16;
        let len = 2.5;
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            let f = BoundaryFunction::from_real_coords(&e, None, len).unwrap();
            for k in 0..n {
                let l = len * k as f64 / n as f64;
                assert!((f.samples()[k].re - basis_value(i, n, len, l)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let f = BoundaryFunction::from_fn(8, TAU, |t| c(t.cos(), t.sin())).unwrap();
        let j = f.to_json();
        for key in ["n_modes", "length", "coeffs_re", "coeffs_im"] {
            assert!(j.get(key).is_some());
        }
        assert_eq!(BoundaryFunction::from_json(&j).unwrap(), f);
        let op = BoundaryOperator::derivative(8, TAU).unwrap();
        let oj = op.to_json();
        let back = BoundaryOperator::from_json(&oj, OperatorKind::Derivative).unwrap();
        assert_eq!(back, op);
        assert_eq!(oj["matrix_row_major"][2].as_f64().unwrap(), op.matrix()[(0, 2)]);
    }

    #[test]
    fn norm_equivalence_for_disk_symbol() {
        for n in [32usize, 64, 128, 256] {
            let dn = BoundaryOperator::even_symbol(n, TAU, OperatorKind::Dn, |m| m as f64).unwrap();
            let a = dn.operator_norm(SobolevIndex(1.0), SobolevIndex(0.0));
            let b = dn.operator_norm(SobolevIndex(3.0), SobolevIndex(2.0));
            let r = a / b;
            assert!((0.1..=10.0).contains(&r), "{n}: {r}");
        }
    }
}
