//! FFT plumbing shared by the boundary calculus.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Forward DFT with the `1/N` normalization: `c_n = (1/N) sum_k v_k e^{-2 pi i n k / N}`.
/// Output is in FFT order (mode 0, 1, ..., N/2, -N/2+1, ..., -1).
pub(crate) fn forward(values: &[Complex64]) -> Vec<Complex64> {
    let n = values.len();
    let mut buf = values.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let s = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= s);
    buf
}

/// Inverse of [`forward`]: samples from FFT-ordered coefficients.
pub(crate) fn inverse(coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut buf = coeffs.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf
}

/// Signed mode number of FFT slot `k` for length `n`.
pub(crate) fn fft_mode(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}
