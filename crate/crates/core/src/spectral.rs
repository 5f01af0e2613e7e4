//! FFT plumbing shared by the samplers and the slice DSP: cached plans,
//! zero-pad interpolation, and exact integer-bin spectrum surgery.
//!
//! Every operation here acts on the whole record and is circular; callers
//! that compare against non-periodic ground truth exclude record edges.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::sync::Mutex;

static PLANNER: Mutex<Option<FftPlanner<f64>>> = Mutex::new(None);

fn with_planner<R>(f: impl FnOnce(&mut FftPlanner<f64>) -> R) -> R {
    let mut guard = PLANNER.lock().unwrap();
    let planner = guard.get_or_insert_with(FftPlanner::new);
    f(planner)
}

/// In-place forward FFT (unnormalized).
pub fn fft(buf: &mut [Complex64]) {
    let plan = with_planner(|p| p.plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place inverse FFT, scaled by 1/n so that `ifft(fft(x)) == x`.
pub fn ifft(buf: &mut [Complex64]) {
    let plan = with_planner(|p| p.plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Forward FFT of a real sequence.
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft(&mut buf);
    buf
}

/// Inverse FFT of a spectrum known to be conjugate-symmetric; returns the
/// real part (the imaginary residue is rounding noise for Hermitian input).
pub fn ifft_real(spectrum: &[Complex64]) -> Vec<f64> {
    let mut buf = spectrum.to_vec();
    ifft(&mut buf);
    buf.into_iter().map(|v| v.re).collect()
}

/// Signed bin index of FFT position `k` for a length-`n` transform.
pub fn signed_bin(k: usize, n: usize) -> i64 {
    let k = k as i64;
    let n = n as i64;
    if k <= (n - 1) / 2 {
        k
    } else {
        k - n
    }
}

/// FFT position of signed bin `j` for a length-`n` transform.
pub fn bin_index(j: i64, n: usize) -> usize {
    let n = n as i64;
    (((j % n) + n) % n) as usize
}

/// Zero-pad FFT interpolation by an integer factor, `interpft` style:
/// the output agrees with the input at the original sample positions and is
/// the bandlimited interpolant in between. For even input length the
/// Nyquist bin is split half/half.
pub fn interpft(x: &[Complex64], factor: usize) -> Vec<Complex64> {
    assert!(factor >= 1);
    let n = x.len();
    if factor == 1 || n == 0 {
        return x.to_vec();
    }
    let mut spec = x.to_vec();
    fft(&mut spec);
    let m = n * factor;
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let half = n / 2;
    if n % 2 == 0 {
        out[..half].copy_from_slice(&spec[..half]);
        // split the shared Nyquist bin
        out[half] = spec[half] * 0.5;
        out[m - half] = spec[half] * 0.5;
        out[m - half + 1..].copy_from_slice(&spec[half + 1..]);
    } else {
        out[..=half].copy_from_slice(&spec[..=half]);
        out[m - half..].copy_from_slice(&spec[half + 1..]);
    }
    for v in out.iter_mut() {
        *v *= factor as f64;
    }
    ifft(&mut out);
    out
}

/// Interpolate a real sequence by an integer factor (zero-pad FFT).
pub fn interpft_real(x: &[f64], factor: usize) -> Vec<f64> {
    let buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    interpft(&buf, factor).into_iter().map(|v| v.re).collect()
}

/// Multiply a sequence by `e^{+j 2π (shift_bins/n) t}`, performed exactly as a
/// circular shift of its spectrum by `shift_bins` positions upward.
pub fn spectrum_shift(x: &[Complex64], shift_bins: i64) -> Vec<Complex64> {
    let n = x.len();
    let mut spec = x.to_vec();
    fft(&mut spec);
    let mut shifted = vec![Complex64::new(0.0, 0.0); n];
    for (k, &v) in spec.iter().enumerate() {
        shifted[bin_index(k as i64 + shift_bins, n)] = v;
    }
    ifft(&mut shifted);
    shifted
}

/// Total energy of a real sequence interpreted on a grid with sample period
/// `dt` (so this approximates the continuous-time integral of x^2).
pub fn energy(x: &[f64], dt: f64) -> f64 {
    x.iter().map(|&v| v * v).sum::<f64>() * dt
}

/// Mean square (power) of a real sequence.
pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|&v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// Hamming window of length `n` (periodic form is not used; this is the
/// symmetric window conventional for averaged periodograms).
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}
