//! Digital balanced quadricorrelator: carrier-offset discrimination by
//! mixing an isolated band against a tunable quadrature oscillator,
//! lowpass filtering, and cross-combining each arm with the finite
//! difference of the other. The averaged discriminator output carries the
//! sign and size of the frequency offset; iterating the oscillator
//! converges on the carrier.

use std::f64::consts::PI;

use crate::firdes;

use super::{BackDspError, BackDspParams};

/// Scales the raw discriminator average so that the default loop gain
/// takes a near-unit step toward the carrier per iteration. The absolute
/// scale of the discriminator is an implementation degree of freedom; the
/// sign convention (positive mean for a carrier above the oscillator) is
/// fixed here and asserted by the sign-consistency tests.
pub const BQ_GAIN_SCALE: f64 = 1e-7;

/// Oscillator interval the prepared band occupies, in rad/sample.
pub const BQ_OMEGA_LO: f64 = PI / 3.0;
pub const BQ_OMEGA_HI: f64 = 2.0 * PI / 3.0;

/// Loop state after iterating on one prepared band.
#[derive(Debug, Clone)]
pub struct BqState {
    /// Final oscillator angular frequency, rad/sample.
    pub omega0: f64,
    /// In-phase information stream from the final pass (post lowpass).
    pub v_i: Vec<f64>,
    /// Quadrature information stream from the final pass.
    pub v_q: Vec<f64>,
    /// Discriminator sequence from the final pass.
    pub v_d: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Interpolate an isolated band by 3 and shift its positive-frequency
/// content so that the stitched window maps onto angular positions
/// [pi/3, 2pi/3] (negatives mirrored); the shift is half the input rate,
/// so the window width scales with the stitched rate automatically. Input
/// length must be even so the shift is an exact bin rotation.
pub fn bq_prepare(s: &[f64]) -> Vec<f64> {
    assert!(s.len() % 2 == 0, "prepared shift needs an even input length");
    let up = crate::spectral::interpft_real(s, 3);
    let n = up.len();
    let shift = n / 6;
    let mut spec = crate::spectral::fft_real(&up);
    let mut out = vec![num_complex::Complex64::new(0.0, 0.0); n];
    // move positive bins up by n/6; DC splits across both images
    let half = n / 2;
    for k in 1..half {
        let v = spec[k];
        if k + shift < half {
            out[k + shift] = v;
        } else if k + shift == half {
            out[half] = v + out[half];
        }
    }
    let dc = spec[0];
    out[shift] += 0.5 * dc;
    // mirror for a real result
    for k in 1..half {
        out[n - k] = out[k].conj();
    }
    out[0] = num_complex::Complex64::new(0.0, 0.0);
    out[half] = num_complex::Complex64::new(out[half].re, 0.0);
    spec.copy_from_slice(&out);
    crate::spectral::ifft_real(&spec)
}

fn mix_and_filter(s: &[f64], omega: f64, taps: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = s.len();
    let mut e_i = vec![0.0; n];
    let mut e_q = vec![0.0; n];
    for k in 0..n {
        let ph = omega * k as f64;
        e_i[k] = 2.0 * s[k] * ph.cos();
        e_q[k] = 2.0 * s[k] * ph.sin();
    }
    (firdes::apply_fir(&e_i, taps), firdes::apply_fir(&e_q, taps))
}

/// One discriminator evaluation at a fixed oscillator frequency: returns
/// the filtered arms and the discriminator sequence. The differentiator is
/// the exact two-tap difference; the undifferentiated arm is delayed half
/// a sample by averaging adjacent samples so the product stays aligned.
fn discriminate(s: &[f64], omega: f64, taps: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (e_i, e_q) = mix_and_filter(s, omega, taps);
    let n = s.len();
    let mut v_d = vec![0.0; n];
    for k in 1..n {
        let d_i = e_i[k] - e_i[k - 1];
        let d_q = e_q[k] - e_q[k - 1];
        let m_i = 0.5 * (e_i[k] + e_i[k - 1]);
        let m_q = 0.5 * (e_q[k] + e_q[k - 1]);
        v_d[k] = m_q * d_i - m_i * d_q;
    }
    (e_i, e_q, v_d)
}

/// Iterate the oscillator until the update falls below 1e-6 rad/sample or
/// the iteration cap; terminates unconverged if the estimate leaves the
/// monitored interval.
pub fn bq_iterate(
    prepared: &[f64],
    omega_init: f64,
    params: &BackDspParams,
) -> Result<BqState, BackDspError> {
    if !(BQ_OMEGA_LO..=BQ_OMEGA_HI).contains(&omega_init) {
        return Err(BackDspError::OmegaOutOfRange(omega_init));
    }
    let n = prepared.len();
    let taps = firdes::windowed_lowpass(63, 0.24);
    let guard = (taps.len()).max(n / 32);
    if n <= 2 * guard + 16 {
        return Err(BackDspError::RecordTooShort { need: 2 * guard + 16, got: n });
    }
    let power: f64 = prepared[guard..n - guard].iter().map(|v| v * v).sum();
    if power <= 0.0 {
        // silent band: report the initial frequency, unconverged
        return Ok(BqState {
            omega0: omega_init,
            v_i: vec![0.0; n],
            v_q: vec![0.0; n],
            v_d: vec![0.0; n],
            converged: false,
            iterations: 0,
        });
    }
    let mut omega = omega_init;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        let (_, _, v_d) = discriminate(prepared, omega, &taps);
        let num: f64 = v_d[guard..n - guard].iter().sum();
        let step = params.loop_gain * BQ_GAIN_SCALE * num / power;
        let next = omega + step;
        if !(BQ_OMEGA_LO..=BQ_OMEGA_HI).contains(&next) {
            converged = false;
            break;
        }
        omega = next;
        if step.abs() < 1e-6 {
            converged = true;
            break;
        }
    }
    let (v_i, v_q, v_d) = discriminate(prepared, omega, &taps);
    Ok(BqState { omega0: omega, v_i, v_q, v_d, converged, iterations })
}

/// Map a converged angular frequency back to an absolute carrier:
/// f = slice_width * (edge_index + c * (omega - pi/3)/(pi/3)), with c = 1
/// for an unmerged band and c = 2 after merging, and edge_index the
/// stitched window's lower edge in units of the slice width.
pub fn carrier_from_omega(omega0: f64, edge_index: f64, merged: bool, slice_width: f64) -> f64 {
    let c = if merged { 2.0 } else { 1.0 };
    slice_width * (edge_index + c * (omega0 - PI / 3.0) / (PI / 3.0))
}
