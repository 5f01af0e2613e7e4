//! Band-level processing on recovered spectrum slices: re-position slice
//! pairs as real sequences, estimate band edges from averaged spectra,
//! stitch split bands back together, filter out neighboring transmissions,
//! and recover each carrier and its information streams with a digital
//! balanced quadricorrelator.
//!
//! Window bookkeeping: slice l covers [(l-1/2)f_p, (l+1/2)f_p]; its real
//! representation x_l runs at 2 f_s with the window's lower edge at DC.
//! A stitched (split) band covers two slices, 2 f_p wide at 4 f_s. Slice 0
//! contributes only its positive-frequency half, so the uniform mapping
//! holds there too.

pub mod bits;
pub mod bq;
pub mod welch;

pub use bits::{decode_bpsk, BpskDecode};
pub use bq::{bq_iterate, bq_prepare, carrier_from_omega, BqState};
pub use welch::{welch_psd, welch_window_len, WelchPsd};

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::firdes;
use crate::mwc::SliceBank;
use crate::recovery::SupportSet;
use crate::spectral;

#[derive(Debug, Error)]
pub enum BackDspError {
    #[error("record too short: need {need} samples, have {got}")]
    RecordTooShort { need: usize, got: usize },
    #[error("slice {0} is not part of the recovered support")]
    SliceNotActive(i64),
    #[error("support too coarse: band needs slice {0}")]
    SupportTooCoarse(i64),
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("oscillator init {0} outside [pi/3, 2pi/3]")]
    OmegaOutOfRange(f64),
    #[error("band spans more than two slices")]
    BandTooWide,
    #[error(transparent)]
    Fir(#[from] crate::firdes::FirError),
    #[error("{0}")]
    Invalid(String),
}

/// Tuning knobs for band detection, isolation, and carrier recovery.
#[derive(Debug, Clone)]
pub struct BackDspParams {
    /// Smallest believable band width, Hz.
    pub b_min: f64,
    /// Smallest believable gap between bands, Hz.
    pub delta_min: f64,
    /// Passband ripple of the isolation filters.
    pub a_p: f64,
    /// Stopband ripple of the isolation filters.
    pub a_s: f64,
    /// Oscillator loop gain.
    pub loop_gain: f64,
    /// Iteration cap for the oscillator loop.
    pub max_iters: usize,
    /// Segment overlap fraction of the spectral estimator.
    pub welch_overlap: f64,
}

impl BackDspParams {
    /// Defaults scaled to a maximal band width: resolution parameters at
    /// one eighth of the band width.
    pub fn for_band_width(b_hz: f64) -> Self {
        Self {
            b_min: b_hz / 8.0,
            delta_min: b_hz / 8.0,
            a_p: 1e-6,
            a_s: 1e-2,
            loop_gain: 5e6,
            max_iters: 50,
            welch_overlap: 0.5,
        }
    }
}

/// One detected transmission.
#[derive(Debug, Clone)]
pub struct BandEstimate {
    /// Lower edge, Hz.
    pub lo: f64,
    /// Upper edge, Hz.
    pub hi: f64,
    /// Integrated spectral power over the detected bins.
    pub power: f64,
    /// True when the band straddles two adjacent slices.
    pub split: bool,
    /// Index of the slice holding the band (the lower one when split).
    pub slice_index: i64,
}

impl BandEstimate {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Merge factor of the stitched window: 2 when split, else 1.
    pub fn merge_factor(&self) -> usize {
        if self.split {
            2
        } else {
            1
        }
    }
}

/// Recovered information streams of one band.
#[derive(Debug, Clone)]
pub struct InfoSignals {
    pub i_seq: Vec<f64>,
    pub q_seq: Vec<f64>,
    /// Stream rate in Hz: six or twelve slice widths.
    pub rate: f64,
    /// Recovered carrier, Hz.
    pub carrier: f64,
    pub converged: bool,
}

/// Re-position a slice pair on both sides of the origin: interpolate by
/// `r`, shift the positive slice up by `f_norm` cycles/sample (at the
/// output rate) and the negative slice down, and sum. Real output when
/// the inputs are conjugate mirrors.
pub fn resample_shift(
    z_plus: &[Complex64],
    z_minus: &[Complex64],
    r: usize,
    f_norm: f64,
) -> Result<Vec<f64>, BackDspError> {
    if z_plus.len() != z_minus.len() {
        return Err(BackDspError::LengthMismatch(z_plus.len(), z_minus.len()));
    }
    if ![2, 4, 6].contains(&r) {
        return Err(BackDspError::Invalid(format!("resample factor {r} not in {{2,4,6}}")));
    }
    let n_out = r * z_plus.len();
    let shift_bins = f_norm * n_out as f64;
    if (shift_bins - shift_bins.round()).abs() > 1e-6 {
        return Err(BackDspError::Invalid(format!(
            "shift {f_norm} is not a whole number of bins for length {n_out}"
        )));
    }
    let up_p = spectral::interpft(z_plus, r);
    let up_m = spectral::interpft(z_minus, r);
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out {
        let ph = 2.0 * PI * f_norm * m as f64;
        let rot = Complex64::from_polar(1.0, ph);
        out.push((up_p[m] * rot + up_m[m] * rot.conj()).re);
    }
    Ok(out)
}

/// Positive/negative spectral halves of the center slice, so that slice 0
/// feeds the same re-positioning path as every other slice without
/// duplicating its mirror image into the band window.
fn analytic_halves(z0: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let p = z0.len();
    let mut spec = z0.to_vec();
    spectral::fft(&mut spec);
    let mut plus = vec![Complex64::new(0.0, 0.0); p];
    let mut minus = vec![Complex64::new(0.0, 0.0); p];
    plus[0] = 0.5 * spec[0];
    minus[0] = 0.5 * spec[0];
    for k in 1..p / 2 {
        plus[k] = spec[k];
        minus[p - k] = spec[p - k];
    }
    if p % 2 == 0 {
        plus[p / 2] = 0.5 * spec[p / 2];
        minus[p / 2] = 0.5 * spec[p / 2];
    }
    spectral::ifft(&mut plus);
    spectral::ifft(&mut minus);
    (plus, minus)
}

fn slice_pair(bank: &SliceBank, l: i64) -> Result<(Vec<Complex64>, Vec<Complex64>), BackDspError> {
    if l < 0 || l > bank.big_l as i64 {
        return Err(BackDspError::Invalid(format!("slice index {l} out of range")));
    }
    if !bank.is_active(l) {
        return Err(BackDspError::SliceNotActive(l));
    }
    if l == 0 {
        Ok(analytic_halves(bank.slice(0)))
    } else {
        if !bank.is_active(-l) {
            return Err(BackDspError::SliceNotActive(-l));
        }
        Ok((bank.slice(l).to_vec(), bank.slice(-l).to_vec()))
    }
}

/// Real band-window sequence of slice l at rate 2 f_s: absolute frequency
/// (l-1/2)f_p + g appears at g.
pub fn slice_to_real(bank: &SliceBank, l: i64) -> Result<Vec<f64>, BackDspError> {
    let (plus, minus) = slice_pair(bank, l)?;
    resample_shift(&plus, &minus, 2, 0.25)
}

/// Binary energy mask from a spectral estimate: the threshold is the
/// geometric mean of the (floored) density values; strictly-above bins
/// pass. An all-zero estimate yields an all-false mask.
pub fn threshold_psd(psd: &[f64]) -> Vec<bool> {
    let max = psd.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return vec![false; psd.len()];
    }
    let floor = 1e-15 * max;
    let mean_log: f64 =
        psd.iter().map(|&p| p.max(floor).log10()).sum::<f64>() / psd.len() as f64;
    let threshold = 10f64.powf(mean_log);
    psd.iter().map(|&p| p > threshold * (1.0 + 1e-12)).collect()
}

/// Per-slice detection input for the band-edge refinement.
#[derive(Debug, Clone)]
pub struct SliceDetection {
    pub slice_index: i64,
    pub mask: Vec<bool>,
    pub psd: Vec<f64>,
    pub bin_hz: f64,
}

/// Raw frequency interval with integrated power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawInterval {
    pub lo: f64,
    pub hi: f64,
    pub power: f64,
}

/// Merge intervals closer than delta_min and drop those narrower than
/// b_min. Idempotent: applying it to its own output changes nothing.
pub fn merge_and_prune(intervals: &[RawInterval], params: &BackDspParams) -> Vec<RawInterval> {
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
    let mut merged: Vec<RawInterval> = Vec::new();
    for iv in sorted {
        match merged.last_mut() {
            Some(last) if iv.lo - last.hi < params.delta_min => {
                last.hi = last.hi.max(iv.hi);
                last.power += iv.power;
            }
            _ => merged.push(iv),
        }
    }
    merged.retain(|iv| iv.hi - iv.lo >= params.b_min);
    merged
}

/// Turn per-slice masks into band estimates: map mask bins to absolute
/// frequency, unite neighbors, prune slivers, and keep the `n_bands` most
/// powerful intervals. The bool result flags a shortfall (fewer surviving
/// intervals than requested).
pub fn refine_support(
    detections: &[SliceDetection],
    params: &BackDspParams,
    n_bands: usize,
    f_p: f64,
) -> (Vec<BandEstimate>, bool) {
    let mut raw: Vec<RawInterval> = Vec::new();
    for det in detections {
        let e_l = (det.slice_index as f64 - 0.5) * f_p;
        let window_hi = e_l + f_p;
        for (k, &on) in det.mask.iter().enumerate() {
            if !on {
                continue;
            }
            let lo = (e_l + (k as f64 - 0.5) * det.bin_hz).max(e_l).max(0.0);
            let hi = (e_l + (k as f64 + 0.5) * det.bin_hz).min(window_hi);
            if hi <= lo {
                continue;
            }
            raw.push(RawInterval { lo, hi, power: det.psd[k] * det.bin_hz });
        }
    }
    let merged = merge_and_prune(&raw, params);
    let mut ranked = merged;
    ranked.sort_by(|a, b| b.power.partial_cmp(&a.power).unwrap());
    let shortfall = ranked.len() < n_bands;
    ranked.truncate(n_bands);
    ranked.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
    let ests = ranked
        .into_iter()
        .map(|iv| {
            let l_lo = (iv.lo / f_p + 0.5).floor() as i64;
            let l_hi = ((iv.hi / f_p + 0.5).ceil() as i64 - 1).max(l_lo);
            BandEstimate {
                lo: iv.lo,
                hi: iv.hi,
                power: iv.power,
                split: l_hi > l_lo,
                slice_index: l_lo,
            }
        })
        .collect();
    (ests, shortfall)
}

/// Assemble the sequence carrying one band contiguously: the slice's own
/// window when the band sits inside one slice, or both neighbors
/// interleaved onto a double-width window when it straddles the boundary.
/// Returns the samples and the window rate in slice widths (2 or 4).
pub fn stitch_band(bank: &SliceBank, est: &BandEstimate) -> Result<Vec<f64>, BackDspError> {
    let l = est.slice_index;
    if !est.split {
        return slice_to_real(bank, l);
    }
    if est.hi - est.lo > 2.0 * bank.f_s {
        return Err(BackDspError::BandTooWide);
    }
    let (p0, m0) = slice_pair(bank, l)?;
    let (p1, m1) = match slice_pair(bank, l + 1) {
        Ok(pair) => pair,
        Err(BackDspError::SliceNotActive(_)) => {
            return Err(BackDspError::SupportTooCoarse(l + 1))
        }
        Err(e) => return Err(e),
    };
    let a = resample_shift(&p0, &m0, 4, 0.125)?;
    let b = resample_shift(&p1, &m1, 4, 0.375)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

/// Filter a stitched sequence down to one band. The filter type follows
/// the positions of the other detected bands inside the stitched window:
/// all-pass when the band is alone, low/high/band-pass otherwise, with the
/// configured pass/stop ripples. Returns the filtered sequence and a flag
/// marking a widened transition (neighbors closer than the design
/// resolution).
pub fn isolate_band(
    stitched: &[f64],
    est: &BandEstimate,
    all_ests: &[BandEstimate],
    params: &BackDspParams,
    f_p: f64,
) -> Result<(Vec<f64>, bool), BackDspError> {
    const MAX_TAPS: usize = 257;
    let c = est.merge_factor() as f64;
    let rate = 2.0 * c * f_p;
    let e_window = (est.slice_index as f64 - 0.5) * f_p;
    let window_hi = e_window + c * f_p;
    let pa = ((est.lo - e_window) / rate).clamp(0.0, 0.5);
    let pb = ((est.hi - e_window) / rate).clamp(0.0, 0.5);
    let mut stop_below: Option<f64> = None;
    let mut stop_above: Option<f64> = None;
    for other in all_ests {
        if std::ptr::eq(other, est) || (other.lo == est.lo && other.hi == est.hi) {
            continue;
        }
        if other.hi <= e_window || other.lo >= window_hi {
            continue;
        }
        let o_lo = ((other.lo.max(e_window) - e_window) / rate).clamp(0.0, 0.5);
        let o_hi = ((other.hi.min(window_hi) - e_window) / rate).clamp(0.0, 0.5);
        if o_hi <= pa {
            stop_below = Some(stop_below.map_or(o_hi, |v: f64| v.max(o_hi)));
        } else if o_lo >= pb {
            stop_above = Some(stop_above.map_or(o_lo, |v: f64| v.min(o_lo)));
        }
    }
    if stop_below.is_none() && stop_above.is_none() {
        return Ok((stitched.to_vec(), false));
    }
    // smallest transition the tap budget affords
    let min_t = ((-10.0 * (params.a_p * params.a_s).log10() - 13.0)
        / (14.6 * (MAX_TAPS - 1) as f64))
        .max(0.004);
    let mut widened = false;
    let mut bands: Vec<firdes::BandSpec> = Vec::new();
    let w_pass = 1.0 / params.a_p;
    let w_stop = 1.0 / params.a_s;
    let mut transition = f64::INFINITY;
    let mut lo_edge = 0.0;
    if let Some(sb) = stop_below {
        let gap = pa - sb;
        let t = if gap < min_t { widened = true; min_t } else { gap };
        let sb_hi = pa - t;
        if sb_hi > 1e-3 {
            bands.push(firdes::BandSpec { lo: 0.0, hi: sb_hi, desired: 0.0, weight: w_stop });
            transition = transition.min(t);
            lo_edge = pa;
        } else {
            widened = true;
        }
    }
    let mut hi_edge = 0.5;
    let mut upper_band: Option<firdes::BandSpec> = None;
    if let Some(sa) = stop_above {
        let gap = sa - pb;
        let t = if gap < min_t { widened = true; min_t } else { gap };
        let sb_lo = pb + t;
        if sb_lo < 0.5 - 1e-3 {
            upper_band =
                Some(firdes::BandSpec { lo: sb_lo, hi: 0.5, desired: 0.0, weight: w_stop });
            transition = transition.min(t);
            hi_edge = pb;
        } else {
            widened = true;
        }
    }
    if bands.is_empty() && upper_band.is_none() {
        return Ok((stitched.to_vec(), widened));
    }
    bands.push(firdes::BandSpec { lo: lo_edge, hi: hi_edge, desired: 1.0, weight: w_pass });
    if let Some(b) = upper_band {
        bands.push(b);
    }
    let n_taps = firdes::estimate_order(params.a_p, params.a_s, transition).min(MAX_TAPS);
    let taps = firdes::remez(n_taps, &bands)?;
    Ok((firdes::apply_fir(stitched, &taps), widened))
}

/// Everything recovered for one detected band.
#[derive(Debug)]
pub struct BandOutcome {
    pub estimate: BandEstimate,
    pub info: Result<InfoSignals, BackDspError>,
}

/// Full output of the band pipeline.
#[derive(Debug)]
pub struct BackDspOutput {
    pub bands: Vec<BandOutcome>,
    /// Fewer intervals survived detection than the model allows.
    pub shortfall: bool,
}

/// Run the whole chain on a recovered slice bank: per-slice spectral
/// estimation and thresholding, band-edge refinement, and per-band
/// stitching, isolation, and carrier recovery. One band's failure is
/// recorded in its outcome and does not abort the others.
pub fn back_dsp(
    bank: &SliceBank,
    support: &SupportSet,
    params: &BackDspParams,
    n_bands: usize,
    b_hz: f64,
) -> Result<BackDspOutput, BackDspError> {
    let f_p = bank.f_s;
    let mut detections = Vec::new();
    for &l in support.indices.iter().filter(|&&l| l >= 0) {
        let x_l = match slice_to_real(bank, l) {
            Ok(x) => x,
            Err(_) => continue, // silent or missing slice
        };
        let est = welch_psd(&x_l, 2.0 * f_p, params, b_hz)?;
        let mask = threshold_psd(&est.psd);
        detections.push(SliceDetection { slice_index: l, mask, psd: est.psd, bin_hz: est.bin_hz });
    }
    let (ests, shortfall) = refine_support(&detections, params, n_bands, f_p);
    let mut bands = Vec::with_capacity(ests.len());
    for est in &ests {
        let info = process_band(bank, est, &ests, params);
        bands.push(BandOutcome { estimate: est.clone(), info });
    }
    Ok(BackDspOutput { bands, shortfall })
}

fn process_band(
    bank: &SliceBank,
    est: &BandEstimate,
    all_ests: &[BandEstimate],
    params: &BackDspParams,
) -> Result<InfoSignals, BackDspError> {
    let f_p = bank.f_s;
    let stitched = stitch_band(bank, est)?;
    let (isolated, _widened) = isolate_band(&stitched, est, all_ests, params, f_p)?;
    let prepared = bq_prepare(&isolated);
    let c = est.merge_factor() as f64;
    let e_window = (est.slice_index as f64 - 0.5) * f_p;
    let omega_init =
        (PI / 3.0 * (1.0 + (est.center() - e_window) / (c * f_p))).clamp(PI / 3.0, 2.0 * PI / 3.0);
    let state = bq_iterate(&prepared, omega_init, params)?;
    let edge_index = est.slice_index as f64 - 0.5;
    let carrier = carrier_from_omega(state.omega0, edge_index, est.split, f_p);
    Ok(InfoSignals {
        i_seq: state.v_i,
        q_seq: state.v_q,
        rate: 6.0 * c * f_p,
        carrier,
        converged: state.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn resample_shift_constant_pair_is_a_cosine() {
        let theta = 0.7f64;
        let z_plus = vec![Complex64::from_polar(1.0, theta); 32];
        let z_minus = vec![Complex64::from_polar(1.0, -theta); 32];
        let out = resample_shift(&z_plus, &z_minus, 2, 0.25).unwrap();
        for (n, &v) in out.iter().enumerate() {
            let want = 2.0 * (2.0 * PI * 0.25 * n as f64 + theta).cos();
            assert_abs_diff_eq!(v, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn resample_shift_zero_is_zero() {
        let z = vec![Complex64::new(0.0, 0.0); 16];
        let out = resample_shift(&z, &z, 4, 0.125).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resample_shift_tone_lands_at_shifted_frequency() {
        // tone at f0 in the positive slice appears at F + f0/r
        let n = 64;
        let f0 = 5.0 / n as f64;
        let z_plus: Vec<Complex64> =
            (0..n).map(|k| Complex64::from_polar(1.0, 2.0 * PI * f0 * k as f64)).collect();
        let z_minus: Vec<Complex64> = z_plus.iter().map(|v| v.conj()).collect();
        let r = 2usize;
        let big_f = 0.25;
        let out = resample_shift(&z_plus, &z_minus, r, big_f).unwrap();
        let spec = spectral::fft_real(&out);
        let m = out.len();
        let peak = (0..m / 2)
            .max_by(|&a, &b| spec[a].norm_sqr().partial_cmp(&spec[b].norm_sqr()).unwrap())
            .unwrap();
        let expect = ((big_f + f0 / r as f64) * m as f64).round() as usize;
        assert_eq!(peak, expect);
        // doubled amplitude: each side carries the full tone
        assert_abs_diff_eq!(spec[peak].norm() / m as f64, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn resample_shift_length_mismatch_rejected() {
        let a = vec![Complex64::new(1.0, 0.0); 8];
        let b = vec![Complex64::new(1.0, 0.0); 9];
        assert!(resample_shift(&a, &b, 2, 0.25).is_err());
    }

    #[test]
    fn threshold_mask_hand_case() {
        let mask = threshold_psd(&[1.0, 1.0, 1.0, 100.0]);
        assert_eq!(mask, vec![false, false, false, true]);
    }

    #[test]
    fn threshold_constant_input_all_false() {
        let mask = threshold_psd(&[2.5; 6]);
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn threshold_two_peaks_both_flagged() {
        let psd = [1.0, 1.0, 50.0, 1.0, 1.0, 50.0, 1.0, 1.0];
        let mask = threshold_psd(&psd);
        assert_eq!(mask[2], true);
        assert_eq!(mask[5], true);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 2);
    }

    #[test]
    fn threshold_scale_covariance() {
        let psd = [0.1, 3.0, 0.2, 7.0, 0.4];
        let scaled: Vec<f64> = psd.iter().map(|&p| 123.456 * p).collect();
        assert_eq!(threshold_psd(&psd), threshold_psd(&scaled));
    }

    #[test]
    fn threshold_all_zero_defined() {
        assert!(threshold_psd(&[0.0; 5]).iter().all(|&m| !m));
    }

    fn params() -> BackDspParams {
        BackDspParams::for_band_width(8.0)
    }

    #[test]
    fn merge_close_intervals() {
        let ivs = [
            RawInterval { lo: 0.0, hi: 2.0, power: 1.0 },
            RawInterval { lo: 2.5, hi: 5.0, power: 2.0 },
        ];
        // gap 0.5 < delta_min = 1.0
        let out = merge_and_prune(&ivs, &params());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].lo, 0.0);
        assert_eq!(out[0].hi, 5.0);
        assert_eq!(out[0].power, 3.0);
    }

    #[test]
    fn prune_narrow_interval() {
        let ivs = [RawInterval { lo: 0.0, hi: 0.4, power: 1.0 }];
        // width 0.4 < b_min = 1.0
        assert!(merge_and_prune(&ivs, &params()).is_empty());
    }

    #[test]
    fn merge_prune_is_idempotent() {
        let ivs = [
            RawInterval { lo: 0.0, hi: 2.0, power: 1.0 },
            RawInterval { lo: 2.1, hi: 4.0, power: 1.5 },
            RawInterval { lo: 8.0, hi: 8.2, power: 0.1 },
            RawInterval { lo: 12.0, hi: 15.0, power: 9.0 },
        ];
        let once = merge_and_prune(&ivs, &params());
        let twice = merge_and_prune(&once, &params());
        assert_eq!(once, twice);
    }

    #[test]
    fn refine_keeps_most_powerful_bands() {
        let p = params();
        let f_p = 8.0;
        let bin = 1.0;
        // slice 1 window spans [4, 12]: two detected runs
        let det1 = SliceDetection {
            slice_index: 1,
            mask: vec![false, true, true, false, false, true, true, false, false],
            psd: vec![0.0, 5.0, 5.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            bin_hz: bin,
        };
        // slice 3 window spans [20, 28]: one strong run
        let det2 = SliceDetection {
            slice_index: 3,
            mask: vec![false, false, true, true, true, false, false, false, false],
            psd: vec![0.0, 0.0, 9.0, 9.0, 9.0, 0.0, 0.0, 0.0, 0.0],
            bin_hz: bin,
        };
        let (ests, shortfall) = refine_support(&[det1, det2], &p, 2, f_p);
        assert!(!shortfall);
        assert_eq!(ests.len(), 2);
        // the weakest of the three candidate intervals was dropped
        assert!(ests.iter().all(|e| e.power > 1.5));
        assert!(ests[0].lo < ests[1].lo);
    }

    #[test]
    fn refine_flags_boundary_straddle_as_split() {
        let p = params();
        let f_p = 8.0;
        // run crossing the slice-1/slice-2 boundary at 12
        let det = SliceDetection {
            slice_index: 1,
            mask: vec![false, false, false, false, false, false, true, true, true],
            psd: vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0, 4.0, 4.0],
            bin_hz: 1.0,
        };
        let det2 = SliceDetection {
            slice_index: 2,
            mask: vec![true, true, false, false, false, false, false, false, false],
            psd: vec![4.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            bin_hz: 1.0,
        };
        let (ests, _) = refine_support(&[det, det2], &p, 1, f_p);
        assert_eq!(ests.len(), 1);
        assert!(ests[0].split, "band {:?} should straddle", ests[0]);
        assert_eq!(ests[0].slice_index, 1);
    }

    #[test]
    fn isolate_alone_is_identity() {
        let est = BandEstimate { lo: 10.0, hi: 14.0, power: 1.0, split: false, slice_index: 2 };
        let x: Vec<f64> = (0..256).map(|i| (i as f64 * 0.1).sin()).collect();
        let (y, widened) = isolate_band(&x, &est, &[est.clone()], &params(), 8.0).unwrap();
        assert!(!widened);
        assert_eq!(x, y);
    }

    #[test]
    fn isolate_lowpass_preserves_target_energy() {
        // band window [4,12] (slice 1 of f_p=8): target at [5,7],
        // interferer above at [9.5,11.5]; both synthesized as tones
        let f_p = 8.0;
        let rate = 2.0 * f_p;
        let n = 4096;
        let tone = |f: f64| -> Vec<f64> {
            (0..n).map(|i| (2.0 * PI * f / rate * i as f64).cos()).collect()
        };
        let target = tone(2.0); // 6 Hz absolute = 2 Hz in-window
        let interf = tone(6.5); // 10.5 Hz absolute
        let x: Vec<f64> = target.iter().zip(&interf).map(|(a, b)| a + b).collect();
        let est = BandEstimate { lo: 5.0, hi: 7.0, power: 1.0, split: false, slice_index: 1 };
        let other = BandEstimate { lo: 9.5, hi: 11.5, power: 1.0, split: false, slice_index: 1 };
        let mut p = params();
        p.b_min = 1.0;
        p.delta_min = 1.0;
        let (y, widened) =
            isolate_band(&x, &est, &[est.clone(), other], &p, f_p).unwrap();
        assert!(!widened);
        let e = |x: &[f64]| x[200..n - 200].iter().map(|v| v * v).sum::<f64>();
        let energy_target = e(&target);
        let diff: Vec<f64> =
            y[..].iter().zip(&target).map(|(a, b)| a - b).collect();
        assert!(
            e(&diff) < 0.01 * energy_target,
            "target distorted: {} of {}",
            e(&diff),
            energy_target
        );
    }

    #[test]
    fn isolate_bandpass_rejects_both_sides() {
        let f_p = 8.0;
        let rate = 2.0 * f_p;
        let n = 8192;
        let tone = |f: f64| -> Vec<f64> {
            (0..n).map(|i| (2.0 * PI * f / rate * i as f64).cos()).collect()
        };
        let below = tone(1.0);
        let target = tone(4.0);
        let above = tone(7.0);
        let x: Vec<f64> = (0..n).map(|i| below[i] + target[i] + above[i]).collect();
        let est = BandEstimate { lo: 7.0, hi: 9.0, power: 1.0, split: false, slice_index: 1 };
        let b1 = BandEstimate { lo: 4.5, hi: 5.5, power: 1.0, split: false, slice_index: 1 };
        let b2 = BandEstimate { lo: 10.5, hi: 11.5, power: 1.0, split: false, slice_index: 1 };
        let mut p = params();
        p.b_min = 0.5;
        p.delta_min = 0.5;
        let (y, _) = isolate_band(&x, &est, &[b1, est.clone(), b2], &p, f_p).unwrap();
        // interferer tones must drop by at least 40 dB
        let probe = |x: &[f64], f: f64| -> f64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 1000..n - 1000 {
                acc += x[i] * Complex64::from_polar(1.0, -2.0 * PI * f / rate * i as f64);
            }
            acc.norm()
        };
        for f in [1.0, 7.0] {
            let before = probe(&x, f);
            let after = probe(&y, f);
            assert!(
                20.0 * (after / before).log10() <= -40.0,
                "tone {f}: {} dB",
                20.0 * (after / before).log10()
            );
        }
        let keep = probe(&y, 4.0) / probe(&x, 4.0);
        assert!((keep - 1.0).abs() < 0.01, "target gain {keep}");
    }
}
