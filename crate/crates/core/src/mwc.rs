//! Modulated wideband converter: a bank of channels that mix the input with
//! T-periodic ±1 waveforms, lowpass to one slice width, and decimate.
//!
//! The grid rate is pinned to M*f_p, so one sign interval is exactly one
//! Nyquist sample and the M spectrum slices tile the record's FFT bins
//! exactly (boundary bins split half/half between neighbors). Under this
//! tiling the channel outputs and the sensing matrix applied to the slice
//! vector agree bin-for-bin, which the recovery stage relies on.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use thiserror::Error;

use crate::signal::Waveform;
use crate::spectral;

#[derive(Debug, Error)]
pub enum MwcError {
    #[error("slice count {0} must be odd")]
    EvenSliceCount(usize),
    #[error("grid rate {got} Hz is not M*f_p = {need} Hz")]
    GridMismatch { need: f64, got: f64 },
    #[error("record length {n} is not a whole even number of mixing periods ({m} samples each)")]
    BadRecordLength { n: usize, m: usize },
    #[error("pattern length {got}, expected {need}")]
    BadPatternLength { need: usize, got: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Channel-bank parameters. The basic configuration has the per-channel
/// output rate equal to the slice width, f_s = f_p = 1/T.
#[derive(Debug, Clone, Copy)]
pub struct MwcConfig {
    /// Channel count.
    pub m_channels: usize,
    /// Number of spectrum slices, odd, M = 2L+1.
    pub m_slices: usize,
    /// Slice width and mixing-waveform frequency 1/T, in Hz.
    pub f_p: f64,
    /// Per-channel output rate, equal to f_p in the basic configuration.
    pub f_s: f64,
    /// Largest positive signal frequency the design covers.
    pub f_max: f64,
}

impl MwcConfig {
    pub fn new(m_channels: usize, m_slices: usize, f_p: f64, f_max: f64) -> Result<Self, MwcError> {
        if m_slices % 2 == 0 {
            return Err(MwcError::EvenSliceCount(m_slices));
        }
        let cfg = Self { m_channels, m_slices, f_p, f_s: f_p, f_max };
        if (cfg.big_l() as f64) * f_p < f_max - 1e-3 {
            return Err(MwcError::Invalid(format!(
                "L*f_p = {} Hz does not reach f_max = {} Hz",
                cfg.big_l() as f64 * f_p,
                f_max
            )));
        }
        Ok(cfg)
    }

    /// Basic design for a given slice count: f_p chosen so that L*f_p = f_max.
    pub fn basic(m_channels: usize, m_slices: usize, f_max: f64) -> Result<Self, MwcError> {
        if m_slices % 2 == 0 {
            return Err(MwcError::EvenSliceCount(m_slices));
        }
        let l = (m_slices - 1) / 2;
        Self::new(m_channels, m_slices, f_max / l as f64, f_max)
    }

    /// Slice index bound: slices run l = -L ..= L.
    pub fn big_l(&self) -> usize {
        (self.m_slices - 1) / 2
    }

    /// Grid rate of the emulation, M * f_p.
    pub fn f_nyq(&self) -> f64 {
        self.m_slices as f64 * self.f_p
    }

    /// Mixing period in seconds.
    pub fn period(&self) -> f64 {
        1.0 / self.f_p
    }

    /// Samples per mixing period on the grid (= M).
    pub fn samples_per_period(&self) -> usize {
        self.m_slices
    }

    fn check_grid(&self, w: &Waveform) -> Result<usize, MwcError> {
        let need = self.f_nyq();
        if (w.grid.f_nyq - need).abs() > 1e-6 * need {
            return Err(MwcError::GridMismatch { need, got: w.grid.f_nyq });
        }
        let n = w.samples.len();
        let m = self.m_slices;
        if n % m != 0 || (n / m) % 2 != 0 || n / m == 0 {
            return Err(MwcError::BadRecordLength { n, m });
        }
        Ok(n / m)
    }
}

/// The m periodic ±1 mixing patterns, M sign values per period.
#[derive(Debug, Clone)]
pub struct PeriodicWaveformBank {
    pub patterns: Vec<Vec<i8>>,
}

impl PeriodicWaveformBank {
    pub fn new(patterns: Vec<Vec<i8>>) -> Self {
        assert!(patterns.iter().all(|p| p.iter().all(|&v| v == 1 || v == -1)));
        Self { patterns }
    }

    /// i.i.d. uniform ±1 patterns under a seed.
    pub fn random(m_channels: usize, m_slices: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patterns = (0..m_channels)
            .map(|_| (0..m_slices).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
            .collect();
        Self { patterns }
    }

    pub fn m_channels(&self) -> usize {
        self.patterns.len()
    }
}

/// Continuous Fourier-series coefficients of one piecewise-constant
/// T-periodic sign pattern, c_l for |l| <= L, in closed form.
pub fn fourier_coeffs(pattern: &[i8], m_slices: usize, big_l: usize) -> Result<Vec<Complex64>, MwcError> {
    if pattern.len() != m_slices {
        return Err(MwcError::BadPatternLength { need: m_slices, got: pattern.len() });
    }
    let m = m_slices as f64;
    let mut out = Vec::with_capacity(2 * big_l + 1);
    for l in -(big_l as i64)..=(big_l as i64) {
        let mut c = Complex64::new(0.0, 0.0);
        if l == 0 {
            let s: f64 = pattern.iter().map(|&p| p as f64).sum();
            c = Complex64::new(s / m, 0.0);
        } else {
            // (1/T) * integral of e^{-j2pi l t/T} over interval k is
            // (e^{-j2pi l k/M} - e^{-j2pi l (k+1)/M}) / (j 2 pi l)
            let j2pl = Complex64::new(0.0, 2.0 * PI * l as f64);
            for (k, &p) in pattern.iter().enumerate() {
                let e0 = (-j2pl * (k as f64 / m)).exp();
                let e1 = (-j2pl * ((k + 1) as f64 / m)).exp();
                c += p as f64 * (e0 - e1) / j2pl;
            }
        }
        out.push(c);
    }
    Ok(out)
}

/// Sensing matrix of the grid emulation, columns indexed l = -L ..= L.
/// Row i holds the Fourier coefficients of pattern i as they act on the
/// grid: c_{i,l} = (1/M) * sum_k p_i[k] e^{+j 2 pi l k / M}. With one sign
/// interval per Nyquist sample these aliased coefficients make
/// y_i[n] = sum_l c_{i,l} z_l[n] an exact identity.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    pub big_l: usize,
    pub entries: DMatrix<Complex64>,
}

impl SensingMatrix {
    pub fn from_bank(bank: &PeriodicWaveformBank, m_slices: usize) -> SensingMatrix {
        let big_l = (m_slices - 1) / 2;
        let m = m_slices as f64;
        let rows = bank.patterns.len();
        let entries = DMatrix::from_fn(rows, m_slices, |i, col| {
            let l = col as i64 - big_l as i64;
            let mut c = Complex64::new(0.0, 0.0);
            for (k, &p) in bank.patterns[i].iter().enumerate() {
                c += p as f64 * Complex64::from_polar(1.0, 2.0 * PI * l as f64 * k as f64 / m);
            }
            c / m
        });
        SensingMatrix { big_l, entries }
    }

    pub fn m_channels(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m_slices(&self) -> usize {
        self.entries.ncols()
    }

    pub fn col_for_slice(&self, l: i64) -> usize {
        (l + self.big_l as i64) as usize
    }

    pub fn slice_for_col(&self, col: usize) -> i64 {
        col as i64 - self.big_l as i64
    }

    /// Partner column under conjugation (slice -l), used for joint ±l
    /// selection on real-signal-symmetric inputs.
    pub fn conjugate_pairs(&self) -> Vec<usize> {
        (0..self.m_slices()).map(|c| self.m_slices() - 1 - c).collect()
    }

    /// Numerical row rank; full row rank is expected for random ±1 banks.
    pub fn row_rank(&self) -> usize {
        let svd = self.entries.clone().svd(false, false);
        let smax = svd.singular_values.max();
        svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count()
    }
}

/// The spectrum-slice sequences z_l[n], l = -L ..= L, at rate f_s.
#[derive(Debug, Clone)]
pub struct SliceBank {
    pub big_l: usize,
    pub f_s: f64,
    /// Index 0 holds slice -L.
    pub slices: Vec<Vec<Complex64>>,
    pub active: Vec<bool>,
}

impl SliceBank {
    pub fn slice(&self, l: i64) -> &[Complex64] {
        &self.slices[(l + self.big_l as i64) as usize]
    }

    pub fn len(&self) -> usize {
        self.slices.first().map_or(0, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_active(&self, l: i64) -> bool {
        self.active[(l + self.big_l as i64) as usize]
    }

    pub fn set_active(&mut self, l: i64, v: bool) {
        self.active[(l + self.big_l as i64) as usize] = v;
    }

    pub fn active_slice_indices(&self) -> Vec<i64> {
        (0..self.slices.len())
            .filter(|&i| self.active[i])
            .map(|i| i as i64 - self.big_l as i64)
            .collect()
    }

    fn flag_by_energy(&mut self) {
        let energies: Vec<f64> = self
            .slices
            .iter()
            .map(|s| s.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .collect();
        let max = energies.iter().cloned().fold(0.0, f64::max);
        for (flag, e) in self.active.iter_mut().zip(&energies) {
            *flag = max > 0.0 && *e > 1e-12 * max;
        }
    }
}

/// Length-P baseband spectrum around `center` (in bins of the length-n
/// record spectrum), with the shared boundary bins at ±P/2 halved; the two
/// halves fold into the single Nyquist slot of the output array.
fn extract_baseband(spec: &[Complex64], center: i64, p: usize) -> Vec<Complex64> {
    let n = spec.len();
    let mut out = vec![Complex64::new(0.0, 0.0); p];
    let half = (p / 2) as i64;
    for j in -(half - 1)..=(half - 1) {
        out[spectral::bin_index(j, p)] = spec[spectral::bin_index(center + j, n)];
    }
    out[p / 2] = 0.5
        * (spec[spectral::bin_index(center - half, n)] + spec[spectral::bin_index(center + half, n)]);
    out
}

/// Ground-truth slice decomposition: demodulate each slice to the origin,
/// brick-wall lowpass to one slice width, decimate to f_s. Implemented in
/// the frequency domain over the whole record, bin-exact under the pinned
/// grid rate.
pub fn nyquist_slices(w: &Waveform, cfg: &MwcConfig) -> Result<SliceBank, MwcError> {
    let p = cfg.check_grid(w)?;
    let mut spec = spectral::fft_real(&w.samples);
    let scale = 1.0 / cfg.m_slices as f64;
    for v in spec.iter_mut() {
        *v *= scale;
    }
    let big_l = cfg.big_l();
    let mut slices = Vec::with_capacity(cfg.m_slices);
    for l in -(big_l as i64)..=(big_l as i64) {
        let mut z = extract_baseband(&spec, l * p as i64, p);
        spectral::ifft(&mut z);
        slices.push(z);
    }
    let mut bank = SliceBank {
        big_l,
        f_s: cfg.f_s,
        slices,
        active: vec![false; cfg.m_slices],
    };
    bank.flag_by_energy();
    Ok(bank)
}

/// Channel-bank sampler: pointwise multiply by each periodic sign waveform
/// on the grid, brick-wall lowpass to one slice width, decimate to f_s.
pub fn mwc_sample(
    w: &Waveform,
    bank: &PeriodicWaveformBank,
    cfg: &MwcConfig,
) -> Result<Vec<Vec<Complex64>>, MwcError> {
    let p = cfg.check_grid(w)?;
    for pat in &bank.patterns {
        if pat.len() != cfg.m_slices {
            return Err(MwcError::BadPatternLength { need: cfg.m_slices, got: pat.len() });
        }
    }
    let m = cfg.m_slices;
    let scale = 1.0 / m as f64;
    let mut out = Vec::with_capacity(bank.patterns.len());
    for pat in &bank.patterns {
        let mut mixed: Vec<Complex64> = w
            .samples
            .iter()
            .enumerate()
            .map(|(k, &v)| Complex64::new(v * pat[k % m] as f64 * scale, 0.0))
            .collect();
        spectral::fft(&mut mixed);
        let mut y = extract_baseband(&mixed, 0, p);
        spectral::ifft(&mut y);
        out.push(y);
    }
    Ok(out)
}
