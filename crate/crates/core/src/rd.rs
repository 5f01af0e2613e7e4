//! Random demodulator front-end: chipping at rate W, integrate-and-dump at
//! rate R, and the exact discrete sensing map the nominal regime induces.
//!
//! The continuous front-end is emulated by trapezoidal integration on an
//! oversampled grid, which keeps off-grid (mismatched) inputs physical
//! instead of forcing them through the nominal discrete model.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use thiserror::Error;

use crate::signal::Waveform;

#[derive(Debug, Error)]
pub enum RdError {
    #[error("W/R = {0} is not an integer; the nominal-regime constructor requires one")]
    NonIntegerRatio(f64),
    #[error("chip record holds {got} chips, need {need}")]
    TooFewChips { need: usize, got: usize },
    #[error("record covers {got:.6} s, need {need:.6} s")]
    RecordTooShort { need: f64, got: f64 },
    #[error("grid rate {got} Hz is not osf*W = {need} Hz")]
    GridMismatch { need: f64, got: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Nominal sampler parameters. The synchronized regime has W = Q*delta,
/// R = N_R*delta and integer W/R; off-nominal values are permitted and
/// reported by [`RdConfig::is_nominal`].
#[derive(Debug, Clone, Copy)]
pub struct RdConfig {
    /// Chipping rate in Hz.
    pub w_hz: f64,
    /// Output (integrate-and-dump) rate in Hz.
    pub r_hz: f64,
    /// Tone-grid length the recovery assumes.
    pub q: usize,
    /// Tone spacing the recovery assumes, in Hz.
    pub delta: f64,
    /// Number of output samples.
    pub n_r: usize,
}

impl RdConfig {
    pub fn ratio(&self) -> Result<usize, RdError> {
        let r = self.w_hz / self.r_hz;
        if (r - r.round()).abs() > 1e-9 || r < 1.0 {
            return Err(RdError::NonIntegerRatio(r));
        }
        Ok(r.round() as usize)
    }

    /// True when the synchronization equalities hold.
    pub fn is_nominal(&self) -> bool {
        let w_ok = (self.w_hz - self.q as f64 * self.delta).abs() <= 1e-9 * self.w_hz;
        let r_ok = (self.r_hz - self.n_r as f64 * self.delta).abs() <= 1e-9 * self.r_hz;
        w_ok && r_ok && self.ratio().is_ok()
    }

    /// Record duration the sampler consumes, N_R / R seconds.
    pub fn duration(&self) -> f64 {
        self.n_r as f64 / self.r_hz
    }
}

/// ±1 chipping sequence, one value per 1/W interval.
#[derive(Debug, Clone)]
pub struct ChipSequence {
    pub chips: Vec<i8>,
}

impl ChipSequence {
    pub fn new(chips: Vec<i8>) -> Self {
        assert!(chips.iter().all(|&c| c == 1 || c == -1));
        Self { chips }
    }

    /// i.i.d. uniform ±1 chips under a seed.
    pub fn random(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { chips: (0..len).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect() }
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn negated(&self) -> Self {
        Self { chips: self.chips.iter().map(|&c| -c).collect() }
    }
}

/// Sensing matrix of the nominal regime: rows integrate W/R consecutive
/// chip-signed Nyquist intervals, so row supports are disjoint.
pub fn build_rd_matrix(chips: &ChipSequence, w_hz: f64, r_hz: f64) -> Result<DMatrix<f64>, RdError> {
    let ratio = w_hz / r_hz;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
        return Err(RdError::NonIntegerRatio(ratio));
    }
    let ratio = ratio.round() as usize;
    let n_rows = chips.len() / ratio;
    if n_rows == 0 {
        return Err(RdError::TooFewChips { need: ratio, got: chips.len() });
    }
    let n_cols = n_rows * ratio;
    let mut phi = DMatrix::<f64>::zeros(n_rows, n_cols);
    for row in 0..n_rows {
        for j in 0..ratio {
            let k = row * ratio + j;
            phi[(row, k)] = chips.chips[k] as f64;
        }
    }
    Ok(phi)
}

/// Unitary Q x Q DFT basis with columns ordered by ascending tone index,
/// -(Q/2-1) .. Q/2. Column c of the matrix is the tone e^{j2π w n / Q}/√Q.
#[derive(Debug, Clone)]
pub struct DftBasis {
    pub q: usize,
    pub matrix: DMatrix<Complex64>,
}

impl DftBasis {
    pub fn tone_for_col(&self, col: usize) -> i64 {
        col as i64 - (self.q as i64 / 2 - 1)
    }

    pub fn col_for_tone(&self, tone: i64) -> usize {
        (tone + self.q as i64 / 2 - 1) as usize
    }

    /// Partner column under conjugation; self-paired at tones 0 and Q/2.
    pub fn conjugate_pairs(&self) -> Vec<usize> {
        (0..self.q)
            .map(|c| {
                let tone = self.tone_for_col(c);
                if tone == self.q as i64 / 2 {
                    c
                } else {
                    self.col_for_tone(-tone)
                }
            })
            .collect()
    }
}

pub fn build_dft_basis(q: usize) -> DftBasis {
    assert!(q >= 2 && q % 2 == 0, "tone grid length must be even");
    let scale = 1.0 / (q as f64).sqrt();
    let half = q as i64 / 2;
    let matrix = DMatrix::from_fn(q, q, |n, c| {
        let tone = c as i64 - (half - 1);
        Complex64::from_polar(scale, 2.0 * PI * tone as f64 * n as f64 / q as f64)
    });
    DftBasis { q, matrix }
}

/// The combined map from model coefficients to measurements, Phi * F,
/// computed window-by-window (Phi rows have W/R nonzeros).
pub fn rd_model_matrix(phi: &DMatrix<f64>, basis: &DftBasis) -> DMatrix<Complex64> {
    assert_eq!(phi.ncols(), basis.q, "chip record length and tone grid disagree");
    let ratio = phi.ncols() / phi.nrows();
    let mut a = DMatrix::<Complex64>::zeros(phi.nrows(), basis.q);
    for row in 0..phi.nrows() {
        for c in 0..basis.q {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..ratio {
                let k = row * ratio + j;
                let sign = phi[(row, k)];
                if sign != 0.0 {
                    acc += sign * basis.matrix[(k, c)];
                }
            }
            a[(row, c)] = acc;
        }
    }
    a
}

/// Per-tone gain of the exact integrate-and-dump map: a tone of amplitude
/// a_w contributes the model coefficient a_w * tone_gain(q, w_hz, w).
/// The phase is the half-interval offset; the magnitude is the chip-width
/// averaging rolloff.
pub fn tone_gain(q: usize, w_hz: f64, tone: i64) -> Complex64 {
    let x = tone as f64 / q as f64;
    let sinc = if x.abs() < 1e-15 { 1.0 } else { (PI * x).sin() / (PI * x) };
    Complex64::from_polar((q as f64).sqrt() / w_hz * sinc, PI * x)
}

/// Emulate the continuous front-end: multiply by the chip waveform and
/// integrate over each 1/R window by trapezoidal quadrature on the
/// oversampled grid (`osf` samples per chip; grid rate must be osf*W).
pub fn rd_sample_analog(
    w: &Waveform,
    chips: &ChipSequence,
    cfg: &RdConfig,
    osf: usize,
) -> Result<Vec<f64>, RdError> {
    if osf < 8 {
        return Err(RdError::Invalid(format!("oversampling factor {osf} below 8")));
    }
    let need_rate = osf as f64 * cfg.w_hz;
    if (w.grid.f_nyq - need_rate).abs() > 1e-6 * need_rate {
        return Err(RdError::GridMismatch { need: need_rate, got: w.grid.f_nyq });
    }
    let ratio = cfg.ratio()?;
    let chips_needed = cfg.n_r * ratio;
    if chips.len() < chips_needed {
        return Err(RdError::TooFewChips { need: chips_needed, got: chips.len() });
    }
    let samples_needed = chips_needed * osf;
    if w.samples.len() < samples_needed {
        return Err(RdError::RecordTooShort {
            need: cfg.duration(),
            got: w.samples.len() as f64 / w.grid.f_nyq,
        });
    }
    let dt = w.grid.dt();
    let n = w.samples.len();
    // trapezoid over one chip; the right endpoint of the final chip wraps,
    // exact for records spanning whole periods of the tone grid
    let chip_integral = |k: usize| -> f64 {
        let start = k * osf;
        let mut acc = 0.5 * (w.samples[start] + w.samples[(start + osf) % n]);
        for i in 1..osf {
            acc += w.samples[start + i];
        }
        acc * dt
    };
    let mut y = Vec::with_capacity(cfg.n_r);
    for row in 0..cfg.n_r {
        let mut acc = 0.0;
        for j in 0..ratio {
            let k = row * ratio + j;
            acc += chips.chips[k] as f64 * chip_integral(k);
        }
        y.push(acc);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{gen_multitone, NyquistGrid, ToneSpec};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    #[test]
    fn rd_matrix_small_example() {
        let chips = ChipSequence::new(vec![1, -1, 1, 1]);
        let phi = build_rd_matrix(&chips, 4.0, 2.0).unwrap();
        let expect = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(phi, expect);
    }

    #[test]
    fn rd_matrix_all_positive_chips() {
        let chips = ChipSequence::new(vec![1; 12]);
        let phi = build_rd_matrix(&chips, 12.0, 3.0).unwrap();
        for row in 0..phi.nrows() {
            let s: f64 = phi.row(row).iter().sum();
            assert_eq!(s, 4.0);
        }
    }

    #[test]
    fn rd_matrix_toy_scale_sparsity() {
        let chips = ChipSequence::random(1000, 3);
        let phi = build_rd_matrix(&chips, 1000.0, 100.0).unwrap();
        assert_eq!(phi.shape(), (100, 1000));
        for row in 0..100 {
            let nz: Vec<f64> = phi.row(row).iter().cloned().filter(|&v| v != 0.0).collect();
            assert_eq!(nz.len(), 10);
            assert!(nz.iter().all(|&v| v == 1.0 || v == -1.0));
        }
    }

    #[test]
    fn rd_matrix_rejects_non_integer_ratio() {
        let chips = ChipSequence::random(30, 0);
        assert!(build_rd_matrix(&chips, 10.0, 3.0).is_err());
    }

    #[test]
    fn rd_rows_are_disjoint() {
        let chips = ChipSequence::random(64, 9);
        let phi = build_rd_matrix(&chips, 64.0, 8.0).unwrap();
        let gram = &phi * phi.transpose();
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let want = if i == j { 8.0 } else { 0.0 };
                assert_eq!(gram[(i, j)], want);
            }
        }
    }

    #[test]
    fn dft_basis_q2() {
        let b = build_dft_basis(2);
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(b.matrix[(0, 0)].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(b.matrix[(1, 0)].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(b.matrix[(0, 1)].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(b.matrix[(1, 1)].re, -s, epsilon = 1e-12);
    }

    #[test]
    fn dft_basis_unitary() {
        for q in [2usize, 4, 16, 64] {
            let b = build_dft_basis(q);
            let gram = b.matrix.adjoint() * &b.matrix;
            let mut max_err: f64 = 0.0;
            for i in 0..q {
                for j in 0..q {
                    let want = if i == j { 1.0 } else { 0.0 };
                    max_err = max_err.max((gram[(i, j)] - Complex64::new(want, 0.0)).norm());
                }
            }
            assert!(max_err < 1e-12, "unitarity error {max_err} at q={q}");
        }
    }

    #[test]
    fn dft_basis_dc_column_constant() {
        let b = build_dft_basis(4);
        let col = b.col_for_tone(0);
        for n in 0..4 {
            assert_abs_diff_eq!(b.matrix[(n, col)].re, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(b.matrix[(n, col)].im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn analog_sampler_zero_in_zero_out() {
        let cfg = RdConfig { w_hz: 64.0, r_hz: 8.0, q: 64, delta: 1.0, n_r: 8 };
        let chips = ChipSequence::random(64, 1);
        let grid = NyquistGrid::new(16.0 * 64.0, 16 * 64);
        let w = Waveform::zero(grid);
        let y = rd_sample_analog(&w, &chips, &cfg, 16).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    /// Exact continuous measurement of a tone record through the chip/window
    /// structure; independent closed-form oracle for the sampler.
    fn exact_measurements(
        spec: &ToneSpec,
        chips: &ChipSequence,
        cfg: &RdConfig,
    ) -> Vec<f64> {
        let ratio = cfg.ratio().unwrap();
        let mut y = vec![0.0; cfg.n_r];
        for (row, yv) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..ratio {
                let k = row * ratio + j;
                for (&tone, &a) in spec.support.iter().zip(&spec.amplitudes) {
                    let f = tone as f64 * spec.delta;
                    let (t0, t1) = (k as f64 / cfg.w_hz, (k + 1) as f64 / cfg.w_hz);
                    let integral = if f.abs() < 1e-12 {
                        Complex64::new(t1 - t0, 0.0)
                    } else {
                        let j2pf = Complex64::new(0.0, 2.0 * PI * f);
                        ((j2pf * t1).exp() - (j2pf * t0).exp()) / j2pf
                    };
                    acc += chips.chips[k] as f64 * a * integral;
                }
            }
            *yv = acc.re;
        }
        y
    }

    fn quadrature_error(osf: usize, seed: u64) -> f64 {
        let (w_hz, r_hz, q) = (1000.0, 100.0, 1000usize);
        let cfg = RdConfig { w_hz, r_hz, q, delta: 1.0, n_r: 100 };
        let spec = ToneSpec::random_real(q, 1.0, 30, seed).unwrap();
        let grid = NyquistGrid::new(osf as f64 * w_hz, osf * q);
        let w = gen_multitone(&spec, &grid).unwrap();
        let chips = ChipSequence::random(1000, seed + 1000);
        let y = rd_sample_analog(&w, &chips, &cfg, osf).unwrap();
        let y_exact = exact_measurements(&spec, &chips, &cfg);
        let num: f64 = y.iter().zip(&y_exact).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = y_exact.iter().map(|v| v * v).sum();
        (num / den).sqrt()
    }

    #[test]
    fn analog_sampler_matches_discrete_map() {
        // the exact map equals Phi * F * diag(tone_gain) applied to the amplitudes
        let (w_hz, r_hz, q) = (1000.0, 100.0, 1000usize);
        let cfg = RdConfig { w_hz, r_hz, q, delta: 1.0, n_r: 100 };
        let spec = ToneSpec::random_real(q, 1.0, 30, 5).unwrap();
        let chips = ChipSequence::random(1000, 77);
        let phi = build_rd_matrix(&chips, w_hz, r_hz).unwrap();
        let basis = build_dft_basis(q);
        let a = rd_model_matrix(&phi, &basis);
        let mut s = DVector::<Complex64>::zeros(q);
        for (&tone, &amp) in spec.support.iter().zip(&spec.amplitudes) {
            s[basis.col_for_tone(tone)] = amp * tone_gain(q, w_hz, tone);
        }
        let y_model = &a * s;
        let y_exact = exact_measurements(&spec, &chips, &cfg);
        for (m, e) in y_model.iter().zip(&y_exact) {
            assert_abs_diff_eq!(m.re, *e, epsilon = 1e-12);
            assert_abs_diff_eq!(m.im, 0.0, epsilon = 1e-12);
        }
        // quadrature-limited agreement of the analog emulation
        let err16 = quadrature_error(16, 5);
        assert!(err16 < 3e-3, "osf=16 error {err16}");
        let err32 = quadrature_error(32, 5);
        assert!(err32 < 1e-3, "osf=32 error {err32}");
    }

    #[test]
    fn quadrature_error_decreases_with_osf() {
        let errs: Vec<f64> = [8, 16, 32, 64].iter().map(|&o| quadrature_error(o, 2)).collect();
        for pair in errs.windows(2) {
            assert!(pair[1] < pair[0], "not monotone: {errs:?}");
        }
    }

    #[test]
    fn mismatched_spacing_deviates_from_nominal_map() {
        let (w_hz, r_hz, q) = (1000.0, 100.0, 1000usize);
        let cfg = RdConfig { w_hz, r_hz, q, delta: 1.0, n_r: 100 };
        let osf = 16usize;
        let chips = ChipSequence::random(1000, 4);
        let phi = build_rd_matrix(&chips, w_hz, r_hz).unwrap();
        let basis = build_dft_basis(q);
        let a = rd_model_matrix(&phi, &basis);
        // same support/amplitudes, tones displaced by 5 ppm
        let spec_on = ToneSpec::random_real(q, 1.0, 30, 8).unwrap();
        let spec_off = ToneSpec {
            delta: 1.0 + 5e-6,
            ..spec_on.clone()
        };
        let grid = NyquistGrid::new(osf as f64 * w_hz, osf * q);
        let w = gen_multitone(&spec_off, &grid).unwrap();
        let y = rd_sample_analog(&w, &chips, &cfg, osf).unwrap();
        let mut s = DVector::<Complex64>::zeros(q);
        for (&tone, &amp) in spec_on.support.iter().zip(&spec_on.amplitudes) {
            s[basis.col_for_tone(tone)] = amp * tone_gain(q, w_hz, tone);
        }
        let y_nominal = &a * s;
        let num: f64 = y
            .iter()
            .zip(y_nominal.iter())
            .map(|(a, b)| (a - b.re) * (a - b.re))
            .sum();
        let den: f64 = y.iter().map(|v| v * v).sum();
        let rel = (num / den).sqrt();
        assert!(rel > 1e-4, "mismatch path should deviate, got {rel}");
    }

    #[test]
    fn chip_flip_negates_measurements() {
        let cfg = RdConfig { w_hz: 128.0, r_hz: 16.0, q: 128, delta: 1.0, n_r: 16 };
        let spec = ToneSpec::random_real(128, 1.0, 6, 1).unwrap();
        let grid = NyquistGrid::new(16.0 * 128.0, 16 * 128);
        let w = gen_multitone(&spec, &grid).unwrap();
        let chips = ChipSequence::random(128, 2);
        let y = rd_sample_analog(&w, &chips, &cfg, 16).unwrap();
        let y_neg = rd_sample_analog(&w, &chips.negated(), &cfg, 16).unwrap();
        for (a, b) in y.iter().zip(&y_neg) {
            assert_abs_diff_eq!(*a, -b, epsilon = 1e-15);
        }
    }

    #[test]
    fn short_record_rejected() {
        let cfg = RdConfig { w_hz: 64.0, r_hz: 8.0, q: 64, delta: 1.0, n_r: 8 };
        let chips = ChipSequence::random(64, 1);
        let grid = NyquistGrid::new(16.0 * 64.0, 16 * 32);
        let w = Waveform::zero(grid);
        assert!(matches!(
            rd_sample_analog(&w, &chips, &cfg, 16),
            Err(RdError::RecordTooShort { .. })
        ));
    }
}
