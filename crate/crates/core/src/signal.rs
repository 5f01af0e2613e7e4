//! Test-signal generation on a Nyquist-rate grid: sparse multitone records,
//! quadrature-modulated transmissions with raised-cosine pulses, white noise
//! at a prescribed SNR, and random multiband scenes.
//!
//! Every generator is a pure function of its inputs and seed. Real-valued
//! output is enforced through conjugate-symmetric tone supports; analytic
//! (complex) signals are not modeled.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("tone off grid: index {0} outside the {1}-point tone grid")]
    ToneOffGrid(i64, usize),
    #[error("tone support is not conjugate symmetric")]
    NotConjugateSymmetric,
    #[error("grid rate {got} Hz below required {need} Hz")]
    GridTooSlow { need: f64, got: f64 },
    #[error("carrier {0} Hz puts the band outside [0, f_nyq/2]")]
    BandOutOfRange(f64),
    #[error("zero-energy waveform cannot be scaled to a finite SNR")]
    ZeroEnergy,
    #[error("cannot pack {n} disjoint bands of width {b} Hz below {f_max} Hz")]
    InfeasiblePacking { n: usize, b: f64, f_max: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Uniform sampling grid at the emulated Nyquist rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NyquistGrid {
    /// Sample rate in Hz.
    pub f_nyq: f64,
    /// Record length in samples.
    pub n_samples: usize,
    /// Start time in seconds.
    pub t0: f64,
}

impl NyquistGrid {
    pub fn new(f_nyq: f64, n_samples: usize) -> Self {
        assert!(f_nyq > 0.0 && n_samples >= 1);
        Self { f_nyq, n_samples, t0: 0.0 }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.f_nyq
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.f_nyq
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.f_nyq
    }
}

/// Real samples attached to a grid.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub grid: NyquistGrid,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn new(grid: NyquistGrid, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), grid.n_samples);
        debug_assert!(samples.iter().all(|v| v.is_finite()));
        Self { grid, samples }
    }

    pub fn zero(grid: NyquistGrid) -> Self {
        Self { grid, samples: vec![0.0; grid.n_samples] }
    }

    /// Mean square over the record.
    pub fn power(&self) -> f64 {
        crate::spectral::power(&self.samples)
    }

    /// Time-domain energy, sample sum times the sample period.
    pub fn energy(&self) -> f64 {
        crate::spectral::energy(&self.samples, self.grid.dt())
    }

    pub fn scaled(&self, a: f64) -> Waveform {
        Waveform::new(self.grid, self.samples.iter().map(|&v| a * v).collect())
    }

    /// Samplewise sum; panics if the grids differ.
    pub fn add(&self, other: &Waveform) -> Waveform {
        assert_eq!(self.grid, other.grid, "waveforms on different grids");
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + b)
            .collect();
        Waveform::new(self.grid, samples)
    }
}

/// Sparse tone set on the grid {0, ±Δ, ..., ±(Q/2-1)Δ, (Q/2)Δ}.
#[derive(Debug, Clone)]
pub struct ToneSpec {
    /// Tone-grid length (even).
    pub q: usize,
    /// Tone spacing in Hz.
    pub delta: f64,
    /// Active tone indices, sorted, each in [-(Q/2-1), Q/2].
    pub support: Vec<i64>,
    /// One complex amplitude per active tone.
    pub amplitudes: Vec<Complex64>,
}

impl ToneSpec {
    pub fn new(q: usize, delta: f64, support: Vec<i64>, amplitudes: Vec<Complex64>) -> Result<Self, SignalError> {
        if q % 2 != 0 || q == 0 {
            return Err(SignalError::Invalid(format!("tone grid length {q} must be even and positive")));
        }
        if support.len() != amplitudes.len() {
            return Err(SignalError::Invalid("support and amplitude lengths differ".into()));
        }
        let spec = Self { q, delta, support, amplitudes };
        spec.check_on_grid()?;
        Ok(spec)
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    fn check_on_grid(&self) -> Result<(), SignalError> {
        let half = self.q as i64 / 2;
        for &w in &self.support {
            if w < -(half - 1) || w > half {
                return Err(SignalError::ToneOffGrid(w, self.q));
            }
        }
        Ok(())
    }

    fn amplitude_of(&self, idx: i64) -> Option<Complex64> {
        self.support.iter().position(|&w| w == idx).map(|i| self.amplitudes[i])
    }

    /// A real-valued record requires a_{-w} = conj(a_w), and real amplitudes
    /// on the self-paired tones 0 and Q/2.
    pub fn check_conjugate_symmetric(&self) -> Result<(), SignalError> {
        let half = self.q as i64 / 2;
        for (&w, &a) in self.support.iter().zip(&self.amplitudes) {
            if w == 0 || w == half {
                if a.im.abs() > 1e-12 * (1.0 + a.norm()) {
                    return Err(SignalError::NotConjugateSymmetric);
                }
                continue;
            }
            match self.amplitude_of(-w) {
                Some(b) if (b - a.conj()).norm() <= 1e-12 * (1.0 + a.norm()) => {}
                _ => return Err(SignalError::NotConjugateSymmetric),
            }
        }
        Ok(())
    }

    /// K tones (K even) at distinct paired locations drawn uniformly from the
    /// interior of the grid, with circularly-symmetric unit-variance normal
    /// amplitudes; conjugate pairing makes the record real.
    pub fn random_real(q: usize, delta: f64, k: usize, seed: u64) -> Result<Self, SignalError> {
        if k % 2 != 0 {
            return Err(SignalError::Invalid("tone count must be even for a real record".into()));
        }
        let half = q as i64 / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<i64> = Vec::with_capacity(k / 2);
        while picked.len() < k / 2 {
            let w = rng.random_range(1..half);
            if !picked.contains(&w) {
                picked.push(w);
            }
        }
        let mut support = Vec::with_capacity(k);
        let mut amplitudes = Vec::with_capacity(k);
        for &w in &picked {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let a = Complex64::new(re, im) / 2f64.sqrt();
            support.push(w);
            amplitudes.push(a);
            support.push(-w);
            amplitudes.push(a.conj());
        }
        let mut order: Vec<usize> = (0..support.len()).collect();
        order.sort_by_key(|&i| support[i]);
        let support = order.iter().map(|&i| support[i]).collect();
        let amplitudes = order.iter().map(|&i| amplitudes[i]).collect();
        ToneSpec::new(q, delta, support, amplitudes)
    }
}

/// Evaluate the tone sum on the grid. The support must be conjugate
/// symmetric; the result is exactly real and exact to rounding.
pub fn gen_multitone(spec: &ToneSpec, grid: &NyquistGrid) -> Result<Waveform, SignalError> {
    spec.check_on_grid()?;
    spec.check_conjugate_symmetric()?;
    let need = spec.q as f64 * spec.delta;
    if grid.f_nyq < need - 1e-9 {
        return Err(SignalError::GridTooSlow { need, got: grid.f_nyq });
    }
    let mut samples = vec![0.0; grid.n_samples];
    for (&w, &a) in spec.support.iter().zip(&spec.amplitudes) {
        let freq = w as f64 * spec.delta;
        for (n, s) in samples.iter_mut().enumerate() {
            let phase = 2.0 * PI * freq * grid.time(n);
            // sum of a*e^{j phase} over a conjugate-symmetric support is real
            *s += a.re * phase.cos() - a.im * phase.sin();
        }
    }
    Ok(Waveform::new(*grid, samples))
}

/// Modulation of a quadrature transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    Bpsk,
    Qpsk,
}

/// One digitally-modulated transmission: carrier, symbol energy and rate,
/// raised-cosine shaping, and the ±1 information streams.
#[derive(Debug, Clone)]
pub struct QuadratureBand {
    pub f_c: f64,
    pub e_s: f64,
    pub t_sym: f64,
    pub rolloff: f64,
    pub i_bits: Vec<i8>,
    pub q_bits: Vec<i8>,
    pub modulation: Modulation,
}

impl QuadratureBand {
    pub fn new(
        f_c: f64,
        e_s: f64,
        t_sym: f64,
        rolloff: f64,
        i_bits: Vec<i8>,
        q_bits: Vec<i8>,
        modulation: Modulation,
    ) -> Result<Self, SignalError> {
        if !(0.0..=1.0).contains(&rolloff) {
            return Err(SignalError::Invalid(format!("rolloff {rolloff} outside [0,1]")));
        }
        if t_sym <= 0.0 || e_s < 0.0 || f_c < 0.0 {
            return Err(SignalError::Invalid("nonpositive symbol duration, energy, or carrier".into()));
        }
        if i_bits.len() != q_bits.len() {
            return Err(SignalError::Invalid("I and Q streams differ in length".into()));
        }
        if modulation == Modulation::Bpsk && q_bits.iter().any(|&b| b != 0) {
            return Err(SignalError::Invalid("BPSK requires an all-zero Q stream".into()));
        }
        Ok(Self { f_c, e_s, t_sym, rolloff, i_bits, q_bits, modulation })
    }

    /// Occupied bandwidth (1+rolloff)/T_sym in Hz.
    pub fn bandwidth(&self) -> f64 {
        (1.0 + self.rolloff) / self.t_sym
    }

    pub fn n_symbols(&self) -> usize {
        self.i_bits.len()
    }
}

/// Raised-cosine pulse truncated to ±`PULSE_HALF_SYMBOLS` symbol periods,
/// scaled to unit energy over the truncation window.
pub const PULSE_HALF_SYMBOLS: usize = 8;

fn raised_cosine_raw(t: f64, t_sym: f64, rolloff: f64) -> f64 {
    let x = t / t_sym;
    let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
    if rolloff == 0.0 {
        return sinc;
    }
    let d = 2.0 * rolloff * x;
    if (d.abs() - 1.0).abs() < 1e-8 {
        // removable singularity at |t| = T/(2*rolloff)
        return (PI / 4.0) * {
            let y = 1.0 / (2.0 * rolloff);
            if y.abs() < 1e-12 { 1.0 } else { (PI * y).sin() / (PI * y) }
        };
    }
    sinc * (PI * rolloff * x).cos() / (1.0 - d * d)
}

/// Unit-energy raised-cosine pulse evaluator for a given symbol duration.
#[derive(Debug, Clone)]
pub struct RaisedCosine {
    t_sym: f64,
    rolloff: f64,
    scale: f64,
}

impl RaisedCosine {
    pub fn new(t_sym: f64, rolloff: f64) -> Self {
        // energy of the truncated pulse by composite trapezoid, 512 points/symbol
        let steps_per_sym = 512usize;
        let n = 2 * PULSE_HALF_SYMBOLS * steps_per_sym;
        let dt = t_sym / steps_per_sym as f64;
        let at = |i: usize| {
            let t = -(PULSE_HALF_SYMBOLS as f64) * t_sym + i as f64 * dt;
            let v = raised_cosine_raw(t, t_sym, rolloff);
            v * v
        };
        let mut e = 0.5 * (at(0) + at(n));
        for i in 1..n {
            e += at(i);
        }
        e *= dt;
        Self { t_sym, rolloff, scale: 1.0 / e.sqrt() }
    }

    pub fn half_width(&self) -> f64 {
        PULSE_HALF_SYMBOLS as f64 * self.t_sym
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t.abs() > self.half_width() {
            0.0
        } else {
            self.scale * raised_cosine_raw(t, self.t_sym, self.rolloff)
        }
    }
}

/// Synthesize one quadrature transmission on the grid. Symbol k peaks at
/// t = k*T_sym relative to the record start.
pub fn gen_quadrature_band(band: &QuadratureBand, grid: &NyquistGrid) -> Result<Waveform, SignalError> {
    let bw = band.bandwidth();
    let need = 2.0 * (band.f_c + bw / 2.0);
    if grid.f_nyq < need - 1e-9 {
        return Err(SignalError::GridTooSlow { need, got: grid.f_nyq });
    }
    if band.f_c > 0.0 && band.f_c - bw / 2.0 < 0.0 {
        return Err(SignalError::BandOutOfRange(band.f_c));
    }
    let pulse = RaisedCosine::new(band.t_sym, band.rolloff);
    let n = grid.n_samples;
    let mut i_wave = vec![0.0; n];
    let mut q_wave = vec![0.0; n];
    let half = pulse.half_width();
    let any_q = band.q_bits.iter().any(|&b| b != 0);
    for (k, (&ib, &qb)) in band.i_bits.iter().zip(&band.q_bits).enumerate() {
        let center = k as f64 * band.t_sym;
        if ib == 0 && qb == 0 {
            continue;
        }
        let lo = (((center - half) - grid.t0) * grid.f_nyq).ceil().max(0.0) as usize;
        let hi = ((((center + half) - grid.t0) * grid.f_nyq).floor() as usize).min(n.saturating_sub(1));
        for idx in lo..=hi.min(n - 1) {
            let p = pulse.eval(grid.time(idx) - grid.t0 - center);
            if ib != 0 {
                i_wave[idx] += ib as f64 * p;
            }
            if qb != 0 {
                q_wave[idx] += qb as f64 * p;
            }
        }
    }
    let amp = (2.0 * band.e_s / band.t_sym).sqrt();
    let mut samples = vec![0.0; n];
    for idx in 0..n {
        let t = grid.time(idx);
        let phase = 2.0 * PI * band.f_c * t;
        let mut v = i_wave[idx] * phase.cos();
        if any_q {
            v += q_wave[idx] * phase.sin();
        }
        samples[idx] = amp * v;
    }
    Ok(Waveform::new(*grid, samples))
}

/// Add white Gaussian noise so that 10*log10(P_signal/P_noise) = `snr_db`,
/// with powers measured over the full record and full Nyquist band.
pub fn add_awgn(w: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform, SignalError> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(w.clone());
    }
    let p_sig = w.power();
    if p_sig <= 0.0 {
        return Err(SignalError::ZeroEnergy);
    }
    let sigma = (p_sig / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = w
        .samples
        .iter()
        .map(|&v| {
            let n: f64 = rng.sample(StandardNormal);
            v + sigma * n
        })
        .collect();
    Ok(Waveform::new(w.grid, samples))
}

/// Maximal multiband model: at most N bands (counting both spectral images)
/// of individual width at most B, anywhere below f_max.
#[derive(Debug, Clone, Copy)]
pub struct MultibandSpec {
    pub n_bands: usize,
    pub b_hz: f64,
    pub f_max: f64,
}

impl MultibandSpec {
    pub fn new(n_bands: usize, b_hz: f64, f_max: f64) -> Result<Self, SignalError> {
        if n_bands % 2 != 0 {
            return Err(SignalError::Invalid("band count includes spectral images and must be even".into()));
        }
        if b_hz <= 0.0 || n_bands as f64 * b_hz > 2.0 * f_max {
            return Err(SignalError::Invalid("bands do not fit below f_max".into()));
        }
        Ok(Self { n_bands, b_hz, f_max })
    }
}

/// Symbol-level parameters shared by the transmissions of one scene.
#[derive(Debug, Clone)]
pub struct SceneParams {
    pub t_sym: f64,
    pub rolloff: f64,
    /// Symbol energies assigned round-robin to the transmissions.
    pub energies: Vec<f64>,
    pub modulation: Modulation,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            t_sym: 1.0 / 30e6,
            rolloff: 0.3,
            energies: vec![1.0, 2.0, 3.0],
            modulation: Modulation::Qpsk,
        }
    }
}

fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// Draw `n_tx` transmissions with disjoint B-wide allocations placed
/// uniformly at random below f_max, carriers centered in their allocations.
pub fn draw_multiband_scene(
    spec: &MultibandSpec,
    n_tx: usize,
    n_symbols: usize,
    params: &SceneParams,
    seed: u64,
) -> Result<Vec<QuadratureBand>, SignalError> {
    if n_tx != spec.n_bands / 2 {
        return Err(SignalError::Invalid(format!(
            "scene draws n_bands/2 = {} transmissions, asked for {}",
            spec.n_bands / 2,
            n_tx
        )));
    }
    if n_tx == 0 {
        return Ok(Vec::new());
    }
    let bw = (1.0 + params.rolloff) / params.t_sym;
    if bw > spec.b_hz + 1e-6 {
        return Err(SignalError::Invalid(format!(
            "occupied bandwidth {bw} Hz exceeds the band-width budget {} Hz",
            spec.b_hz
        )));
    }
    let slack = spec.f_max - n_tx as f64 * spec.b_hz;
    if slack < 0.0 {
        return Err(SignalError::InfeasiblePacking { n: n_tx, b: spec.b_hz, f_max: spec.f_max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets: Vec<f64> = (0..n_tx).map(|_| rng.random::<f64>() * slack).collect();
    offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut bands = Vec::with_capacity(n_tx);
    for (i, off) in offsets.into_iter().enumerate() {
        let f_c = off + (i as f64 + 0.5) * spec.b_hz;
        let e_s = params.energies[i % params.energies.len()];
        let i_bits = random_bits(&mut rng, n_symbols);
        let q_bits = match params.modulation {
            Modulation::Qpsk => random_bits(&mut rng, n_symbols),
            Modulation::Bpsk => vec![0; n_symbols],
        };
        bands.push(QuadratureBand::new(
            f_c,
            e_s,
            params.t_sym,
            params.rolloff,
            i_bits,
            q_bits,
            params.modulation,
        )?);
    }
    Ok(bands)
}

/// Sum of the scene's transmissions on the grid.
pub fn synth_scene(bands: &[QuadratureBand], grid: &NyquistGrid) -> Result<Waveform, SignalError> {
    let mut w = Waveform::zero(*grid);
    for band in bands {
        w = w.add(&gen_quadrature_band(band, grid)?);
    }
    Ok(w)
}
