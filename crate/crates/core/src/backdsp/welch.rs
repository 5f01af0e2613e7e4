//! Averaged-periodogram spectral density estimation for band-edge search.

use crate::spectral;
use num_complex::Complex64;

use super::{BackDspError, BackDspParams};

/// One-sided Welch PSD estimate with its bin spacing.
#[derive(Debug, Clone)]
pub struct WelchPsd {
    /// Density values for bins 0 ..= window/2.
    pub psd: Vec<f64>,
    /// Bin spacing in Hz.
    pub bin_hz: f64,
    /// Window length used.
    pub window_len: usize,
    /// Number of averaged segments.
    pub segments: usize,
}

/// Window length that resolves min(B_min, Delta_min) over a band of width
/// `b_hz`, rounded up to the next power of two.
pub fn welch_window_len(params: &BackDspParams, b_hz: f64) -> usize {
    let f_res = params.b_min.min(params.delta_min);
    let need = (2.0 * b_hz / f_res).ceil() as usize;
    need.next_power_of_two().max(4)
}

/// Welch estimate of a real sequence at `rate` Hz: Hamming window,
/// overlapping segments, density scaling, one-sided bins.
pub fn welch_psd(
    x: &[f64],
    rate: f64,
    params: &BackDspParams,
    b_hz: f64,
) -> Result<WelchPsd, BackDspError> {
    let w = welch_window_len(params, b_hz);
    if x.len() < w {
        return Err(BackDspError::RecordTooShort { need: w, got: x.len() });
    }
    let window = spectral::hamming(w);
    let u: f64 = window.iter().map(|v| v * v).sum();
    let stride = ((w as f64) * (1.0 - params.welch_overlap)).round().max(1.0) as usize;
    let segments = (x.len() - w) / stride + 1;
    let mut acc = vec![0.0f64; w / 2 + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); w];
    for s in 0..segments {
        let start = s * stride;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(x[start + i] * window[i], 0.0);
        }
        spectral::fft(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let mut p = buf[k].norm_sqr();
            if k != 0 && k != w / 2 {
                p *= 2.0; // fold the negative frequencies
            }
            *a += p;
        }
    }
    let scale = 1.0 / (rate * u * segments as f64);
    for a in acc.iter_mut() {
        *a *= scale;
    }
    Ok(WelchPsd { psd: acc, bin_hz: rate / w as f64, window_len: w, segments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn params() -> BackDspParams {
        BackDspParams::for_band_width(50e6)
    }

    #[test]
    fn window_length_from_resolution() {
        // resolution B/8 needs at least 16 taps, already a power of two
        assert_eq!(welch_window_len(&params(), 50e6), 16);
        let mut p = params();
        p.b_min = 3e6;
        p.delta_min = 3e6;
        assert_eq!(welch_window_len(&p, 50e6), 64); // ceil(100/3)=34 -> 64
    }

    #[test]
    fn white_noise_is_flat_within_3db() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 16 * 8 * 80; // plenty of segments
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let est = welch_psd(&x, 100e6, &params(), 50e6).unwrap();
        assert!(est.segments >= 64);
        let mean = est.psd.iter().sum::<f64>() / est.psd.len() as f64;
        for (k, &p) in est.psd.iter().enumerate() {
            let db = 10.0 * (p / mean).log10();
            assert!(db.abs() < 3.0, "bin {k}: {db} dB from mean");
        }
    }

    #[test]
    fn pure_tone_dominates_by_20db() {
        let n = 4096;
        let rate = 100e6;
        let f0 = 31.25e6;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64 / rate).cos())
            .collect();
        let est = welch_psd(&x, rate, &params(), 50e6).unwrap();
        let mut sorted = est.psd.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        let peak = sorted[sorted.len() - 1];
        assert!(10.0 * (peak / median.max(1e-300)).log10() >= 20.0);
        let peak_bin = est.psd.iter().position(|&p| p == peak).unwrap();
        assert_eq!(peak_bin, (f0 / est.bin_hz).round() as usize);
    }

    #[test]
    fn density_scaling_matches_reference() {
        // frozen from scipy.signal.welch(x, fs=8.0, window=np.hamming(16),
        // noverlap=8, detrend=False) with x[i] = sin(2*pi*i/8)
        let x: Vec<f64> = (0..64)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 8.0).sin())
            .collect();
        let mut p = params();
        p.b_min = 0.5;
        p.delta_min = 0.5;
        let est = welch_psd(&x, 8.0, &p, 4.0).unwrap();
        assert_eq!(est.window_len, 16);
        let golden = [
            9.7172648499700172e-05,
            1.5273051491497400e-01,
            6.9709222356789236e-01,
            1.5016353463860810e-01,
            3.0793607518026081e-04,
            3.6927417900823735e-05,
            9.9242076444765594e-06,
            4.2957988110415017e-06,
            1.5766906959500619e-06,
        ];
        assert_eq!(est.psd.len(), golden.len());
        for (k, (&got, &want)) in est.psd.iter().zip(&golden).enumerate() {
            assert!((got - want).abs() <= 1e-12 * (1.0 + want), "bin {k}: {got} vs {want}");
        }
    }

    #[test]
    fn short_record_rejected() {
        let x = vec![0.0; 8];
        assert!(welch_psd(&x, 100e6, &params(), 50e6).is_err());
    }
}
