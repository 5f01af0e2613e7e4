//! Bit decisions on recovered information streams: a decision-directed
//! phase tracker over the complex baseband, symbol timing by search, and
//! best-alignment synchronization against the known transmitted stream.

use num_complex::Complex64;

use super::InfoSignals;

/// Result of decoding one stream against a reference.
#[derive(Debug, Clone)]
pub struct BpskDecode {
    /// Hard decisions, one per reference symbol (after alignment).
    pub bits: Vec<i8>,
    /// Bit errors over the scored region.
    pub errors: usize,
    /// Number of scored bits.
    pub compared: usize,
    /// Symbol shift chosen by the alignment search.
    pub shift: i64,
    /// Polarity chosen by the alignment search (+1 or -1).
    pub polarity: i8,
}

const TIMING_STEPS: usize = 16;
const MAX_SHIFT: i64 = 4;
const PREAMBLE: usize = 16;

fn interp(seq: &[f64], t: f64) -> Option<f64> {
    if t < 0.0 {
        return None;
    }
    let i = t.floor() as usize;
    if i + 1 >= seq.len() {
        return None;
    }
    let frac = t - i as f64;
    Some(seq[i] * (1.0 - frac) + seq[i + 1] * frac)
}

/// Track and slice one timing hypothesis; returns soft symbol decisions.
fn track(info: &InfoSignals, t_sym: f64, t0: f64, n_sym: usize, reference: &[i8]) -> Vec<f64> {
    let sps = info.rate * t_sym;
    let sample = |k: usize| -> Option<Complex64> {
        let t = t0 + k as f64 * sps;
        Some(Complex64::new(interp(&info.i_seq, t)?, interp(&info.q_seq, t)?))
    };
    // preamble-aided initial phase over the first known symbols
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &r) in reference.iter().take(PREAMBLE).enumerate() {
        if r == 0 {
            continue;
        }
        if let Some(u) = sample(k) {
            acc += u * r as f64;
        }
    }
    let mut theta = acc.arg();
    let mut freq = 0.0f64;
    let (mu1, mu2) = (0.2, 0.02);
    let mut out = Vec::with_capacity(n_sym);
    for k in 0..n_sym {
        let Some(u) = sample(k) else {
            out.push(0.0);
            continue;
        };
        let y = u * Complex64::from_polar(1.0, -theta);
        let d = if y.re >= 0.0 { 1.0 } else { -1.0 };
        let mag = y.norm().max(1e-12);
        let err = y.im * d / mag;
        freq += mu2 * err;
        theta += mu1 * err + freq;
        out.push(y.re);
    }
    out
}

/// Decode a BPSK stream and score it against the reference bits over
/// `score`: the timing phase, a small symbol shift, and the polarity are
/// all chosen by best alignment.
pub fn decode_bpsk(
    info: &InfoSignals,
    t_sym: f64,
    reference: &[i8],
    score: std::ops::Range<usize>,
) -> BpskDecode {
    let n_sym = reference.len();
    let sps = info.rate * t_sym;
    let mut best: Option<BpskDecode> = None;
    for step in 0..TIMING_STEPS {
        let t0 = sps * step as f64 / TIMING_STEPS as f64;
        let soft = track(info, t_sym, t0, n_sym + MAX_SHIFT as usize, reference);
        for shift in -MAX_SHIFT..=MAX_SHIFT {
            for polarity in [1i8, -1] {
                let mut errors = 0usize;
                let mut compared = 0usize;
                for k in score.clone() {
                    let idx = k as i64 + shift;
                    if idx < 0 || idx as usize >= soft.len() || reference[k] == 0 {
                        continue;
                    }
                    let d = if soft[idx as usize] >= 0.0 { polarity } else { -polarity };
                    compared += 1;
                    if d != reference[k] {
                        errors += 1;
                    }
                }
                if compared == 0 {
                    continue;
                }
                if best.as_ref().map_or(true, |b| errors < b.errors) {
                    let bits: Vec<i8> = (0..n_sym)
                        .map(|k| {
                            let idx = k as i64 + shift;
                            if idx < 0 || idx as usize >= soft.len() {
                                0
                            } else if soft[idx as usize] >= 0.0 {
                                polarity
                            } else {
                                -polarity
                            }
                        })
                        .collect();
                    best = Some(BpskDecode { bits, errors, compared, shift, polarity });
                }
            }
        }
    }
    best.unwrap_or(BpskDecode { bits: vec![0; n_sym], errors: n_sym, compared: n_sym, shift: 0, polarity: 1 })
}
