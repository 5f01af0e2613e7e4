//! Linear-phase FIR design: Parks-McClellan equiripple design on a dense
//! frequency grid with Remez exchange, the standard order estimate from
//! ripple and transition specs, and a windowed-sinc fallback/lowpass.
//!
//! Frequencies are in cycles per sample, band edges inside [0, 0.5].
//! Only odd-length (type I) filters are produced; every consumer here
//! wants symmetric taps with integer group delay.

use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FirError {
    #[error("filter length {0} must be odd and at least 3")]
    BadLength(usize),
    #[error("band edges must be ordered and disjoint inside [0, 0.5]")]
    BadBands,
    #[error("equiripple exchange failed to converge")]
    NoConvergence,
}

/// One approximation band: desired gain and error weight over [lo, hi].
#[derive(Debug, Clone, Copy)]
pub struct BandSpec {
    pub lo: f64,
    pub hi: f64,
    pub desired: f64,
    pub weight: f64,
}

/// Standard order estimate for an equiripple design with passband ripple
/// `delta_p`, stopband ripple `delta_s`, and normalized transition width
/// `transition` (cycles/sample). Returns an odd tap count.
pub fn estimate_order(delta_p: f64, delta_s: f64, transition: f64) -> usize {
    let n = (-10.0 * (delta_p * delta_s).log10() - 13.0) / (14.6 * transition.max(1e-6)) + 1.0;
    let n = n.ceil().max(3.0) as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

const GRID_DENSITY: usize = 16;
const MAX_EXCHANGE_ITERS: usize = 60;

struct DesignGrid {
    freq: Vec<f64>,
    desired: Vec<f64>,
    weight: Vec<f64>,
    /// Index of the first grid point of each band (for edge handling).
    band_starts: Vec<usize>,
}

fn build_grid(bands: &[BandSpec], n_funcs: usize) -> DesignGrid {
    let step = 0.5 / (GRID_DENSITY * n_funcs) as f64;
    let mut grid = DesignGrid {
        freq: Vec::new(),
        desired: Vec::new(),
        weight: Vec::new(),
        band_starts: Vec::new(),
    };
    for b in bands {
        grid.band_starts.push(grid.freq.len());
        let count = (((b.hi - b.lo) / step).round() as usize).max(1) + 1;
        for i in 0..count {
            let f = b.lo + (b.hi - b.lo) * i as f64 / (count - 1).max(1) as f64;
            grid.freq.push(f);
            grid.desired.push(b.desired);
            grid.weight.push(b.weight);
        }
    }
    grid
}

/// Barycentric weights over the extremal abscissae, computed in log
/// magnitude to survive long products.
fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = Vec::with_capacity(n);
    for k in 0..n {
        let mut log_sum = 0.0f64;
        let mut sign = 1.0f64;
        for j in 0..n {
            if j == k {
                continue;
            }
            let d = x[k] - x[j];
            if d < 0.0 {
                sign = -sign;
            }
            log_sum += d.abs().max(1e-300).ln();
        }
        w.push(sign * (-log_sum).exp());
    }
    w
}

/// Equiripple linear-phase design by Remez exchange over the cosine basis.
pub fn remez(n_taps: usize, bands: &[BandSpec]) -> Result<Vec<f64>, FirError> {
    if n_taps < 3 || n_taps % 2 == 0 {
        return Err(FirError::BadLength(n_taps));
    }
    let mut sorted = bands.to_vec();
    sorted.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
    for b in &sorted {
        if !(0.0..=0.5).contains(&b.lo)
            || !(0.0..=0.5).contains(&b.hi)
            || b.lo >= b.hi
            || b.weight <= 0.0
        {
            return Err(FirError::BadBands);
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].hi >= pair[1].lo {
            return Err(FirError::BadBands);
        }
    }
    let r = (n_taps - 1) / 2;
    let n_funcs = r + 1;
    let n_ext = r + 2;
    let grid = build_grid(&sorted, n_funcs);
    let ngrid = grid.freq.len();
    if ngrid < n_ext {
        return Err(FirError::BadBands);
    }
    let x_grid: Vec<f64> = grid.freq.iter().map(|&f| (2.0 * PI * f).cos()).collect();

    // initial extremals: uniform over the grid
    let mut ext: Vec<usize> = (0..n_ext).map(|i| i * (ngrid - 1) / (n_ext - 1)).collect();
    ext.dedup();
    while ext.len() < n_ext {
        let missing = (0..ngrid).find(|i| !ext.contains(i)).ok_or(FirError::BadBands)?;
        ext.push(missing);
        ext.sort_unstable();
    }

    let compute_delta = |ext: &[usize], xe: &[f64], wb: &[f64]| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, &i) in ext.iter().enumerate() {
            num += wb[k] * grid.desired[i];
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            den += wb[k] * s / grid.weight[i];
        }
        let _ = xe;
        num / den
    };

    for _iter in 0..MAX_EXCHANGE_ITERS {
        let xe: Vec<f64> = ext.iter().map(|&i| x_grid[i]).collect();
        let wb = barycentric_weights(&xe);
        let delta = compute_delta(&ext, &xe, &wb);
        // interpolate A through the first r+1 extremals at the leveled values
        let m = n_funcs;
        let xi = xe[..m].to_vec();
        let wi = barycentric_weights(&xi);
        let ci: Vec<f64> = (0..m)
            .map(|k| {
                let i = ext[k];
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                grid.desired[i] - s * delta / grid.weight[i]
            })
            .collect();
        let eval_a = |x: f64| -> f64 {
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..m {
                let d = x - xi[k];
                if d.abs() < 1e-14 {
                    return ci[k];
                }
                let t = wi[k] / d;
                num += t * ci[k];
                den += t;
            }
            num / den
        };
        // weighted error over the whole grid
        let err: Vec<f64> = (0..ngrid)
            .map(|i| grid.weight[i] * (eval_a(x_grid[i]) - grid.desired[i]))
            .collect();
        // candidate extremals: local maxima of |err| within each band
        // (band edges included), merged with the current extremals, which
        // still carry an alternating ±delta pattern under the new error
        // and so guarantee enough alternations survive selection
        let mut cand: Vec<usize> = Vec::new();
        for (bi, &start) in grid.band_starts.iter().enumerate() {
            let end = grid.band_starts.get(bi + 1).copied().unwrap_or(ngrid);
            for i in start..end {
                let left_ok = i == start || err[i].abs() >= err[i - 1].abs();
                let right_ok = i + 1 == end || err[i].abs() >= err[i + 1].abs();
                if left_ok && right_ok && err[i].abs() > 1e-16 {
                    cand.push(i);
                }
            }
        }
        cand.extend(ext.iter().cloned());
        cand.sort_unstable();
        cand.dedup();
        // enforce sign alternation, keeping the larger of same-sign runs
        let mut alt: Vec<usize> = Vec::new();
        for &i in &cand {
            if let Some(&prev) = alt.last() {
                if (err[prev] >= 0.0) == (err[i] >= 0.0) {
                    if err[i].abs() > err[prev].abs() {
                        *alt.last_mut().unwrap() = i;
                    }
                    continue;
                }
            }
            alt.push(i);
        }
        // trim to n_ext by dropping the weaker endpoint
        while alt.len() > n_ext {
            if err[*alt.first().unwrap()].abs() < err[*alt.last().unwrap()].abs() {
                alt.remove(0);
            } else {
                alt.pop();
            }
        }
        if alt.len() < n_ext {
            // degenerate exchange; keep the previous extremal set
            break;
        }
        ext = alt;
        let emax = ext.iter().map(|&i| err[i].abs()).fold(0.0f64, f64::max);
        let emin = ext.iter().map(|&i| err[i].abs()).fold(f64::INFINITY, f64::min);
        if std::env::var("REMEZ_DEBUG").is_ok() {
            let per_band: Vec<usize> = grid
                .band_starts
                .iter()
                .enumerate()
                .map(|(bi, &s)| {
                    let e = grid.band_starts.get(bi + 1).copied().unwrap_or(ngrid);
                    ext.iter().filter(|&&i| i >= s && i < e).count()
                })
                .collect();
            eprintln!(
                "iter {_iter}: delta {delta:.4e} emax {emax:.4e} emin {emin:.4e} ext/band {per_band:?}"
            );
        }
        if emax > 0.0 && (emax - emin) / emax < 1e-6 {
            break;
        }
    }

    // final interpolant through the converged extremals
    let xe: Vec<f64> = ext.iter().map(|&i| x_grid[i]).collect();
    let wb = barycentric_weights(&xe);
    let delta = compute_delta(&ext, &xe, &wb);
    let m = n_funcs;
    let xi = xe[..m].to_vec();
    let wi = barycentric_weights(&xi);
    let ci: Vec<f64> = (0..m)
        .map(|k| {
            let i = ext[k];
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            grid.desired[i] - s * delta / grid.weight[i]
        })
        .collect();
    let eval_a = |x: f64| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..m {
            let d = x - xi[k];
            if d.abs() < 1e-14 {
                return ci[k];
            }
            let t = wi[k] / d;
            num += t * ci[k];
            den += t;
        }
        num / den
    };
    // inverse cosine transform of A sampled at n_taps points
    let n = n_taps;
    let a_samples: Vec<f64> =
        (0..=r).map(|i| eval_a((2.0 * PI * i as f64 / n as f64).cos())).collect();
    let mut taps = vec![0.0; n];
    for (k, tap) in taps.iter_mut().enumerate() {
        let mut acc = a_samples[0];
        for (i, &a) in a_samples.iter().enumerate().skip(1) {
            acc += 2.0 * a * (2.0 * PI * i as f64 * (k as f64 - r as f64) / n as f64).cos();
        }
        *tap = acc / n as f64;
    }
    if taps.iter().any(|t| !t.is_finite()) {
        return Err(FirError::NoConvergence);
    }
    Ok(taps)
}

/// Hamming-windowed sinc lowpass with unit DC gain; odd length.
pub fn windowed_lowpass(n_taps: usize, cutoff: f64) -> Vec<f64> {
    assert!(n_taps % 2 == 1, "windowed lowpass wants an odd length");
    let half = (n_taps - 1) as f64 / 2.0;
    let win = crate::spectral::hamming(n_taps);
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let x = i as f64 - half;
            let s = if x.abs() < 1e-12 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * x).sin() / (PI * x)
            };
            s * win[i]
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= gain;
    }
    taps
}

/// Apply a linear-phase FIR with its group delay removed: the output is
/// time-aligned with the input and has the same length (edges see zeros).
pub fn apply_fir(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let delay = (taps.len() - 1) / 2;
    let n = x.len();
    let mut y = vec![0.0; n];
    for (i, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &t) in taps.iter().enumerate() {
            let idx = i as isize + delay as isize - j as isize;
            if idx >= 0 && (idx as usize) < n {
                acc += t * x[idx as usize];
            }
        }
        *out = acc;
    }
    y
}

/// Complex frequency response of a tap set at `f` cycles/sample.
pub fn freq_response(taps: &[f64], f: f64) -> num_complex::Complex64 {
    let mut acc = num_complex::Complex64::new(0.0, 0.0);
    for (k, &t) in taps.iter().enumerate() {
        acc += t * num_complex::Complex64::from_polar(1.0, -2.0 * PI * f * k as f64);
    }
    acc
}
