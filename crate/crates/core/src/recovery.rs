//! Sparse recovery for both front-ends: greedy simultaneous orthogonal
//! matching pursuit over measurement frames (the continuous-to-finite
//! reduction), its single-vector specialization, pseudo-inverse slice
//! recovery on a detected support, and signal reconstruction.
//!
//! Selection correlates residuals against norm-scaled columns; on
//! real-signal-symmetric inputs columns are selected jointly with their
//! conjugate partners. Tie-breaking on equal scores is lowest index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::mwc::{MwcConfig, SensingMatrix, SliceBank};
use crate::signal::{NyquistGrid, SignalError, ToneSpec, Waveform};
use crate::spectral;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("frame needs {need} samples per sequence, have {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("selected columns are rank deficient (condition number {cond:.3e})")]
    RankDeficient { cond: f64 },
    #[error("support index {0} outside the matrix column range")]
    BadSupportIndex(i64),
    #[error("{0}")]
    Signal(#[from] SignalError),
    #[error("{0}")]
    Invalid(String),
}

/// Sorted set of active column labels: slice indices for the channel bank,
/// tone indices for the demodulator.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportSet {
    pub indices: Vec<i64>,
}

impl SupportSet {
    pub fn new(mut indices: Vec<i64>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: i64) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    pub fn contains_all(&self, other: &SupportSet) -> bool {
        other.indices.iter().all(|&i| self.contains(i))
    }
}

/// Measurement frame assembled from consecutive channel snapshots.
#[derive(Debug, Clone)]
pub struct FrameMatrix {
    pub v: DMatrix<Complex64>,
}

/// How the frame is formed from the snapshot block.
#[derive(Debug, Clone, Copy)]
pub enum FrameVariant {
    /// Columns are the snapshots y[n], n = offset .. offset+r.
    Stack,
    /// Noise-robust variant: stack the snapshots, then keep an orthonormal
    /// basis of the dominant column space (left singular vectors above
    /// `rel_tol` times the largest singular value).
    Orthonormal { rel_tol: f64 },
}

/// Build the frame from `r` consecutive snapshots starting at `offset`.
pub fn build_frame(
    samples: &[Vec<Complex64>],
    r: usize,
    offset: usize,
    variant: FrameVariant,
) -> Result<FrameMatrix, RecoveryError> {
    let m = samples.len();
    if m == 0 || r == 0 {
        return Err(RecoveryError::Invalid("empty snapshot request".into()));
    }
    let need = offset + r;
    for seq in samples {
        if seq.len() < need {
            return Err(RecoveryError::TooFewSamples { need, got: seq.len() });
        }
    }
    let stacked = DMatrix::from_fn(m, r, |i, j| samples[i][offset + j]);
    let v = match variant {
        FrameVariant::Stack => stacked,
        FrameVariant::Orthonormal { rel_tol } => {
            let svd = stacked.clone().svd(true, false);
            let u = svd.u.as_ref().expect("left singular vectors requested");
            let smax = svd.singular_values.max();
            let keep: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&i| smax > 0.0 && svd.singular_values[i] > rel_tol * smax)
                .collect();
            if keep.is_empty() {
                DMatrix::zeros(m, 1)
            } else {
                DMatrix::from_fn(m, keep.len(), |i, j| u[(i, keep[j])])
            }
        }
    };
    Ok(FrameMatrix { v })
}

/// Options for the greedy solvers.
#[derive(Debug, Clone)]
pub struct GreedyOptions {
    /// Stop when the residual Frobenius norm falls below this fraction of
    /// the input norm.
    pub tol_rel: f64,
    /// Joint conjugate-pair selection: `pairs[c]` is the partner column of
    /// column c (equal to c for self-paired columns). None disables it.
    pub pairs: Option<Vec<usize>>,
    /// After the greedy sweep, up to this many swap-refinement passes:
    /// each selected atom (or pair) is tested against every unselected
    /// candidate and replaced when that strictly shrinks the residual.
    /// Costs one least-squares solve per candidate; disable for large
    /// single-vector problems.
    pub refine_passes: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self { tol_rel: 1e-6, pairs: None, refine_passes: 2 }
    }
}

/// Outcome of a greedy run over matrix columns.
#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    /// Selected columns in selection order.
    pub columns: Vec<usize>,
    /// Final coefficients, one row per selected column.
    pub coefficients: DMatrix<Complex64>,
    /// Residual Frobenius norm.
    pub residual_norm: f64,
    /// Columns pruned because they made the selection rank deficient.
    pub pruned: Vec<usize>,
    /// Residual norm after each iteration (non-increasing).
    pub residual_history: Vec<f64>,
}

fn ls_on_columns(
    a: &DMatrix<Complex64>,
    cols: &[usize],
    v: &DMatrix<Complex64>,
) -> Option<(DMatrix<Complex64>, DMatrix<Complex64>, f64)> {
    let sub = a.select_columns(cols.iter());
    let svd = sub.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin <= 1e-12 * smax {
        return None;
    }
    let x = svd.solve(v, 1e-14 * smax).ok()?;
    let resid = v - &sub * &x;
    let rnorm = resid.norm();
    Some((x, resid, rnorm))
}

/// Greedy pursuit over the columns of `a` against the (multi-column)
/// target `v`. Each step picks the column, or conjugate pair, with the
/// largest norm-scaled correlation energy, then re-solves least squares on
/// the accumulated support.
pub fn greedy_pursuit(
    a: &DMatrix<Complex64>,
    v: &DMatrix<Complex64>,
    k_max: usize,
    opts: &GreedyOptions,
) -> GreedyOutcome {
    let ncols = a.ncols();
    let v_norm = v.norm();
    let mut outcome = GreedyOutcome {
        columns: Vec::new(),
        coefficients: DMatrix::zeros(0, v.ncols()),
        residual_norm: v_norm,
        pruned: Vec::new(),
        residual_history: Vec::new(),
    };
    if v_norm == 0.0 || k_max == 0 {
        outcome.residual_norm = 0.0;
        return outcome;
    }
    if let Some(pairs) = &opts.pairs {
        assert_eq!(pairs.len(), ncols, "pair map must cover every column");
    }
    let col_norms_sq: Vec<f64> = (0..ncols).map(|c| a.column(c).norm_squared()).collect();
    let adjoint = a.adjoint();
    let mut residual = v.clone();
    let mut excluded = vec![false; ncols];
    // orthonormal basis of the selected columns; correlations are scored
    // against each column's norm deflated by this subspace, so a step picks
    // the column with the largest residual-energy reduction
    let mut basis: Vec<DVector<Complex64>> = Vec::new();
    loop {
        if outcome.columns.len() >= k_max || outcome.residual_norm <= opts.tol_rel * v_norm {
            break;
        }
        let corr = &adjoint * &residual;
        let deflated: Vec<f64> = (0..ncols)
            .map(|c| {
                let mut d = col_norms_sq[c];
                for q in &basis {
                    d -= a.column(c).dotc(q).norm_sqr();
                }
                d.max(0.0)
            })
            .collect();
        let score = |c: usize| -> f64 {
            if excluded[c] || deflated[c] <= 1e-12 * col_norms_sq[c] || col_norms_sq[c] <= 0.0 {
                return 0.0;
            }
            corr.row(c).iter().map(|x| x.norm_sqr()).sum::<f64>() / deflated[c]
        };
        let mut best: Option<(usize, f64)> = None;
        for c in 0..ncols {
            if excluded[c] {
                continue;
            }
            let s = match &opts.pairs {
                Some(pairs) => {
                    let p = pairs[c];
                    // score each pair once, keyed at its lower column
                    if p < c {
                        continue;
                    }
                    if p == c {
                        score(c)
                    } else {
                        score(c) + score(p)
                    }
                }
                None => score(c),
            };
            if s > best.map_or(0.0, |(_, b)| b) {
                best = Some((c, s));
            }
        }
        let Some((chosen, _)) = best else { break };
        let mut new_cols = vec![chosen];
        if let Some(pairs) = &opts.pairs {
            let p = pairs[chosen];
            if p != chosen {
                if outcome.columns.len() + 2 > k_max {
                    break;
                }
                new_cols.push(p);
            }
        }
        let mut trial = outcome.columns.clone();
        trial.extend(&new_cols);
        match ls_on_columns(a, &trial, v) {
            Some((x, resid, rnorm)) => {
                outcome.columns = trial;
                outcome.coefficients = x;
                residual = resid;
                outcome.residual_norm = rnorm;
                outcome.residual_history.push(rnorm);
                for c in new_cols {
                    excluded[c] = true;
                    // extend the orthonormal basis by the new column
                    let mut q: DVector<Complex64> = a.column(c).into();
                    for b in &basis {
                        let proj = q.dotc(b);
                        q -= b * proj;
                    }
                    let nrm = q.norm();
                    if nrm > 1e-12 {
                        basis.push(q / Complex64::new(nrm, 0.0));
                    }
                }
            }
            None => {
                for c in new_cols {
                    excluded[c] = true;
                    outcome.pruned.push(c);
                }
            }
        }
    }
    refine_by_swaps(a, v, opts, &mut outcome);
    outcome
}

/// Selection units: conjugate pairs when a pair map is active, single
/// columns otherwise. Each unit is keyed by its lower column.
fn units(ncols: usize, pairs: Option<&Vec<usize>>) -> Vec<Vec<usize>> {
    match pairs {
        Some(map) => (0..ncols)
            .filter(|&c| map[c] >= c)
            .map(|c| if map[c] == c { vec![c] } else { vec![c, map[c]] })
            .collect(),
        None => (0..ncols).map(|c| vec![c]).collect(),
    }
}

fn refine_by_swaps(
    a: &DMatrix<Complex64>,
    v: &DMatrix<Complex64>,
    opts: &GreedyOptions,
    outcome: &mut GreedyOutcome,
) {
    let v_norm = v.norm();
    if opts.refine_passes == 0
        || outcome.columns.is_empty()
        || outcome.residual_norm <= opts.tol_rel * v_norm
    {
        return;
    }
    let all_units = units(a.ncols(), opts.pairs.as_ref());
    // group the selected columns into units
    let mut selected: Vec<Vec<usize>> = Vec::new();
    let mut seen = vec![false; a.ncols()];
    for &c in &outcome.columns {
        if seen[c] {
            continue;
        }
        let unit = all_units
            .iter()
            .find(|u| u.contains(&c))
            .cloned()
            .unwrap_or_else(|| vec![c]);
        for &x in &unit {
            seen[x] = true;
        }
        selected.push(unit);
    }
    for _ in 0..opts.refine_passes {
        let mut improved = false;
        for slot in 0..selected.len() {
            let in_use: Vec<usize> = selected
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != slot)
                .flat_map(|(_, u)| u.iter().cloned())
                .collect();
            let mut best: Option<(Vec<usize>, DMatrix<Complex64>, DMatrix<Complex64>, f64)> = None;
            for cand in &all_units {
                if cand.len() != selected[slot].len() || cand.iter().any(|c| in_use.contains(c)) {
                    continue;
                }
                let mut trial = in_use.clone();
                trial.extend(cand.iter());
                if let Some((x, resid, rnorm)) = ls_on_columns(a, &trial, v) {
                    if rnorm < outcome.residual_norm * (1.0 - 1e-9)
                        && best.as_ref().map_or(true, |(_, _, _, b)| rnorm < *b)
                    {
                        best = Some((trial, x, resid, rnorm));
                    }
                }
            }
            if let Some((trial, x, _resid, rnorm)) = best {
                selected[slot] = trial[in_use.len()..].to_vec();
                outcome.columns = trial;
                outcome.coefficients = x;
                outcome.residual_norm = rnorm;
                outcome.residual_history.push(rnorm);
                improved = true;
                if rnorm <= opts.tol_rel * v_norm {
                    return;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Joint-sparse support recovery result with solver diagnostics.
#[derive(Debug, Clone)]
pub struct SompResult {
    pub support: SupportSet,
    pub residual_norm: f64,
    /// Slice indices pruned for rank deficiency; nonempty is a warning.
    pub pruned: Vec<i64>,
}

/// Recover the active-slice set from a measurement frame.
pub fn somp_solve(
    c: &SensingMatrix,
    v: &FrameMatrix,
    k_max: usize,
    opts: &GreedyOptions,
) -> SompResult {
    let outcome = greedy_pursuit(&c.entries, &v.v, k_max, opts);
    SompResult {
        support: SupportSet::new(outcome.columns.iter().map(|&col| c.slice_for_col(col)).collect()),
        residual_norm: outcome.residual_norm,
        pruned: outcome.pruned.iter().map(|&col| c.slice_for_col(col)).collect(),
    }
}

/// Single-vector sparse solution with labeled support.
#[derive(Debug, Clone)]
pub struct SparseSolution {
    pub support: SupportSet,
    /// One coefficient per entry of `support`, in support (sorted) order.
    pub coefficients: Vec<Complex64>,
    pub residual_norm: f64,
    pub pruned: Vec<i64>,
}

/// Single-vector specialization of the greedy pursuit. `labels[c]` names
/// column c in the returned support (tone index, slice index, or just c).
pub fn omp_solve(
    a: &DMatrix<Complex64>,
    y: &DVector<Complex64>,
    k_max: usize,
    labels: &[i64],
    opts: &GreedyOptions,
) -> SparseSolution {
    assert_eq!(labels.len(), a.ncols());
    let v = DMatrix::from_fn(y.len(), 1, |i, _| y[i]);
    let outcome = greedy_pursuit(a, &v, k_max, opts);
    let mut pairs: Vec<(i64, Complex64)> = outcome
        .columns
        .iter()
        .enumerate()
        .map(|(i, &col)| (labels[col], outcome.coefficients[(i, 0)]))
        .collect();
    pairs.sort_by_key(|&(l, _)| l);
    SparseSolution {
        support: SupportSet::new(pairs.iter().map(|&(l, _)| l).collect()),
        coefficients: pairs.into_iter().map(|(_, c)| c).collect(),
        residual_norm: outcome.residual_norm,
        pruned: outcome.pruned.iter().map(|&col| labels[col]).collect(),
    }
}

/// Result of slice recovery: the bank plus the conditioning of the
/// selected column set.
#[derive(Debug, Clone)]
pub struct SliceRecovery {
    pub bank: SliceBank,
    pub condition_number: f64,
}

/// Recover the active slice sequences from the channel outputs by least
/// squares on the selected sensing-matrix columns; inactive slices are
/// zero. Rejects rank-deficient column sets with the measured condition
/// number.
pub fn recover_slices(
    c: &SensingMatrix,
    support: &SupportSet,
    samples: &[Vec<Complex64>],
    f_s: f64,
) -> Result<SliceRecovery, RecoveryError> {
    let m = c.m_channels();
    if samples.len() != m {
        return Err(RecoveryError::Invalid(format!(
            "{} channel sequences for an {m}-row sensing matrix",
            samples.len()
        )));
    }
    let big_l = c.big_l as i64;
    for &l in &support.indices {
        if l < -big_l || l > big_l {
            return Err(RecoveryError::BadSupportIndex(l));
        }
    }
    let n_time = samples.iter().map(|s| s.len()).min().unwrap_or(0);
    let m_slices = c.m_slices();
    let mut bank = SliceBank {
        big_l: c.big_l,
        f_s,
        slices: vec![vec![Complex64::new(0.0, 0.0); n_time]; m_slices],
        active: vec![false; m_slices],
    };
    if support.is_empty() || n_time == 0 {
        return Ok(SliceRecovery { bank, condition_number: 1.0 });
    }
    let cols: Vec<usize> = support.indices.iter().map(|&l| c.col_for_slice(l)).collect();
    let sub = c.entries.select_columns(cols.iter());
    let svd = sub.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if smax <= 0.0 || smin <= 1e-12 * smax {
        return Err(RecoveryError::RankDeficient { cond });
    }
    let y = DMatrix::from_fn(m, n_time, |i, n| samples[i][n]);
    let z = svd.solve(&y, 1e-14 * smax).map_err(|e| RecoveryError::Invalid(e.to_string()))?;
    for (row, &l) in support.indices.iter().enumerate() {
        let idx = (l + big_l) as usize;
        bank.active[idx] = true;
        for n in 0..n_time {
            bank.slices[idx][n] = z[(row, n)];
        }
    }
    Ok(SliceRecovery { bank, condition_number: cond })
}

/// Reassemble the record spectrum from the active slices: interpolate each
/// slice to the grid, modulate to its center, and sum. Slice-boundary bins
/// hold the folded average of both neighbors; they are resolved per chain
/// of consecutive active slices (closed form when every slice is active).
/// The output is real by conjugate symmetry of the slice set.
pub fn reconstruct_multiband(bank: &SliceBank, cfg: &MwcConfig) -> Waveform {
    let p = bank.len();
    let m = cfg.m_slices;
    let n = p * m;
    let grid = NyquistGrid::new(cfg.f_nyq(), n.max(1));
    let active = bank.active_slice_indices();
    if active.is_empty() || p == 0 {
        return Waveform::zero(grid);
    }
    let big_l = bank.big_l as i64;
    let scale = m as f64;
    // slice spectra, scaled back to record-spectrum units
    let mut spectra: Vec<Option<Vec<Complex64>>> = vec![None; m];
    for &l in &active {
        let mut s = bank.slice(l).to_vec();
        spectral::fft(&mut s);
        for v in s.iter_mut() {
            *v *= scale;
        }
        spectra[(l + big_l) as usize] = Some(s);
    }
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for &l in &active {
        let s = spectra[(l + big_l) as usize].as_ref().unwrap();
        let center = l * p as i64;
        for j in -((p / 2) as i64 - 1)..=((p / 2) as i64 - 1) {
            spec[spectral::bin_index(center + j, n)] = s[spectral::bin_index(j, p)];
        }
    }
    // boundary bins: each slice's Nyquist slot holds (b_{l-1} + b_l)/2 with
    // b_l the bin between slices l and l+1; walk each chain of consecutive
    // active slices assuming no content beyond its outer edge
    let nyq = |l: i64| spectra[(l + big_l) as usize].as_ref().unwrap()[p / 2];
    let is_active =
        |l: i64| -> bool { l >= -big_l && l <= big_l && spectra[(l + big_l) as usize].is_some() };
    if active.len() == m {
        // every slice active: the circular fold inverts in closed form
        for l in -big_l..=big_l {
            let mut b = Complex64::new(0.0, 0.0);
            let mut sign = 1.0;
            for r in 0..m as i64 {
                let mut lr = l - r;
                if lr < -big_l {
                    lr += m as i64;
                }
                b += sign * nyq(lr);
                sign = -sign;
            }
            spec[spectral::bin_index(l * p as i64 + (p / 2) as i64, n)] = b;
        }
    } else {
        for &l0 in &active {
            if is_active(l0 - 1) {
                continue; // not a chain head
            }
            let mut b_prev = Complex64::new(0.0, 0.0);
            let mut l = l0;
            while is_active(l) {
                let b = 2.0 * nyq(l) - b_prev;
                spec[spectral::bin_index(l * p as i64 + (p / 2) as i64, n)] = b;
                b_prev = b;
                l += 1;
            }
        }
    }
    // enforce conjugate symmetry before returning to the time domain
    for k in 1..n / 2 {
        let a = spec[k];
        let b = spec[n - k];
        let avg = 0.5 * (a + b.conj());
        spec[k] = avg;
        spec[n - k] = avg.conj();
    }
    spec[0] = Complex64::new(spec[0].re, 0.0);
    if n % 2 == 0 {
        spec[n / 2] = Complex64::new(spec[n / 2].re, 0.0);
    }
    Waveform::new(grid, spectral::ifft_real(&spec))
}

/// Synthesize the record for a recovered tone solution; the inverse of the
/// multitone generator on the recovered support and amplitudes.
pub fn reconstruct_multitone(
    support: &SupportSet,
    amplitudes: &[Complex64],
    q: usize,
    delta: f64,
    grid: &NyquistGrid,
) -> Result<Waveform, RecoveryError> {
    if support.len() != amplitudes.len() {
        return Err(RecoveryError::Invalid("support and amplitude lengths differ".into()));
    }
    if support.is_empty() {
        return Ok(Waveform::zero(*grid));
    }
    let spec = ToneSpec::new(q, delta, support.indices.clone(), amplitudes.to_vec())?;
    Ok(crate::signal::gen_multitone(&spec, grid)?)
}
