//! Monte Carlo ensembles of conditioned trajectories and the statistics
//! built from them.
//!
//! Trajectories run in parallel on the ambient rayon pool, but every
//! reduction happens afterwards in trajectory-index order (or over
//! fixed-size index chunks merged in order), so results do not depend on the
//! number of workers.

use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::ensemble_state_analytic;
use crate::metrics::{
    self, angle_of, fidelity_bloch, fidelity_qsl, qsl_report, Estimate, QslReport,
    VelocityAccumulator, VelocitySample, MIN_VARIANCE_SAMPLES,
};
use crate::params::SimParams;
use crate::sde::{drive, Fault};
use crate::state::BlochVector;

pub const DEFAULT_BINS: usize = 60;
pub const DEFAULT_FIDELITY_COLUMNS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub n_bins: usize,
    /// Bures angle used for per-trajectory passage times and τ_QSL.
    pub target_angle: f64,
    /// Number of evenly spaced grid times at which F_C(t) is sampled for the
    /// quantile bands and the colormap.
    pub fidelity_columns: usize,
    #[serde(skip)]
    pub fault: Fault,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            n_bins: DEFAULT_BINS,
            target_angle: FRAC_PI_4,
            fidelity_columns: DEFAULT_FIDELITY_COLUMNS,
            fault: Fault::None,
        }
    }
}

impl EnsembleOptions {
    fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::params("n_bins", format!("must be at least 2, got {}", self.n_bins)));
        }
        if self.fidelity_columns < 2 {
            return Err(Error::params("fidelity_columns", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    /// All values were equal; a single unit-width bin centred on the value
    /// stands in for the distribution.
    pub degenerate: bool,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// ∫ density, which is 1 up to rounding.
    pub fn integral(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.density)
            .map(|(w, d)| (w[1] - w[0]) * d)
            .sum()
    }
}

/// Equal-width histogram over [min, max] with density normalized to unit
/// integral. The maximum falls in the last bin.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Domain("histogram of an empty sample".into()));
    }
    if n_bins < 2 {
        return Err(Error::params("n_bins", format!("must be at least 2, got {n_bins}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("histogram input contains non-finite values".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = values.len() as u64;
    if hi == lo {
        return Ok(Histogram {
            edges: vec![lo - 0.5, lo + 0.5],
            counts: vec![m],
            density: vec![1.0],
            degenerate: true,
        });
    }
    Ok(binned(values, lo, hi, n_bins))
}

/// Histogram on fixed edges [lo, hi]; values outside are clamped into the
/// end bins.
pub(crate) fn binned(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Histogram {
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        let idx = ((v - lo) / width).floor();
        let idx = if idx < 0.0 { 0 } else { (idx as usize).min(n_bins - 1) };
        counts[idx] += 1;
    }
    let edges = (0..=n_bins)
        .map(|i| if i == n_bins { hi } else { lo + i as f64 * width })
        .collect::<Vec<_>>();
    let total = values.len() as f64;
    let density = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / (total * (edges[i + 1] - edges[i])))
        .collect();
    Histogram {
        edges,
        counts,
        density,
        degenerate: false,
    }
}

/// Fraction of samples with 𝒱_C strictly above `v_qsl`.
pub fn violation_fraction(samples: &[VelocitySample], v_qsl: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("violation fraction of an empty sample".into()));
    }
    let above = samples.iter().filter(|s| s.v_conditioned > v_qsl).count();
    Ok(above as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bimodality {
    /// Bin indices of the local maxima of the smoothed density that exceed
    /// [`PEAK_FLOOR`] of the tallest one.
    pub peaks: Vec<usize>,
    /// Deepest valley between two retained peaks relative to the smaller of
    /// them; `None` with fewer than two peaks.
    pub valley_ratio: Option<f64>,
    pub bimodal: bool,
}

/// Peaks below this fraction of the tallest smoothed bin are ignored as
/// sampling noise in the tails.
pub const PEAK_FLOOR: f64 = 0.1;
/// A valley deeper than this fraction of the smaller peak separates modes.
pub const VALLEY_RATIO: f64 = 0.6;

/// Mode detection on the 3-bin moving average of the density.
pub fn detect_bimodality(hist: &Histogram) -> Bimodality {
    let d = &hist.density;
    let n = d.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            d[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let top = smooth.iter().copied().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        // Treat plateaus as one candidate.
        let mut j = i;
        while j + 1 < n && smooth[j + 1] == smooth[i] {
            j += 1;
        }
        let left_lower = i == 0 || smooth[i - 1] < smooth[i];
        let right_lower = j == n - 1 || smooth[j + 1] < smooth[i];
        if left_lower && right_lower && smooth[i] >= PEAK_FLOOR * top && smooth[i] > 0.0 {
            peaks.push((i + j) / 2);
        }
        i = j + 1;
    }
    let mut best: Option<f64> = None;
    for (a, &p) in peaks.iter().enumerate() {
        for &q in &peaks[a + 1..] {
            let valley = smooth[p..=q].iter().copied().fold(f64::INFINITY, f64::min);
            let ratio = valley / smooth[p].min(smooth[q]);
            best = Some(best.map_or(ratio, |b: f64| b.min(ratio)));
        }
    }
    Bimodality {
        bimodal: best.is_some_and(|r| r < VALLEY_RATIO),
        valley_ratio: best,
        peaks,
    }
}

/// F_C(t) bands across the ensemble at sampled grid times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityBands {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q25: Vec<f64>,
    pub median: Vec<f64>,
    pub q75: Vec<f64>,
    pub q95: Vec<f64>,
    /// Fidelity of the analytic ensemble state.
    pub f_ensemble: Vec<f64>,
    /// Fidelity of a state travelling at the speed limit.
    pub f_qsl: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_traj: u64,
    #[serde(skip)]
    pub velocity_samples: Vec<VelocitySample>,
    pub histogram: Histogram,
    pub bimodality: Bimodality,
    pub qsl: QslReport,
    pub violation_fraction: f64,
    pub mean_vc: f64,
    pub se_mean_vc: f64,
    pub std_vc: f64,
    pub max_vc: f64,
    pub var_vc_sample: Option<Estimate>,
    pub var_vc_formula: Option<Estimate>,
    /// max |𝒱_C·τ − sin²ℒ_C(τ)| over trajectories.
    pub max_identity_residual: f64,
    /// F_QSL(τ) and the fraction of trajectories ending below it.
    pub f_qsl_final: f64,
    pub final_fraction_below_fqsl: f64,
    pub passage_reached: u64,
    pub fidelity_bands: FidelityBands,
    /// Integrator steps whose raw norm left the sphere by more than 1%.
    pub clamp_events: u64,
}

/// Per-trajectory output of the fan-out.
struct TrajSummary {
    sample: VelocitySample,
    fidelities: Vec<f64>,
    large_excursions: u32,
}

/// Grid indices of `columns` evenly spaced sample times over n steps.
fn column_indices(n_steps: usize, columns: usize) -> Vec<usize> {
    (0..columns)
        .map(|c| ((c as f64) * n_steps as f64 / (columns - 1) as f64).round() as usize)
        .collect()
}

fn summarize(params: &SimParams, index: u64, opts: &EnsembleOptions, cols: &[usize]) -> Result<TrajSummary> {
    let r0 = params.initial;
    let mut acc = VelocityAccumulator::new(r0);
    let mut fidelities = Vec::with_capacity(cols.len());
    let mut next_col = 0;
    if cols.first() == Some(&0) {
        fidelities.push(1.0);
        next_col = 1;
    }
    let mut passage = if opts.target_angle <= 0.0 { Some(0.0) } else { None };
    let mut prev_angle = 0.0;
    let mut last = r0;
    let dt = params.dt;
    let large_excursions = drive(params, index, opts.fault, |step, r, next, dw| {
        acc.push(r, next, dw, params);
        let f = fidelity_bloch(&r0, next);
        let grid = step + 1;
        while next_col < cols.len() && cols[next_col] == grid {
            fidelities.push(f);
            next_col += 1;
        }
        if passage.is_none() {
            let angle = angle_of(f);
            if angle >= opts.target_angle {
                let frac = (opts.target_angle - prev_angle) / (angle - prev_angle);
                passage = Some((step as f64 + frac) * dt);
            }
            prev_angle = angle;
        }
        last = *next;
    })?;
    let mut sample = acc.finish(params.n_steps(), &last, params, index);
    sample.passage_time = passage;
    Ok(TrajSummary {
        sample,
        fidelities,
        large_excursions,
    })
}

/// Runs every trajectory and returns the summaries in index order. The
/// reported error, if any, is the one with the smallest trajectory index.
fn fan_out(params: &SimParams, opts: &EnsembleOptions) -> Result<Vec<TrajSummary>> {
    let cols = column_indices(params.n_steps(), opts.fidelity_columns);
    let results: Vec<Result<TrajSummary>> = (0..params.n_traj)
        .into_par_iter()
        .map(|k| summarize(params, k, opts, &cols))
        .collect();
    results.into_iter().collect()
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Ensemble run together with the F_C(t) samples behind its bands.
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    /// `fidelity_columns[c][k]` is F_C of trajectory k at `stats.fidelity_bands.times[c]`.
    pub fidelity_columns: Vec<Vec<f64>>,
}

pub fn run_ensemble(params: &SimParams) -> Result<EnsembleStats> {
    Ok(run_ensemble_with(params, &EnsembleOptions::default())?.stats)
}

pub fn run_ensemble_with(params: &SimParams, opts: &EnsembleOptions) -> Result<EnsembleRun> {
    params.validate()?;
    opts.validate()?;
    let qsl = qsl_report(params, opts.target_angle)?;
    let summaries = fan_out(params, opts)?;

    let samples: Vec<VelocitySample> = summaries.iter().map(|s| s.sample).collect();
    let vc: Vec<f64> = samples.iter().map(|s| s.v_conditioned).collect();
    let m = vc.len() as f64;
    let (mean_vc, se_mean_vc) = metrics::mean_and_se(&vc);
    let std_vc = if vc.len() > 1 { se_mean_vc * m.sqrt() } else { 0.0 };
    let hist = histogram(&vc, opts.n_bins)?;
    let bimodality = detect_bimodality(&hist);
    let enough = samples.len() >= MIN_VARIANCE_SAMPLES;
    let var_vc_sample = if enough { Some(metrics::velocity_variance_sample(&samples)?) } else { None };
    let var_vc_formula = if enough {
        Some(metrics::velocity_variance_formula(&samples, params)?)
    } else {
        None
    };
    let max_identity_residual = samples
        .iter()
        .map(|s| (s.v_conditioned * params.tau - s.bures_final.sin().powi(2)).abs())
        .fold(0.0, f64::max);
    let f_qsl_final = fidelity_qsl(params.tau, params);
    let below = samples.iter().filter(|s| s.f_final < f_qsl_final).count();

    let cols = column_indices(params.n_steps(), opts.fidelity_columns);
    let mut fidelity_columns: Vec<Vec<f64>> = vec![Vec::with_capacity(samples.len()); cols.len()];
    for s in &summaries {
        for (c, &f) in s.fidelities.iter().enumerate() {
            fidelity_columns[c].push(f);
        }
    }
    let fidelity_bands = bands(params, &cols, &fidelity_columns);

    let stats = EnsembleStats {
        n_traj: params.n_traj,
        violation_fraction: violation_fraction(&samples, qsl.v_qsl)?,
        histogram: hist,
        bimodality,
        qsl,
        mean_vc,
        se_mean_vc,
        std_vc,
        max_vc: vc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        var_vc_sample,
        var_vc_formula,
        max_identity_residual,
        f_qsl_final,
        final_fraction_below_fqsl: below as f64 / m,
        passage_reached: samples.iter().filter(|s| s.passage_time.is_some()).count() as u64,
        fidelity_bands,
        clamp_events: summaries.iter().map(|s| u64::from(s.large_excursions)).sum(),
        velocity_samples: samples,
    };
    Ok(EnsembleRun {
        stats,
        fidelity_columns,
    })
}

fn bands(params: &SimParams, cols: &[usize], columns: &[Vec<f64>]) -> FidelityBands {
    let mut b = FidelityBands {
        times: Vec::new(),
        mean: Vec::new(),
        q05: Vec::new(),
        q25: Vec::new(),
        median: Vec::new(),
        q75: Vec::new(),
        q95: Vec::new(),
        f_ensemble: Vec::new(),
        f_qsl: Vec::new(),
    };
    for (&i, col) in cols.iter().zip(columns) {
        let t = params.time(i);
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        b.times.push(t);
        b.mean.push(col.iter().sum::<f64>() / col.len() as f64);
        b.q05.push(quantile_sorted(&sorted, 0.05));
        b.q25.push(quantile_sorted(&sorted, 0.25));
        b.median.push(quantile_sorted(&sorted, 0.5));
        b.q75.push(quantile_sorted(&sorted, 0.75));
        b.q95.push(quantile_sorted(&sorted, 0.95));
        b.f_ensemble
            .push(fidelity_bloch(&params.initial, &ensemble_state_analytic(t, params)));
        b.f_qsl.push(fidelity_qsl(t, params));
    }
    b
}

/// Per-time distribution of F_C(t) on fixed bins over [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Colormap {
    pub times: Vec<f64>,
    pub f_edges: Vec<f64>,
    /// `density[t][j]`: density of F_C(times[t]) in bin j; each row
    /// integrates to 1.
    pub density: Vec<Vec<f64>>,
    pub f_ensemble: Vec<f64>,
    pub f_qsl: Vec<f64>,
    pub final_fraction_below_fqsl: f64,
}

pub fn colormap_from_run(run: &EnsembleRun, n_f_bins: usize) -> Result<Colormap> {
    if n_f_bins < 2 {
        return Err(Error::params("n_f_bins", "must be at least 2"));
    }
    let bands = &run.stats.fidelity_bands;
    let density = run
        .fidelity_columns
        .iter()
        .map(|col| binned(col, 0.0, 1.0, n_f_bins).density)
        .collect();
    Ok(Colormap {
        times: bands.times.clone(),
        f_edges: (0..=n_f_bins).map(|j| j as f64 / n_f_bins as f64).collect(),
        density,
        f_ensemble: bands.f_ensemble.clone(),
        f_qsl: bands.f_qsl.clone(),
        final_fraction_below_fqsl: run.stats.final_fraction_below_fqsl,
    })
}

pub fn fidelity_colormap_data(params: &SimParams, n_time_bins: usize, n_f_bins: usize) -> Result<Colormap> {
    let opts = EnsembleOptions {
        fidelity_columns: n_time_bins,
        ..EnsembleOptions::default()
    };
    colormap_from_run(&run_ensemble_with(params, &opts)?, n_f_bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub mean_vc: f64,
    pub std_vc: f64,
    pub violation_fraction: f64,
    pub v_ensemble: f64,
    pub v_qsl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// std_vc is non-decreasing in κ across the rows.
    pub std_vc_increasing: bool,
}

/// One ensemble per κ, rows sorted by κ.
pub fn sweep_kappa(params: &SimParams, kappas: &[f64], opts: &EnsembleOptions) -> Result<Sweep> {
    if kappas.is_empty() {
        return Err(Error::params("kappas", "the κ list is empty"));
    }
    let mut sorted = kappas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(sorted.len());
    for &kappa in &sorted {
        let p = params.with_kappa(kappa);
        p.validate()?;
        let stats = run_ensemble_with(&p, opts)?.stats;
        rows.push(SweepRow {
            kappa,
            mean_vc: stats.mean_vc,
            std_vc: stats.std_vc,
            violation_fraction: stats.violation_fraction,
            v_ensemble: stats.qsl.v_ensemble,
            v_qsl: stats.qsl.v_qsl,
        });
    }
    let std_vc_increasing = rows.windows(2).all(|w| w[1].std_vc >= w[0].std_vc);
    Ok(Sweep {
        rows,
        std_vc_increasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageStats {
    pub target_angle: f64,
    /// Simulated duration, long enough to cover every τ_QSL estimate.
    pub horizon: f64,
    #[serde(skip)]
    pub times: Vec<Option<f64>>,
    pub reached: u64,
    pub unreached: u64,
    pub histogram: Option<Histogram>,
    /// Speed-limit figures computed with the configured τ.
    pub qsl: QslReport,
    /// Fractions of all trajectories reaching the target before each τ_QSL.
    pub fraction_below_angle: Option<f64>,
    pub fraction_below_ratio: f64,
    pub fraction_below_bound: Option<f64>,
}

pub fn passage_time_distribution(
    params: &SimParams,
    target_angle: f64,
    n_bins: usize,
) -> Result<PassageStats> {
    params.validate()?;
    let qsl = qsl_report(params, target_angle)?;
    let longest = [qsl.tau_qsl_angle, Some(qsl.tau_qsl_ratio), qsl.tau_qsl_bound]
        .into_iter()
        .flatten()
        .fold(params.tau, f64::max);
    let steps = (longest / params.dt).ceil();
    let horizon = steps * params.dt;
    let run_params = params.with_tau(horizon);
    let opts = EnsembleOptions {
        n_bins,
        target_angle,
        fidelity_columns: 2,
        fault: Fault::None,
    };
    opts.validate()?;
    let summaries = fan_out(&run_params, &opts)?;
    let times: Vec<Option<f64>> = summaries.iter().map(|s| s.sample.passage_time).collect();
    let reached: Vec<f64> = times.iter().flatten().copied().collect();
    let m = times.len() as f64;
    let below = |limit: f64| reached.iter().filter(|&&t| t < limit).count() as f64 / m;
    Ok(PassageStats {
        target_angle,
        horizon,
        reached: reached.len() as u64,
        unreached: (times.len() - reached.len()) as u64,
        histogram: if reached.is_empty() { None } else { Some(histogram(&reached, n_bins)?) },
        fraction_below_angle: qsl.tau_qsl_angle.map(below),
        fraction_below_ratio: below(qsl.tau_qsl_ratio),
        fraction_below_bound: qsl.tau_qsl_bound.map(below),
        qsl,
        times,
    })
}

/// Ensemble-averaged Bloch path at every `stride`-th grid point with its
/// per-coordinate sample standard deviation and the analytic solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPath {
    pub times: Vec<f64>,
    pub mean: Vec<BlochVector>,
    pub std: Vec<BlochVector>,
    pub analytic: Vec<BlochVector>,
    pub n_traj: u64,
}

impl MeanPath {
    /// Largest |mean − analytic| per coordinate in units of the standard
    /// error σ/√M, after granting `bias` of absolute slack.
    pub fn worst_z_score(&self, bias: f64) -> f64 {
        let sqrt_m = (self.n_traj as f64).sqrt();
        let mut worst = 0.0_f64;
        for ((m, s), a) in self.mean.iter().zip(&self.std).zip(&self.analytic) {
            for (mi, si, ai) in [(m.x, s.x, a.x), (m.y, s.y, a.y), (m.z, s.z, a.z)] {
                let dev = ((mi - ai).abs() - bias).max(0.0);
                let se = si / sqrt_m;
                let z = if se > 0.0 { dev / se } else if dev > 0.0 { f64::INFINITY } else { 0.0 };
                worst = worst.max(z);
            }
        }
        worst
    }
}

/// Trajectories per chunk of the deterministic fold.
const CHUNK: u64 = 256;

/// Per-chunk sums and sums of squares of the Bloch components at each sampled time.
type MomentSums = (Vec<[f64; 3]>, Vec<[f64; 3]>);

pub fn ensemble_mean_path(params: &SimParams, stride: usize) -> Result<MeanPath> {
    ensemble_mean_path_with(params, stride, Fault::None)
}

pub fn ensemble_mean_path_with(params: &SimParams, stride: usize, fault: Fault) -> Result<MeanPath> {
    params.validate()?;
    let stride = stride.max(1);
    let n = params.n_steps();
    let points: Vec<usize> = (0..=n).step_by(stride).collect();
    let np = points.len();
    let n_chunks = params.n_traj.div_ceil(CHUNK);
    let partials: Vec<Result<MomentSums>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![[0.0; 3]; np];
            let mut sq = vec![[0.0; 3]; np];
            for k in c * CHUNK..((c + 1) * CHUNK).min(params.n_traj) {
                let mut add = |slot: usize, r: &BlochVector| {
                    for (d, v) in r.to_array().into_iter().enumerate() {
                        sum[slot][d] += v;
                        sq[slot][d] += v * v;
                    }
                };
                add(0, &params.initial);
                drive(params, k, fault, |step, _, next, _| {
                    let grid = step + 1;
                    if grid % stride == 0 {
                        add(grid / stride, next);
                    }
                })?;
            }
            Ok((sum, sq))
        })
        .collect();
    let mut sum = vec![[0.0; 3]; np];
    let mut sq = vec![[0.0; 3]; np];
    for part in partials {
        let (s, q) = part?;
        for i in 0..np {
            for d in 0..3 {
                sum[i][d] += s[i][d];
                sq[i][d] += q[i][d];
            }
        }
    }
    let m = params.n_traj as f64;
    let mut path = MeanPath {
        times: Vec::with_capacity(np),
        mean: Vec::with_capacity(np),
        std: Vec::with_capacity(np),
        analytic: Vec::with_capacity(np),
        n_traj: params.n_traj,
    };
    for (i, &g) in points.iter().enumerate() {
        let mean = sum[i].map(|v| v / m);
        let var: Vec<f64> = (0..3)
            .map(|d| {
                if params.n_traj > 1 {
                    ((sq[i][d] - m * mean[d] * mean[d]) / (m - 1.0)).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        let t = params.time(g);
        path.times.push(t);
        path.mean.push(BlochVector::raw(mean[0], mean[1], mean[2]));
        path.std
            .push(BlochVector::raw(var[0].sqrt(), var[1].sqrt(), var[2].sqrt()));
        path.analytic.push(ensemble_state_analytic(t, params));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_basics() {
        let h = histogram(&[0.0, 0.5, 1.0, 1.0], 2).unwrap();
        assert_eq!(h.counts, vec![1, 3]);
        assert!((h.integral() - 1.0).abs() < 1e-12);
        let flat = histogram(&[2.0; 5], 10).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.counts, vec![5]);
        assert!(histogram(&[], 3).is_err());
        assert!(histogram(&[1.0], 1).is_err());
    }

    #[test]
    fn bimodality_on_synthetic_shapes() {
        let two = Histogram {
            edges: (0..=10).map(f64::from).collect(),
            counts: vec![0; 10],
            density: vec![0.1, 1.0, 1.0, 0.3, 0.1, 0.1, 0.3, 0.8, 0.9, 0.2],
            degenerate: false,
        };
        assert!(detect_bimodality(&two).bimodal);
        let one = Histogram {
            density: vec![0.1, 0.3, 0.6, 0.9, 1.0, 0.9, 0.6, 0.3, 0.1, 0.05],
            ..two
        };
        let b = detect_bimodality(&one);
        assert!(!b.bimodal);
        assert_eq!(b.peaks.len(), 1);
    }

    #[test]
    fn column_indices_cover_the_grid() {
        assert_eq!(column_indices(1000, 101)[..3], [0, 10, 20]);
        assert_eq!(*column_indices(1000, 101).last().unwrap(), 1000);
        assert_eq!(column_indices(7, 2), vec![0, 7]);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert!((quantile_sorted(&v, 0.125) - 1.5).abs() < 1e-15);
    }
}
