//! Itô integration of the conditioned dynamics along single trajectories.
//!
//! The scheme is Euler–Maruyama in Bloch coordinates with left-endpoint
//! drift and diffusion, followed by a projection back onto the unit sphere.
//! Plain Euler–Maruyama is not norm-stable for this equation: |r| performs a
//! multiplicative random walk and leaves the Bloch ball within a few thousand
//! steps at moderate κ. The continuous equation preserves purity exactly, so
//! the projection only removes discretization error, and it is a function of
//! the current state and increment alone, so the scheme stays non-anticipating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{bloch_diffusion, bloch_drift};
use crate::metrics::fidelity_bloch;
use crate::params::SimParams;
use crate::state::BlochVector;

/// Raw steps whose norm leaves the sphere by more than this are counted as
/// large excursions in the run diagnostics.
pub const EXCURSION_FLAG: f64 = 0.01;

/// Deliberate kernel corruptions used to check that validation notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Fault {
    #[default]
    None,
    /// Integrate with −I[ρ] in place of I[ρ].
    DiffusionSign,
    /// Integrate with 2·I[ρ] in place of I[ρ].
    DiffusionScale,
}

impl Fault {
    pub fn diffusion(self, r: &BlochVector, params: &SimParams) -> BlochVector {
        let b = bloch_diffusion(r, params);
        match self {
            Fault::None => b,
            Fault::DiffusionSign => b.scaled(-1.0),
            Fault::DiffusionScale => b.scaled(2.0),
        }
    }
}

/// Gaussian increments with variance dt.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerStream {
    pub increments: Vec<f64>,
    pub dt: f64,
}

/// RNG for trajectory `index` under root `seed`.
///
/// Every trajectory gets its own ChaCha stream (the stream id is the
/// trajectory index) keyed by the root seed, so draws never depend on which
/// worker runs the trajectory or in what order.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[inline]
pub fn gaussian_increment(rng: &mut ChaCha8Rng, sqrt_dt: f64) -> f64 {
    let xi: f64 = rng.sample(StandardNormal);
    xi * sqrt_dt
}

/// `n_steps` increments of variance `dt` from stream 0 of `stream_seed`.
pub fn wiener_stream(n_steps: usize, dt: f64, stream_seed: u64) -> WienerStream {
    let mut rng = trajectory_rng(stream_seed, 0);
    let sqrt_dt = dt.sqrt();
    let increments = (0..n_steps)
        .map(|_| gaussian_increment(&mut rng, sqrt_dt))
        .collect();
    WienerStream { increments, dt }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: BlochVector,
    /// |r + a·dt + b·ΔW| before projection.
    pub raw_norm: f64,
}

impl StepOutcome {
    pub fn excursion(&self) -> f64 {
        (self.raw_norm - 1.0).abs()
    }
}

/// One Euler–Maruyama step from a pure state, projected back to |r| = 1.
#[inline]
pub fn step_euler_maruyama(r: &BlochVector, dw: f64, params: &SimParams) -> StepOutcome {
    step_with_fault(r, dw, params, Fault::None)
}

#[inline]
pub fn step_with_fault(r: &BlochVector, dw: f64, params: &SimParams, fault: Fault) -> StepOutcome {
    let a = bloch_drift(r, params);
    let b = fault.diffusion(r, params);
    let raw = r.plus(&a.scaled(params.dt)).plus(&b.scaled(dw));
    let raw_norm = raw.norm();
    StepOutcome {
        state: raw.scaled(1.0 / raw_norm),
        raw_norm,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub traj_index: u64,
    pub times: Vec<f64>,
    pub states: Vec<BlochVector>,
    /// ΔW_i drives the step from `states[i]` to `states[i + 1]`.
    pub wiener: Vec<f64>,
    pub fidelity_path: Vec<f64>,
    pub seed_used: u64,
    /// Steps whose raw norm left the sphere by more than [`EXCURSION_FLAG`].
    pub large_excursions: u32,
}

impl TrajectoryRecord {
    pub fn n_steps(&self) -> usize {
        self.wiener.len()
    }

    pub fn final_state(&self) -> BlochVector {
        *self.states.last().expect("a record always holds the initial state")
    }
}

/// Simulates trajectory `traj_index` over [0, τ].
pub fn simulate_trajectory(params: &SimParams, traj_index: u64) -> Result<TrajectoryRecord> {
    simulate_with_fault(params, traj_index, Fault::None)
}

pub fn simulate_with_fault(
    params: &SimParams,
    traj_index: u64,
    fault: Fault,
) -> Result<TrajectoryRecord> {
    let n = params.n_steps();
    let r0 = params.initial;
    let mut states = Vec::with_capacity(n + 1);
    let mut wiener = Vec::with_capacity(n);
    let mut fidelity_path = Vec::with_capacity(n + 1);
    states.push(r0);
    fidelity_path.push(fidelity_bloch(&r0, &r0));
    let large_excursions = drive(params, traj_index, fault, |_, _, next, dw| {
        wiener.push(dw);
        states.push(*next);
        fidelity_path.push(fidelity_bloch(&r0, next));
    })?;
    Ok(TrajectoryRecord {
        traj_index,
        times: (0..=n).map(|i| params.time(i)).collect(),
        states,
        wiener,
        fidelity_path,
        seed_used: params.seed,
        large_excursions,
    })
}

/// Runs trajectory `traj_index` and hands every step
/// `(step, r_step, r_step+1, ΔW)` to `observe` instead of storing it.
/// Returns the number of large excursions.
pub fn drive<O>(params: &SimParams, traj_index: u64, fault: Fault, mut observe: O) -> Result<u32>
where
    O: FnMut(usize, &BlochVector, &BlochVector, f64),
{
    params.validate()?;
    let mut rng = trajectory_rng(params.seed, traj_index);
    let sqrt_dt = params.dt.sqrt();
    let mut large_excursions = 0;
    let mut r = params.initial;
    for step in 0..params.n_steps() {
        let dw = gaussian_increment(&mut rng, sqrt_dt);
        let out = step_with_fault(&r, dw, params, fault);
        let excursion = out.excursion();
        if excursion.is_nan() || excursion > params.max_norm_excursion {
            return Err(Error::Trajectory {
                index: traj_index,
                source: Box::new(Error::StepTooLarge {
                    step,
                    norm: out.raw_norm,
                }),
            });
        }
        if excursion > EXCURSION_FLAG {
            large_excursions += 1;
        }
        observe(step, &r, &out.state, dw);
        r = out.state;
    }
    Ok(large_excursions)
}

/// Result of a matched-noise dt-refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Step sizes studied, coarsest first.
    pub dts: Vec<f64>,
    /// Step of the reference solution.
    pub dt_reference: f64,
    /// Mean |r_dt(τ) − r_ref(τ)| over paths.
    pub strong_errors: Vec<f64>,
    /// Least-squares slope of log error against log dt.
    pub strong_order: f64,
    /// Mean per-step pre-projection purity defect ||r_EM|² − 1|/2.
    pub purity_defects: Vec<f64>,
    pub purity_order: f64,
    /// RMS over paths of the projection's contribution to the fidelity
    /// change, ½ r₀·Σ(r_{n+1} − r_n − a·dt − b·ΔW).
    pub remainder_rms: Vec<f64>,
    pub remainder_order: f64,
    pub n_paths: usize,
}

/// Number of paths in [`convergence_check`].
pub const CONVERGENCE_PATHS: usize = 200;
/// The reference solution runs at dt / REFERENCE_REFINEMENT.
pub const REFERENCE_REFINEMENT: usize = 128;

/// dt-refinement study at dt, dt/2, dt/4, dt/8 against a dt/128 reference,
/// all driven by the same Brownian paths (coarse increments are sums of fine
/// ones).
pub fn convergence_check(params: &SimParams) -> Result<ConvergenceReport> {
    convergence_check_with(params, CONVERGENCE_PATHS, Fault::None)
}

pub fn convergence_check_with(
    params: &SimParams,
    n_paths: usize,
    fault: Fault,
) -> Result<ConvergenceReport> {
    params.validate()?;
    let levels = [1usize, 2, 4, 8];
    let n_coarse = params.n_steps();
    let n_fine = n_coarse * REFERENCE_REFINEMENT;
    let dt_ref = params.dt / REFERENCE_REFINEMENT as f64;
    let sqrt_ref = dt_ref.sqrt();

    let mut err_sum = vec![0.0; levels.len()];
    let mut defect_sum = vec![0.0; levels.len()];
    let mut rem_sq_sum = vec![0.0; levels.len()];
    let mut fine = vec![0.0; n_fine];
    for path in 0..n_paths {
        let mut rng = trajectory_rng(params.seed, path as u64);
        for dw in fine.iter_mut() {
            *dw = gaussian_increment(&mut rng, sqrt_ref);
        }
        let reference = integrate_blocks(params, &fine, 1, REFERENCE_REFINEMENT, fault)?;
        for (li, &m) in levels.iter().enumerate() {
            let block = REFERENCE_REFINEMENT / m;
            let run = integrate_blocks(params, &fine, block, m, fault)?;
            err_sum[li] += run.final_state.minus(&reference.final_state).norm();
            defect_sum[li] += run.mean_defect;
            rem_sq_sum[li] += run.remainder * run.remainder;
        }
    }
    let np = n_paths as f64;
    let dts: Vec<f64> = levels.iter().map(|&m| params.dt / m as f64).collect();
    let strong_errors: Vec<f64> = err_sum.iter().map(|s| s / np).collect();
    let purity_defects: Vec<f64> = defect_sum.iter().map(|s| s / np).collect();
    let remainder_rms: Vec<f64> = rem_sq_sum.iter().map(|s| (s / np).sqrt()).collect();
    Ok(ConvergenceReport {
        strong_order: loglog_slope(&dts, &strong_errors),
        purity_order: loglog_slope(&dts, &purity_defects),
        remainder_order: loglog_slope(&dts, &remainder_rms),
        dts,
        dt_reference: dt_ref,
        strong_errors,
        purity_defects,
        remainder_rms,
        n_paths,
    })
}

struct BlockRun {
    final_state: BlochVector,
    mean_defect: f64,
    remainder: f64,
}

/// Integrates with increments formed by summing `block` consecutive fine
/// increments; the step is dt/`refine`.
fn integrate_blocks(
    params: &SimParams,
    fine: &[f64],
    block: usize,
    refine: usize,
    fault: Fault,
) -> Result<BlockRun> {
    let mut p = *params;
    p.dt = params.dt / refine as f64;
    let r0 = params.initial;
    let mut r = r0;
    let mut defect = 0.0;
    let mut remainder = 0.0;
    let n = fine.len() / block;
    for (step, chunk) in fine.chunks_exact(block).enumerate() {
        let dw: f64 = chunk.iter().sum();
        let out = step_with_fault(&r, dw, &p, fault);
        if out.excursion().is_nan() || out.excursion() > p.max_norm_excursion {
            return Err(Error::StepTooLarge {
                step,
                norm: out.raw_norm,
            });
        }
        defect += 0.5 * (out.raw_norm * out.raw_norm - 1.0).abs();
        // The projection remainder is measured against the true kernels so
        // that a corrupted integrator shows up here.
        let em = r
            .plus(&bloch_drift(&r, &p).scaled(p.dt))
            .plus(&bloch_diffusion(&r, &p).scaled(dw));
        remainder += 0.5 * r0.dot(&out.state.minus(&em));
        r = out.state;
    }
    Ok(BlockRun {
        final_state: r,
        mean_defect: defect / n as f64,
        remainder,
    })
}

/// Least-squares slope of ln(y) against ln(x). Non-positive y are skipped.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&a, &b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
