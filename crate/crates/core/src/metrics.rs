//! Fidelity, Bures geometry, velocities and the quantum speed limit.
//!
//! For a pure initial state ρ₀ = (𝟙 + r₀·σ)/2 every overlap Tr(ρ₀X) with a
//! traceless X reduces to ½ r₀·x, where x are the Bloch components of X.
//! Most routines below use that shortcut; the matrix forms are kept for the
//! cross-checks.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    bloch_diffusion, bloch_drift, ensemble_state_analytic, ensemble_time_average,
    liouvillian_matrix,
};
use crate::linalg::{self, Mat2};
use crate::numerics;
use crate::params::SimParams;
use crate::sde::TrajectoryRecord;
use crate::state::{bloch_to_density, purity, BlochVector, DensityMatrix, EXACT_TOL};

/// Absolute tolerance of the adaptive quadratures on the analytic path.
const QUAD_TOL: f64 = 1e-13;

/// F = Tr(ρ₀ρ_t) for a pure ρ₀.
pub fn fidelity(rho0: &DensityMatrix, rhot: &DensityMatrix) -> Result<f64> {
    let p = purity(rho0);
    if p < 1.0 - 1e-9 {
        return Err(Error::Domain(format!(
            "fidelity needs a pure reference state, got purity {p}"
        )));
    }
    let f = linalg::trace_product(rho0.matrix(), rhot.matrix()).re;
    Ok(f.clamp(0.0, 1.0))
}

/// F = (1 + r₀·r)/2; r₀ must be pure.
#[inline]
pub fn fidelity_bloch(r0: &BlochVector, r: &BlochVector) -> f64 {
    0.5 * (1.0 + r0.dot(r))
}

/// ℒ = arccos √F, tolerating float noise of 1e-12 outside [0, 1].
pub fn bures_angle(f: f64) -> Result<f64> {
    if !(-EXACT_TOL..=1.0 + EXACT_TOL).contains(&f) {
        return Err(Error::Domain(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(f.clamp(0.0, 1.0).sqrt().acos())
}

/// Bures angle after clamping; for fidelities produced internally.
#[inline]
pub(crate) fn angle_of(f: f64) -> f64 {
    f.clamp(0.0, 1.0).sqrt().acos()
}

/// ‖L(ρ)‖ from the closed form
/// √(ω²/4·(x²+z²) + 4κ²(x²+y²) − 2κω·xz).
pub fn liouvillian_norm(r: &BlochVector, params: &SimParams) -> f64 {
    let (w, k) = (params.omega, params.kappa);
    let (x, y, z) = (r.x, r.y, r.z);
    let s = 0.25 * w * w * (x * x + z * z) + 4.0 * k * k * (x * x + y * y) - 2.0 * k * w * x * z;
    s.max(0.0).sqrt()
}

/// ‖L(ρ)‖ as the largest singular value of the 2×2 matrix L(ρ).
pub fn liouvillian_norm_svd(r: &BlochVector, params: &SimParams) -> f64 {
    let rho = crate::state::bloch_combination(1.0, r);
    linalg::operator_norm(&liouvillian_matrix(&rho, params))
}

/// Time-averaged fidelity loss rate 𝒱 = (1 − F(τ))/τ of the ensemble, from
/// the time-averaged Bloch coordinates:
/// 𝒱 = −(ω/2)(x₀z̄ − z₀x̄) + 2κ(x₀x̄ + y₀ȳ).
pub fn ensemble_velocity(params: &SimParams) -> f64 {
    let r0 = params.initial;
    let avg = ensemble_time_average(params.tau, params);
    let (w, k) = (params.omega, params.kappa);
    -0.5 * w * (r0.x * avg.z - r0.z * avg.x) + 2.0 * k * (r0.x * avg.x + r0.y * avg.y)
}

/// 𝒱 by adaptive quadrature of −Tr(ρ₀ L[ρ_t]) along the analytic path,
/// using the matrix-form Liouvillian.
pub fn ensemble_velocity_quadrature(params: &SimParams) -> f64 {
    let rho0 = crate::state::bloch_combination(1.0, &params.initial);
    let integrand = |t: f64| {
        let rt = ensemble_state_analytic(t, params);
        let l = liouvillian_matrix(&crate::state::bloch_combination(1.0, &rt), params);
        -linalg::trace_product(&rho0, &l).re
    };
    numerics::integrate(integrand, 0.0, params.tau, QUAD_TOL) / params.tau
}

/// 𝒱 = (1 − F(τ))/τ on the analytic path.
pub fn ensemble_velocity_from_fidelity(params: &SimParams) -> f64 {
    let rt = ensemble_state_analytic(params.tau, params);
    (1.0 - fidelity_bloch(&params.initial, &rt)) / params.tau
}

/// ∫₀ᵗ ‖L(ρ_s)‖ ds along the analytic ensemble path.
pub fn qsl_action(t: f64, params: &SimParams) -> f64 {
    numerics::integrate(
        |s| liouvillian_norm(&ensemble_state_analytic(s, params), params),
        0.0,
        t,
        QUAD_TOL,
    )
}

/// 𝒱_QSL: time average over [0, τ] of ‖L(ρ_t)‖ on the analytic path.
pub fn qsl_velocity(params: &SimParams) -> f64 {
    qsl_action(params.tau, params) / params.tau
}

/// 𝒱_QSL with the singular-value norm as integrand.
pub fn qsl_velocity_svd(params: &SimParams) -> f64 {
    numerics::integrate(
        |s| liouvillian_norm_svd(&ensemble_state_analytic(s, params), params),
        0.0,
        params.tau,
        QUAD_TOL,
    ) / params.tau
}

/// F_QSL(t) = cos²ℒ_QSL(t) with sin²ℒ_QSL(t) = ∫₀ᵗ ‖L‖: the fidelity of a
/// state moving at the speed limit, clamped at 0 once the bound saturates.
pub fn fidelity_qsl(t: f64, params: &SimParams) -> f64 {
    (1.0 - qsl_action(t, params)).clamp(0.0, 1.0)
}

/// Ensemble speed-limit summary for a target Bures angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QslReport {
    pub v_ensemble: f64,
    pub v_qsl: f64,
    /// Time for the analytic ensemble state to reach the target angle;
    /// `None` if it never does within the search horizon.
    pub tau_qsl_angle: Option<f64>,
    /// Target angle divided by 𝒱_QSL.
    pub tau_qsl_ratio: f64,
    /// First t with ∫₀ᵗ ‖L‖ ≥ sin²(target): the earliest time the bound
    /// allows the target to be reached.
    pub tau_qsl_bound: Option<f64>,
    pub target_angle: f64,
}

/// Horizon, in units of the slower of 1/ω and 1/κ, searched for τ_QSL.
const TAU_QSL_HORIZON: f64 = 200.0;
const TAU_QSL_SCAN: usize = 20_000;

pub fn qsl_report(params: &SimParams, target_angle: f64) -> Result<QslReport> {
    check_target(target_angle)?;
    let v_qsl = qsl_velocity(params);
    Ok(QslReport {
        v_ensemble: ensemble_velocity(params),
        v_qsl,
        tau_qsl_angle: tau_qsl_angle(params, target_angle),
        tau_qsl_ratio: target_angle / v_qsl,
        tau_qsl_bound: tau_qsl_bound(params, target_angle),
        target_angle,
    })
}

fn check_target(target: f64) -> Result<()> {
    if !(target > 0.0 && target <= FRAC_PI_2 + EXACT_TOL) {
        return Err(Error::params(
            "target_angle",
            format!("must lie in (0, π/2], got {target}"),
        ));
    }
    Ok(())
}

fn search_horizon(params: &SimParams) -> f64 {
    let slow = 1.0 / params.omega.min(if params.kappa > 0.0 { params.kappa } else { f64::INFINITY });
    TAU_QSL_HORIZON * slow.max(params.tau)
}

/// First time the analytic ensemble state reaches Bures angle `target`.
pub fn tau_qsl_angle(params: &SimParams, target: f64) -> Option<f64> {
    let cos2 = target.cos().powi(2);
    let r0 = params.initial;
    numerics::first_root(
        |t| cos2 - fidelity_bloch(&r0, &ensemble_state_analytic(t, params)),
        search_horizon(params),
        TAU_QSL_SCAN,
    )
}

/// First time the accumulated bound ∫₀ᵗ ‖L‖ reaches sin²(target).
pub fn tau_qsl_bound(params: &SimParams, target: f64) -> Option<f64> {
    let sin2 = target.sin().powi(2);
    let horizon = search_horizon(params);
    // Accumulate on the scan grid so each bracket costs one short quadrature.
    let h = horizon / TAU_QSL_SCAN as f64;
    let mut acc = 0.0;
    for i in 0..TAU_QSL_SCAN {
        let lo = i as f64 * h;
        let piece = numerics::integrate(
            |s| liouvillian_norm(&ensemble_state_analytic(s, params), params),
            lo,
            lo + h,
            QUAD_TOL,
        );
        if acc + piece >= sin2 {
            let base = acc;
            let g = |t: f64| {
                base + numerics::integrate(
                    |s| liouvillian_norm(&ensemble_state_analytic(s, params), params),
                    lo,
                    t,
                    QUAD_TOL,
                ) - sin2
            };
            return numerics::first_root(|dt| g(lo + dt), h, 8).map(|dt| lo + dt);
        }
        acc += piece;
    }
    None
}

/// Per-trajectory velocity decomposition.
///
/// 𝒱_C = −A − (I + R)/τ, where A is the Riemann time average of ½r₀·a,
/// I the left-endpoint Itô sum Σ ½r₀·b·ΔW and R the integrator's projection
/// remainder (see [`crate::sde`]). With R included, 𝒱_C·τ = 1 − F_C(τ)
/// holds to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub traj_index: u64,
    pub v_conditioned: f64,
    pub bures_final: f64,
    pub f_final: f64,
    pub passage_time: Option<f64>,
    pub lindblad_avg: f64,
    pub ito_integral: f64,
    pub projection_remainder: f64,
    /// Time average of (½r₀·b)².
    pub innovation_sq_avg: f64,
}

impl VelocitySample {
    /// Total stochastic contribution I + R.
    pub fn stochastic_integral(&self) -> f64 {
        self.ito_integral + self.projection_remainder
    }
}

/// Streaming accumulator behind [`conditioned_velocity`]; fed one step at a
/// time so ensembles need not keep whole records.
#[derive(Debug, Clone, Copy)]
pub(crate) struct VelocityAccumulator {
    r0: BlochVector,
    drift_sum: f64,
    ito: f64,
    remainder: f64,
    innovation_sq: f64,
}

impl VelocityAccumulator {
    pub(crate) fn new(r0: BlochVector) -> Self {
        VelocityAccumulator {
            r0,
            drift_sum: 0.0,
            ito: 0.0,
            remainder: 0.0,
            innovation_sq: 0.0,
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, r: &BlochVector, next: &BlochVector, dw: f64, params: &SimParams) {
        let a = bloch_drift(r, params);
        let b = bloch_diffusion(r, params);
        let half_a = 0.5 * self.r0.dot(&a);
        let half_b = 0.5 * self.r0.dot(&b);
        self.drift_sum += half_a;
        self.ito += half_b * dw;
        self.innovation_sq += half_b * half_b;
        let em = r.plus(&a.scaled(params.dt)).plus(&b.scaled(dw));
        self.remainder += 0.5 * self.r0.dot(&next.minus(&em));
    }

    pub(crate) fn finish(&self, n_steps: usize, final_state: &BlochVector, params: &SimParams, traj_index: u64) -> VelocitySample {
        let n = n_steps as f64;
        let lindblad_avg = self.drift_sum / n;
        let v = -lindblad_avg - (self.ito + self.remainder) / params.tau;
        let f_final = fidelity_bloch(&self.r0, final_state);
        VelocitySample {
            traj_index,
            v_conditioned: v,
            bures_final: angle_of(f_final),
            f_final,
            passage_time: None,
            lindblad_avg,
            ito_integral: self.ito,
            projection_remainder: self.remainder,
            innovation_sq_avg: self.innovation_sq / n,
        }
    }
}

/// Conditioned velocity of a complete trajectory.
pub fn conditioned_velocity(traj: &TrajectoryRecord, params: &SimParams) -> Result<VelocitySample> {
    let n = params.n_steps();
    if traj.wiener.len() != n || traj.states.len() != n + 1 {
        return Err(Error::Domain(format!(
            "trajectory {} has {} steps, expected {n}",
            traj.traj_index,
            traj.wiener.len()
        )));
    }
    let mut acc = VelocityAccumulator::new(params.initial);
    for (i, &dw) in traj.wiener.iter().enumerate() {
        acc.push(&traj.states[i], &traj.states[i + 1], dw, params);
    }
    Ok(acc.finish(n, &traj.final_state(), params, traj.traj_index))
}

/// An estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Minimum sample count for the variance estimators.
pub const MIN_VARIANCE_SAMPLES: usize = 100;

/// Variance of 𝒱_C from the three-term expression
/// E[A²] − 𝒱² + (2/τ)E[A·S] + (1/τ)E[C],
/// with A the time-averaged Liouvillian overlap, S the stochastic integral and
/// C the time-averaged squared innovation overlap; 𝒱 is the analytic
/// ensemble velocity.
pub fn velocity_variance_formula(samples: &[VelocitySample], params: &SimParams) -> Result<Estimate> {
    if samples.len() < MIN_VARIANCE_SAMPLES {
        return Err(Error::Domain(format!(
            "variance formula needs at least {MIN_VARIANCE_SAMPLES} trajectories, got {}",
            samples.len()
        )));
    }
    let v = ensemble_velocity(params);
    let tau = params.tau;
    let terms: Vec<f64> = samples
        .iter()
        .map(|s| {
            let a = s.lindblad_avg;
            a * a + 2.0 / tau * a * s.stochastic_integral() + s.innovation_sq_avg / tau
        })
        .collect();
    let (mean, se) = mean_and_se(&terms);
    Ok(Estimate {
        value: mean - v * v,
        std_error: se,
    })
}

/// Unbiased sample variance of 𝒱_C with the large-sample standard error
/// √((m₄ − s⁴)/M).
pub fn velocity_variance_sample(samples: &[VelocitySample]) -> Result<Estimate> {
    if samples.len() < MIN_VARIANCE_SAMPLES {
        return Err(Error::Domain(format!(
            "sample variance needs at least {MIN_VARIANCE_SAMPLES} trajectories, got {}",
            samples.len()
        )));
    }
    let v: Vec<f64> = samples.iter().map(|s| s.v_conditioned).collect();
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / m;
    Ok(Estimate {
        value: var,
        std_error: ((m4 - var * var).max(0.0) / m).sqrt(),
    })
}

pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Squared Bures line element dℒ² = Σ_{jk} 2|⟨j|dρ|k⟩|²/(p_j + p_k) in the
/// eigenbasis of ρ, skipping pairs with p_j + p_k ≤ 1e-12.
pub fn bures_line_element(rho: &DensityMatrix, drho: &Mat2) -> Result<f64> {
    if linalg::hermiticity_defect(drho) > EXACT_TOL {
        return Err(Error::Domain("dρ is not Hermitian".into()));
    }
    if linalg::trace(drho).norm() > EXACT_TOL {
        return Err(Error::Domain("dρ is not traceless".into()));
    }
    let (p, vecs) = linalg::hermitian_eigen(rho.matrix());
    let mut total = 0.0;
    for j in 0..2 {
        for k in 0..2 {
            let denom = p[j] + p[k];
            if denom > 1e-12 {
                total += 2.0 * linalg::sandwich(&vecs[j], drho, &vecs[k]).norm_sqr() / denom;
            }
        }
    }
    Ok(total)
}

/// Mean single-step dℒ² from a fixed state compared with 8κ·Var(σ_z)·dt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusivityReport {
    pub state: BlochVector,
    pub dt: f64,
    pub n_samples: usize,
    pub mean_dl2: f64,
    pub std_error: f64,
    pub predicted: f64,
    /// |mean − predicted|/predicted; `None` when the prediction is 0.
    pub relative_deviation: Option<f64>,
}

/// Samples one integrator step from `state` `n_samples` times and measures
/// the Bures line element of the finite difference.
pub fn diffusivity_at_state(
    params: &SimParams,
    state: BlochVector,
    n_samples: usize,
    seed: u64,
    fault: crate::sde::Fault,
) -> Result<DiffusivityReport> {
    if !state.is_pure() {
        return Err(Error::Domain("diffusivity is sampled from pure states".into()));
    }
    let rho = bloch_to_density(state)?;
    let mut rng = crate::sde::trajectory_rng(seed, 0);
    let sqrt_dt = params.dt.sqrt();
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let dw = crate::sde::gaussian_increment(&mut rng, sqrt_dt);
        let next = crate::sde::step_with_fault(&state, dw, params, fault).state;
        let drho = crate::state::bloch_combination(0.0, &next.minus(&state));
        values.push(bures_line_element(&rho, &drho)?);
    }
    let (mean, se) = mean_and_se(&values);
    let var_z = 1.0 - state.z * state.z;
    let predicted = 8.0 * params.kappa * var_z * params.dt;
    Ok(DiffusivityReport {
        state,
        dt: params.dt,
        n_samples,
        mean_dl2: mean,
        std_error: se,
        predicted,
        relative_deviation: (predicted > 0.0).then(|| (mean - predicted).abs() / predicted),
    })
}

/// Diffusivity at the pure x–z states with z ∈ {0, 0.5, 1}.
pub fn brownian_diffusivity_check(params: &SimParams, n_samples: usize) -> Result<Vec<DiffusivityReport>> {
    if n_samples < 1000 {
        return Err(Error::params("n_samples", "at least 1000 samples are needed"));
    }
    [0.0_f64, 0.5, 1.0]
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let state = BlochVector::raw((1.0 - z * z).sqrt(), 0.0, z);
            diffusivity_at_state(params, state, n_samples, params.seed.wrapping_add(i as u64), crate::sde::Fault::None)
        })
        .collect()
}

/// First time the trajectory's Bures angle reaches `target`, linearly
/// interpolated in ℒ between grid points.
pub fn passage_time(traj: &TrajectoryRecord, target_angle: f64) -> Option<f64> {
    passage_in(&traj.times, &traj.fidelity_path, target_angle)
}

pub(crate) fn passage_in(times: &[f64], fidelities: &[f64], target: f64) -> Option<f64> {
    if target <= 0.0 {
        return Some(0.0);
    }
    let mut prev = angle_of(*fidelities.first()?);
    if prev >= target {
        return Some(times[0]);
    }
    for i in 1..fidelities.len() {
        let cur = angle_of(fidelities[i]);
        if cur >= target {
            let frac = (target - prev) / (cur - prev);
            return Some(times[i - 1] + frac * (times[i] - times[i - 1]));
        }
        prev = cur;
    }
    None
}
