//! Self-checks of the simulator: representation equivalence, analytic
//! identities, statistical agreement with the ensemble solution, and
//! integrator convergence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{ensemble_mean_path_with, run_ensemble_with, EnsembleOptions};
use crate::error::Result;
use crate::kernels::{bloch_drift, innovation_matrix, liouvillian_matrix};
use crate::metrics::{
    diffusivity_at_state, ensemble_velocity, ensemble_velocity_from_fidelity,
    ensemble_velocity_quadrature, liouvillian_norm, liouvillian_norm_svd, qsl_velocity,
};
use crate::params::SimParams;
use crate::sde::{convergence_check_with, trajectory_rng, Fault};
use crate::state::{bloch_combination, pauli_components, BlochVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: String,
    pub passed: bool,
    /// Informational checks are reported but do not decide the verdict.
    pub gating: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Trajectories per statistical check.
    pub n_traj: u64,
    pub diffusivity_samples: usize,
    pub convergence_paths: usize,
    /// Kernel corruption injected into every integrator call.
    pub fault: Fault,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            n_traj: 10_000,
            diffusivity_samples: 10_000,
            convergence_paths: 200,
            fault: Fault::None,
        }
    }
}

const N_RANDOM_STATES: usize = 1000;

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn record(&mut self, name: &str, measured: f64, expected: String, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            measured,
            expected,
            passed,
            gating: true,
            detail,
        });
    }

    fn info(&mut self, name: &str, measured: f64, expected: String, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            measured,
            expected,
            passed: true,
            gating: false,
            detail,
        });
    }

    /// A check whose computation itself failed counts as failed.
    fn failed(&mut self, name: &str, err: &crate::Error) {
        self.record(name, f64::NAN, "computation succeeds".into(), false, err.to_string());
    }
}

fn random_unit_ball(seed: u64, n: usize) -> Vec<BlochVector> {
    let mut rng = trajectory_rng(seed, u64::MAX);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = BlochVector::raw(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_sqr() <= 1.0 {
            out.push(v);
        }
    }
    out
}

pub fn run_validation(params: &SimParams, opts: &ValidationOptions) -> Result<ValidationReport> {
    params.validate()?;
    let mut suite = Suite { checks: Vec::new() };
    representation(&mut suite, params, opts);
    analytic(&mut suite, params);
    statistics(&mut suite, params, opts);
    diffusivity(&mut suite, params, opts);
    mean_paths(&mut suite, params, opts);
    convergence(&mut suite, params, opts);
    let passed = suite.checks.iter().all(|c| c.passed || !c.gating);
    Ok(ValidationReport {
        checks: suite.checks,
        passed,
    })
}

fn representation(suite: &mut Suite, params: &SimParams, opts: &ValidationOptions) {
    let states = random_unit_ball(params.seed, N_RANDOM_STATES);
    let (mut drift_err, mut diff_err, mut norm_err) = (0.0_f64, 0.0_f64, 0.0_f64);
    for r in &states {
        let rho = bloch_combination(1.0, r);
        let drift = pauli_components(&liouvillian_matrix(&rho, params));
        let diff = pauli_components(&innovation_matrix(&rho, params));
        drift_err = drift_err.max(drift.minus(&bloch_drift(r, params)).norm());
        diff_err = diff_err.max(diff.minus(&opts.fault.diffusion(r, params)).norm());
        norm_err = norm_err.max((liouvillian_norm(r, params) - liouvillian_norm_svd(r, params)).abs());
    }
    let detail = format!("{N_RANDOM_STATES} random states in the Bloch ball");
    suite.record("drift_matches_liouvillian", drift_err, "<= 1e-12".into(), drift_err <= 1e-12, detail.clone());
    suite.record("diffusion_matches_innovation", diff_err, "<= 1e-12".into(), diff_err <= 1e-12, detail.clone());
    suite.record("svd_norm_matches_radical", norm_err, "<= 1e-10".into(), norm_err <= 1e-10, detail);
}

fn analytic(suite: &mut Suite, params: &SimParams) {
    let v = ensemble_velocity(params);
    let vq = ensemble_velocity_quadrature(params);
    let vf = ensemble_velocity_from_fidelity(params);
    let spread = (v - vq).abs().max((v - vf).abs());
    suite.record(
        "ensemble_velocity_three_routes",
        spread,
        "<= 1e-8".into(),
        spread <= 1e-8,
        format!("closed form {v:.12}, quadrature {vq:.12}, fidelity {vf:.12}"),
    );
    let v_qsl = qsl_velocity(params);
    suite.record(
        "ensemble_below_speed_limit",
        v - v_qsl,
        "<= 1e-12".into(),
        v <= v_qsl + crate::state::EXACT_TOL,
        format!("V = {v:.10}, V_QSL = {v_qsl:.10}"),
    );
}

fn statistics(suite: &mut Suite, params: &SimParams, opts: &ValidationOptions) {
    let p = params.with_n_traj(opts.n_traj);
    let ens_opts = EnsembleOptions {
        fault: opts.fault,
        ..EnsembleOptions::default()
    };
    let stats = match run_ensemble_with(&p, &ens_opts) {
        Ok(run) => run.stats,
        Err(e) => {
            suite.failed("ensemble_statistics", &e);
            return;
        }
    };
    let v = stats.qsl.v_ensemble;
    let z = (stats.mean_vc - v).abs() / stats.se_mean_vc;
    suite.record(
        "mean_conditioned_velocity",
        stats.mean_vc,
        format!("{v:.8} within 3 standard errors"),
        z <= 3.0,
        format!("{:.2} standard errors, M = {}", z, p.n_traj),
    );
    suite.record(
        "fidelity_velocity_identity",
        stats.max_identity_residual,
        "<= 1e-6 for every trajectory".into(),
        stats.max_identity_residual <= 1e-6,
        "max |V_C tau - sin^2 L_C(tau)|".into(),
    );
    let cap = 1.0 / p.tau + 1e-6;
    suite.record(
        "velocity_below_one_over_tau",
        stats.max_vc,
        format!("<= {cap:.8}"),
        stats.max_vc <= cap,
        "largest conditioned velocity".into(),
    );
    if let (Some(s), Some(f)) = (stats.var_vc_sample, stats.var_vc_formula) {
        let combined = (s.std_error.powi(2) + f.std_error.powi(2)).sqrt();
        let dev = (s.value - f.value).abs();
        suite.record(
            "variance_formula_vs_sample",
            f.value,
            format!("{:.8} within 3 combined standard errors", s.value),
            dev <= 3.0 * combined,
            format!("{:.2} combined standard errors", dev / combined),
        );
    }
    suite.info(
        "large_norm_excursions",
        stats.clamp_events as f64,
        "0 (flag only)".into(),
        "integrator steps whose raw norm left the sphere by more than 1% before projection".into(),
    );
}

fn diffusivity(suite: &mut Suite, params: &SimParams, opts: &ValidationOptions) {
    let dt = 1e-4 / params.omega;
    let p = params.with_dt(dt);
    for (i, z) in [0.0_f64, 0.5].into_iter().enumerate() {
        let state = BlochVector::raw((1.0 - z * z).sqrt(), 0.0, z);
        let name = format!("diffusivity_z_{z}");
        match diffusivity_at_state(&p, state, opts.diffusivity_samples, params.seed.wrapping_add(i as u64), opts.fault) {
            Ok(rep) => {
                let dev = rep.relative_deviation.unwrap_or(f64::INFINITY);
                suite.record(
                    &name,
                    rep.mean_dl2 / dt,
                    format!("{:.8} within 5%", rep.predicted / dt),
                    dev <= 0.05,
                    format!("mean dL^2/dt over {} steps, relative deviation {:.4}", rep.n_samples, dev),
                );
            }
            Err(e) => suite.failed(&name, &e),
        }
    }
    match diffusivity_at_state(&p, BlochVector::PLUS_Z, opts.diffusivity_samples, params.seed, opts.fault) {
        Ok(rep) => {
            let scale = (params.omega * dt).powi(2);
            suite.record(
                "diffusivity_at_pole",
                rep.mean_dl2 / scale,
                "<= 2 (in units of (omega dt)^2)".into(),
                rep.mean_dl2 <= 2.0 * scale,
                "second-order growth where Var(sigma_z) = 0".into(),
            );
        }
        Err(e) => suite.failed("diffusivity_at_pole", &e),
    }
}

fn mean_paths(suite: &mut Suite, params: &SimParams, opts: &ValidationOptions) {
    for ratio in [0.1, 0.25, 0.5, 1.0] {
        let p = params.with_kappa(ratio * params.omega).with_n_traj(opts.n_traj);
        let name = format!("ensemble_mean_path_kappa_{ratio}");
        match ensemble_mean_path_with(&p, 10, opts.fault) {
            Ok(path) => {
                let z = path.worst_z_score(mean_path_bias(&p));
                suite.record(
                    &name,
                    z,
                    "<= 3 standard errors at every 10th grid point".into(),
                    z <= 3.0,
                    format!("M = {}, slack omega*dt for the O(dt) weak error", p.n_traj),
                );
            }
            Err(e) => suite.failed(&name, &e),
        }
    }
}

/// Absolute slack for the O(dt) weak error of the integrator, plus rounding.
pub fn mean_path_bias(params: &SimParams) -> f64 {
    params.omega * params.dt + 1e-12
}

fn convergence(suite: &mut Suite, params: &SimParams, opts: &ValidationOptions) {
    let rep = match convergence_check_with(params, opts.convergence_paths, opts.fault) {
        Ok(r) => r,
        Err(e) => {
            suite.failed("convergence", &e);
            return;
        }
    };
    let (lo, hi) = if params.kappa > 0.0 { (0.4, 1.1) } else { (0.9, f64::INFINITY) };
    suite.record(
        "strong_order",
        rep.strong_order,
        format!("in [{lo}, {hi}]"),
        rep.strong_order >= lo && rep.strong_order <= hi,
        format!("errors {:?} at dt {:?}", rep.strong_errors, rep.dts),
    );
    suite.info(
        "strong_error_at_dt",
        rep.strong_errors[0],
        "< 1e-2 (flag only)".into(),
        format!("mean |r_dt(tau) - r_ref(tau)|, reference dt = {:e}", rep.dt_reference),
    );
    if params.kappa > 0.0 {
        suite.record(
            "purity_defect_order",
            rep.purity_order,
            "in [0.8, 1.2]".into(),
            (0.8..=1.2).contains(&rep.purity_order),
            format!("mean per-step defect {:?}", rep.purity_defects),
        );
        suite.record(
            "projection_remainder_order",
            rep.remainder_order,
            ">= 0.35".into(),
            rep.remainder_order >= 0.35,
            format!("rms remainder {:?}", rep.remainder_rms),
        );
    }
}
