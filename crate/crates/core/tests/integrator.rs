//! Wiener increments, single steps, whole trajectories and dt refinement.

use qsl_core::kernels::{bloch_diffusion, bloch_drift};
use qsl_core::metrics::fidelity_bloch;
use qsl_core::sde::{
    convergence_check, simulate_trajectory, step_euler_maruyama, trajectory_rng, wiener_stream,
    EXCURSION_FLAG,
};
use qsl_core::state::purity_bloch;
use qsl_core::{BlochVector, SimParams};

#[test]
fn wiener_stream_is_reproducible() {
    let a = wiener_stream(1000, 1e-3, 9);
    let b = wiener_stream(1000, 1e-3, 9);
    assert_eq!(a.increments, b.increments);
    let c = wiener_stream(1000, 1e-3, 10);
    assert_ne!(a.increments, c.increments);
}

#[test]
fn wiener_increment_statistics() {
    let n = 1_000_000;
    let dt = 1e-3;
    let w = wiener_stream(n, dt, 42).increments;
    let mean = w.iter().sum::<f64>() / n as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // Mean of n draws with std √dt has standard error √(dt/n).
    assert!(mean.abs() <= 5.0 * (dt / n as f64).sqrt(), "mean {mean:e}");
    assert!((0.9 * dt..=1.1 * dt).contains(&var), "variance {var:e}");
    // Lag-one correlation of independent draws is O(1/√n).
    let lag = w.windows(2).map(|p| p[0] * p[1]).sum::<f64>() / (n - 1) as f64;
    assert!((lag / var).abs() <= 5.0 / (n as f64).sqrt(), "lag-one correlation {}", lag / var);
}

#[test]
fn trajectory_streams_are_distinct() {
    use rand::Rng;
    let mut a = trajectory_rng(42, 0);
    let mut b = trajectory_rng(42, 1);
    let xa: Vec<u64> = (0..8).map(|_| a.random()).collect();
    let xb: Vec<u64> = (0..8).map(|_| b.random()).collect();
    assert_ne!(xa, xb);
}

#[test]
fn unitary_step_has_no_noise() {
    let p = SimParams::default().with_kappa(0.0);
    let r = BlochVector::raw(0.6, 0.0, 0.8);
    let quiet = step_euler_maruyama(&r, 0.0, &p).state;
    let loud = step_euler_maruyama(&r, 0.37, &p).state;
    assert_eq!(quiet, loud);
}

#[test]
fn step_from_pole() {
    // Diffusion vanishes at the pole; only the drift (ω dt, 0, 0) moves it.
    let p = SimParams::default();
    let dt = p.dt;
    for dw in [-0.05, 0.0, 0.05] {
        let next = step_euler_maruyama(&BlochVector::PLUS_Z, dw, &p).state;
        let expected = BlochVector::raw(p.omega * dt, 0.0, 1.0);
        // Projection back to the sphere changes z at second order in dt.
        assert!(next.minus(&expected).norm() <= (p.omega * dt).powi(2), "dW = {dw}");
    }
}

#[test]
fn step_from_equator_moves_z_by_diffusion() {
    let p = SimParams::default();
    let sqrt_dt = p.dt.sqrt();
    let r = BlochVector::PLUS_X;
    let next = step_euler_maruyama(&r, sqrt_dt, &p);
    let raw = r
        .plus(&bloch_drift(&r, &p).scaled(p.dt))
        .plus(&bloch_diffusion(&r, &p).scaled(sqrt_dt));
    let jump = 2.0 * (2.0 * p.kappa).sqrt() * sqrt_dt;
    // z also drifts by −ω·x·dt, one order below the jump.
    assert!((raw.z - r.z - (jump - p.omega * p.dt)).abs() < 1e-15);
    assert!((next.state.z - jump).abs() <= 2.0 * p.omega * p.dt);
    // Only the projection separates the stored state from the raw step.
    assert!(next.state.minus(&raw.scaled(1.0 / raw.norm())).norm() < 1e-15);
    assert!((next.raw_norm - raw.norm()).abs() < 1e-15);
}

#[test]
fn record_layout() {
    let p = SimParams::default().with_seed(7);
    let rec = simulate_trajectory(&p, 3).unwrap();
    assert_eq!(rec.states.len(), 1001);
    assert_eq!(rec.times.len(), 1001);
    assert_eq!(rec.fidelity_path.len(), 1001);
    assert_eq!(rec.wiener.len(), 1000);
    assert_eq!(rec.traj_index, 3);
    assert_eq!(rec.seed_used, 7);
    assert_eq!(rec.states[0], p.initial);
    assert!((rec.times[1000] - 1.0).abs() < 1e-12);
    for (r, f) in rec.states.iter().zip(&rec.fidelity_path) {
        assert!((fidelity_bloch(&p.initial, r) - f).abs() < 1e-15);
    }
}

#[test]
fn trajectories_are_deterministic() {
    let p = SimParams::default();
    let a = simulate_trajectory(&p, 5).unwrap();
    let b = simulate_trajectory(&p, 5).unwrap();
    assert_eq!(a, b);
    let c = simulate_trajectory(&p, 6).unwrap();
    assert_ne!(a.wiener, c.wiener);
}

#[test]
fn unitary_trajectory_is_a_rotation() {
    let p = SimParams::default()
        .with_kappa(0.0)
        .with_initial(BlochVector::PLUS_Z)
        .with_tau(3.0);
    let rec = simulate_trajectory(&p, 0).unwrap();
    let end = rec.final_state();
    let wt = p.omega * p.tau;
    let expected = BlochVector::raw(wt.sin(), 0.0, wt.cos());
    assert!(end.minus(&expected).norm() <= p.omega * p.dt, "{end:?}");
}

#[test]
fn pure_states_stay_pure() {
    for kappa in [0.1, 0.25, 1.0] {
        let p = SimParams::default().with_kappa(kappa).with_initial(BlochVector::PLUS_Z);
        for k in 0..20 {
            let rec = simulate_trajectory(&p, k).unwrap();
            let worst = rec.states.iter().map(|r| 1.0 - purity_bloch(r)).fold(0.0, f64::max);
            assert!(worst <= 10.0 * p.dt * kappa, "κ = {kappa}, traj {k}: {worst:e}");
        }
    }
}

#[test]
fn excursion_counter_matches_replayed_steps() {
    for kappa in [0.1, 1.0] {
        let p = SimParams::default().with_kappa(kappa);
        for k in 0..20 {
            let rec = simulate_trajectory(&p, k).unwrap();
            let mut flagged = 0;
            for (pair, dw) in rec.states.windows(2).zip(&rec.wiener) {
                let step = step_euler_maruyama(&pair[0], *dw, &p);
                assert_eq!(step.state, pair[1]);
                if step.excursion() > EXCURSION_FLAG {
                    flagged += 1;
                }
            }
            assert_eq!(rec.large_excursions, flagged);
        }
    }
}

#[test]
fn no_step_leaves_the_sphere_by_more_than_one_percent() {
    // At dt = 1e-3/ω and κ ≤ ω a run is expected to need no correction
    // beyond 1% of the norm.
    for kappa in [0.1, 0.25, 0.5, 1.0] {
        let p = SimParams::default().with_kappa(kappa);
        let flagged: u32 = (0..1000)
            .map(|k| simulate_trajectory(&p, k).unwrap().large_excursions)
            .sum();
        assert_eq!(flagged, 0, "κ = {kappa}: {flagged} steps over 1000 trajectories");
    }
}

#[test]
fn excessive_step_is_an_error() {
    let p = SimParams::default().with_kappa(50.0).with_dt(0.05).with_tau(5.0);
    let err = (0..20).find_map(|k| simulate_trajectory(&p, k).err());
    let err = err.expect("a huge dt must trip the excursion guard");
    assert!(err.is_numerical(), "{err}");
}

#[test]
fn unitary_convergence_is_first_order_or_better() {
    let p = SimParams::default().with_kappa(0.0);
    let rep = convergence_check(&p).unwrap();
    assert!(rep.strong_order >= 0.9, "order {}", rep.strong_order);
    for w in rep.strong_errors.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn strong_order_under_measurement() {
    for kappa in [0.1, 0.25, 1.0] {
        let rep = convergence_check(&SimParams::default().with_kappa(kappa)).unwrap();
        assert!((0.4..=1.1).contains(&rep.strong_order), "κ = {kappa}: order {}", rep.strong_order);
    }
}

#[test]
fn purity_defect_vanishes_linearly() {
    let rep = convergence_check(&SimParams::default()).unwrap();
    assert!((0.8..=1.2).contains(&rep.purity_order), "order {}", rep.purity_order);
    for w in rep.purity_defects.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..=2.4).contains(&ratio), "halving ratio {ratio}");
    }
}

#[test]
fn strong_error_at_default_step_below_one_percent() {
    // Self-convergence against a dt/128 reference on shared Brownian paths.
    let rep = convergence_check(&SimParams::default()).unwrap();
    let err = rep.strong_errors[0];
    assert!(err < 1e-2, "strong error {err:.4} at dt = {:e}", rep.dts[0]);
}
