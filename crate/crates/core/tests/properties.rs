//! Property-based checks of the representation, kernel and metric invariants.

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qsl_core::ensemble::{histogram, violation_fraction};
use qsl_core::io::{fmt_f64, parse_list};
use qsl_core::kernels::{
    bloch_diffusion, bloch_drift, ensemble_state_analytic, innovation, liouvillian,
};
use qsl_core::linalg::{hermiticity_defect, trace, Mat2};
use qsl_core::metrics::{
    bures_angle, bures_line_element, conditioned_velocity, ensemble_velocity, fidelity,
    fidelity_bloch, liouvillian_norm, liouvillian_norm_svd, qsl_velocity, VelocitySample,
};
use qsl_core::sde::{simulate_trajectory, step_euler_maruyama};
use qsl_core::state::{bloch_to_density, density_to_bloch, pauli_components, purity, purity_bloch};
use qsl_core::{BlochVector, SimParams};

fn ball() -> impl Strategy<Value = BlochVector> {
    (0.0..=1.0f64, -1.0..=1.0f64, 0.0..std::f64::consts::TAU)
        .prop_map(|(rad, cos_t, phi)| {
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let r = rad.cbrt();
            BlochVector::raw(r * sin_t * phi.cos(), r * sin_t * phi.sin(), r * cos_t)
        })
}

fn sphere() -> impl Strategy<Value = BlochVector> {
    (-1.0..=1.0f64, 0.0..std::f64::consts::TAU).prop_map(|(cos_t, phi)| {
        let sin_t = (1.0 - cos_t * cos_t).sqrt();
        let v = BlochVector::raw(sin_t * phi.cos(), sin_t * phi.sin(), cos_t);
        v.scaled(1.0 / v.norm())
    })
}

fn rates() -> impl Strategy<Value = (f64, f64)> {
    (0.1..3.0f64, 0.0..2.0f64)
}

fn params(omega: f64, kappa: f64) -> SimParams {
    SimParams {
        omega,
        kappa,
        ..SimParams::default()
    }
}

fn max_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut m = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            m = m.max((a[i][j] - b[i][j]).norm());
        }
    }
    m
}

proptest! {
    #[test]
    fn matrix_bloch_round_trip(r in ball()) {
        let rho = bloch_to_density(r).unwrap();
        let back = density_to_bloch(&rho).unwrap();
        prop_assert!(back.minus(&r).norm() <= 1e-12);
        let again = bloch_to_density(back).unwrap();
        prop_assert!(max_diff(rho.matrix(), again.matrix()) <= 1e-12);
        prop_assert!((purity(&rho) - purity_bloch(&r)).abs() <= 1e-12);
        prop_assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&purity(&rho)));
    }

    #[test]
    fn kernels_are_traceless_hermitian((omega, kappa) in rates(), r in ball()) {
        let p = params(omega, kappa);
        let rho = bloch_to_density(r).unwrap();
        for k in [liouvillian(&rho, &p), innovation(&rho, &p)] {
            prop_assert!(trace(&k).norm() <= 1e-12);
            prop_assert!(hermiticity_defect(&k) <= 1e-12);
        }
        let drift = pauli_components(&liouvillian(&rho, &p));
        let diff = pauli_components(&innovation(&rho, &p));
        prop_assert!(drift.minus(&bloch_drift(&r, &p)).norm() <= 1e-12);
        prop_assert!(diff.minus(&bloch_diffusion(&r, &p)).norm() <= 1e-12);
    }

    #[test]
    fn diffusion_is_tangent_on_the_sphere((omega, kappa) in rates(), r in sphere()) {
        let p = params(omega, kappa);
        prop_assert!(r.dot(&bloch_diffusion(&r, &p)).abs() <= 1e-12);
        // The drift points inward (or along the sphere) on pure states.
        prop_assert!(r.dot(&bloch_drift(&r, &p)) <= 1e-12);
    }

    #[test]
    fn norm_representations_agree((omega, kappa) in rates(), r in ball()) {
        let p = params(omega, kappa);
        let a = liouvillian_norm(&r, &p);
        prop_assert!((a - liouvillian_norm_svd(&r, &p)).abs() <= 1e-10);
        prop_assert!((a - 0.5 * bloch_drift(&r, &p).norm()).abs() <= 1e-12);
    }

    #[test]
    fn ensemble_solution_stays_in_the_ball((omega, kappa) in rates(), r0 in sphere(), t in 0.0..20.0f64) {
        let p = params(omega, kappa).with_initial(r0);
        let r = ensemble_state_analytic(t, &p);
        prop_assert!(r.norm() <= 1.0 + 1e-10);
        let f = fidelity_bloch(&r0, &r);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
    }

    #[test]
    fn velocity_below_speed_limit((omega, kappa) in rates(), r0 in sphere(), tau in 0.05..15.0f64) {
        let p = params(omega, kappa).with_initial(r0).with_tau(tau);
        let v = ensemble_velocity(&p);
        prop_assert!(v >= -1e-12);
        prop_assert!(v <= qsl_velocity(&p) + 1e-9);
        prop_assert!(v <= 1.0 / tau + 1e-12);
    }

    #[test]
    fn fidelity_and_angle(a in sphere(), b in ball()) {
        let f = fidelity(&bloch_to_density(a).unwrap(), &bloch_to_density(b).unwrap()).unwrap();
        prop_assert!((f - fidelity_bloch(&a, &b)).abs() <= 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
        let angle = bures_angle(f.clamp(0.0, 1.0)).unwrap();
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&angle));
        prop_assert!((angle.cos().powi(2) - f.clamp(0.0, 1.0)).abs() <= 1e-12);
    }

    #[test]
    fn step_keeps_pure_states_pure((omega, kappa) in rates(), r in sphere(), xi in -4.0..4.0f64) {
        let p = params(omega, kappa);
        let out = step_euler_maruyama(&r, xi * p.dt.sqrt(), &p);
        prop_assert!((out.state.norm() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn line_element_is_non_negative(r in ball(), d in ball(), eps in 1e-6..1e-2f64) {
        let rho = bloch_to_density(r).unwrap();
        let drho: Mat2 = [
            [C64::new(eps * d.z, 0.0), C64::new(eps * d.x, -eps * d.y)],
            [C64::new(eps * d.x, eps * d.y), C64::new(-eps * d.z, 0.0)],
        ];
        prop_assert!(bures_line_element(&rho, &drho).unwrap() >= 0.0);
    }

    #[test]
    fn histogram_is_normalized(values in prop::collection::vec(-1e3..1e3f64, 1..400), bins in 2usize..80) {
        let h = histogram(&values, bins).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>(), values.len() as u64);
        prop_assert!((h.integral() - 1.0).abs() <= 1e-9);
        let mut rev = values.clone();
        rev.reverse();
        prop_assert_eq!(h, histogram(&rev, bins).unwrap());
    }

    #[test]
    fn violation_fraction_counts(values in prop::collection::vec(0.0..1.0f64, 1..200), limit in 0.0..1.0f64) {
        let samples: Vec<VelocitySample> = values.iter().map(|&v| VelocitySample {
            traj_index: 0, v_conditioned: v, bures_final: 0.0, f_final: 1.0, passage_time: None,
            lindblad_avg: 0.0, ito_integral: 0.0, projection_remainder: 0.0, innovation_sq_avg: 0.0,
        }).collect();
        let f = violation_fraction(&samples, limit).unwrap();
        let expected = values.iter().filter(|&&v| v > limit).count() as f64 / values.len() as f64;
        prop_assert_eq!(f, expected);
    }

    #[test]
    fn list_and_float_round_trip(values in prop::collection::vec(-1e6..1e6f64, 1..10)) {
        let text: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        prop_assert_eq!(parse_list("kappas", &text.join(",")).unwrap(), values);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conditioned_velocity_identity(kappa in 0.0..1.0f64, r0 in sphere(), seed in any::<u64>(), k in 0u64..1000) {
        let p = SimParams::default().with_kappa(kappa).with_initial(r0).with_seed(seed);
        let rec = simulate_trajectory(&p, k).unwrap();
        let s = conditioned_velocity(&rec, &p).unwrap();
        let f_end = *rec.fidelity_path.last().unwrap();
        prop_assert!((s.v_conditioned * p.tau - (1.0 - f_end)).abs() <= 1e-6);
        prop_assert!(s.v_conditioned <= 1.0 / p.tau + 1e-6);
        prop_assert!(rec.states.iter().all(|r| (r.norm() - 1.0).abs() <= 1e-12));
        prop_assert_eq!(rec, simulate_trajectory(&p, k).unwrap());
    }
}
