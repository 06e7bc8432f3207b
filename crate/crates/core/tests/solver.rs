mod common;

use common::solver_checks::{check_derivatives, compare_with_oracle, fit_rate, momentum_balance};
use common::{random_scene, RandomScene};
use mpm_core::contact::ContactParams;
use mpm_core::solver::{quasi_newton_solve, ContactProblem, SolverParams};
use mpm_core::Vec3;

#[test]
fn quasi_newton_matches_dense_newton() {
    for seed in 0..4 {
        let scene = random_scene(seed, 200);
        let r = compare_with_oracle(&scene);
        assert!(r.qn_converged, "seed {seed}: {r:?}");
        assert!(r.velocity_error <= 1e-6, "seed {seed}: {r:?}");
        assert!(r.balance_qn <= 1e-6 && r.balance_oracle <= 1e-6, "seed {seed}: {r:?}");
        assert!(r.strictly_decreasing, "seed {seed}");
        assert!(r.rate <= 0.99, "seed {seed}: {r:?}");
        assert!(r.init_difference <= 1e-5, "seed {seed}: {r:?}");
        assert_eq!(r.cone_violations, 0, "seed {seed}");
    }
}

#[test]
fn assembled_derivatives_match_dense_and_finite_differences() {
    for seed in 10..14 {
        let d = check_derivatives(&random_scene(seed, 200));
        assert!(d.gradient_error <= 1e-6, "seed {seed}: {d:?}");
        assert!(d.block_error <= 1e-12, "seed {seed}: {d:?}");
    }
}

#[test]
fn rate_fit_recovers_geometric_sequence() {
    let gaps: Vec<f64> = (0..30).map(|m| 3.0 * 0.7f64.powi(m)).collect();
    assert!((fit_rate(&gaps, 0.0) - 0.7).abs() < 1e-12);
    assert_eq!(fit_rate(&[1.0], 0.0), 0.0);
}

#[test]
fn no_contacts_returns_free_motion_velocity() {
    let mass = vec![1.0, 2.0, 0.0];
    let v_star = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, -1.0, 0.5), Vec3::zeros()];
    let p = ContactProblem::new(&mass, &v_star, &[], ContactParams::for_step(1e-3), 1e-3).unwrap();
    let sol = quasi_newton_solve(&p, &[Vec3::zeros(); 3], &SolverParams::default()).unwrap();
    assert_eq!(sol.velocity, v_star);
    assert!(sol.report.converged);
    assert!(sol.report.iterations <= 1);
}

#[test]
fn converged_solve_satisfies_momentum_balance_to_criterion() {
    let scene: RandomScene = random_scene(42, 200);
    let p = scene.problem();
    for eps_r in [1e-2, 1e-4, 1e-8] {
        let sol = quasi_newton_solve(&p, &scene.v0, &SolverParams::with_relative_tolerance(eps_r)).unwrap();
        assert!(sol.report.converged);
        // the criterion bounds exactly this scaled residual
        assert!(momentum_balance(&p, &sol.velocity) <= eps_r * (1.0 + 1e-9), "eps_r {eps_r}");
    }
}

#[test]
fn mismatched_initial_velocity_is_rejected() {
    let scene = random_scene(3, 50);
    let p = scene.problem();
    assert!(quasi_newton_solve(&p, &scene.v0[1..], &SolverParams::default()).is_err());
}
