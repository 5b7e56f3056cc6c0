use flexgt::algorithm::{init, run, run_from, stepsize_rule, AlgoConfig, SwarmState};
use flexgt::graph::{
    build_topology, make_operator, metropolis_weights, MixingOperator, Protocol, TopologyKind,
};
use flexgt::metrics::{
    check_convex_rate, check_lemmas, check_nc_rate, check_sc_contraction, measure, LyapunovCoeffs,
    TheoryParams,
};
use flexgt::problems::{make_least_squares, make_nonconvex, make_ridge, NodeRngs, Problem, Regime};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn exp5_op(alpha: u32) -> MixingOperator {
    let w = metropolis_weights(&build_topology(TopologyKind::Exponential, 20, Some(5)).unwrap()).unwrap();
    make_operator(&w, Protocol::Direct, alpha).unwrap()
}

fn config_for(problem: &Problem, op: &MixingOperator, beta: u32, scale: f64) -> AlgoConfig {
    let gamma = stepsize_rule(problem.regime(), problem.lipschitz(), beta, op.rho_bar()).unwrap();
    AlgoConfig::new(op.alpha(), beta, gamma * scale)
}

#[test]
fn measure_matches_double_loop() {
    let problem = make_ridge(3, 2, 0.7, 0.0, 5).unwrap();
    let x = DMatrix::from_row_slice(3, 2, &[0.3, -1.2, 2.0, 0.1, -0.4, 0.9]);
    let y = DMatrix::from_row_slice(3, 2, &[1.5, 0.2, -0.7, 0.0, 0.25, -3.0]);
    let state = SwarmState {
        z: x.clone(),
        gprev: y.clone(),
        x: x.clone(),
        y: y.clone(),
        round: 0,
        comp_steps: 0,
        comm_steps: 0,
    };
    let coeffs = LyapunovCoeffs::new(0.01, 3, problem.lipschitz(), 3, 0.4);
    let r = measure(&state, &problem, &coeffs);

    let mut xbar = [0.0; 2];
    let mut ybar = [0.0; 2];
    for i in 0..3 {
        for d in 0..2 {
            xbar[d] += x[(i, d)] / 3.0;
            ybar[d] += y[(i, d)] / 3.0;
        }
    }
    let (mut cons, mut track) = (0.0, 0.0);
    for i in 0..3 {
        for d in 0..2 {
            cons += (x[(i, d)] - xbar[d]).powi(2);
            track += (y[(i, d)] - ybar[d]).powi(2);
        }
    }
    let xs = problem.optimum().unwrap();
    let gap: f64 = (0..2).map(|d| (xbar[d] - xs[d]).powi(2)).sum();
    let xb = DVector::from_row_slice(&xbar);
    let mut grad = [0.0; 2];
    for i in 0..3 {
        let g = problem.grad(i, &xb).unwrap();
        for d in 0..2 {
            grad[d] += g[d] / 3.0;
        }
    }
    let gn = grad[0] * grad[0] + grad[1] * grad[1];

    assert!((r.cons_err - cons).abs() < 1e-12);
    assert!((r.track_err - track).abs() < 1e-12);
    assert!((r.opt_gap.unwrap() - gap).abs() < 1e-12);
    assert!((r.grad_norm_sq - gn).abs() < 1e-12);
    let v = gap + coeffs.c_x * cons + coeffs.c_y * track;
    assert!((r.lyapunov.unwrap() - v).abs() < 1e-12);
}

#[test]
fn noiseless_contraction_holds_every_round() {
    let problem = make_ridge(20, 10, 1.0, 0.0, 7).unwrap();
    let op = exp5_op(2);
    let cfg = config_for(&problem, &op, 3, 1.0);
    let traj = run(&problem, &cfg, &op, 200, 0).unwrap();
    let params = TheoryParams::new(&problem, &cfg, op.rho_bar());
    let report = check_sc_contraction(std::slice::from_ref(&traj), &params, 1.0).unwrap();
    assert!(report.passed, "first violation {:?}", report.first_violation);
    assert_eq!(report.margins.len(), 200);
    for w in traj.records[1..].windows(2) {
        assert!(w[1].lyapunov.unwrap() <= w[0].lyapunov.unwrap());
    }
}

#[test]
fn reported_factor_is_centralized_rate_when_it_binds() {
    let problem = make_ridge(20, 10, 0.001, 0.0, 7).unwrap();
    let op = exp5_op(2);
    let cfg = config_for(&problem, &op, 3, 1.0);
    let params = TheoryParams::new(&problem, &cfg, op.rho_bar());
    let rate = 0.001 * 3.0 * cfg.gamma / 2.0;
    assert!(rate < (1.0 - op.rho_bar()) / 8.0);
    assert!((params.sc_factor() - (1.0 - rate)).abs() < 1e-16);
}

#[test]
fn optimum_is_a_fixed_point_of_v() {
    // Identical nodes: at x* every local gradient vanishes, so the state is
    // optimal, in consensus and has zero tracking error.
    let h = DMatrix::from_fn(20, 3, |_, d| 0.2 + 0.3 * d as f64);
    let problem = Problem::ridge(h, DVector::from_element(20, 0.6), 1.0, 0.0).unwrap();
    let op = exp5_op(2);
    let cfg = config_for(&problem, &op, 3, 1.0);
    let xs = problem.optimum().unwrap().clone();
    let traj = run_from(&problem, &cfg, &op, 50, 0, &xs).unwrap();
    assert!(traj.records.iter().all(|r| r.lyapunov.unwrap() < 1e-28));
    let params = TheoryParams::new(&problem, &cfg, op.rho_bar());
    let report = check_sc_contraction(&[traj], &params, 1.0).unwrap();
    assert!(report.margins.iter().all(|m| m.lhs < 1e-28));
}

#[test]
fn lemma_inequalities_hold_with_rule_stepsize() {
    let problem = make_ridge(20, 10, 1.0, 0.0, 7).unwrap();
    for (alpha, beta) in [(1, 1), (2, 3), (3, 3), (1, 5)] {
        let op = exp5_op(alpha);
        let cfg = config_for(&problem, &op, beta, 1.0);
        let report = check_lemmas(&problem, &cfg, &op, 500, 0, &DVector::zeros(10)).unwrap();
        assert!(
            report.passed(),
            "alpha {alpha} beta {beta}: {:?}",
            (
                report.client_divergence.first_violation,
                report.consensus.first_violation,
                report.tracking.first_violation
            )
        );
    }
}

#[test]
fn inflated_stepsize_breaks_contraction() {
    let problem = make_ridge(20, 10, 1.0, 0.0, 7).unwrap();
    let op = exp5_op(2);
    let cfg = config_for(&problem, &op, 3, 10.0);
    let traj = run(&problem, &cfg, &op, 500, 0).unwrap();
    let report =
        check_sc_contraction(&[traj], &TheoryParams::new(&problem, &cfg, op.rho_bar()), 1.0).unwrap();
    assert!(!report.passed);
    assert!(report.first_violation.is_some());
}

#[test]
fn noiseless_convex_rate_at_several_horizons() {
    let problem = make_least_squares(20, 10, 0.0, 3).unwrap();
    let op = exp5_op(2);
    let cfg = config_for(&problem, &op, 3, 1.0);
    let traj = run(&problem, &cfg, &op, 1000, 0).unwrap();
    let params = TheoryParams::new(&problem, &cfg, op.rho_bar());
    let report = check_convex_rate(&[traj], &params, &[1, 10, 100, 1000], 1.0).unwrap();
    assert!(report.passed, "{:?}", report.margins);
}

#[test]
fn noiseless_nonconvex_rate_at_several_horizons() {
    let problem = make_nonconvex(20, 10, 0.0, 3).unwrap();
    let op = exp5_op(2);
    let cfg = config_for(&problem, &op, 3, 1.0);
    let traj = run(&problem, &cfg, &op, 1000, 0).unwrap();
    let params = TheoryParams::new(&problem, &cfg, op.rho_bar());
    let report = check_nc_rate(&[traj], &params, &[10, 100, 1000], 1.0).unwrap();
    assert!(report.passed, "{:?}", report.margins);
}

#[test]
fn stationary_start_has_zero_lhs() {
    // The minimizer of a convex instance is stationary for f, so the
    // averaged gradient norm is zero up to rounding from the start.
    let problem = make_ridge(20, 10, 1.0, 0.0, 2).unwrap();
    let op = exp5_op(1);
    let cfg = config_for(&problem, &op, 1, 1.0);
    let xs = problem.optimum().unwrap().clone();
    let traj = run_from(&problem, &cfg, &op, 10, 0, &xs).unwrap();
    let params = TheoryParams::new(&problem, &cfg, op.rho_bar());
    let report = check_nc_rate(&[traj], &params, &[1, 10], 1.0).unwrap();
    assert!(report.margins[0].lhs < 1e-25);
    assert!(report.passed);
}

#[test]
fn mismatched_ensemble_rejected() {
    let problem = make_ridge(4, 2, 1.0, 0.0, 0).unwrap();
    let w = metropolis_weights(&build_topology(TopologyKind::Ring, 4, None).unwrap()).unwrap();
    let op = make_operator(&w, Protocol::Direct, 1).unwrap();
    let cfg = AlgoConfig::new(1, 1, 0.01);
    let a = run(&problem, &cfg, &op, 5, 0).unwrap();
    let b = run(&problem, &cfg, &op, 6, 0).unwrap();
    let params = TheoryParams::new(&problem, &cfg, op.rho_bar());
    assert!(check_sc_contraction(&[a, b], &params, 1.0).is_err());
    assert!(check_sc_contraction(&[], &params, 1.0).is_err());
}

#[test]
fn initial_state_has_zero_consensus_error() {
    let problem = make_ridge(6, 3, 1.0, 0.2, 1).unwrap();
    let mut rngs = NodeRngs::new(0, 6);
    let s = init(&problem, &DVector::from_element(3, 2.0), &mut rngs).unwrap();
    let r = measure(&s, &problem, &LyapunovCoeffs::new(0.1, 1, 1.0, 6, 0.5));
    assert_eq!(r.cons_err, 0.0);
    assert!(r.track_err > 0.0);
}

proptest! {
    #[test]
    fn lyapunov_coefficients_nonnegative(
        gamma in 1e-6f64..1.0,
        beta in 1u32..50,
        l in 1e-3f64..100.0,
        n in 1usize..100,
        rho in 0.0f64..0.999,
    ) {
        let c = LyapunovCoeffs::new(gamma, beta, l, n, rho);
        prop_assert!(c.c_x > 0.0);
        prop_assert!(c.c_y >= 0.0);
        prop_assert_eq!(c.c_y == 0.0, rho == 0.0);
    }

    #[test]
    fn regime_rule_is_minimum_of_terms(l in 0.01f64..50.0, beta in 1u32..20, rho in 0.0f64..0.99) {
        for regime in [Regime::StronglyConvex, Regime::Nonconvex] {
            let g = stepsize_rule(regime, l, beta, rho).unwrap();
            let bl = beta as f64 * l;
            let (first, mid) = if regime == Regime::Nonconvex { (1.0 / (4.0 * bl), 14.0) } else { (1.0 / (4.0 * 2f64.sqrt() * bl), 18.0) };
            prop_assert!(g <= first);
            if rho > 0.0 {
                prop_assert!(g <= (1.0 - rho) / (mid * bl * rho.sqrt()));
                prop_assert!(g <= (1.0 - rho).powi(2) / (40.0 * bl * rho));
            } else {
                prop_assert_eq!(g, first);
            }
        }
    }
}
