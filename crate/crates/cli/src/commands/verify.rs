//! The property and theory check suite behind `flexgt verify`.

use std::path::Path;

use flexgt::algorithm::{
    compact_round, init, run as run_trajectory, run_round, run_round_observed, stepsize_rule, AlgoConfig,
    Boundary, Method,
};
use flexgt::graph::{
    gap_bound, make_operator, metropolis_weights, random_connected, MixingMatrix, MixingOperator, Protocol,
};
use flexgt::metrics::{
    check_convex_rate, check_lemmas, check_nc_rate, check_noise_floor, check_sc_contraction, CheckReport,
    Margin, TheoryParams, STOCHASTIC_SLACK,
};
use flexgt::problems::{make_ridge, NodeRngs, Problem, Regime};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::error::Result;
use crate::output::{json_bytes, write_atomic};

/// Tolerance of the direct mixing bound.
pub const DIRECT_BOUND_TOL: f64 = 1e-12;
/// Tolerance of the accelerated mixing bound.
pub const ACCELERATED_BOUND_TOL: f64 = 1e-9;
/// Tolerance on row and column sums of `W̄`.
pub const AVERAGING_TOL: f64 = 1e-10;
/// Relative tolerance of the tracking identity.
pub const TRACKING_TOL: f64 = 1e-9;
/// Relative tolerance between the loop and summed round forms.
pub const FORMS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Failures of non-gating checks are reported but do not fail the suite.
    pub gating: bool,
    pub passed: bool,
    pub violations: usize,
    pub first_violation: Option<usize>,
    pub min_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub margins: Vec<Margin>,
}

impl CheckOutcome {
    pub fn from_margins(name: impl Into<String>, gating: bool, margins: Vec<Margin>) -> Self {
        let failing: Vec<usize> = margins.iter().filter(|m| !m.holds()).map(|m| m.index).collect();
        CheckOutcome {
            name: name.into(),
            gating,
            passed: failing.is_empty(),
            violations: failing.len(),
            first_violation: failing.first().copied(),
            min_margin: margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min),
            note: None,
            margins,
        }
    }

    pub fn from_report(name: impl Into<String>, report: CheckReport) -> Self {
        CheckOutcome {
            name: name.into(),
            gating: true,
            passed: report.passed,
            violations: report.violations,
            first_violation: report.first_violation,
            min_margin: report.min_margin,
            note: None,
            margins: report.margins,
        }
    }

    fn diverged(name: impl Into<String>, reason: String) -> Self {
        CheckOutcome {
            name: name.into(),
            gating: true,
            passed: false,
            violations: 1,
            first_violation: None,
            min_margin: f64::NEG_INFINITY,
            note: Some(reason),
            margins: Vec::new(),
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub failed: Vec<String>,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn new(checks: Vec<CheckOutcome>) -> Self {
        let failed: Vec<String> = checks
            .iter()
            .filter(|c| c.gating && !c.passed)
            .map(|c| c.name.clone())
            .collect();
        VerifyReport {
            passed: failed.is_empty(),
            failed,
            checks,
        }
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Divergence during a theory run counts as a failed check, not an error.
fn guarded(name: &str, f: impl FnOnce() -> flexgt::Result<CheckOutcome>) -> Result<CheckOutcome> {
    match f() {
        Ok(o) => Ok(o),
        Err(e @ flexgt::Error::NonFinite { .. }) => Ok(CheckOutcome::diverged(name, e.to_string())),
        Err(e) => Err(e.into()),
    }
}

/// Metropolis matrices of random connected graphs with 4 to 64 nodes.
pub fn random_topologies(count: usize, seed: u64) -> Result<Vec<MixingMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(4..=64);
            let q = rng.random_range(0.0..0.3);
            let t = random_connected(n, q, &mut rng)?;
            Ok(metropolis_weights(&t)?)
        })
        .collect()
}

/// Direct bound, accelerated bound and averaging preservation for
/// `α ∈ 1..=10` on each matrix. Margin index is `10·graph + α − 1`.
pub fn mixing_checks(mats: &[MixingMatrix]) -> Result<[CheckOutcome; 3]> {
    let mut direct = Vec::new();
    let mut accel = Vec::new();
    let mut averaging = Vec::new();
    for (g, w) in mats.iter().enumerate() {
        for alpha in 1..=10u32 {
            let idx = 10 * g + alpha as usize - 1;
            for protocol in [Protocol::Direct, Protocol::Accelerated] {
                let op = make_operator(w, protocol, alpha)?;
                let bound = gap_bound(protocol, w.rho_w(), alpha);
                match protocol {
                    Protocol::Direct => direct.push(Margin::new(idx, op.rho_bar(), bound + DIRECT_BOUND_TOL)),
                    Protocol::Accelerated => {
                        accel.push(Margin::new(idx, op.rho_bar(), bound + ACCELERATED_BOUND_TOL))
                    }
                }
                let m = op.matrix();
                let rows = m.column_sum().map(|v| (v - 1.0).abs()).max();
                let cols = m.row_sum().map(|v| (v - 1.0).abs()).max();
                averaging.push(Margin::new(idx, rows.max(cols), AVERAGING_TOL));
            }
        }
    }
    Ok([
        CheckOutcome::from_margins("mixing_bound_direct", true, direct),
        CheckOutcome::from_margins("mixing_bound_accelerated", false, accel)
            .with_note("envelope for the accelerated recursion; reported, not gating"),
        CheckOutcome::from_margins("averaging_preservation", true, averaging),
    ])
}

/// A small random instance: graph, ridge problem with `σ > 0`, protocol,
/// boundary variant and step counts.
pub struct RandomCase {
    pub problem: Problem,
    pub operator: MixingOperator,
    pub config: AlgoConfig,
    pub seed: u64,
}

pub fn random_case<R: Rng>(rng: &mut R) -> Result<RandomCase> {
    let seed: u64 = rng.random();
    let n = rng.random_range(2..16);
    let p = rng.random_range(1..6);
    let alpha = rng.random_range(1..5);
    let beta = rng.random_range(1..6);
    let sigma = rng.random_range(0.01..1.0);
    let protocol = if rng.random_bool(0.5) {
        Protocol::Accelerated
    } else {
        Protocol::Direct
    };
    let boundary = if rng.random_bool(0.5) {
        Boundary::Stored
    } else {
        Boundary::Refresh
    };
    let w = metropolis_weights(&random_connected(n, 0.2, rng)?)?;
    let operator = make_operator(&w, protocol, alpha)?;
    let problem = make_ridge(n, p, 0.1, sigma, seed)?;
    let gamma = stepsize_rule(
        Regime::StronglyConvex,
        problem.lipschitz(),
        beta,
        operator.rho_bar().min(0.999),
    )?;
    let config = AlgoConfig::new(alpha, beta, gamma)
        .with_protocol(protocol)
        .with_boundary(boundary);
    Ok(RandomCase {
        problem,
        operator,
        config,
        seed,
    })
}

/// `‖1ᵀY − 1ᵀG‖_∞ / max(1, ‖G‖_∞)` after every step; margin per case.
pub fn tracking_identity_check(cases: usize, rounds: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margins = Vec::with_capacity(cases);
    for idx in 0..cases {
        let c = random_case(&mut rng)?;
        let mut rngs = NodeRngs::new(c.seed, c.problem.n());
        let mut state = init(&c.problem, &DVector::from_element(c.problem.p(), 1.0), &mut rngs)?;
        let mut worst: f64 = 0.0;
        for _ in 0..rounds {
            run_round_observed(
                &mut state,
                &c.problem,
                &c.config,
                &c.operator,
                &mut rngs,
                &mut |s, _| {
                    worst = worst.max(s.tracking_defect() / s.gprev.amax().max(1.0));
                },
            )?;
        }
        margins.push(Margin::new(idx, worst, TRACKING_TOL));
    }
    Ok(CheckOutcome::from_margins("tracking_identity", true, margins))
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(1.0)
}

/// Largest relative gap between the loop and summed round forms; margin
/// per case.
pub fn loop_compact_check(cases: usize, rounds: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margins = Vec::with_capacity(cases);
    for idx in 0..cases {
        let c = random_case(&mut rng)?;
        let x0 = DVector::from_element(c.problem.p(), -0.5);
        let mut ra = NodeRngs::new(c.seed, c.problem.n());
        let mut rb = NodeRngs::new(c.seed, c.problem.n());
        let mut a = init(&c.problem, &x0, &mut ra)?;
        let mut b = init(&c.problem, &x0, &mut rb)?;
        let mut worst: f64 = 0.0;
        for _ in 0..rounds {
            run_round(&mut a, &c.problem, &c.config, &c.operator, &mut ra)?;
            compact_round(&mut b, &c.problem, &c.config, &c.operator, &mut rb)?;
            worst = worst.max(rel_diff(&a.x, &b.x)).max(rel_diff(&a.y, &b.y));
        }
        if (a.comp_steps, a.comm_steps) != (b.comp_steps, b.comm_steps) {
            worst = f64::INFINITY;
        }
        margins.push(Margin::new(idx, worst, FORMS_TOL));
    }
    Ok(CheckOutcome::from_margins("loop_summed_forms", true, margins))
}

fn default_horizons(rounds: usize) -> Vec<usize> {
    let mut h: Vec<usize> = [rounds / 10, rounds / 2, rounds]
        .into_iter()
        .filter(|&k| k >= 1)
        .collect();
    h.dedup();
    h
}

/// Lemma and rate checks for every gradient-tracking algorithm of the
/// experiment, run with the proof-valid stepsize times
/// `verify.stepsize_scale`.
pub fn theory_checks(exp: &Experiment) -> Result<Vec<CheckOutcome>> {
    let problem = &exp.problem;
    let spec = &exp.config.verify;
    let rounds = spec.rounds.unwrap_or(exp.config.rounds);
    let stoch_rounds = exp.config.rounds;
    let pick = |r: usize| {
        if spec.horizons.is_empty() {
            default_horizons(r)
        } else {
            spec.horizons.clone()
        }
    };
    let horizons = pick(rounds);
    let stoch_horizons = pick(stoch_rounds);
    let noiseless = Problem::from_family(problem.family().clone(), 0.0)?
        .with_noise(problem.noise())
        .with_seed(problem.seed());
    let x0 = DVector::zeros(problem.p());
    let mut out = Vec::new();

    for alg in &exp.algorithms {
        if alg.config.method == Method::Dsgd {
            log::info!("{}: no theory checks for dsgd", alg.label);
            continue;
        }
        let op = &alg.operator;
        let gamma = stepsize_rule(
            problem.regime(),
            problem.lipschitz(),
            alg.config.beta,
            op.rho_bar(),
        )? * spec.stepsize_scale;
        let cfg = AlgoConfig { gamma, ..alg.config };
        let name = |check: &str| format!("{}/{check}", alg.label);

        let lemmas = check_lemmas(&noiseless, &cfg, op, rounds, exp.seeds[0], &x0);
        match lemmas {
            Ok(r) => {
                out.push(CheckOutcome::from_report(
                    name("client_divergence"),
                    r.client_divergence,
                ));
                out.push(CheckOutcome::from_report(name("consensus"), r.consensus));
                out.push(CheckOutcome::from_report(name("tracking"), r.tracking));
            }
            Err(e @ flexgt::Error::NonFinite { .. }) => {
                out.push(CheckOutcome::diverged(name("lemmas"), e.to_string()));
            }
            Err(e) => return Err(e.into()),
        }

        let det_name = match problem.regime() {
            Regime::StronglyConvex => name("sc_contraction"),
            Regime::Convex => name("convex_rate"),
            Regime::Nonconvex => name("nonconvex_rate"),
        };
        out.push(guarded(&det_name, || {
            let traj = run_trajectory(&noiseless, &cfg, op, rounds, exp.seeds[0])?;
            let params = TheoryParams::new(&noiseless, &cfg, op.rho_bar());
            let report = match problem.regime() {
                Regime::StronglyConvex => check_sc_contraction(&[traj], &params, 1.0)?,
                Regime::Convex => check_convex_rate(&[traj], &params, &horizons, 1.0)?,
                Regime::Nonconvex => check_nc_rate(&[traj], &params, &horizons, 1.0)?,
            };
            Ok(CheckOutcome::from_report(&det_name, report))
        })?);

        if problem.sigma() > 0.0 {
            let stoch_name = match problem.regime() {
                Regime::StronglyConvex => name("noise_floor"),
                Regime::Convex => name("convex_rate_stochastic"),
                Regime::Nonconvex => name("nonconvex_rate_stochastic"),
            };
            out.push(guarded(&stoch_name, || {
                let trajs = exp
                    .seeds
                    .par_iter()
                    .map(|&s| run_trajectory(problem, &cfg, op, stoch_rounds, s))
                    .collect::<flexgt::Result<Vec<_>>>()?;
                let params = TheoryParams::new(problem, &cfg, op.rho_bar());
                let report = match problem.regime() {
                    Regime::StronglyConvex => {
                        let window = (3 * stoch_rounds / 4)..stoch_rounds + 1;
                        check_noise_floor(&trajs, &params, window, STOCHASTIC_SLACK)?
                    }
                    Regime::Convex => check_convex_rate(&trajs, &params, &stoch_horizons, STOCHASTIC_SLACK)?,
                    Regime::Nonconvex => check_nc_rate(&trajs, &params, &stoch_horizons, STOCHASTIC_SLACK)?,
                };
                Ok(CheckOutcome::from_report(&stoch_name, report))
            })?);
        }
    }
    Ok(out)
}

pub fn run_suite(exp: &Experiment) -> Result<VerifyReport> {
    let spec = &exp.config.verify;
    let mats = random_topologies(spec.topologies, spec.seed)?;
    let mut checks: Vec<CheckOutcome> = mixing_checks(&mats)?.into();
    checks.push(tracking_identity_check(spec.tracking_cases, 200, spec.seed)?);
    checks.push(loop_compact_check(
        spec.form_cases,
        50,
        spec.seed.wrapping_add(1),
    )?);
    checks.extend(theory_checks(exp)?);
    Ok(VerifyReport::new(checks))
}

/// Runs the suite and writes `verify.json`. The caller decides the exit
/// status from [`VerifyReport::passed`].
pub fn cmd_verify(exp: &Experiment, out: &Path) -> Result<VerifyReport> {
    let report = run_suite(exp)?;
    for c in &report.checks {
        let status = match (c.passed, c.gating) {
            (true, _) => "pass",
            (false, true) => "FAIL",
            (false, false) => "fail (not gating)",
        };
        log::info!("{:<40} {status:<18} min margin {:.3e}", c.name, c.min_margin);
    }
    write_atomic(
        &out.join("verify.json"),
        &json_bytes(&exp.resolved, "verify", &report)?,
    )?;
    Ok(report)
}
