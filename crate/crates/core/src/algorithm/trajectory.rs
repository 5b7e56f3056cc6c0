use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{init, run_round, AlgoConfig, SwarmState};
use crate::error::{Error, Result};
use crate::graph::MixingOperator;
use crate::metrics::{measure, LyapunovCoeffs, MetricRecord};
use crate::problems::{Family, NodeRngs, Problem, Regime};

/// Enough about a problem to identify it next to a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub family: String,
    pub regime: Regime,
    pub n: usize,
    pub p: usize,
    pub lipschitz: f64,
    pub mu: f64,
    pub sigma: f64,
    pub seed: Option<u64>,
}

impl From<&Problem> for ProblemSummary {
    fn from(p: &Problem) -> Self {
        let family = match p.family() {
            Family::Ridge { .. } => "ridge",
            Family::LeastSquares { .. } => "least_squares",
            Family::Logistic { .. } => "logistic",
        };
        ProblemSummary {
            family: family.to_string(),
            regime: p.regime(),
            n: p.n(),
            p: p.p(),
            lipschitz: p.lipschitz(),
            mu: p.mu(),
            sigma: p.sigma(),
            seed: p.seed(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: AlgoConfig,
    pub problem: ProblemSummary,
    pub seed: u64,
    pub rho_bar: f64,
    pub coeffs: LyapunovCoeffs,
    pub records: Vec<MetricRecord>,
}

impl Trajectory {
    pub fn last(&self) -> &MetricRecord {
        self.records.last().expect("a trajectory has at least one record")
    }

    /// One CSV row per round boundary, with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs `rounds` rounds from `x0 = 0`.
pub fn run(
    problem: &Problem,
    config: &AlgoConfig,
    op: &MixingOperator,
    rounds: usize,
    seed: u64,
) -> Result<Trajectory> {
    run_from(problem, config, op, rounds, seed, &DVector::zeros(problem.p()))
}

/// Runs `rounds` rounds from a common starting point, recording metrics at
/// round 0 and after every round.
pub fn run_from(
    problem: &Problem,
    config: &AlgoConfig,
    op: &MixingOperator,
    rounds: usize,
    seed: u64,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    config.validate()?;
    if rounds == 0 {
        return Err(Error::param("rounds", "must be at least 1"));
    }
    let coeffs = LyapunovCoeffs::new(
        config.gamma,
        config.beta,
        problem.lipschitz(),
        problem.n(),
        op.rho_bar(),
    );
    let mut rngs = NodeRngs::new(seed, problem.n());
    let mut state = init(problem, x0, &mut rngs)?;
    let mut records = Vec::with_capacity(rounds + 1);
    records.push(checked_measure(&state, problem, &coeffs)?);
    for _ in 0..rounds {
        run_round(&mut state, problem, config, op, &mut rngs)?;
        records.push(checked_measure(&state, problem, &coeffs)?);
    }
    Ok(Trajectory {
        config: *config,
        problem: problem.into(),
        seed,
        rho_bar: op.rho_bar(),
        coeffs,
        records,
    })
}

fn checked_measure(state: &SwarmState, problem: &Problem, coeffs: &LyapunovCoeffs) -> Result<MetricRecord> {
    let r = measure(state, problem, coeffs);
    if let Some(quantity) = r.first_non_finite() {
        return Err(Error::NonFinite {
            round: state.round,
            quantity: quantity.to_string(),
        });
    }
    Ok(r)
}
