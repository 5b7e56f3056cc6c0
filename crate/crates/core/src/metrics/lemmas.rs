//! Per-round inequalities for client divergence, consensus and tracking
//! errors, in their noiseless form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::checks::{CheckReport, Margin, TheoryParams};
use super::spread;
use crate::algorithm::{init, run_round, AlgoConfig, SwarmState};
use crate::error::{Error, Result};
use crate::graph::MixingOperator;
use crate::problems::{NodeRngs, Problem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub client_divergence: CheckReport,
    pub consensus: CheckReport,
    pub tracking: CheckReport,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.client_divergence.passed && self.consensus.passed && self.tracking.passed
    }
}

fn distance_to(x: &DMatrix<f64>, center: &DVector<f64>) -> f64 {
    x.row_iter()
        .map(|r| (r.transpose() - center).norm_squared())
        .sum()
}

/// Margins of the three inequalities between the round-`k` state `pre` and
/// the round-`k+1` state `post`, in order: client divergence, consensus,
/// tracking.
pub fn lemma_margins(
    pre: &SwarmState,
    post: &SwarmState,
    problem: &Problem,
    params: &TheoryParams,
) -> [Margin; 3] {
    let k = post.round;
    let x_bar = pre.x_bar();
    let cons = spread(&pre.x);
    let track = spread(&pre.y);
    let grad = problem.full_grad(&x_bar).norm_squared();
    let n = params.n as f64;
    let gb2 = (params.gamma * params.beta as f64).powi(2);
    let rho = params.rho_bar;
    let gap = 1.0 - rho;
    let l2 = params.lipschitz * params.lipschitz;

    let divergence = Margin::new(
        k,
        distance_to(&post.x, &x_bar),
        3.0 * cons + 8.0 * gb2 * track + 16.0 * n * gb2 * grad,
    );
    let consensus = Margin::new(
        k,
        spread(&post.x),
        (1.0 + rho) / 2.0 * cons + 4.0 * gb2 * rho / gap * track,
    );
    let tracking = Margin::new(
        k,
        spread(&post.y),
        (3.0 + rho) / 4.0 * track + 18.0 * rho * l2 / gap * cons + 96.0 * n * gb2 * l2 * rho / gap * grad,
    );
    [divergence, consensus, tracking]
}

/// Runs a noiseless trajectory and checks the three per-round inequalities
/// at every round.
pub fn check_lemmas(
    problem: &Problem,
    config: &AlgoConfig,
    op: &MixingOperator,
    rounds: usize,
    seed: u64,
    x0: &DVector<f64>,
) -> Result<LemmaReport> {
    if problem.sigma() > 0.0 {
        return Err(Error::param(
            "sigma",
            "the per-round inequalities are checked with sigma = 0",
        ));
    }
    let params = TheoryParams::new(problem, config, op.rho_bar());
    let mut rngs = NodeRngs::new(seed, problem.n());
    let mut state = init(problem, x0, &mut rngs)?;
    let mut columns: [Vec<Margin>; 3] = Default::default();
    for _ in 0..rounds {
        let pre = state.clone();
        run_round(&mut state, problem, config, op, &mut rngs)?;
        for (col, m) in columns
            .iter_mut()
            .zip(lemma_margins(&pre, &state, problem, &params))
        {
            col.push(m);
        }
    }
    let [a, b, c] = columns;
    Ok(LemmaReport {
        client_divergence: CheckReport::from_margins("client_divergence", params, 1.0, 1, a),
        consensus: CheckReport::from_margins("consensus", params, 1.0, 1, b),
        tracking: CheckReport::from_margins("tracking", params, 1.0, 1, c),
    })
}
