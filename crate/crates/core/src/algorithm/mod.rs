//! Rounds of snapshot gradient tracking: `beta` local steps, then `alpha`
//! communication steps folded into one mixing operator.

mod stepsize;
mod trajectory;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{MixingOperator, Protocol};
use crate::problems::{NodeRngs, Problem};

pub use stepsize::{empirical_stepsize, stepsize_rule};
pub use trajectory::{run, run_from, ProblemSummary, Trajectory};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Flexgt,
    Dsgd,
}

/// Which stochastic gradient the tracking variable subtracts when a new
/// round begins.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// After mixing `x`, each node samples at its new iterate (the next
    /// snapshot) and folds the change into `y` before `y` is mixed.
    #[default]
    Refresh,
    /// Each of the `beta` inner steps samples at the current snapshot; the
    /// first one subtracts the sample stored from the previous snapshot.
    Stored,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub alpha: u32,
    pub beta: u32,
    pub gamma: f64,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub boundary: Boundary,
}

fn default_protocol() -> Protocol {
    Protocol::Direct
}

impl AlgoConfig {
    pub fn new(alpha: u32, beta: u32, gamma: f64) -> Self {
        AlgoConfig {
            alpha,
            beta,
            gamma,
            protocol: Protocol::Direct,
            method: Method::Flexgt,
            boundary: Boundary::Refresh,
        }
    }

    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha == 0 {
            return Err(Error::param("alpha", "must be at least 1"));
        }
        if self.beta == 0 {
            return Err(Error::param("beta", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param("gamma", "must be positive and finite"));
        }
        Ok(())
    }

    fn check_operator(&self, op: &MixingOperator) -> Result<()> {
        if op.alpha() != self.alpha || op.protocol() != self.protocol {
            return Err(Error::param(
                "operator",
                format!(
                    "built for {:?} alpha={}, config asks for {:?} alpha={}",
                    op.protocol(),
                    op.alpha(),
                    self.protocol,
                    self.alpha
                ),
            ));
        }
        Ok(())
    }
}

/// Full algorithm state. Row `i` of each matrix belongs to node `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    #[serde(with = "crate::serde_rows")]
    pub x: DMatrix<f64>,
    #[serde(with = "crate::serde_rows")]
    pub y: DMatrix<f64>,
    #[serde(with = "crate::serde_rows")]
    pub z: DMatrix<f64>,
    #[serde(with = "crate::serde_rows")]
    pub gprev: DMatrix<f64>,
    pub round: usize,
    pub comp_steps: u64,
    pub comm_steps: u64,
}

/// Which kind of step just finished, for [`run_round_observed`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Computation,
    Communication,
}

impl SwarmState {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Column-wise mean of `x`.
    pub fn x_bar(&self) -> DVector<f64> {
        row_mean(&self.x)
    }

    pub fn y_bar(&self) -> DVector<f64> {
        row_mean(&self.y)
    }

    /// `‖1ᵀY − 1ᵀGprev‖_∞`.
    pub fn tracking_defect(&self) -> f64 {
        let diff = self.y.row_sum() - self.gprev.row_sum();
        diff.amax()
    }

    fn check_finite(&self) -> Result<()> {
        for (name, m) in [("x", &self.x), ("y", &self.y)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    round: self.round,
                    quantity: name.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Average of the rows of `m`, as a column vector.
pub fn row_mean(m: &DMatrix<f64>) -> DVector<f64> {
    m.row_sum().transpose() / m.nrows() as f64
}

/// Every node starts at `x0` with `y` equal to one stochastic gradient there.
pub fn init(problem: &Problem, x0: &DVector<f64>, rngs: &mut NodeRngs) -> Result<SwarmState> {
    if x0.len() != problem.p() {
        return Err(Error::DimensionMismatch {
            expected: format!("dimension {}", problem.p()),
            actual: x0.len().to_string(),
        });
    }
    let n = problem.n();
    let x = DMatrix::from_fn(n, problem.p(), |_, d| x0[d]);
    let g = problem.stoch_grads(&x, rngs)?;
    Ok(SwarmState {
        z: x.clone(),
        y: g.clone(),
        gprev: g,
        x,
        round: 0,
        comp_steps: 0,
        comm_steps: 0,
    })
}

fn check_state(state: &SwarmState, problem: &Problem) -> Result<()> {
    if state.x.nrows() != problem.n() || state.x.ncols() != problem.p() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} state", problem.n(), problem.p()),
            actual: format!("{}x{}", state.x.nrows(), state.x.ncols()),
        });
    }
    Ok(())
}

fn no_observer(_: &SwarmState, _: StepKind) {}

/// The `beta` local steps of a round, with `z` already set to the snapshot.
///
/// Under [`Boundary::Stored`] every step draws a new sample at `z` and
/// updates `y`. Under [`Boundary::Refresh`] the last step's tracking update
/// is deferred to the communication phase, where it uses the new iterate.
pub fn local_phase(
    state: &mut SwarmState,
    problem: &Problem,
    config: &AlgoConfig,
    rngs: &mut NodeRngs,
) -> Result<()> {
    local_phase_observed(state, problem, config, rngs, &mut no_observer)
}

fn local_phase_observed(
    state: &mut SwarmState,
    problem: &Problem,
    config: &AlgoConfig,
    rngs: &mut NodeRngs,
    observer: &mut dyn FnMut(&SwarmState, StepKind),
) -> Result<()> {
    match config.method {
        Method::Dsgd => {
            for _ in 0..config.beta {
                let g = problem.stoch_grads(&state.x, rngs)?;
                state.x -= g * config.gamma;
                state.comp_steps += 1;
                observer(state, StepKind::Computation);
            }
        }
        Method::Flexgt => {
            let updates = match config.boundary {
                Boundary::Stored => config.beta,
                Boundary::Refresh => config.beta - 1,
            };
            for t in 0..config.beta {
                state.x -= &state.y * config.gamma;
                if t < updates {
                    let g = problem.stoch_grads(&state.z, rngs)?;
                    state.y += &g - &state.gprev;
                    state.gprev = g;
                    state.comp_steps += 1;
                }
                observer(state, StepKind::Computation);
            }
        }
    }
    Ok(())
}

/// `X ← W̄X`, `Y ← W̄Y`.
pub fn comm_phase(state: &mut SwarmState, op: &MixingOperator) -> Result<()> {
    state.x = op.apply(&state.x)?;
    state.y = op.apply(&state.y)?;
    state.comm_steps += op.alpha() as u64;
    Ok(())
}

/// One full round: snapshot, local phase, communication.
pub fn run_round(
    state: &mut SwarmState,
    problem: &Problem,
    config: &AlgoConfig,
    op: &MixingOperator,
    rngs: &mut NodeRngs,
) -> Result<()> {
    run_round_observed(state, problem, config, op, rngs, &mut no_observer)
}

/// [`run_round`] calling `observer` after every computation step and after
/// the communication step.
pub fn run_round_observed(
    state: &mut SwarmState,
    problem: &Problem,
    config: &AlgoConfig,
    op: &MixingOperator,
    rngs: &mut NodeRngs,
    observer: &mut dyn FnMut(&SwarmState, StepKind),
) -> Result<()> {
    config.validate()?;
    config.check_operator(op)?;
    check_state(state, problem)?;
    state.z.copy_from(&state.x);
    local_phase_observed(state, problem, config, rngs, observer)?;
    match (config.method, config.boundary) {
        (Method::Flexgt, Boundary::Refresh) => {
            state.x = op.apply(&state.x)?;
            let g = problem.stoch_grads(&state.x, rngs)?;
            state.y += &g - &state.gprev;
            state.gprev = g;
            state.comp_steps += 1;
            state.y = op.apply(&state.y)?;
            state.comm_steps += op.alpha() as u64;
        }
        _ => comm_phase(state, op)?,
    }
    state.round += 1;
    observer(state, StepKind::Communication);
    state.check_finite()
}

/// Independent evaluation of one FlexGT round through the summed form
/// `x⁺ = W̄(x − γΣ_j y_j)`, `y⁺ = W̄(y + ∇G⁺ − ∇G)`. Draws samples in the
/// same per-node order as [`run_round`], so the two agree up to rounding.
pub fn compact_round(
    state: &mut SwarmState,
    problem: &Problem,
    config: &AlgoConfig,
    op: &MixingOperator,
    rngs: &mut NodeRngs,
) -> Result<()> {
    config.validate()?;
    config.check_operator(op)?;
    check_state(state, problem)?;
    if config.method != Method::Flexgt {
        return Err(Error::param(
            "method",
            "the summed form is defined for flexgt only",
        ));
    }
    let beta = config.beta as usize;
    let snapshot = state.x.clone();
    let g0 = state.gprev.clone();
    // Inner samples at the snapshot: all of them under `Stored`, all but the
    // last under `Refresh`.
    let inner = match config.boundary {
        Boundary::Stored => beta,
        Boundary::Refresh => beta - 1,
    };
    let samples: Vec<DMatrix<f64>> = (0..inner)
        .map(|_| problem.stoch_grads(&snapshot, rngs))
        .collect::<Result<_>>()?;
    // Telescoping gives y_j = y_0 + g_j − g_0 for the j-th inner iterate.
    let mut sum = &state.y * beta as f64;
    for g in samples.iter().take(beta - 1) {
        sum += g - &g0;
    }
    let x_next = op.apply(&(&state.x - sum * config.gamma))?;
    let g_last = match config.boundary {
        Boundary::Stored => samples[beta - 1].clone(),
        Boundary::Refresh => problem.stoch_grads(&x_next, rngs)?,
    };
    let y_next = op.apply(&(&state.y + &g_last - &g0))?;
    state.z = snapshot;
    state.x = x_next;
    state.y = y_next;
    state.gprev = g_last;
    state.comp_steps += beta as u64;
    state.comm_steps += op.alpha() as u64;
    state.round += 1;
    state.check_finite()
}
