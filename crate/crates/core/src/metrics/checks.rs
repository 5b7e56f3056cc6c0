use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::algorithm::{AlgoConfig, Trajectory};
use crate::error::{Error, Result};
use crate::problems::Problem;

/// Relative slack for floating-point noise when comparing the two sides.
pub const CHECK_REL_TOL: f64 = 1e-12;
/// Multiplier on the right-hand side of ensemble (σ > 0) checks.
pub const STOCHASTIC_SLACK: f64 = 1.1;

/// 1 for deterministic runs, [`STOCHASTIC_SLACK`] otherwise.
pub fn default_slack(sigma_sq: f64) -> f64 {
    if sigma_sq > 0.0 {
        STOCHASTIC_SLACK
    } else {
        1.0
    }
}

/// Constants entering the bounds. `sigma_sq` is the total oracle variance
/// `E‖δ‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub gamma: f64,
    pub beta: u32,
    pub lipschitz: f64,
    pub mu: f64,
    pub sigma_sq: f64,
    pub n: usize,
    pub rho_bar: f64,
}

impl TheoryParams {
    pub fn new(problem: &Problem, config: &AlgoConfig, rho_bar: f64) -> Self {
        TheoryParams {
            gamma: config.gamma,
            beta: config.beta,
            lipschitz: problem.lipschitz(),
            mu: problem.mu(),
            sigma_sq: problem.noise_total_variance(),
            n: problem.n(),
            rho_bar,
        }
    }

    fn gb(&self) -> f64 {
        self.gamma * self.beta as f64
    }

    fn gap_cubed(&self) -> f64 {
        (1.0 - self.rho_bar).powi(3)
    }

    /// `1 − min{μβγ/2, (1 − ρ̄)/8}`.
    pub fn sc_factor(&self) -> f64 {
        1.0 - (self.mu * self.gb() / 2.0).min((1.0 - self.rho_bar) / 8.0)
    }

    /// Additive noise term of the per-round contraction.
    pub fn sc_noise(&self) -> f64 {
        let g = self.gamma;
        g * g * self.beta as f64 * self.sigma_sq / self.n as f64
            + 1664.0 * self.gb().powi(3) * self.lipschitz * self.rho_bar * self.sigma_sq / self.gap_cubed()
    }

    /// Fixed point of the contraction: noise term over `1 − factor`.
    pub fn sc_steady_state(&self) -> f64 {
        self.sc_noise() / (1.0 - self.sc_factor())
    }

    /// Right-hand side of the averaged function-gap bound after `k` rounds.
    pub fn convex_rhs(&self, v0: f64, k: usize) -> f64 {
        let gb = self.gb();
        2.0 * v0 / (gb * k as f64)
            + 2.0 * self.gamma * self.sigma_sq / self.n as f64
            + 3328.0 * gb * gb * self.lipschitz * self.rho_bar * self.sigma_sq / self.gap_cubed()
    }

    /// Right-hand side of the averaged squared-gradient bound after `k` rounds.
    pub fn nonconvex_rhs(&self, f_gap0: f64, track0: f64, k: usize) -> f64 {
        let gb = self.gb();
        let l = self.lipschitz;
        let n = self.n as f64;
        let k = k as f64;
        8.0 * f_gap0 / (gb * k)
            + 8.0 * gb * gb * l * l * self.rho_bar * track0 / (n * self.gap_cubed() * k)
            + 4.0 * self.gamma * l * self.sigma_sq / n
            + 3328.0 * gb * gb * l * l * self.rho_bar * self.sigma_sq / self.gap_cubed()
    }
}

/// One checked inequality `lhs ≤ rhs`; `index` is a round or a horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl Margin {
    pub fn new(index: usize, lhs: f64, rhs: f64) -> Self {
        Margin {
            index,
            lhs,
            rhs,
            margin: rhs - lhs,
        }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + CHECK_REL_TOL * self.rhs.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub params: TheoryParams,
    pub slack: f64,
    pub seeds: usize,
    pub margins: Vec<Margin>,
    pub violations: usize,
    pub first_violation: Option<usize>,
    pub min_margin: f64,
    pub passed: bool,
}

impl CheckReport {
    pub fn from_margins(
        name: impl Into<String>,
        params: TheoryParams,
        slack: f64,
        seeds: usize,
        margins: Vec<Margin>,
    ) -> Self {
        let failing: Vec<usize> = margins.iter().filter(|m| !m.holds()).map(|m| m.index).collect();
        let min_margin = margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min);
        CheckReport {
            name: name.into(),
            params,
            slack,
            seeds,
            violations: failing.len(),
            first_violation: failing.first().copied(),
            min_margin,
            passed: failing.is_empty(),
            margins,
        }
    }
}

/// Per-round average over trajectories of one recorded field.
pub fn ensemble_mean<F>(trajs: &[Trajectory], field: F) -> Result<Vec<f64>>
where
    F: Fn(&crate::metrics::MetricRecord) -> Option<f64>,
{
    let first = trajs
        .first()
        .ok_or_else(|| Error::param("trajectories", "need at least one trajectory"))?;
    let len = first.records.len();
    if trajs.iter().any(|t| t.records.len() != len) {
        return Err(Error::param("trajectories", "records have different lengths"));
    }
    let mut mean = vec![0.0; len];
    for t in trajs {
        for (acc, r) in mean.iter_mut().zip(&t.records) {
            *acc += field(r).ok_or_else(|| {
                Error::param("trajectories", "a required metric is missing from the records")
            })?;
        }
    }
    let m = trajs.len() as f64;
    Ok(mean.into_iter().map(|v| v / m).collect())
}

/// `E[V_{k+1}] ≤ factor·E[V_k] + noise` at every recorded round, the
/// expectation taken over the supplied trajectories.
pub fn check_sc_contraction(trajs: &[Trajectory], params: &TheoryParams, slack: f64) -> Result<CheckReport> {
    let v = ensemble_mean(trajs, |r| r.lyapunov)?;
    let factor = params.sc_factor();
    let noise = params.sc_noise();
    let margins = v
        .windows(2)
        .enumerate()
        .map(|(k, w)| Margin::new(k + 1, w[1], slack * (factor * w[0] + noise)))
        .collect();
    Ok(CheckReport::from_margins(
        "sc_contraction",
        *params,
        slack,
        trajs.len(),
        margins,
    ))
}

/// Mean `V` over the rounds in `window` against the steady-state level.
pub fn check_noise_floor(
    trajs: &[Trajectory],
    params: &TheoryParams,
    window: Range<usize>,
    slack: f64,
) -> Result<CheckReport> {
    let v = ensemble_mean(trajs, |r| r.lyapunov)?;
    if window.is_empty() || window.end > v.len() {
        return Err(Error::param(
            "window",
            "must be a non-empty range of recorded rounds",
        ));
    }
    let lhs = v[window.clone()].iter().sum::<f64>() / window.len() as f64;
    let margins = vec![Margin::new(window.end - 1, lhs, slack * params.sc_steady_state())];
    Ok(CheckReport::from_margins(
        "noise_floor",
        *params,
        slack,
        trajs.len(),
        margins,
    ))
}

fn check_horizons(v: &[f64], horizons: &[usize]) -> Result<()> {
    if horizons.is_empty() {
        return Err(Error::param("horizons", "need at least one horizon"));
    }
    if let Some(&k) = horizons.iter().find(|&&k| k == 0 || k > v.len()) {
        return Err(Error::param(
            "horizons",
            format!("horizon {k} outside 1..={}", v.len()),
        ));
    }
    Ok(())
}

fn running_average(v: &[f64], k: usize) -> f64 {
    v[..k].iter().sum::<f64>() / k as f64
}

/// `(1/K)Σ_{k<K} E[f(x̄_k) − f*]` against the convex rate at each horizon `K`.
pub fn check_convex_rate(
    trajs: &[Trajectory],
    params: &TheoryParams,
    horizons: &[usize],
    slack: f64,
) -> Result<CheckReport> {
    let f = ensemble_mean(trajs, |r| r.f_gap)?;
    let v = ensemble_mean(trajs, |r| r.lyapunov)?;
    check_horizons(&f, horizons)?;
    let margins = horizons
        .iter()
        .map(|&k| Margin::new(k, running_average(&f, k), slack * params.convex_rhs(v[0], k)))
        .collect();
    Ok(CheckReport::from_margins(
        "convex_rate",
        *params,
        slack,
        trajs.len(),
        margins,
    ))
}

/// `(1/K)Σ_{k<K} E‖∇f(x̄_k)‖²` against the nonconvex rate at each horizon `K`.
pub fn check_nc_rate(
    trajs: &[Trajectory],
    params: &TheoryParams,
    horizons: &[usize],
    slack: f64,
) -> Result<CheckReport> {
    let g = ensemble_mean(trajs, |r| Some(r.grad_norm_sq))?;
    let f = ensemble_mean(trajs, |r| r.f_gap)?;
    let t = ensemble_mean(trajs, |r| Some(r.track_err))?;
    check_horizons(&g, horizons)?;
    let margins = horizons
        .iter()
        .map(|&k| {
            Margin::new(
                k,
                running_average(&g, k),
                slack * params.nonconvex_rhs(f[0], t[0], k),
            )
        })
        .collect();
    Ok(CheckReport::from_margins(
        "nonconvex_rate",
        *params,
        slack,
        trajs.len(),
        margins,
    ))
}
