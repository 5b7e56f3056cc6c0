//! Closed-form complexity estimates, α selection for accelerated gossip,
//! empirical steps-to-ε, and Pareto filtering in the (comm, comp) plane.
//!
//! All order-level expressions are evaluated with hidden constants equal to 1
//! and natural logarithms.

mod pareto;

use serde::{Deserialize, Serialize};

use crate::algorithm::Trajectory;
use crate::error::{Error, Result};
use crate::graph::{gap_bound, Protocol};
use crate::problems::Regime;

pub use pareto::{pareto_flags, pareto_frontier};

/// Cap keeping `1 − ρ̄` away from zero in the formulas.
pub const RHO_BAR_CAP: f64 = 1.0 - 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityQuery {
    pub regime: Regime,
    pub lipschitz: f64,
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
    pub rho_w: f64,
    pub epsilon: f64,
    pub alpha: u32,
    pub beta: u32,
    pub protocol: Protocol,
    /// Initial Lyapunov value (strongly convex and convex).
    pub v0: f64,
    /// Initial `f(x̄₀) − f*` (nonconvex).
    pub f_gap0: f64,
    /// `(1/n)‖ỹ₀‖² / (f(x̄₀) − f*)` (nonconvex).
    pub r0: f64,
    /// Use this effective gap instead of the protocol's bound.
    #[serde(default)]
    pub rho_bar_override: Option<f64>,
}

impl ComplexityQuery {
    pub fn new(
        regime: Regime,
        lipschitz: f64,
        mu: f64,
        sigma: f64,
        n: usize,
        rho_w: f64,
        epsilon: f64,
    ) -> Self {
        ComplexityQuery {
            regime,
            lipschitz,
            mu,
            sigma,
            n,
            rho_w,
            epsilon,
            alpha: 1,
            beta: 1,
            protocol: Protocol::Direct,
            v0: 1.0,
            f_gap0: 1.0,
            r0: 0.0,
            rho_bar_override: None,
        }
    }

    pub fn with_steps(mut self, alpha: u32, beta: u32) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        if self.lipschitz.is_nan() || self.lipschitz <= 0.0 {
            return Err(Error::param("L", "must be positive"));
        }
        if self.regime == Regime::StronglyConvex && (self.mu.is_nan() || self.mu <= 0.0) {
            return Err(Error::param("mu", "strongly convex queries need mu > 0"));
        }
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return Err(Error::param("sigma", "must be non-negative"));
        }
        if self.n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.rho_w) {
            return Err(Error::param("rho_w", "must lie in [0, 1)"));
        }
        if self.alpha == 0 || self.beta == 0 {
            return Err(Error::param("alpha/beta", "must be at least 1"));
        }
        Ok(())
    }

    /// Effective gap used in the formulas: the protocol bound, capped below 1.
    pub fn rho_bar(&self) -> f64 {
        self.rho_bar_override
            .unwrap_or_else(|| gap_bound(self.protocol, self.rho_w, self.alpha))
            .min(RHO_BAR_CAP)
    }
}

/// A (communication, computation) cost estimate for one parameter choice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub alpha: u32,
    pub beta: u32,
    pub comm: f64,
    pub comp: f64,
}

/// The ρ̄-dependent round count without the initial-condition factors:
/// the expression behind the computation and communication columns.
fn base_rounds(q: &ComplexityQuery) -> f64 {
    let (lead, rest) = round_terms(q);
    lead + rest
}

/// `(leading term, remaining terms)` of [`base_rounds`]; the leading term is
/// the one carrying the logarithm in the strongly convex case.
fn round_terms(q: &ComplexityQuery) -> (f64, f64) {
    let rho = q.rho_bar();
    let gap = 1.0 - rho;
    let (l, mu, s2, n, eps, beta) = (
        q.lipschitz,
        q.mu,
        q.sigma * q.sigma,
        q.n as f64,
        q.epsilon,
        q.beta as f64,
    );
    match q.regime {
        Regime::StronglyConvex => (
            l / (gap * gap * mu),
            s2 / (beta * mu * mu * n * eps)
                + (l * rho * s2).sqrt() / (mu.powf(1.5) * gap.powf(1.5) * eps.sqrt()),
        ),
        Regime::Convex => (
            l / (gap * gap * eps),
            s2 / (beta * n * eps * eps) + (l * rho * s2).sqrt() / (gap.powf(1.5) * eps.powf(1.5)),
        ),
        Regime::Nonconvex => (
            l / (gap * gap * eps),
            l * s2 / (beta * n * eps * eps)
                + q.r0 / eps
                + l * (rho * s2).sqrt() / (gap.powf(1.5) * eps.powf(1.5)),
        ),
    }
}

fn log_ratio(v0: f64, eps: f64) -> f64 {
    (v0 / eps).ln().max(0.0)
}

/// Rounds needed to reach accuracy ε.
pub fn iteration_complexity(q: &ComplexityQuery) -> Result<f64> {
    q.validate()?;
    Ok(match q.regime {
        Regime::StronglyConvex => {
            let (lead, rest) = round_terms(q);
            lead * log_ratio(q.v0, q.epsilon) + rest
        }
        Regime::Convex => base_rounds(q) * q.v0,
        Regime::Nonconvex => base_rounds(q) * q.f_gap0,
    })
}

/// Computation and communication columns for the given `(α, β)`:
/// `β·K̃` and `α·K̃` with logarithmic and initial-condition factors dropped.
pub fn table_costs(q: &ComplexityQuery) -> Result<CostPoint> {
    q.validate()?;
    let k = base_rounds(q);
    Ok(CostPoint {
        alpha: q.alpha,
        beta: q.beta,
        comm: q.alpha as f64 * k,
        comp: q.beta as f64 * k,
    })
}

/// Number of accelerated gossip steps per round for the regime.
pub fn select_alpha(
    regime: Regime,
    rho_w: f64,
    n: usize,
    beta: u32,
    lipschitz: f64,
    mu: f64,
    r0: f64,
) -> Result<u32> {
    if !(0.0..1.0).contains(&rho_w) {
        return Err(Error::param("rho_w", "must lie in [0, 1)"));
    }
    if n == 0 || beta == 0 {
        return Err(Error::param("n/beta", "must be at least 1"));
    }
    let nb = n as f64 * beta as f64;
    let arg = match regime {
        Regime::StronglyConvex => {
            if !(mu > 0.0 && lipschitz > 0.0) {
                return Err(Error::param("mu", "strongly convex rule needs L, mu > 0"));
            }
            nb * lipschitz / mu
        }
        Regime::Convex => nb,
        Regime::Nonconvex => beta as f64 * (n as f64).max(r0),
    };
    let numer = 2f64.ln().max(0.5 * arg.ln());
    let denom = (1.0 - rho_w.sqrt()).sqrt();
    Ok(((numer / denom).ceil() as u32).max(1))
}

fn accelerated_query(q: &ComplexityQuery) -> Result<(u32, f64)> {
    q.validate()?;
    let alpha = select_alpha(q.regime, q.rho_w, q.n, q.beta, q.lipschitz, q.mu, q.r0)?;
    Ok((alpha, 1.0 / (1.0 - q.rho_w.sqrt()).sqrt()))
}

/// Rounds needed by the accelerated variant with α from [`select_alpha`]
/// (the query's own `alpha` and `protocol` are ignored).
pub fn acc_iteration_complexity(q: &ComplexityQuery) -> Result<f64> {
    accelerated_query(q)?;
    let (l, mu, s2, n, eps, beta) = (
        q.lipschitz,
        q.mu,
        q.sigma * q.sigma,
        q.n as f64,
        q.epsilon,
        q.beta as f64,
    );
    Ok(match q.regime {
        Regime::StronglyConvex => l / mu * log_ratio(q.v0, eps) + s2 / (n * mu * mu * beta * eps),
        Regime::Convex => (l.sqrt() / eps + l * s2 / (n * beta * eps * eps)) * q.v0,
        Regime::Nonconvex => (l / eps + l * s2 / (n * beta * eps * eps)) * q.f_gap0,
    })
}

/// Computation and communication columns of the accelerated variant, with α
/// from [`select_alpha`] recorded in the returned point.
pub fn acc_table_costs(q: &ComplexityQuery) -> Result<CostPoint> {
    let (alpha, accel) = accelerated_query(q)?;
    let (l, mu, s2, n, eps, beta) = (
        q.lipschitz,
        q.mu,
        q.sigma * q.sigma,
        q.n as f64,
        q.epsilon,
        q.beta as f64,
    );
    let (comp, comm) = match q.regime {
        Regime::StronglyConvex => (
            beta * l / mu + s2 / (n * mu * mu * eps),
            (s2 / (n * beta * mu * mu * eps) + l / mu) * accel,
        ),
        Regime::Convex => (
            l * s2 / (n * eps * eps) + beta * l.sqrt() / eps,
            (l * s2 / (n * beta * eps * eps) + l.sqrt() / eps) * accel,
        ),
        Regime::Nonconvex => (
            l * s2 / (n * eps * eps) + beta * l / eps,
            (l * s2 / (n * beta * eps * eps) + l / eps) * accel,
        ),
    };
    Ok(CostPoint {
        alpha,
        beta: q.beta,
        comm,
        comp,
    })
}

/// Quantity scanned by [`empirical_cost`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMetric {
    /// `‖x̄ − x*‖²`
    OptGap,
    /// `‖x̄ − x*‖² / ‖x̄₀ − x*‖²`
    Residual,
    /// Running average of `f(x̄) − f*`.
    FGapAvg,
    /// Running average of `‖∇f(x̄)‖²`.
    GradNormAvg,
}

/// Counters at the first recorded round where the metric is at most ε.
pub fn empirical_cost(traj: &Trajectory, epsilon: f64, metric: CostMetric) -> Option<CostPoint> {
    let recs = &traj.records;
    let first_gap = recs.first()?.opt_gap;
    let mut running = 0.0;
    for (k, r) in recs.iter().enumerate() {
        let value = match metric {
            CostMetric::OptGap => r.opt_gap?,
            CostMetric::Residual => {
                let g0 = first_gap?;
                if g0 == 0.0 {
                    0.0
                } else {
                    r.opt_gap? / g0
                }
            }
            CostMetric::FGapAvg => {
                running += r.f_gap?;
                running / (k + 1) as f64
            }
            CostMetric::GradNormAvg => {
                running += r.grad_norm_sq;
                running / (k + 1) as f64
            }
        };
        if value <= epsilon {
            return Some(CostPoint {
                alpha: traj.config.alpha,
                beta: traj.config.beta,
                comm: r.comm_steps as f64,
                comp: r.comp_steps as f64,
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc_query() -> ComplexityQuery {
        ComplexityQuery::new(Regime::StronglyConvex, 1.0, 0.001, 0.1, 20, 0.74, 1e-3)
    }

    #[test]
    fn noiseless_sc_keeps_log_term() {
        let mut q = sc_query().with_steps(2, 4);
        q.sigma = 0.0;
        q.v0 = 5.0;
        let rho = 0.74f64.powi(2);
        let expected = 1.0 / ((1.0 - rho).powi(2) * 0.001) * (5.0f64 / 1e-3).ln();
        assert!((iteration_complexity(&q).unwrap() / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fully_mixed_sc_drops_topology_term() {
        let mut q = sc_query().with_steps(1, 3);
        q.rho_w = 0.0;
        q.v0 = 2.0;
        let expected = 1.0 / 0.001 * (2.0f64 / 1e-3).ln() + 0.01 / (3.0 * 1e-6 * 20.0 * 1e-3);
        assert!((iteration_complexity(&q).unwrap() / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_steps_costs_equal() {
        let c = table_costs(&sc_query()).unwrap();
        assert_eq!(c.comm, c.comp);
    }

    #[test]
    fn select_alpha_worked_example() {
        let a = select_alpha(Regime::StronglyConvex, 0.74, 20, 3, 1.0, 0.001, 0.0).unwrap();
        let arg: f64 = 20.0 * 3.0 / 0.001;
        let expected = (0.5 * arg.ln() / (1.0 - 0.74f64.sqrt()).sqrt()).ceil();
        assert_eq!(a as f64, expected);
        assert_eq!(a, 15);
    }

    #[test]
    fn select_alpha_fully_mixed() {
        for regime in [Regime::StronglyConvex, Regime::Convex, Regime::Nonconvex] {
            let a = select_alpha(regime, 0.0, 1, 1, 1.0, 1.0, 0.0).unwrap();
            // max{ln 2, ½ ln 1} = ln 2 rounds up to 1.
            assert_eq!(a, 1);
        }
        assert!(select_alpha(Regime::Convex, 1.0, 4, 1, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn nonconvex_alpha_collapses_to_convex_rule() {
        for beta in 1..10 {
            let c = select_alpha(Regime::Convex, 0.5, 20, beta, 1.0, 0.0, 0.0).unwrap();
            let nc = select_alpha(Regime::Nonconvex, 0.5, 20, beta, 1.0, 0.0, 7.0).unwrap();
            assert_eq!(c, nc);
        }
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let mut q = sc_query();
        q.epsilon = 0.0;
        assert!(iteration_complexity(&q).is_err());
        assert!(table_costs(&q).is_err());
    }

    #[test]
    fn override_replaces_bound() {
        let mut q = sc_query().with_steps(3, 1);
        q.rho_bar_override = Some(0.1);
        assert_eq!(q.rho_bar(), 0.1);
        q.rho_bar_override = None;
        assert!((q.rho_bar() - 0.74f64.powi(3)).abs() < 1e-15);
    }
}
