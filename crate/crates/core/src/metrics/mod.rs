//! Per-round diagnostics and checks of the convergence bounds.

mod checks;
mod lemmas;

use serde::{Deserialize, Serialize};

use crate::algorithm::{row_mean, SwarmState};
use crate::problems::Problem;

pub use checks::{
    check_convex_rate, check_nc_rate, check_noise_floor, check_sc_contraction, default_slack, ensemble_mean,
    CheckReport, Margin, TheoryParams, CHECK_REL_TOL, STOCHASTIC_SLACK,
};
pub use lemmas::{check_lemmas, lemma_margins, LemmaReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub round: usize,
    pub comp_steps: u64,
    pub comm_steps: u64,
    /// `‖x̄ − x*‖²`
    pub opt_gap: Option<f64>,
    /// `‖X − 1x̄ᵀ‖²`
    pub cons_err: f64,
    /// `‖Y − 1ȳᵀ‖²`
    pub track_err: f64,
    pub lyapunov: Option<f64>,
    /// `‖∇f(x̄)‖²`
    pub grad_norm_sq: f64,
    /// `f(x̄) − f*`
    pub f_gap: Option<f64>,
}

impl MetricRecord {
    /// Name of the first non-finite field, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        let fields = [
            ("opt_gap", self.opt_gap),
            ("cons_err", Some(self.cons_err)),
            ("track_err", Some(self.track_err)),
            ("lyapunov", self.lyapunov),
            ("grad_norm_sq", Some(self.grad_norm_sq)),
            ("f_gap", self.f_gap),
        ];
        fields
            .into_iter()
            .find(|(_, v)| v.is_some_and(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }
}

/// Weights of the consensus and tracking errors in the Lyapunov function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCoeffs {
    pub c_x: f64,
    pub c_y: f64,
}

impl LyapunovCoeffs {
    pub fn new(gamma: f64, beta: u32, lipschitz: f64, n: usize, rho_bar: f64) -> Self {
        let gb = gamma * beta as f64;
        let n = n as f64;
        let gap = 1.0 - rho_bar;
        LyapunovCoeffs {
            c_x: 16.0 * gb * lipschitz / (n * gap),
            c_y: 256.0 * gb.powi(3) * lipschitz * rho_bar / (n * gap.powi(3)),
        }
    }

    pub fn value(&self, opt_gap: f64, cons_err: f64, track_err: f64) -> f64 {
        opt_gap + self.c_x * cons_err + self.c_y * track_err
    }
}

/// Squared Frobenius distance of the rows of `m` from their mean.
fn spread(m: &nalgebra::DMatrix<f64>) -> f64 {
    let mean = row_mean(m);
    m.row_iter().map(|r| (r.transpose() - &mean).norm_squared()).sum()
}

pub fn measure(state: &SwarmState, problem: &Problem, coeffs: &LyapunovCoeffs) -> MetricRecord {
    let x_bar = state.x_bar();
    let cons_err = spread(&state.x);
    let track_err = spread(&state.y);
    let opt_gap = problem.optimum().map(|xs| (&x_bar - xs).norm_squared());
    let f_gap = problem.f_star().map(|fs| problem.value(&x_bar) - fs);
    MetricRecord {
        round: state.round,
        comp_steps: state.comp_steps,
        comm_steps: state.comm_steps,
        opt_gap,
        cons_err,
        track_err,
        lyapunov: opt_gap.map(|g| coeffs.value(g, cons_err, track_err)),
        grad_norm_sq: problem.full_grad(&x_bar).norm_squared(),
        f_gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_ridge;
    use nalgebra::DMatrix;

    fn state(x: DMatrix<f64>, y: DMatrix<f64>) -> SwarmState {
        SwarmState {
            z: x.clone(),
            gprev: y.clone(),
            x,
            y,
            round: 0,
            comp_steps: 0,
            comm_steps: 0,
        }
    }

    #[test]
    fn fixed_point_has_zero_metrics() {
        let p = make_ridge(3, 2, 1.0, 0.0, 0).unwrap();
        let xs = p.optimum().unwrap().clone();
        let x = DMatrix::from_fn(3, 2, |_, d| xs[d]);
        let y = DMatrix::from_fn(3, 2, |_, d| d as f64 + 0.5);
        let c = LyapunovCoeffs::new(0.01, 2, p.lipschitz(), 3, 0.3);
        let r = measure(&state(x, y), &p, &c);
        assert!(r.opt_gap.unwrap() < 1e-30);
        assert_eq!(r.cons_err, 0.0);
        assert_eq!(r.track_err, 0.0);
        assert!(r.lyapunov.unwrap() < 1e-30);
        assert!(r.f_gap.unwrap().abs() < 1e-14);
    }

    #[test]
    fn coefficients_vanish_with_gap() {
        let c = LyapunovCoeffs::new(0.1, 3, 2.0, 5, 0.0);
        assert_eq!(c.c_y, 0.0);
        assert!((c.c_x - 16.0 * 0.3 * 2.0 / 5.0).abs() < 1e-15);
        let c = LyapunovCoeffs::new(0.1, 3, 2.0, 5, 0.5);
        assert!(c.c_y > 0.0);
        assert!((c.c_y - 256.0 * 0.027 * 2.0 * 0.5 / (5.0 * 0.125)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_field_named() {
        let mut r = MetricRecord {
            round: 3,
            comp_steps: 0,
            comm_steps: 0,
            opt_gap: Some(1.0),
            cons_err: 0.0,
            track_err: f64::NAN,
            lyapunov: None,
            grad_norm_sq: 0.0,
            f_gap: None,
        };
        assert_eq!(r.first_non_finite(), Some("track_err"));
        r.track_err = 0.0;
        assert_eq!(r.first_non_finite(), None);
    }
}
