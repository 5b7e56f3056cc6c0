use crate::error::{Error, Result};
use crate::problems::Regime;

fn check_inputs(l: f64, beta: u32, rho_bar: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::param("L", "must be positive and finite"));
    }
    if beta == 0 {
        return Err(Error::param("beta", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&rho_bar) {
        return Err(Error::param("rho_bar", "must lie in [0, 1)"));
    }
    Ok(())
}

/// Largest stepsize covered by the convergence analysis for `regime`.
/// Terms involving `rho_bar` are skipped when it is zero.
pub fn stepsize_rule(regime: Regime, l: f64, beta: u32, rho_bar: f64) -> Result<f64> {
    check_inputs(l, beta, rho_bar)?;
    let bl = beta as f64 * l;
    let (first, middle) = match regime {
        Regime::StronglyConvex | Regime::Convex => (1.0 / (4.0 * 2f64.sqrt() * bl), 18.0),
        Regime::Nonconvex => (1.0 / (4.0 * bl), 14.0),
    };
    if rho_bar == 0.0 {
        return Ok(first);
    }
    let gap = 1.0 - rho_bar;
    let second = gap / (middle * bl * rho_bar.sqrt());
    let third = gap * gap / (40.0 * bl * rho_bar);
    Ok(first.min(second).min(third))
}

/// Empirical rule `γ = c(1 − ρ̄)²/(ρ̄βL)` used for the ridge experiments.
/// Undefined for `rho_bar = 0`.
pub fn empirical_stepsize(c: f64, l: f64, beta: u32, rho_bar: f64) -> Result<f64> {
    check_inputs(l, beta, rho_bar)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("c", "must be positive and finite"));
    }
    if rho_bar == 0.0 {
        return Err(Error::param("rho_bar", "empirical rule needs rho_bar > 0"));
    }
    let gap = 1.0 - rho_bar;
    Ok(c * gap * gap / (rho_bar * beta as f64 * l))
}
