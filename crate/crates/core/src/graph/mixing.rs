use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::spectral::spectral_gap;
use super::topology::Topology;
use crate::error::{Error, Result};
use crate::serde_rows;

/// Tolerance for row and column sums of a mixing matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Slack allowed before a mixing-bound violation is reported.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Direct,
    Accelerated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingMatrix {
    #[serde(with = "serde_rows")]
    w: DMatrix<f64>,
    rho_w: f64,
}

impl MixingMatrix {
    /// Wraps an arbitrary doubly stochastic matrix, computing its gap.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::NotSquare {
                rows: w.nrows(),
                cols: w.ncols(),
            });
        }
        if w.nrows() == 0 {
            return Err(Error::param("w", "empty matrix"));
        }
        if let Some(dev) = stochastic_deviation(&w).filter(|&d| d > STOCHASTIC_TOL) {
            return Err(Error::param(
                "w",
                format!("not doubly stochastic (max sum deviation {dev:e})"),
            ));
        }
        let rho_w = spectral_gap(&w)?;
        Ok(MixingMatrix { w, rho_w })
    }

    /// Exact averaging `J = 11ᵀ/n`.
    pub fn averaging(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        Self::from_matrix(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn rho_w(&self) -> f64 {
        self.rho_w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }
}

/// Largest absolute deviation of any row or column sum from 1.
/// `None` when some entry is not finite.
pub fn stochastic_deviation(w: &DMatrix<f64>) -> Option<f64> {
    if w.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let rows = w.row_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = w.column_iter().map(|c| (c.sum() - 1.0).abs());
    Some(rows.chain(cols).fold(0.0, f64::max))
}

pub fn metropolis_weights(topology: &Topology) -> Result<MixingMatrix> {
    let n = topology.n();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let di = topology.degree(i);
        let mut off = 0.0;
        for &j in topology.neighbors(i) {
            if j != i {
                let wij = 1.0 / (1.0 + di.max(topology.degree(j)) as f64);
                w[(i, j)] = wij;
                off += wij;
            }
        }
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_matrix(w)
}

/// Momentum of the accelerated recursion for a given `ρ_W`.
pub fn momentum(rho_w: f64) -> f64 {
    let s = (1.0 - rho_w).max(0.0).sqrt();
    (1.0 - s) / (1.0 + s)
}

/// Upper bound on the effective gap after `alpha` steps of `protocol`.
pub fn gap_bound(protocol: Protocol, rho_w: f64, alpha: u32) -> f64 {
    match protocol {
        Protocol::Direct => rho_w.powi(alpha as i32),
        Protocol::Accelerated => {
            let base = 1.0 - (1.0 - rho_w.sqrt()).max(0.0).sqrt();
            2.0 * base.powi(2 * alpha as i32)
        }
    }
}

/// Per-round communication map `W̄` together with its effective gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingOperator {
    #[serde(with = "serde_rows")]
    matrix: DMatrix<f64>,
    protocol: Protocol,
    alpha: u32,
    rho_bar: f64,
    eta: f64,
    bound: f64,
}

impl MixingOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    /// Exact `‖W̄ − J‖²`.
    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// The theoretical bound for this protocol and `alpha`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `bound − rho_bar`; negative means the bound is violated.
    pub fn bound_margin(&self) -> f64 {
        self.bound - self.rho_bar
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// `W̄ X`. Each entry is accumulated over neighbors in index order, so
    /// results are reproducible by a plain per-node loop.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        if x.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} rows"),
                actual: format!("{} rows", x.nrows()),
            });
        }
        let mut out = DMatrix::zeros(n, x.ncols());
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += self.matrix[(i, j)] * x[(j, c)];
                }
                out[(i, c)] = acc;
            }
        }
        Ok(out)
    }

    /// Applies the `alpha` communication steps one at a time with `W`,
    /// including the momentum recursion for the accelerated protocol.
    pub fn apply_sequential(&self, w: &MixingMatrix, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != w.n() || w.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows", self.n()),
                actual: format!("{} rows", x.nrows()),
            });
        }
        Ok(recurse(w.w(), self.protocol, self.eta, self.alpha, x.clone()))
    }
}

fn recurse(w: &DMatrix<f64>, protocol: Protocol, eta: f64, alpha: u32, start: DMatrix<f64>) -> DMatrix<f64> {
    match protocol {
        Protocol::Direct => (0..alpha).fold(start, |acc, _| w * acc),
        Protocol::Accelerated => {
            let mut prev = start.clone();
            let mut cur = start;
            for _ in 0..alpha {
                let next = (w * &cur) * (1.0 + eta) - &prev * eta;
                prev = std::mem::replace(&mut cur, next);
            }
            cur
        }
    }
}

pub fn make_operator(w: &MixingMatrix, protocol: Protocol, alpha: u32) -> Result<MixingOperator> {
    if alpha == 0 {
        return Err(Error::param("alpha", "must be at least 1"));
    }
    let n = w.n();
    let eta = match protocol {
        Protocol::Direct => 0.0,
        Protocol::Accelerated => momentum(w.rho_w()),
    };
    let matrix = recurse(w.w(), protocol, eta, alpha, DMatrix::identity(n, n));
    let rho_bar = spectral_gap(&matrix)?;
    let bound = gap_bound(protocol, w.rho_w(), alpha);
    if rho_bar > bound + BOUND_TOL {
        log::warn!(
            "{protocol:?} operator with alpha={alpha}: effective gap {rho_bar:.6e} exceeds bound {bound:.6e}"
        );
    }
    Ok(MixingOperator {
        matrix,
        protocol,
        alpha,
        rho_bar,
        eta,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::topology::{build_topology, TopologyKind};

    fn ring(n: usize) -> MixingMatrix {
        metropolis_weights(&build_topology(TopologyKind::Ring, n, None).unwrap()).unwrap()
    }

    #[test]
    fn complete_two_is_averaging() {
        let w = metropolis_weights(&build_topology(TopologyKind::Complete, 2, None).unwrap()).unwrap();
        assert!(w.w().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert!(w.rho_w().abs() < 1e-15);
    }

    #[test]
    fn ring_three_is_averaging() {
        let w = ring(3);
        assert!(w.w().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(w.rho_w().abs() < 1e-15);
    }

    #[test]
    fn ring_weights_by_hand() {
        // Every node has degree 2, so each edge weight is 1/3.
        let w = ring(6);
        assert!((w.w()[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.w()[(0, 5)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.w()[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.w()[(0, 2)], 0.0);
    }

    #[test]
    fn path_weights_use_max_degree() {
        let t = build_topology(TopologyKind::Path, 3, None).unwrap();
        let w = metropolis_weights(&t).unwrap();
        // Degrees 1, 2, 1: edge weights 1/3, diagonal 2/3, 1/3, 2/3.
        assert!((w.w()[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.w()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.w()[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn direct_alpha_one_is_w() {
        let w = ring(7);
        let op = make_operator(&w, Protocol::Direct, 1).unwrap();
        assert_eq!(op.matrix(), w.w());
        assert!((op.rho_bar() - w.rho_w()).abs() < 1e-14);
    }

    #[test]
    fn accelerated_on_averaging_degenerates() {
        let j = MixingMatrix::averaging(5).unwrap();
        let op = make_operator(&j, Protocol::Accelerated, 3).unwrap();
        assert_eq!(op.eta(), 0.0);
        assert!((op.matrix() - j.w()).abs().max() < 1e-15);
        assert!(op.rho_bar() < 1e-15);
    }

    #[test]
    fn sequential_matches_cached() {
        let w = ring(9);
        let x = DMatrix::from_fn(9, 3, |i, j| (i * 3 + j) as f64 * 0.1 - 1.0);
        for protocol in [Protocol::Direct, Protocol::Accelerated] {
            let op = make_operator(&w, protocol, 5).unwrap();
            let a = op.apply(&x).unwrap();
            let b = op.apply_sequential(&w, &x).unwrap();
            assert!((a - b).abs().max() < 1e-12);
        }
    }

    #[test]
    fn rejects_zero_alpha_and_bad_matrix() {
        let w = ring(4);
        assert!(make_operator(&w, Protocol::Direct, 0).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
        assert!(MixingMatrix::from_matrix(bad).is_err());
        let op = make_operator(&w, Protocol::Direct, 2).unwrap();
        assert!(op.apply(&DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn momentum_at_zero_gap() {
        assert_eq!(momentum(0.0), 0.0);
        assert!(momentum(0.9) > 0.0 && momentum(0.9) < 1.0);
    }
}
