use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NodeSamples, Problem};
use crate::error::{Error, Result};

fn check_shape(n: usize, p: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if p == 0 {
        return Err(Error::param("p", "must be at least 1"));
    }
    Ok(())
}

/// Features `h_i` and targets `v̄_i`, all uniform on [0, 1], filled row by row.
fn uniform_linear_data(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = DMatrix::zeros(n, p);
    for i in 0..n {
        for d in 0..p {
            h[(i, d)] = rng.random::<f64>();
        }
    }
    let vbar = DVector::from_fn(n, |_, _| rng.random::<f64>());
    (h, vbar)
}

/// Ridge regression with one feature vector and one target per node.
pub fn make_ridge(n: usize, p: usize, mu: f64, sigma: f64, seed: u64) -> Result<Problem> {
    check_shape(n, p)?;
    let (h, vbar) = uniform_linear_data(n, p, seed);
    Ok(Problem::ridge(h, vbar, mu, sigma)?.with_seed(Some(seed)))
}

/// The unregularized (merely convex) counterpart of [`make_ridge`].
pub fn make_least_squares(n: usize, p: usize, sigma: f64, seed: u64) -> Result<Problem> {
    check_shape(n, p)?;
    let (h, vbar) = uniform_linear_data(n, p, seed);
    Ok(Problem::least_squares(h, vbar, sigma)?.with_seed(Some(seed)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonconvexOptions {
    pub samples_per_node: usize,
    pub lambda: f64,
    /// Probability of flipping each label, which keeps the pooled data
    /// non-separable.
    pub label_flip: f64,
    /// Standard deviation of the per-node mean shift of the features.
    pub node_shift: f64,
}

impl Default for NonconvexOptions {
    fn default() -> Self {
        NonconvexOptions {
            samples_per_node: 20,
            lambda: 0.1,
            label_flip: 0.2,
            node_shift: 0.5,
        }
    }
}

pub fn make_nonconvex(n: usize, p: usize, sigma: f64, seed: u64) -> Result<Problem> {
    make_nonconvex_with(n, p, sigma, seed, NonconvexOptions::default())
}

/// Logistic regression with a bounded nonconvex penalty. Node features are
/// standard normal around a node-specific mean; labels follow a shared linear
/// teacher with random flips.
pub fn make_nonconvex_with(
    n: usize,
    p: usize,
    sigma: f64,
    seed: u64,
    opts: NonconvexOptions,
) -> Result<Problem> {
    check_shape(n, p)?;
    if opts.samples_per_node == 0 {
        return Err(Error::param("samples_per_node", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&opts.label_flip) {
        return Err(Error::param("label_flip", "must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let teacher: Vec<f64> = (0..p).map(|_| normal()).collect();
    let mut nodes = Vec::with_capacity(n);
    let mut flip_rng = ChaCha8Rng::seed_from_u64(seed);
    flip_rng.set_stream(1);
    for _ in 0..n {
        let shift: Vec<f64> = (0..p).map(|_| opts.node_shift * normal()).collect();
        let m = opts.samples_per_node;
        let mut features = DMatrix::zeros(m, p);
        let mut labels = DVector::zeros(m);
        for j in 0..m {
            let mut score = 0.0;
            for d in 0..p {
                let a = shift[d] + normal();
                features[(j, d)] = a;
                score += a * teacher[d];
            }
            let mut b = if score >= 0.0 { 1.0 } else { -1.0 };
            if flip_rng.random::<f64>() < opts.label_flip {
                b = -b;
            }
            labels[j] = b;
        }
        nodes.push(NodeSamples { features, labels });
    }
    Ok(Problem::logistic(nodes, opts.lambda, sigma)?.with_seed(Some(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Family, Regime};

    #[test]
    fn ridge_lipschitz_recomputed() {
        let p = make_ridge(20, 10, 0.001, 0.1, 7).unwrap();
        let Family::Ridge { h, .. } = p.family() else {
            unreachable!()
        };
        let mut max = 0.0f64;
        for i in 0..20 {
            let mut s = 0.0;
            for d in 0..10 {
                s += h[(i, d)] * h[(i, d)];
            }
            max = max.max(s);
        }
        assert!((p.lipschitz() - (2.0 * max + 0.001)).abs() < 1e-13);
        assert!(h.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn same_seed_same_problem() {
        assert_eq!(
            make_nonconvex(4, 3, 0.1, 9).unwrap(),
            make_nonconvex(4, 3, 0.1, 9).unwrap()
        );
        assert_ne!(
            make_ridge(4, 3, 1.0, 0.1, 1).unwrap(),
            make_ridge(4, 3, 1.0, 0.1, 2).unwrap()
        );
    }

    #[test]
    fn nonconvex_regime_and_lower_bound() {
        let p = make_nonconvex(5, 4, 0.0, 1).unwrap();
        assert_eq!(p.regime(), Regime::Nonconvex);
        assert_eq!(p.f_star(), Some(0.0));
        assert!(p.optimum().is_none());
        let convex = make_nonconvex_with(
            5,
            4,
            0.0,
            1,
            NonconvexOptions {
                lambda: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(convex.regime(), Regime::Convex);
    }

    #[test]
    fn rejects_empty_shapes() {
        assert!(make_ridge(0, 2, 1.0, 0.0, 0).is_err());
        assert!(make_ridge(2, 0, 1.0, 0.0, 0).is_err());
        assert!(make_nonconvex(0, 2, 0.0, 0).is_err());
    }
}
