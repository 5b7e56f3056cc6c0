//! Local objective families, stochastic gradient oracles and their constants.

mod generate;
mod rng;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_rows;

pub use generate::{make_least_squares, make_nonconvex, make_nonconvex_with, make_ridge, NonconvexOptions};
pub use rng::NodeRngs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StronglyConvex,
    Convex,
    Nonconvex,
}

/// How `sigma` maps to the per-coordinate noise variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaling {
    /// Per-coordinate variance `σ²/p`, so `E‖δ‖² = σ²`.
    #[default]
    Total,
    /// Per-coordinate variance `σ²`, so `E‖δ‖² = pσ²`.
    PerCoordinate,
}

/// Per-node data for the logistic family: one feature row per sample and
/// labels in {−1, +1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSamples {
    #[serde(with = "serde_rows")]
    pub features: DMatrix<f64>,
    #[serde(with = "serde_rows::vector")]
    pub labels: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `f_i(x) = (h_iᵀx − v̄_i)² + (μ/2)‖x‖²`; row `i` of `h` is `h_i`.
    Ridge {
        #[serde(with = "serde_rows")]
        h: DMatrix<f64>,
        #[serde(with = "serde_rows::vector")]
        vbar: DVector<f64>,
        mu: f64,
    },
    /// `f_i(x) = (h_iᵀx − v̄_i)²`.
    LeastSquares {
        #[serde(with = "serde_rows")]
        h: DMatrix<f64>,
        #[serde(with = "serde_rows::vector")]
        vbar: DVector<f64>,
    },
    /// `f_i(x) = (1/m)Σ_j log(1 + exp(−b_j a_jᵀx)) + λ Σ_d x_d²/(1 + x_d²)`.
    Logistic { nodes: Vec<NodeSamples>, lambda: f64 },
}

/// Serialized form of a problem: everything needed to rebuild it exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemData {
    #[serde(flatten)]
    pub family: Family,
    pub sigma: f64,
    #[serde(default)]
    pub noise: NoiseScaling,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSample {
    pub value: DVector<f64>,
    pub node: usize,
    pub snapshot: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ProblemData", try_from = "ProblemData")]
pub struct Problem {
    n: usize,
    p: usize,
    regime: Regime,
    lipschitz: f64,
    mu: f64,
    sigma: f64,
    noise: NoiseScaling,
    seed: Option<u64>,
    family: Family,
    x_star: Option<DVector<f64>>,
    f_star: Option<f64>,
}

impl From<Problem> for ProblemData {
    fn from(p: Problem) -> Self {
        ProblemData {
            family: p.family,
            sigma: p.sigma,
            noise: p.noise,
            seed: p.seed,
        }
    }
}

impl TryFrom<ProblemData> for Problem {
    type Error = Error;

    fn try_from(d: ProblemData) -> Result<Self> {
        let p = Problem::from_family(d.family, d.sigma)?;
        Ok(p.with_noise(d.noise).with_seed(d.seed))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", "must be finite and non-negative"));
    }
    Ok(())
}

fn check_linear_data(h: &DMatrix<f64>, vbar: &DVector<f64>) -> Result<()> {
    if h.nrows() == 0 || h.ncols() == 0 {
        return Err(Error::param("h", "need at least one node and one dimension"));
    }
    if vbar.len() != h.nrows() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} targets", h.nrows()),
            actual: vbar.len().to_string(),
        });
    }
    Ok(())
}

fn max_row_norm_sq(h: &DMatrix<f64>) -> f64 {
    h.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max)
}

/// Logistic loss `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Problem {
    /// Ridge instance from explicit data (row `i` of `h` is node `i`'s features).
    pub fn ridge(h: DMatrix<f64>, vbar: DVector<f64>, mu: f64, sigma: f64) -> Result<Self> {
        Self::from_family(Family::Ridge { h, vbar, mu }, sigma)
    }

    pub fn least_squares(h: DMatrix<f64>, vbar: DVector<f64>, sigma: f64) -> Result<Self> {
        Self::from_family(Family::LeastSquares { h, vbar }, sigma)
    }

    pub fn logistic(nodes: Vec<NodeSamples>, lambda: f64, sigma: f64) -> Result<Self> {
        Self::from_family(Family::Logistic { nodes, lambda }, sigma)
    }

    pub fn from_family(family: Family, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        let (n, p, regime, lipschitz, mu) = match &family {
            Family::Ridge { h, vbar, mu } => {
                check_linear_data(h, vbar)?;
                if !(*mu > 0.0 && mu.is_finite()) {
                    return Err(Error::param("mu", "ridge requires mu > 0"));
                }
                let l = 2.0 * max_row_norm_sq(h) + mu;
                (h.nrows(), h.ncols(), Regime::StronglyConvex, l, *mu)
            }
            Family::LeastSquares { h, vbar } => {
                check_linear_data(h, vbar)?;
                (
                    h.nrows(),
                    h.ncols(),
                    Regime::Convex,
                    2.0 * max_row_norm_sq(h),
                    0.0,
                )
            }
            Family::Logistic { nodes, lambda } => {
                if nodes.is_empty() {
                    return Err(Error::param("nodes", "need at least one node"));
                }
                if !(*lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::param("lambda", "must be finite and non-negative"));
                }
                let p = nodes[0].features.ncols();
                if p == 0 {
                    return Err(Error::param("features", "need at least one dimension"));
                }
                let mut l_log: f64 = 0.0;
                for node in nodes {
                    let m = node.features.nrows();
                    if m == 0 || node.features.ncols() != p || node.labels.len() != m {
                        return Err(Error::DimensionMismatch {
                            expected: format!("m x {p} features with m labels"),
                            actual: format!(
                                "{}x{} features, {} labels",
                                m,
                                node.features.ncols(),
                                node.labels.len()
                            ),
                        });
                    }
                    let gram = node.features.transpose() * &node.features / m as f64;
                    let top = gram.symmetric_eigen().eigenvalues.max();
                    l_log = l_log.max(0.25 * top);
                }
                let regime = if *lambda > 0.0 {
                    Regime::Nonconvex
                } else {
                    Regime::Convex
                };
                (nodes.len(), p, regime, l_log + 2.0 * lambda, 0.0)
            }
        };
        let mut problem = Problem {
            n,
            p,
            regime,
            lipschitz,
            mu,
            sigma,
            noise: NoiseScaling::Total,
            seed: None,
            family,
            x_star: None,
            f_star: None,
        };
        problem.x_star = problem.solve_optimum();
        problem.f_star = match (&problem.family, &problem.x_star) {
            (Family::Logistic { .. }, _) => Some(0.0),
            (_, Some(x)) => Some(problem.value(x)),
            _ => None,
        };
        Ok(problem)
    }

    pub fn with_noise(mut self, noise: NoiseScaling) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    fn solve_optimum(&self) -> Option<DVector<f64>> {
        match &self.family {
            Family::Ridge { h, vbar, mu } => {
                let scale = 2.0 / self.n as f64;
                let a = h.transpose() * h * scale + DMatrix::identity(self.p, self.p) * *mu;
                let b = h.transpose() * vbar * scale;
                a.cholesky().map(|c| c.solve(&b))
            }
            Family::LeastSquares { h, vbar } => {
                // Minimum-norm minimizer of Σ(h_iᵀx − v̄_i)².
                h.clone().svd(true, true).solve(vbar, 1e-12).ok()
            }
            Family::Logistic { .. } => None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Smoothness constant computed from the data.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn noise(&self) -> NoiseScaling {
        self.noise
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Closed-form minimizer; `None` for the nonconvex family.
    pub fn optimum(&self) -> Option<&DVector<f64>> {
        self.x_star.as_ref()
    }

    /// Optimal value for the convex families; the analytic lower bound 0 for
    /// the logistic family.
    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    /// Variance of each noise coordinate.
    pub fn noise_variance(&self) -> f64 {
        match self.noise {
            NoiseScaling::Total => self.sigma * self.sigma / self.p as f64,
            NoiseScaling::PerCoordinate => self.sigma * self.sigma,
        }
    }

    /// `E‖δ‖²` of the oracle noise.
    pub fn noise_total_variance(&self) -> f64 {
        self.noise_variance() * self.p as f64
    }

    fn check_point(&self, i: usize, x: &DVector<f64>) -> Result<()> {
        if i >= self.n {
            return Err(Error::NodeOutOfRange { index: i, n: self.n });
        }
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: format!("dimension {}", self.p),
                actual: x.len().to_string(),
            });
        }
        Ok(())
    }

    /// `f_i(x)`.
    pub fn local_value(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_point(i, x)?;
        Ok(self.local_value_unchecked(i, x))
    }

    fn local_value_unchecked(&self, i: usize, x: &DVector<f64>) -> f64 {
        match &self.family {
            Family::Ridge { h, vbar, mu } => {
                let r = h.row(i).dot(&x.transpose()) - vbar[i];
                r * r + 0.5 * mu * x.norm_squared()
            }
            Family::LeastSquares { h, vbar } => {
                let r = h.row(i).dot(&x.transpose()) - vbar[i];
                r * r
            }
            Family::Logistic { nodes, lambda } => {
                let node = &nodes[i];
                let margins = &node.features * x;
                let m = node.labels.len() as f64;
                let loss: f64 = margins
                    .iter()
                    .zip(node.labels.iter())
                    .map(|(t, b)| softplus(-b * t))
                    .sum::<f64>()
                    / m;
                let reg: f64 = x.iter().map(|v| v * v / (1.0 + v * v)).sum();
                loss + lambda * reg
            }
        }
    }

    /// `f(x) = (1/n)Σ_i f_i(x)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (0..self.n).map(|i| self.local_value_unchecked(i, x)).sum::<f64>() / self.n as f64
    }

    /// Exact `∇f_i(x)`.
    pub fn grad(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(i, x)?;
        Ok(self.grad_unchecked(i, x))
    }

    fn grad_unchecked(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        match &self.family {
            Family::Ridge { h, vbar, mu } => {
                let hi = h.row(i).transpose();
                let r = hi.dot(x) - vbar[i];
                hi * (2.0 * r) + x * *mu
            }
            Family::LeastSquares { h, vbar } => {
                let hi = h.row(i).transpose();
                let r = hi.dot(x) - vbar[i];
                hi * (2.0 * r)
            }
            Family::Logistic { nodes, lambda } => {
                let node = &nodes[i];
                let m = node.labels.len() as f64;
                let margins = &node.features * x;
                let weights = DVector::from_iterator(
                    node.labels.len(),
                    margins
                        .iter()
                        .zip(node.labels.iter())
                        .map(|(t, b)| -b * sigmoid(-b * t) / m),
                );
                let mut g = node.features.transpose() * weights;
                for (gd, xd) in g.iter_mut().zip(x.iter()) {
                    let q = 1.0 + xd * xd;
                    *gd += lambda * 2.0 * xd / (q * q);
                }
                g
            }
        }
    }

    /// `∇f(x) = (1/n)Σ_i ∇f_i(x)`.
    pub fn full_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.p);
        for i in 0..self.n {
            g += self.grad_unchecked(i, x);
        }
        g / self.n as f64
    }

    /// Row `i` of the result is `∇f_i(x_i)` where `x_i` is row `i` of `x`.
    pub fn grads(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(x)?;
        let mut out = DMatrix::zeros(self.n, self.p);
        for i in 0..self.n {
            let xi = x.row(i).transpose();
            out.set_row(i, &self.grad_unchecked(i, &xi).transpose());
        }
        Ok(out)
    }

    fn check_rows(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.n || x.ncols() != self.p {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.n, self.p),
                actual: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        Ok(())
    }

    fn add_noise<R: Rng + ?Sized>(&self, g: &mut DVector<f64>, rng: &mut R) {
        if self.sigma == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, self.noise_variance().sqrt())
            .expect("noise standard deviation is finite and non-negative");
        for v in g.iter_mut() {
            *v += normal.sample(rng);
        }
    }

    /// One draw of `∇f_i(x; ξ) = ∇f_i(x) + δ` with Gaussian `δ`. With
    /// `sigma = 0` no randomness is consumed.
    pub fn stoch_grad<R: Rng + ?Sized>(
        &self,
        i: usize,
        x: &DVector<f64>,
        rng: &mut R,
    ) -> Result<GradientSample> {
        self.check_point(i, x)?;
        let mut value = self.grad_unchecked(i, x);
        self.add_noise(&mut value, rng);
        Ok(GradientSample {
            value,
            node: i,
            snapshot: x.clone(),
        })
    }

    /// Stochastic gradients for every node, row `i` evaluated at row `i` of
    /// `x` with node `i`'s stream.
    pub fn stoch_grads(&self, x: &DMatrix<f64>, rngs: &mut NodeRngs) -> Result<DMatrix<f64>> {
        self.check_rows(x)?;
        if rngs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} node streams", self.n),
                actual: rngs.len().to_string(),
            });
        }
        let mut out = DMatrix::zeros(self.n, self.p);
        for i in 0..self.n {
            let xi = x.row(i).transpose();
            let mut g = self.grad_unchecked(i, &xi);
            self.add_noise(&mut g, rngs.node(i));
            out.set_row(i, &g.transpose());
        }
        Ok(out)
    }

    /// `(1/n)Σ_i ‖∇f_i(x) − ∇f(x)‖²` at one point.
    pub fn heterogeneity(&self, x: &DVector<f64>) -> f64 {
        let grads: Vec<DVector<f64>> = (0..self.n).map(|i| self.grad_unchecked(i, x)).collect();
        let mean = grads.iter().fold(DVector::zeros(self.p), |acc, g| acc + g) / self.n as f64;
        grads.iter().map(|g| (g - &mean).norm_squared()).sum::<f64>() / self.n as f64
    }

    /// Largest pointwise heterogeneity over the supplied points.
    pub fn heterogeneity_max<'a, I>(&self, points: I) -> f64
    where
        I: IntoIterator<Item = &'a DVector<f64>>,
    {
        points
            .into_iter()
            .map(|x| self.heterogeneity(x))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_ridge(v: f64) -> Problem {
        Problem::ridge(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, v),
            1.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn scalar_ridge_gradient_is_three_x() {
        let p = scalar_ridge(0.0);
        let g = p.grad(0, &DVector::from_element(1, 2.0)).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-15);
        assert!((p.lipschitz() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_ridge_optimum() {
        let p = scalar_ridge(1.0);
        assert!((p.optimum().unwrap()[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_mu_and_bad_index() {
        let h = DMatrix::from_element(1, 1, 1.0);
        let v = DVector::from_element(1, 0.0);
        assert!(Problem::ridge(h.clone(), v.clone(), 0.0, 0.0).is_err());
        assert!(Problem::ridge(h.clone(), v.clone(), -1.0, 0.0).is_err());
        let p = Problem::ridge(h, v, 1.0, 0.0).unwrap();
        assert_eq!(
            p.grad(1, &DVector::zeros(1)),
            Err(Error::NodeOutOfRange { index: 1, n: 1 })
        );
    }

    #[test]
    fn zero_sigma_sample_equals_gradient() {
        let p = make_ridge(5, 3, 0.5, 0.0, 2).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.1, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..5 {
            let s = p.stoch_grad(i, &x, &mut rng).unwrap();
            assert_eq!(s.value, p.grad(i, &x).unwrap());
            assert_eq!(s.node, i);
            assert_eq!(s.snapshot, x);
        }
    }

    #[test]
    fn single_node_has_no_heterogeneity() {
        let p = make_ridge(1, 4, 0.1, 0.0, 9).unwrap();
        assert_eq!(p.heterogeneity(&DVector::from_element(4, 0.7)), 0.0);
    }

    #[test]
    fn identical_nodes_have_no_heterogeneity() {
        let h = DMatrix::from_fn(3, 2, |_, j| 0.2 + j as f64);
        let v = DVector::from_element(3, 0.4);
        let p = Problem::ridge(h, v, 0.3, 0.0).unwrap();
        assert!(p.heterogeneity(&DVector::from_vec(vec![1.0, -2.0])) < 1e-28);
    }

    #[test]
    fn heterogeneity_at_origin_by_direct_sum() {
        let p = make_ridge(6, 3, 0.01, 0.0, 4).unwrap();
        let (h, v) = match p.family() {
            Family::Ridge { h, vbar, .. } => (h.clone(), vbar.clone()),
            _ => unreachable!(),
        };
        // At x = 0, ∇f_i(0) = −2 v̄_i h_i.
        let g: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..3).map(|d| -2.0 * v[i] * h[(i, d)]).collect())
            .collect();
        let mean: Vec<f64> = (0..3)
            .map(|d| g.iter().map(|r| r[d]).sum::<f64>() / 6.0)
            .collect();
        let mut expected = 0.0;
        for row in &g {
            for d in 0..3 {
                expected += (row[d] - mean[d]).powi(2);
            }
        }
        expected /= 6.0;
        let got = p.heterogeneity(&DVector::zeros(3));
        assert!(got > 0.0);
        assert!((got - expected).abs() < 1e-13);
    }

    #[test]
    fn least_squares_optimum_zero_gradient() {
        let p = make_least_squares(20, 5, 0.0, 3).unwrap();
        let x = p.optimum().unwrap();
        assert!(p.full_grad(x).norm() < 1e-10);
        assert_eq!(p.regime(), Regime::Convex);
        assert_eq!(p.mu(), 0.0);
    }

    #[test]
    fn per_coordinate_noise_switch() {
        let p = make_ridge(2, 4, 1.0, 0.2, 0).unwrap();
        assert!((p.noise_total_variance() - 0.04).abs() < 1e-15);
        let q = p.with_noise(NoiseScaling::PerCoordinate);
        assert!((q.noise_total_variance() - 0.16).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_rebuilds_problem() {
        for p in [
            make_ridge(4, 3, 0.2, 0.1, 5).unwrap(),
            make_least_squares(4, 3, 0.1, 5).unwrap(),
            make_nonconvex(3, 2, 0.1, 5).unwrap(),
        ] {
            let back = Problem::from_json(&p.to_json().unwrap()).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    }
}
