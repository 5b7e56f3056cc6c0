//! Experiment configuration: parsing, validation and resolution of the
//! `"auto"` placeholders into concrete values.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use flexgt::algorithm::{empirical_stepsize, stepsize_rule, AlgoConfig, Boundary, Method};
use flexgt::complexity::{select_alpha, CostMetric};
use flexgt::graph::{
    build_topology, make_operator, metropolis_weights, MixingMatrix, MixingOperator, Protocol, TopologyKind,
};
use flexgt::problems::{
    make_least_squares, make_nonconvex_with, make_ridge, NoiseScaling, NonconvexOptions, Problem, Regime,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Default constant of the empirical stepsize rule.
pub const PAPER_STEPSIZE_CONSTANT: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

/// Either the literal string `"auto"` or a concrete value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr<T> {
    Auto(Auto),
    Value(T),
}

impl<T> Default for AutoOr<T> {
    fn default() -> Self {
        AutoOr::Auto(Auto::Auto)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// Largest stepsize covered by the convergence analysis.
    Auto,
    /// `c(1 − ρ̄)²/(ρ̄βL)` with `c = paper_c`.
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Rule(GammaRule),
    Value(f64),
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::Rule(GammaRule::Auto)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Ridge,
    LeastSquares,
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub family: FamilyKind,
    pub n: usize,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default)]
    pub sigma: f64,
    /// Seed of the data generator.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseScaling,
    /// Smoothness constant fed to the stepsize rules; `"auto"` uses the
    /// problem's own.
    #[serde(default)]
    pub lipschitz: AutoOr<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logistic: Option<NonconvexOptions>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "direct")]
    pub protocol: Protocol,
    #[serde(default = "one_step")]
    pub alpha: AutoOr<u32>,
    pub beta: u32,
    #[serde(default)]
    pub gamma: GammaSpec,
    #[serde(default = "paper_c")]
    pub paper_c: f64,
    #[serde(default = "unit")]
    pub stepsize_scale: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

fn direct() -> Protocol {
    Protocol::Direct
}

fn one_step() -> AutoOr<u32> {
    AutoOr::Value(1)
}

fn paper_c() -> f64 {
    PAPER_STEPSIZE_CONSTANT
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Count(1)
    }
}

impl SeedSpec {
    /// A count `k` stands for seeds `0..k`.
    pub fn resolve(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(k) => (0..*k).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Epsilon {
    One(f64),
    Many(Vec<f64>),
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Many(Vec::new())
    }
}

impl Epsilon {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Epsilon::One(e) => vec![*e],
            Epsilon::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoSpec {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    /// Quantity compared against ε; defaults by regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<CostMetric>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Rounds of the noiseless theory runs; defaults to the experiment's
    /// `rounds`. Stochastic checks always use `rounds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    /// Multiplier on the proof-valid stepsize used by the theory checks.
    #[serde(default = "unit")]
    pub stepsize_scale: f64,
    /// Horizons of the convex and nonconvex rate checks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<usize>,
    /// Random graphs in the mixing-bound checks.
    #[serde(default = "default_topologies")]
    pub topologies: usize,
    /// Random runs in the tracking-identity check.
    #[serde(default = "default_tracking_cases")]
    pub tracking_cases: usize,
    /// Random runs in the loop versus summed-form check.
    #[serde(default = "default_form_cases")]
    pub form_cases: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_topologies() -> usize {
    50
}

fn default_tracking_cases() -> usize {
    20
}

fn default_form_cases() -> usize {
    50
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            rounds: None,
            stepsize_scale: 1.0,
            horizons: Vec::new(),
            topologies: default_topologies(),
            tracking_cases: default_tracking_cases(),
            form_cases: default_form_cases(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub topology: TopologySpec,
    #[serde(rename = "algorithm", default)]
    pub algorithms: Vec<AlgorithmSpec>,
    pub rounds: usize,
    #[serde(default)]
    pub seeds: SeedSpec,
    #[serde(default)]
    pub epsilon: Epsilon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pareto: Option<ParetoSpec>,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn positive(field: impl Into<String>, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::invalid(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn validate(&self) -> Result<()> {
        let pr = &self.problem;
        if pr.n == 0 {
            return Err(CliError::invalid("problem.n", "must be at least 1"));
        }
        if pr.p == 0 {
            return Err(CliError::invalid("problem.p", "must be at least 1"));
        }
        match (pr.family, pr.mu) {
            (FamilyKind::Ridge, None) => {
                return Err(CliError::invalid("problem.mu", "required for the ridge family"))
            }
            (FamilyKind::Ridge, Some(mu)) => positive("problem.mu", mu)?,
            (_, Some(_)) => return Err(CliError::invalid("problem.mu", "only the ridge family takes mu")),
            _ => {}
        }
        if !(pr.sigma >= 0.0 && pr.sigma.is_finite()) {
            return Err(CliError::invalid(
                "problem.sigma",
                "must be non-negative and finite",
            ));
        }
        if let AutoOr::Value(l) = pr.lipschitz {
            positive("problem.lipschitz", l)?;
        }
        if pr.logistic.is_some() && pr.family != FamilyKind::Logistic {
            return Err(CliError::invalid(
                "problem.logistic",
                "only the logistic family takes these options",
            ));
        }
        if self.topology.kind == TopologyKind::Exponential && self.topology.degree.is_none() {
            return Err(CliError::invalid(
                "topology.degree",
                "required for exponential graphs",
            ));
        }
        if self.rounds == 0 {
            return Err(CliError::invalid("rounds", "must be at least 1"));
        }
        match &self.seeds {
            SeedSpec::Count(0) => return Err(CliError::invalid("seeds", "need at least one seed")),
            SeedSpec::List(v) if v.is_empty() => {
                return Err(CliError::invalid("seeds", "need at least one seed"))
            }
            SeedSpec::List(v) if v.iter().collect::<HashSet<_>>().len() != v.len() => {
                return Err(CliError::invalid("seeds", "seeds must be distinct"))
            }
            _ => {}
        }
        for (i, e) in self.epsilon.values().into_iter().enumerate() {
            positive(format!("epsilon[{i}]"), e)?;
        }
        if self.algorithms.is_empty() {
            return Err(CliError::invalid(
                "algorithm",
                "at least one [[algorithm]] table is required",
            ));
        }
        let mut labels = HashSet::new();
        for (i, a) in self.algorithms.iter().enumerate() {
            if a.beta == 0 {
                return Err(CliError::invalid(
                    format!("algorithm[{i}].beta"),
                    "must be at least 1",
                ));
            }
            if a.alpha == AutoOr::Value(0) {
                return Err(CliError::invalid(
                    format!("algorithm[{i}].alpha"),
                    "must be at least 1",
                ));
            }
            if let GammaSpec::Value(g) = a.gamma {
                positive(format!("algorithm[{i}].gamma"), g)?;
            }
            positive(format!("algorithm[{i}].paper_c"), a.paper_c)?;
            positive(format!("algorithm[{i}].stepsize_scale"), a.stepsize_scale)?;
            if let Some(name) = &a.name {
                if name.is_empty()
                    || !name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                {
                    return Err(CliError::invalid(
                        format!("algorithm[{i}].name"),
                        "use letters, digits, '-', '_' or '.'",
                    ));
                }
            }
            if !labels.insert(a.label()) {
                return Err(CliError::invalid(
                    format!("algorithm[{i}].name"),
                    format!("label `{}` is used twice", a.label()),
                ));
            }
        }
        if let Some(p) = &self.pareto {
            for (field, values) in [("pareto.alpha", &p.alpha), ("pareto.beta", &p.beta)] {
                if values.is_empty() {
                    return Err(CliError::invalid(field, "must list at least one value"));
                }
                if values.contains(&0) {
                    return Err(CliError::invalid(field, "values must be at least 1"));
                }
            }
        }
        positive("verify.stepsize_scale", self.verify.stepsize_scale)?;
        if self.verify.rounds == Some(0) {
            return Err(CliError::invalid("verify.rounds", "must be at least 1"));
        }
        let shortest = self.verify.rounds.unwrap_or(self.rounds).min(self.rounds);
        if let Some(&h) = self.verify.horizons.iter().find(|&&h| h == 0 || h > shortest) {
            return Err(CliError::invalid(
                "verify.horizons",
                format!("horizon {h} is outside 1..={shortest}"),
            ));
        }
        Ok(())
    }
}

impl AlgorithmSpec {
    /// The configured name, or one derived from the method and step counts.
    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let method = match (self.method, self.protocol) {
            (Method::Dsgd, _) => "dsgd",
            (Method::Flexgt, Protocol::Direct) => "flexgt",
            (Method::Flexgt, Protocol::Accelerated) => "acc-flexgt",
        };
        let alpha = match self.alpha {
            AutoOr::Auto(_) => "auto".to_string(),
            AutoOr::Value(a) => a.to_string(),
        };
        format!("{method}-a{alpha}-b{}", self.beta)
    }
}

impl AlgorithmSpec {
    /// Stepsize for `beta` local steps under this spec's rule and scale.
    pub fn stepsize(&self, regime: Regime, lipschitz: f64, beta: u32, rho_bar: f64) -> flexgt::Result<f64> {
        let base = match self.gamma {
            GammaSpec::Value(g) => g,
            GammaSpec::Rule(GammaRule::Auto) => stepsize_rule(regime, lipschitz, beta, rho_bar)?,
            GammaSpec::Rule(GammaRule::Paper) => empirical_stepsize(self.paper_c, lipschitz, beta, rho_bar)?,
        };
        Ok(base * self.stepsize_scale)
    }
}

pub fn regime_of(family: FamilyKind) -> Regime {
    match family {
        FamilyKind::Ridge => Regime::StronglyConvex,
        FamilyKind::LeastSquares => Regime::Convex,
        FamilyKind::Logistic => Regime::Nonconvex,
    }
}

pub fn build_problem(spec: &ProblemSpec) -> Result<Problem> {
    let problem = match spec.family {
        FamilyKind::Ridge => {
            let mu = spec
                .mu
                .ok_or_else(|| CliError::invalid("problem.mu", "required for the ridge family"))?;
            make_ridge(spec.n, spec.p, mu, spec.sigma, spec.seed)?
        }
        FamilyKind::LeastSquares => make_least_squares(spec.n, spec.p, spec.sigma, spec.seed)?,
        FamilyKind::Logistic => make_nonconvex_with(
            spec.n,
            spec.p,
            spec.sigma,
            spec.seed,
            spec.logistic.unwrap_or_default(),
        )?,
    };
    Ok(problem.with_noise(spec.noise))
}

/// `(1/n)‖ỹ₀‖² / (f(x̄₀) − f*)` at the zero starting point, or 0 when `f*`
/// is unknown or the start is optimal.
pub fn initial_ratio(problem: &Problem) -> f64 {
    let x0 = DVector::zeros(problem.p());
    match problem.f_star() {
        Some(f_star) => {
            let gap = problem.value(&x0) - f_star;
            if gap > 0.0 {
                problem.heterogeneity(&x0) / gap
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}

/// One algorithm ready to run.
#[derive(Clone, Debug)]
pub struct PreparedAlgorithm {
    pub label: String,
    pub config: AlgoConfig,
    pub operator: MixingOperator,
}

/// Everything an output file needs to reproduce the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub version: String,
    pub regime: Regime,
    /// Smoothness constant of the generated problem.
    pub problem_lipschitz: f64,
    pub rho_w: f64,
    pub rho_bar: Vec<f64>,
    pub labels: Vec<String>,
    /// The input configuration with every `"auto"` replaced by its value.
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub mixing: MixingMatrix,
    pub algorithms: Vec<PreparedAlgorithm>,
    pub seeds: Vec<u64>,
    /// Smoothness constant used by the stepsize rules.
    pub rule_lipschitz: f64,
    pub resolved: ResolvedConfig,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let problem = build_problem(&config.problem)?;
        let topology = build_topology(config.topology.kind, config.problem.n, config.topology.degree)
            .map_err(|e| CliError::invalid("topology", e.to_string()))?;
        let mixing = metropolis_weights(&topology)?;
        let regime = problem.regime();
        let rule_l = match config.problem.lipschitz {
            AutoOr::Auto(_) => problem.lipschitz(),
            AutoOr::Value(l) => l,
        };

        let mut resolved_cfg = config.clone();
        resolved_cfg.problem.lipschitz = AutoOr::Value(rule_l);
        resolved_cfg.seeds = SeedSpec::List(config.seeds.resolve());

        let mut algorithms = Vec::with_capacity(config.algorithms.len());
        for (i, spec) in config.algorithms.iter().enumerate() {
            let alpha = match spec.alpha {
                AutoOr::Value(a) => a,
                AutoOr::Auto(_) => select_alpha(
                    regime,
                    mixing.rho_w(),
                    problem.n(),
                    spec.beta,
                    rule_l,
                    problem.mu(),
                    initial_ratio(&problem),
                )
                .map_err(|e| CliError::invalid(format!("algorithm[{i}].alpha"), e.to_string()))?,
            };
            let operator = make_operator(&mixing, spec.protocol, alpha)?;
            let gamma = spec
                .stepsize(regime, rule_l, spec.beta, operator.rho_bar())
                .map_err(|e| CliError::invalid(format!("algorithm[{i}].gamma"), e.to_string()))?;
            let algo = AlgoConfig::new(alpha, spec.beta, gamma)
                .with_protocol(spec.protocol)
                .with_method(spec.method)
                .with_boundary(spec.boundary);
            algo.validate()
                .map_err(|e| CliError::invalid(format!("algorithm[{i}]"), e.to_string()))?;

            let r = &mut resolved_cfg.algorithms[i];
            r.name = Some(spec.label());
            r.alpha = AutoOr::Value(alpha);
            r.gamma = GammaSpec::Value(gamma);
            r.stepsize_scale = 1.0;
            algorithms.push(PreparedAlgorithm {
                label: spec.label(),
                config: algo,
                operator,
            });
        }

        let resolved = ResolvedConfig {
            version: crate::version_string(),
            regime,
            problem_lipschitz: problem.lipschitz(),
            rho_w: mixing.rho_w(),
            rho_bar: algorithms.iter().map(|a| a.operator.rho_bar()).collect(),
            labels: algorithms.iter().map(|a| a.label.clone()).collect(),
            config: resolved_cfg,
        };
        Ok(Experiment {
            seeds: config.seeds.resolve(),
            config,
            problem,
            mixing,
            algorithms,
            rule_lipschitz: rule_l,
            resolved,
        })
    }

    pub fn rounds(&self) -> usize {
        self.config.rounds
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.config.epsilon.values()
    }
}
