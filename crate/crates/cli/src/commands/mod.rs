pub mod compare;
pub mod pareto;
pub mod run;
pub mod verify;

use flexgt::algorithm::{run as run_trajectory, Trajectory};
use flexgt::complexity::CostMetric;
use flexgt::problems::{Problem, Regime};
use rayon::prelude::*;

use crate::config::Experiment;
use crate::error::Result;

/// Runs every `(algorithm, seed)` pair. Results come back grouped by
/// algorithm in configuration order, seeds in configuration order.
pub fn simulate(exp: &Experiment) -> Result<Vec<Vec<Trajectory>>> {
    let jobs: Vec<(usize, u64)> = (0..exp.algorithms.len())
        .flat_map(|a| exp.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let flat = jobs
        .par_iter()
        .map(|&(a, seed)| {
            let alg = &exp.algorithms[a];
            run_trajectory(&exp.problem, &alg.config, &alg.operator, exp.rounds(), seed)
        })
        .collect::<flexgt::Result<Vec<_>>>()?;
    let mut grouped: Vec<Vec<Trajectory>> = vec![Vec::new(); exp.algorithms.len()];
    for ((a, _), t) in jobs.into_iter().zip(flat) {
        grouped[a].push(t);
    }
    Ok(grouped)
}

/// The accuracy measure compared against ε when none is configured.
pub fn default_metric(problem: &Problem) -> CostMetric {
    match problem.regime() {
        Regime::StronglyConvex => CostMetric::Residual,
        Regime::Convex => CostMetric::FGapAvg,
        Regime::Nonconvex => CostMetric::GradNormAvg,
    }
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}
