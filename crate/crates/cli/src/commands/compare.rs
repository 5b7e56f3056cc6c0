use std::path::Path;

use flexgt::algorithm::Trajectory;
use flexgt::complexity::{empirical_cost, CostMetric};
use flexgt::metrics::MetricRecord;
use serde::{Deserialize, Serialize};

use super::{mean, simulate};
use crate::config::Experiment;
use crate::error::{CliError, Result};
use crate::output::{csv_bytes, json_bytes, write_atomic};

/// Seed-averaged values of one algorithm at one round boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub algorithm: String,
    pub round: usize,
    pub comm_steps: u64,
    pub comp_steps: u64,
    pub residual: f64,
    pub cons_err: f64,
    pub grad_norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub epsilon: f64,
    pub metric: CostMetric,
    pub reach_fraction: f64,
    pub mean_comm: Option<f64>,
    pub mean_comp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub final_residual: f64,
    pub targets: Vec<Target>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// `opt_gap` when the problem has a known optimum, else `grad_norm_sq`.
    pub residual_of: String,
    pub seeds: usize,
    pub algorithms: Vec<AlgorithmSummary>,
}

/// `‖x̄_k − x*‖²/‖x̄₀ − x*‖²`, or the same ratio of squared gradient norms
/// when `x*` is unknown.
pub fn residual(first: &MetricRecord, r: &MetricRecord) -> f64 {
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    match (r.opt_gap, first.opt_gap) {
        (Some(g), Some(g0)) => ratio(g, g0),
        _ => ratio(r.grad_norm_sq, first.grad_norm_sq),
    }
}

/// Per-round residual and counters averaged across seeds.
pub fn mean_rows(label: &str, trajs: &[Trajectory]) -> Vec<CompareRow> {
    let rounds = trajs[0].records.len();
    (0..rounds)
        .map(|k| {
            let rec = &trajs[0].records[k];
            let avg = |f: &dyn Fn(&Trajectory) -> f64| mean(trajs.iter().map(f)).unwrap_or(f64::NAN);
            CompareRow {
                algorithm: label.to_string(),
                round: rec.round,
                comm_steps: rec.comm_steps,
                comp_steps: rec.comp_steps,
                residual: avg(&|t| residual(&t.records[0], &t.records[k])),
                cons_err: avg(&|t| t.records[k].cons_err),
                grad_norm_sq: avg(&|t| t.records[k].grad_norm_sq),
            }
        })
        .collect()
}

/// Mean counters at the ε crossing over the seeds that reached it.
pub fn target(trajs: &[Trajectory], epsilon: f64, metric: CostMetric) -> Target {
    let hits: Vec<_> = trajs
        .iter()
        .filter_map(|t| empirical_cost(t, epsilon, metric))
        .collect();
    Target {
        epsilon,
        metric,
        reach_fraction: hits.len() as f64 / trajs.len() as f64,
        mean_comm: mean(hits.iter().map(|c| c.comm)),
        mean_comp: mean(hits.iter().map(|c| c.comp)),
    }
}

/// Runs every algorithm on the same problem and seeds, writing
/// `compare.csv` and `compare.json`.
pub fn cmd_compare(exp: &Experiment, out: &Path) -> Result<CompareReport> {
    if exp.algorithms.len() < 2 {
        return Err(CliError::invalid(
            "algorithm",
            format!(
                "compare needs at least two algorithms, got {}",
                exp.algorithms.len()
            ),
        ));
    }
    let groups = simulate(exp)?;
    let has_optimum = exp.problem.optimum().is_some();
    let metric = if has_optimum {
        CostMetric::Residual
    } else {
        CostMetric::GradNormAvg
    };

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (alg, trajs) in exp.algorithms.iter().zip(&groups) {
        let alg_rows = mean_rows(&alg.label, trajs);
        summaries.push(AlgorithmSummary {
            algorithm: alg.label.clone(),
            final_residual: alg_rows.last().map_or(f64::NAN, |r| r.residual),
            targets: exp
                .epsilons()
                .into_iter()
                .map(|e| target(trajs, e, metric))
                .collect(),
        });
        rows.extend(alg_rows);
    }
    let report = CompareReport {
        residual_of: if has_optimum { "opt_gap" } else { "grad_norm_sq" }.to_string(),
        seeds: exp.seeds.len(),
        algorithms: summaries,
    };
    write_atomic(&out.join("compare.csv"), &csv_bytes(&exp.resolved, &rows)?)?;
    write_atomic(
        &out.join("compare.json"),
        &json_bytes(&exp.resolved, "compare", &report)?,
    )?;
    Ok(report)
}
