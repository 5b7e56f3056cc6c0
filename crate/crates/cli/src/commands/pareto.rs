use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use flexgt::algorithm::{run as run_trajectory, AlgoConfig};
use flexgt::complexity::{empirical_cost, pareto_flags, table_costs, ComplexityQuery, CostMetric, CostPoint};
use flexgt::graph::{make_operator, MixingOperator};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_metric, mean};
use crate::config::Experiment;
use crate::error::{CliError, Result};
use crate::output::{csv_bytes, json_bytes, write_atomic};

/// One `(α, β)` cell of the empirical grid. `comm` and `comp` are empty
/// when no seed reached ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCell {
    pub alpha: u32,
    pub beta: u32,
    pub comm: Option<f64>,
    pub comp: Option<f64>,
    pub pareto_flag: bool,
    pub reach_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCell {
    pub alpha: u32,
    pub beta: u32,
    pub comm: f64,
    pub comp: f64,
    pub pareto_flag: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    pub epsilon: f64,
    pub metric: CostMetric,
    pub seeds: usize,
    pub empirical: Vec<EmpiricalCell>,
    pub analytic: Vec<AnalyticCell>,
    pub empirical_frontier: Vec<(u32, u32)>,
    pub analytic_frontier: Vec<(u32, u32)>,
    /// `|E ∩ A| / |E ∪ A|` over the two frontiers' `(α, β)` sets.
    pub frontier_overlap: f64,
}

fn cell_gamma(exp: &Experiment, beta: u32, op: &MixingOperator) -> Result<f64> {
    let spec = &exp.config.algorithms[0];
    Ok(spec.stepsize(exp.problem.regime(), exp.rule_lipschitz, beta, op.rho_bar())?)
}

fn jaccard(a: &BTreeSet<(u32, u32)>, b: &BTreeSet<(u32, u32)>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Sweeps the configured `(α, β)` grid with the first algorithm as the
/// template, alongside the analytic cost table for the same grid.
pub fn cmd_pareto(exp: &Experiment, out: &Path) -> Result<ParetoReport> {
    let grid = exp.config.pareto.as_ref().ok_or_else(|| {
        CliError::invalid("pareto", "a [pareto] table with alpha and beta lists is required")
    })?;
    let epsilon = *exp
        .epsilons()
        .first()
        .ok_or_else(|| CliError::invalid("epsilon", "pareto needs a target accuracy"))?;
    let metric = grid.metric.unwrap_or_else(|| default_metric(&exp.problem));
    let template = &exp.algorithms[0].config;

    let mut ops = BTreeMap::new();
    for &a in &grid.alpha {
        ops.insert(a, make_operator(&exp.mixing, template.protocol, a)?);
    }
    let mut cells = Vec::new();
    for &a in &grid.alpha {
        for &b in &grid.beta {
            let gamma = cell_gamma(exp, b, &ops[&a])?;
            let cfg = AlgoConfig {
                alpha: a,
                beta: b,
                gamma,
                ..*template
            };
            cells.push(cfg);
        }
    }

    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| exp.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let costs = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cfg = &cells[c];
            let traj = run_trajectory(&exp.problem, cfg, &ops[&cfg.alpha], exp.rounds(), seed)?;
            Ok(empirical_cost(&traj, epsilon, metric))
        })
        .collect::<Result<Vec<_>>>()?;

    let per_seed = exp.seeds.len();
    let mut empirical: Vec<EmpiricalCell> = cells
        .iter()
        .zip(costs.chunks(per_seed))
        .map(|(cfg, chunk)| {
            let hits: Vec<&CostPoint> = chunk.iter().flatten().collect();
            EmpiricalCell {
                alpha: cfg.alpha,
                beta: cfg.beta,
                comm: mean(hits.iter().map(|p| p.comm)),
                comp: mean(hits.iter().map(|p| p.comp)),
                pareto_flag: false,
                reach_fraction: hits.len() as f64 / per_seed as f64,
            }
        })
        .collect();
    let reached: Vec<usize> = (0..empirical.len())
        .filter(|&i| empirical[i].comm.is_some())
        .collect();
    let points: Vec<CostPoint> = reached
        .iter()
        .map(|&i| CostPoint {
            alpha: empirical[i].alpha,
            beta: empirical[i].beta,
            comm: empirical[i].comm.unwrap_or(f64::NAN),
            comp: empirical[i].comp.unwrap_or(f64::NAN),
        })
        .collect();
    for (&i, flag) in reached.iter().zip(pareto_flags(&points)) {
        empirical[i].pareto_flag = flag;
    }

    let sigma = exp.problem.noise_total_variance().sqrt();
    let analytic_points = cells
        .iter()
        .map(|cfg| {
            let q = ComplexityQuery::new(
                exp.problem.regime(),
                exp.problem.lipschitz(),
                exp.problem.mu(),
                sigma,
                exp.problem.n(),
                exp.mixing.rho_w(),
                epsilon,
            )
            .with_steps(cfg.alpha, cfg.beta)
            .with_protocol(cfg.protocol);
            table_costs(&q)
        })
        .collect::<flexgt::Result<Vec<_>>>()?;
    let analytic: Vec<AnalyticCell> = analytic_points
        .iter()
        .zip(pareto_flags(&analytic_points))
        .map(|(p, flag)| AnalyticCell {
            alpha: p.alpha,
            beta: p.beta,
            comm: p.comm,
            comp: p.comp,
            pareto_flag: flag,
        })
        .collect();

    let dir = out.join("cells");
    for cell in &empirical {
        let name = format!("alpha{}_beta{}.json", cell.alpha, cell.beta);
        write_atomic(&dir.join(name), &json_bytes(&exp.resolved, "pareto_cell", cell)?)?;
    }

    let emp_front: BTreeSet<_> = empirical
        .iter()
        .filter(|c| c.pareto_flag)
        .map(|c| (c.alpha, c.beta))
        .collect();
    let ana_front: BTreeSet<_> = analytic
        .iter()
        .filter(|c| c.pareto_flag)
        .map(|c| (c.alpha, c.beta))
        .collect();
    let report = ParetoReport {
        epsilon,
        metric,
        seeds: per_seed,
        frontier_overlap: jaccard(&emp_front, &ana_front),
        empirical_frontier: emp_front.into_iter().collect(),
        analytic_frontier: ana_front.into_iter().collect(),
        empirical,
        analytic,
    };
    write_atomic(
        &out.join("pareto_empirical.csv"),
        &csv_bytes(&exp.resolved, &report.empirical)?,
    )?;
    write_atomic(
        &out.join("pareto_analytic.csv"),
        &csv_bytes(&exp.resolved, &report.analytic)?,
    )?;
    write_atomic(
        &out.join("pareto.json"),
        &json_bytes(&exp.resolved, "pareto", &report)?,
    )?;
    Ok(report)
}
