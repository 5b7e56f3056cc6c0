use std::path::{Path, PathBuf};

use flexgt::algorithm::Trajectory;
use serde::Serialize;

use super::simulate;
use crate::config::Experiment;
use crate::error::Result;
use crate::output::{json_bytes, preamble, write_atomic};

#[derive(Serialize)]
struct RunBody<'a> {
    algorithm: &'a str,
    seed: u64,
    trajectory: &'a Trajectory,
}

pub fn file_stem(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}")
}

/// Writes one CSV and one JSON file per `(algorithm, seed)`.
pub fn cmd_run(exp: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    let groups = simulate(exp)?;
    let mut written = Vec::new();
    for (alg, trajs) in exp.algorithms.iter().zip(&groups) {
        for traj in trajs {
            let stem = file_stem(&alg.label, traj.seed);

            let mut csv = preamble(&exp.resolved)?.into_bytes();
            traj.write_csv(&mut csv)?;
            let csv_path = out.join(format!("{stem}.csv"));
            write_atomic(&csv_path, &csv)?;

            let body = RunBody {
                algorithm: &alg.label,
                seed: traj.seed,
                trajectory: traj,
            };
            let json_path = out.join(format!("{stem}.json"));
            write_atomic(&json_path, &json_bytes(&exp.resolved, "run", body)?)?;

            log::info!(
                "{}: {} rounds, seed {}",
                alg.label,
                traj.records.len() - 1,
                traj.seed
            );
            written.push(csv_path);
            written.push(json_path);
        }
    }
    Ok(written)
}
