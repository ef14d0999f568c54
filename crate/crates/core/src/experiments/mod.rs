//! Experiment drivers: scenario suites, N/M/K and λ sweeps, ablations.
//!
//! Every driver writes CSV outputs plus a `manifest.json` into its output
//! directory and appends a line to `runs.jsonl` there. Independent runs are
//! spread over a worker pool of `jobs` threads.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub mod ablation;
pub mod manifest;
pub mod protocols;
pub mod suite;
pub mod sweep;

pub use ablation::{run_ablation, AblationKind, AblationParams};
pub use manifest::{RunManifest, RunStatus};
pub use protocols::{protocol, reference_data, reference_methods};
pub use suite::{run_scenario_suite, SuiteConfig, SuiteReport};
pub use sweep::{
    matched_levels, run_nmk_sweep, run_pareto_sweep, NmkSweepConfig, ParetoConfig, SweepGrid,
};

/// Re-executes the study recorded in `from/manifest.json`, writing to `out_dir`.
pub fn replay(from: &Path, out_dir: &Path, jobs: usize) -> Result<RunManifest> {
    let recorded = RunManifest::load(from)?;
    let config = recorded.config.clone();
    match recorded.kind.as_str() {
        "suite" => {
            Ok(run_scenario_suite(&serde_json::from_value(config)?, out_dir, jobs)?.manifest)
        }
        "sweep_nmk" => Ok(run_nmk_sweep(&serde_json::from_value(config)?, out_dir, jobs)?.manifest),
        "sweep_pareto" => {
            Ok(run_pareto_sweep(&serde_json::from_value(config)?, out_dir, jobs)?.manifest)
        }
        kind if kind.starts_with("ablate_") => {
            let ablation: AblationKind = serde_json::from_value(config["kind"].clone())?;
            let params: AblationParams = serde_json::from_value(config["params"].clone())?;
            Ok(run_ablation(ablation, &params, out_dir, jobs)?.manifest)
        }
        other => Err(Error::Config(format!("cannot replay a '{other}' manifest"))),
    }
}

/// Maps `f` over `items` on a pool of `jobs` threads (0 means one per core),
/// keeping input order.
pub fn run_parallel<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    if jobs == 1 || items.len() <= 1 {
        return items.into_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
        Err(_) => items.into_iter().map(f).collect(),
    }
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Writes serde rows as a headed CSV.
pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replayed_suite_reproduces_metrics() {
        use crate::datagen::{CodeDistribution, GenConfig};
        use crate::training::{Method, Scenario};

        let first = tempfile::tempdir().unwrap();
        let second = tempfile::tempdir().unwrap();
        let mut cfg =
            SuiteConfig::reference(Scenario::UnknownBoth, CodeDistribution::Uniform, vec![0, 1])
                .with_methods(&[Method::Sae, Method::SparseCoding]);
        cfg.data = GenConfig::new(6, 4, 2, 32, 0);
        cfg.runs = cfg.runs.into_iter().map(|r| r.with_steps(4)).collect();
        run_scenario_suite(&cfg, first.path(), 2).unwrap();
        let again = replay(first.path(), second.path(), 1).unwrap();
        assert_eq!(
            again.input_hash,
            RunManifest::load(first.path()).unwrap().input_hash
        );
        let a = std::fs::read(first.path().join("comparison.csv")).unwrap();
        let b = std::fs::read(second.path().join("comparison.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let out = run_parallel(3, (0..20).collect(), |i: i32| i * i);
        assert_eq!(out, (0..20).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn mean_and_std() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
