//! Scenario comparisons: several methods trained on shared data and seeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_dataset, CodeDistribution, GenConfig};
use crate::error::{Error, Result};
use crate::experiments::manifest::{seal, RunManifest};
use crate::experiments::protocols::{protocol, reference_data, reference_methods};
use crate::experiments::{mean_std, run_parallel, write_rows};
use crate::io::{save_checkpoint, write_trace_csv};
use crate::metrics::MetricsRecord;
use crate::training::{train, Method, Scenario, TrainConfig, TrainTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub scenario: Scenario,
    /// Data template; its seed is replaced by each run seed.
    pub data: GenConfig,
    /// One training template per method; seeds are replaced by each run seed.
    pub runs: Vec<TrainConfig>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub save_checkpoints: bool,
}

impl SuiteConfig {
    /// The reference protocol for `scenario` with its usual method set.
    pub fn reference(scenario: Scenario, distribution: CodeDistribution, seeds: Vec<u64>) -> Self {
        SuiteConfig {
            scenario,
            data: reference_data(0, distribution),
            runs: reference_methods(scenario)
                .into_iter()
                .map(|m| protocol(scenario, m))
                .collect(),
            seeds,
            save_checkpoints: false,
        }
    }

    /// Keeps only the listed methods, adding protocol configs for missing ones.
    pub fn with_methods(mut self, methods: &[Method]) -> Self {
        self.runs = methods
            .iter()
            .map(|&m| {
                self.runs
                    .iter()
                    .find(|r| r.method == m)
                    .cloned()
                    .unwrap_or_else(|| protocol(self.scenario, m))
            })
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.runs.is_empty() {
            return Err(Error::Config(
                "a suite needs at least one seed and one method".into(),
            ));
        }
        self.data.validate()?;
        for run in &self.runs {
            if run.scenario != self.scenario {
                return Err(Error::Config(format!(
                    "{} configured for {}",
                    run.method, run.scenario
                )));
            }
            run.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub method: Method,
    pub seed: u64,
    pub trace: TrainTrace,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub manifest: RunManifest,
    pub runs: Vec<RunResult>,
}

impl SuiteReport {
    /// Final-step metric of every seed for `method`.
    pub fn finals(&self, method: Method, metric: impl Fn(&MetricsRecord) -> f64) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.method == method)
            .map(|r| metric(&r.trace.final_metrics()))
            .collect()
    }

    pub fn final_mean(&self, method: Method, metric: impl Fn(&MetricsRecord) -> f64) -> f64 {
        mean_std(&self.finals(method, metric)).0
    }
}

/// One row of `comparison.csv`: seed-averaged metrics per method and step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub step: usize,
    pub flops_train_cum: f64,
    pub flops_inference: f64,
    pub n_seeds: usize,
    pub latent_mcc_mean: f64,
    pub latent_mcc_std: f64,
    pub dict_mcc_mean: f64,
    pub dict_mcc_std: f64,
    pub mse_mean: f64,
    pub l0_mean: f64,
    pub l1_mean: f64,
}

pub fn comparison_rows(runs: &[RunResult], methods: &[Method]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for &method in methods {
        let traces: Vec<&TrainTrace> = runs
            .iter()
            .filter(|r| r.method == method)
            .map(|r| &r.trace)
            .collect();
        let Some(first) = traces.first() else {
            continue;
        };
        for (i, row) in first.rows.iter().enumerate() {
            let at: Vec<&MetricsRecord> = traces
                .iter()
                .filter_map(|t| t.rows.get(i))
                .map(|r| &r.metrics)
                .collect();
            let col = |f: fn(&MetricsRecord) -> f64| {
                mean_std(&at.iter().map(|m| f(m)).collect::<Vec<_>>())
            };
            let (latent_mcc_mean, latent_mcc_std) = col(|m| m.latent_mcc);
            let (dict_mcc_mean, dict_mcc_std) = col(|m| m.dict_mcc);
            rows.push(ComparisonRow {
                method: method.label(),
                step: row.step,
                flops_train_cum: row.flops_train_cum,
                flops_inference: row.flops_inference,
                n_seeds: at.len(),
                latent_mcc_mean,
                latent_mcc_std,
                dict_mcc_mean,
                dict_mcc_std,
                mse_mean: col(|m| m.mse).0,
                l0_mean: col(|m| m.l0_mean).0,
                l1_mean: col(|m| m.l1_mean).0,
            });
        }
    }
    rows
}

fn run_dir(out_dir: &Path, method: Method, seed: u64) -> PathBuf {
    out_dir.join(method.label()).join(format!("seed{seed}"))
}

/// Trains every configured method for every seed, writing
/// `<method>/seed<s>/trace.csv` and `comparison.csv` under `out_dir`.
pub fn run_scenario_suite(cfg: &SuiteConfig, out_dir: &Path, jobs: usize) -> Result<SuiteReport> {
    cfg.validate()?;
    let mut manifest = RunManifest::begin("suite", cfg, cfg.seeds.clone())?;
    let outcome = execute(cfg, out_dir, jobs, &mut manifest);
    let manifest = seal(manifest, &outcome, out_dir, out_dir)?;
    outcome.map(|runs| SuiteReport { manifest, runs })
}

fn execute(
    cfg: &SuiteConfig,
    out_dir: &Path,
    jobs: usize,
    manifest: &mut RunManifest,
) -> Result<Vec<RunResult>> {
    std::fs::create_dir_all(out_dir)?;
    let tasks: Vec<(TrainConfig, u64)> = cfg
        .runs
        .iter()
        .flat_map(|run| cfg.seeds.iter().map(move |&s| (run.clone(), s)))
        .collect();
    let results = run_parallel(jobs, tasks, |(run, seed)| -> Result<RunResult> {
        let data = generate_dataset(&cfg.data.clone().with_seed(seed))?;
        let run = run.with_seed(seed);
        let outcome = train(&data, &run)?;
        let dir = run_dir(out_dir, run.method, seed);
        std::fs::create_dir_all(&dir)?;
        write_trace_csv(dir.join("trace.csv"), &outcome.trace)?;
        if cfg.save_checkpoints {
            save_checkpoint(
                dir.join("checkpoint"),
                &outcome.trained,
                serde_json::to_value(&run)?,
            )?;
        }
        Ok(RunResult {
            method: run.method,
            seed,
            trace: outcome.trace,
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    for r in &runs {
        let rel = run_dir(Path::new(""), r.method, r.seed).join("trace.csv");
        manifest.add_output(out_dir, rel, true)?;
    }
    let methods: Vec<Method> = cfg.runs.iter().map(|r| r.method).collect();
    write_rows(
        out_dir.join("comparison.csv"),
        &comparison_rows(&runs, &methods),
    )?;
    manifest.add_output(out_dir, "comparison.csv", true)?;
    Ok(runs)
}
