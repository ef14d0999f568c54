//! N/M/K contour sweeps and λ Pareto sweeps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_dataset, recovery_boundary, CodeDistribution, GenConfig};
use crate::error::Result;
use crate::experiments::manifest::{seal, RunManifest};
use crate::experiments::protocols::{protocol, reference_data};
use crate::experiments::{mean_std, require, run_parallel, write_rows};
use crate::metrics::sparsity_stats;
use crate::training::{evaluate, train, Method, Scenario, TrainConfig};

/// Axes of an N/M/K sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n_sources: Vec<usize>,
    pub n_measurements: Vec<usize>,
    pub k_active: Vec<usize>,
    /// Seeds per cell.
    pub repeats: usize,
    pub n_samples: usize,
    #[serde(default)]
    pub distribution: CodeDistribution,
    #[serde(default)]
    pub base_seed: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            n_sources: vec![8, 12, 16, 24, 32],
            n_measurements: vec![2, 4, 6, 8, 12, 16],
            k_active: vec![3, 9],
            repeats: 3,
            n_samples: 2048,
            distribution: CodeDistribution::Uniform,
            base_seed: 0,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        require(
            !self.n_sources.is_empty()
                && !self.n_measurements.is_empty()
                && !self.k_active.is_empty(),
            "sweep axes must be non-empty",
        )?;
        require(self.repeats >= 1, "repeats must be at least 1")
    }

    /// Cells in row-major (N, M, K) order, split into runnable and skipped.
    pub fn cells(&self) -> (Vec<(usize, usize, usize)>, Vec<(usize, usize, usize)>) {
        let mut run = Vec::new();
        let mut skip = Vec::new();
        for &n in &self.n_sources {
            for &m in &self.n_measurements {
                for &k in &self.k_active {
                    if k <= n && k >= 1 && m >= 1 {
                        run.push((n, m, k));
                    } else {
                        skip.push((n, m, k));
                    }
                }
            }
        }
        (run, skip)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64)
            .map(|r| self.base_seed + r)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmkSweepConfig {
    pub grid: SweepGrid,
    /// Training templates for the two compared methods.
    pub method_a: TrainConfig,
    pub method_b: TrainConfig,
}

impl Default for NmkSweepConfig {
    /// Sparse coding against the SAE with both unknown, 5,000 steps per run.
    fn default() -> Self {
        let steps = 5_000;
        NmkSweepConfig {
            grid: SweepGrid::default(),
            method_a: protocol(Scenario::UnknownBoth, Method::SparseCoding).with_steps(steps),
            method_b: protocol(Scenario::UnknownBoth, Method::Sae).with_steps(steps),
        }
    }
}

/// One row of `contour.csv`, averaged over the cell's seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourRow {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub n_seeds: usize,
    pub method_a: String,
    pub method_b: String,
    pub mcc_a: f64,
    pub mcc_b: f64,
    pub diff: f64,
    pub boundary: f64,
    pub above_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct NmkReport {
    pub manifest: RunManifest,
    pub rows: Vec<ContourRow>,
    pub skipped: Vec<SkippedCell>,
}

impl NmkReport {
    /// Mean `diff` over cells with `M` at or above the recovery boundary.
    pub fn mean_diff_above_boundary(&self, k: Option<usize>) -> f64 {
        let diffs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.above_boundary && k.is_none_or(|k| r.k == k))
            .map(|r| r.diff)
            .collect();
        mean_std(&diffs).0
    }
}

pub fn run_nmk_sweep(cfg: &NmkSweepConfig, out_dir: &Path, jobs: usize) -> Result<NmkReport> {
    cfg.grid.validate()?;
    cfg.method_a.validate()?;
    cfg.method_b.validate()?;
    let mut manifest = RunManifest::begin("sweep_nmk", cfg, cfg.grid.seeds())?;
    let outcome = execute_nmk(cfg, out_dir, jobs, &mut manifest);
    let manifest = seal(manifest, &outcome, out_dir, out_dir)?;
    outcome.map(|(rows, skipped)| NmkReport {
        manifest,
        rows,
        skipped,
    })
}

fn execute_nmk(
    cfg: &NmkSweepConfig,
    out_dir: &Path,
    jobs: usize,
    manifest: &mut RunManifest,
) -> Result<(Vec<ContourRow>, Vec<SkippedCell>)> {
    std::fs::create_dir_all(out_dir)?;
    let (cells, skipped) = cfg.grid.cells();
    let seeds = cfg.grid.seeds();
    let tasks: Vec<((usize, usize, usize), u64)> = cells
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = run_parallel(jobs, tasks, |((n, m, k), seed)| -> Result<(f64, f64)> {
        let data = GenConfig::new(n, m, k, cfg.grid.n_samples, seed)
            .with_distribution(cfg.grid.distribution);
        let ds = generate_dataset(&data)?;
        let a = train(&ds, &cfg.method_a.clone().with_seed(seed))?;
        let b = train(&ds, &cfg.method_b.clone().with_seed(seed))?;
        Ok((
            a.trace.final_metrics().latent_mcc,
            b.trace.final_metrics().latent_mcc,
        ))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (ci, &(n, m, k)) in cells.iter().enumerate() {
        let chunk = &results[ci * seeds.len()..(ci + 1) * seeds.len()];
        let mcc_a = mean_std(&chunk.iter().map(|r| r.0).collect::<Vec<_>>()).0;
        let mcc_b = mean_std(&chunk.iter().map(|r| r.1).collect::<Vec<_>>()).0;
        let boundary = recovery_boundary(n, k)?;
        rows.push(ContourRow {
            n,
            m,
            k,
            n_seeds: seeds.len(),
            method_a: cfg.method_a.method.label(),
            method_b: cfg.method_b.method.label(),
            mcc_a,
            mcc_b,
            diff: mcc_a - mcc_b,
            boundary,
            above_boundary: m as f64 >= boundary,
        });
    }
    let skipped: Vec<SkippedCell> = skipped
        .into_iter()
        .map(|(n, m, k)| SkippedCell {
            n,
            m,
            k,
            reason: "requires 1 <= K <= N and M >= 1".into(),
        })
        .collect();
    write_rows(out_dir.join("contour.csv"), &rows)?;
    manifest.add_output(out_dir, "contour.csv", true)?;
    if !skipped.is_empty() {
        write_rows(out_dir.join("skipped.csv"), &skipped)?;
        manifest.add_output(out_dir, "skipped.csv", true)?;
    }
    Ok((rows, skipped))
}

/// Activity thresholds reported in `pareto.csv`.
pub const PARETO_THRESHOLDS: [f64; 3] = [0.0, 1e-5, 1e-3];

pub const DEFAULT_LAMBDAS: [f64; 6] = [0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoConfig {
    pub data: GenConfig,
    pub lambdas: Vec<f64>,
    /// Training templates; λ and seed are overwritten per cell.
    pub methods: Vec<TrainConfig>,
    pub seeds: Vec<u64>,
}

impl ParetoConfig {
    /// Sparse coding and SAE with both unknown on the reference data.
    pub fn reference(seeds: Vec<u64>, steps: usize) -> Self {
        ParetoConfig {
            data: reference_data(0, CodeDistribution::Uniform),
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            methods: [Method::SparseCoding, Method::Sae]
                .into_iter()
                .map(|m| protocol(Scenario::UnknownBoth, m).with_steps(steps))
                .collect(),
            seeds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(!self.lambdas.is_empty(), "λ list must be non-empty")?;
        require(
            self.lambdas.iter().all(|l| l.is_finite() && *l >= 0.0),
            "λ values must be finite and non-negative",
        )?;
        require(
            !self.seeds.is_empty() && !self.methods.is_empty(),
            "need seeds and methods",
        )?;
        self.data.validate()?;
        self.methods.iter().try_for_each(|m| m.validate())
    }
}

/// Final metrics of one (method, λ, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoRun {
    pub method: String,
    pub lambda: f64,
    pub seed: u64,
    #[serde(rename = "l0_t0")]
    pub l0_t0: f64,
    #[serde(rename = "l0_t1e-5")]
    pub l0_t1e5: f64,
    #[serde(rename = "l0_t1e-3")]
    pub l0_t1e3: f64,
    pub l1: f64,
    pub mse: f64,
    pub latent_mcc: f64,
    pub dict_mcc: f64,
}

/// One row of `pareto.csv`, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub method: String,
    pub lambda: f64,
    pub n_seeds: usize,
    #[serde(rename = "l0_t0")]
    pub l0_t0: f64,
    #[serde(rename = "l0_t1e-5")]
    pub l0_t1e5: f64,
    #[serde(rename = "l0_t1e-3")]
    pub l0_t1e3: f64,
    pub l1: f64,
    pub mse: f64,
    pub latent_mcc: f64,
    pub latent_mcc_std: f64,
    pub dict_mcc: f64,
    pub true_k: usize,
}

#[derive(Clone, Debug)]
pub struct ParetoReport {
    pub manifest: RunManifest,
    pub runs: Vec<ParetoRun>,
    pub rows: Vec<ParetoRow>,
}

pub fn run_pareto_sweep(cfg: &ParetoConfig, out_dir: &Path, jobs: usize) -> Result<ParetoReport> {
    cfg.validate()?;
    let mut manifest = RunManifest::begin("sweep_pareto", cfg, cfg.seeds.clone())?;
    let outcome = execute_pareto(cfg, out_dir, jobs, &mut manifest);
    let manifest = seal(manifest, &outcome, out_dir, out_dir)?;
    outcome.map(|(runs, rows)| ParetoReport {
        manifest,
        runs,
        rows,
    })
}

fn pareto_cell(
    cfg: &ParetoConfig,
    template: &TrainConfig,
    lambda: f64,
    seed: u64,
) -> Result<ParetoRun> {
    let ds = generate_dataset(&cfg.data.clone().with_seed(seed))?;
    let run = template.clone().with_lambda(lambda).with_seed(seed);
    let outcome = train(&ds, &run)?;
    let last = outcome.trace.final_metrics();
    let mut raw = run.eval.clone();
    raw.infer.threshold = 0.0;
    let (_, test) = ds.train_test();
    let (_, codes) = evaluate(&outcome.trained, &test, &ds.dictionary, &raw)?;
    let l0 = |t: f64| sparsity_stats(codes.view(), t).l0_mean;
    Ok(ParetoRun {
        method: run.method.label(),
        lambda,
        seed,
        l0_t0: l0(PARETO_THRESHOLDS[0]),
        l0_t1e5: l0(PARETO_THRESHOLDS[1]),
        l0_t1e3: l0(PARETO_THRESHOLDS[2]),
        l1: last.l1_mean,
        mse: last.mse,
        latent_mcc: last.latent_mcc,
        dict_mcc: last.dict_mcc,
    })
}

fn execute_pareto(
    cfg: &ParetoConfig,
    out_dir: &Path,
    jobs: usize,
    manifest: &mut RunManifest,
) -> Result<(Vec<ParetoRun>, Vec<ParetoRow>)> {
    std::fs::create_dir_all(out_dir)?;
    let mut tasks = Vec::new();
    for template in &cfg.methods {
        for &lambda in &cfg.lambdas {
            for &seed in &cfg.seeds {
                tasks.push((template, lambda, seed));
            }
        }
    }
    let runs = run_parallel(jobs, tasks, |(t, l, s)| pareto_cell(cfg, t, l, s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rows = pareto_rows(&runs, cfg.data.k_active);
    write_rows(out_dir.join("pareto_runs.csv"), &runs)?;
    manifest.add_output(out_dir, "pareto_runs.csv", true)?;
    write_rows(out_dir.join("pareto.csv"), &rows)?;
    manifest.add_output(out_dir, "pareto.csv", true)?;
    Ok((runs, rows))
}

/// Seed-averages runs per (method, λ), keeping first-seen order.
pub fn pareto_rows(runs: &[ParetoRun], true_k: usize) -> Vec<ParetoRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|(m, l)| *m == r.method && *l == r.lambda) {
            keys.push((r.method.clone(), r.lambda));
        }
    }
    keys.into_iter()
        .map(|(method, lambda)| {
            let cell: Vec<&ParetoRun> = runs
                .iter()
                .filter(|r| r.method == method && r.lambda == lambda)
                .collect();
            let avg =
                |f: fn(&ParetoRun) -> f64| mean_std(&cell.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (latent_mcc, latent_mcc_std) = avg(|r| r.latent_mcc);
            ParetoRow {
                method,
                lambda,
                n_seeds: cell.len(),
                l0_t0: avg(|r| r.l0_t0).0,
                l0_t1e5: avg(|r| r.l0_t1e5).0,
                l0_t1e3: avg(|r| r.l0_t1e3).0,
                l1: avg(|r| r.l1).0,
                mse: avg(|r| r.mse).0,
                latent_mcc,
                latent_mcc_std,
                dict_mcc: avg(|r| r.dict_mcc).0,
                true_k,
            }
        })
        .collect()
}

/// Comparison of a challenger curve against one point of a reference curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedLevel {
    pub lambda: f64,
    pub reference_l1: f64,
    pub reference_mcc: f64,
    /// Best challenger MCC among points with L1 at or below the reference.
    pub challenger_mcc: Option<f64>,
    pub challenger_lambda: Option<f64>,
    pub dominated: bool,
}

/// Matched levels are the reference method's points at non-zero λ. A level
/// is dominated when some challenger point has L1 ≤ and MCC ≥ the reference.
pub fn matched_levels(rows: &[ParetoRow], challenger: &str, reference: &str) -> Vec<MatchedLevel> {
    rows.iter()
        .filter(|r| r.method == reference && r.lambda > 0.0)
        .map(|r| {
            let best = rows
                .iter()
                .filter(|c| c.method == challenger && c.l1 <= r.l1)
                .max_by(|a, b| a.latent_mcc.total_cmp(&b.latent_mcc));
            MatchedLevel {
                lambda: r.lambda,
                reference_l1: r.l1,
                reference_mcc: r.latent_mcc,
                challenger_mcc: best.map(|b| b.latent_mcc),
                challenger_lambda: best.map(|b| b.lambda),
                dominated: best.is_some_and(|b| b.latent_mcc >= r.latent_mcc),
            }
        })
        .collect()
}
