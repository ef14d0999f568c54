//! Ablations: MLP width, biases, top-k sparse coding, a larger configuration
//! and the Zipf reruns of the scenario suites.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_dataset, CodeDistribution, GenConfig};
use crate::error::{Error, Result};
use crate::experiments::manifest::{seal, RunManifest};
use crate::experiments::protocols::{protocol, reference_data};
use crate::experiments::suite::{run_scenario_suite, SuiteConfig};
use crate::experiments::{mean_std, require, run_parallel, write_rows};
use crate::metrics::MetricsRecord;
use crate::training::{evaluate, train, BatchSize, Method, Scenario, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    MlpWidth,
    Bias,
    TopK,
    LargeScale,
    ZipfSuite,
}

impl AblationKind {
    pub const ALL: [AblationKind; 5] = [
        AblationKind::MlpWidth,
        AblationKind::Bias,
        AblationKind::TopK,
        AblationKind::LargeScale,
        AblationKind::ZipfSuite,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationKind::MlpWidth => "mlp-width",
            AblationKind::Bias => "bias",
            AblationKind::TopK => "topk",
            AblationKind::LargeScale => "large-scale",
            AblationKind::ZipfSuite => "zipf-suite",
        }
    }
}

impl fmt::Display for AblationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        AblationKind::ALL
            .into_iter()
            .find(|k| k.label() == norm || k.label().replace('-', "") == norm)
            .ok_or_else(|| Error::Config(format!("unknown ablation kind '{s}'")))
    }
}

/// Parameters shared by all ablations; fields a kind does not use are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationParams {
    pub seeds: Vec<u64>,
    /// Overrides the protocol step count.
    #[serde(default)]
    pub steps: Option<usize>,
    /// MLP widths for `MlpWidth`.
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    /// Support sizes for `TopK`.
    #[serde(default = "default_topk")]
    pub topk: Vec<usize>,
    /// Zipf exponent for `ZipfSuite`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Overrides the data configuration.
    #[serde(default)]
    pub data: Option<GenConfig>,
}

fn default_widths() -> Vec<usize> {
    vec![16, 64, 256]
}

fn default_topk() -> Vec<usize> {
    vec![1, 2, 3, 4, 6, 8]
}

fn default_alpha() -> f64 {
    1.0
}

impl Default for AblationParams {
    fn default() -> Self {
        AblationParams {
            seeds: (0..5).collect(),
            steps: None,
            widths: default_widths(),
            topk: default_topk(),
            alpha: default_alpha(),
            data: None,
        }
    }
}

impl AblationParams {
    pub fn validate(&self, kind: AblationKind) -> Result<()> {
        require(!self.seeds.is_empty(), "ablation needs at least one seed")?;
        require(self.steps != Some(0), "steps must be positive")?;
        match kind {
            AblationKind::MlpWidth => require(
                !self.widths.is_empty() && self.widths.iter().all(|&w| w > 0),
                "widths must be non-empty and positive",
            ),
            AblationKind::TopK => require(
                !self.topk.is_empty() && self.topk.iter().all(|&k| k > 0),
                "top-k sizes must be non-empty and positive",
            ),
            AblationKind::ZipfSuite => require(
                self.alpha.is_finite() && self.alpha >= 0.0,
                "alpha must be >= 0",
            ),
            _ => Ok(()),
        }?;
        if let Some(d) = &self.data {
            d.validate()?;
        }
        Ok(())
    }

    fn data_or(&self, default: GenConfig) -> GenConfig {
        self.data.clone().unwrap_or(default)
    }

    fn steps_or(&self, cfg: TrainConfig) -> TrainConfig {
        match self.steps {
            Some(s) => cfg.with_steps(s),
            None => cfg,
        }
    }
}

/// One row of `mlp_width.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    pub hidden: usize,
    pub n_seeds: usize,
    pub latent_mcc: f64,
    pub latent_mcc_std: f64,
    pub dict_mcc: f64,
    pub mse: f64,
}

/// One row of `bias.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub method: String,
    pub use_bias: bool,
    pub n_seeds: usize,
    pub latent_mcc: f64,
    pub latent_mcc_std: f64,
    pub dict_mcc: f64,
    pub mse: f64,
    pub l0: f64,
}

/// One row of `bias_delta.csv`: with-bias minus without-bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasDelta {
    pub method: String,
    pub latent_mcc: f64,
    pub dict_mcc: f64,
    pub mse: f64,
    pub l0: f64,
}

/// One row of `topk.csv`. `mode` is `l1` (plain training and inference),
/// `topk_inference` (top-k applied at test time) or `topk_training`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub mode: String,
    pub k: Option<usize>,
    pub n_seeds: usize,
    pub l0: f64,
    pub mse: f64,
    pub latent_mcc: f64,
}

/// Outcome of an ablation; `rows` holds the main CSV as JSON values.
#[derive(Clone, Debug)]
pub struct AblationReport {
    pub manifest: RunManifest,
    pub rows: Vec<serde_json::Value>,
}

#[derive(Serialize)]
struct AblationSnapshot<'a> {
    kind: AblationKind,
    params: &'a AblationParams,
}

pub fn run_ablation(
    kind: AblationKind,
    params: &AblationParams,
    out_dir: &Path,
    jobs: usize,
) -> Result<AblationReport> {
    params.validate(kind)?;
    let snapshot = AblationSnapshot { kind, params };
    let mut manifest = RunManifest::begin(
        &format!("ablate_{}", kind.label()),
        &snapshot,
        params.seeds.clone(),
    )?;
    std::fs::create_dir_all(out_dir)?;
    let outcome = match kind {
        AblationKind::MlpWidth => mlp_width(params, out_dir, jobs, &mut manifest),
        AblationKind::Bias => bias(params, out_dir, jobs, &mut manifest),
        AblationKind::TopK => topk(params, out_dir, jobs, &mut manifest),
        AblationKind::LargeScale => large_scale(params, out_dir, jobs, &mut manifest),
        AblationKind::ZipfSuite => zipf_suite(params, out_dir, jobs, &mut manifest),
    };
    let manifest = seal(manifest, &outcome, out_dir, out_dir)?;
    outcome.map(|rows| AblationReport { manifest, rows })
}

fn to_values<T: Serialize>(rows: &[T]) -> Result<Vec<serde_json::Value>> {
    rows.iter()
        .map(|r| serde_json::to_value(r).map_err(Error::from))
        .collect()
}

fn write_main<T: Serialize>(
    out_dir: &Path,
    name: &str,
    rows: &[T],
    manifest: &mut RunManifest,
) -> Result<()> {
    write_rows(out_dir.join(name), rows)?;
    manifest.add_output(out_dir, name, true)
}

fn final_of(data: &GenConfig, cfg: &TrainConfig, seed: u64) -> Result<MetricsRecord> {
    let ds = generate_dataset(&data.clone().with_seed(seed))?;
    Ok(train(&ds, &cfg.clone().with_seed(seed))?
        .trace
        .final_metrics())
}

fn avg(records: &[MetricsRecord], f: fn(&MetricsRecord) -> f64) -> (f64, f64) {
    mean_std(&records.iter().map(f).collect::<Vec<_>>())
}

/// MLP autoencoders of several widths with both unknown.
fn mlp_width(
    p: &AblationParams,
    out_dir: &Path,
    jobs: usize,
    manifest: &mut RunManifest,
) -> Result<Vec<serde_json::Value>> {
    let data = p.data_or(reference_data(0, CodeDistribution::Uniform));
    let tasks: Vec<(usize, u64)> = p
        .widths
        .iter()
        .flat_map(|&h| p.seeds.iter().map(move |&s| (h, s)))
        .collect();
    let records = run_parallel(jobs, tasks, |(h, s)| {
        let cfg = p.steps_or(protocol(Scenario::UnknownBoth, Method::Mlp { hidden: h }));
        final_of(&data, &cfg, s)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let rows: Vec<WidthRow> = p
        .widths
        .iter()
        .zip(records.chunks(p.seeds.len()))
        .map(|(&hidden, recs)| {
            let (latent_mcc, latent_mcc_std) = avg(recs, |m| m.latent_mcc);
            WidthRow {
                hidden,
                n_seeds: recs.len(),
                latent_mcc,
                latent_mcc_std,
                dict_mcc: avg(recs, |m| m.dict_mcc).0,
                mse: avg(recs, |m| m.mse).0,
            }
        })
        .collect();
    write_main(out_dir, "mlp_width.csv", &rows, manifest)?;
    to_values(&rows)
}

/// SAE and MLP-256 with and without biases, both unknown.
fn bias(
    p: &AblationParams,
    out_dir: &Path,
    jobs: usize,
    manifest: &mut RunManifest,
) -> Result<Vec<serde_json::Value>> {
    let data = p.data_or(reference_data(0, CodeDistribution::Uniform));
    let methods = [Method::Sae, Method::Mlp { hidden: 256 }];
    let mut tasks = Vec::new();
    for method in methods {
        for use_bias in [false, true] {
            for &s in &p.seeds {
                tasks.push((method, use_bias, s));
            }
        }
    }
    let records = run_parallel(jobs, tasks, |(method, use_bias, s)| {
        let cfg = TrainConfig {
            use_bias,
            ..p.steps_or(protocol(Scenario::UnknownBoth, method))
        };
        final_of(&data, &cfg, s)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut chunks = records.chunks(p.seeds.len());
    for method in methods {
        for use_bias in [false, true] {
            let recs = chunks.next().unwrap_or_default();
            let (latent_mcc, latent_mcc_std) = avg(recs, |m| m.latent_mcc);
            rows.push(BiasRow {
                method: method.label(),
                use_bias,
                n_seeds: recs.len(),
                latent_mcc,
                latent_mcc_std,
                dict_mcc: avg(recs, |m| m.dict_mcc).0,
                mse: avg(recs, |m| m.mse).0,
                l0: avg(recs, |m| m.l0_mean).0,
            });
        }
    }
    let deltas: Vec<BiasDelta> = rows
        .chunks(2)
        .map(|pair| BiasDelta {
            method: pair[0].method.clone(),
            latent_mcc: pair[1].latent_mcc - pair[0].latent_mcc,
            dict_mcc: pair[1].dict_mcc - pair[0].dict_mcc,
            mse: pair[1].mse - pair[0].mse,
            l0: pair[1].l0 - pair[0].l0,
        })
        .collect();
    write_main(out_dir, "bias.csv", &rows, manifest)?;
    write_main(out_dir, "bias_delta.csv", &deltas, manifest)?;
    to_values(&rows)
}

/// Sparse coding with L1 only, with top-k applied at test time, and with
/// top-k applied during training.
fn topk(
    p: &AblationParams,
    out_dir: &Path,
    jobs: usize,
    manifest: &mut RunManifest,
) -> Result<Vec<serde_json::Value>> {
    let data = p.data_or(reference_data(0, CodeDistribution::Uniform));
    let base = p.steps_or(protocol(Scenario::UnknownBoth, Method::SparseCoding));
    // Per seed: the L1 model plus one top-k inference point per k, then
    // one top-k training run per k.
    let per_seed = run_parallel(
        jobs,
        p.seeds.clone(),
        |s| -> Result<Vec<(String, Option<usize>, MetricsRecord)>> {
            let ds = generate_dataset(&data.clone().with_seed(s))?;
            let cfg = base.clone().with_seed(s);
            let outcome = train(&ds, &cfg)?;
            let (_, test) = ds.train_test();
            let mut out = vec![("l1".to_string(), None, outcome.trace.final_metrics())];
            for &k in &p.topk {
                let mut eval = cfg.eval.clone();
                eval.infer.topk = Some(k);
                let (m, _) = evaluate(&outcome.trained, &test, &ds.dictionary, &eval)?;
                out.push(("topk_inference".into(), Some(k), m));
            }
            for &k in &p.topk {
                let mut run = TrainConfig {
                    train_topk: Some(k),
                    ..cfg.clone()
                };
                run.eval.infer.topk = Some(k);
                out.push((
                    "topk_training".into(),
                    Some(k),
                    train(&ds, &run)?.trace.final_metrics(),
                ));
            }
            Ok(out)
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n_points = per_seed.first().map_or(0, Vec::len);
    let rows: Vec<TopKRow> = (0..n_points)
        .map(|i| {
            let recs: Vec<MetricsRecord> = per_seed.iter().map(|v| v[i].2).collect();
            TopKRow {
                mode: per_seed[0][i].0.clone(),
                k: per_seed[0][i].1,
                n_seeds: recs.len(),
                l0: avg(&recs, |m| m.l0_mean).0,
                mse: avg(&recs, |m| m.mse).0,
                latent_mcc: avg(&recs, |m| m.latent_mcc).0,
            }
        })
        .collect();
    write_main(out_dir, "topk.csv", &rows, manifest)?;
    to_values(&rows)
}

/// Known codes at N=200, M=40, K=5 with SAE and MLP-1024.
pub fn large_scale_config(p: &AblationParams) -> SuiteConfig {
    let data = p.data_or(GenConfig::new(200, 40, 5, 16_384, 0));
    let runs = [Method::Sae, Method::Mlp { hidden: 1024 }]
        .into_iter()
        .map(|m| {
            let cfg = TrainConfig {
                batch: BatchSize::Size(1024),
                ..protocol(Scenario::KnownCodes, m)
            };
            p.steps_or(cfg)
        })
        .collect();
    SuiteConfig {
        scenario: Scenario::KnownCodes,
        data,
        runs,
        seeds: p.seeds.clone(),
        save_checkpoints: false,
    }
}

fn large_scale(
    p: &AblationParams,
    out_dir: &Path,
    jobs: usize,
    manifest: &mut RunManifest,
) -> Result<Vec<serde_json::Value>> {
    let cfg = large_scale_config(p);
    let report = run_scenario_suite(&cfg, out_dir, jobs)?;
    absorb(manifest, &report.manifest, "");
    let rows = summary(&report);
    write_main(out_dir, "summary.csv", &rows, manifest)?;
    to_values(&rows)
}

/// Final metrics of one method in a suite, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummaryRow {
    pub scenario: String,
    pub method: String,
    pub n_seeds: usize,
    pub latent_mcc: f64,
    pub latent_mcc_std: f64,
    pub dict_mcc: f64,
    pub mse: f64,
}

fn summary(report: &crate::experiments::SuiteReport) -> Vec<SuiteSummaryRow> {
    let scenario = report.manifest.config["scenario"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    let mut methods: Vec<Method> = Vec::new();
    for r in &report.runs {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let recs: Vec<MetricsRecord> = report
                .runs
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.trace.final_metrics())
                .collect();
            let (latent_mcc, latent_mcc_std) = avg(&recs, |m| m.latent_mcc);
            SuiteSummaryRow {
                scenario: scenario.clone(),
                method: m.label(),
                n_seeds: recs.len(),
                latent_mcc,
                latent_mcc_std,
                dict_mcc: avg(&recs, |m| m.dict_mcc).0,
                mse: avg(&recs, |m| m.mse).0,
            }
        })
        .collect()
}

/// Lists a nested driver's outputs in the parent manifest.
fn absorb(parent: &mut RunManifest, child: &RunManifest, prefix: &str) {
    for o in &child.outputs {
        let mut o = o.clone();
        if !prefix.is_empty() {
            o.path = format!("{prefix}/{}", o.path);
        }
        parent.outputs.push(o);
    }
}

/// The three scenario suites on Zipf-distributed codes.
fn zipf_suite(
    p: &AblationParams,
    out_dir: &Path,
    jobs: usize,
    manifest: &mut RunManifest,
) -> Result<Vec<serde_json::Value>> {
    let dist = CodeDistribution::Zipf { alpha: p.alpha };
    let mut rows = Vec::new();
    for scenario in Scenario::ALL {
        let mut cfg = SuiteConfig::reference(scenario, dist, p.seeds.clone());
        if let Some(d) = &p.data {
            cfg.data = d.clone().with_distribution(dist);
        }
        cfg.runs = cfg.runs.into_iter().map(|r| p.steps_or(r)).collect();
        let sub = scenario.label();
        let report = run_scenario_suite(&cfg, &out_dir.join(sub), jobs)?;
        absorb(manifest, &report.manifest, sub);
        rows.extend(summary(&report));
    }
    write_main(out_dir, "summary.csv", &rows, manifest)?;
    to_values(&rows)
}
