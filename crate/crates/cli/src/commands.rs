use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sparsebench::datagen::{generate_dataset, CodeDistribution, Dataset, GenConfig, Split};
use sparsebench::experiments::manifest::{seal, RunManifest};
use sparsebench::experiments::protocols::{protocol, reference_data};
use sparsebench::experiments::sweep::{
    run_nmk_sweep, run_pareto_sweep, NmkSweepConfig, ParetoConfig,
};
use sparsebench::experiments::{
    replay, run_ablation, run_scenario_suite, AblationKind, AblationParams, SuiteConfig,
};
use sparsebench::flops::{ledger, FlopParams};
use sparsebench::io::{
    load_checkpoint, read_dataset, save_checkpoint, write_dataset, write_matrix_csv,
    write_trace_csv,
};
use sparsebench::metrics::{gram_analysis, sae_rank_witness};
use sparsebench::training::{evaluate, train, Method, Scenario, TrainConfig, Trained};

use crate::{
    AblateArgs, Cli, Command, Dist, FlopsArgs, GenerateArgs, Global, GramArgs, InferArgs, NmkArgs,
    ParetoArgs, SuiteArgs, SweepCommand, TrainArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Generate(a) => generate(&g, a),
        Command::Train(a) => train_cmd(&g, a),
        Command::Infer(a) => infer(&g, a),
        Command::Gram(a) => gram(&g, a),
        Command::Flops(a) => flops(&g, a),
        Command::Sweep(SweepCommand::Nmk(a)) => sweep_nmk(&g, a),
        Command::Sweep(SweepCommand::Pareto(a)) => sweep_pareto(&g, a),
        Command::Ablate(a) => ablate(&g, a),
        Command::Suite(a) => suite(&g, a),
        Command::Replay(a) => {
            let manifest = replay(&a.from, &g.out, g.jobs)?;
            print_json(&manifest.outputs)
        }
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// The `--config` file when given, otherwise `default()`.
fn config_or<T: DeserializeOwned>(g: &Global, default: impl FnOnce() -> Result<T>) -> Result<T> {
    match &g.config {
        Some(path) => read_config(path),
        None => default(),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn distribution(dist: Dist, alpha: f64) -> CodeDistribution {
    match dist {
        Dist::Uniform => CodeDistribution::Uniform,
        Dist::Zipf => CodeDistribution::Zipf { alpha },
    }
}

fn parse_method(name: &str, hidden: usize) -> Result<Method> {
    if name.eq_ignore_ascii_case("mlp") {
        return Ok(Method::Mlp { hidden });
    }
    Ok(name.parse()?)
}

fn seeds(base: u64, count: usize) -> Vec<u64> {
    (base..base + count as u64).collect()
}

fn generate(g: &Global, a: GenerateArgs) -> Result<()> {
    let cfg = config_or(g, || {
        Ok(GenConfig::new(a.n, a.m, a.k, a.samples, g.seed)
            .with_distribution(distribution(a.dist, a.alpha)))
    })?;
    let mut manifest = RunManifest::begin("generate", &cfg, vec![cfg.seed])?;
    let outcome = (|| -> Result<()> {
        let ds = generate_dataset(&cfg)?;
        write_dataset(&g.out, &ds)?;
        for name in ["X.csv", "S.csv", "D.csv"] {
            manifest.add_output(&g.out, name, false)?;
        }
        Ok(())
    })();
    seal(manifest, &outcome, &g.out, &g.out)?;
    outcome?;
    println!("wrote dataset to {}", g.out.display());
    Ok(())
}

/// Loads a dataset written by `generate`, using its manifest for the configuration.
fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest =
        RunManifest::load(dir).with_context(|| format!("reading manifest in {}", dir.display()))?;
    let cfg: GenConfig =
        serde_json::from_value(manifest.config).context("manifest does not describe a dataset")?;
    Ok(read_dataset(dir, cfg)?)
}

fn train_cmd(g: &Global, a: TrainArgs) -> Result<()> {
    let cfg: TrainConfig = config_or(g, || {
        let scenario: Scenario = a.scenario.parse()?;
        let method = parse_method(&a.method, a.hidden)?;
        let mut cfg = protocol(scenario, method).with_seed(g.seed);
        if let Some(steps) = a.steps {
            cfg = cfg.with_steps(steps);
        }
        if let Some(lambda) = a.lambda {
            cfg = cfg.with_lambda(lambda);
        }
        if let Some(lr) = a.lr {
            cfg.lr = lr;
        }
        Ok(cfg)
    })?;
    let ds = match &a.data {
        Some(dir) => load_dataset(dir)?,
        None => generate_dataset(&reference_data(g.seed, CodeDistribution::Uniform))?,
    };
    #[derive(Serialize)]
    struct Snapshot<'a> {
        train: &'a TrainConfig,
        data: &'a GenConfig,
        data_dir: Option<&'a PathBuf>,
    }
    let snapshot = Snapshot {
        train: &cfg,
        data: &ds.config,
        data_dir: a.data.as_ref(),
    };
    let mut manifest = RunManifest::begin("train", &snapshot, vec![cfg.seed])?;
    let outcome = (|| -> Result<()> {
        let out = train(&ds, &cfg)?;
        fs::create_dir_all(&g.out)?;
        write_trace_csv(g.out.join("trace.csv"), &out.trace)?;
        manifest.add_output(&g.out, "trace.csv", true)?;
        save_checkpoint(
            g.out.join("checkpoint"),
            &out.trained,
            serde_json::to_value(&cfg)?,
        )?;
        print_json(&out.trace.final_metrics())
    })();
    seal(manifest, &outcome, &g.out, &g.out)?;
    outcome
}

fn infer(g: &Global, a: InferArgs) -> Result<()> {
    let (trained, meta) = load_checkpoint(&a.checkpoint)?;
    let trained = match (trained, a.ito) {
        (Trained::Sae(m), true) => Trained::SaeIto(m),
        (_, true) => bail!("--ito needs an SAE checkpoint"),
        (t, false) => t,
    };
    let mut eval = match serde_json::from_value::<TrainConfig>(meta.extra.clone()) {
        Ok(cfg) => cfg.eval,
        Err(_) => Default::default(),
    };
    if let Some(steps) = a.steps {
        eval.infer.steps = steps;
    }
    if let Some(lr) = a.lr {
        eval.infer.lr = lr;
    }
    if let Some(lambda) = a.lambda {
        eval.infer.lambda = lambda;
    }
    let ds = load_dataset(&a.data)?;
    let split = Split {
        x: ds.x.clone(),
        s: ds.s.clone(),
    };
    let (metrics, codes) = evaluate(&trained, &split, &ds.dictionary, &eval)?;
    fs::create_dir_all(&g.out)?;
    write_matrix_csv(g.out.join("codes.csv"), &codes)?;
    print_json(&metrics)
}

fn gram(g: &Global, a: GramArgs) -> Result<()> {
    let (dictionary, witness) = match (&a.checkpoint, &a.data) {
        (Some(dir), _) => {
            let (trained, _) = load_checkpoint(dir)?;
            let witness = match &trained {
                Trained::Sae(m) | Trained::SaeIto(m) => {
                    Some(sae_rank_witness(m, trained.dictionary()))
                }
                _ => None,
            };
            (trained.dictionary().clone(), witness)
        }
        (None, Some(dir)) => (load_dataset(dir)?.dictionary, None),
        (None, None) => bail!("gram needs --checkpoint or --data"),
    };
    let analysis = gram_analysis(&dictionary);
    fs::create_dir_all(&g.out)?;
    write_matrix_csv(g.out.join("G.csv"), &analysis.gram)?;
    let summary = serde_json::json!({
        "n_features": dictionary.n_features(),
        "n_measurements": dictionary.n_measurements(),
        "max_offdiag": analysis.max_offdiag,
        "identity_deviation": analysis.identity_deviation,
        "rank_witness": witness,
    });
    fs::write(
        g.out.join("gram.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    print_json(&summary)
}

fn flops(g: &Global, a: FlopsArgs) -> Result<()> {
    let method = parse_method(&a.method, a.hidden)?;
    let params: FlopParams = config_or(g, || {
        Ok(FlopParams {
            m: a.m,
            n: a.n,
            hidden: None,
            n_samples: a.samples,
            batch: a.batch.unwrap_or(a.samples),
            steps: a.steps,
            iters: Some(a.iters),
            learn_dictionary: !a.fixed_dictionary,
        })
    })?;
    print_json(&ledger(method, params, a.bias))
}

fn sweep_nmk(g: &Global, a: NmkArgs) -> Result<()> {
    let cfg = config_or(g, || {
        let mut cfg = NmkSweepConfig::default();
        let grid = &mut cfg.grid;
        grid.base_seed = g.seed;
        if let Some(n) = a.n {
            grid.n_sources = n;
        }
        if let Some(m) = a.m {
            grid.n_measurements = m;
        }
        if let Some(k) = a.k {
            grid.k_active = k;
        }
        if let Some(r) = a.repeats {
            grid.repeats = r;
        }
        if let Some(s) = a.samples {
            grid.n_samples = s;
        }
        if let Some(steps) = a.steps {
            cfg.method_a = cfg.method_a.with_steps(steps);
            cfg.method_b = cfg.method_b.with_steps(steps);
        }
        Ok(cfg)
    })?;
    let report = run_nmk_sweep(&cfg, &g.out, g.jobs)?;
    println!(
        "{} cells, {} skipped; mean diff above boundary {:.4}",
        report.rows.len(),
        report.skipped.len(),
        report.mean_diff_above_boundary(None)
    );
    Ok(())
}

fn sweep_pareto(g: &Global, a: ParetoArgs) -> Result<()> {
    let cfg = config_or(g, || {
        let mut cfg = ParetoConfig::reference(seeds(g.seed, a.seeds), a.steps);
        if let Some(l) = a.lambdas {
            cfg.lambdas = l;
        }
        Ok(cfg)
    })?;
    let report = run_pareto_sweep(&cfg, &g.out, g.jobs)?;
    print_json(&report.rows)
}

fn ablate(g: &Global, a: AblateArgs) -> Result<()> {
    let kind: AblationKind = a.kind.parse()?;
    let params = config_or(g, || {
        Ok(AblationParams {
            seeds: seeds(g.seed, a.seeds),
            steps: a.steps,
            ..AblationParams::default()
        })
    })?;
    let report = run_ablation(kind, &params, &g.out, g.jobs)?;
    print_json(&report.rows)
}

fn suite(g: &Global, a: SuiteArgs) -> Result<()> {
    let scenario: Scenario = a.scenario.parse()?;
    let cfg = config_or(g, || {
        let mut cfg = SuiteConfig::reference(
            scenario,
            distribution(a.dist, a.alpha),
            seeds(g.seed, a.seeds),
        );
        if let Some(names) = &a.methods {
            let methods = names
                .iter()
                .map(|m| parse_method(m, 256))
                .collect::<Result<Vec<_>>>()?;
            cfg = cfg.with_methods(&methods);
        }
        if let Some(steps) = a.steps {
            cfg.runs = cfg.runs.into_iter().map(|r| r.with_steps(steps)).collect();
        }
        cfg.save_checkpoints = a.checkpoints;
        Ok(cfg)
    })?;
    let report = run_scenario_suite(&cfg, &g.out, g.jobs)?;
    let mut methods: Vec<Method> = Vec::new();
    for r in &report.runs {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let summary: Vec<_> = methods
        .iter()
        .map(|&m| {
            serde_json::json!({
                "method": m.label(),
                "latent_mcc": report.final_mean(m, |r| r.latent_mcc),
                "dict_mcc": report.final_mean(m, |r| r.dict_mcc),
                "mse": report.final_mean(m, |r| r.mse),
            })
        })
        .collect();
    print_json(&summary)
}
