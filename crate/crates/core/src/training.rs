//! The three experimental scenarios and the optimisation loop behind them.
//!
//! | scenario          | dictionary        | applicable methods          |
//! |-------------------|-------------------|-----------------------------|
//! | known codes       | unused            | SAE, MLP                    |
//! | known dictionary  | fixed to truth    | SAE, MLP, SAE+ITO           |
//! | unknown both      | learned           | SAE, MLP, sparse coding, SAE+ITO |
//!
//! Every run evaluates on the held-out half of the dataset at step 0, every
//! `eval_every` steps and at the final step.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Dictionary, Provenance, Split};
use crate::error::{shape_err, Error, Result};
use crate::flops::{ledger, FlopParams};
use crate::inference::{
    infer_codes, initial_codes, sae_ito, InferConfig, LatentInit, LatentUpdate, DEFAULT_THRESHOLD,
};
use crate::metrics::{dictionary_mcc, mcc, sparsity_stats, MatchMode, MetricsRecord};
use crate::models::{
    backward_stack, decode, forward_stack, normalize_decoder, resample_dead_latents,
    topk_project_inplace, Autoencoder, MlpModel, SaeModel,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{self, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    KnownCodes,
    KnownDictionary,
    UnknownBoth,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::KnownCodes,
        Scenario::KnownDictionary,
        Scenario::UnknownBoth,
    ];

    pub fn supports(self, method: Method) -> bool {
        match self {
            Scenario::KnownCodes => matches!(method, Method::Sae | Method::Mlp { .. }),
            Scenario::KnownDictionary => !matches!(method, Method::SparseCoding),
            Scenario::UnknownBoth => true,
        }
    }

    pub fn learns_dictionary(self) -> bool {
        self == Scenario::UnknownBoth
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::KnownCodes => "known_codes",
            Scenario::KnownDictionary => "known_dictionary",
            Scenario::UnknownBoth => "unknown_both",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "known_codes" => Ok(Scenario::KnownCodes),
            "known_dictionary" => Ok(Scenario::KnownDictionary),
            "unknown_both" | "unknown" => Ok(Scenario::UnknownBoth),
            other => Err(Error::Parse(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Sae,
    Mlp { hidden: usize },
    SparseCoding,
    SaeIto,
}

impl Method {
    /// Stable label used in file names and CSV columns, e.g. `mlp-256`.
    pub fn label(self) -> String {
        match self {
            Method::Sae => "sae".into(),
            Method::Mlp { hidden } => format!("mlp-{hidden}"),
            Method::SparseCoding => "sparse_coding".into(),
            Method::SaeIto => "sae_ito".into(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('+', "_");
        match s.as_str() {
            "sae" => Ok(Method::Sae),
            "sc" | "sparse_coding" | "sparse-coding" => Ok(Method::SparseCoding),
            "sae_ito" | "sae-ito" | "ito" => Ok(Method::SaeIto),
            other => {
                let hidden = other
                    .strip_prefix("mlp-")
                    .or_else(|| other.strip_prefix("mlp"))
                    .ok_or_else(|| Error::Parse(format!("unknown method {other:?}")))?;
                let hidden = hidden
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad MLP width in {other:?}")))?;
                Ok(Method::Mlp { hidden })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    #[default]
    Full,
    Size(usize),
}

impl BatchSize {
    fn resolve(self, n: usize) -> usize {
        match self {
            BatchSize::Full => n,
            BatchSize::Size(b) => b.min(n),
        }
    }
}

/// How held-out data is scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Test-time latent optimisation for sparse coding and SAE+ITO.
    pub infer: InferConfig,
    /// Activity threshold for L0 and dead-latent statistics.
    pub threshold: f64,
    pub match_mode: MatchMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            infer: InferConfig {
                steps: 1000,
                lr: 5e-2,
                lambda: DEFAULT_LAMBDA,
                init: LatentInit::Uniform { scale: 0.1 },
                topk: None,
                threshold: DEFAULT_THRESHOLD,
                update: LatentUpdate::Proximal,
                seed: 0,
            },
            threshold: DEFAULT_THRESHOLD,
            match_mode: MatchMode::Auto,
        }
    }
}

pub const DEFAULT_LAMBDA: f64 = 3e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scenario: Scenario,
    pub method: Method,
    pub steps: usize,
    pub lr: f64,
    /// L1 weight of the reconstruction objective.
    pub lambda: f64,
    #[serde(default)]
    pub batch: BatchSize,
    pub eval_every: usize,
    #[serde(default)]
    pub resample_every: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub use_bias: bool,
    /// Hidden layers of the MLP encoder, all of the method's width.
    #[serde(default = "one")]
    pub mlp_depth: usize,
    /// Learning rate for the per-sample codes of sparse coding; defaults to `lr`.
    #[serde(default)]
    pub code_lr: Option<f64>,
    /// Initial training codes for sparse coding.
    #[serde(default = "default_code_init")]
    pub code_init: LatentInit,
    /// Top-k projection of sparse-coding training codes after every step.
    #[serde(default)]
    pub train_topk: Option<usize>,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn one() -> usize {
    1
}

fn default_code_init() -> LatentInit {
    LatentInit::Uniform { scale: 0.1 }
}

impl TrainConfig {
    pub fn new(scenario: Scenario, method: Method) -> Self {
        TrainConfig {
            scenario,
            method,
            steps: 20_000,
            lr: 1e-4,
            lambda: DEFAULT_LAMBDA,
            batch: BatchSize::Full,
            eval_every: 1000,
            resample_every: None,
            seed: 0,
            use_bias: false,
            mlp_depth: 1,
            code_lr: None,
            code_init: default_code_init(),
            train_topk: None,
            eval: EvalConfig::default(),
        }
    }

    /// Sets the training penalty and the test-time inference penalty together.
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self.eval.infer.lambda = lambda;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.eval.infer.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scenario.supports(self.method) {
            return Err(Error::NotApplicable {
                scenario: self.scenario.to_string(),
                method: self.method.to_string(),
            });
        }
        if self.steps == 0 {
            return Err(Error::Config("training needs at least one step".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if let Some(lr) = self.code_lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!(
                    "code learning rate must be positive, got {lr}"
                )));
            }
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if matches!(self.batch, BatchSize::Size(0)) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.resample_every == Some(0) {
            return Err(Error::Config("resample_every must be positive".into()));
        }
        if let Method::Mlp { hidden: 0 } = self.method {
            return Err(Error::Config("MLP width must be positive".into()));
        }
        if self.mlp_depth == 0 {
            return Err(Error::Config("MLP needs at least one hidden layer".into()));
        }
        self.eval.infer.validate()
    }
}

/// Sparse coding's learned artefacts: the dictionary and per-sample training codes.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCodingState {
    pub dictionary: Dictionary,
    pub train_codes: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Trained {
    Sae(SaeModel),
    Mlp(MlpModel),
    SparseCoding(SparseCodingState),
    /// The SAE whose decoder and encoder seed inference-time optimisation.
    SaeIto(SaeModel),
}

impl Trained {
    pub fn dictionary(&self) -> &Dictionary {
        match self {
            Trained::Sae(m) | Trained::SaeIto(m) => &m.decoder,
            Trained::Mlp(m) => &m.decoder,
            Trained::SparseCoding(s) => &s.dictionary,
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Trained::Sae(_) => Method::Sae,
            Trained::Mlp(m) => Method::Mlp {
                hidden: m.hidden_width(),
            },
            Trained::SparseCoding(_) => Method::SparseCoding,
            Trained::SaeIto(_) => Method::SaeIto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub metrics: MetricsRecord,
    /// Objective on the training batch at this step.
    pub train_loss: f64,
    pub flops_train_cum: f64,
    /// Cost of producing codes for the evaluation split.
    pub flops_inference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    /// Batch rows whose cosine loss was undefined (zero norm), summed over steps.
    pub degenerate_rows: u64,
    /// Latents redrawn by dead-latent resampling.
    pub resampled: u64,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn final_metrics(&self) -> MetricsRecord {
        self.rows.last().map(|r| r.metrics).unwrap_or_default()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub trained: Trained,
    pub trace: TrainTrace,
}

/// Value of the cosine objective plus the number of undefined rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnownCodesLoss {
    pub value: f64,
    pub degenerate_rows: usize,
}

/// Mean over rows of `1 - cos(pred_i, s_i)`. Rows where either side has zero
/// norm count as cosine 0.
pub fn loss_known_codes(
    pred: ArrayView2<'_, f64>,
    s_true: ArrayView2<'_, f64>,
) -> Result<KnownCodesLoss> {
    known_codes_parts(pred, s_true, false).map(|(loss, _)| loss)
}

fn known_codes_parts(
    pred: ArrayView2<'_, f64>,
    s_true: ArrayView2<'_, f64>,
    with_grad: bool,
) -> Result<(KnownCodesLoss, Option<Array2<f64>>)> {
    if pred.dim() != s_true.dim() {
        return Err(shape_err("prediction and target code shapes differ"));
    }
    let n = pred.nrows();
    let mut total = 0.0;
    let mut degenerate = 0;
    let mut grad = with_grad.then(|| Array2::zeros(pred.dim()));
    for (i, (p, s)) in pred.rows().into_iter().zip(s_true.rows()).enumerate() {
        let pn = p.dot(&p).sqrt();
        let sn = s.dot(&s).sqrt();
        if pn == 0.0 || sn == 0.0 {
            degenerate += 1;
            total += 1.0;
            continue;
        }
        let dot = p.dot(&s);
        let cos = dot / (pn * sn);
        total += 1.0 - cos;
        if let Some(g) = grad.as_mut() {
            // d(1 - cos)/dp = -(s / (|p||s|) - cos · p / |p|²), scaled by 1/n
            let mut row = g.row_mut(i);
            Zip::from(&mut row).and(&p).and(&s).for_each(|g, &pv, &sv| {
                *g = -(sv / (pn * sn) - cos * pv / (pn * pn)) / n as f64;
            });
        }
    }
    Ok((
        KnownCodesLoss {
            value: if n == 0 { 0.0 } else { total / n as f64 },
            degenerate_rows: degenerate,
        },
        grad,
    ))
}

/// Mean over samples of `‖x - x̂‖² + λ‖codes‖₁`.
pub fn loss_reconstruction(
    x: ArrayView2<'_, f64>,
    x_hat: ArrayView2<'_, f64>,
    codes: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<f64> {
    if x.dim() != x_hat.dim() || codes.nrows() != x.nrows() {
        return Err(shape_err("reconstruction loss inputs disagree on shape"));
    }
    let n = x.nrows().max(1) as f64;
    let sq: f64 = Zip::from(&x)
        .and(&x_hat)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
    let l1: f64 = codes.iter().map(|v| v.abs()).sum();
    Ok((sq + lambda * l1) / n)
}

/// Reconstruction objective and its gradient with respect to every parameter
/// tensor, in the order of [`Autoencoder::parameters_mut`].
pub fn reconstruction_loss_and_grads<A: Autoencoder>(
    model: &A,
    x: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    reconstruction_step(model, x, lambda).map(|(loss, grads, _)| (loss, grads))
}

fn reconstruction_step<A: Autoencoder>(
    model: &A,
    x: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<(f64, Vec<Vec<f64>>, Array2<f64>)> {
    let (out, cache) = forward_stack(model.layers(), x)?;
    let x_hat = decode(model.decoder(), out.codes.view(), model.decoder_bias())?;
    let loss = loss_reconstruction(x, x_hat.view(), out.codes.view(), lambda)?;
    let n = x.nrows().max(1) as f64;
    // dL/dx̂
    let g = (x_hat - x) * (2.0 / n);
    let d = model.decoder().matrix();
    let mut d_codes = g.dot(d);
    Zip::from(&mut d_codes).and(&out.codes).for_each(|dc, &c| {
        if c > 0.0 {
            *dc += lambda / n;
        }
    });
    let layer_grads = backward_stack(model.layers(), &cache, d_codes);
    let d_decoder = g.t().dot(&out.codes);
    let d_bias = model.decoder_bias().map(|_| g.sum_axis(Axis(0)));
    Ok((
        loss,
        flatten_grads(layer_grads, d_decoder, d_bias),
        out.codes,
    ))
}

/// Cosine objective against known codes and its gradient (decoder gradients are zero).
pub fn known_codes_loss_and_grads<A: Autoencoder>(
    model: &A,
    x: ArrayView2<'_, f64>,
    s_true: ArrayView2<'_, f64>,
) -> Result<(KnownCodesLoss, Vec<Vec<f64>>)> {
    known_codes_step(model, x, s_true).map(|(loss, grads, _)| (loss, grads))
}

fn known_codes_step<A: Autoencoder>(
    model: &A,
    x: ArrayView2<'_, f64>,
    s_true: ArrayView2<'_, f64>,
) -> Result<(KnownCodesLoss, Vec<Vec<f64>>, Array2<f64>)> {
    let (out, cache) = forward_stack(model.layers(), x)?;
    let (loss, d_codes) = known_codes_parts(out.codes.view(), s_true, true)?;
    let layer_grads = backward_stack(model.layers(), &cache, d_codes.expect("requested"));
    let d_decoder = Array2::zeros(model.decoder().matrix().dim());
    let d_bias = model
        .decoder_bias()
        .map(|b| ndarray::Array1::zeros(b.len()));
    Ok((
        loss,
        flatten_grads(layer_grads, d_decoder, d_bias),
        out.codes,
    ))
}

fn flatten_grads(
    layers: Vec<crate::models::DenseGrad>,
    decoder: Array2<f64>,
    decoder_bias: Option<ndarray::Array1<f64>>,
) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for l in layers {
        out.push(l.weight.into_iter().collect());
        if let Some(b) = l.bias {
            out.push(b.to_vec());
        }
    }
    out.push(decoder.into_iter().collect());
    if let Some(b) = decoder_bias {
        out.push(b.to_vec());
    }
    out
}

fn select_rows(a: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    a.select(Axis(0), rows)
}

fn flops_at(
    cfg: &TrainConfig,
    ds: &Dataset,
    n_train: usize,
    n_test: usize,
    step: usize,
) -> (f64, f64) {
    let params = FlopParams {
        m: ds.config.n_measurements,
        n: ds.config.n_sources,
        hidden: match cfg.method {
            Method::Mlp { hidden } => Some(hidden),
            _ => None,
        },
        n_samples: n_train,
        batch: cfg.batch.resolve(n_train),
        steps: step,
        iters: Some(cfg.eval.infer.steps),
        learn_dictionary: cfg.scenario.learns_dictionary(),
    };
    let train = ledger(cfg.method, params, cfg.use_bias).train_flops;
    let eval_params = FlopParams {
        n_samples: n_test,
        ..params
    };
    let inference = ledger(cfg.method, eval_params, cfg.use_bias).inference_flops;
    (train, inference)
}

/// Scores a trained artefact on `split` against the generating dictionary.
/// Returns the metrics and the codes that produced them.
pub fn evaluate(
    trained: &Trained,
    split: &Split,
    truth: &Dictionary,
    eval: &EvalConfig,
) -> Result<(MetricsRecord, Array2<f64>)> {
    let x = split.x.view();
    let (codes, bias) = match trained {
        Trained::Sae(m) => (m.encode(x)?.codes, m.decoder_bias()),
        Trained::Mlp(m) => (m.encode(x)?.codes, m.decoder_bias()),
        Trained::SparseCoding(state) => (infer_codes(&state.dictionary, x, &eval.infer)?, None),
        Trained::SaeIto(m) => (sae_ito(m, x, &eval.infer)?, m.decoder_bias()),
    };
    let dictionary = trained.dictionary();
    let x_hat = decode(dictionary, codes.view(), bias)?;
    let entries = (x_hat.len().max(1)) as f64;
    let mse = Zip::from(&x_hat)
        .and(&split.x)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
        / entries;
    let (latent_mcc, _) = mcc(split.s.view(), codes.view(), eval.match_mode)?;
    let dict_mcc = if dictionary.n_measurements() >= 2 {
        dictionary_mcc(truth, dictionary, eval.match_mode)?
    } else {
        0.0
    };
    let stats = sparsity_stats(codes.view(), eval.threshold);
    Ok((
        MetricsRecord {
            latent_mcc,
            dict_mcc,
            mse,
            l0_mean: stats.l0_mean,
            l1_mean: stats.l1_mean,
            dead_fraction: stats.dead_fraction,
        },
        codes,
    ))
}

/// Trains `cfg.method` under `cfg.scenario` on the first half of `dataset`,
/// evaluating on the second half.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    dataset.config.validate()?;
    let (m, n) = (dataset.config.n_measurements, dataset.config.n_sources);
    match cfg.method {
        Method::Sae | Method::SaeIto => {
            let model = SaeModel::init(m, n, cfg.use_bias, cfg.seed);
            let wrap = if cfg.method == Method::Sae {
                Trained::Sae
            } else {
                Trained::SaeIto
            };
            train_autoencoder(model, wrap, dataset, cfg)
        }
        Method::Mlp { hidden } => {
            let model = MlpModel::init(m, n, &vec![hidden; cfg.mlp_depth], cfg.use_bias, cfg.seed);
            train_autoencoder(model, Trained::Mlp, dataset, cfg)
        }
        Method::SparseCoding => train_sparse_coding(dataset, cfg),
    }
}

struct Recorder<'a> {
    dataset: &'a Dataset,
    test: Split,
    cfg: &'a TrainConfig,
    n_train: usize,
    trace: TrainTrace,
}

impl Recorder<'_> {
    fn record(&mut self, step: usize, trained: &Trained, train_loss: f64) -> Result<()> {
        let (metrics, _) = evaluate(
            trained,
            &self.test,
            &self.dataset.dictionary,
            &self.cfg.eval,
        )?;
        let (flops_train_cum, flops_inference) =
            flops_at(self.cfg, self.dataset, self.n_train, self.test.len(), step);
        self.trace.rows.push(TraceRow {
            step,
            metrics,
            train_loss,
            flops_train_cum,
            flops_inference,
        });
        Ok(())
    }

    fn due(&self, step: usize) -> bool {
        step.is_multiple_of(self.cfg.eval_every) || step == self.cfg.steps
    }
}

fn batch_rows(cfg: &TrainConfig, n_train: usize, rng: &mut rng::Rng) -> Option<Vec<usize>> {
    match cfg.batch {
        BatchSize::Size(b) if b < n_train => {
            let mut rows = index::sample(rng, n_train, b).into_vec();
            rows.sort_unstable();
            Some(rows)
        }
        _ => None,
    }
}

fn check_finite(step: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { step, loss })
    }
}

fn count_activity(activity: &mut [u64], codes: &Array2<f64>, threshold: f64) {
    for row in codes.rows() {
        for (a, v) in activity.iter_mut().zip(row) {
            if v.abs() > threshold {
                *a += 1;
            }
        }
    }
}

fn train_autoencoder<A: Autoencoder>(
    mut model: A,
    wrap: fn(A) -> Trained,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let (train_split, test) = dataset.train_test();
    let n_train = train_split.len();
    let learn_dict = cfg.scenario.learns_dictionary();
    if !learn_dict {
        // the decoder is not trained: use the generating dictionary
        *model.decoder_mut() = dataset
            .dictionary
            .clone()
            .with_provenance(Provenance::GroundTruth);
    }
    let n_trainable = if learn_dict {
        model.parameters_mut().len()
    } else {
        model.n_encoder_tensors()
    };
    let sizes: Vec<usize> = model
        .parameters_mut()
        .iter()
        .take(n_trainable)
        .map(|p| p.len())
        .collect();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), &sizes);
    let mut batch_rng = rng::stream(cfg.seed, Stream::Batches);
    let mut norm_rng = rng::stream(cfg.seed, Stream::Resample);
    let mut activity = vec![0u64; dataset.config.n_sources];

    let mut rec = Recorder {
        dataset,
        test,
        cfg,
        n_train,
        trace: TrainTrace::default(),
    };
    let initial_loss = batch_loss(&model, &train_split.x, &train_split.s, cfg)?;
    rec.record(0, &wrap(model.clone()), initial_loss)?;

    for step in 1..=cfg.steps {
        let rows = batch_rows(cfg, n_train, &mut batch_rng);
        let (x, s) = match &rows {
            Some(r) => (
                select_rows(&train_split.x, r),
                select_rows(&train_split.s, r),
            ),
            None => (train_split.x.clone(), train_split.s.clone()),
        };
        let (loss, grads, codes) = match cfg.scenario {
            Scenario::KnownCodes => {
                let (loss, grads, codes) = known_codes_step(&model, x.view(), s.view())?;
                rec.trace.degenerate_rows += loss.degenerate_rows as u64;
                (loss.value, grads, codes)
            }
            _ => reconstruction_step(&model, x.view(), cfg.lambda)?,
        };
        check_finite(step - 1, loss)?;
        {
            let mut params = model.parameters_mut();
            adam.step(&mut params[..n_trainable], &grads[..n_trainable]);
        }
        if learn_dict {
            normalize_decoder(model.decoder_mut(), &mut norm_rng);
        }
        if let Some(every) = cfg.resample_every {
            count_activity(&mut activity, &codes, cfg.eval.threshold);
            if step % every == 0 {
                rec.trace.resampled += resample_dead_latents(
                    &mut model,
                    &mut activity,
                    cfg.seed ^ step as u64,
                    learn_dict,
                )
                .len() as u64;
            }
        }
        if rec.due(step) {
            let loss = batch_loss(&model, &train_split.x, &train_split.s, cfg)?;
            check_finite(step, loss)?;
            rec.record(step, &wrap(model.clone()), loss)?;
        }
    }
    Ok(TrainOutcome {
        trained: wrap(model),
        trace: rec.trace,
    })
}

fn batch_loss<A: Autoencoder>(
    model: &A,
    x: &Array2<f64>,
    s: &Array2<f64>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let out = model.encode(x.view())?;
    match cfg.scenario {
        Scenario::KnownCodes => Ok(loss_known_codes(out.codes.view(), s.view())?.value),
        _ => {
            let x_hat = decode(model.decoder(), out.codes.view(), model.decoder_bias())?;
            loss_reconstruction(x.view(), x_hat.view(), out.codes.view(), cfg.lambda)
        }
    }
}

/// Objective and gradients of sparse coding on a batch of codes.
/// Returns `(loss, d_codes, d_dictionary)`.
pub fn sparse_coding_loss_and_grads(
    dictionary: &Dictionary,
    codes: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let x_hat = decode(dictionary, codes, None)?;
    let loss = loss_reconstruction(x, x_hat.view(), codes, lambda)?;
    let n = x.nrows().max(1) as f64;
    let g = (x_hat - x) * (2.0 / n);
    let mut d_codes = g.dot(dictionary.matrix());
    Zip::from(&mut d_codes).and(&codes).for_each(|dc, &c| {
        if c != 0.0 {
            *dc += lambda / n * c.signum();
        }
    });
    let d_dict = g.t().dot(&codes);
    Ok((loss, d_codes, d_dict))
}

fn train_sparse_coding(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (train_split, test) = dataset.train_test();
    let n_train = train_split.len();
    let (m, n) = (dataset.config.n_measurements, dataset.config.n_sources);
    let mut init_rng = rng::stream(cfg.seed, Stream::ModelInit);
    let dictionary = Dictionary::random(m, n, &mut init_rng, Provenance::Learned);
    let codes = initial_codes(cfg.code_init, n_train, n, cfg.seed)?;
    let mut state = SparseCodingState {
        dictionary,
        train_codes: codes,
    };
    let mut code_adam = Adam::new(
        AdamConfig::with_lr(cfg.code_lr.unwrap_or(cfg.lr)),
        &[state.train_codes.len()],
    );
    let mut dict_adam = Adam::new(AdamConfig::with_lr(cfg.lr), &[m * n]);
    let mut batch_rng = rng::stream(cfg.seed, Stream::Batches);
    let mut norm_rng = rng::stream(cfg.seed, Stream::Resample);
    let mut activity = vec![0u64; n];

    let mut rec = Recorder {
        dataset,
        test,
        cfg,
        n_train,
        trace: TrainTrace::default(),
    };
    let full_loss = |state: &SparseCodingState| {
        let x_hat = decode(&state.dictionary, state.train_codes.view(), None)?;
        loss_reconstruction(
            train_split.x.view(),
            x_hat.view(),
            state.train_codes.view(),
            cfg.lambda,
        )
    };
    rec.record(0, &Trained::SparseCoding(state.clone()), full_loss(&state)?)?;

    for step in 1..=cfg.steps {
        let rows = batch_rows(cfg, n_train, &mut batch_rng);
        let (loss, d_codes, d_dict) = match &rows {
            Some(r) => {
                let c = select_rows(&state.train_codes, r);
                let x = select_rows(&train_split.x, r);
                sparse_coding_loss_and_grads(&state.dictionary, c.view(), x.view(), cfg.lambda)?
            }
            None => sparse_coding_loss_and_grads(
                &state.dictionary,
                state.train_codes.view(),
                train_split.x.view(),
                cfg.lambda,
            )?,
        };
        check_finite(step - 1, loss)?;
        code_adam.tick();
        dict_adam.tick();
        let codes_flat = state.train_codes.as_slice_mut().expect("standard layout");
        match &rows {
            Some(r) => {
                for (k, &row) in r.iter().enumerate() {
                    let range = row * n..(row + 1) * n;
                    let grad_row = d_codes.row(k);
                    code_adam.update_range(
                        0,
                        row * n,
                        &mut codes_flat[range],
                        grad_row.as_slice().expect("contiguous"),
                    );
                }
            }
            None => code_adam.update_range(
                0,
                0,
                codes_flat,
                d_codes.as_slice().expect("standard layout"),
            ),
        }
        dict_adam.update_range(
            0,
            0,
            state
                .dictionary
                .matrix_mut()
                .as_slice_mut()
                .expect("standard layout"),
            d_dict.as_slice().expect("standard layout"),
        );
        normalize_decoder(&mut state.dictionary, &mut norm_rng);
        if let Some(k) = cfg.train_topk {
            topk_project_inplace(&mut state.train_codes, k)?;
        }
        if let Some(every) = cfg.resample_every {
            count_activity(&mut activity, &state.train_codes, cfg.eval.threshold);
            if step % every == 0 {
                rec.trace.resampled +=
                    resample_dictionary_columns(&mut state, &mut activity, cfg.seed ^ step as u64)
                        as u64;
            }
        }
        if rec.due(step) {
            let loss = full_loss(&state)?;
            check_finite(step, loss)?;
            rec.record(step, &Trained::SparseCoding(state.clone()), loss)?;
        }
    }
    Ok(TrainOutcome {
        trained: Trained::SparseCoding(state),
        trace: rec.trace,
    })
}

/// Dead-latent resampling for sparse coding: a fresh unit column and zeroed codes.
fn resample_dictionary_columns(
    state: &mut SparseCodingState,
    activity: &mut [u64],
    seed: u64,
) -> usize {
    let dead: Vec<usize> = activity
        .iter()
        .enumerate()
        .filter_map(|(j, &c)| (c == 0).then_some(j))
        .collect();
    activity.iter_mut().for_each(|c| *c = 0);
    if dead.is_empty() {
        return 0;
    }
    let m = state.dictionary.n_measurements();
    let mut rng = rng::stream(seed, Stream::Resample);
    for &j in &dead {
        state.dictionary.matrix_mut().column_mut(j).fill(0.0);
        state.train_codes.column_mut(j).fill(0.0);
    }
    // zero columns are redrawn as random unit vectors
    normalize_decoder(&mut state.dictionary, &mut rng);
    debug_assert!(m > 0);
    dead.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, GenConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng as _;

    #[test]
    fn cosine_loss_examples() {
        let s = array![[1.0, 0.0, -2.0], [0.0, 3.0, 1.0]];
        assert_abs_diff_eq!(
            loss_known_codes(s.view(), s.view()).unwrap().value,
            0.0,
            epsilon = 1e-15
        );
        let doubled = s.mapv(|v| 2.0 * v);
        assert_abs_diff_eq!(
            loss_known_codes(doubled.view(), s.view()).unwrap().value,
            0.0,
            epsilon = 1e-15
        );
        let orth = array![[2.0, 5.0, 1.0], [1.0, 0.0, 0.0]];
        assert_abs_diff_eq!(
            loss_known_codes(orth.view(), s.view()).unwrap().value,
            1.0,
            epsilon = 1e-15
        );
        let zero = array![[0.0, 0.0, 0.0], [0.0, 3.0, 1.0]];
        let l = loss_known_codes(zero.view(), s.view()).unwrap();
        assert_eq!(l.degenerate_rows, 1);
        assert_abs_diff_eq!(l.value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn reconstruction_loss_examples() {
        let x = array![[1.0, 2.0]];
        let zero_codes = array![[0.0, 0.0]];
        assert_eq!(
            loss_reconstruction(x.view(), x.view(), zero_codes.view(), 1.0).unwrap(),
            0.0
        );
        let z = array![[0.0, 0.0]];
        let codes = array![[1.0, -1.0]];
        assert_eq!(
            loss_reconstruction(z.view(), z.view(), codes.view(), 0.5).unwrap(),
            1.0
        );
    }

    #[test]
    fn reconstruction_loss_matches_scalar_loop() {
        let mut rng = rng::stream(5, Stream::Probe);
        let mut r = || rng.random_range(-1.0..1.0);
        let x: Array2<f64> = Array2::from_shape_simple_fn((7, 3), &mut r);
        let x_hat: Array2<f64> = Array2::from_shape_simple_fn((7, 3), &mut r);
        let codes: Array2<f64> = Array2::from_shape_simple_fn((7, 5), &mut r);
        let mut want = 0.0;
        for i in 0..7 {
            let mut per = 0.0;
            for j in 0..3 {
                per += (x[[i, j]] - x_hat[[i, j]]).powi(2);
            }
            for j in 0..5 {
                per += 0.3 * codes[[i, j]].abs();
            }
            want += per;
        }
        want /= 7.0;
        let got = loss_reconstruction(x.view(), x_hat.view(), codes.view(), 0.3).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn applicability_table() {
        use Method::*;
        let mlp = Mlp { hidden: 8 };
        assert!(Scenario::KnownCodes.supports(Sae) && Scenario::KnownCodes.supports(mlp));
        assert!(
            !Scenario::KnownCodes.supports(SparseCoding) && !Scenario::KnownCodes.supports(SaeIto)
        );
        assert!(
            Scenario::KnownDictionary.supports(SaeIto)
                && !Scenario::KnownDictionary.supports(SparseCoding)
        );
        assert!([Sae, mlp, SparseCoding, SaeIto]
            .iter()
            .all(|&m| Scenario::UnknownBoth.supports(m)));
        let ds = generate_dataset(&GenConfig::new(6, 3, 2, 20, 0)).unwrap();
        let err = train(&ds, &TrainConfig::new(Scenario::KnownCodes, SparseCoding)).unwrap_err();
        assert!(matches!(err, Error::NotApplicable { .. }));
    }

    #[test]
    fn method_labels_round_trip() {
        for m in [
            Method::Sae,
            Method::Mlp { hidden: 256 },
            Method::SparseCoding,
            Method::SaeIto,
        ] {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
        assert_eq!(
            "unknown-both".parse::<Scenario>().unwrap(),
            Scenario::UnknownBoth
        );
    }

    #[test]
    fn single_step_keeps_unit_columns() {
        let ds = generate_dataset(&GenConfig::new(8, 4, 2, 64, 1)).unwrap();
        let cfg = TrainConfig {
            eval_every: 1,
            ..TrainConfig::new(Scenario::UnknownBoth, Method::Sae).with_steps(1)
        };
        let out = train(&ds, &cfg).unwrap();
        assert_eq!(
            out.trace.rows.iter().map(|r| r.step).collect::<Vec<_>>(),
            vec![0, 1]
        );
        assert!(out.trained.dictionary().max_norm_deviation() < 1e-6);
        assert!(train(&ds, &cfg.clone().with_steps(0)).is_err());
    }

    #[test]
    fn known_dictionary_freezes_decoder() {
        let ds = generate_dataset(&GenConfig::new(8, 4, 2, 64, 2)).unwrap();
        let cfg = TrainConfig {
            eval_every: 5,
            ..TrainConfig::new(Scenario::KnownDictionary, Method::Mlp { hidden: 6 }).with_steps(10)
        };
        let out = train(&ds, &cfg).unwrap();
        assert_eq!(out.trained.dictionary().matrix(), ds.dictionary.matrix());
    }

    #[test]
    fn oracle_codes_score_perfectly() {
        let ds = generate_dataset(&GenConfig::new(8, 4, 2, 64, 3)).unwrap();
        let (_, test) = ds.train_test();
        let x_hat = decode(&ds.dictionary, test.s.view(), None).unwrap();
        assert!(x_hat
            .iter()
            .zip(test.x.iter())
            .all(|(a, b)| (a - b).abs() < 1e-12));
        let (score, _) = mcc(test.s.view(), test.s.view(), MatchMode::Auto).unwrap();
        assert_abs_diff_eq!(score, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ito_records_zero_training_flops() {
        let ds = generate_dataset(&GenConfig::new(8, 4, 2, 64, 4)).unwrap();
        let mut cfg = TrainConfig::new(Scenario::KnownDictionary, Method::SaeIto).with_steps(4);
        cfg.eval_every = 2;
        cfg.eval.infer.steps = 10;
        let out = train(&ds, &cfg).unwrap();
        assert!(out.trace.rows.iter().all(|r| r.flops_train_cum == 0.0));
        assert!(out.trace.rows.iter().all(|r| r.flops_inference > 0.0));
    }

    #[test]
    fn resampling_runs() {
        let ds = generate_dataset(&GenConfig::new(8, 4, 2, 64, 4)).unwrap();
        let mut cfg = TrainConfig::new(Scenario::UnknownBoth, Method::Sae).with_steps(6);
        cfg.resample_every = Some(3);
        cfg.eval_every = 3;
        let out = train(&ds, &cfg).unwrap();
        assert!(out.trained.dictionary().max_norm_deviation() < 1e-6);
        let mut sc = TrainConfig::new(Scenario::UnknownBoth, Method::SparseCoding).with_steps(6);
        sc.resample_every = Some(3);
        sc.eval.infer.steps = 5;
        train(&ds, &sc).unwrap();
    }

    #[test]
    fn minibatch_sparse_coding_touches_only_batch_rows() {
        let ds = generate_dataset(&GenConfig::new(8, 4, 2, 64, 5)).unwrap();
        let mut cfg = TrainConfig::new(Scenario::UnknownBoth, Method::SparseCoding).with_steps(1);
        cfg.batch = BatchSize::Size(4);
        cfg.eval.infer.steps = 2;
        let out = train(&ds, &cfg).unwrap();
        let Trained::SparseCoding(state) = out.trained else {
            unreachable!()
        };
        let init = initial_codes(cfg.code_init, 32, 8, cfg.seed).unwrap();
        let changed = (0..32)
            .filter(|&i| state.train_codes.row(i) != init.row(i))
            .count();
        assert_eq!(changed, 4);
    }

    fn fd_check<A: Autoencoder>(model: &A, loss: impl Fn(&A) -> f64, grads: &[Vec<f64>]) {
        let h = 1e-5;
        let mut probe = model.clone();
        let n_tensors = probe.parameters_mut().len();
        for t in 0..n_tensors {
            let len = probe.parameters_mut()[t].len();
            for i in 0..len {
                let orig = probe.parameters_mut()[t][i];
                probe.parameters_mut()[t][i] = orig + h;
                let up = loss(&probe);
                probe.parameters_mut()[t][i] = orig - h;
                let down = loss(&probe);
                probe.parameters_mut()[t][i] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads[t][i];
                let scale = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    (fd - an).abs() / scale < 1e-4,
                    "tensor {t} entry {i}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng::stream(11, Stream::Probe);
        for case in 0..6u64 {
            let (m, n) = (3 + case as usize % 3, 4 + case as usize % 3);
            let x: Array2<f64> =
                Array2::from_shape_simple_fn((5, m), || rng.random_range(-1.0..1.0));
            let s: Array2<f64> =
                Array2::from_shape_simple_fn((5, n), || rng.random_range(-1.0..1.0));
            let sae = SaeModel::init(m, n, case % 2 == 0, case);
            let mlp = MlpModel::init(m, n, &[5], case % 2 == 1, case);
            let recon = |model: &SaeModel| {
                let c = model.encode(x.view()).unwrap().codes;
                let xh = decode(model.decoder(), c.view(), model.decoder_bias()).unwrap();
                loss_reconstruction(x.view(), xh.view(), c.view(), 0.1).unwrap()
            };
            let (_, g) = reconstruction_loss_and_grads(&sae, x.view(), 0.1).unwrap();
            fd_check(&sae, recon, &g);
            let recon_mlp = |model: &MlpModel| {
                let c = model.encode(x.view()).unwrap().codes;
                let xh = decode(model.decoder(), c.view(), model.decoder_bias()).unwrap();
                loss_reconstruction(x.view(), xh.view(), c.view(), 0.1).unwrap()
            };
            let (_, g) = reconstruction_loss_and_grads(&mlp, x.view(), 0.1).unwrap();
            fd_check(&mlp, recon_mlp, &g);
            let cos = |model: &MlpModel| {
                loss_known_codes(model.encode(x.view()).unwrap().codes.view(), s.view())
                    .unwrap()
                    .value
            };
            let (_, g) = known_codes_loss_and_grads(&mlp, x.view(), s.view()).unwrap();
            fd_check(&mlp, cos, &g);
        }
    }
}
