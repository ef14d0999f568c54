//! Per-sample latent optimisation against a fixed dictionary.
//!
//! Each row `s` of the code matrix is driven down the objective
//! `‖x - D s‖² + λ‖s‖₁`. Rows never interact, so the batched matrix form below
//! yields the same numbers as looping over samples.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datagen::Dictionary;
use crate::error::{shape_err, Error, Result};
use crate::models::{topk_project_inplace, Autoencoder, SaeModel};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{self, Stream};

/// Starting point of the latent optimisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentInit {
    Zeros,
    /// Codes produced by an SAE encoder; only meaningful through [`sae_ito`].
    SaeEncoder,
    /// I.i.d. `U(-scale, scale)`.
    Uniform {
        scale: f64,
    },
}

/// How a step uses the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LatentUpdate {
    /// Subgradient descent, `sign(0) = 0`.
    #[default]
    Gradient,
    /// Gradient step on the quadratic then soft-thresholding by `lr·λ` (ISTA).
    /// The step is capped at `1/L`, `L = 2σ_max(D)²`, which guarantees descent.
    Proximal,
    /// Adam on the subgradient, independent moments per code entry.
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub steps: usize,
    pub lr: f64,
    pub lambda: f64,
    pub init: LatentInit,
    #[serde(default)]
    pub topk: Option<usize>,
    /// Entries with magnitude below this are zeroed after the last step.
    pub threshold: f64,
    #[serde(default)]
    pub update: LatentUpdate,
    /// Seed for random initialisation.
    #[serde(default)]
    pub seed: u64,
}

/// Threshold used when counting active latents.
pub const DEFAULT_THRESHOLD: f64 = 1e-5;

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            steps: 1000,
            lr: 0.05,
            lambda: 1e-3,
            init: LatentInit::Zeros,
            topk: None,
            threshold: DEFAULT_THRESHOLD,
            update: LatentUpdate::Gradient,
            seed: 0,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("inference needs at least one step".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if !(self.lambda >= 0.0) || !(self.threshold >= 0.0) {
            return Err(Error::Config("lambda and threshold must be >= 0".into()));
        }
        if let LatentInit::Uniform { scale } = self.init {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(Error::Config(format!(
                    "uniform init scale must be >= 0, got {scale}"
                )));
            }
        }
        Ok(())
    }
}

/// Initial codes for the non-encoder initialisations.
pub fn initial_codes(
    init: LatentInit,
    n_samples: usize,
    n_features: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    match init {
        LatentInit::Zeros => Ok(Array2::zeros((n_samples, n_features))),
        LatentInit::Uniform { scale } => {
            let mut rng = rng::stream(seed, Stream::LatentInit);
            Ok(Array2::from_shape_simple_fn(
                (n_samples, n_features),
                || {
                    if scale == 0.0 {
                        0.0
                    } else {
                        rng.random_range(-scale..scale)
                    }
                },
            ))
        }
        LatentInit::SaeEncoder => Err(Error::Config(
            "encoder initialisation needs an SAE; use sae_ito".into(),
        )),
    }
}

/// Runs `cfg.steps` updates from the configured initialisation.
pub fn infer_codes(
    dictionary: &Dictionary,
    x: ArrayView2<'_, f64>,
    cfg: &InferConfig,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    let init = initial_codes(cfg.init, x.nrows(), dictionary.n_features(), cfg.seed)?;
    infer_codes_from(dictionary, x, init, cfg)
}

/// Runs `cfg.steps` updates starting from `init`; `cfg.init` is ignored.
pub fn infer_codes_from(
    dictionary: &Dictionary,
    x: ArrayView2<'_, f64>,
    init: Array2<f64>,
    cfg: &InferConfig,
) -> Result<Array2<f64>> {
    infer_codes_observed(dictionary, x, init, cfg, |_, _| {})
}

/// As [`infer_codes_from`], calling `observe(step, codes)` after every update
/// (before thresholding).
pub fn infer_codes_observed(
    dictionary: &Dictionary,
    x: ArrayView2<'_, f64>,
    init: Array2<f64>,
    cfg: &InferConfig,
    mut observe: impl FnMut(usize, &Array2<f64>),
) -> Result<Array2<f64>> {
    cfg.validate()?;
    let d = dictionary.matrix();
    if x.ncols() != d.nrows() {
        return Err(shape_err(format!(
            "observations have {} columns, dictionary has M={}",
            x.ncols(),
            d.nrows()
        )));
    }
    if init.dim() != (x.nrows(), d.ncols()) {
        return Err(shape_err("initial codes do not match (samples, N)"));
    }
    let mut codes = init;
    let lambda = cfg.lambda;
    let prox_lr = match cfg.update {
        LatentUpdate::Proximal => cfg.lr.min(proximal_step_bound(dictionary)),
        _ => cfg.lr,
    };
    let mut adam = (cfg.update == LatentUpdate::Adam)
        .then(|| Adam::new(AdamConfig::with_lr(cfg.lr), &[codes.len()]));

    for step in 0..cfg.steps {
        let residual = codes.dot(&d.t()) - x;
        let loss = residual.iter().map(|r| r * r).sum::<f64>()
            + lambda * codes.iter().map(|v| v.abs()).sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::NonFinite { step, loss });
        }
        let mut grad = residual.dot(d);
        grad *= 2.0;
        match cfg.update {
            LatentUpdate::Gradient => {
                Zip::from(&mut codes).and(&grad).for_each(|s, &g| {
                    *s -= cfg.lr * (g + lambda * sign(*s));
                });
            }
            LatentUpdate::Proximal => {
                let shrink = prox_lr * lambda;
                Zip::from(&mut codes).and(&grad).for_each(|s, &g| {
                    let z = *s - prox_lr * g;
                    *s = z.signum() * (z.abs() - shrink).max(0.0);
                });
            }
            LatentUpdate::Adam => {
                Zip::from(&mut grad)
                    .and(&codes)
                    .for_each(|g, &s| *g += lambda * sign(s));
                let adam = adam.as_mut().expect("created for Adam updates");
                adam.tick();
                adam.update_range(
                    0,
                    0,
                    codes.as_slice_mut().expect("standard layout"),
                    grad.as_slice().expect("standard layout"),
                );
            }
        }
        if let Some(k) = cfg.topk {
            topk_project_inplace(&mut codes, k)?;
        }
        observe(step + 1, &codes);
    }
    apply_threshold(&mut codes, cfg.threshold);
    Ok(codes)
}

/// `1/L` for the quadratic `‖x - Ds‖²`, whose gradient is `L`-Lipschitz with
/// `L = 2σ_max(D)²`.
pub fn proximal_step_bound(dictionary: &Dictionary) -> f64 {
    let d = dictionary.matrix();
    let m = nalgebra::DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| d[[i, j]]);
    let sigma = m.singular_values().iter().cloned().fold(0.0, f64::max);
    if sigma == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * sigma * sigma)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn apply_threshold(codes: &mut Array2<f64>, threshold: f64) {
    if threshold > 0.0 {
        codes.mapv_inplace(|v| if v.abs() < threshold { 0.0 } else { v });
    }
}

/// Inference-time optimisation on an SAE's decoder, started from its encoder's codes.
pub fn sae_ito(sae: &SaeModel, x: ArrayView2<'_, f64>, cfg: &InferConfig) -> Result<Array2<f64>> {
    let init = sae.encode(x)?.codes;
    infer_codes_from(sae.decoder(), x, init, cfg)
}

/// `‖x_i - D s_i‖²` for every row.
pub fn per_sample_sq_error(
    dictionary: &Dictionary,
    x: ArrayView2<'_, f64>,
    codes: &Array2<f64>,
) -> Vec<f64> {
    let residual = codes.dot(&dictionary.matrix().t()) - x;
    residual.map_axis(Axis(1), |r| r.dot(&r)).to_vec()
}
