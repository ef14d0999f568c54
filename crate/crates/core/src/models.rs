//! Encoder/decoder parameterisations.
//!
//! Both encoders are stacks of affine layers with a ReLU after every layer, so
//! the SAE is simply the one-layer case. They share the linear decoder
//! `x̂ = codes · Dᵀ (+ b_d)` with unit-norm dictionary columns.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::datagen::{Dictionary, Provenance};
use crate::error::{shape_err, Result};
use crate::rng::{self, Rng, Stream};

/// Columns with a norm below this are treated as collapsed.
pub const MIN_COLUMN_NORM: f64 = 1e-12;

/// Standard deviation used when a dead latent's encoder row is redrawn.
pub const RESAMPLE_SCALE: f64 = 1e-2;

/// An affine map `y = x · Wᵀ + b` with `W` stored as `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl Dense {
    pub fn new(weight: Array2<f64>, bias: Option<Array1<f64>>) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weight.nrows() {
                return Err(shape_err(format!(
                    "bias of length {} for a layer with {} outputs",
                    b.len(),
                    weight.nrows()
                )));
            }
        }
        Ok(Dense { weight, bias })
    }

    /// Weights i.i.d. `N(0, 1/in)`, bias zero.
    pub fn init(outputs: usize, inputs: usize, use_bias: bool, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, 1.0 / (inputs as f64).sqrt()).expect("finite std");
        let weight = Array2::from_shape_simple_fn((outputs, inputs), || normal.sample(rng));
        Dense {
            weight,
            bias: use_bias.then(|| Array1::zeros(outputs)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn affine(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.inputs() {
            return Err(shape_err(format!(
                "layer expects {} inputs, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        let mut y = x.dot(&self.weight.t());
        if let Some(b) = &self.bias {
            y += b;
        }
        Ok(y)
    }
}

/// Result of an encoder forward pass. `codes = max(0, preactivations)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub codes: Array2<f64>,
    pub preactivations: Array2<f64>,
}

/// Linear-nonlinear encoder `ReLU(x W_eᵀ + b_e)` with a linear decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct SaeModel {
    /// `N × M` encoder.
    pub encoder: Dense,
    pub decoder: Dictionary,
    pub decoder_bias: Option<Array1<f64>>,
}

/// Multilayer encoder with the same decoder as [`SaeModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    pub decoder: Dictionary,
    pub decoder_bias: Option<Array1<f64>>,
}

impl SaeModel {
    pub fn new(
        encoder: Dense,
        decoder: Dictionary,
        decoder_bias: Option<Array1<f64>>,
    ) -> Result<Self> {
        let model = SaeModel {
            encoder,
            decoder,
            decoder_bias,
        };
        check_stack(model.layers(), &model.decoder, model.decoder_bias.as_ref())?;
        Ok(model)
    }

    /// Fresh model: encoder `N(0, 1/M)`, random unit-norm decoder.
    pub fn init(m: usize, n: usize, use_bias: bool, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Stream::ModelInit);
        let encoder = Dense::init(n, m, use_bias, &mut rng);
        let decoder = Dictionary::random(m, n, &mut rng, Provenance::Learned);
        SaeModel {
            encoder,
            decoder,
            decoder_bias: use_bias.then(|| Array1::zeros(m)),
        }
    }
}

impl MlpModel {
    pub fn new(
        layers: Vec<Dense>,
        decoder: Dictionary,
        decoder_bias: Option<Array1<f64>>,
    ) -> Result<Self> {
        let model = MlpModel {
            layers,
            decoder,
            decoder_bias,
        };
        check_stack(&model.layers, &model.decoder, model.decoder_bias.as_ref())?;
        Ok(model)
    }

    /// Fresh model with the given hidden widths (one entry per hidden layer).
    pub fn init(m: usize, n: usize, hidden: &[usize], use_bias: bool, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Stream::ModelInit);
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(m);
        widths.extend_from_slice(hidden);
        widths.push(n);
        let layers = widths
            .windows(2)
            .map(|w| Dense::init(w[1], w[0], use_bias, &mut rng))
            .collect();
        let decoder = Dictionary::random(m, n, &mut rng, Provenance::Learned);
        MlpModel {
            layers,
            decoder,
            decoder_bias: use_bias.then(|| Array1::zeros(m)),
        }
    }

    /// Width of the first hidden layer, or `N` for a degenerate single layer.
    pub fn hidden_width(&self) -> usize {
        self.layers[0].outputs()
    }
}

fn check_stack(
    layers: &[Dense],
    decoder: &Dictionary,
    decoder_bias: Option<&Array1<f64>>,
) -> Result<()> {
    let first = layers
        .first()
        .ok_or_else(|| shape_err("encoder needs at least one layer"))?;
    if first.inputs() != decoder.n_measurements() {
        return Err(shape_err(
            "encoder input width differs from the decoder's M",
        ));
    }
    for pair in layers.windows(2) {
        if pair[0].outputs() != pair[1].inputs() {
            return Err(shape_err("consecutive layer widths disagree"));
        }
    }
    if layers.last().map(Dense::outputs) != Some(decoder.n_features()) {
        return Err(shape_err(
            "encoder output width differs from the decoder's N",
        ));
    }
    if let Some(b) = decoder_bias {
        if b.len() != decoder.n_measurements() {
            return Err(shape_err("decoder bias length differs from M"));
        }
    }
    Ok(())
}

/// Common surface of the amortised encoders.
pub trait Autoencoder: Clone + Send + Sync {
    fn layers(&self) -> &[Dense];
    fn decoder(&self) -> &Dictionary;
    fn decoder_bias(&self) -> Option<&Array1<f64>>;
    /// Simultaneous mutable access to every parameter group.
    fn parts_mut(&mut self) -> (&mut [Dense], &mut Dictionary, Option<&mut Array1<f64>>);

    fn decoder_mut(&mut self) -> &mut Dictionary {
        self.parts_mut().1
    }

    fn encode(&self, x: ArrayView2<'_, f64>) -> Result<EncoderOutput> {
        forward_stack(self.layers(), x).map(|(out, _)| out)
    }

    fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let out = self.encode(x)?;
        decode(self.decoder(), out.codes.view(), self.decoder_bias())
    }

    /// Flat views of every parameter tensor. Encoder tensors come first (layer
    /// weight then bias, in layer order), followed by the decoder matrix and the
    /// decoder bias.
    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let (layers, decoder, bias) = self.parts_mut();
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in layers.iter_mut() {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            if let Some(b) = layer.bias.as_mut() {
                out.push(b.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(
            decoder
                .matrix_mut()
                .as_slice_mut()
                .expect("standard layout"),
        );
        if let Some(b) = bias {
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Number of leading entries of [`Autoencoder::parameters_mut`] that belong to the encoder.
    fn n_encoder_tensors(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| 1 + usize::from(l.bias.is_some()))
            .sum()
    }

    fn uses_bias(&self) -> bool {
        self.decoder_bias().is_some() || self.layers().iter().any(|l| l.bias.is_some())
    }
}

impl Autoencoder for SaeModel {
    fn layers(&self) -> &[Dense] {
        std::slice::from_ref(&self.encoder)
    }
    fn decoder(&self) -> &Dictionary {
        &self.decoder
    }
    fn decoder_bias(&self) -> Option<&Array1<f64>> {
        self.decoder_bias.as_ref()
    }
    fn parts_mut(&mut self) -> (&mut [Dense], &mut Dictionary, Option<&mut Array1<f64>>) {
        (
            std::slice::from_mut(&mut self.encoder),
            &mut self.decoder,
            self.decoder_bias.as_mut(),
        )
    }
}

impl Autoencoder for MlpModel {
    fn layers(&self) -> &[Dense] {
        &self.layers
    }
    fn decoder(&self) -> &Dictionary {
        &self.decoder
    }
    fn decoder_bias(&self) -> Option<&Array1<f64>> {
        self.decoder_bias.as_ref()
    }
    fn parts_mut(&mut self) -> (&mut [Dense], &mut Dictionary, Option<&mut Array1<f64>>) {
        (
            &mut self.layers,
            &mut self.decoder,
            self.decoder_bias.as_mut(),
        )
    }
}

pub fn sae_encode(model: &SaeModel, x: ArrayView2<'_, f64>) -> Result<EncoderOutput> {
    model.encode(x)
}

pub fn mlp_encode(model: &MlpModel, x: ArrayView2<'_, f64>) -> Result<EncoderOutput> {
    model.encode(x)
}

/// Intermediate values kept for backpropagation.
#[derive(Clone, Debug)]
pub struct StackCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    preacts: Vec<Array2<f64>>,
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

pub fn forward_stack(
    layers: &[Dense],
    x: ArrayView2<'_, f64>,
) -> Result<(EncoderOutput, StackCache)> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut preacts = Vec::with_capacity(layers.len());
    let mut h = x.to_owned();
    for layer in layers {
        let p = layer.affine(h.view())?;
        let next = relu(&p);
        inputs.push(h);
        preacts.push(p);
        h = next;
    }
    let preactivations = preacts
        .last()
        .cloned()
        .ok_or_else(|| shape_err("empty encoder"))?;
    Ok((
        EncoderOutput {
            codes: h,
            preactivations,
        },
        StackCache { inputs, preacts },
    ))
}

/// Gradient of one layer.
#[derive(Clone, Debug)]
pub struct DenseGrad {
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

/// Backpropagates `dL/dcodes` through the ReLU stack.
pub fn backward_stack(
    layers: &[Dense],
    cache: &StackCache,
    d_codes: Array2<f64>,
) -> Vec<DenseGrad> {
    let mut grads = Vec::with_capacity(layers.len());
    let mut delta = d_codes;
    for (l, layer) in layers.iter().enumerate().rev() {
        Zip::from(&mut delta)
            .and(&cache.preacts[l])
            .for_each(|d, &p| {
                if p <= 0.0 {
                    *d = 0.0;
                }
            });
        let weight = delta.t().dot(&cache.inputs[l]);
        let bias = layer.bias.as_ref().map(|_| delta.sum_axis(Axis(0)));
        if l > 0 {
            delta = delta.dot(&layer.weight);
        }
        grads.push(DenseGrad { weight, bias });
    }
    grads.reverse();
    grads
}

/// `codes · Dᵀ (+ b_d)`.
pub fn decode(
    dictionary: &Dictionary,
    codes: ArrayView2<'_, f64>,
    decoder_bias: Option<&Array1<f64>>,
) -> Result<Array2<f64>> {
    if codes.ncols() != dictionary.n_features() {
        return Err(shape_err(format!(
            "codes have {} columns but the dictionary has {} features",
            codes.ncols(),
            dictionary.n_features()
        )));
    }
    let mut out = codes.dot(&dictionary.matrix().t());
    if let Some(b) = decoder_bias {
        if b.len() != dictionary.n_measurements() {
            return Err(shape_err("decoder bias length differs from M"));
        }
        out += b;
    }
    Ok(out)
}

/// Scales every column to unit norm in place. Collapsed columns are redrawn as
/// random unit vectors; their indices are returned.
pub fn normalize_decoder(dictionary: &mut Dictionary, rng: &mut Rng) -> Vec<usize> {
    let m = dictionary.n_measurements();
    let mut reinitialised = Vec::new();
    for (j, mut col) in dictionary
        .matrix_mut()
        .columns_mut()
        .into_iter()
        .enumerate()
    {
        let norm = col.dot(&col).sqrt();
        if norm < MIN_COLUMN_NORM || !norm.is_finite() {
            let fresh = random_unit(m, rng);
            col.assign(&fresh);
            reinitialised.push(j);
        } else {
            col /= norm;
        }
    }
    reinitialised
}

fn random_unit(m: usize, rng: &mut Rng) -> Array1<f64> {
    loop {
        let v =
            Array1::from_shape_simple_fn(m, || rng.sample::<f64, _>(rand_distr::StandardNormal));
        let norm = v.dot(&v).sqrt();
        if norm > MIN_COLUMN_NORM {
            return v / norm;
        }
    }
}

/// Keeps the `k` largest-magnitude entries of every row. Ties keep the lower index.
pub fn topk_project(codes: ArrayView2<'_, f64>, k: usize) -> Result<Array2<f64>> {
    let mut out = codes.to_owned();
    topk_project_inplace(&mut out, k)?;
    Ok(out)
}

pub(crate) fn topk_project_inplace(codes: &mut Array2<f64>, k: usize) -> Result<()> {
    let n = codes.ncols();
    if k == 0 || k > n {
        return Err(crate::error::Error::Config(format!(
            "top-k needs 1 <= k <= N (k={k}, N={n})"
        )));
    }
    if k == n {
        return Ok(());
    }
    let mut order: Vec<usize> = (0..n).collect();
    for mut row in codes.rows_mut() {
        order.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
        for &j in &order[k..] {
            row[j] = 0.0;
        }
    }
    Ok(())
}

/// Redraws every latent whose activity counter is zero: a small random
/// final-layer encoder row and, when `redraw_decoder` is set, a random unit
/// decoder column. Counters are cleared. Returns the resampled latent indices.
pub fn resample_dead_latents<A: Autoencoder>(
    model: &mut A,
    activity: &mut [u64],
    seed: u64,
    redraw_decoder: bool,
) -> Vec<usize> {
    let dead: Vec<usize> = activity
        .iter()
        .enumerate()
        .filter_map(|(j, &c)| (c == 0).then_some(j))
        .collect();
    activity.iter_mut().for_each(|c| *c = 0);
    if dead.is_empty() {
        return dead;
    }
    let mut rng = rng::stream(seed, Stream::Resample);
    let normal = Normal::new(0.0, RESAMPLE_SCALE).expect("finite std");
    let (layers, decoder, _) = model.parts_mut();
    let m = decoder.n_measurements();
    let last = layers.last_mut().expect("non-empty encoder");
    for &j in &dead {
        if redraw_decoder {
            decoder
                .matrix_mut()
                .column_mut(j)
                .assign(&random_unit(m, &mut rng));
        }
        for w in last.weight.row_mut(j).iter_mut() {
            *w = normal.sample(&mut rng);
        }
        if let Some(b) = last.bias.as_mut() {
            b[j] = 0.0;
        }
    }
    dead
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    /// Straight-line matmul + clamp, independent of the stack code path.
    fn oracle_layer(w: &Array2<f64>, b: Option<&Array1<f64>>, x: &Array2<f64>) -> Array2<f64> {
        let (n, m) = x.dim();
        let out = w.nrows();
        let mut y = Array2::zeros((n, out));
        for i in 0..n {
            for o in 0..out {
                let mut acc = b.map_or(0.0, |b| b[o]);
                for c in 0..m {
                    acc += w[[o, c]] * x[[i, c]];
                }
                y[[i, o]] = if acc > 0.0 { acc } else { 0.0 };
            }
        }
        y
    }

    fn random_x(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng::stream(seed, Stream::Probe);
        Array2::from_shape_simple_fn((n, m), || rng.sample::<f64, _>(rand_distr::StandardNormal))
    }

    #[test]
    fn zero_encoder_gives_zero_codes() {
        let mut sae = SaeModel::init(4, 6, false, 1);
        sae.encoder.weight.fill(0.0);
        let out = sae_encode(&sae, random_x(5, 4, 2).view()).unwrap();
        assert!(out.codes.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inner_product_construction() {
        let x = array![[3.0, 4.0]];
        let mut sae = SaeModel::init(2, 2, false, 0);
        // row 0 = x/|x|², row 1 orthogonal to x
        sae.encoder.weight = array![[3.0 / 25.0, 4.0 / 25.0], [-4.0, 3.0]];
        let out = sae_encode(&sae, x.view()).unwrap();
        assert_abs_diff_eq!(out.codes[[0, 0]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.codes[[0, 1]], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sae_matches_oracle() {
        for use_bias in [false, true] {
            let mut sae = SaeModel::init(5, 7, use_bias, 3);
            if let Some(b) = sae.encoder.bias.as_mut() {
                b.assign(&Array1::linspace(-0.5, 0.5, 7));
            }
            let x = random_x(9, 5, 4);
            let out = sae_encode(&sae, x.view()).unwrap();
            let want = oracle_layer(&sae.encoder.weight, sae.encoder.bias.as_ref(), &x);
            for (a, b) in out.codes.iter().zip(want.iter()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
            assert_eq!(out.codes, out.preactivations.mapv(|v| v.max(0.0)));
        }
    }

    #[test]
    fn mlp_matches_oracle() {
        let mlp = MlpModel::init(4, 6, &[10, 8], true, 5);
        let x = random_x(7, 4, 6);
        let mut h = x.clone();
        for layer in &mlp.layers {
            h = oracle_layer(&layer.weight, layer.bias.as_ref(), &h);
        }
        let out = mlp_encode(&mlp, x.view()).unwrap();
        for (a, b) in out.codes.iter().zip(h.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_mlp_gives_zero_codes() {
        let mut mlp = MlpModel::init(3, 4, &[5], false, 0);
        for l in &mut mlp.layers {
            l.weight.fill(0.0);
        }
        let out = mlp_encode(&mlp, random_x(4, 3, 1).view()).unwrap();
        assert!(out.codes.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_mlp_equals_sae_on_nonnegative_preacts() {
        // H = N, second layer identity: ReLU is idempotent on non-negative values.
        let (m, n) = (3, 4);
        let mut mlp = MlpModel::init(m, n, &[n], false, 2);
        mlp.layers[1].weight = Array2::eye(n);
        let mut sae = SaeModel::init(m, n, false, 2);
        sae.encoder.weight = mlp.layers[0].weight.clone();
        let x = random_x(6, m, 8);
        assert_eq!(
            mlp_encode(&mlp, x.view()).unwrap().codes,
            sae_encode(&sae, x.view()).unwrap().codes
        );
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let sae = SaeModel::init(4, 6, false, 1);
        assert!(sae_encode(&sae, random_x(2, 5, 0).view()).is_err());
        assert!(decode(&sae.decoder, Array2::zeros((2, 5)).view(), None).is_err());
    }

    #[test]
    fn decode_identities() {
        let d = crate::datagen::generate_dictionary(3, 5, 9);
        let zeros = decode(&d, Array2::zeros((2, 5)).view(), None).unwrap();
        assert!(zeros.iter().all(|&v| v == 0.0));
        let bias = array![1.0, 2.0, 3.0];
        let biased = decode(&d, Array2::zeros((2, 5)).view(), Some(&bias)).unwrap();
        assert_eq!(biased.row(1), bias);
        let mut e = Array2::zeros((1, 5));
        e[[0, 2]] = 1.0;
        assert_eq!(
            decode(&d, e.view(), None).unwrap().row(0),
            d.matrix().column(2)
        );
    }

    #[test]
    fn normalize_three_four_five() {
        let mut d = Dictionary::from_matrix(array![[3.0, 1.0], [4.0, 0.0]], Provenance::Learned);
        let mut rng = rng::stream(0, Stream::Probe);
        assert!(normalize_decoder(&mut d, &mut rng).is_empty());
        assert_abs_diff_eq!(d.matrix()[[0, 0]], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(d.matrix()[[1, 0]], 0.8, epsilon = 1e-15);
        let before = d.clone();
        normalize_decoder(&mut d, &mut rng);
        for (a, b) in d.matrix().iter().zip(before.matrix().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_column_is_redrawn() {
        let mut d = Dictionary::from_matrix(
            array![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
            Provenance::Learned,
        );
        let mut rng = rng::stream(0, Stream::Probe);
        assert_eq!(normalize_decoder(&mut d, &mut rng), vec![1]);
        assert_abs_diff_eq!(d.column_norms()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn topk_examples() {
        let p = topk_project(array![[0.5, -2.0, 0.1, 1.0]].view(), 2).unwrap();
        assert_eq!(p, array![[0.0, -2.0, 0.0, 1.0]]);
        let tie = topk_project(array![[1.0, 1.0, 0.0]].view(), 1).unwrap();
        assert_eq!(tie, array![[1.0, 0.0, 0.0]]);
        let codes = array![[0.3, -0.1, 2.0]];
        assert_eq!(topk_project(codes.view(), 3).unwrap(), codes);
        assert!(topk_project(codes.view(), 0).is_err());
        assert!(topk_project(codes.view(), 4).is_err());
    }

    #[test]
    fn resampling() {
        let mut sae = SaeModel::init(4, 5, false, 0);
        let original = sae.clone();
        let mut busy = vec![3u64; 5];
        assert!(resample_dead_latents(&mut sae, &mut busy, 1, true).is_empty());
        assert_eq!(sae, original);

        let mut one_dead = vec![1, 1, 0, 1, 1];
        assert_eq!(
            resample_dead_latents(&mut sae, &mut one_dead, 1, true),
            vec![2]
        );
        assert!(one_dead.iter().all(|&c| c == 0));
        let changed: Vec<usize> = (0..5)
            .filter(|&j| sae.decoder.matrix().column(j) != original.decoder.matrix().column(j))
            .collect();
        assert_eq!(changed, vec![2]);
        assert!(sae.encoder.weight.row(2).iter().all(|w| w.abs() < 0.1));

        let mut all_dead = vec![0u64; 5];
        assert_eq!(
            resample_dead_latents(&mut sae, &mut all_dead, 2, true).len(),
            5
        );
        assert!(sae.decoder.max_norm_deviation() < 1e-12);

        let frozen = sae.decoder.clone();
        let mut all_dead = vec![0u64; 5];
        assert_eq!(
            resample_dead_latents(&mut sae, &mut all_dead, 3, false).len(),
            5
        );
        assert_eq!(sae.decoder, frozen);
    }

    #[test]
    fn parameter_views_cover_everything() {
        let mut mlp = MlpModel::init(3, 4, &[5], true, 0);
        assert_eq!(mlp.n_encoder_tensors(), 4);
        let sizes: Vec<usize> = mlp.parameters_mut().iter().map(|p| p.len()).collect();
        assert_eq!(sizes, vec![15, 5, 20, 4, 12, 3]);
        let mut sae = SaeModel::init(3, 4, false, 0);
        let sizes: Vec<usize> = sae.parameters_mut().iter().map(|p| p.len()).collect();
        assert_eq!(sizes, vec![12, 12]);
    }
}
