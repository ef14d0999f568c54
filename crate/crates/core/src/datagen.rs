//! Synthetic compressed-sensing data: a unit-norm dictionary, K-sparse codes and
//! noiseless observations `X = S Dᵀ`.
//!
//! Rows are samples throughout the crate: `X` is `n × M`, `S` is `n × N` and a
//! dictionary is an `M × N` matrix whose columns are the features.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};

/// How the support and magnitudes of each code row are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodeDistribution {
    /// Support uniform without replacement, values standard normal.
    #[default]
    Uniform,
    /// Dimension `j` has rank `j + 1`; it is selected with probability
    /// proportional to `rank^-alpha` and its value is scaled by `rank^-alpha`.
    Zipf { alpha: f64 },
}

impl CodeDistribution {
    /// Normalised selection weights over the `n` dimensions.
    pub fn selection_weights(&self, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = match *self {
            CodeDistribution::Uniform => vec![1.0; n],
            CodeDistribution::Zipf { alpha } => (1..=n).map(|r| (r as f64).powf(-alpha)).collect(),
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Number of sparse sources `N`.
    pub n_sources: usize,
    /// Measurement dimension `M`.
    pub n_measurements: usize,
    /// Active components per sample `K`.
    pub k_active: usize,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub distribution: CodeDistribution,
}

impl GenConfig {
    pub fn new(
        n_sources: usize,
        n_measurements: usize,
        k_active: usize,
        n_samples: usize,
        seed: u64,
    ) -> Self {
        GenConfig {
            n_sources,
            n_measurements,
            k_active,
            n_samples,
            seed,
            distribution: CodeDistribution::Uniform,
        }
    }

    pub fn with_distribution(mut self, distribution: CodeDistribution) -> Self {
        self.distribution = distribution;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sources == 0 || self.n_measurements == 0 || self.n_samples == 0 {
            return Err(Error::Config(
                "N, M and sample count must be positive".into(),
            ));
        }
        if self.k_active == 0 || self.k_active > self.n_sources {
            return Err(Error::Config(format!(
                "K must satisfy 1 <= K <= N (K={}, N={})",
                self.k_active, self.n_sources
            )));
        }
        if let CodeDistribution::Zipf { alpha } = self.distribution {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::Config(format!(
                    "zipf alpha must be positive, got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GroundTruth,
    Learned,
}

/// An `M × N` matrix whose columns are feature directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
    provenance: Provenance,
}

impl Dictionary {
    /// Wraps a matrix as-is. No normalisation is applied.
    pub fn from_matrix(atoms: Array2<f64>, provenance: Provenance) -> Self {
        Dictionary { atoms, provenance }
    }

    /// I.i.d. standard normal entries, columns scaled to unit norm.
    pub fn random(m: usize, n: usize, rng: &mut Rng, provenance: Provenance) -> Self {
        let mut atoms =
            Array2::from_shape_simple_fn((m, n), || rng.sample::<f64, _>(StandardNormal));
        for mut col in atoms.columns_mut() {
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col /= norm;
            } else {
                let fill = 1.0 / (col.len() as f64).sqrt();
                col.fill(fill);
            }
        }
        Dictionary { atoms, provenance }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.atoms
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.atoms
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Measurement dimension `M`.
    pub fn n_measurements(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of features `N`.
    pub fn n_features(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.atoms
            .columns()
            .into_iter()
            .map(|c| c.dot(&c).sqrt())
            .collect()
    }

    /// Largest `|‖d_j‖ - 1|` over the columns.
    pub fn max_norm_deviation(&self) -> f64 {
        self.column_norms()
            .into_iter()
            .map(|n| (n - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Paired observations and ground-truth codes plus the generating dictionary.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Observations, `n × M`.
    pub x: Array2<f64>,
    /// Ground-truth codes, `n × N`.
    pub s: Array2<f64>,
    pub dictionary: Dictionary,
    pub config: GenConfig,
}

/// A contiguous slice of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub x: Array2<f64>,
    pub s: Array2<f64>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// First half for training, second half for testing. Samples are i.i.d. so
    /// a contiguous split is unbiased.
    pub fn train_test(&self) -> (Split, Split) {
        let cut = self.len() / 2;
        let train = Split {
            x: self.x.slice(s![..cut, ..]).to_owned(),
            s: self.s.slice(s![..cut, ..]).to_owned(),
        };
        let test = Split {
            x: self.x.slice(s![cut.., ..]).to_owned(),
            s: self.s.slice(s![cut.., ..]).to_owned(),
        };
        (train, test)
    }
}

pub fn generate_dictionary(m: usize, n: usize, seed: u64) -> Dictionary {
    let mut rng = rng::stream(seed, Stream::Dictionary);
    Dictionary::random(m, n, &mut rng, Provenance::GroundTruth)
}

pub fn generate_codes(cfg: &GenConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, Stream::Codes);
    let (n, k) = (cfg.n_sources, cfg.k_active);
    let mut codes = Array2::zeros((cfg.n_samples, n));
    for mut row in codes.axis_iter_mut(Axis(0)) {
        match cfg.distribution {
            CodeDistribution::Uniform => {
                for j in index::sample(&mut rng, n, k) {
                    row[j] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            CodeDistribution::Zipf { alpha } => {
                let picks =
                    index::sample_weighted(&mut rng, n, |j| ((j + 1) as f64).powf(-alpha), k)
                        .map_err(|e| Error::Config(format!("zipf weights: {e}")))?;
                for j in picks {
                    let scale = ((j + 1) as f64).powf(-alpha);
                    row[j] = rng.sample::<f64, _>(StandardNormal) * scale;
                }
            }
        }
    }
    Ok(codes)
}

pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let dictionary = generate_dictionary(cfg.n_measurements, cfg.n_sources, cfg.seed);
    let s = generate_codes(cfg)?;
    let x = s.dot(&dictionary.matrix().t());
    Ok(Dataset {
        x,
        s,
        dictionary,
        config: cfg.clone(),
    })
}

/// Compressed-sensing recovery threshold `K ln(N/K)`.
pub fn recovery_boundary(n: usize, k: usize) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "recovery boundary needs 1 <= K <= N (K={k}, N={n})"
        )));
    }
    Ok(k as f64 * (n as f64 / k as f64).ln())
}
