//! Sparse encoders versus iterative sparse inference on synthetic
//! compressed-sensing data.
//!
//! Data are `x = D s` with a random unit-norm dictionary `D` (`M × N`, `M < N`)
//! and `K`-sparse codes `s`. The crate trains linear-nonlinear sparse
//! autoencoders, MLP encoders, sparse coding and SAE-initialised inference-time
//! optimisation, scores them with the mean correlation coefficient against the
//! true codes and dictionary, and counts the floating-point work each spends.
//!
//! ```
//! use sparsebench::{generate_dataset, train, GenConfig, Method, Scenario, TrainConfig};
//!
//! let data = generate_dataset(&GenConfig::new(8, 4, 2, 64, 0)).unwrap();
//! let cfg = TrainConfig::new(Scenario::KnownDictionary, Method::Sae).with_steps(20);
//! let outcome = train(&data, &cfg).unwrap();
//! let last = outcome.trace.last().unwrap();
//! assert_eq!(last.step, 20);
//! assert!(last.metrics.latent_mcc >= 0.0 && last.metrics.latent_mcc <= 1.0);
//! ```

pub mod datagen;
pub mod error;
pub mod experiments;
pub mod flops;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod rng;
pub mod training;

pub use datagen::{
    generate_codes, generate_dataset, generate_dictionary, recovery_boundary, CodeDistribution,
    Dataset, Dictionary, GenConfig, Provenance, Split,
};
pub use error::{Error, Result};
pub use flops::{ledger, FlopParams, FlopsLedger, Phase};
pub use inference::{infer_codes, sae_ito, InferConfig, LatentInit, LatentUpdate};
pub use metrics::{dictionary_mcc, gram_analysis, mcc, sae_rank_witness, MatchMode, MetricsRecord};
pub use models::{Autoencoder, MlpModel, SaeModel};
pub use training::{
    evaluate, train, BatchSize, EvalConfig, Method, Scenario, TrainConfig, TrainOutcome,
    TrainTrace, Trained,
};
