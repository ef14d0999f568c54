//! Recovery metrics: mean correlation coefficient under an optimal matching,
//! sparsity statistics, decoder Gram analysis and the SAE rank witness.

mod assignment;
mod correlation;
mod gram;
mod mcc;
mod sparsity;

pub use assignment::{greedy_assignment, hungarian_max};
pub use correlation::correlation_matrix;
pub use gram::{gram_analysis, sae_rank_witness, GramAnalysis, RankWitness, RANK_TOLERANCE};
pub use mcc::{dictionary_mcc, mcc, MatchMode, MatchResult};
pub use sparsity::{sparsity_stats, SparsityStats};

use serde::{Deserialize, Serialize};

/// One evaluation of a trained artefact on held-out data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsRecord {
    pub latent_mcc: f64,
    pub dict_mcc: f64,
    /// Mean squared error per observation entry.
    pub mse: f64,
    pub l0_mean: f64,
    pub l1_mean: f64,
    pub dead_fraction: f64,
}
