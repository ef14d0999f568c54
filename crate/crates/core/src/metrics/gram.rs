use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datagen::Dictionary;
use crate::models::SaeModel;

/// Singular values at or below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Tolerance when checking whether `ReLU(S')` reproduces the sources.
const RECOVERY_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GramAnalysis {
    /// `DᵀD`, `N × N`.
    pub gram: Array2<f64>,
    pub max_offdiag: f64,
    /// `‖DᵀD - I‖_F`.
    pub identity_deviation: f64,
}

pub fn gram_analysis(dictionary: &Dictionary) -> GramAnalysis {
    let d = dictionary.matrix();
    let gram = d.t().dot(d);
    let n = gram.nrows();
    let mut max_offdiag = 0.0f64;
    let mut dev = 0.0;
    for ((i, j), &g) in gram.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        dev += (g - target) * (g - target);
        if i != j {
            max_offdiag = max_offdiag.max(g.abs());
        }
    }
    debug_assert_eq!(gram.ncols(), n);
    GramAnalysis {
        gram,
        max_offdiag,
        identity_deviation: dev.sqrt(),
    }
}

/// Numerical evidence that an SAE encoder cannot invert every sparse source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankWitness {
    /// Numerical rank of the `N × N` pre-activation matrix of the one-hot sources.
    pub rank: usize,
    pub n_sources: usize,
    /// True when some one-hot or two-hot source is not reproduced by `ReLU`.
    pub gap_certificate: bool,
    /// Number of probe sources that were not reproduced.
    pub failures: usize,
    /// Largest absolute deviation `|ReLU(σ W) - |σ||` over the probes.
    pub max_violation: f64,
}

/// Feeds the one-hot sources `S = I_N` through `D_probe` and the SAE encoder
/// (`S' = S D_probeᵀ W_eᵀ`), reports the numerical rank of `S'` and checks
/// whether `ReLU` of the pre-activations reproduces every one-hot source and
/// every sum of two of them. The encoder bias, if any, is ignored.
pub fn sae_rank_witness(sae: &SaeModel, probe: &Dictionary) -> RankWitness {
    let n = probe.n_features();
    // rows of S are the one-hot sources, so S D_probeᵀ is just D_probeᵀ
    let preacts = probe.matrix().t().dot(&sae.encoder.weight.t());
    let rank = numerical_rank(preacts.view());

    let mut failures = 0;
    let mut max_violation = 0.0f64;
    let mut check = |support: &[usize]| {
        let mut worst = 0.0f64;
        for j in 0..preacts.ncols() {
            let z: f64 = support.iter().map(|&i| preacts[[i, j]]).sum();
            let want = if support.contains(&j) { 1.0 } else { 0.0 };
            worst = worst.max((z.max(0.0) - want).abs());
        }
        max_violation = max_violation.max(worst);
        if worst > RECOVERY_TOLERANCE {
            failures += 1;
        }
    };
    for i in 0..n {
        check(&[i]);
    }
    for i in 0..n {
        for j in i + 1..n {
            check(&[i, j]);
        }
    }
    RankWitness {
        rank,
        n_sources: n,
        gap_certificate: failures > 0,
        failures,
        max_violation,
    }
}

pub(crate) fn numerical_rank(a: ArrayView2<'_, f64>) -> usize {
    let (r, c) = a.dim();
    if r == 0 || c == 0 {
        return 0;
    }
    let m = DMatrix::from_fn(r, c, |i, j| a[[i, j]]);
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}
