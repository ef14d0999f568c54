use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    /// Mean count per row of entries with `|v| > threshold`.
    pub l0_mean: f64,
    /// Mean per-row sum of `|v|`.
    pub l1_mean: f64,
    /// Fraction of columns that never exceed the threshold.
    pub dead_fraction: f64,
}

pub fn sparsity_stats(codes: ArrayView2<'_, f64>, threshold: f64) -> SparsityStats {
    let (n, p) = codes.dim();
    if n == 0 || p == 0 {
        return SparsityStats {
            l0_mean: 0.0,
            l1_mean: 0.0,
            dead_fraction: if p == 0 { 0.0 } else { 1.0 },
        };
    }
    let active = codes.iter().filter(|v| v.abs() > threshold).count();
    let l1: f64 = codes.iter().map(|v| v.abs()).sum();
    let dead = codes
        .columns()
        .into_iter()
        .filter(|c| c.iter().all(|v| v.abs() <= threshold))
        .count();
    SparsityStats {
        l0_mean: active as f64 / n as f64,
        l1_mean: l1 / n as f64,
        dead_fraction: dead as f64 / p as f64,
    }
}
