//! Oracles shared by the integration tests.
#![allow(dead_code)]

pub mod opcount;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Pearson correlation of two columns, written as plain loops.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

fn column(a: ArrayView2<'_, f64>, j: usize) -> Vec<f64> {
    a.column(j).to_vec()
}

fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.clone();
        let head = rest.remove(i);
        for mut p in permutations(rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Maximum over all permutations of the mean |correlation| of matched columns.
pub fn brute_force_mcc(truth: ArrayView2<'_, f64>, learned: ArrayView2<'_, f64>) -> f64 {
    let p = truth.ncols();
    assert_eq!(p, learned.ncols());
    let corr: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| pearson(&column(truth, i), &column(learned, j)).abs())
                .collect()
        })
        .collect();
    permutations((0..p).collect())
        .into_iter()
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| corr[i][j])
                .sum::<f64>()
                / p as f64
        })
        .fold(0.0, f64::max)
}
