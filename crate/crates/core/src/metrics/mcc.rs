use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::assignment::{greedy_assignment, hungarian_max};
use super::correlation::correlation_matrix;
use crate::datagen::Dictionary;
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Hungarian when both sides have the same width, greedy otherwise.
    #[default]
    Auto,
    /// Optimal matching, padded implicitly when the widths differ.
    Hungarian,
    Greedy,
}

/// A one-to-one matching between true and learned features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(true_index, learned_index)` pairs sorted by true index.
    pub pairs: Vec<(usize, usize)>,
    /// `|correlation|` of each pair.
    pub abs_corr: Vec<f64>,
}

/// Mean absolute Pearson correlation over the matched pairs, with the number of
/// pairs `min(p, q)` as the divisor.
pub fn mcc(
    true_feats: ArrayView2<'_, f64>,
    learned_feats: ArrayView2<'_, f64>,
    mode: MatchMode,
) -> Result<(f64, MatchResult)> {
    let abs_corr = correlation_matrix(true_feats, learned_feats)?.mapv(f64::abs);
    let (p, q) = abs_corr.dim();
    let pairs = match mode {
        MatchMode::Hungarian => hungarian_max(abs_corr.view()),
        MatchMode::Greedy => greedy_assignment(abs_corr.view()),
        MatchMode::Auto if p == q => hungarian_max(abs_corr.view()),
        MatchMode::Auto => greedy_assignment(abs_corr.view()),
    };
    let values: Vec<f64> = pairs.iter().map(|&(i, j)| abs_corr[[i, j]]).collect();
    let score = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    Ok((
        score,
        MatchResult {
            pairs,
            abs_corr: values,
        },
    ))
}

/// MCC between dictionary columns, correlating across the `M` coordinates.
pub fn dictionary_mcc(truth: &Dictionary, learned: &Dictionary, mode: MatchMode) -> Result<f64> {
    if truth.n_measurements() != learned.n_measurements() {
        return Err(shape_err("dictionaries have different M"));
    }
    mcc(truth.view(), learned.view(), mode).map(|(score, _)| score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dictionary, Provenance};
    use crate::rng::{self, Stream};
    use approx::assert_abs_diff_eq;
    use ndarray::{Array2, Axis};
    use rand::Rng as _;

    fn random(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng::stream(seed, Stream::Probe);
        Array2::from_shape_simple_fn((n, p), || rng.random_range(-1.0..1.0))
    }

    /// Maximum over all permutations of the mean |correlation|.
    fn brute_force(abs_corr: &Array2<f64>) -> f64 {
        fn go(c: &Array2<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == c.nrows() {
                *best = best.max(acc);
                return;
            }
            for j in 0..c.ncols() {
                if !used[j] {
                    used[j] = true;
                    go(c, row + 1, used, acc + c[[row, j]], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        go(
            abs_corr,
            0,
            &mut vec![false; abs_corr.ncols()],
            0.0,
            &mut best,
        );
        best / abs_corr.nrows() as f64
    }

    #[test]
    fn permutation_and_sign() {
        let a = random(30, 4, 1);
        let permuted = a.select(Axis(1), &[2, 0, 3, 1]);
        let (score, m) = mcc(a.view(), permuted.view(), MatchMode::Hungarian).unwrap();
        assert_abs_diff_eq!(score, 1.0, epsilon = 1e-12);
        assert_eq!(m.pairs, vec![(0, 1), (1, 3), (2, 0), (3, 2)]);
        let flipped = a.mapv(|v| -v);
        assert_abs_diff_eq!(
            mcc(a.view(), flipped.view(), MatchMode::Auto).unwrap().0,
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn hungarian_equals_enumeration_6x4() {
        let a = random(6, 4, 2);
        let b = random(6, 4, 3);
        let (score, _) = mcc(a.view(), b.view(), MatchMode::Hungarian).unwrap();
        let c = correlation_matrix(a.view(), b.view())
            .unwrap()
            .mapv(f64::abs);
        assert_abs_diff_eq!(score, brute_force(&c), epsilon = 1e-12);
    }

    #[test]
    fn rectangular_uses_min_width() {
        let a = random(20, 3, 4);
        let b = random(20, 5, 5);
        let (_, m) = mcc(a.view(), b.view(), MatchMode::Auto).unwrap();
        assert_eq!(m.pairs.len(), 3);
        let (_, m) = mcc(b.view(), a.view(), MatchMode::Hungarian).unwrap();
        assert_eq!(m.pairs.len(), 3);
    }

    #[test]
    fn dictionary_examples() {
        let d = generate_dictionary(8, 6, 0);
        let permuted = Dictionary::from_matrix(
            d.matrix().select(Axis(1), &[5, 4, 3, 2, 1, 0]),
            Provenance::Learned,
        );
        assert_abs_diff_eq!(
            dictionary_mcc(&d, &permuted, MatchMode::Auto).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let neg = Dictionary::from_matrix(d.matrix().mapv(|v| -v), Provenance::Learned);
        assert_abs_diff_eq!(
            dictionary_mcc(&d, &neg, MatchMode::Auto).unwrap(),
            1.0,
            epsilon = 1e-12
        );

        let other = generate_dictionary(8, 6, 1);
        let c = correlation_matrix(d.view(), other.view())
            .unwrap()
            .mapv(f64::abs);
        assert_abs_diff_eq!(
            dictionary_mcc(&d, &other, MatchMode::Hungarian).unwrap(),
            brute_force(&c),
            epsilon = 1e-12
        );
        assert!(dictionary_mcc(&d, &generate_dictionary(7, 6, 0), MatchMode::Auto).is_err());
    }
}
