//! Maximum-weight bipartite matching.

use ndarray::{Array2, ArrayView2};

/// Hungarian method (shortest augmenting paths with potentials) maximising the
/// total weight. Rectangular inputs are handled directly; the result has
/// `min(rows, cols)` pairs `(row, col)` sorted by row.
pub fn hungarian_max(weights: ArrayView2<'_, f64>) -> Vec<(usize, usize)> {
    let (rows, cols) = weights.dim();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let mut pairs: Vec<(usize, usize)> = hungarian_max(weights.t())
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        return pairs;
    }
    // minimise the negated weights; rows <= cols from here on
    let cost: Array2<f64> = weights.mapv(|w| -w);
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j] = row matched to column j (1-based, 0 = free)
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] > 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Repeatedly takes the largest remaining entry and removes its row and column.
/// Ties go to the lower row, then the lower column.
pub fn greedy_assignment(weights: ArrayView2<'_, f64>) -> Vec<(usize, usize)> {
    let (rows, cols) = weights.dim();
    let mut entries: Vec<(usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .collect();
    entries.sort_by(|&(a, b), &(c, d)| {
        weights[[c, d]]
            .total_cmp(&weights[[a, b]])
            .then((a, b).cmp(&(c, d)))
    });
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut pairs = Vec::with_capacity(rows.min(cols));
    for (i, j) in entries {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            pairs.push((i, j));
            if pairs.len() == rows.min(cols) {
                break;
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn total(w: &Array2<f64>, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(i, j)| w[[i, j]]).sum()
    }

    #[test]
    fn small_square() {
        // minimum-cost version of this matrix totals 5; negate for max
        let w = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]].mapv(|v: f64| -v);
        let pairs = hungarian_max(w.view());
        assert_eq!(total(&w, &pairs), -5.0);
    }

    #[test]
    fn rectangular_both_ways() {
        let w = array![[0.1, 0.9, 0.3, 0.2], [0.8, 0.85, 0.1, 0.0]];
        let pairs = hungarian_max(w.view());
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        let t = w.t().to_owned();
        let pairs_t = hungarian_max(t.view());
        assert_eq!(pairs_t, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        let w = array![[1.0, 0.9], [0.9, 0.0]];
        let g = greedy_assignment(w.view());
        let h = hungarian_max(w.view());
        assert_eq!(total(&w, &g), 1.0);
        assert_eq!(total(&w, &h), 1.8);
    }

    #[test]
    fn empty() {
        let w = Array2::<f64>::zeros((0, 3));
        assert!(hungarian_max(w.view()).is_empty());
        assert!(greedy_assignment(w.view()).is_empty());
    }
}
