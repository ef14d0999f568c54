use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{shape_err, Error, Result};

/// Pearson correlation between every column of `a` and every column of `b`.
/// A zero-variance column correlates 0 with everything.
pub fn correlation_matrix(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(shape_err(format!(
            "row counts differ: {} vs {}",
            n,
            b.nrows()
        )));
    }
    if n < 2 {
        return Err(Error::Config(format!(
            "correlation needs at least 2 rows, got {n}"
        )));
    }
    let za = standardise(a);
    let zb = standardise(b);
    let mut c = za.t().dot(&zb);
    c.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    Ok(c)
}

/// Centres each column and scales it to unit Euclidean norm. Columns that are
/// constant up to rounding become zero.
fn standardise(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let mean = a.mean_axis(Axis(0)).expect("non-empty");
    let mut z = &a - &mean;
    let root_n = (a.nrows() as f64).sqrt();
    for (mut col, raw) in z.columns_mut().into_iter().zip(a.columns()) {
        let norm = col.dot(&col).sqrt();
        let magnitude = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm > 1e-12 * magnitude * root_n && norm > 0.0 {
            col /= norm;
        } else {
            col.fill(0.0);
        }
    }
    z
}
