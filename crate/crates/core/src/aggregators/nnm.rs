use crate::error::{ensure, Result};
use crate::vector::{common_dim, Vector};

/// Indices of the `count` inputs nearest to `pivot`, closest first.
/// Distance ties go to the smaller index.
pub fn nearest_neighbors(vectors: &[Vector], pivot: &Vector, count: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = vectors
        .iter()
        .enumerate()
        .map(|(j, v)| (v.distance_sq(pivot), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(count).map(|(_, j)| j).collect()
}

/// Nearest Neighbor Mixing: each input is replaced by the mean of its
/// `n - B` nearest inputs (itself included).
pub fn nnm_transform(vectors: &[Vector], byzantine: usize) -> Result<Vec<Vector>> {
    let n = vectors.len();
    ensure(2 * byzantine < n, || {
        format!("NNM needs B < n/2, got n={n} B={byzantine}")
    })?;
    let dim = common_dim(vectors)?;
    let good = n - byzantine;
    let scale = 1.0 / good as f64;
    Ok(vectors
        .iter()
        .map(|pivot| {
            let mut offset = Vector::zeros(dim);
            for j in nearest_neighbors(vectors, pivot, good) {
                offset.axpy(1.0, &vectors[j].sub(pivot).expect("dimension checked"));
            }
            // Accumulating offsets from the pivot keeps identical inputs exact.
            let mut out = pivot.clone();
            out.axpy(scale, &offset);
            out
        })
        .collect())
}
