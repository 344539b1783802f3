use crate::error::{ensure, Result};
use crate::vector::{common_dim, Vector};

fn per_coordinate(vectors: &[Vector], reduce: impl Fn(&[f64]) -> f64) -> Result<Vector> {
    let dim = common_dim(vectors)?;
    let mut column = Vec::with_capacity(vectors.len());
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        column.clear();
        column.extend(vectors.iter().map(|v| v[j]));
        column.sort_by(f64::total_cmp);
        out.push(reduce(&column));
    }
    Ok(Vector::new(out))
}

/// Coordinate-wise median; even counts average the two middle values.
pub fn coordinate_median(vectors: &[Vector]) -> Result<Vector> {
    per_coordinate(vectors, |sorted| {
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    })
}

/// Coordinate-wise mean after dropping the `trim` smallest and largest values.
pub fn trimmed_mean(vectors: &[Vector], trim: usize) -> Result<Vector> {
    ensure(2 * trim < vectors.len(), || {
        format!(
            "cannot trim {trim} from each side of {} values",
            vectors.len()
        )
    })?;
    per_coordinate(vectors, |sorted| {
        let kept = &sorted[trim..sorted.len() - trim];
        let base = kept[0];
        base + kept.iter().map(|x| x - base).sum::<f64>() / kept.len() as f64
    })
}
