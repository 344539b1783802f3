use crate::error::{ensure, Result};
use crate::vector::Vector;

/// Krum: the input whose `n - B - 2` nearest other inputs are closest in
/// summed squared distance. Ties go to the smaller index.
pub fn krum(vectors: &[Vector], byzantine: usize) -> Result<Vector> {
    let n = vectors.len();
    ensure(n >= byzantine + 3, || {
        format!("krum needs n - B - 2 >= 1, got n={n} B={byzantine}")
    })?;
    let neighbors = n - byzantine - 2;
    let mut best: Option<(f64, usize)> = None;
    let mut dists = Vec::with_capacity(n - 1);
    for (i, vi) in vectors.iter().enumerate() {
        dists.clear();
        dists.extend(
            vectors
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, vj)| vi.distance_sq(vj)),
        );
        dists.sort_by(f64::total_cmp);
        let score: f64 = dists[..neighbors].iter().sum();
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, i));
        }
    }
    let (_, index) = best.expect("n >= 3");
    Ok(vectors[index].clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(v: &[f64]) -> Vec<Vector> {
        v.iter().map(|&x| Vector::new(vec![x])).collect()
    }

    #[test]
    fn picks_clustered_input() {
        // Scores with one neighbour: 0.01, 0.01, 0.01, 9960.04; index 0 wins the tie.
        let out = krum(&scalars(&[0.0, 0.1, 0.2, 100.0]), 1).unwrap();
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn tie_goes_to_smaller_index() {
        // Scores: 1, 1, 16.
        assert_eq!(krum(&scalars(&[0.0, 1.0, 5.0]), 0).unwrap()[0], 0.0);
    }

    #[test]
    fn output_is_an_input() {
        let input = scalars(&[3.0, -2.0, 7.5, 0.25, 1.0]);
        let out = krum(&input, 1).unwrap();
        assert!(input.contains(&out));
    }

    #[test]
    fn too_few_inputs() {
        assert!(krum(&scalars(&[0.0, 1.0]), 0).is_err());
    }
}
