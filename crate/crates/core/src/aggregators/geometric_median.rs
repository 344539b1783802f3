use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::vector::{common_dim, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeiszfeldParams {
    /// Smoothing radius: distances below `nu` are clamped when weighting.
    pub nu: f64,
    pub max_iters: usize,
    /// Stop once an update moves the iterate by at most this much.
    pub tol: f64,
}

impl Default for WeiszfeldParams {
    fn default() -> Self {
        WeiszfeldParams {
            nu: 1e-8,
            max_iters: 100,
            tol: 1e-10,
        }
    }
}

impl WeiszfeldParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.nu > 0.0 && self.nu.is_finite(), || {
            format!("weiszfeld nu must be positive, got {}", self.nu)
        })?;
        ensure(self.tol >= 0.0, || {
            format!("weiszfeld tol must be >= 0, got {}", self.tol)
        })?;
        ensure(self.max_iters >= 1, || {
            "weiszfeld max_iters must be >= 1".into()
        })
    }
}

#[derive(Debug, Clone)]
pub struct WeiszfeldOutcome {
    /// Iterate with the smallest sum of distances seen, the mean included.
    pub point: Vector,
    pub iterations: usize,
    /// Smoothed objective at the mean and at every subsequent iterate.
    pub surrogate: Vec<f64>,
}

/// `Σ ‖y - v_i‖`.
pub fn sum_of_distances(vectors: &[Vector], y: &Vector) -> f64 {
    vectors.iter().map(|v| v.distance(y)).sum()
}

/// Huber-smoothed sum of distances, which smoothed Weiszfeld decreases
/// monotonically: each distance `r` contributes `r` when `r >= nu` and
/// `r²/(2nu) + nu/2` otherwise.
pub fn smoothed_objective(vectors: &[Vector], y: &Vector, nu: f64) -> f64 {
    vectors
        .iter()
        .map(|v| {
            let r = v.distance(y);
            if r >= nu {
                r
            } else {
                r * r / (2.0 * nu) + nu / 2.0
            }
        })
        .sum()
}

pub fn weiszfeld(vectors: &[Vector], params: &WeiszfeldParams) -> Result<WeiszfeldOutcome> {
    params.validate()?;
    let dim = common_dim(vectors)?;
    let mut y = Vector::mean(vectors)?;
    let mut best = (sum_of_distances(vectors, &y), y.clone());
    let mut surrogate = vec![smoothed_objective(vectors, &y, params.nu)];
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        let mut step = Vector::zeros(dim);
        let mut total = 0.0;
        for v in vectors {
            let diff = v.sub(&y).expect("dimension checked");
            let w = 1.0 / diff.norm().max(params.nu);
            step.axpy(w, &diff);
            total += w;
        }
        let step = step.scale(1.0 / total);
        y.axpy(1.0, &step);
        surrogate.push(smoothed_objective(vectors, &y, params.nu));
        let objective = sum_of_distances(vectors, &y);
        if objective < best.0 {
            best = (objective, y.clone());
        }
        if step.norm() <= params.tol {
            break;
        }
    }
    Ok(WeiszfeldOutcome {
        point: best.1,
        iterations,
        surrogate,
    })
}

/// Approximate geometric median by smoothed Weiszfeld started at the mean.
pub fn geometric_median(vectors: &[Vector], params: &WeiszfeldParams) -> Result<Vector> {
    Ok(weiszfeld(vectors, params)?.point)
}
