//! Robust aggregation rules and Nearest Neighbor Mixing.
//!
//! An aggregator is `(δ,κ)`-robust when, for any good subset `S` of size
//! `G = n - B`,
//!
//! ```text
//! ‖agg(v) - mean_S(v)‖ <= (κ / G) Σ_{i∈S} ‖v_i - mean_S(v)‖.
//! ```
//!
//! [`theoretical_kappa`] returns the closed-form `κ` for the rules that have
//! one; `verify::check_robustness` certifies it empirically.

mod coordinate;
mod geometric_median;
mod krum;
mod nnm;

use serde::{Deserialize, Serialize};

pub use coordinate::{coordinate_median, trimmed_mean};
pub use geometric_median::{
    geometric_median, smoothed_objective, sum_of_distances, weiszfeld, WeiszfeldOutcome,
    WeiszfeldParams,
};
pub use krum::krum;
pub use nnm::{nearest_neighbors, nnm_transform};

use crate::error::{ensure, Result};
use crate::vector::{common_dim, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Mean,
    Krum,
    /// Geometric median via smoothed Weiszfeld (RFA).
    Gm,
    /// Coordinate-wise median.
    Cwmed,
    TrimmedMean,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Mean => "mean",
            Rule::Krum => "krum",
            Rule::Gm => "gm",
            Rule::Cwmed => "cwmed",
            Rule::TrimmedMean => "trimmed_mean",
        }
    }
}

impl std::str::FromStr for Rule {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mean" => Rule::Mean,
            "krum" => Rule::Krum,
            "gm" | "rfa" => Rule::Gm,
            "cwmed" | "cm" => Rule::Cwmed,
            "trimmed_mean" => Rule::TrimmedMean,
            other => {
                return Err(crate::Error::config(format!(
                    "unknown aggregator `{other}`"
                )))
            }
        })
    }
}

/// Aggregator settings as written in a run configuration; `n` and `B` come
/// from the run itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorConfig {
    pub rule: Rule,
    #[serde(default)]
    pub nnm: bool,
    #[serde(default)]
    pub weiszfeld: WeiszfeldParams,
}

impl AggregatorConfig {
    pub fn new(rule: Rule, nnm: bool) -> Self {
        AggregatorConfig {
            rule,
            nnm,
            weiszfeld: WeiszfeldParams::default(),
        }
    }

    pub fn spec(&self, n: usize, byzantine: usize) -> AggregatorSpec {
        AggregatorSpec::new(self.rule, n, byzantine)
            .with_nnm(self.nnm)
            .with_weiszfeld(self.weiszfeld)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatorSpec {
    pub rule: Rule,
    /// Apply NNM before the rule.
    pub nnm: bool,
    pub n: usize,
    /// Number of Byzantine inputs tolerated; also the per-side trim count.
    pub byzantine: usize,
    pub weiszfeld: WeiszfeldParams,
}

impl AggregatorSpec {
    pub fn new(rule: Rule, n: usize, byzantine: usize) -> Self {
        AggregatorSpec {
            rule,
            nnm: false,
            n,
            byzantine,
            weiszfeld: WeiszfeldParams::default(),
        }
    }

    pub fn with_nnm(mut self, nnm: bool) -> Self {
        self.nnm = nnm;
        self
    }

    pub fn with_weiszfeld(mut self, params: WeiszfeldParams) -> Self {
        self.weiszfeld = params;
        self
    }

    pub fn good(&self) -> usize {
        self.n - self.byzantine
    }

    pub fn label(&self) -> String {
        if self.nnm {
            format!("nnm+{}", self.rule.name())
        } else {
            self.rule.name().to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.n >= 1, || "aggregator needs n >= 1".into())?;
        ensure(2 * self.byzantine < self.n, || {
            format!("need B < n/2, got n={} B={}", self.n, self.byzantine)
        })?;
        if self.rule == Rule::Krum {
            ensure(self.n >= self.byzantine + 3, || {
                format!(
                    "krum needs n - B - 2 >= 1, got n={} B={}",
                    self.n, self.byzantine
                )
            })?;
        }
        if self.rule == Rule::Gm {
            self.weiszfeld.validate()?;
        }
        Ok(())
    }

    /// Aggregates exactly `n` vectors of a common dimension.
    pub fn aggregate(&self, vectors: &[Vector]) -> Result<Vector> {
        self.validate()?;
        ensure(vectors.len() == self.n, || {
            format!("expected {} vectors, got {}", self.n, vectors.len())
        })?;
        common_dim(vectors)?;
        if self.nnm {
            let mixed = nnm_transform(vectors, self.byzantine)?;
            self.apply_rule(&mixed)
        } else {
            self.apply_rule(vectors)
        }
    }

    fn apply_rule(&self, vectors: &[Vector]) -> Result<Vector> {
        match self.rule {
            Rule::Mean => Vector::mean(vectors),
            Rule::Krum => krum(vectors, self.byzantine),
            Rule::Gm => geometric_median(vectors, &self.weiszfeld),
            Rule::Cwmed => coordinate_median(vectors),
            Rule::TrimmedMean => trimmed_mean(vectors, self.byzantine),
        }
    }
}

/// Closed-form robustness coefficients and their empirical counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCertificate {
    pub kappa_theoretical: Option<f64>,
    pub kappa_empirical: f64,
}

/// `κ = 2(1 + B/(n-2B))`, the coefficient of the geometric median.
pub fn median_kappa(n: usize, byzantine: usize) -> f64 {
    2.0 * (1.0 + byzantine as f64 / (n as f64 - 2.0 * byzantine as f64))
}

/// NNM composition factor: `κ' = (8κ + 4) α C` with `α = B / (n - B)`.
pub fn nnm_kappa(kappa: f64, n: usize, byzantine: usize, leverage: f64) -> f64 {
    let alpha = byzantine as f64 / (n - byzantine) as f64;
    (8.0 * kappa + 4.0) * alpha * leverage
}

/// Theoretical `κ` for the rule, or `None` where no closed form exists
/// (mean, Krum, trimmed mean).
///
/// For NNM compositions `leverage` is the bounded-leverage constant `C` of
/// the good cluster; when absent the always-valid choice `C = G` is used.
pub fn theoretical_kappa(spec: &AggregatorSpec, dim: usize, leverage: Option<f64>) -> Option<f64> {
    let base = match spec.rule {
        Rule::Gm => median_kappa(spec.n, spec.byzantine),
        Rule::Cwmed => (dim as f64).sqrt() * median_kappa(spec.n, spec.byzantine),
        Rule::Mean | Rule::Krum | Rule::TrimmedMean => return None,
    };
    if spec.nnm {
        let c = leverage.unwrap_or(spec.good() as f64);
        Some(nnm_kappa(base, spec.n, spec.byzantine, c))
    } else {
        Some(base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(v: &[f64]) -> Vec<Vector> {
        v.iter().map(|&x| Vector::new(vec![x])).collect()
    }

    #[test]
    fn mean_of_two_points() {
        let spec = AggregatorSpec::new(Rule::Mean, 2, 0);
        let out = spec
            .aggregate(&[Vector::new(vec![1.0, 1.0]), Vector::new(vec![3.0, 3.0])])
            .unwrap();
        assert_eq!(out, Vector::new(vec![2.0, 2.0]));
    }

    #[test]
    fn cwmed_of_constants() {
        let v = Vector::new(vec![0.3, -1.7, 2.5]);
        let spec = AggregatorSpec::new(Rule::Cwmed, 5, 2);
        assert_eq!(spec.aggregate(&vec![v.clone(); 5]).unwrap(), v);
    }

    #[test]
    fn gm_fermat_point() {
        // Grid oracle: minimise Σ‖y - v_i‖ on a 1e-4 grid over [0, 0.5]²,
        // then refine on a 1e-7 grid around the best cell. The Fermat point
        // of this right triangle is (1/2 - 1/(2√3)) (1, 1).
        let pts = vec![
            Vector::new(vec![0.0, 0.0]),
            Vector::new(vec![1.0, 0.0]),
            Vector::new(vec![0.0, 1.0]),
        ];
        let obj = |x: f64, y: f64| -> f64 {
            pts.iter()
                .map(|p| ((x - p[0]).powi(2) + (y - p[1]).powi(2)).sqrt())
                .sum()
        };
        let mut best = (0.0, 0.0, f64::INFINITY);
        for i in 0..=5000 {
            for j in 0..=5000 {
                let (x, y) = (i as f64 * 1e-4, j as f64 * 1e-4);
                let o = obj(x, y);
                if o < best.2 {
                    best = (x, y, o);
                }
            }
        }
        let (cx, cy) = (best.0, best.1);
        for i in -1000..=1000 {
            for j in -1000..=1000 {
                let (x, y) = (cx + i as f64 * 1e-7, cy + j as f64 * 1e-7);
                let o = obj(x, y);
                if o < best.2 {
                    best = (x, y, o);
                }
            }
        }
        assert!((best.0 - 0.211_324_865).abs() < 1e-6);
        let spec = AggregatorSpec::new(Rule::Gm, 3, 0);
        let out = spec.aggregate(&pts).unwrap();
        assert!(
            (out[0] - best.0).abs() < 1e-4 && (out[1] - best.1).abs() < 1e-4,
            "{out:?}"
        );
    }

    #[test]
    fn aggregate_rejects_bad_input() {
        let spec = AggregatorSpec::new(Rule::Mean, 3, 1);
        assert!(spec.aggregate(&scalars(&[1.0, 2.0])).is_err());
        let mixed = vec![Vector::zeros(2), Vector::zeros(2), Vector::zeros(3)];
        assert!(spec.aggregate(&mixed).is_err());
        assert!(AggregatorSpec::new(Rule::Mean, 4, 2).validate().is_err());
        assert!(AggregatorSpec::new(Rule::Krum, 4, 2).validate().is_err());
        assert!(AggregatorSpec::new(Rule::Krum, 3, 1).validate().is_err());
    }

    #[test]
    fn theoretical_kappa_values() {
        let gm = AggregatorSpec::new(Rule::Gm, 20, 3);
        assert!((theoretical_kappa(&gm, 10, None).unwrap() - 17.0 / 7.0).abs() < 1e-15);

        let cw = AggregatorSpec::new(Rule::Cwmed, 20, 3);
        let expected = 10f64.sqrt() * 17.0 / 7.0;
        assert!((theoretical_kappa(&cw, 10, None).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 7.679_8).abs() < 1e-4);

        let gm0 = AggregatorSpec::new(Rule::Gm, 20, 0);
        assert_eq!(theoretical_kappa(&gm0, 10, None), Some(2.0));

        for rule in [Rule::Mean, Rule::Krum, Rule::TrimmedMean] {
            assert_eq!(
                theoretical_kappa(&AggregatorSpec::new(rule, 20, 3), 10, None),
                None
            );
        }
    }

    #[test]
    fn nnm_kappa_uses_alpha_bound() {
        let spec = AggregatorSpec::new(Rule::Gm, 20, 3).with_nnm(true);
        let k = theoretical_kappa(&spec, 10, Some(2.0)).unwrap();
        let expected = (8.0 * 17.0 / 7.0 + 4.0) * (3.0 / 17.0) * 2.0;
        assert!((k - expected).abs() < 1e-12);
        // Without a leverage constant, C = G.
        let worst = theoretical_kappa(&spec, 10, None).unwrap();
        assert!((worst - (8.0 * 17.0 / 7.0 + 4.0) * 3.0).abs() < 1e-12);
    }
}
