//! Generalized-smooth objectives and the heterogeneous stochastic oracle.
//!
//! A worker's local objective is `f_i(x) = f(x) + <s_i, x>` for the quartic
//! and exponential objectives, where `s_i` is a fixed shift with
//! `sum_i s_i = 0`, so the shifted oracle `grad f(x) + xi + s_i` is exact
//! for `f_i` and the honest average recovers `grad f`. The softmax objective
//! is a linear classifier whose data set is split into class-sorted shards,
//! one per honest worker; there `f_i` is the loss on shard `i`.

use serde::{Deserialize, Serialize};

use crate::attacks::shift_label;
use crate::error::{ensure, Error, Result};
use crate::rng::{gaussian_vector, streams, RngStream};
use crate::vector::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// `f(x) = ‖x‖⁴`.
    Quartic { dim: usize },
    /// Multinomial logistic regression on synthetic Gaussian class clusters.
    /// `dim` must be a multiple of `classes`; the feature count is `dim / classes`.
    Softmax {
        dim: usize,
        classes: usize,
        #[serde(default = "default_samples_per_worker")]
        samples_per_worker: usize,
        #[serde(default)]
        data_seed: u64,
    },
    /// `f(x) = exp(<a, x>)`.
    Exponential { direction: Vec<f64> },
}

fn default_samples_per_worker() -> usize {
    32
}

impl ObjectiveSpec {
    pub fn dim(&self) -> usize {
        match self {
            ObjectiveSpec::Quartic { dim } | ObjectiveSpec::Softmax { dim, .. } => *dim,
            ObjectiveSpec::Exponential { direction } => direction.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveSpec::Quartic { .. } => "quartic",
            ObjectiveSpec::Softmax { .. } => "softmax",
            ObjectiveSpec::Exponential { .. } => "exponential",
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.dim() >= 1, || {
            "objective dimension must be >= 1".into()
        })?;
        if let ObjectiveSpec::Softmax {
            dim,
            classes,
            samples_per_worker,
            ..
        } = self
        {
            ensure(*classes >= 2, || "softmax needs at least 2 classes".into())?;
            ensure(dim % classes == 0, || {
                format!("softmax dim {dim} is not a multiple of classes {classes}")
            })?;
            ensure(*samples_per_worker >= 1, || {
                "softmax needs at least one sample per worker".into()
            })?;
        }
        if let ObjectiveSpec::Exponential { direction } = self {
            ensure(direction.iter().all(|a| a.is_finite()), || {
                "exponential direction must be finite".into()
            })?;
        }
        Ok(())
    }
}

/// Constants `(L0, L1)` valid for every local objective, plus the global minimum value when known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessMeta {
    pub l0: f64,
    pub l1: f64,
    pub f_star: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Per-coordinate variance of the oracle noise.
    #[serde(default)]
    pub noise_variance: f64,
    /// Per-coordinate variance of the heterogeneity shifts before centering.
    #[serde(default)]
    pub shift_variance: f64,
}

impl OracleConfig {
    pub fn noiseless() -> Self {
        OracleConfig {
            noise_variance: 0.0,
            shift_variance: 0.0,
        }
    }

    /// Noise and shift levels of the synthetic quartic experiment, read as variances.
    pub fn synthetic() -> Self {
        OracleConfig {
            noise_variance: 1e-5,
            shift_variance: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.noise_variance >= 0.0 && self.noise_variance.is_finite(),
            || "noise_variance must be finite and non-negative".into(),
        )?;
        ensure(
            self.shift_variance >= 0.0 && self.shift_variance.is_finite(),
            || "shift_variance must be finite and non-negative".into(),
        )
    }
}

/// Which local objective an oracle call targets.
#[derive(Debug, Clone, Copy)]
pub struct LocalView<'a> {
    /// Data shard (softmax only; ignored otherwise).
    pub shard: usize,
    pub shift: &'a Vector,
    /// Label offset `c` applied as `(y + c) mod C` (softmax only).
    pub label_shift: usize,
}

/// Labelled synthetic data for the softmax objective, sorted by class.
#[derive(Debug, Clone)]
struct SoftmaxData {
    classes: usize,
    features: usize,
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    shards: usize,
    shard_len: usize,
}

impl SoftmaxData {
    fn generate(
        classes: usize,
        features: usize,
        per_shard: usize,
        shards: usize,
        seed: u64,
    ) -> Self {
        let mut rng = RngStream::new(seed, streams::DATASET);
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..features).map(|_| 2.0 * rng.standard_normal()).collect())
            .collect();
        let total = per_shard * shards;
        let mut inputs = Vec::with_capacity(total);
        let mut labels = Vec::with_capacity(total);
        for j in 0..total {
            let y = j * classes / total;
            inputs.push(
                centers[y]
                    .iter()
                    .map(|c| c + rng.standard_normal())
                    .collect(),
            );
            labels.push(y);
        }
        SoftmaxData {
            classes,
            features,
            inputs,
            labels,
            shards,
            shard_len: per_shard,
        }
    }

    fn range(&self, shard: Option<usize>) -> std::ops::Range<usize> {
        match shard {
            Some(s) => {
                let s = s % self.shards;
                s * self.shard_len..(s + 1) * self.shard_len
            }
            None => 0..self.inputs.len(),
        }
    }

    fn logits(&self, w: &[f64], a: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                w[c * self.features..(c + 1) * self.features]
                    .iter()
                    .zip(a)
                    .map(|(wi, ai)| wi * ai)
                    .sum()
            })
            .collect()
    }

    fn loss(&self, w: &[f64], shard: Option<usize>, label_shift: usize) -> f64 {
        let range = self.range(shard);
        let count = range.len() as f64;
        range
            .map(|j| {
                let z = self.logits(w, &self.inputs[j]);
                let y = shift_label(self.labels[j], label_shift, self.classes);
                log_sum_exp(&z) - z[y]
            })
            .sum::<f64>()
            / count
    }

    fn gradient(&self, w: &[f64], shard: Option<usize>, label_shift: usize) -> Vector {
        let range = self.range(shard);
        let count = range.len() as f64;
        let mut g = vec![0.0; w.len()];
        for j in range {
            let a = &self.inputs[j];
            let z = self.logits(w, a);
            let lse = log_sum_exp(&z);
            let y = shift_label(self.labels[j], label_shift, self.classes);
            for c in 0..self.classes {
                let coef = (z[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                for (gi, ai) in g[c * self.features..(c + 1) * self.features]
                    .iter_mut()
                    .zip(a)
                {
                    *gi += coef * ai;
                }
            }
        }
        Vector::new(g.into_iter().map(|v| v / count).collect())
    }

    fn max_input_norm_sq(&self) -> f64 {
        self.inputs
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// An objective instantiated for a run (softmax data generated and sharded).
#[derive(Debug, Clone)]
pub struct Objective {
    spec: ObjectiveSpec,
    data: Option<SoftmaxData>,
}

impl Objective {
    /// `shards` is the number of honest workers; it only matters for softmax.
    pub fn new(spec: ObjectiveSpec, shards: usize) -> Result<Self> {
        spec.validate()?;
        let data = match &spec {
            ObjectiveSpec::Softmax {
                dim,
                classes,
                samples_per_worker,
                data_seed,
            } => {
                ensure(shards >= 1, || "softmax needs at least one shard".into())?;
                Some(SoftmaxData::generate(
                    *classes,
                    dim / classes,
                    *samples_per_worker,
                    shards,
                    *data_seed,
                ))
            }
            _ => None,
        };
        Ok(Objective { spec, data })
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn is_classification(&self) -> bool {
        self.data.is_some()
    }

    pub fn classes(&self) -> Option<usize> {
        self.data.as_ref().map(|d| d.classes)
    }

    fn check(&self, x: &Vector) -> Result<()> {
        ensure(x.dim() == self.dim(), || {
            format!(
                "point has dimension {}, objective expects {}",
                x.dim(),
                self.dim()
            )
        })
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check(x)?;
        Ok(match (&self.spec, &self.data) {
            (ObjectiveSpec::Quartic { .. }, _) => {
                let r2 = x.norm_sq();
                r2 * r2
            }
            (ObjectiveSpec::Exponential { direction }, _) => x
                .as_slice()
                .iter()
                .zip(direction)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .exp(),
            (ObjectiveSpec::Softmax { .. }, Some(data)) => data.loss(x.as_slice(), None, 0),
            (ObjectiveSpec::Softmax { .. }, None) => unreachable!("softmax data is built in new"),
        })
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        self.check(x)?;
        Ok(match (&self.spec, &self.data) {
            (ObjectiveSpec::Quartic { .. }, _) => x.scale(4.0 * x.norm_sq()),
            (ObjectiveSpec::Exponential { direction }, _) => {
                let a = Vector::new(direction.clone());
                let e = x.dot_unchecked(&a).exp();
                a.scale(e)
            }
            (ObjectiveSpec::Softmax { .. }, Some(data)) => data.gradient(x.as_slice(), None, 0),
            (ObjectiveSpec::Softmax { .. }, None) => unreachable!("softmax data is built in new"),
        })
    }

    pub fn local_value(&self, x: &Vector, local: LocalView<'_>) -> Result<f64> {
        self.check(x)?;
        let base = match &self.data {
            Some(data) => data.loss(x.as_slice(), Some(local.shard), local.label_shift),
            None => self.value(x)?,
        };
        Ok(base + x.dot(local.shift)?)
    }

    /// Exact gradient of the local objective `f_i`.
    pub fn local_gradient(&self, x: &Vector, local: LocalView<'_>) -> Result<Vector> {
        self.check(x)?;
        let base = match &self.data {
            Some(data) => data.gradient(x.as_slice(), Some(local.shard), local.label_shift),
            None => self.gradient(x)?,
        };
        base.add(local.shift)
    }

    /// `grad f_i(x) + xi` with `xi ~ N(0, noise_variance I)`.
    pub fn stochastic_gradient(
        &self,
        x: &Vector,
        local: LocalView<'_>,
        noise_variance: f64,
        rng: &mut RngStream,
    ) -> Result<Vector> {
        let mut g = self.local_gradient(x, local)?;
        if noise_variance > 0.0 {
            let xi = gaussian_vector(rng, self.dim(), noise_variance)?;
            g.axpy(1.0, &xi);
        }
        Ok(g)
    }

    pub fn smoothness(&self) -> SmoothnessMeta {
        match (&self.spec, &self.data) {
            (ObjectiveSpec::Quartic { .. }, _) => SmoothnessMeta {
                l0: 12.0,
                l1: 3.0,
                f_star: Some(0.0),
            },
            // Hessian a a^T exp(<a,x>) has norm ‖a‖ · ‖grad f‖.
            (ObjectiveSpec::Exponential { direction }, _) => SmoothnessMeta {
                l0: 0.0,
                l1: direction.iter().map(|a| a * a).sum::<f64>().sqrt(),
                f_star: Some(0.0),
            },
            // Cross-entropy Hessian is bounded by max‖a‖²/2; the loss is L-smooth.
            (ObjectiveSpec::Softmax { .. }, Some(data)) => SmoothnessMeta {
                l0: 0.5 * data.max_input_norm_sq(),
                l1: 0.0,
                f_star: None,
            },
            (ObjectiveSpec::Softmax { .. }, None) => unreachable!("softmax data is built in new"),
        }
    }

    /// Numerical minimum of the local objective `f(x) + <shift, x>`.
    ///
    /// Only defined for the quartic, whose shifted local objectives are
    /// coercive. Uses gradient descent with Armijo backtracking from the origin.
    pub fn local_min_value(&self, shift: &Vector) -> Result<f64> {
        ensure(matches!(self.spec, ObjectiveSpec::Quartic { .. }), || {
            format!(
                "local minimum is only available for the quartic, not {}",
                self.spec.name()
            )
        })?;
        let local = LocalView {
            shard: 0,
            shift,
            label_shift: 0,
        };
        minimize(
            |x| self.local_value(x, local).expect("dimension checked"),
            |x| self.local_gradient(x, local).expect("dimension checked"),
            Vector::zeros(self.dim()),
        )
    }
}

fn minimize(
    f: impl Fn(&Vector) -> f64,
    grad: impl Fn(&Vector) -> Vector,
    mut x: Vector,
) -> Result<f64> {
    let mut fx = f(&x);
    let mut step = 1.0;
    for _ in 0..100_000 {
        let g = grad(&x);
        let gn2 = g.norm_sq();
        if gn2.sqrt() <= 1e-13 {
            break;
        }
        step *= 2.0;
        loop {
            let mut trial = x.clone();
            trial.axpy(-step, &g);
            let ft = f(&trial);
            if ft <= fx - 0.5 * step * gn2 {
                x = trial;
                fx = ft;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Ok(fx);
            }
        }
    }
    if fx.is_finite() {
        Ok(fx)
    } else {
        Err(Error::config("local minimization diverged"))
    }
}

/// `G` shifts drawn from `N(0, shift_variance I)` and centered so they sum to zero.
pub fn make_shifts(
    rng: &mut RngStream,
    count: usize,
    dim: usize,
    shift_variance: f64,
) -> Result<Vec<Vector>> {
    ensure(count >= 1, || "need at least one shift".into())?;
    let mut shifts = (0..count)
        .map(|_| gaussian_vector(rng, dim, shift_variance))
        .collect::<Result<Vec<_>>>()?;
    let mean = Vector::mean(&shifts)?;
    for s in &mut shifts {
        s.axpy(-1.0, &mean);
    }
    Ok(shifts)
}
