//! Byzantine worker strategies.
//!
//! Every iteration the engine first runs the honest workers, then builds an
//! [`AttackContext`] from their traffic. Each Byzantine worker also runs the
//! honest momentum recursion on its own oracle; that vector (and the raw
//! gradient behind it) is what `none`, `bit_flip`, `label_flip` and `mimic`
//! during warmup start from.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::vector::{common_dim, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    BitFlip,
    LabelFlip,
    Mimic,
    Alie,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::BitFlip => "bit_flip",
            AttackKind::LabelFlip => "label_flip",
            AttackKind::Mimic => "mimic",
            AttackKind::Alie => "alie",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => AttackKind::None,
            "bit_flip" | "bf" => AttackKind::BitFlip,
            "label_flip" | "lf" => AttackKind::LabelFlip,
            "mimic" => AttackKind::Mimic,
            "alie" => AttackKind::Alie,
            other => return Err(crate::Error::config(format!("unknown attack `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Iterations during which mimic behaves honestly.
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    /// ALIE offset in coordinate-wise standard deviations.
    #[serde(default = "default_z")]
    pub z: f64,
    /// Label offset used by label_flip.
    #[serde(default = "default_label_shift")]
    pub label_shift: usize,
    /// bit_flip negates the raw stochastic gradient instead of the momentum.
    #[serde(default)]
    pub gradient_level: bool,
}

fn default_warmup() -> usize {
    50
}

fn default_z() -> f64 {
    1.0
}

fn default_label_shift() -> usize {
    5
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        AttackSpec {
            kind,
            warmup: default_warmup(),
            z: default_z(),
            label_shift: default_label_shift(),
            gradient_level: false,
        }
    }

    pub fn none() -> Self {
        Self::new(AttackKind::None)
    }

    /// Checks the spec against the objective's class count (`None` for
    /// regression objectives).
    pub fn validate(&self, classes: Option<usize>) -> Result<()> {
        ensure(self.z.is_finite(), || "alie z must be finite".into())?;
        if self.kind == AttackKind::LabelFlip {
            let classes = classes.ok_or_else(|| {
                crate::Error::config("label_flip requires a classification objective")
            })?;
            ensure(self.label_shift < classes, || {
                format!(
                    "label shift {} must be below {classes} classes",
                    self.label_shift
                )
            })?;
        }
        Ok(())
    }

    /// Label offset the Byzantine worker's own oracle should use.
    pub fn oracle_label_shift(&self) -> usize {
        if self.kind == AttackKind::LabelFlip {
            self.label_shift
        } else {
            0
        }
    }
}

/// What the omniscient adversary sees of honest traffic in one iteration.
#[derive(Debug, Clone)]
pub struct AttackContext {
    pub iteration: usize,
    pub honest_mean: Vector,
    /// Population coordinate-wise standard deviation of honest updates.
    pub honest_std: Vector,
    pub gradient_mean: Vector,
}

impl AttackContext {
    pub fn new(
        iteration: usize,
        honest_updates: &[Vector],
        honest_gradients: &[Vector],
    ) -> Result<Self> {
        let dim = common_dim(honest_updates)?;
        let honest_mean = Vector::mean(honest_updates)?;
        let g = honest_updates.len() as f64;
        let mut var = Vector::zeros(dim);
        for v in honest_updates {
            for j in 0..dim {
                let d = v[j] - honest_mean[j];
                var[j] += d * d;
            }
        }
        let honest_std = Vector::new(var.iter().map(|s| (s / g).sqrt()).collect());
        Ok(AttackContext {
            iteration,
            honest_mean,
            honest_std,
            gradient_mean: Vector::mean(honest_gradients)?,
        })
    }
}

/// The Byzantine worker's own honest-protocol state for this iteration.
#[derive(Debug, Clone, Copy)]
pub struct OwnUpdate<'a> {
    pub momentum: &'a Vector,
    pub gradient: &'a Vector,
}

pub fn byzantine_update(spec: &AttackSpec, ctx: &AttackContext, own: OwnUpdate<'_>) -> Vector {
    match spec.kind {
        AttackKind::None | AttackKind::LabelFlip => own.momentum.clone(),
        AttackKind::BitFlip if spec.gradient_level => own.gradient.scale(-1.0),
        AttackKind::BitFlip => own.momentum.scale(-1.0),
        AttackKind::Mimic if ctx.iteration < spec.warmup => own.momentum.clone(),
        AttackKind::Mimic => ctx.gradient_mean.scale(-2.0),
        AttackKind::Alie => {
            let mut out = ctx.honest_mean.clone();
            out.axpy(spec.z, &ctx.honest_std);
            out
        }
    }
}

/// `(y + c) mod C`.
pub fn shift_label(label: usize, shift: usize, classes: usize) -> usize {
    (label + shift) % classes
}

pub fn shift_labels(labels: &[usize], shift: usize, classes: usize) -> Vec<usize> {
    labels
        .iter()
        .map(|&y| shift_label(y, shift, classes))
        .collect()
}
