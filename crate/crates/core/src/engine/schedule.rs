use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `γ = γ₀/(K+1)^{3/4}`, `η = (K+1)^{-1/2}` for the whole horizon.
    Theoretical,
    /// `γ_k = γ₀/√k` for `k >= 1` (`γ_0 = γ₀`), `η = 1 - β`.
    PracticalDecay,
    /// `γ_k = γ₀`, `η = 1 - β`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub gamma0: f64,
    #[serde(default = "default_beta")]
    pub momentum_beta: f64,
    /// Horizon `K` of the theoretical schedule; runs fill it from their
    /// iteration count when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

fn default_beta() -> f64 {
    0.9
}

impl Schedule {
    pub fn theoretical(gamma0: f64, horizon: usize) -> Self {
        Schedule {
            kind: ScheduleKind::Theoretical,
            gamma0,
            momentum_beta: default_beta(),
            horizon: Some(horizon),
        }
    }

    pub fn practical_decay(gamma0: f64, beta: f64) -> Self {
        Schedule {
            kind: ScheduleKind::PracticalDecay,
            gamma0,
            momentum_beta: beta,
            horizon: None,
        }
    }

    pub fn constant(gamma0: f64, beta: f64) -> Self {
        Schedule {
            kind: ScheduleKind::Constant,
            gamma0,
            momentum_beta: beta,
            horizon: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.gamma0 > 0.0 && self.gamma0.is_finite(), || {
            format!("gamma0 must be positive and finite, got {}", self.gamma0)
        })?;
        ensure((0.0..1.0).contains(&self.momentum_beta), || {
            format!(
                "momentum beta must lie in [0, 1), got {}",
                self.momentum_beta
            )
        })?;
        if self.kind == ScheduleKind::Theoretical {
            ensure(self.horizon.is_some(), || {
                "theoretical schedule needs a horizon".into()
            })?;
        }
        Ok(())
    }

    /// `(γ_k, η_k)`.
    pub fn values(&self, k: usize) -> (f64, f64) {
        match self.kind {
            ScheduleKind::Theoretical => {
                let k1 = (self.horizon.unwrap_or(0) + 1) as f64;
                (self.gamma0 / k1.powf(0.75), 1.0 / k1.sqrt())
            }
            ScheduleKind::PracticalDecay => {
                let gamma = if k == 0 {
                    self.gamma0
                } else {
                    self.gamma0 / (k as f64).sqrt()
                };
                (gamma, 1.0 - self.momentum_beta)
            }
            ScheduleKind::Constant => (self.gamma0, 1.0 - self.momentum_beta),
        }
    }
}

pub fn schedule_values(schedule: &Schedule, k: usize) -> (f64, f64) {
    schedule.values(k)
}

/// Largest `γ₀` covered by the convergence guarantee:
/// `min{1/(2L1), (K+1)^{1/4}/(√32 L1), 1/(√(128(1+2κ)) L1)}`.
pub fn gamma0_cap(l1: f64, kappa: f64, horizon: usize) -> f64 {
    let k1 = (horizon + 1) as f64;
    let a = 1.0 / (2.0 * l1);
    let b = k1.powf(0.25) / (32f64.sqrt() * l1);
    let c = 1.0 / ((128.0 * (1.0 + 2.0 * kappa)).sqrt() * l1);
    a.min(b).min(c)
}
