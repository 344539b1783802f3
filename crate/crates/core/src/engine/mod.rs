//! The distributed training loop.
//!
//! Each iteration `k = 1..=K`:
//!
//! 1. honest workers draw a stochastic gradient at `x^{k-1}` and update
//!    their momentum `v_i = (1-η) v_i + η g_i`;
//! 2. Byzantine workers run the same recursion on their own oracle and then
//!    replace the result according to the attack;
//! 3. the server aggregates all `n` vectors in worker-id order;
//! 4. `byz_nsgdm` takes a normalized step `x^k = x^{k-1} - γ v/‖v‖`,
//!    the baselines take `x^k = x^{k-1} - γ v`.

mod schedule;

use log::warn;
use serde::{Deserialize, Serialize};

pub use schedule::{gamma0_cap, schedule_values, Schedule, ScheduleKind};

use crate::aggregators::{theoretical_kappa, AggregatorConfig, AggregatorSpec};
use crate::attacks::{byzantine_update, AttackContext, AttackSpec, OwnUpdate};
use crate::error::{ensure, Error, Result};
use crate::objectives::{make_shifts, LocalView, Objective, ObjectiveSpec, OracleConfig};
use crate::rng::{streams, RngStream};
use crate::vector::{Vector, NORMALIZE_EPS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Normalized momentum steps.
    ByzNsgdm,
    /// Raw momentum steps with a constant step size.
    Baseline,
    /// Raw momentum steps with `γ₀/√k` decay.
    BaselineDecay,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::ByzNsgdm => "byz_nsgdm",
            Optimizer::Baseline => "baseline",
            Optimizer::BaselineDecay => "baseline_decay",
        }
    }

    pub fn normalized(self) -> bool {
        self == Optimizer::ByzNsgdm
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "byz_nsgdm" => Optimizer::ByzNsgdm,
            "baseline" => Optimizer::Baseline,
            "baseline_decay" => Optimizer::BaselineDecay,
            other => return Err(Error::config(format!("unknown optimizer `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Honest,
    Byzantine,
}

#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: usize,
    pub role: Role,
    pub momentum: Vector,
    pub shift: Vector,
    /// Data shard for classification objectives.
    pub shard: usize,
    pub label_shift: usize,
    pub rng: RngStream,
}

impl WorkerState {
    pub fn local(&self) -> LocalView<'_> {
        LocalView {
            shard: self.shard,
            shift: &self.shift,
            label_shift: self.label_shift,
        }
    }

    /// Draws a stochastic gradient at `x`, folds it into the momentum and
    /// returns it.
    pub fn honest_step(
        &mut self,
        objective: &Objective,
        x: &Vector,
        noise_variance: f64,
        eta: f64,
    ) -> Result<Vector> {
        let local = LocalView {
            shard: self.shard,
            shift: &self.shift,
            label_shift: self.label_shift,
        };
        let g = objective.stochastic_gradient(x, local, noise_variance, &mut self.rng)?;
        self.momentum = momentum_step(&self.momentum, &g, eta);
        Ok(g)
    }
}

/// `(1 - η) v + η g`.
pub fn momentum_step(v_prev: &Vector, g: &Vector, eta: f64) -> Vector {
    let mut out = v_prev.scale(1.0 - eta);
    out.axpy(eta, g);
    out
}

/// One server update. Returns `x^k` and the step length actually taken
/// (`γ`, or zero when the aggregate vanishes).
pub fn server_step(x: &Vector, v: &Vector, gamma: f64, optimizer: Optimizer) -> (Vector, f64) {
    let mut next = x.clone();
    if optimizer.normalized() {
        let norm = v.norm();
        if norm <= NORMALIZE_EPS {
            return (next, 0.0);
        }
        next.axpy(-gamma / norm, v);
    } else {
        if v.norm_sq() == 0.0 {
            return (next, 0.0);
        }
        next.axpy(-gamma, v);
    }
    (next, gamma)
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_optimizer() -> Optimizer {
    Optimizer::ByzNsgdm
}

fn default_log_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub objective: ObjectiveSpec,
    #[serde(default = "OracleConfig::noiseless")]
    pub oracle: OracleConfig,
    pub n: usize,
    #[serde(default)]
    pub byzantine: usize,
    #[serde(default = "AttackSpec::none")]
    pub attack: AttackSpec,
    pub aggregator: AggregatorConfig,
    /// `baseline` always steps with a constant size and `baseline_decay`
    /// with `γ₀/√k`; both reuse `gamma0` and `momentum_beta` from here.
    pub schedule: Schedule,
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Starting point; all ones when absent.
    #[serde(default)]
    pub x0: Option<Vector>,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Start momenta at zero instead of one stochastic gradient at `x0`.
    #[serde(default)]
    pub zero_init_momentum: bool,
}

impl RunConfig {
    pub fn good(&self) -> usize {
        self.n - self.byzantine
    }

    pub fn aggregator_spec(&self) -> AggregatorSpec {
        self.aggregator.spec(self.n, self.byzantine)
    }

    pub fn effective_schedule(&self) -> Schedule {
        let mut s = self.schedule;
        match self.optimizer {
            Optimizer::Baseline => s.kind = ScheduleKind::Constant,
            Optimizer::BaselineDecay => s.kind = ScheduleKind::PracticalDecay,
            Optimizer::ByzNsgdm => {}
        }
        if s.kind == ScheduleKind::Theoretical && s.horizon.is_none() {
            s.horizon = Some(self.iterations);
        }
        s
    }

    pub fn initial_point(&self) -> Vector {
        self.x0
            .clone()
            .unwrap_or_else(|| Vector::filled(self.objective.dim(), 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.schema_version == SCHEMA_VERSION, || {
            format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )
        })?;
        self.objective.validate()?;
        self.oracle.validate()?;
        ensure(self.n >= 1, || "need at least one worker".into())?;
        ensure(2 * self.byzantine < self.n, || {
            format!("need B < n/2, got n={} B={}", self.n, self.byzantine)
        })?;
        self.aggregator_spec().validate()?;
        self.effective_schedule().validate()?;
        ensure(self.log_every >= 1, || "log_every must be >= 1".into())?;
        if let Some(x0) = &self.x0 {
            ensure(x0.dim() == self.objective.dim(), || {
                format!(
                    "x0 has dimension {}, objective expects {}",
                    x0.dim(),
                    self.objective.dim()
                )
            })?;
            ensure(x0.is_finite(), || "x0 must be finite".into())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub k: usize,
    /// `‖∇f(x^k)‖`.
    pub grad_norm: f64,
    pub f_value: f64,
    /// `‖v^k - ∇f(x^{k-1})‖`; zero at `k = 0`.
    pub agg_error: f64,
    /// Length of the step that produced `x^k` (zero at `k = 0`).
    pub step_size: f64,
    /// Mean over honest workers of `‖∇f_i(x^k)‖`.
    pub mean_local_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub iteration: usize,
    pub last: TrajectoryRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub divergence: Option<Divergence>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }

    pub fn final_grad_norm(&self) -> f64 {
        match (&self.divergence, self.records.last()) {
            (None, Some(r)) => r.grad_norm,
            _ => f64::INFINITY,
        }
    }

    pub fn min_grad_norm(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.grad_norm)
            .fold(f64::INFINITY, f64::min)
    }
}

struct Simulation<'a> {
    config: &'a RunConfig,
    objective: Objective,
    aggregator: AggregatorSpec,
    schedule: Schedule,
    workers: Vec<WorkerState>,
}

impl<'a> Simulation<'a> {
    fn new(config: &'a RunConfig) -> Result<Self> {
        config.validate()?;
        let good = config.good();
        let objective = Objective::new(config.objective.clone(), good)?;
        config.attack.validate(objective.classes())?;
        let aggregator = config.aggregator_spec();
        let schedule = config.effective_schedule();
        warn_if_above_cap(config, &objective, &aggregator, &schedule);

        let dim = objective.dim();
        let shifts = honest_shifts(config)?;
        let x0 = config.initial_point();
        let mut workers = Vec::with_capacity(config.n);
        for id in 0..config.n {
            let honest = id < good;
            let mut worker = WorkerState {
                id,
                role: if honest {
                    Role::Honest
                } else {
                    Role::Byzantine
                },
                momentum: Vector::zeros(dim),
                shift: shifts
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| Vector::zeros(dim)),
                shard: id % good,
                label_shift: if honest {
                    0
                } else {
                    config.attack.oracle_label_shift()
                },
                rng: RngStream::new(config.seed, id as u64),
            };
            if !config.zero_init_momentum {
                worker.honest_step(&objective, &x0, config.oracle.noise_variance, 1.0)?;
            }
            workers.push(worker);
        }
        Ok(Simulation {
            config,
            objective,
            aggregator,
            schedule,
            workers,
        })
    }

    fn snapshot(
        &self,
        k: usize,
        x: &Vector,
        grad: &Vector,
        agg_error: f64,
        step_size: f64,
    ) -> Result<TrajectoryRecord> {
        let good = self.config.good();
        let mut local_sum = 0.0;
        for w in &self.workers[..good] {
            local_sum += self.objective.local_gradient(x, w.local())?.norm();
        }
        Ok(TrajectoryRecord {
            k,
            grad_norm: grad.norm(),
            f_value: self.objective.value(x)?,
            agg_error,
            step_size,
            mean_local_grad_norm: local_sum / good as f64,
        })
    }

    fn run(mut self) -> Result<Trajectory> {
        let config = self.config;
        let good = config.good();
        let iterations = config.iterations;
        let noise = config.oracle.noise_variance;

        let mut x = config.initial_point();
        let mut grad = self.objective.gradient(&x)?;
        let mut last = self.snapshot(0, &x, &grad, 0.0, 0.0)?;
        let mut records = vec![last];

        for k in 1..=iterations {
            let (gamma, eta) = self.schedule.values(k - 1);

            let mut gradients = Vec::with_capacity(config.n);
            for w in &mut self.workers {
                gradients.push(w.honest_step(&self.objective, &x, noise, eta)?);
            }
            let mut inputs: Vec<Vector> = self.workers.iter().map(|w| w.momentum.clone()).collect();
            if good < config.n {
                let ctx = AttackContext::new(k, &inputs[..good], &gradients[..good])?;
                for id in good..config.n {
                    inputs[id] = byzantine_update(
                        &config.attack,
                        &ctx,
                        OwnUpdate {
                            momentum: &self.workers[id].momentum,
                            gradient: &gradients[id],
                        },
                    );
                }
            }

            let v = self.aggregator.aggregate(&inputs)?;
            let agg_error = v.distance(&grad);
            let (next, step_size) = server_step(&x, &v, gamma, config.optimizer);

            let next_grad = self.objective.gradient(&next)?;
            let diverged = !next.is_finite()
                || !next_grad.is_finite()
                || !self.objective.value(&next)?.is_finite();
            if diverged {
                return Ok(Trajectory {
                    records,
                    divergence: Some(Divergence { iteration: k, last }),
                });
            }
            x = next;
            grad = next_grad;

            let logged = k % config.log_every == 0 || k == iterations;
            let record = self.snapshot(k, &x, &grad, agg_error, step_size)?;
            last = record;
            if logged {
                records.push(record);
            }
        }
        Ok(Trajectory {
            records,
            divergence: None,
        })
    }
}

fn warn_if_above_cap(
    config: &RunConfig,
    objective: &Objective,
    spec: &AggregatorSpec,
    schedule: &Schedule,
) {
    if !config.optimizer.normalized() {
        return;
    }
    let l1 = objective.smoothness().l1;
    if l1 <= 0.0 {
        return;
    }
    let Some(kappa) = theoretical_kappa(spec, objective.dim(), None) else {
        return;
    };
    let cap = gamma0_cap(l1, kappa, config.iterations);
    if schedule.gamma0 > cap {
        warn!(
            "gamma0 = {} exceeds the guaranteed-convergence cap {cap:.3e}",
            schedule.gamma0
        );
    }
}

/// The fixed heterogeneity shifts `s_i` of the honest workers of a run.
pub fn honest_shifts(config: &RunConfig) -> Result<Vec<Vector>> {
    let mut rng = RngStream::new(config.seed, streams::SHIFTS);
    make_shifts(
        &mut rng,
        config.good(),
        config.objective.dim(),
        config.oracle.shift_variance,
    )
}

/// Runs the simulation, reporting divergence inside the trajectory.
pub fn run_trajectory(config: &RunConfig) -> Result<Trajectory> {
    Simulation::new(config)?.run()
}

/// Runs the simulation; divergence is an [`Error::Diverged`].
pub fn run(config: &RunConfig) -> Result<Vec<TrajectoryRecord>> {
    let trajectory = run_trajectory(config)?;
    match trajectory.divergence {
        Some(d) => Err(Error::Diverged {
            iteration: d.iteration,
            last: Box::new(d.last),
        }),
        None => Ok(trajectory.records),
    }
}
