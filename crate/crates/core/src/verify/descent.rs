use serde_json::json;

use super::{CheckReport, Tally};
use crate::aggregators::{theoretical_kappa, Rule};
use crate::engine::{gamma0_cap, Optimizer, RunConfig, TrajectoryRecord};
use crate::error::{ensure, Result};
use crate::objectives::Objective;

/// Evaluates the one-step descent inequality of the normalized method,
///
/// `f(x^k) <= f(x^{k-1}) - γ‖∇f(x^{k-1})‖ + 2γ‖∇f(x^{k-1}) - v^k‖
///            + (γ²/2) exp(γ L1) (L0 + L1 mean_i ‖∇f_i(x^{k-1})‖)`,
///
/// on every pair of consecutive records (`log_every = 1` gives all steps).
/// `γ` is the scheduled step size, so iterations that skipped a vanishing
/// momentum are covered too.
///
/// Violations are asserted only for `byz_nsgdm` runs whose `γ₀` is within
/// [`gamma0_cap`]; otherwise the check is a diagnostic.
pub fn check_descent(config: &RunConfig, records: &[TrajectoryRecord]) -> Result<CheckReport> {
    config.validate()?;
    let objective = Objective::new(config.objective.clone(), config.good())?;
    let meta = objective.smoothness();
    let schedule = config.effective_schedule();

    let spec = config.aggregator_spec();
    let kappa = theoretical_kappa(&spec, objective.dim(), None).or_else(|| {
        // Without Byzantine inputs the plain mean is exact.
        (config.byzantine == 0 && spec.rule == Rule::Mean).then_some(0.0)
    });
    let cap = gamma0_cap(meta.l1, kappa.unwrap_or(0.0), config.iterations);
    let asserted = config.optimizer == Optimizer::ByzNsgdm && schedule.gamma0 <= cap;

    let mut tally = Tally::default();
    for pair in records.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        ensure(cur.k > prev.k, || {
            "records must be ordered by iteration".into()
        })?;
        if cur.k != prev.k + 1 {
            continue;
        }
        let gamma = schedule.values(prev.k).0;
        let curvature = 0.5
            * gamma
            * gamma
            * (gamma * meta.l1).exp()
            * (meta.l0 + meta.l1 * prev.mean_local_grad_norm);
        let rhs = prev.f_value - gamma * prev.grad_norm + 2.0 * gamma * cur.agg_error + curvature;
        let scale =
            prev.f_value.abs() + gamma * prev.grad_norm + 2.0 * gamma * cur.agg_error + curvature;
        tally.record(cur.f_value, rhs, 1e-7 * scale);
    }
    Ok(tally.report(
        "descent",
        asserted,
        json!({
            "objective": config.objective.name(),
            "optimizer": config.optimizer.name(),
            "aggregator": spec.label(),
            "gamma0": schedule.gamma0,
            "gamma0_cap": cap,
            "kappa": kappa,
            "l0": meta.l0,
            "l1": meta.l1,
            "records": records.len(),
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregators::AggregatorConfig;
    use crate::attacks::{AttackKind, AttackSpec};
    use crate::engine::{run, Schedule, SCHEMA_VERSION};
    use crate::objectives::{ObjectiveSpec, OracleConfig};

    fn config(n: usize, byzantine: usize, schedule: Schedule) -> RunConfig {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            objective: ObjectiveSpec::Quartic { dim: 10 },
            oracle: OracleConfig::noiseless(),
            n,
            byzantine,
            attack: AttackSpec::none(),
            aggregator: AggregatorConfig::new(Rule::Mean, false),
            schedule,
            optimizer: Optimizer::ByzNsgdm,
            iterations: 300,
            seed: 0,
            x0: None,
            log_every: 1,
            zero_init_momentum: false,
        }
    }

    #[test]
    fn noiseless_single_worker() {
        let c = config(1, 0, Schedule::practical_decay(0.02, 0.9));
        let report = check_descent(&c, &run(&c).unwrap()).unwrap();
        assert!(report.asserted);
        assert_eq!(report.instances, 300);
        assert_eq!(report.violations, 0, "{report:?}");
    }

    #[test]
    fn attacked_robust_run() {
        let mut c = config(20, 3, Schedule::theoretical(0.002, 1000));
        c.oracle = OracleConfig::synthetic();
        c.attack = AttackSpec::new(AttackKind::Alie);
        c.aggregator = AggregatorConfig::new(Rule::Gm, true);
        c.iterations = 1000;
        let report = check_descent(&c, &run(&c).unwrap()).unwrap();
        assert!(report.asserted);
        assert_eq!(report.violations, 0, "{report:?}");
    }

    #[test]
    fn large_step_is_diagnostic() {
        let c = config(1, 0, Schedule::constant(0.5, 0.9));
        let report = check_descent(&c, &run(&c).unwrap()).unwrap();
        assert!(!report.asserted);
        assert!(report.passed());
    }

    #[test]
    fn sparse_logging_skips_gaps() {
        let mut c = config(1, 0, Schedule::constant(0.01, 0.9));
        c.log_every = 10;
        c.iterations = 95;
        let report = check_descent(&c, &run(&c).unwrap()).unwrap();
        assert_eq!(report.instances, 0);
    }
}
