use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregators::{median_kappa, AggregatorConfig, AggregatorSpec, Rule};
use crate::attacks::{AttackKind, AttackSpec};
use crate::engine::{honest_shifts, run, Optimizer, RunConfig, Schedule, SCHEMA_VERSION};
use crate::error::Result;
use crate::objectives::{LocalView, Objective, ObjectiveSpec, OracleConfig, SmoothnessMeta};
use crate::verify::{
    check_descent, check_gradient, check_l0l1, check_lemma2, check_nnm_pairing, check_robustness,
    heterogeneity_at, measure_heterogeneity, CheckReport, L0L1Options, RobustnessOptions, Tally,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub robustness_trials: usize,
    pub segments: usize,
    pub gradient_points: usize,
    pub seed: u64,
}

impl SuiteOptions {
    pub fn full(seed: u64) -> Self {
        SuiteOptions {
            robustness_trials: 10_000,
            segments: 10_000,
            gradient_points: 100,
            seed,
        }
    }

    pub fn quick(seed: u64) -> Self {
        SuiteOptions {
            robustness_trials: 200,
            segments: 500,
            gradient_points: 20,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Holds,
    /// Negative controls: the check must find violations.
    Violates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub expect: Expectation,
    pub report: CheckReport,
}

impl SuiteEntry {
    pub fn ok(&self) -> bool {
        match self.expect {
            Expectation::Holds => self.report.passed(),
            Expectation::Violates => self.report.violations > 0,
        }
    }

    /// File-system friendly name of the check.
    pub fn file_name(&self) -> String {
        let name: String = self
            .report
            .name
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        format!("{name}.json")
    }
}

fn holds(report: CheckReport) -> SuiteEntry {
    SuiteEntry {
        expect: Expectation::Holds,
        report,
    }
}

fn violates(mut report: CheckReport, name: &str) -> SuiteEntry {
    report.name = name.to_string();
    SuiteEntry {
        expect: Expectation::Violates,
        report,
    }
}

/// Every numerical check with its expected outcome.
pub fn verify_suite(opts: &SuiteOptions) -> Result<Vec<SuiteEntry>> {
    let seed = opts.seed;
    let mut entries = Vec::new();

    let (n, b, dim) = (20, 3, 10);
    let robust = RobustnessOptions::new(opts.robustness_trials, dim, seed);
    for rule in [Rule::Gm, Rule::Cwmed] {
        for nnm in [false, true] {
            let spec = AggregatorSpec::new(rule, n, b).with_nnm(nnm);
            entries.push(holds(check_robustness(&spec, &robust)?));
        }
    }
    let mean_control = RobustnessOptions {
        kappa: Some(median_kappa(n, b)),
        ..robust
    };
    entries.push(violates(
        check_robustness(&AggregatorSpec::new(Rule::Mean, n, b), &mean_control)?,
        "robustness/mean_control",
    ));
    for rule in [Rule::Krum, Rule::TrimmedMean] {
        entries.push(holds(check_robustness(
            &AggregatorSpec::new(rule, n, b),
            &robust,
        )?));
    }
    entries.push(holds(check_nnm_pairing(10, 3, 4, 20, seed)?));

    let quartic = Objective::new(ObjectiveSpec::Quartic { dim }, 1)?;
    let segments = L0L1Options::new(opts.segments, 5.0, seed);
    entries.push(holds(check_l0l1(
        &quartic,
        &quartic.smoothness(),
        &segments,
    )?));
    let wrong = SmoothnessMeta {
        l0: 1e-6,
        l1: 1e-6,
        f_star: Some(0.0),
    };
    entries.push(violates(
        check_l0l1(&quartic, &wrong, &segments)?,
        "l0l1_control",
    ));
    let exponential = Objective::new(
        ObjectiveSpec::Exponential {
            direction: vec![0.5, -0.25, 0.125],
        },
        1,
    )?;
    let mut exp_report = check_l0l1(
        &exponential,
        &exponential.smoothness(),
        &L0L1Options::new(opts.segments, 3.0, seed),
    )?;
    exp_report.name = "l0l1/exponential".into();
    entries.push(holds(exp_report));

    let config = suite_run_config(seed);
    let shifts = honest_shifts(&config)?;
    entries.push(holds(check_lemma2(
        &quartic,
        &quartic.smoothness(),
        &shifts,
        opts.segments,
        5.0,
        seed,
    )?));

    let softmax_spec = ObjectiveSpec::Softmax {
        dim: 30,
        classes: 10,
        samples_per_worker: 16,
        data_seed: seed,
    };
    for spec in [
        ObjectiveSpec::Quartic { dim },
        softmax_spec,
        ObjectiveSpec::Exponential {
            direction: vec![0.5, -0.25, 0.125],
        },
    ] {
        let name = format!("gradient/{}", spec.name());
        let objective = Objective::new(spec, 4)?;
        let mut report = check_gradient(&objective, opts.gradient_points, 1e-5, 5.0, seed)?;
        report.name = name;
        entries.push(holds(report));
    }

    entries.push(holds(check_descent(&config, &run(&config)?)?));
    entries.push(holds(heterogeneity_report(&quartic, &shifts, seed)?));
    Ok(entries)
}

/// Attacked quartic run with `γ₀` inside the convergence cap.
fn suite_run_config(seed: u64) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        objective: ObjectiveSpec::Quartic { dim: 10 },
        oracle: OracleConfig::synthetic(),
        n: 20,
        byzantine: 3,
        attack: AttackSpec::new(AttackKind::BitFlip),
        aggregator: AggregatorConfig::new(Rule::Cwmed, false),
        schedule: Schedule::theoretical(0.002, 2000),
        optimizer: Optimizer::ByzNsgdm,
        iterations: 2000,
        seed,
        x0: None,
        log_every: 1,
        zero_init_momentum: false,
    }
}

/// Measured heterogeneity against its closed form `sqrt(mean_i ‖s_i‖²)`.
fn heterogeneity_report(
    objective: &Objective,
    shifts: &[crate::Vector],
    seed: u64,
) -> Result<CheckReport> {
    let locals: Vec<LocalView<'_>> = shifts
        .iter()
        .map(|s| LocalView {
            shard: 0,
            shift: s,
            label_shift: 0,
        })
        .collect();
    let expected = (shifts.iter().map(|s| s.norm_sq()).sum::<f64>() / shifts.len() as f64).sqrt();
    let measured = measure_heterogeneity(objective, &locals, 100, 5.0, seed)?;
    let mut tally = Tally::default();
    tally.record((measured - expected).abs(), 1e-9 * expected, 0.0);
    let at_origin = heterogeneity_at(objective, &locals, &crate::Vector::zeros(objective.dim()))?;
    tally.record((at_origin - expected).abs(), 1e-9 * expected, 0.0);
    Ok(tally.report(
        "heterogeneity",
        true,
        json!({
            "workers": shifts.len(),
            "zeta_measured": measured,
            "zeta_closed_form": expected,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let entries = verify_suite(&SuiteOptions::quick(3)).unwrap();
        for e in &entries {
            assert!(e.ok(), "{:?}", e.report);
        }
        assert!(entries.iter().any(|e| e.expect == Expectation::Violates));
        let names: std::collections::HashSet<String> =
            entries.iter().map(|e| e.file_name()).collect();
        assert_eq!(names.len(), entries.len());
    }
}
