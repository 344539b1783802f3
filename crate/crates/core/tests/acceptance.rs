//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};

use byzopt::aggregators::{
    median_kappa, theoretical_kappa, AggregatorConfig, AggregatorSpec, Rule,
};
use byzopt::attacks::{AttackKind, AttackSpec};
use byzopt::engine::{
    gamma0_cap, honest_shifts, run, run_trajectory, Optimizer, RunConfig, Schedule, SCHEMA_VERSION,
};
use byzopt::harness::{
    run_manifest, table1_manifest, write_json, ExperimentManifest, OutputOptions,
};
use byzopt::objectives::{LocalView, Objective, ObjectiveSpec, OracleConfig, SmoothnessMeta};
use byzopt::verify::{
    check_descent, check_gradient, check_l0l1, check_robustness, measure_heterogeneity,
    L0L1Options, RobustnessOptions,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn quartic_config() -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        objective: ObjectiveSpec::Quartic { dim: 10 },
        oracle: OracleConfig::noiseless(),
        n: 20,
        byzantine: 0,
        attack: AttackSpec::none(),
        aggregator: AggregatorConfig::new(Rule::Gm, false),
        schedule: Schedule::theoretical(1.0, 0),
        optimizer: Optimizer::ByzNsgdm,
        iterations: 0,
        seed: 0,
        x0: None,
        log_every: 1,
        zero_init_momentum: false,
    }
}

fn table1() -> Outcome {
    let table = match run_manifest(&table1_manifest(0), OutputOptions::default()) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let mut failures = Vec::new();
    let mut ours = Vec::new();
    for attack in ["bit_flip", "mimic", "alie"] {
        for agg in ["nnm+gm", "nnm+krum", "nnm+cwmed"] {
            let score = |opt| table.cell(attack, agg, opt).map_or(f64::NAN, |c| c.score());
            let (nsgdm, base, decay) = (
                score("byz_nsgdm"),
                score("baseline"),
                score("baseline_decay"),
            );
            let better = base.min(decay);
            println!(
                "    {attack:<9} {agg:<10} byz_nsgdm {nsgdm:.3e}  baseline {base:.3e}  baseline_decay {decay:.3e}  factor {:.2}",
                better / nsgdm
            );
            ours.push(nsgdm);
            let in_band = (1e-6..=2e-5).contains(&nsgdm);
            if !(in_band && nsgdm < base && nsgdm < decay && better >= 1.5 * nsgdm) {
                failures.push(format!("{attack}/{agg}"));
            }
        }
    }
    let lo = ours.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ours.iter().cloned().fold(0.0, f64::max);
    outcome(
        failures.is_empty(),
        format!(
            "byz_nsgdm means span [{lo:.2e}, {hi:.2e}]; {} of 9 cells fail the band/ordering/factor test",
            failures.len()
        ),
    )
}

fn robustness() -> Outcome {
    let (n, b, dim) = (20, 3, 10);
    let opts = RobustnessOptions::new(10_000, dim, 2024);
    let mut lines = Vec::new();
    let mut passed = true;
    for rule in [Rule::Gm, Rule::Cwmed] {
        for nnm in [false, true] {
            let spec = AggregatorSpec::new(rule, n, b).with_nnm(nnm);
            match check_robustness(&spec, &opts) {
                Ok(r) => {
                    passed &= r.asserted && r.violations == 0 && opts.trials >= 10_000;
                    lines.push(format!(
                        "{} {} violations / {} instances (kappa_emp {:.3})",
                        spec.label(),
                        r.violations,
                        r.instances,
                        r.kappa_empirical.unwrap_or(f64::NAN)
                    ));
                }
                Err(e) => {
                    passed = false;
                    lines.push(format!("{}: {e}", spec.label()));
                }
            }
        }
    }
    let control = RobustnessOptions {
        kappa: Some(median_kappa(n, b)),
        ..opts
    };
    match check_robustness(&AggregatorSpec::new(Rule::Mean, n, b), &control) {
        Ok(r) => {
            passed &= r.violations > 0;
            lines.push(format!("mean control {} violations", r.violations));
        }
        Err(e) => {
            passed = false;
            lines.push(format!("mean control: {e}"));
        }
    }
    outcome(passed, lines.join("; "))
}

fn l0l1() -> Outcome {
    let quartic = Objective::new(ObjectiveSpec::Quartic { dim: 10 }, 1).unwrap();
    let opts = L0L1Options::new(10_000, 5.0, 7);
    let meta = quartic.smoothness();
    let right = check_l0l1(&quartic, &meta, &opts).unwrap();
    let wrong_meta = SmoothnessMeta {
        l0: 1e-6,
        l1: 1e-6,
        f_star: Some(0.0),
    };
    let wrong = check_l0l1(&quartic, &wrong_meta, &opts).unwrap();
    outcome(
        meta.l0 == 12.0 && meta.l1 == 3.0 && right.violations == 0 && right.instances == 10_000 && wrong.violations > 0,
        format!(
            "(12, 3): {} violations / {} segments, worst margin {:.3e}; (1e-6, 1e-6): {} violations",
            right.violations, right.instances, right.worst_margin, wrong.violations
        ),
    )
}

fn descent() -> Outcome {
    let mut configs = Vec::new();

    let mut single = quartic_config();
    single.n = 1;
    single.aggregator = AggregatorConfig::new(Rule::Mean, false);
    single.schedule = Schedule::practical_decay(0.02, 0.9);
    single.iterations = 1000;
    configs.push(single);

    let iterations = 1000;
    for attack in [AttackKind::BitFlip, AttackKind::Mimic, AttackKind::Alie] {
        for rule in [Rule::Gm, Rule::Cwmed] {
            for nnm in [false, true] {
                for theoretical in [true, false] {
                    let mut c = quartic_config();
                    c.oracle = OracleConfig::synthetic();
                    c.byzantine = 3;
                    c.attack = AttackSpec::new(attack);
                    c.aggregator = AggregatorConfig::new(rule, nnm);
                    c.iterations = iterations;
                    let kappa = theoretical_kappa(&c.aggregator_spec(), 10, None).unwrap();
                    let cap = gamma0_cap(3.0, kappa, iterations);
                    c.schedule = if theoretical {
                        Schedule::theoretical(cap, iterations)
                    } else {
                        Schedule::practical_decay(cap, 0.9)
                    };
                    configs.push(c);
                }
            }
        }
    }

    let (mut asserted, mut steps, mut violations, mut worst) = (0, 0, 0, f64::INFINITY);
    for c in &configs {
        let report = match run(c).and_then(|records| check_descent(c, &records)) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("error: {e}")),
        };
        if report.asserted {
            asserted += 1;
            steps += report.instances;
            violations += report.violations;
            worst = worst.min(report.worst_margin);
        }
    }
    outcome(
        asserted == configs.len() && violations == 0,
        format!(
            "{asserted}/{} runs within the cap, {violations} violations over {steps} steps, worst margin {worst:.3e}",
            configs.len()
        ),
    )
}

fn gradients() -> Outcome {
    let specs = [
        ObjectiveSpec::Quartic { dim: 10 },
        ObjectiveSpec::Softmax {
            dim: 30,
            classes: 10,
            samples_per_worker: 32,
            data_seed: 1,
        },
        ObjectiveSpec::Exponential {
            direction: vec![0.5, -0.25, 0.125, 1.0],
        },
    ];
    let mut passed = true;
    let mut lines = Vec::new();
    for spec in specs {
        let name = spec.name();
        let objective = Objective::new(spec, 17).unwrap();
        let r = check_gradient(&objective, 100, 1e-5, 5.0, 11).unwrap();
        passed &= r.instances == 100 && r.violations == 0;
        lines.push(format!(
            "{name} {}/{} points ok",
            r.instances - r.violations,
            r.instances
        ));
    }
    outcome(passed, lines.join(", "))
}

fn min_logged(config: &RunConfig) -> f64 {
    run_trajectory(config).map_or(f64::NAN, |t| t.min_grad_norm())
}

fn bias_floor() -> Outcome {
    let k = 4096;
    let mut clean = quartic_config();
    clean.iterations = k;
    clean.schedule = Schedule::theoretical(1.0, k);
    let clean_min = min_logged(&clean);

    let mut attacked = clean.clone();
    attacked.oracle = OracleConfig::synthetic();
    attacked.byzantine = 3;
    attacked.attack = AttackSpec::new(AttackKind::Alie);
    attacked.aggregator = AggregatorConfig::new(Rule::Cwmed, false);
    let trajectory = run_trajectory(&attacked).unwrap();
    let tail = &trajectory.records[trajectory.records.len() * 3 / 4..];
    let floor = tail.iter().map(|r| r.grad_norm).sum::<f64>() / tail.len() as f64;

    let objective = Objective::new(attacked.objective.clone(), attacked.good()).unwrap();
    let shifts = honest_shifts(&attacked).unwrap();
    let locals: Vec<LocalView<'_>> = shifts
        .iter()
        .map(|s| LocalView {
            shard: 0,
            shift: s,
            label_shift: 0,
        })
        .collect();
    let zeta = measure_heterogeneity(&objective, &locals, 100, 5.0, 0).unwrap();
    let kappa = theoretical_kappa(&attacked.aggregator_spec(), 10, None).unwrap();
    outcome(
        clean_min <= 1e-3 && floor > 0.0 && floor > clean_min,
        format!(
            "homogeneous min {clean_min:.3e}; attacked cwmed floor {floor:.3e} (min {:.3e}), 4·kappa·zeta = {:.3e}",
            trajectory.min_grad_norm(),
            4.0 * kappa * zeta
        ),
    )
}

fn rate_shape() -> Outcome {
    let ks = [256usize, 1024, 4096];
    let kappa = 0.0;
    let mins: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let mut c = quartic_config();
            c.aggregator = AggregatorConfig::new(Rule::Mean, false);
            c.iterations = k;
            c.schedule = Schedule::theoretical(gamma0_cap(3.0, kappa, k), k);
            min_logged(&c)
        })
        .collect();
    let logs: Vec<(f64, f64)> = ks
        .iter()
        .zip(&mins)
        .map(|(&k, &m)| ((k as f64).ln(), m.ln()))
        .collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    outcome(
        mins.windows(2).all(|w| w[1] <= w[0]) && slope < 0.0,
        format!(
            "min grad norm {:.4e}, {:.4e}, {:.4e}; log-log slope {slope:.4}",
            mins[0], mins[1], mins[2]
        ),
    )
}

fn cli(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_byzopt"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .stdout(Stdio::null())
        .status()
        .is_ok_and(|s| s.success())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut config = quartic_config();
    config.oracle = OracleConfig::synthetic();
    config.byzantine = 3;
    config.attack = AttackSpec::new(AttackKind::Alie);
    config.aggregator = AggregatorConfig::new(Rule::Gm, true);
    config.schedule = Schedule::practical_decay(0.1, 0.9);
    config.iterations = 500;
    config.seed = 9;
    write_json(&root.join("run.json"), &config).unwrap();

    let mut manifest: ExperimentManifest = table1_manifest(3);
    manifest.base.iterations = 200;
    manifest.base.log_every = 1;
    manifest.tuning = None;
    manifest.attacks = vec![AttackKind::BitFlip, AttackKind::Alie];
    write_json(&root.join("sweep.json"), &manifest).unwrap();

    let mut ok = true;
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "4")] {
        ok &= cli(
            &["run", "--config", "run.json", "--out", name, "--jobs", jobs],
            root,
        );
        ok &= cli(
            &[
                "sweep",
                "--config",
                "sweep.json",
                "--out",
                &format!("{name}-sweep"),
                "--jobs",
                jobs,
            ],
            root,
        );
    }
    if !ok {
        return outcome(false, "a CLI invocation failed");
    }
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for sub in ["", "-sweep"] {
        let reference = root.join(format!("a{sub}"));
        let mut names: Vec<_> = fs::read_dir(&reference)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for name in names {
            let want = fs::read(reference.join(&name)).unwrap();
            for other in ["b", "c"] {
                compared += 1;
                let got = fs::read(root.join(format!("{other}{sub}")).join(&name)).ok();
                if got.as_deref() != Some(&want[..]) {
                    mismatched.push(format!("{other}{sub}/{}", name.to_string_lossy()));
                }
            }
        }
    }
    outcome(
        mismatched.is_empty() && compared > 0,
        format!(
            "{compared} file comparisons across repeats and --jobs 1/4, {} mismatched",
            mismatched.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 table reproduction", table1),
        ("2 robustness certification", robustness),
        ("3 (L0,L1) property suite", l0l1),
        ("4 descent inequality", descent),
        ("5 gradient correctness", gradients),
        ("6 bias floor", bias_floor),
        ("7 rate shape", rate_shape),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = check();
        let status = if result.passed { "PASS" } else { "FAIL" };
        println!("{status} criterion {name}: {}", result.detail);
        failed += usize::from(!result.passed);
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
