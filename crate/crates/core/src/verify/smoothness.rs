use serde_json::json;

use super::{trial_seed, CheckReport, Tally};
use crate::error::{ensure, Result};
use crate::objectives::{LocalView, Objective, SmoothnessMeta};
use crate::rng::{streams, uniform_in_ball, RngStream};
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L0L1Options {
    pub trials: usize,
    pub radius: f64,
    /// Points on each segment used to approximate the supremum of `‖∇f‖`.
    pub grid_points: usize,
    pub seed: u64,
}

impl L0L1Options {
    pub fn new(trials: usize, radius: f64, seed: u64) -> Self {
        L0L1Options {
            trials,
            radius,
            grid_points: 101,
            seed,
        }
    }
}

fn tolerance(lhs: f64, rhs: f64) -> f64 {
    1e-9 + 1e-9 * lhs.abs().max(rhs.abs())
}

/// Checks `(L0, L1)`-smoothness and its consequences on random segments
/// `[x, y]` inside a ball:
///
/// * `‖∇f(x) - ∇f(y)‖ <= (L0 + L1 sup_{u∈[x,y]} ‖∇f(u)‖) ‖x - y‖`;
/// * `‖∇f(x) - ∇f(y)‖ <= (L0 + L1 ‖∇f(y)‖) exp(L1 ‖x - y‖) ‖x - y‖`;
/// * `f(y) <= f(x) + <∇f(x), y - x> + (L0 + L1 ‖∇f(x)‖)/2 exp(L1 ‖x - y‖) ‖y - x‖²`;
/// * `‖∇f(x)‖² / (4 (L0 + L1 ‖∇f(x)‖)) <= f(x) - f*` when `f*` is known.
///
/// A segment counts as one violation if any inequality fails by more than
/// `1e-9 + 1e-9 max(|lhs|, |rhs|)`.
pub fn check_l0l1(
    objective: &Objective,
    meta: &SmoothnessMeta,
    opts: &L0L1Options,
) -> Result<CheckReport> {
    ensure(opts.grid_points >= 2, || "grid_points must be >= 2".into())?;
    ensure(opts.radius >= 0.0, || "radius must be >= 0".into())?;
    let (l0, l1) = (meta.l0, meta.l1);
    let dim = objective.dim();
    let mut tally = Tally::default();
    let mut item_violations = [0usize; 4];
    for trial in 0..opts.trials {
        let mut rng = RngStream::new(trial_seed(opts.seed, trial), streams::VERIFY);
        let x = uniform_in_ball(&mut rng, dim, opts.radius);
        // Every tenth segment is short, where the exponential factors are tight.
        let y = if trial % 10 == 9 {
            let mut y = x.clone();
            y.axpy(1.0, &uniform_in_ball(&mut rng, dim, 1e-3));
            y
        } else {
            uniform_in_ball(&mut rng, dim, opts.radius)
        };
        let gx = objective.gradient(&x)?;
        let gy = objective.gradient(&y)?;
        let (fx, fy) = (objective.value(&x)?, objective.value(&y)?);
        let dist = x.distance(&y);
        let diff = gx.distance(&gy);

        let steps = opts.grid_points - 1;
        let mut sup = 0.0f64;
        for t in 0..=steps {
            let s = t as f64 / steps as f64;
            let mut u = x.scale(1.0 - s);
            u.axpy(s, &y);
            sup = sup.max(objective.gradient(&u)?.norm());
        }

        let mut checks = [(0.0, 0.0); 4];
        checks[0] = (diff, (l0 + l1 * sup) * dist);
        checks[1] = (diff, (l0 + l1 * gy.norm()) * (l1 * dist).exp() * dist);
        let linear = gx.dot(&y.sub(&x)?)?;
        checks[2] = (
            fy,
            fx + linear + 0.5 * (l0 + l1 * gx.norm()) * (l1 * dist).exp() * dist * dist,
        );
        let mut items = 3;
        if let Some(f_star) = meta.f_star {
            let g = gx.norm();
            checks[3] = (g * g / (4.0 * (l0 + l1 * g)), fx - f_star);
            items = 4;
        }

        let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
        let mut violated = false;
        for (i, &(lhs, rhs)) in checks[..items].iter().enumerate() {
            let excess = lhs - rhs - tolerance(lhs, rhs);
            if excess.is_nan() || excess > 0.0 {
                item_violations[i] += 1;
                violated = true;
            }
            if excess > worst.0 || excess.is_nan() {
                worst = (excess, lhs, rhs);
            }
        }
        // Record the tightest inequality of the segment.
        let (_, lhs, rhs) = worst;
        tally.record(
            lhs,
            rhs,
            if violated {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            },
        );
    }
    Ok(tally.report(
        "l0l1",
        true,
        json!({
            "objective": objective.spec().name(),
            "l0": l0,
            "l1": l1,
            "f_star": meta.f_star,
            "trials": opts.trials,
            "radius": opts.radius,
            "grid_points": opts.grid_points,
            "seed": opts.seed,
            "violations_by_item": {
                "assumption": item_violations[0],
                "gradient_lipschitz": item_violations[1],
                "function_value": item_violations[2],
                "gradient_norm": item_violations[3],
            },
        }),
    ))
}

/// Checks the bound on the average local gradient norm,
/// `(1/G) Σ ‖∇f_i(x)‖ <= 8 L1 (f(x) - f*) + (8 L1/G) Σ (f* - f_i*) + L0/L1`,
/// for the shifted local objectives `f_i = f + <s_i, x>`, with each `f_i*`
/// found numerically.
pub fn check_lemma2(
    objective: &Objective,
    meta: &SmoothnessMeta,
    shifts: &[Vector],
    trials: usize,
    radius: f64,
    seed: u64,
) -> Result<CheckReport> {
    ensure(!shifts.is_empty(), || {
        "need at least one local objective".into()
    })?;
    ensure(meta.l1 > 0.0, || "bound needs L1 > 0".into())?;
    let f_star = meta
        .f_star
        .ok_or_else(|| crate::Error::config("bound needs the global minimum value"))?;
    let g = shifts.len() as f64;
    let mut gap = 0.0;
    for s in shifts {
        gap += f_star - objective.local_min_value(s)?;
    }
    let gap = gap / g;
    let mut tally = Tally::default();
    let mut rng = RngStream::new(seed, streams::VERIFY);
    for _ in 0..trials {
        let x = uniform_in_ball(&mut rng, objective.dim(), radius);
        let mut lhs = 0.0;
        for s in shifts {
            let local = LocalView {
                shard: 0,
                shift: s,
                label_shift: 0,
            };
            lhs += objective.local_gradient(&x, local)?.norm();
        }
        let lhs = lhs / g;
        let rhs = 8.0 * meta.l1 * (objective.value(&x)? - f_star)
            + 8.0 * meta.l1 * gap
            + meta.l0 / meta.l1;
        tally.record(lhs, rhs, tolerance(lhs, rhs));
    }
    Ok(tally.report(
        "local_gradient_sum",
        true,
        json!({
            "objective": objective.spec().name(),
            "l0": meta.l0,
            "l1": meta.l1,
            "workers": shifts.len(),
            "mean_gap": gap,
            "trials": trials,
            "radius": radius,
            "seed": seed,
        }),
    ))
}

/// Central finite differences against the analytic gradient at the origin
/// and at random points of norm at most `radius`. Each point passes when
/// every coordinate has relative error at most `1e-5`, measured against
/// `max(|g_j|, 1e-3 ‖g‖, 1e-8)`.
pub fn check_gradient(
    objective: &Objective,
    trials: usize,
    h: f64,
    radius: f64,
    seed: u64,
) -> Result<CheckReport> {
    ensure(h > 0.0, || "finite-difference step must be positive".into())?;
    let dim = objective.dim();
    let mut tally = Tally::default();
    let mut rng = RngStream::new(seed, streams::VERIFY);
    for trial in 0..trials {
        let x = if trial == 0 {
            Vector::zeros(dim)
        } else {
            uniform_in_ball(&mut rng, dim, radius)
        };
        let g = objective.gradient(&x)?;
        let floor = (1e-3 * g.norm()).max(1e-8);
        let mut worst = 0.0f64;
        for j in 0..dim {
            let mut plus = x.clone();
            plus[j] += h;
            let mut minus = x.clone();
            minus[j] -= h;
            let fd = (objective.value(&plus)? - objective.value(&minus)?) / (2.0 * h);
            let err = (fd - g[j]).abs() / g[j].abs().max(floor);
            worst = if err.is_nan() {
                f64::NAN
            } else {
                worst.max(err)
            };
        }
        tally.record(worst, 1e-5, 0.0);
    }
    Ok(tally.report(
        "gradient",
        true,
        json!({
            "objective": objective.spec().name(),
            "trials": trials,
            "h": h,
            "radius": radius,
            "seed": seed,
        }),
    ))
}

/// `sqrt(mean_i ‖∇f_i(x) - ∇f(x)‖²)` over the given local objectives.
pub fn heterogeneity_at(
    objective: &Objective,
    locals: &[LocalView<'_>],
    x: &Vector,
) -> Result<f64> {
    ensure(!locals.is_empty(), || {
        "need at least one local objective".into()
    })?;
    let global = objective.gradient(x)?;
    let mut total = 0.0;
    for &local in locals {
        total += objective.local_gradient(x, local)?.distance_sq(&global);
    }
    Ok((total / locals.len() as f64).sqrt())
}

/// Empirical heterogeneity `ζ`: the largest [`heterogeneity_at`] over
/// `points` random points of norm at most `radius`.
pub fn measure_heterogeneity(
    objective: &Objective,
    locals: &[LocalView<'_>],
    points: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    ensure(points >= 1, || "need at least one point".into())?;
    let mut rng = RngStream::new(seed, streams::VERIFY);
    let mut zeta = 0.0f64;
    for _ in 0..points {
        let x = uniform_in_ball(&mut rng, objective.dim(), radius);
        zeta = zeta.max(heterogeneity_at(objective, locals, &x)?);
    }
    Ok(zeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_shifts, ObjectiveSpec};

    fn quartic(dim: usize) -> Objective {
        Objective::new(ObjectiveSpec::Quartic { dim }, 1).unwrap()
    }

    fn views(shifts: &[Vector]) -> Vec<LocalView<'_>> {
        shifts
            .iter()
            .map(|s| LocalView {
                shard: 0,
                shift: s,
                label_shift: 0,
            })
            .collect()
    }

    #[test]
    fn quartic_constants_hold() {
        let q = quartic(10);
        let report = check_l0l1(&q, &q.smoothness(), &L0L1Options::new(500, 5.0, 1)).unwrap();
        assert_eq!(report.violations, 0, "{report:?}");
        assert!(report.worst_margin >= 0.0);
    }

    #[test]
    fn wrong_constants_detected() {
        let q = quartic(10);
        let meta = SmoothnessMeta {
            l0: 1e-6,
            l1: 1e-6,
            f_star: Some(0.0),
        };
        let report = check_l0l1(&q, &meta, &L0L1Options::new(100, 5.0, 1)).unwrap();
        assert!(report.violations > 0);
        assert!(report.worst_margin < 0.0);
    }

    #[test]
    fn zero_segment_holds() {
        let q = quartic(3);
        let report = check_l0l1(&q, &q.smoothness(), &L0L1Options::new(20, 0.0, 1)).unwrap();
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn exponential_constants_hold() {
        let e = Objective::new(
            ObjectiveSpec::Exponential {
                direction: vec![0.3, -0.4],
            },
            1,
        )
        .unwrap();
        let report = check_l0l1(&e, &e.smoothness(), &L0L1Options::new(300, 3.0, 2)).unwrap();
        assert_eq!(report.violations, 0, "{report:?}");
    }

    #[test]
    fn local_gradient_sum_bound() {
        let q = quartic(5);
        let mut rng = RngStream::new(4, streams::SHIFTS);
        let shifts = make_shifts(&mut rng, 6, 5, 1e-3).unwrap();
        let report = check_lemma2(&q, &q.smoothness(), &shifts, 200, 3.0, 0).unwrap();
        assert_eq!(report.violations, 0, "{report:?}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let softmax = Objective::new(
            ObjectiveSpec::Softmax {
                dim: 12,
                classes: 3,
                samples_per_worker: 8,
                data_seed: 1,
            },
            4,
        )
        .unwrap();
        for obj in [quartic(10), softmax] {
            let report = check_gradient(&obj, 50, 1e-5, 5.0, 3).unwrap();
            assert_eq!(report.violations, 0, "{report:?}");
        }
    }

    #[test]
    fn heterogeneity_examples() {
        let q = quartic(4);
        let zeros = vec![Vector::zeros(4); 3];
        assert_eq!(
            measure_heterogeneity(&q, &views(&zeros), 5, 2.0, 0).unwrap(),
            0.0
        );

        let mut e1 = Vector::zeros(4);
        e1[0] = 1.0;
        let pair = vec![e1.clone(), e1.scale(-1.0)];
        let zeta = measure_heterogeneity(&q, &views(&pair), 5, 2.0, 0).unwrap();
        assert!((zeta - 1.0).abs() < 1e-12);

        let mut rng = RngStream::new(8, streams::SHIFTS);
        let shifts = make_shifts(&mut rng, 5, 4, 0.1).unwrap();
        let expected = (shifts.iter().map(|s| s.norm_sq()).sum::<f64>() / 5.0).sqrt();
        let x = Vector::new(vec![0.3, 1.0, -2.0, 0.0]);
        let at_x = heterogeneity_at(&q, &views(&shifts), &x).unwrap();
        assert!((at_x - expected).abs() < 1e-12 * (1.0 + expected));
    }
}
