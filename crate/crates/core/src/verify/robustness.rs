use rayon::prelude::*;
use serde_json::json;

use super::{trial_seed, CheckReport, Tally};
use crate::aggregators::{nearest_neighbors, nnm_kappa, theoretical_kappa, AggregatorSpec};
use crate::error::{ensure, Result};
use crate::rng::{streams, uniform_in_ball, RngStream};
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessOptions {
    pub trials: usize,
    pub dim: usize,
    pub seed: u64,
    /// Coefficient to assert instead of the closed form (e.g. to test the mean).
    pub kappa: Option<f64>,
    pub outlier_scale: f64,
    /// Good-set labelings are enumerated exhaustively up to this many.
    pub max_labelings: usize,
    /// Random labelings checked (besides the true one) above that limit.
    pub sampled_labelings: usize,
}

impl RobustnessOptions {
    pub fn new(trials: usize, dim: usize, seed: u64) -> Self {
        RobustnessOptions {
            trials,
            dim,
            seed,
            kappa: None,
            outlier_scale: 1e9,
            max_labelings: 2000,
            sampled_labelings: 256,
        }
    }
}

/// Bounded-leverage constant of a good set:
/// `max_j ‖x_j - x̄‖ / ((1/G) Σ_t ‖x_t - x̄‖)`, or `None` without dispersion.
pub fn leverage(good: &[&Vector]) -> Option<f64> {
    let mean = Vector::mean(good.iter().copied()).ok()?;
    let dists: Vec<f64> = good.iter().map(|v| v.distance(&mean)).collect();
    let avg = dists.iter().sum::<f64>() / dists.len() as f64;
    let max = dists.iter().cloned().fold(0.0, f64::max);
    (avg > 0.0).then(|| max / avg)
}

struct Instance {
    vectors: Vec<Vector>,
    good: Vec<usize>,
}

fn unit(rng: &mut RngStream, dim: usize) -> Vector {
    loop {
        let v = Vector::new((0..dim).map(|_| rng.standard_normal()).collect());
        let n = v.norm();
        if n > 0.0 {
            return v.scale(1.0 / n);
        }
    }
}

fn gaussian(rng: &mut RngStream, center: &Vector, scale: f64) -> Vector {
    let mut v = center.clone();
    for j in 0..v.dim() {
        v[j] += scale * rng.standard_normal();
    }
    v
}

/// Good vectors from one of three families, then Byzantine vectors from one
/// of five, at random positions.
fn sample_instance(spec: &AggregatorSpec, opts: &RobustnessOptions, trial: usize) -> Instance {
    let mut rng = RngStream::new(trial_seed(opts.seed, trial), streams::FUZZ);
    let (n, b, d) = (spec.n, spec.byzantine, opts.dim);
    let g = n - b;
    let center = Vector::new((0..d).map(|_| 10.0 * rng.standard_normal()).collect());
    let scale = 10f64.powf(rng.uniform(-3.0, 2.0));

    let good: Vec<Vector> = match trial % 3 {
        0 => (0..g).map(|_| gaussian(&mut rng, &center, scale)).collect(),
        1 => {
            let clusters = 2 + rng.index(2);
            let centers: Vec<Vector> = (0..clusters)
                .map(|_| gaussian(&mut rng, &center, 5.0 * scale))
                .collect();
            let spread = scale * 10f64.powf(rng.uniform(-3.0, -1.0));
            (0..g)
                .map(|i| gaussian(&mut rng, &centers[i % clusters], spread))
                .collect()
        }
        _ => (0..g)
            .map(|i| {
                let s = if i < 2 { 100.0 * scale } else { scale };
                gaussian(&mut rng, &center, s)
            })
            .collect(),
    };

    let mean = Vector::mean(&good).expect("non-empty");
    let mut std = Vector::zeros(d);
    for v in &good {
        for j in 0..d {
            std[j] += (v[j] - mean[j]).powi(2) / g as f64;
        }
    }
    let std = Vector::new(std.iter().map(|s| s.sqrt()).collect());
    let adversary = (trial / 3) % 5;
    let shift_dir = unit(&mut rng, d);
    let z = rng.uniform(-3.0, 3.0);
    let bad: Vec<Vector> = (0..b)
        .map(|_| {
            let kind = if adversary == 4 {
                rng.index(4)
            } else {
                adversary
            };
            match kind {
                0 => unit(&mut rng, d).scale(opts.outlier_scale),
                1 => good[rng.index(g)].clone(),
                2 => {
                    let t = [0.5, 1.0, 3.0, 10.0, 100.0][rng.index(5)];
                    let mut v = mean.clone();
                    v.axpy(t * scale, &shift_dir);
                    v
                }
                _ => {
                    let mut v = mean.clone();
                    v.axpy(z, &std);
                    v
                }
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.index(i + 1));
    }
    let mut vectors = vec![Vector::zeros(d); n];
    let mut good_positions = Vec::with_capacity(g);
    for (slot, &pos) in order.iter().enumerate() {
        if slot < g {
            vectors[pos] = good[slot].clone();
            good_positions.push(pos);
        } else {
            vectors[pos] = bad[slot - g].clone();
        }
    }
    good_positions.sort_unstable();
    Instance {
        vectors,
        good: good_positions,
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut c: usize = 1;
    for i in 0..k {
        c = c.saturating_mul(n - i) / (i + 1);
    }
    c
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        let Some(i) = (0..k).rev().find(|&i| current[i] < n - k + i) else {
            return out;
        };
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Good sets to quantify over: every `G`-subset when there are few enough,
/// otherwise the true one plus random ones.
fn labelings(
    instance: &Instance,
    n: usize,
    b: usize,
    opts: &RobustnessOptions,
    rng: &mut RngStream,
) -> Vec<Vec<usize>> {
    let complement =
        |excluded: &[usize]| -> Vec<usize> { (0..n).filter(|i| !excluded.contains(i)).collect() };
    if binomial(n, b) <= opts.max_labelings {
        return combinations(n, b).iter().map(|c| complement(c)).collect();
    }
    let mut out = vec![instance.good.clone()];
    for _ in 0..opts.sampled_labelings {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..b {
            let j = i + rng.index(n - i);
            idx.swap(i, j);
        }
        out.push(complement(&idx[..b]));
    }
    out
}

struct TrialOutcome {
    tally: Tally,
    kappa_max: f64,
}

fn check_instance(
    spec: &AggregatorSpec,
    opts: &RobustnessOptions,
    trial: usize,
    base_kappa: Option<f64>,
) -> Result<TrialOutcome> {
    let instance = sample_instance(spec, opts, trial);
    let output = spec.aggregate(&instance.vectors)?;
    let mut rng = RngStream::new(trial_seed(opts.seed, trial), streams::FUZZ - 1);
    let g = spec.good();
    let mut tally = Tally::default();
    let mut kappa_max: f64 = 0.0;
    for set in labelings(&instance, spec.n, spec.byzantine, opts, &mut rng) {
        let members: Vec<&Vector> = set.iter().map(|&i| &instance.vectors[i]).collect();
        let mean = Vector::mean(members.iter().copied())?;
        let dispersion: f64 = members.iter().map(|v| v.distance(&mean)).sum();
        let lhs = output.distance(&mean);
        if dispersion > 0.0 {
            kappa_max = kappa_max.max(lhs * g as f64 / dispersion);
        } else if lhs > 0.0 {
            kappa_max = f64::INFINITY;
        }
        let Some(base) = base_kappa else { continue };
        let kappa = if spec.nnm && opts.kappa.is_none() {
            match leverage(&members) {
                Some(c) => nnm_kappa(base, spec.n, spec.byzantine, c),
                None => 0.0,
            }
        } else {
            base
        };
        let rhs = kappa / g as f64 * dispersion;
        let magnitude = members.iter().map(|v| v.norm()).fold(0.0, f64::max);
        tally.record(lhs, rhs, 1e-9 * (rhs + magnitude));
    }
    Ok(TrialOutcome { tally, kappa_max })
}

/// Fuzzes the robustness inequality
/// `‖agg(v) - v̄_S‖ <= (κ/G) Σ_{i∈S} ‖v_i - v̄_S‖` over good sets `S`.
///
/// `κ` is `opts.kappa` when given, else the closed form. NNM compositions
/// use `(8κ+4) α C` with the leverage `C` of each good set. Rules without a
/// closed form only report `kappa_empirical`. A violation is an excess over
/// `1e-9 (rhs + max_{i∈S} ‖v_i‖)`.
pub fn check_robustness(spec: &AggregatorSpec, opts: &RobustnessOptions) -> Result<CheckReport> {
    spec.validate()?;
    ensure(opts.trials >= 1, || {
        "robustness check needs at least one trial".into()
    })?;
    ensure(opts.dim >= 1, || "robustness check needs dim >= 1".into())?;
    let closed_form = theoretical_kappa(
        &AggregatorSpec {
            nnm: false,
            ..*spec
        },
        opts.dim,
        None,
    );
    let base_kappa = opts.kappa.or(closed_form);

    let outcomes = (0..opts.trials)
        .into_par_iter()
        .map(|trial| check_instance(spec, opts, trial, base_kappa))
        .collect::<Result<Vec<_>>>()?;
    let mut tally = Tally::default();
    let mut kappa_empirical: f64 = 0.0;
    for o in &outcomes {
        tally.merge(&o.tally);
        kappa_empirical = kappa_empirical.max(o.kappa_max);
    }
    let instances = tally.instances;
    let mut report = tally.report(
        &format!("robustness/{}", spec.label()),
        base_kappa.is_some(),
        json!({
            "rule": spec.label(),
            "n": spec.n,
            "byzantine": spec.byzantine,
            "dim": opts.dim,
            "trials": opts.trials,
            "seed": opts.seed,
            "kappa": base_kappa,
            "kappa_override": opts.kappa.is_some(),
            "outlier_scale": opts.outlier_scale,
            "labelings_per_trial": if base_kappa.is_some() { instances / opts.trials } else { 0 },
        }),
    );
    if base_kappa.is_none() {
        report.instances = opts.trials;
    }
    report.kappa_empirical = Some(kappa_empirical);
    Ok(report)
}

/// Exhaustive check of the NNM pairing property and the pivot bound
/// `‖y_μ - x̄_S‖ <= (2/G) Σ_{j∈S∖N_μ} ‖x_j - μ‖` over every good set `S`,
/// with pivots at every input and at random points.
pub fn check_nnm_pairing(
    n: usize,
    byzantine: usize,
    dim: usize,
    trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    ensure(n <= 12 && 2 * byzantine < n, || {
        format!(
            "pairing check enumerates subsets; need n <= 12 and B < n/2, got n={n} B={byzantine}"
        )
    })?;
    let g = n - byzantine;
    let sets = combinations(n, g);
    let mut tally = Tally::default();
    for trial in 0..trials {
        let mut rng = RngStream::new(trial_seed(seed, trial), streams::FUZZ);
        let vectors: Vec<Vector> = (0..n)
            .map(|_| {
                let s = 10f64.powf(rng.uniform(-2.0, 3.0));
                uniform_in_ball(&mut rng, dim, s)
            })
            .collect();
        let mut pivots = vectors.clone();
        pivots.extend((0..n).map(|_| uniform_in_ball(&mut rng, dim, 100.0)));
        for mu in &pivots {
            let neighbors = nearest_neighbors(&vectors, mu, g);
            let y = Vector::mean(neighbors.iter().map(|&j| &vectors[j]))?;
            for set in &sets {
                let inside_only: f64 = neighbors
                    .iter()
                    .filter(|j| !set.contains(j))
                    .map(|&j| vectors[j].distance(mu))
                    .sum();
                let outside_only: f64 = set
                    .iter()
                    .filter(|j| !neighbors.contains(j))
                    .map(|&j| vectors[j].distance(mu))
                    .sum();
                let tol = 1e-12 * (1.0 + inside_only + outside_only);
                tally.record(inside_only, outside_only, tol);
                let mean = Vector::mean(set.iter().map(|&j| &vectors[j]))?;
                let scale = mean.norm() + y.norm();
                tally.record(
                    y.distance(&mean),
                    2.0 / g as f64 * outside_only,
                    1e-12 * (1.0 + scale),
                );
            }
        }
    }
    Ok(tally.report(
        "nnm_pairing",
        true,
        json!({ "n": n, "byzantine": byzantine, "dim": dim, "trials": trials, "seed": seed }),
    ))
}
