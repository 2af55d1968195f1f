//! Acceptance run: one line per criterion.
//!
//! The UCI student-por CSV is read from `EFFORTSIM_STUDENT_CSV` or
//! `data/student-por.csv`. Without it, criteria that only make sense on the
//! real records print FAIL as not evaluated, and the remaining ones run on
//! the synthetic stand-in (`configs/synthetic-student.json`). A clause that
//! contradicts the threshold-reward exclusion rule also prints FAIL, with the
//! measured evidence. The process fails on any other failing check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, UnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use effortsim::commands::{read_predictor, simulate_model};
use effortsim::config::ExperimentConfig;
use effortsim::io::write_population;
use effortsim::pipeline::{self, fit_model, load_dataset, pair_table};
use effortsim_core::fairness::{residual_differences, PairTable};
use effortsim_core::predictors::{evaluate, fit_constrained_linear_detailed, fit_linear, GdSettings};
use effortsim_core::segregation::{
    absolute_clustering, atkinson, spectral_segregation, DistanceMatrix, Neighborhoods,
};
use effortsim_core::{Direction, FeatureFilter, FeatureKind, PairEvaluator, Population, Predictor, Regressor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const STUDENT_ROWS: usize = 649;
const STUDENT_FEATURES: usize = 23;
const STUDENT_BINARY: usize = 10;
const STUDENT_SPLIT: (usize, usize) = (454, 195);
const LOAD_BUDGET: Duration = Duration::from_secs(1);

const MAE_OVERALL: (f64, f64) = (1.7, 2.4);
const MAE_GROUP: (f64, f64) = (1.6, 2.5);
const FIT_BUDGET: Duration = Duration::from_secs(5);

const EFFORT_REWARD_RATIO: f64 = 2.0;
const POSITIVE_RESIDUAL: (f64, f64) = (0.296, 0.228);
const POSITIVE_RESIDUAL_TOL: f64 = 0.15;
const CONTRAST_BUDGET: Duration = Duration::from_secs(30);

const CURVE_POINTS: usize = 20;
const ENDPOINT_TOL: f64 = 1e-12;

const ATKINSON_CONFIGS: usize = 1000;
const ATKINSON_TOL: f64 = 1e-9;
const SSI_TOL: f64 = 1e-8;
const ACI_TOL: f64 = 1e-12;

const PIPELINE_BUDGET: Duration = Duration::from_secs(120);

const MUTABLE_MODEL: &str = "ridge_mutable";
const COMBINED_MODEL: &str = "ridge_combined";

enum Verdict {
    Pass(String),
    Fail(String),
    /// Printed as FAIL: cannot be met here (missing data, or the conflict
    /// described in the README), so it does not fail the run.
    Red(String),
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn student_csv() -> Option<PathBuf> {
    std::env::var_os("EFFORTSIM_STUDENT_CSV")
        .map(PathBuf::from)
        .or_else(|| Some(root().join("data/student-por.csv")))
        .filter(|p| p.is_file())
}

struct Source {
    real: bool,
    label: String,
    config: PathBuf,
    cfg: ExperimentConfig,
}

fn source(dir: &Path) -> Source {
    let csv = student_csv();
    let name = if csv.is_some() { "student.json" } else { "synthetic-student.json" };
    let mut v: Value = serde_json::from_str(&fs::read_to_string(root().join("configs").join(name)).unwrap()).unwrap();
    v["schema"] = json!(root().join("data/student-por.schema.json"));
    if let Some(path) = &csv {
        v["data"] = json!(path);
    }
    let config = dir.join(name);
    fs::write(&config, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let (cfg, _) = ExperimentConfig::load(&config).unwrap();
    Source {
        real: csv.is_some(),
        label: match csv {
            Some(p) => format!("student-por ({})", p.display()),
            None => "synthetic stand-in".into(),
        },
        config,
        cfg,
    }
}

fn within(v: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&v)
}

fn model<'a>(cfg: &'a ExperimentConfig, name: &str) -> &'a effortsim::config::ModelSpec {
    cfg.models.iter().find(|m| m.name == name).unwrap_or_else(|| panic!("config has no model `{name}`"))
}

fn fitted(cfg: &ExperimentConfig, train: &Population, name: &str) -> (Population, Predictor) {
    let spec = model(cfg, name);
    let pop = train.restrict_features(spec.features).unwrap();
    let h = fit_model(spec, cfg, &pop).unwrap();
    (pop, h)
}

fn not_evaluated(src: &Source) -> Verdict {
    Verdict::Red(format!("not evaluated: student-por CSV absent (set EFFORTSIM_STUDENT_CSV); ran on {}", src.label))
}

fn dataset_fidelity(src: &Source) -> Verdict {
    if !src.real {
        let data = load_dataset(&src.cfg).unwrap();
        let schema = data.full.restrict_features(FeatureFilter::MutablePlusSensitive).unwrap().schema().clone();
        return Verdict::Red(format!(
            "not evaluated: student-por CSV absent (set EFFORTSIM_STUDENT_CSV); shipped schema keeps {} features ({} binary)",
            schema.len(),
            schema.binary_count()
        ));
    }
    let start = Instant::now();
    let data = load_dataset(&src.cfg).unwrap();
    let restricted = data.full.restrict_features(FeatureFilter::MutablePlusSensitive).unwrap();
    let elapsed = start.elapsed();
    let (n, k, b) = (data.full.len(), restricted.schema().len(), restricted.schema().binary_count());
    let split = (data.train.len(), data.test.len());
    let detail = format!("{n} rows, {k} features ({b} binary), split {}/{}, {elapsed:.2?}", split.0, split.1);
    if n == STUDENT_ROWS && k == STUDENT_FEATURES && b == STUDENT_BINARY && split == STUDENT_SPLIT && elapsed < LOAD_BUDGET {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn model_error(src: &Source) -> Verdict {
    if !src.real {
        return not_evaluated(src);
    }
    let start = Instant::now();
    let data = load_dataset(&src.cfg).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for name in [MUTABLE_MODEL, COMBINED_MODEL] {
        let (_, h) = fitted(&src.cfg, &data.train, name);
        let test = data.test.restrict_features(model(&src.cfg, name).features).unwrap();
        let fit = evaluate(&h, &test).unwrap();
        ok &= within(fit.mae_overall, MAE_OVERALL);
        ok &= fit.mae_per_group.iter().all(|g| within(g.mae, MAE_GROUP));
        let groups: Vec<String> = fit.mae_per_group.iter().map(|g| format!("{} {:.3}", g.name, g.mae)).collect();
        parts.push(format!("{name} test MAE {:.3} ({})", fit.mae_overall, groups.join(", ")));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < FIT_BUDGET;
    let detail = format!("{}; {elapsed:.2?}", parts.join("; "));
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn effort_reward_contrast(src: &Source) -> Verdict {
    if !src.real {
        return not_evaluated(src);
    }
    let start = Instant::now();
    let data = load_dataset(&src.cfg).unwrap();
    let mut disparity = Vec::new();
    let mut positive = Vec::new();
    for name in [COMBINED_MODEL, MUTABLE_MODEL] {
        let (pop, h) = fitted(&src.cfg, &data.train, name);
        let table = pair_table(&h, &pop, &src.cfg.effort, &src.cfg, 1).unwrap();
        disparity.push(table.effort_reward().disparity.unwrap_or(f64::NAN));
        positive.push(residual_differences(&h, &pop).0.disparity.unwrap_or(f64::NAN));
    }
    let elapsed = start.elapsed();
    let ok = disparity[0] > EFFORT_REWARD_RATIO * disparity[1]
        && (positive[0] - POSITIVE_RESIDUAL.0).abs() <= POSITIVE_RESIDUAL_TOL
        && (positive[1] - POSITIVE_RESIDUAL.1).abs() <= POSITIVE_RESIDUAL_TOL
        && elapsed < CONTRAST_BUDGET;
    let detail = format!(
        "effort-reward disparity {:.3} vs {:.3}; positive residual difference {:.3} / {:.3}; {elapsed:.2?}",
        disparity[0], disparity[1], positive[0], positive[1]
    );
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

struct Point {
    delta: f64,
    value: Option<f64>,
    feasibility: Option<f64>,
}

fn curves(path: &Path) -> BTreeMap<(String, String), Vec<Point>> {
    let mut out: BTreeMap<(String, String), Vec<Point>> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(path).unwrap();
    for rec in reader.records() {
        let rec = rec.unwrap();
        let cell = |k: usize| rec.get(k).filter(|c| !c.is_empty()).map(|c| c.parse::<f64>().unwrap());
        out.entry((rec[0].to_string(), rec[1].to_string())).or_default().push(Point {
            delta: rec[2].parse().unwrap(),
            value: cell(3),
            feasibility: cell(4),
        });
    }
    out
}

fn group_mean(pop: &Population, group: &str, per: impl Fn(usize) -> Option<f64>) -> Option<f64> {
    let values: Vec<f64> = (0..pop.len())
        .filter(|&i| pop.schema().group_name(pop.individual(i).group) == group)
        .filter_map(per)
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn best_reward_by_scan(t: &PairTable, n: usize, i: usize, delta: f64) -> Option<f64> {
    let best = (0..n)
        .filter(|&j| t.effort(i, j).is_finite() && t.effort(i, j) <= delta)
        .map(|j| t.reward(i, j))
        .fold(f64::NEG_INFINITY, f64::max);
    Some(if best.is_finite() { best } else { 0.0 })
}

fn least_effort_by_scan(t: &PairTable, n: usize, i: usize, delta: f64) -> Option<f64> {
    let least = (0..n)
        .filter(|&j| t.effort(i, j).is_finite() && t.reward(i, j) >= delta)
        .map(|j| t.effort(i, j))
        .fold(f64::INFINITY, f64::min);
    least.is_finite().then_some(least)
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= ENDPOINT_TOL * (1.0 + a.abs()),
        (None, None) => true,
        _ => false,
    }
}

fn curve_monotonicity(src: &Source, out: &Path) -> Verdict {
    let data = load_dataset(&src.cfg).unwrap();
    let be = curves(&out.join("fairness/bounded_effort.csv"));
    let tr = curves(&out.join("fairness/threshold_reward.csv"));
    let mut problems = Vec::new();
    // group means over a shrinking feasible cohort
    let mut dips = Vec::new();
    let mut checked = 0;
    for spec in &src.cfg.models {
        let (pop, _) = fitted(&src.cfg, &data.train, &spec.name);
        let h = read_predictor(&out.join(format!("fairness/models/{}.json", spec.name))).unwrap();
        let t = pair_table(&h, &pop, &src.cfg.effort, &src.cfg, 1).unwrap();
        let n = pop.len();
        for &g in pop.groups() {
            let group = pop.schema().group_name(g);
            let key = (spec.name.clone(), group.clone());
            for (bounded, family) in [(true, &be), (false, &tr)] {
                let kind = if bounded { "bounded-effort" } else { "threshold-reward" };
                let Some(curve) = family.get(&key) else {
                    problems.push(format!("{kind} {} / {group} missing", spec.name));
                    continue;
                };
                checked += 1;
                if curve.len() != CURVE_POINTS || curve[0].delta != 0.0 {
                    problems.push(format!("{kind} {} / {group}: {} points", spec.name, curve.len()));
                    continue;
                }
                let (lo, hi) = (&curve[0], &curve[curve.len() - 1]);
                let expect = if bounded {
                    let top = t.max_finite_effort();
                    [
                        group_mean(&pop, &group, |i| best_reward_by_scan(&t, n, i, 0.0)),
                        group_mean(&pop, &group, |i| best_reward_by_scan(&t, n, i, top)),
                    ]
                } else {
                    let top = t.max_reachable_reward();
                    [
                        group_mean(&pop, &group, |i| least_effort_by_scan(&t, n, i, 0.0)),
                        group_mean(&pop, &group, |i| least_effort_by_scan(&t, n, i, top)),
                    ]
                };
                if !close(lo.value, expect[0]) || !close(hi.value, expect[1]) {
                    problems.push(format!(
                        "{kind} {} / {group} endpoints {:?}, {:?} vs closed forms {:?}",
                        spec.name, lo.value, hi.value, expect
                    ));
                }
                let values: Vec<Option<f64>> = curve.iter().map(|p| p.value).collect();
                if bounded {
                    if values.iter().any(Option::is_none) || values.windows(2).any(|w| w[1] < w[0]) {
                        problems.push(format!("{kind} {} / {group} not nondecreasing: {values:?}", spec.name));
                    }
                    continue;
                }
                let feas: Vec<f64> = curve.iter().map(|p| p.feasibility.unwrap_or(f64::NAN)).collect();
                if feas.windows(2).any(|w| !(w[1] <= w[0])) {
                    problems.push(format!("{kind} {} / {group} feasibility rises: {feas:?}", spec.name));
                }
                for i in (0..n).filter(|&i| pop.individual(i).group == g) {
                    let per: Vec<Option<f64>> = curve.iter().map(|p| t.min_effort_reaching(i, p.delta)).collect();
                    let rises = per.windows(2).all(|w| match (w[0], w[1]) {
                        (Some(a), Some(b)) => a <= b,
                        (None, Some(_)) => false,
                        _ => true,
                    });
                    if !rises {
                        problems.push(format!("{kind} {} individual {i} not nondecreasing: {per:?}", spec.name));
                    }
                }
                for (k, w) in curve.windows(2).enumerate() {
                    let dropped = w[1].value.is_none() && w[0].value.is_some();
                    let fell = matches!((w[0].value, w[1].value), (Some(a), Some(b)) if b < a);
                    if dropped || fell {
                        dips.push(format!(
                            "{} / {group} at point {}: {} -> {} with feasibility {} -> {}",
                            spec.name,
                            k + 1,
                            opt(w[0].value),
                            opt(w[1].value),
                            opt(w[0].feasibility),
                            opt(w[1].feasibility)
                        ));
                        break;
                    }
                }
            }
        }
        let unreachable = t.threshold_reward(f64::INFINITY).unwrap();
        if unreachable.feasibility.as_ref().is_none_or(|f| f.values().any(|&v| v != 0.0)) {
            problems.push(format!("{}: threshold-reward feasible at infinity", spec.name));
        }
    }
    let summary = format!(
        "{checked} curves of {CURVE_POINTS} points on {}; bounded-effort nondecreasing, endpoints exact, \
         per-individual threshold efforts nondecreasing, feasibility nonincreasing",
        src.label
    );
    if !problems.is_empty() {
        problems.truncate(6);
        Verdict::Fail(format!("on {}: {}", src.label, problems.join("; ")))
    } else if !dips.is_empty() {
        Verdict::Red(format!(
            "{summary}; but {} threshold-reward group means fall as infeasible members leave the mean: {}",
            dips.len(),
            dips.join("; ")
        ))
    } else {
        Verdict::Pass(summary)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("absent".into(), |v| format!("{v:.4}"))
}

fn oracle_equivalence() -> Verdict {
    let checks: [(&str, fn()); 7] = [
        ("effort/reward", oracle::effort_and_reward_pairs_match),
        ("bounded-effort", oracle::bounded_effort_matches),
        ("threshold-reward", oracle::threshold_reward_matches),
        ("effort-reward", oracle::effort_reward_matches),
        ("role models", oracle::role_models_match),
        ("focal assignment", oracle::focal_assignment_matches),
        ("ACI", oracle::absolute_clustering_matches),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, f)| quietly(*f).is_err()).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        Verdict::Pass("7 brute-force comparisons over 40 instances of at most 30 individuals, tolerance 1e-10".into())
    } else {
        Verdict::Fail(format!("mismatch in {}", failed.join(", ")))
    }
}

fn quietly<F: FnOnce() + UnwindSafe>(f: F) -> std::thread::Result<()> {
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|info| eprintln!("  {info}")));
    let r = catch_unwind(f);
    std::panic::set_hook(hook);
    r
}

fn segregation_indices() -> Verdict {
    let mut problems = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for beta in [0.1, 0.5, 0.9] {
        let even = Neighborhoods::from_counts(&[(2, 6), (4, 12), (1, 3)]);
        let a = atkinson(&even, beta).unwrap();
        if a.abs() > ATKINSON_TOL {
            problems.push(format!("uniform beta {beta}: {a}"));
        }
        let split = Neighborhoods::from_counts(&[(5, 5), (0, 7), (2, 2)]);
        let a = atkinson(&split, beta).unwrap();
        if a != 1.0 {
            problems.push(format!("separated beta {beta}: {a}"));
        }
        let mut seen = 0;
        while seen < ATKINSON_CONFIGS {
            let counts: Vec<(usize, usize)> = (0..rng.random_range(1..12))
                .map(|_| {
                    let t = rng.random_range(0..40);
                    (rng.random_range(0..=t), t)
                })
                .collect();
            let (m, t) = counts.iter().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
            if m == 0 || m == t {
                continue;
            }
            seen += 1;
            let a = atkinson(&Neighborhoods::from_counts(&counts), beta).unwrap();
            if !(0.0..=1.0).contains(&a) {
                problems.push(format!("beta {beta} {counts:?}: {a}"));
            }
        }
    }
    for c in [0.1f64, 0.5, 0.9] {
        let d = -c.ln();
        let dist = DistanceMatrix::from_rows(vec![vec![0.0, d], vec![d, 0.0]]).unwrap();
        let v = spectral_segregation(&dist, &[0, 1], 1e-6).value.unwrap_or(f64::NAN);
        if (v - c).abs() > SSI_TOL {
            problems.push(format!("SSI two-member c {c}: {v}"));
        }
    }
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..20);
        let rows: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { rng.random_range(0.0..3.0) }).collect()).collect();
        let flags: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.4)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let shuffled = order.iter().map(|&a| order.iter().map(|&b| rows[a][b]).collect()).collect();
        let flags_p: Vec<bool> = order.iter().map(|&a| flags[a]).collect();
        let a = absolute_clustering(&DistanceMatrix::from_rows(rows).unwrap(), &flags).unwrap().value;
        let b = absolute_clustering(&DistanceMatrix::from_rows(shuffled).unwrap(), &flags_p).unwrap().value;
        let same = match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= ACI_TOL,
            (None, None) => true,
            _ => false,
        };
        if !same {
            problems.push(format!("ACI permutation seed {seed}: {a:?} vs {b:?}"));
        }
    }
    if problems.is_empty() {
        Verdict::Pass(format!(
            "Atkinson 0/1 limits and [0,1] on {ATKINSON_CONFIGS} configurations per beta; SSI 2x2 to 1e-8; ACI permutation-invariant"
        ))
    } else {
        Verdict::Fail(problems.join("; "))
    }
}

fn dynamics_invariants(src: &Source) -> Verdict {
    let data = load_dataset(&src.cfg).unwrap();
    let mut problems = Vec::new();
    let mut audited = 0;
    let mut movers = 0;
    for spec in &src.cfg.models {
        let (pop, h) = fitted(&src.cfg, &data.train, &spec.name);
        let sim = simulate_model(&h, &pop, &src.cfg, 1).unwrap();
        let eval = PairEvaluator::new(&h, &pop, &src.cfg.effort, src.cfg.benefit).unwrap();
        for (i, out) in sim.impact.outcomes.iter().enumerate() {
            let before = pop.individual(i);
            let after = sim.impact.impacted.individual(i);
            for j in 0..pop.len() {
                let u = eval.pair(i, j).unwrap().utility;
                if u > out.best_utility {
                    problems.push(format!("{}: {i} prefers {j}", spec.name));
                }
            }
            audited += 1;
            if !out.changed {
                continue;
            }
            movers += 1;
            if !(out.exerted.utility > 0.0) {
                problems.push(format!("{}: {i} moved with utility {}", spec.name, out.exerted.utility));
            }
            if !(h.predict(&after.x) > h.predict(&before.x)) {
                problems.push(format!("{}: {i} prediction did not rise", spec.name));
            }
            for (k, f) in pop.schema().features().iter().enumerate() {
                let kept = match &f.kind {
                    FeatureKind::Immutable { .. } => after.x[k] == before.x[k],
                    FeatureKind::ConditionallyImmutable { allowed_direction } => {
                        match allowed_direction {
                            Direction::Increasing => after.x[k] >= before.x[k],
                            Direction::Decreasing => after.x[k] <= before.x[k],
                        }
                    }
                    _ => true,
                };
                if !kept {
                    problems.push(format!("{}: {i} changed `{}`", spec.name, f.name));
                }
            }
        }
        let flat = Predictor::constant(pop.labels().iter().sum::<f64>() / pop.len() as f64);
        let still = simulate_model(&flat, &pop, &src.cfg, 1).unwrap();
        if write_population(&still.impact.impacted) != write_population(&pop) {
            problems.push(format!("{}: constant predictor moved the population", spec.name));
        }
    }
    if problems.is_empty() {
        Verdict::Pass(format!(
            "{audited} individuals audited exhaustively on {} ({movers} movers); constant predictor leaves D unchanged",
            src.label
        ))
    } else {
        problems.truncate(5);
        Verdict::Fail(format!("on {}: {}", src.label, problems.join("; ")))
    }
}

fn tau_sweep(src: &Source, out: &Path) -> Verdict {
    let data = load_dataset(&src.cfg).unwrap();
    let pop = data.train.restrict_features(src.cfg.tau_features).unwrap();
    let minority = pipeline::minority(&src.cfg, &pop).unwrap();
    let constrained = fit_constrained_linear_detailed(&pop, 0.0, src.cfg.benefit, minority, GdSettings::default())
        .unwrap()
        .predictor;
    let linear = fit_linear(&pop).unwrap();
    let bits = |p: &Predictor| {
        let (w, b) = p.model.linear_weights().unwrap();
        w.iter().chain([&b]).map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    let mut problems = Vec::new();
    if bits(&constrained) != bits(&linear) {
        problems.push("tau = 0 weights differ from least squares".to_string());
    }
    let a = simulate_model(&constrained, &pop, &src.cfg, 1).unwrap();
    let b = simulate_model(&linear, &pop, &src.cfg, 1).unwrap();
    let same_runs = write_population(&a.impact.impacted) == write_population(&b.impact.impacted)
        && serde_json::to_string(&a.initial).unwrap() == serde_json::to_string(&b.initial).unwrap()
        && serde_json::to_string(&a.impacted).unwrap() == serde_json::to_string(&b.impacted).unwrap();
    if !same_runs {
        problems.push("tau = 0 simulation differs from the unconstrained run".to_string());
    }
    let file: Value = serde_json::from_slice(&fs::read(out.join("sweep_tau/tau.json")).unwrap()).unwrap();
    if file["tau0_matches_linear"] != true {
        problems.push("tau.json reports a tau = 0 mismatch".to_string());
    }
    let runs = file["runs"].as_array().unwrap();
    let gap = |r: &Value| r["gap"].as_f64().unwrap();
    let zero = runs.iter().find(|r| r["tau"].as_f64() == Some(0.0)).map(gap);
    let last = runs.iter().max_by(|x, y| x["tau"].as_f64().unwrap().total_cmp(&y["tau"].as_f64().unwrap()));
    let detail = match (zero, last) {
        (Some(z), Some(l)) => {
            if gap(l) > z {
                problems.push(format!("gap rose from {z} to {}", gap(l)));
            }
            format!("gap {z:.4} at tau 0, {:.4} at tau {}", gap(l), l["tau"])
        }
        _ => {
            problems.push("tau grid lacks 0".into());
            String::new()
        }
    };
    if problems.is_empty() {
        Verdict::Pass(format!("tau = 0 bit-identical to least squares; {detail} on {}", src.label))
    } else {
        Verdict::Fail(format!("on {}: {}", src.label, problems.join("; ")))
    }
}

fn full_pipeline(src: &Source, out: &Path) -> Duration {
    let start = Instant::now();
    let mut commands = vec!["fairness", "simulate", "sweep-tau", "figures"];
    if !src.real {
        commands.insert(0, "synth");
    }
    for c in commands {
        let status = Process::new(env!("CARGO_BIN_EXE_effortsim"))
            .args([c, "--config", src.config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env_remove("EFFORTSIM_THREADS")
            .status()
            .unwrap();
        assert!(status.success(), "{c} failed");
    }
    start.elapsed()
}

fn manifests(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let sub = entry.unwrap().path();
        let m = sub.join("manifest.json");
        if m.is_file() {
            out.insert(sub.file_name().unwrap().to_string_lossy().into_owned(), fs::read(m).unwrap());
        }
    }
    out
}

fn determinism(src: &Source, a: &Path, b: &Path, times: [Duration; 2]) -> Verdict {
    let (ma, mb) = (manifests(a), manifests(b));
    let slowest = times[0].max(times[1]);
    let detail = format!("{} manifests; slowest run {slowest:.2?} on {}", ma.len(), src.label);
    if ma == mb && ma.len() >= 4 && slowest < PIPELINE_BUDGET {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!("manifests identical: {}; {detail}", ma == mb))
    }
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let (a, b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    let times = [full_pipeline(&src, &a), full_pipeline(&src, &b)];

    let results = [
        ("1 dataset fidelity", dataset_fidelity(&src)),
        ("2 model error", model_error(&src)),
        ("3 effort-reward contrast", effort_reward_contrast(&src)),
        ("4 curve monotonicity", curve_monotonicity(&src, &a)),
        ("5 oracle equivalence", oracle_equivalence()),
        ("6 segregation index properties", segregation_indices()),
        ("7 dynamics invariants", dynamics_invariants(&src)),
        ("8 tau-sweep sanity", tau_sweep(&src, &a)),
        ("9 determinism", determinism(&src, &a, &b, times)),
    ];
    let mut failed = 0;
    println!();
    for (name, verdict) in &results {
        match verdict {
            Verdict::Pass(d) => println!("[PASS] {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("[FAIL] {name}: {d}");
            }
            Verdict::Red(d) => println!("[FAIL] {name}: {d}"),
        }
    }
    println!();
    if failed > 0 {
        eprintln!("{failed} evaluated criteria failed");
        std::process::exit(1);
    }
}
