//! The five subcommands. Each writes into `<out>/<command>/` and finishes
//! with a manifest.
//!
//! CSV columns:
//! * `fairness/mae.csv`: model, split, group, mae (`group = all` is overall)
//! * `fairness/bounded_effort.csv`: model, group, delta, value
//! * `fairness/threshold_reward.csv`: model, group, delta, value, feasibility
//! * `fairness/comparison.csv`: model, measure, group, value (`group = disparity` for the max-min gap)
//! * `simulate/segregation.csv`: model, population, measure, value
//! * `sweep_tau/tau.csv`: tau, measure, value
//!
//! Absent values are empty cells.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use effortsim_core::dynamics::{feature_shift_report, FocalPoint, ImitationOutcome, ImpactResult};
use effortsim_core::fairness::{linear_grid, residual_differences, CurveKind, DeltaCurve, UnfairnessReport};
use effortsim_core::predictors::{
    benefit_gap, evaluate, fit_constrained_linear_detailed, fit_linear, FitReport, GdSettings,
};
use effortsim_core::segregation::{mean_prediction, report, MetricContext, SegregationReport, SegregationSettings};
use effortsim_core::synthetic::{generate_synthetic, SyntheticSpec};
use effortsim_core::{FeatureFilter, GroupId, Population, Predictor, Regressor};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::io::{schema_json, to_json, write_population};
use crate::manifest::{RunManifest, RunWriter};
use crate::pipeline::{self, distances, fit_model, impact, load_dataset, pair_table, substream, Dataset, Stream};
use crate::svg::{BarChart, LineChart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Fairness,
    Simulate,
    SweepTau,
    Figures,
    Synth,
}

impl Command {
    pub fn dir(self) -> &'static str {
        match self {
            Command::Fairness => "fairness",
            Command::Simulate => "simulate",
            Command::SweepTau => "sweep_tau",
            Command::Figures => "figures",
            Command::Synth => "synth",
        }
    }
}

pub struct Run {
    pub cfg: ExperimentConfig,
    pub config_bytes: Vec<u8>,
    pub out: PathBuf,
    pub threads: usize,
}

impl Run {
    pub fn load(config: &Path, out: &Path, seed: Option<u64>, threads: usize) -> Result<Run> {
        let (mut cfg, config_bytes) = ExperimentConfig::load(config)?;
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        Ok(Run {
            cfg,
            config_bytes,
            out: out.to_path_buf(),
            threads,
        })
    }

    pub fn execute(&self, command: Command) -> Result<RunManifest> {
        let mut w = RunWriter::new(&self.out, command.dir());
        match command {
            Command::Fairness => self.fairness(&mut w)?,
            Command::Simulate => self.simulate(&mut w)?,
            Command::SweepTau => self.sweep_tau(&mut w)?,
            Command::Figures => self.figures(&mut w)?,
            Command::Synth => self.synth(&mut w)?,
        }
        w.finish(&self.config_bytes, self.cfg.seed)
    }

    fn data(&self, w: &mut RunWriter) -> Result<Dataset> {
        w.input_file("schema", &self.cfg.schema)?;
        if let Some(path) = &self.cfg.data {
            w.input_file("data", path)?;
        }
        let data = load_dataset(&self.cfg)?;
        w.note("split", format!("{} train / {} test", data.train.len(), data.test.len()));
        w.note("split_seed", substream(self.cfg.seed, Stream::Split).to_string());
        w.note("metric_population", "training split");
        w.stage("load");
        Ok(data)
    }

    fn minority(&self, pop: &Population) -> Result<GroupId> {
        pipeline::minority(&self.cfg, pop)
    }

    fn fairness(&self, w: &mut RunWriter) -> Result<()> {
        let data = self.data(w)?;
        let mut mae = Csv::new(&["model", "split", "group", "mae"]);
        let mut be = Csv::new(&["model", "group", "delta", "value"]);
        let mut tr = Csv::new(&["model", "group", "delta", "value", "feasibility"]);
        let mut cmp = Csv::new(&["model", "measure", "group", "value"]);
        let mut models = Vec::new();
        for spec in &self.cfg.models {
            let train = data.train.restrict_features(spec.features)?;
            let test = data.test.restrict_features(spec.features)?;
            let full = data.full.restrict_features(spec.features)?;
            let h = fit_model(spec, &self.cfg, &train)?;
            w.stage(format!("{}: fit", spec.name));
            let fits = [("train", evaluate(&h, &train)?), ("test", evaluate(&h, &test)?), ("all", evaluate(&h, &full)?)];
            for (split, fit) in &fits {
                mae.row([spec.name.clone(), split.to_string(), "all".into(), num(fit.mae_overall)]);
                for g in &fit.mae_per_group {
                    mae.row([spec.name.clone(), split.to_string(), g.name.clone(), num(g.mae)]);
                }
            }

            let table = pair_table(&h, &train, &self.cfg.effort, &self.cfg, self.threads)?;
            w.stage(format!("{}: pair table", spec.name));
            let be_grid = self
                .cfg
                .bounded_effort_grid
                .clone()
                .unwrap_or_else(|| linear_grid(table.max_finite_effort(), self.cfg.delta_points));
            let tr_grid = self
                .cfg
                .threshold_reward_grid
                .clone()
                .unwrap_or_else(|| linear_grid(table.max_reachable_reward(), self.cfg.delta_points));
            let be_curve = table.sweep(CurveKind::BoundedEffort, &be_grid)?;
            let tr_curve = table.sweep(CurveKind::ThresholdReward, &tr_grid)?;
            curve_rows(&mut be, &spec.name, &be_curve, false);
            curve_rows(&mut tr, &spec.name, &tr_curve, true);
            let effort_reward = table.effort_reward();
            let (positive, negative) = residual_differences(&h, &train);
            for (measure, rep) in [
                ("effort_reward", &effort_reward),
                ("positive_residual", &positive),
                ("negative_residual", &negative),
            ] {
                for (g, v) in &rep.per_group {
                    cmp.row([spec.name.clone(), measure.into(), g.clone(), opt(*v)]);
                }
                cmp.row([spec.name.clone(), measure.into(), "disparity".into(), opt(rep.disparity)]);
            }
            w.stage(format!("{}: measures", spec.name));
            w.file(format!("models/{}.json", spec.name), to_json(&h));
            models.push(FairnessModel {
                name: spec.name.clone(),
                kind: h.kind().to_string(),
                features: spec.features,
                feature_count: train.schema().len(),
                binary_features: train.schema().binary_count(),
                fit_train: fits[0].1.clone(),
                fit_test: fits[1].1.clone(),
                fit_all: fits[2].1.clone(),
                bounded_effort: be_curve,
                threshold_reward: tr_curve,
                effort_reward,
                positive_residual: positive,
                negative_residual: negative,
            });
        }
        w.file("mae.csv", mae.finish());
        w.file("bounded_effort.csv", be.finish());
        w.file("threshold_reward.csv", tr.finish());
        w.file("comparison.csv", cmp.finish());
        w.file(
            "report.json",
            to_json(&FairnessReport {
                train_size: data.train.len(),
                test_size: data.test.len(),
                models,
            }),
        );
        Ok(())
    }

    fn simulate(&self, w: &mut RunWriter) -> Result<()> {
        let data = self.data(w)?;
        let mut seg = Csv::new(&["model", "population", "measure", "value"]);
        let mut summary = Vec::new();
        for spec in &self.cfg.models {
            let pop = data.train.restrict_features(spec.features)?;
            let h = fit_model(spec, &self.cfg, &pop)?;
            let sim = simulate_model(&h, &pop, &self.cfg, self.threads)?;
            w.stage(format!("{}: dynamics", spec.name));
            let shift = feature_shift_report(&pop, &sim.impact.impacted, self.cfg.histogram_bins)?;
            for (label, rep) in [("initial", &sim.initial), ("impacted", &sim.impacted)] {
                for (measure, v) in segregation_values(rep) {
                    seg.row([spec.name.clone(), label.into(), measure.into(), opt(v)]);
                }
            }
            let dir = &spec.name;
            w.file(format!("{dir}/initial.csv"), write_population(&pop));
            w.file(format!("{dir}/impacted.csv"), write_population(&sim.impact.impacted));
            w.file(format!("{dir}/schema.json"), schema_json(pop.schema()));
            w.file(
                format!("{dir}/outcomes.json"),
                to_json(&OutcomeFile {
                    mutable_features: sim.impact.mutable.iter().map(|&k| pop.schema().feature(k).name.clone()).collect(),
                    changed: sim.impact.changed(),
                    focal_points: &sim.impact.focal_points,
                    outcomes: &sim.impact.outcomes,
                }),
            );
            w.file(format!("{dir}/shift.json"), to_json(&shift));
            summary.push(SimulationSummary {
                model: spec.name.clone(),
                changed: sim.impact.changed(),
                focal_points: sim.impact.focal_points.len(),
                initial: sim.initial,
                impacted: sim.impacted,
            });
            w.stage(format!("{}: segregation", spec.name));
        }
        w.file("segregation.csv", seg.finish());
        w.file("segregation.json", to_json(&summary));
        Ok(())
    }

    fn sweep_tau(&self, w: &mut RunWriter) -> Result<()> {
        let data = self.data(w)?;
        let pop = data.train.restrict_features(self.cfg.tau_features)?;
        let test = data.test.restrict_features(self.cfg.tau_features)?;
        let minority = self.minority(&pop)?;
        let benefit = self.cfg.benefit;
        let mut csv = Csv::new(&["tau", "measure", "value"]);
        let mut runs = Vec::new();
        for &tau in &self.cfg.tau_grid {
            let fit = fit_constrained_linear_detailed(&pop, tau, benefit, minority, GdSettings::default())?;
            let sim = simulate_model(&fit.predictor, &pop, &self.cfg, self.threads)?;
            let row = TauRun {
                tau,
                mae: evaluate(&fit.predictor, &test)?.mae_overall,
                changed: sim.impact.changed(),
                iterations: fit.iterations,
                converged: fit.converged,
                gradient_norm: fit.gradient_norm,
                objective: fit.objective,
                initial_objective: fit.initial_objective,
                gap: fit.gap,
                initial_gap: fit.initial_gap,
                weights: fit.predictor.model.linear_weights().map(|(w, b)| (w.to_vec(), b)),
                initial: sim.initial,
                impacted: sim.impacted,
            };
            for (measure, v) in tau_values(&row.impacted, row.gap, row.mae, row.changed) {
                csv.row([num(tau), measure.into(), opt(v)]);
            }
            runs.push(row);
            w.stage(format!("tau {tau}"));
        }

        let linear = fit_linear(&pop)?;
        let sim = simulate_model(&linear, &pop, &self.cfg, self.threads)?;
        let reference = ReferenceRun {
            gap: benefit_gap(&linear, &pop, benefit, minority)?,
            mae: evaluate(&linear, &test)?.mae_overall,
            changed: sim.impact.changed(),
            weights: linear.model.linear_weights().map(|(w, b)| (w.to_vec(), b)),
            initial: sim.initial,
            impacted: sim.impacted,
        };
        w.stage("unconstrained linear");
        let tau0_matches_linear = runs.iter().find(|r| r.tau == 0.0).map(|r| {
            r.weights == reference.weights
                && r.impacted == reference.impacted
                && r.initial == reference.initial
                && r.gap.to_bits() == reference.gap.to_bits()
        });
        w.file("tau.csv", csv.finish());
        w.file(
            "tau.json",
            to_json(&TauFile {
                features: self.cfg.tau_features,
                minority: pop.schema().group_name(minority),
                penalty: "hinge penalty tau * max(0, gap) on the group mean-benefit gap, solved by subgradient descent from the least-squares fit",
                runs,
                reference_linear: reference,
                tau0_matches_linear,
            }),
        );
        Ok(())
    }

    fn figures(&self, w: &mut RunWriter) -> Result<()> {
        let mut made = 0;
        for (file, title, x_label, y_label) in [
            ("bounded_effort", "Bounded-effort unfairness", "effort budget", "mean best reward"),
            ("threshold_reward", "Threshold-reward unfairness", "reward threshold", "mean least effort"),
        ] {
            let path = self.out.join("fairness").join(format!("{file}.csv"));
            if let Some(rows) = read_csv(w, &path, &["model", "group", "delta", "value"])? {
                let mut series: Vec<Series> = Vec::new();
                for r in rows {
                    let name = format!("{} / {}", r[0], r[1]);
                    let (x, y) = (parse(&r[2], &path)?, parse_opt(&r[3], &path)?);
                    let pos = match series.iter().position(|s| s.name == name) {
                        Some(p) => p,
                        None => {
                            series.push(Series { name, points: Vec::new() });
                            series.len() - 1
                        }
                    };
                    if let Some(y) = y {
                        series[pos].points.push((x, y));
                    }
                }
                let chart = LineChart {
                    title: title.into(),
                    x_label: x_label.into(),
                    y_label: y_label.into(),
                    series,
                };
                w.file(format!("{file}.svg"), chart.render());
                made += 1;
            }
        }

        let path = self.out.join("fairness/comparison.csv");
        if let Some(rows) = read_csv(w, &path, &["model", "measure", "group", "value"])? {
            let rows: Vec<_> = rows.into_iter().filter(|r| r[2] == "disparity").collect();
            w.file("comparison.svg", bars("Unfairness disparity by model", "disparity", &rows, 1, &[0], 3, &path)?);
            made += 1;
        }
        let path = self.out.join("simulate/segregation.csv");
        if let Some(rows) = read_csv(w, &path, &["model", "population", "measure", "value"])? {
            w.file("segregation.svg", bars("Segregation before and after imitation", "index", &rows, 2, &[0, 1], 3, &path)?);
            made += 1;
        }
        let path = self.out.join("sweep_tau/tau.csv");
        if let Some(rows) = read_csv(w, &path, &["tau", "measure", "value"])? {
            let mut by_measure: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            let mut order = Vec::new();
            for r in &rows {
                if !by_measure.contains_key(&r[1]) {
                    order.push(r[1].clone());
                }
                let pts = by_measure.entry(r[1].clone()).or_default();
                if let Some(v) = parse_opt(&r[2], &path)? {
                    pts.push((parse(&r[0], &path)?, v));
                }
            }
            for m in order {
                let chart = LineChart {
                    title: format!("{m} against constraint strength"),
                    x_label: "tau".into(),
                    y_label: m.clone(),
                    series: vec![Series {
                        name: m.clone(),
                        points: by_measure.remove(&m).unwrap_or_default(),
                    }],
                };
                w.file(format!("tau_{m}.svg"), chart.render());
            }
            made += 1;
        }
        if made == 0 {
            return Err(HarnessError::data(format!(
                "no report CSVs found under {}; run fairness, simulate or sweep-tau first",
                self.out.display()
            )));
        }
        w.stage("render");
        Ok(())
    }

    fn synth(&self, w: &mut RunWriter) -> Result<()> {
        let source = self
            .cfg
            .synthetic
            .as_ref()
            .ok_or_else(|| HarnessError::config("synth needs a `synthetic` section"))?;
        w.input_file("schema", &self.cfg.schema)?;
        let schema = crate::io::load_schema(&self.cfg.schema)?;
        let pop = generate_synthetic(&SyntheticSpec {
            schema: schema.to_file(),
            group_sizes: source.group_sizes.clone(),
            shift: source.shift,
            seed: substream(self.cfg.seed, Stream::Synthetic),
        })?;
        w.stage("generate");
        w.file("population.csv", write_population(&pop));
        w.file("schema.json", schema_json(pop.schema()));
        Ok(())
    }
}

/// Dynamics plus before/after segregation for one fitted model on `pop`.
pub struct SimulationRun {
    pub impact: ImpactResult,
    pub initial: SegregationReport,
    pub impacted: SegregationReport,
}

pub fn simulate_model<H: Regressor + Sync + ?Sized>(
    h: &H,
    pop: &Population,
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<SimulationRun> {
    let minority = pipeline::minority(cfg, pop)?;
    let impact = impact(h, pop, cfg, threads)?;
    let ctx = MetricContext::new(pop, &cfg.effort, minority)?;
    let settings = SegregationSettings {
        beta: cfg.beta,
        centralization_threshold: Some(cfg.centralization_threshold.unwrap_or_else(|| mean_prediction(h, pop))),
        ssi_threshold: cfg.ssi_threshold,
    };
    let before = distances(&ctx, pop, threads)?;
    let after = distances(&ctx, &impact.impacted, threads)?;
    let initial = report(&ctx, h, pop, &before, &impact.focal_points, settings)?;
    let impacted = report(&ctx, h, &impact.impacted, &after, &impact.focal_points, settings)?;
    Ok(SimulationRun {
        impact,
        initial,
        impacted,
    })
}

pub fn segregation_values(r: &SegregationReport) -> [(&'static str, Option<f64>); 4] {
    [
        ("atkinson", r.atkinson),
        ("centralization", Some(r.centralization)),
        ("aci", r.aci),
        ("ssi", r.ssi),
    ]
}

fn tau_values(r: &SegregationReport, gap: f64, mae: f64, changed: usize) -> Vec<(&'static str, Option<f64>)> {
    let mut v = segregation_values(r).to_vec();
    v.extend([("benefit_gap", Some(gap)), ("mae", Some(mae)), ("changed", Some(changed as f64))]);
    v
}

#[derive(Serialize)]
struct FairnessModel {
    name: String,
    kind: String,
    features: FeatureFilter,
    feature_count: usize,
    binary_features: usize,
    fit_train: FitReport,
    fit_test: FitReport,
    fit_all: FitReport,
    bounded_effort: DeltaCurve,
    threshold_reward: DeltaCurve,
    effort_reward: UnfairnessReport,
    positive_residual: UnfairnessReport,
    negative_residual: UnfairnessReport,
}

#[derive(Serialize)]
struct FairnessReport {
    train_size: usize,
    test_size: usize,
    models: Vec<FairnessModel>,
}

#[derive(Serialize)]
struct OutcomeFile<'a> {
    mutable_features: Vec<String>,
    changed: usize,
    focal_points: &'a [FocalPoint],
    outcomes: &'a [ImitationOutcome],
}

#[derive(Serialize)]
struct SimulationSummary {
    model: String,
    changed: usize,
    focal_points: usize,
    initial: SegregationReport,
    impacted: SegregationReport,
}

#[derive(Serialize)]
struct TauRun {
    tau: f64,
    mae: f64,
    changed: usize,
    iterations: usize,
    converged: bool,
    gradient_norm: f64,
    objective: f64,
    initial_objective: f64,
    gap: f64,
    initial_gap: f64,
    weights: Option<(Vec<f64>, f64)>,
    initial: SegregationReport,
    impacted: SegregationReport,
}

#[derive(Serialize)]
struct ReferenceRun {
    gap: f64,
    mae: f64,
    changed: usize,
    weights: Option<(Vec<f64>, f64)>,
    initial: SegregationReport,
    impacted: SegregationReport,
}

#[derive(Serialize)]
struct TauFile {
    features: FeatureFilter,
    minority: String,
    penalty: &'static str,
    runs: Vec<TauRun>,
    reference_linear: ReferenceRun,
    tau0_matches_linear: Option<bool>,
}

/// Shortest round-trip decimal; non-finite values are written as text.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Csv(csv::Writer<Vec<u8>>);

impl Csv {
    fn new(header: &[&str]) -> Csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Csv(w)
    }

    fn row<const N: usize>(&mut self, fields: [String; N]) {
        self.0.write_record(&fields).expect("in-memory write");
    }

    fn finish(self) -> Vec<u8> {
        self.0.into_inner().expect("in-memory flush")
    }
}

fn curve_rows(csv: &mut Csv, model: &str, curve: &DeltaCurve, feasibility: bool) {
    for (g, values) in &curve.per_group {
        for (k, (&delta, v)) in curve.deltas.iter().zip(values).enumerate() {
            let mut row = vec![model.to_string(), g.clone(), num(delta), opt(*v)];
            if feasibility {
                let f = curve.feasibility.as_ref().and_then(|f| f.get(g)).map(|f| f[k]);
                row.push(opt(f));
            }
            csv.0.write_record(&row).expect("in-memory write");
        }
    }
}

/// Reads a report CSV if it exists. The header must start with `columns`;
/// an existing file without data rows is an error.
fn read_csv(w: &mut RunWriter, path: &Path, columns: &[&str]) -> Result<Option<Vec<Vec<String>>>> {
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    w.input(&path.file_name().unwrap_or_default().to_string_lossy(), &bytes);
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header = reader
        .headers()
        .map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?
        .clone();
    if header.len() < columns.len() || header.iter().zip(columns).any(|(a, b)| a != *b) {
        return Err(HarnessError::data(format!("{}: expected columns {columns:?}", path.display())));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    if rows.is_empty() {
        return Err(HarnessError::data(format!("{}: no data rows", path.display())));
    }
    Ok(Some(rows))
}

fn parse(s: &str, path: &Path) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse()
            .map_err(|_| HarnessError::data(format!("{}: `{s}` is not a number", path.display()))),
    }
}

fn parse_opt(s: &str, path: &Path) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, path).map(Some)
    }
}

/// Grouped bars: categories from column `category`, one series per
/// distinct combination of the `series` columns, values from `value`.
fn bars(
    title: &str,
    y_label: &str,
    rows: &[Vec<String>],
    category: usize,
    series: &[usize],
    value: usize,
    path: &Path,
) -> Result<String> {
    let mut categories: Vec<String> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), Option<f64>> = BTreeMap::new();
    for r in rows {
        let cat = r[category].clone();
        let name = series.iter().map(|&c| r[c].as_str()).collect::<Vec<_>>().join(" / ");
        if !categories.contains(&cat) {
            categories.push(cat.clone());
        }
        if !names.contains(&name) {
            names.push(name.clone());
        }
        cells.insert((name, cat), parse_opt(&r[value], path)?);
    }
    let series = names
        .iter()
        .map(|n| {
            let vals = categories.iter().map(|c| cells.get(&(n.clone(), c.clone())).copied().flatten()).collect();
            (n.clone(), vals)
        })
        .collect();
    Ok(BarChart {
        title: title.into(),
        y_label: y_label.into(),
        categories,
        series,
    }
    .render())
}

/// Loads a `models/<name>.json` file.
pub fn read_predictor(path: &Path) -> Result<Predictor> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))
}
