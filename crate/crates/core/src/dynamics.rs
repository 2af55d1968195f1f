//! Role-model selection and one simultaneous round of imitation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::effort::{imitation_target, PairEvaluator, UtilityBreakdown};
use crate::error::{Error, Result};
use crate::fairness::PairTable;
use crate::population::{Individual, Population};
use crate::predictors::Regressor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationOutcome {
    pub individual: usize,
    pub role_model: Option<usize>,
    /// What the move cost and earned; all zero for those who stay.
    pub exerted: UtilityBreakdown,
    /// Highest utility over all candidates, the individual itself included.
    pub best_utility: f64,
    pub changed: bool,
    pub new_x: Vec<f64>,
    pub new_y: f64,
}

/// A distinct imitated profile restricted to the freely mutable features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalPoint {
    pub values: Vec<f64>,
    pub imitators: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactResult {
    pub outcomes: Vec<ImitationOutcome>,
    pub impacted: Population,
    /// Feature indices spanning the focal-point subspace.
    pub mutable: Vec<usize>,
    /// In order of first imitation.
    pub focal_points: Vec<FocalPoint>,
}

impl ImpactResult {
    pub fn changed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.changed).count()
    }
}

/// Argmax of `U(z_i, target(i, j))` over all `j`, lowest index on ties.
/// The index is reported only when the maximum is strictly positive.
pub fn select_from_row(row: impl IntoIterator<Item = UtilityBreakdown>) -> (Option<usize>, UtilityBreakdown) {
    let mut best: Option<(usize, UtilityBreakdown)> = None;
    for (j, u) in row.into_iter().enumerate() {
        if best.as_ref().is_none_or(|(_, b)| u.utility > b.utility) {
            best = Some((j, u));
        }
    }
    let (j, u) = best.expect("candidate set is nonempty");
    ((u.utility > 0.0).then_some(j), u)
}

pub fn select_role_model<H: Regressor + ?Sized>(
    eval: &PairEvaluator<'_, H>,
    i: usize,
) -> Result<(Option<usize>, UtilityBreakdown)> {
    Ok(select_from_row(eval.row(i)?))
}

/// Imitation round over a precomputed pair table of `pop`.
pub fn simulate_with_table(pop: &Population, table: &PairTable) -> Result<ImpactResult> {
    let n = pop.len();
    if table.len() != n {
        return Err(Error::InvalidParameter("pair table does not match the population".into()));
    }
    let schema = pop.schema();
    let mutable = schema.mutable_indices();
    let mut outcomes = Vec::with_capacity(n);
    let mut individuals = Vec::with_capacity(n);
    let mut focal: Vec<FocalPoint> = Vec::new();
    for i in 0..n {
        let me = pop.individual(i);
        let (choice, best) = select_from_row((0..n).map(|j| table.pair(i, j)));
        let (new_x, new_y, exerted) = match choice {
            Some(j) => {
                let model = pop.individual(j);
                (imitation_target(schema, &me.x, &model.x), model.y, best)
            }
            None => (me.x.clone(), me.y, UtilityBreakdown::new(0.0, 0.0)),
        };
        if choice.is_some() {
            let values: Vec<f64> = mutable.iter().map(|&k| new_x[k]).collect();
            match focal.iter_mut().find(|f| f.values == values) {
                Some(f) => f.imitators += 1,
                None => focal.push(FocalPoint { values, imitators: 1 }),
            }
        }
        individuals.push(Individual {
            x: new_x.clone(),
            y: new_y,
            group: me.group,
        });
        outcomes.push(ImitationOutcome {
            individual: i,
            role_model: choice,
            exerted,
            best_utility: best.utility,
            changed: choice.is_some(),
            new_x,
            new_y,
        });
    }
    Ok(ImpactResult {
        outcomes,
        impacted: pop.with_individuals(individuals)?,
        mutable,
        focal_points: focal,
    })
}

/// Every individual picks a role model against the frozen population.
pub fn simulate<H: Regressor + ?Sized>(eval: &PairEvaluator<'_, H>) -> Result<ImpactResult> {
    simulate_with_table(eval.population(), &PairTable::build(eval)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShift {
    pub feature: String,
    /// Bin edges shared by both populations (`bins + 1` values).
    pub edges: Vec<f64>,
    pub before: BTreeMap<String, Summary>,
    pub after: BTreeMap<String, Summary>,
}

fn summarize(values: &[f64], edges: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let bins = edges.len() - 1;
    let mut histogram = vec![0; bins];
    for &v in values {
        // Bins are half-open except the last, which is closed.
        let b = edges[1..bins].partition_point(|&e| e <= v);
        histogram[b] += 1;
    }
    Summary {
        mean,
        variance,
        histogram,
    }
}

/// Per feature and group: mean, variance and a histogram over bins shared
/// by both populations. Level-coded features get one bin per level.
pub fn feature_shift_report(original: &Population, impacted: &Population, bins: usize) -> Result<Vec<FeatureShift>> {
    if original.schema() != impacted.schema() {
        return Err(Error::FeatureMismatch);
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let schema = original.schema();
    let mut out = Vec::with_capacity(schema.len());
    for (k, f) in schema.features().iter().enumerate() {
        let edges: Vec<f64> = match f.kind.levels() {
            Some(levels) => (0..=levels.len()).map(|l| l as f64 - 0.5).collect(),
            None => {
                let all = original.individuals().iter().chain(impacted.individuals()).map(|i| i.x[k]);
                let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                let (lo, hi) = f.range.map_or((lo, hi), |[a, b]| (a, b));
                let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
                (0..=bins).map(|b| if b == bins { hi.max(lo + width) } else { lo + width * b as f64 }).collect()
            }
        };
        let per_group = |pop: &Population| {
            pop.groups()
                .iter()
                .map(|&g| {
                    let v: Vec<f64> = pop.individuals().iter().filter(|i| i.group == g).map(|i| i.x[k]).collect();
                    (schema.group_name(g), summarize(&v, &edges))
                })
                .collect()
        };
        out.push(FeatureShift {
            feature: f.name.clone(),
            before: per_group(original),
            after: per_group(impacted),
            edges,
        });
    }
    Ok(out)
}
