//! Group-conditional effort, benefit, reward and utility.
//!
//! Effort to move feature `k` from `x` to `x'` for a member of group `s` is
//! the gap between the quantile ranks of the two values in group `s`'s
//! empirical distribution of feature `k`. Total effort is
//! `c_s + (1/K) * sum_k c_{s,k} * eps_{s,k}(x_k, x'_k)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Individual, Population, QuantileTable};
use crate::predictors::Regressor;
use crate::schema::{Direction, FeatureKind, FeatureSchema, GroupId};

/// Default constant cost of switching a categorical level.
pub const DEFAULT_CATEGORICAL_COST: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EffortParams {
    /// `c_s` keyed by group name; missing groups cost 0.
    pub base_costs: BTreeMap<String, f64>,
    pub categorical_cost: f64,
    /// Risk aversion `alpha > 0`.
    pub alpha: f64,
}

impl Default for EffortParams {
    fn default() -> Self {
        EffortParams {
            base_costs: BTreeMap::new(),
            categorical_cost: DEFAULT_CATEGORICAL_COST,
            alpha: 1.0,
        }
    }
}

impl EffortParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.categorical_cost >= 0.0 && self.categorical_cost.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "categorical cost must be finite and >= 0, got {}",
                self.categorical_cost
            )));
        }
        for (g, c) in &self.base_costs {
            if !(*c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("base cost of `{g}` must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn base_cost(&self, group: &str) -> f64 {
        self.base_costs.get(group).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BenefitFn {
    /// `b(y, y_hat) = y_hat`
    #[default]
    #[serde(rename = "predicted")]
    PredictedLabel,
    /// `b(y, y_hat) = y_hat - y + 1`
    #[serde(rename = "shifted_gain")]
    ShiftedGain,
}

impl BenefitFn {
    pub fn eval(self, y: f64, y_hat: f64) -> f64 {
        match self {
            BenefitFn::PredictedLabel => y_hat,
            BenefitFn::ShiftedGain => y_hat - y + 1.0,
        }
    }
}

/// `b^alpha`, rejecting negative bases with non-integer exponents.
pub fn risk_adjusted(benefit: f64, alpha: f64) -> Result<f64> {
    if alpha == 1.0 {
        Ok(benefit)
    } else if benefit >= 0.0 || libm::trunc(alpha) == alpha {
        Ok(libm::pow(benefit, alpha))
    } else {
        Err(Error::NegativeBenefit { benefit, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    pub reward: f64,
    /// May be `+inf`, in which case `utility` is `-inf`.
    pub effort: f64,
    pub utility: f64,
}

impl UtilityBreakdown {
    pub fn new(reward: f64, effort: f64) -> Self {
        let utility = if effort.is_infinite() { f64::NEG_INFINITY } else { reward - effort };
        UtilityBreakdown { reward, effort, utility }
    }
}

fn oriented_gain(table: &QuantileTable, direction: Direction, from: f64, to: f64) -> f64 {
    let gap = match direction {
        Direction::Increasing => table.rank(to) - table.rank(from),
        Direction::Decreasing => table.rank_desc(to) - table.rank_desc(from),
    };
    gap.max(0.0)
}

/// Per-feature effort against one group's table. Values are assumed valid.
fn effort_term(kind: &FeatureKind, table: &QuantileTable, categorical_cost: f64, from: f64, to: f64) -> f64 {
    if from == to {
        return 0.0;
    }
    match kind {
        FeatureKind::NumericalMonotone { direction } | FeatureKind::OrdinalMonotone { direction } => {
            oriented_gain(table, *direction, from, to)
        }
        FeatureKind::NumericalNonMonotone | FeatureKind::OrdinalNonMonotone => {
            libm::fabs(table.rank(to) - table.rank(from))
        }
        FeatureKind::Categorical { .. } => categorical_cost,
        FeatureKind::Immutable { .. } => f64::INFINITY,
        FeatureKind::ConditionallyImmutable { allowed_direction } => {
            let allowed = match allowed_direction {
                Direction::Increasing => to > from,
                Direction::Decreasing => to < from,
            };
            if allowed {
                oriented_gain(table, *allowed_direction, from, to)
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Effort parameters resolved against a reference population's tables.
#[derive(Debug, Clone)]
pub struct EffortModel<'a> {
    reference: &'a Population,
    /// Per group position: `c_s`.
    base: Vec<f64>,
    /// Per group position, per feature: `c_{s,k}`.
    weights: Vec<Vec<f64>>,
    categorical: Vec<f64>,
}

impl<'a> EffortModel<'a> {
    pub fn new(reference: &'a Population, params: &EffortParams) -> Result<Self> {
        params.validate()?;
        let schema = reference.schema();
        let names: Vec<String> = reference.groups().iter().map(|&g| schema.group_name(g)).collect();
        Ok(EffortModel {
            reference,
            base: names.iter().map(|n| params.base_cost(n)).collect(),
            weights: names
                .iter()
                .map(|n| schema.features().iter().map(|f| f.weight.for_group(n)).collect())
                .collect(),
            categorical: schema
                .features()
                .iter()
                .map(|f| f.categorical_cost.unwrap_or(params.categorical_cost))
                .collect(),
        })
    }

    pub fn reference(&self) -> &'a Population {
        self.reference
    }

    pub fn schema(&self) -> &'a FeatureSchema {
        self.reference.schema()
    }

    fn position(&self, group: GroupId) -> Result<usize> {
        self.reference
            .group_index(group)
            .ok_or_else(|| Error::EmptyGroup(self.schema().group_name(group)))
    }

    pub fn base_cost(&self, group: GroupId) -> Result<f64> {
        Ok(self.base[self.position(group)?])
    }

    /// `eps_{s,k}(from, to)` with value validation.
    pub fn feature_effort(&self, group: GroupId, k: usize, from: f64, to: f64) -> Result<f64> {
        let schema = self.schema();
        if k >= schema.len() {
            return Err(Error::InvalidParameter(format!("feature index {k} out of range")));
        }
        schema.check_value(k, from)?;
        schema.check_value(k, to)?;
        let pos = self.position(group)?;
        Ok(self.term(pos, k, from, to))
    }

    #[inline]
    fn term(&self, pos: usize, k: usize, from: f64, to: f64) -> f64 {
        let table = &self.reference_tables(pos).features[k];
        effort_term(&self.schema().feature(k).kind, table, self.categorical[k], from, to)
    }

    fn reference_tables(&self, pos: usize) -> &'a crate::population::GroupTables {
        self.reference
            .tables(self.reference.groups()[pos])
            .expect("position comes from the reference population")
    }

    /// `E_s(x, x')`; `+inf` when any term is infinite.
    pub fn total_effort(&self, group: GroupId, from: &[f64], to: &[f64]) -> Result<f64> {
        let k = self.schema().len();
        if from.len() != k || to.len() != k {
            return Err(Error::InvalidParameter(format!("effort vectors must have length {k}")));
        }
        let pos = self.position(group)?;
        Ok(self.total_unchecked(pos, from, to))
    }

    fn total_unchecked(&self, pos: usize, from: &[f64], to: &[f64]) -> f64 {
        let weights = &self.weights[pos];
        let mut sum = 0.0;
        for k in 0..from.len() {
            if from[k] == to[k] {
                continue;
            }
            let term = self.term(pos, k, from[k], to[k]);
            if term.is_infinite() {
                return f64::INFINITY;
            }
            sum += weights[k] * term;
        }
        self.base[pos] + sum / from.len() as f64
    }

    /// `sum_{k mutable} eps_{s,k}(from_k, to_k)`: unweighted, no base cost.
    pub fn mutable_effort(&self, group: GroupId, mutable: &[usize], from: &[f64], to: &[f64]) -> Result<f64> {
        let pos = self.position(group)?;
        Ok(mutable.iter().map(|&k| self.term(pos, k, from[k], to[k])).sum())
    }

    /// Label quantile `Q_s(y)` in the reference population.
    pub fn label_rank(&self, group: GroupId, y: f64) -> Result<f64> {
        let pos = self.position(group)?;
        Ok(self.reference_tables(pos).label.rank(y))
    }
}

/// `Q_{s,k}(x)` in `pop`.
pub fn quantile_rank(pop: &Population, group: GroupId, k: usize, x: f64) -> Result<f64> {
    if k >= pop.schema().len() {
        return Err(Error::InvalidParameter(format!("feature index {k} out of range")));
    }
    Ok(pop.tables(group)?.features[k].rank(x))
}

pub fn feature_effort(
    pop: &Population,
    params: &EffortParams,
    group: GroupId,
    k: usize,
    from: f64,
    to: f64,
) -> Result<f64> {
    EffortModel::new(pop, params)?.feature_effort(group, k, from, to)
}

pub fn total_effort(pop: &Population, params: &EffortParams, group: GroupId, from: &[f64], to: &[f64]) -> Result<f64> {
    EffortModel::new(pop, params)?.total_effort(group, from, to)
}

/// `R_h(z, z') = b(h(x'), y')^alpha - b(h(x), y)^alpha`.
pub fn reward<H: Regressor + ?Sized>(h: &H, b: BenefitFn, alpha: f64, z: &Individual, target: &Individual) -> Result<f64> {
    let before = risk_adjusted(b.eval(z.y, h.predict(&z.x)), alpha)?;
    let after = risk_adjusted(b.eval(target.y, h.predict(&target.x)), alpha)?;
    Ok(after - before)
}

/// Reward, effort (using `z`'s group) and their difference.
pub fn utility<H: Regressor + ?Sized>(
    h: &H,
    b: BenefitFn,
    params: &EffortParams,
    pop: &Population,
    z: &Individual,
    target: &Individual,
) -> Result<UtilityBreakdown> {
    let r = reward(h, b, params.alpha, z, target)?;
    let e = total_effort(pop, params, z.group, &z.x, &target.x)?;
    Ok(UtilityBreakdown::new(r, e))
}

/// Profile an individual adopts when imitating a candidate: the candidate's
/// entries for every changeable feature, the individual's own entries for
/// immutable ones.
pub fn imitation_target(schema: &FeatureSchema, own: &[f64], candidate: &[f64]) -> Vec<f64> {
    schema
        .features()
        .iter()
        .enumerate()
        .map(|(k, f)| if f.kind.is_changeable() { candidate[k] } else { own[k] })
        .collect()
}

/// Evaluates imitation utilities `U(z_i, target(i, j))` over a population
/// that serves both as the reference for quantiles and as the candidate set.
pub struct PairEvaluator<'a, H: Regressor + ?Sized> {
    h: &'a H,
    pop: &'a Population,
    effort: EffortModel<'a>,
    benefit: BenefitFn,
    alpha: f64,
    immutable: Vec<usize>,
    predictions: Vec<f64>,
    own_benefit: Vec<f64>,
    positions: Vec<usize>,
}

impl<'a, H: Regressor + ?Sized> PairEvaluator<'a, H> {
    pub fn new(h: &'a H, pop: &'a Population, params: &EffortParams, benefit: BenefitFn) -> Result<Self> {
        let effort = EffortModel::new(pop, params)?;
        let predictions: Vec<f64> = pop.individuals().iter().map(|i| h.predict(&i.x)).collect();
        let own_benefit = pop
            .individuals()
            .iter()
            .zip(&predictions)
            .map(|(i, &p)| risk_adjusted(benefit.eval(i.y, p), params.alpha))
            .collect::<Result<Vec<_>>>()?;
        let positions = pop
            .individuals()
            .iter()
            .map(|i| pop.group_index(i.group).expect("group present"))
            .collect();
        let immutable = (0..pop.schema().len())
            .filter(|&k| !pop.schema().feature(k).kind.is_changeable())
            .collect();
        Ok(PairEvaluator {
            h,
            pop,
            effort,
            benefit,
            alpha: params.alpha,
            immutable,
            predictions,
            own_benefit,
            positions,
        })
    }

    pub fn population(&self) -> &'a Population {
        self.pop
    }

    pub fn len(&self) -> usize {
        self.pop.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pop.is_empty()
    }

    pub fn prediction(&self, i: usize) -> f64 {
        self.predictions[i]
    }

    pub fn effort_model(&self) -> &EffortModel<'a> {
        &self.effort
    }

    /// Imitation target of `i` copying candidate `j`.
    pub fn target(&self, i: usize, j: usize) -> Vec<f64> {
        imitation_target(self.pop.schema(), &self.pop.individual(i).x, &self.pop.individual(j).x)
    }

    fn same_immutables(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.pop.individual(i).x, &self.pop.individual(j).x);
        self.immutable.iter().all(|&k| a[k] == b[k])
    }

    /// Utility breakdown of `i` imitating candidate `j`.
    pub fn pair(&self, i: usize, j: usize) -> Result<UtilityBreakdown> {
        let zi = self.pop.individual(i);
        let zj = self.pop.individual(j);
        let (prediction, effort) = if self.same_immutables(i, j) {
            (self.predictions[j], self.effort.total_unchecked(self.positions[i], &zi.x, &zj.x))
        } else {
            let target = self.target(i, j);
            (self.h.predict(&target), self.effort.total_unchecked(self.positions[i], &zi.x, &target))
        };
        let after = risk_adjusted(self.benefit.eval(zj.y, prediction), self.alpha)?;
        Ok(UtilityBreakdown::new(after - self.own_benefit[i], effort))
    }

    /// Rewards and efforts of `i` against every candidate, in index order.
    pub fn row(&self, i: usize) -> Result<Vec<UtilityBreakdown>> {
        (0..self.pop.len()).map(|j| self.pair(i, j)).collect()
    }
}
