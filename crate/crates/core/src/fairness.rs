//! Effort-based unfairness measures and residual-difference baselines.
//!
//! All effort measures read a [`PairTable`] of rewards and efforts of every
//! individual imitating every candidate of the same population, so a table
//! can be built once (possibly in parallel, see [`PairTable::from_rows`]) and
//! reused across a whole delta grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::effort::{PairEvaluator, UtilityBreakdown};
use crate::error::{Error, Result};
use crate::population::Population;
use crate::predictors::Regressor;
use crate::schema::GroupId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    BoundedEffort { delta: f64 },
    ThresholdReward { delta: f64 },
    EffortReward,
    PositiveResidualDiff,
    NegativeResidualDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    BoundedEffort,
    ThresholdReward,
}

impl CurveKind {
    pub fn at(self, delta: f64) -> Measure {
        match self {
            CurveKind::BoundedEffort => Measure::BoundedEffort { delta },
            CurveKind::ThresholdReward => Measure::ThresholdReward { delta },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfairnessReport {
    pub measure: Measure,
    /// Group name to value; `None` marks an absent value.
    pub per_group: BTreeMap<String, Option<f64>>,
    /// `max - min` over groups; absent when any group value is.
    pub disparity: Option<f64>,
    /// Fraction of each group with a feasible candidate (threshold-reward).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCurve {
    pub kind: CurveKind,
    pub deltas: Vec<f64>,
    pub per_group: BTreeMap<String, Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<BTreeMap<String, Vec<f64>>>,
}

pub fn disparity<'a>(values: impl IntoIterator<Item = &'a Option<f64>>) -> Option<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        let v = (*v)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (hi >= lo).then_some(hi - lo)
}

/// Rewards and efforts of every ordered pair `(i, j)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    n: usize,
    reward: Vec<f64>,
    effort: Vec<f64>,
    /// Group position of each individual and the group names.
    member_group: Vec<usize>,
    group_names: Vec<String>,
}

impl PairTable {
    pub fn build<H: Regressor + ?Sized>(eval: &PairEvaluator<'_, H>) -> Result<Self> {
        let rows = (0..eval.len()).map(|i| eval.row(i)).collect::<Result<Vec<_>>>()?;
        Self::from_rows(eval.population(), rows)
    }

    /// Assembles a table from rows computed elsewhere, in index order.
    pub fn from_rows(pop: &Population, rows: Vec<Vec<UtilityBreakdown>>) -> Result<Self> {
        let n = pop.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter(format!("pair table needs {n} rows of {n}")));
        }
        let mut reward = Vec::with_capacity(n * n);
        let mut effort = Vec::with_capacity(n * n);
        for row in &rows {
            for u in row {
                reward.push(u.reward);
                effort.push(u.effort);
            }
        }
        Ok(PairTable {
            n,
            reward,
            effort,
            member_group: pop
                .individuals()
                .iter()
                .map(|i| pop.group_index(i.group).expect("group present"))
                .collect(),
            group_names: pop.groups().iter().map(|&g| pop.schema().group_name(g)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn reward(&self, i: usize, j: usize) -> f64 {
        self.reward[i * self.n + j]
    }

    pub fn effort(&self, i: usize, j: usize) -> f64 {
        self.effort[i * self.n + j]
    }

    pub fn pair(&self, i: usize, j: usize) -> UtilityBreakdown {
        UtilityBreakdown::new(self.reward(i, j), self.effort(i, j))
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        let at = i * self.n;
        self.reward[at..at + self.n].iter().copied().zip(self.effort[at..at + self.n].iter().copied())
    }

    /// Largest finite effort over all pairs.
    pub fn max_finite_effort(&self) -> f64 {
        self.effort.iter().copied().filter(|e| e.is_finite()).fold(0.0, f64::max)
    }

    /// Largest reward over pairs with finite effort.
    pub fn max_reachable_reward(&self) -> f64 {
        self.reward
            .iter()
            .zip(&self.effort)
            .filter(|(_, e)| e.is_finite())
            .map(|(r, _)| *r)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Best reward within effort budget `delta`; 0 when nothing qualifies.
    pub fn best_reward_within(&self, i: usize, delta: f64) -> f64 {
        self.row(i)
            .filter(|&(_, e)| e.is_finite() && e <= delta)
            .map(|(r, _)| r)
            .fold(None, |best: Option<f64>, r| Some(best.map_or(r, |b| b.max(r))))
            .unwrap_or(0.0)
    }

    /// Least effort reaching reward `delta`, if any candidate does.
    pub fn min_effort_reaching(&self, i: usize, delta: f64) -> Option<f64> {
        self.row(i)
            .filter(|&(r, e)| e.is_finite() && r >= delta)
            .map(|(_, e)| e)
            .fold(None, |best: Option<f64>, e| Some(best.map_or(e, |b| b.min(e))))
    }

    /// Best utility, floored at 0 by staying put.
    pub fn best_utility(&self, i: usize) -> f64 {
        self.row(i)
            .map(|(r, e)| UtilityBreakdown::new(r, e).utility)
            .fold(0.0, f64::max)
    }

    fn group_means(&self, values: impl Iterator<Item = Option<f64>>) -> (BTreeMap<String, Option<f64>>, Vec<f64>) {
        let g = self.group_names.len();
        let mut sum = alloc::vec![0.0; g];
        let mut used = alloc::vec![0usize; g];
        let mut size = alloc::vec![0usize; g];
        for (i, v) in values.enumerate() {
            let pos = self.member_group[i];
            size[pos] += 1;
            if let Some(v) = v {
                sum[pos] += v;
                used[pos] += 1;
            }
        }
        let means = (0..g)
            .map(|p| (self.group_names[p].clone(), (used[p] > 0).then(|| sum[p] / used[p] as f64)))
            .collect();
        let feasible = (0..g).map(|p| used[p] as f64 / size[p] as f64).collect();
        (means, feasible)
    }

    pub fn bounded_effort(&self, delta: f64) -> Result<UnfairnessReport> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("effort budget must be >= 0, got {delta}")));
        }
        let (per_group, _) = self.group_means((0..self.n).map(|i| Some(self.best_reward_within(i, delta))));
        Ok(UnfairnessReport {
            measure: Measure::BoundedEffort { delta },
            disparity: disparity(per_group.values()),
            per_group,
            feasibility: None,
        })
    }

    pub fn threshold_reward(&self, delta: f64) -> Result<UnfairnessReport> {
        if delta.is_nan() {
            return Err(Error::InvalidParameter("reward threshold is NaN".into()));
        }
        let (per_group, feasible) = self.group_means((0..self.n).map(|i| self.min_effort_reaching(i, delta)));
        let feasibility = self.group_names.iter().cloned().zip(feasible).collect();
        Ok(UnfairnessReport {
            measure: Measure::ThresholdReward { delta },
            disparity: disparity(per_group.values()),
            per_group,
            feasibility: Some(feasibility),
        })
    }

    pub fn effort_reward(&self) -> UnfairnessReport {
        let (per_group, _) = self.group_means((0..self.n).map(|i| Some(self.best_utility(i))));
        UnfairnessReport {
            measure: Measure::EffortReward,
            disparity: disparity(per_group.values()),
            per_group,
            feasibility: None,
        }
    }

    pub fn sweep(&self, kind: CurveKind, grid: &[f64]) -> Result<DeltaCurve> {
        if grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidParameter("delta grid must be sorted ascending".into()));
        }
        let mut per_group: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        let mut feasibility: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for &delta in grid {
            let report = match kind {
                CurveKind::BoundedEffort => self.bounded_effort(delta)?,
                CurveKind::ThresholdReward => self.threshold_reward(delta)?,
            };
            for (g, v) in report.per_group {
                per_group.entry(g).or_default().push(v);
            }
            for (g, f) in report.feasibility.into_iter().flatten() {
                feasibility.entry(g).or_default().push(f);
            }
        }
        Ok(DeltaCurve {
            kind,
            deltas: grid.to_vec(),
            per_group,
            feasibility: (kind == CurveKind::ThresholdReward).then_some(feasibility),
        })
    }
}

/// `n` evenly spaced points on `[0, hi]` (a single 0 when `n == 1`).
pub fn linear_grid(hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![0.0],
        _ => (0..n).map(|i| if i + 1 == n { hi } else { hi * i as f64 / (n - 1) as f64 }).collect(),
    }
}

pub fn bounded_effort<H: Regressor + ?Sized>(eval: &PairEvaluator<'_, H>, delta: f64) -> Result<UnfairnessReport> {
    PairTable::build(eval)?.bounded_effort(delta)
}

pub fn threshold_reward<H: Regressor + ?Sized>(eval: &PairEvaluator<'_, H>, delta: f64) -> Result<UnfairnessReport> {
    PairTable::build(eval)?.threshold_reward(delta)
}

pub fn effort_reward<H: Regressor + ?Sized>(eval: &PairEvaluator<'_, H>) -> Result<UnfairnessReport> {
    Ok(PairTable::build(eval)?.effort_reward())
}

pub fn sweep_delta<H: Regressor + ?Sized>(
    kind: CurveKind,
    eval: &PairEvaluator<'_, H>,
    grid: &[f64],
) -> Result<DeltaCurve> {
    PairTable::build(eval)?.sweep(kind, grid)
}

/// Positive and negative residual differences: per group, the mean of
/// `max(0, y_hat - y)` over members predicted above their label (and the
/// mirror image), absent when a group has no such member.
pub fn residual_differences<H: Regressor + ?Sized>(h: &H, pop: &Population) -> (UnfairnessReport, UnfairnessReport) {
    let mut pos: BTreeMap<GroupId, (f64, usize)> = BTreeMap::new();
    let mut neg: BTreeMap<GroupId, (f64, usize)> = BTreeMap::new();
    for &g in pop.groups() {
        pos.insert(g, (0.0, 0));
        neg.insert(g, (0.0, 0));
    }
    for ind in pop.individuals() {
        let r = h.predict(&ind.x) - ind.y;
        if r > 0.0 {
            let e = pos.get_mut(&ind.group).expect("group present");
            e.0 += r;
            e.1 += 1;
        } else if r < 0.0 {
            let e = neg.get_mut(&ind.group).expect("group present");
            e.0 -= r;
            e.1 += 1;
        }
    }
    let report = |measure, acc: BTreeMap<GroupId, (f64, usize)>| {
        let per_group: BTreeMap<String, Option<f64>> = acc
            .into_iter()
            .map(|(g, (s, c))| (pop.schema().group_name(g), (c > 0).then(|| s / c as f64)))
            .collect();
        UnfairnessReport {
            measure,
            disparity: disparity(per_group.values()),
            per_group,
            feasibility: None,
        }
    };
    (report(Measure::PositiveResidualDiff, pos), report(Measure::NegativeResidualDiff, neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effort::{BenefitFn, EffortParams};
    use crate::predictors::test_support::numeric_pop;
    use alloc::vec;

    fn toy() -> Population {
        numeric_pop(
            &[(0, vec![1.0]), (0, vec![2.0]), (1, vec![1.0]), (1, vec![3.0])],
            |x| x[1],
        )
    }

    #[test]
    fn residual_example() {
        // Group A residuals {+2, -1}, group B {+1, +1}.
        let pop = numeric_pop(&[(0, vec![0.0]), (0, vec![1.0]), (1, vec![2.0]), (1, vec![3.0])], |_| 0.0);
        let preds = [2.0, -1.0, 1.0, 1.0];
        let h = |x: &[f64]| preds[x[1] as usize];
        let (p, n) = residual_differences(&h, &pop);
        assert_eq!(p.per_group["A"], Some(2.0));
        assert_eq!(p.per_group["B"], Some(1.0));
        assert_eq!(p.disparity, Some(1.0));
        assert_eq!(n.per_group["B"], None);
        assert_eq!(n.disparity, None);
    }

    #[test]
    fn perfect_predictor_has_no_residual_members() {
        let pop = toy();
        let h = |x: &[f64]| x[1];
        let (p, n) = residual_differences(&h, &pop);
        assert!(p.per_group.values().all(Option::is_none));
        assert!(n.per_group.values().all(Option::is_none));
    }

    #[test]
    fn constant_predictor_is_fair() {
        let pop = toy();
        let h = |_: &[f64]| 5.0;
        let eval = PairEvaluator::new(&h, &pop, &EffortParams::default(), BenefitFn::PredictedLabel).unwrap();
        let t = PairTable::build(&eval).unwrap();
        let r = t.effort_reward();
        assert!(r.per_group.values().all(|v| *v == Some(0.0)));
        assert_eq!(r.disparity, Some(0.0));
    }

    #[test]
    fn positive_base_cost_blocks_zero_budget() {
        let pop = toy();
        let h = |x: &[f64]| x[1];
        let mut params = EffortParams::default();
        params.base_costs.insert("A".into(), 0.1);
        params.base_costs.insert("B".into(), 0.2);
        let eval = PairEvaluator::new(&h, &pop, &params, BenefitFn::PredictedLabel).unwrap();
        let r = bounded_effort(&eval, 0.0).unwrap();
        assert!(r.per_group.values().all(|v| *v == Some(0.0)));
        assert_eq!(r.disparity, Some(0.0));
    }

    #[test]
    fn threshold_reward_self_candidate_and_infeasibility() {
        let pop = toy();
        let h = |x: &[f64]| x[1];
        let eval = PairEvaluator::new(&h, &pop, &EffortParams::default(), BenefitFn::PredictedLabel).unwrap();
        let t = PairTable::build(&eval).unwrap();
        let r = t.threshold_reward(0.0).unwrap();
        assert!(r.per_group.values().all(|v| *v == Some(0.0)));
        let above = t.threshold_reward(t.max_reachable_reward() + 1.0).unwrap();
        assert!(above.per_group.values().all(Option::is_none));
        assert!(above.feasibility.unwrap().values().all(|f| *f == 0.0));
        assert_eq!(above.disparity, None);
    }

    #[test]
    fn hand_computed_toy() {
        // Group A holds x0 in {1, 2}; moving 1 -> 2 costs |1.0 - 0.5| = 0.5
        // over K = 2 features, so effort 0.25 and reward 1; 1 -> 3 also costs
        // 0.25 for reward 2. Group B holds {1, 3}: 1 -> 2 costs
        // |rank_B(2) - rank_B(1)| = 0 for reward 1, 1 -> 3 costs 0.25 for 2.
        // Best utilities: A {1.75, 1}, B {1.75, 0}.
        let pop = toy();
        let h = |x: &[f64]| x[1];
        let eval = PairEvaluator::new(&h, &pop, &EffortParams::default(), BenefitFn::PredictedLabel).unwrap();
        let t = PairTable::build(&eval).unwrap();
        assert_eq!(t.effort(0, 1), 0.25);
        assert_eq!(t.effort(2, 1), 0.0);
        assert_eq!(t.best_reward_within(2, 0.0), 1.0);
        assert_eq!(t.best_reward_within(2, 0.25), 2.0);
        assert_eq!(t.best_utility(0), 1.75);
        assert_eq!(t.best_utility(1), 1.0);
        assert_eq!(t.best_utility(2), 1.75);
        assert_eq!(t.best_utility(3), 0.0);
        let r = t.effort_reward();
        assert_eq!(r.per_group["A"], Some(1.375));
        assert_eq!(r.per_group["B"], Some(0.875));
        assert_eq!(r.disparity, Some(0.5));
    }

    #[test]
    fn sweep_matches_pointwise_and_rejects_unsorted_grid() {
        let pop = toy();
        let h = |x: &[f64]| x[1] * x[1];
        let eval = PairEvaluator::new(&h, &pop, &EffortParams::default(), BenefitFn::PredictedLabel).unwrap();
        let t = PairTable::build(&eval).unwrap();
        let grid = linear_grid(t.max_finite_effort(), 5);
        let c = t.sweep(CurveKind::BoundedEffort, &grid).unwrap();
        for (p, &d) in grid.iter().enumerate() {
            let r = t.bounded_effort(d).unwrap();
            for (g, v) in &r.per_group {
                assert_eq!(c.per_group[g][p], *v);
            }
        }
        assert!(t.sweep(CurveKind::BoundedEffort, &[1.0, 0.0]).is_err());
        assert_eq!(linear_grid(2.0, 3), vec![0.0, 1.0, 2.0]);
    }
}
