//! Exhaustive re-implementations of the effort, fairness, selection,
//! clustering and focal-assignment computations, checked against the
//! library on randomized instances of at most 30 individuals.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::sync::Arc;

use effortsim_core::dynamics::simulate;
use effortsim_core::fairness::PairTable;
use effortsim_core::schema::WeightSpec;
use effortsim_core::segregation::{absolute_clustering, assign_focal, DistanceMatrix, MetricContext};
use effortsim_core::{
    BenefitFn, Direction, EffortParams, FeatureKind, FeatureSchema, FeatureSpec, GroupId, Individual, PairEvaluator,
    Population,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 40;
const TOL: f64 = 1e-10;

#[derive(Clone, Copy)]
enum Kind {
    Inc,
    Dec,
    NonMono,
    Cat(f64),
    Fixed,
    UpOnly,
}

struct Instance {
    kinds: Vec<Kind>,
    /// weight[g][k]
    weight: [Vec<f64>; 2],
    base: [f64; 2],
    alpha: f64,
    benefit: BenefitFn,
    coef: Vec<f64>,
    rows: Vec<(usize, Vec<f64>, f64)>,
    pop: Population,
    params: EffortParams,
}

const GROUPS: [&str; 2] = ["a", "b"];

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cat_cost = if seed.is_multiple_of(3) { 0.7 } else { 0.5 };
    let kinds = vec![
        Kind::Fixed,
        Kind::Inc,
        Kind::Dec,
        Kind::NonMono,
        Kind::Cat(cat_cost),
        Kind::UpOnly,
        Kind::Fixed,
    ];
    let mut specs = vec![
        FeatureSpec::new("s", FeatureKind::Immutable { levels: Some(vec!["a".into(), "b".into()]) }),
        FeatureSpec::new("hours", FeatureKind::NumericalMonotone { direction: Direction::Increasing }),
        FeatureSpec::new("absences", FeatureKind::OrdinalMonotone { direction: Direction::Decreasing }),
        FeatureSpec::new("hobby", FeatureKind::OrdinalNonMonotone),
        {
            let mut f = FeatureSpec::new(
                "track",
                FeatureKind::Categorical { levels: vec!["x".into(), "y".into(), "z".into()] },
            );
            f.categorical_cost = (seed.is_multiple_of(3)).then_some(0.7);
            f
        },
        FeatureSpec::new("age", FeatureKind::ConditionallyImmutable { allowed_direction: Direction::Increasing }),
        FeatureSpec::new("region", FeatureKind::Immutable { levels: None }),
    ];
    let mut weight = [vec![1.0; kinds.len()], vec![1.0; kinds.len()]];
    for g in 0..2 {
        for k in 1..kinds.len() {
            weight[g][k] = rng.random_range(0.5..2.0);
        }
    }
    for (k, spec) in specs.iter_mut().enumerate() {
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), weight[0][k]);
        map.insert("b".to_string(), weight[1][k]);
        spec.weight = WeightSpec::PerGroup(map);
    }
    let schema = Arc::new(FeatureSchema::new(specs, "s", "y").unwrap());

    let n = rng.random_range(4..=30usize);
    let mut rows = Vec::new();
    for i in 0..n {
        let g = if i < 2 { i } else { rng.random_range(0..2usize) };
        let x = vec![
            g as f64,
            rng.random_range(0..6) as f64 * 0.5,
            rng.random_range(0..5) as f64,
            rng.random_range(1..6) as f64,
            rng.random_range(0..3) as f64,
            rng.random_range(15..19) as f64,
            rng.random_range(0..2) as f64,
        ];
        let y = rng.random_range(5.0..15.0);
        rows.push((g, x, y));
    }
    let coef: Vec<f64> = (0..kinds.len() + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = if seed.is_multiple_of(2) { [0.0, 0.0] } else { [rng.random_range(0.0..0.1), 0.0] };
    let alpha = if seed % 4 == 1 { 2.0 } else { 1.0 };
    let benefit = if seed % 5 == 2 { BenefitFn::ShiftedGain } else { BenefitFn::PredictedLabel };
    let params = EffortParams {
        base_costs: [("a".to_string(), base[0]), ("b".to_string(), base[1])].into_iter().collect(),
        categorical_cost: 0.5,
        alpha,
    };
    let individuals = rows
        .iter()
        .map(|(g, x, y)| Individual { x: x.clone(), y: *y, group: GroupId(*g as u32) })
        .collect();
    let pop = Population::new(schema, individuals).unwrap();
    Instance { kinds, weight, base, alpha, benefit, coef, rows, pop, params }
}

impl Instance {
    fn n(&self) -> usize {
        self.rows.len()
    }

    fn h(&self, x: &[f64]) -> f64 {
        // keeps benefits positive so any alpha is admissible
        40.0 + self.coef[0] + x.iter().zip(&self.coef[1..]).map(|(a, b)| a * b).sum::<f64>()
    }

    fn values(&self, g: usize, k: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.0 == g).map(|r| r.1[k]).collect()
    }

    fn labels(&self, g: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.0 == g).map(|r| r.2).collect()
    }

    fn eps(&self, g: usize, k: usize, from: f64, to: f64) -> f64 {
        if from == to {
            return 0.0;
        }
        let vals = self.values(g, k);
        let n = vals.len() as f64;
        let le = |v: f64| vals.iter().filter(|&&u| u <= v).count() as f64 / n;
        let ge = |v: f64| vals.iter().filter(|&&u| u >= v).count() as f64 / n;
        match self.kinds[k] {
            Kind::Inc => (le(to) - le(from)).max(0.0),
            Kind::Dec => (ge(to) - ge(from)).max(0.0),
            Kind::NonMono => (le(to) - le(from)).abs(),
            Kind::Cat(c) => c,
            Kind::Fixed => f64::INFINITY,
            Kind::UpOnly => {
                if to > from {
                    (le(to) - le(from)).max(0.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn target(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.kinds.len())
            .map(|k| match self.kinds[k] {
                Kind::Fixed => self.rows[i].1[k],
                _ => self.rows[j].1[k],
            })
            .collect()
    }

    fn effort(&self, i: usize, j: usize) -> f64 {
        let g = self.rows[i].0;
        let t = self.target(i, j);
        let mut sum = 0.0;
        for k in 0..self.kinds.len() {
            let e = self.eps(g, k, self.rows[i].1[k], t[k]);
            if e.is_infinite() {
                return f64::INFINITY;
            }
            sum += self.weight[g][k] * e;
        }
        self.base[g] + sum / self.kinds.len() as f64
    }

    fn benefit(&self, y: f64, yhat: f64) -> f64 {
        let b = match self.benefit {
            BenefitFn::PredictedLabel => yhat,
            BenefitFn::ShiftedGain => yhat - y + 1.0,
        };
        b.powf(self.alpha)
    }

    fn reward(&self, i: usize, j: usize) -> f64 {
        let before = self.benefit(self.rows[i].2, self.h(&self.rows[i].1));
        self.benefit(self.rows[j].2, self.h(&self.target(i, j))) - before
    }

    fn utility(&self, i: usize, j: usize) -> f64 {
        let e = self.effort(i, j);
        if e.is_infinite() {
            f64::NEG_INFINITY
        } else {
            self.reward(i, j) - e
        }
    }

    fn group_mean(&self, per: &[Option<f64>], g: usize) -> Option<f64> {
        let vals: Vec<f64> = (0..self.n()).filter(|&i| self.rows[i].0 == g).filter_map(|i| per[i]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    fn bounded(&self, delta: f64) -> [Option<f64>; 2] {
        let per: Vec<Option<f64>> = (0..self.n())
            .map(|i| {
                let best = (0..self.n())
                    .filter(|&j| self.effort(i, j).is_finite() && self.effort(i, j) <= delta)
                    .map(|j| self.reward(i, j))
                    .fold(f64::NEG_INFINITY, f64::max);
                Some(if best == f64::NEG_INFINITY { 0.0 } else { best })
            })
            .collect();
        [self.group_mean(&per, 0), self.group_mean(&per, 1)]
    }

    fn threshold(&self, delta: f64) -> ([Option<f64>; 2], [f64; 2]) {
        let per: Vec<Option<f64>> = (0..self.n())
            .map(|i| {
                let best = (0..self.n())
                    .filter(|&j| self.reward(i, j) >= delta && self.effort(i, j).is_finite())
                    .map(|j| self.effort(i, j))
                    .fold(f64::INFINITY, f64::min);
                best.is_finite().then_some(best)
            })
            .collect();
        let feas = |g: usize| {
            let members: Vec<usize> = (0..self.n()).filter(|&i| self.rows[i].0 == g).collect();
            members.iter().filter(|&&i| per[i].is_some()).count() as f64 / members.len() as f64
        };
        ([self.group_mean(&per, 0), self.group_mean(&per, 1)], [feas(0), feas(1)])
    }

    fn effort_reward(&self) -> [Option<f64>; 2] {
        let per: Vec<Option<f64>> = (0..self.n())
            .map(|i| Some((0..self.n()).map(|j| self.utility(i, j)).fold(0.0, f64::max)))
            .collect();
        [self.group_mean(&per, 0), self.group_mean(&per, 1)]
    }

    fn role_model(&self, i: usize) -> Option<usize> {
        let mut best = 0;
        for j in 1..self.n() {
            if self.utility(i, j) > self.utility(i, best) {
                best = j;
            }
        }
        (self.utility(i, best) > 0.0).then_some(best)
    }

    /// Freely mutable features of this schema.
    fn mutable(&self) -> Vec<usize> {
        (0..self.kinds.len())
            .filter(|&k| matches!(self.kinds[k], Kind::Inc | Kind::Dec | Kind::NonMono | Kind::Cat(_)))
            .collect()
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        let mut d = 0.0_f64;
        for g in 0..2 {
            let labels = self.labels(g);
            let q = |y: f64| labels.iter().filter(|&&u| u <= y).count() as f64 / labels.len() as f64;
            let mut dg = (q(self.rows[j].2) - q(self.rows[i].2)).max(0.0);
            for k in self.mutable() {
                dg += self.eps(g, k, self.rows[i].1[k], self.rows[j].1[k]);
            }
            d = d.max(dg);
        }
        d
    }

    fn aci(&self, minority: usize) -> Option<f64> {
        let n = self.n() as f64;
        let m = self.rows.iter().filter(|r| r.0 == minority).count() as f64;
        let mi = |i: usize| if self.rows[i].0 == minority { 1.0 } else { 0.0 };
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for i in 0..self.n() {
            for j in 0..self.n() {
                let cij = if i == j { 1.0 } else { (-self.distance(i, j)).exp() };
                a += cij * (mi(i) / m) * mi(j);
                b += cij * (1.0 / n) * (m / n);
                c += cij * (mi(i) / m) * 1.0;
            }
        }
        let den = c - b;
        (den != 0.0).then(|| (a - b) / den)
    }

    /// Distinct imitated mutable vectors in first-imitation order.
    fn focal_points(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for i in 0..self.n() {
            if let Some(j) = self.role_model(i) {
                let v: Vec<f64> = self.mutable().iter().map(|&k| self.rows[j].1[k]).collect();
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Nearest focal point for each `(group, x)`, efforts measured in this
    /// instance's group distributions.
    fn nearest_focal(&self, members: &[(usize, Vec<f64>)], focal: &[Vec<f64>]) -> Vec<usize> {
        let mutable = self.mutable();
        members
            .iter()
            .map(|(g, x)| {
                let dist = |f: &Vec<f64>| mutable.iter().zip(f).map(|(&k, &v)| self.eps(*g, k, x[k], v)).sum::<f64>();
                let mut best = 0;
                for (p, f) in focal.iter().enumerate() {
                    if dist(f) < dist(&focal[best]) {
                        best = p;
                    }
                }
                best
            })
            .collect()
    }
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => (a - b).abs() <= TOL,
        _ => false,
    }
}

fn table(inst: &Instance) -> PairTable {
    let h = |x: &[f64]| inst.h(x);
    let eval = PairEvaluator::new(&h, &inst.pop, &inst.params, inst.benefit).unwrap();
    PairTable::build(&eval).unwrap()
}

fn deltas(inst: &Instance, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = inst.n();
    let efforts: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| inst.effort(i, j)).collect();
    let max_e = efforts.iter().copied().filter(|e| e.is_finite()).fold(0.0, f64::max);
    let max_r = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| inst.reward(i, j)).fold(0.0, f64::max);
    let mut be = vec![0.0, max_e + 1.0, f64::INFINITY];
    let mut tr = vec![-1.0, 0.0, max_r + 1.0];
    for _ in 0..4 {
        be.push(rng.random_range(0.0..max_e.max(1e-3)));
        tr.push(rng.random_range(-max_r.max(1e-3)..max_r.max(1e-3)));
    }
    (be, tr)
}

pub fn effort_and_reward_pairs_match() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let t = table(&inst);
        for i in 0..inst.n() {
            for j in 0..inst.n() {
                let (e, r) = (inst.effort(i, j), inst.reward(i, j));
                assert!((t.reward(i, j) - r).abs() <= TOL, "seed {seed} reward ({i},{j})");
                if e.is_infinite() {
                    assert!(t.effort(i, j).is_infinite(), "seed {seed} effort ({i},{j})");
                } else {
                    assert!((t.effort(i, j) - e).abs() <= TOL, "seed {seed} effort ({i},{j}): {} vs {e}", t.effort(i, j));
                }
            }
        }
    }
}

pub fn bounded_effort_matches() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let t = table(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for delta in deltas(&inst, &mut rng).0 {
            let got = t.bounded_effort(delta).unwrap();
            let want = inst.bounded(delta);
            for (g, w) in GROUPS.iter().zip(want) {
                assert!(close(got.per_group[*g], w), "seed {seed} delta {delta} group {g}: {:?} vs {w:?}", got.per_group[*g]);
            }
        }
    }
}

pub fn threshold_reward_matches() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let t = table(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        for delta in deltas(&inst, &mut rng).1 {
            let got = t.threshold_reward(delta).unwrap();
            let (want, feas) = inst.threshold(delta);
            for ((g, w), f) in GROUPS.iter().zip(want).zip(feas) {
                assert!(close(got.per_group[*g], w), "seed {seed} delta {delta} group {g}");
                assert_eq!(got.feasibility.as_ref().unwrap()[*g], f, "seed {seed} delta {delta} feasibility {g}");
            }
        }
    }
}

pub fn effort_reward_matches() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let got = table(&inst).effort_reward();
        for (g, w) in GROUPS.iter().zip(inst.effort_reward()) {
            assert!(close(got.per_group[*g], w), "seed {seed} group {g}");
        }
    }
}

pub fn role_models_match() {
    let mut movers = 0;
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let h = |x: &[f64]| inst.h(x);
        let eval = PairEvaluator::new(&h, &inst.pop, &inst.params, inst.benefit).unwrap();
        let impact = simulate(&eval).unwrap();
        for i in 0..inst.n() {
            let want = inst.role_model(i);
            assert_eq!(impact.outcomes[i].role_model, want, "seed {seed} individual {i}");
            movers += want.is_some() as usize;
        }
        let focal: Vec<Vec<f64>> = impact.focal_points.iter().map(|f| f.values.clone()).collect();
        assert_eq!(focal, inst.focal_points(), "seed {seed} focal points");
    }
    assert!(movers > 0, "instances never exercise imitation");
}

pub fn focal_assignment_matches() {
    let mut checked = 0;
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let h = |x: &[f64]| inst.h(x);
        let eval = PairEvaluator::new(&h, &inst.pop, &inst.params, inst.benefit).unwrap();
        let impact = simulate(&eval).unwrap();
        if impact.focal_points.is_empty() {
            continue;
        }
        let ctx = MetricContext::new(&inst.pop, &inst.params, GroupId(1)).unwrap();
        for pop in [&inst.pop, &impact.impacted] {
            let got = assign_focal(&ctx, &impact.focal_points, pop).unwrap();
            let members: Vec<(usize, Vec<f64>)> =
                pop.individuals().iter().map(|ind| (ind.group.0 as usize, ind.x.clone())).collect();
            assert_eq!(got, inst.nearest_focal(&members, &inst.focal_points()), "seed {seed}");
            checked += 1;
        }
    }
    assert!(checked >= 25, "only {checked} populations had focal points");
}

pub fn absolute_clustering_matches() {
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        for minority in [0usize, 1] {
            let ctx = MetricContext::new(&inst.pop, &inst.params, GroupId(minority as u32)).unwrap();
            let dist = DistanceMatrix::compute(&ctx, &inst.pop).unwrap();
            for i in 0..inst.n() {
                for j in 0..inst.n() {
                    assert!((dist.get(i, j) - inst.distance(i, j)).abs() <= TOL, "seed {seed} d({i},{j})");
                }
            }
            let flags: Vec<bool> = inst.rows.iter().map(|r| r.0 == minority).collect();
            let got = absolute_clustering(&dist, &flags).unwrap().value;
            assert!(close(got, inst.aci(minority)), "seed {seed}: {got:?} vs {:?}", inst.aci(minority));
        }
    }
}
