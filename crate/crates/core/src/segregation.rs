//! Segregation in the effort metric space.
//!
//! Distances are measured against a frozen reference population: for group
//! `s`, `d^s(i, j) = max(0, Q_s(y_j) - Q_s(y_i)) + sum_{k mutable}
//! eps_{s,k}(x_ik, x_jk)`, and `d(i, j)` is the maximum over groups.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::FocalPoint;
use crate::effort::{EffortModel, EffortParams};
use crate::error::{Error, Result};
use crate::population::{Individual, Population};
use crate::predictors::Regressor;
use crate::schema::GroupId;

pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_SSI_THRESHOLD: f64 = 1e-6;
const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITERATIONS: usize = 10_000;

pub struct MetricContext<'a> {
    effort: EffortModel<'a>,
    mutable: Vec<usize>,
    minority: GroupId,
}

impl<'a> MetricContext<'a> {
    pub fn new(reference: &'a Population, params: &EffortParams, minority: GroupId) -> Result<Self> {
        if reference.group_size(minority) == 0 {
            return Err(Error::EmptyGroup(reference.schema().group_name(minority)));
        }
        Ok(MetricContext {
            effort: EffortModel::new(reference, params)?,
            mutable: reference.schema().mutable_indices(),
            minority,
        })
    }

    pub fn reference(&self) -> &'a Population {
        self.effort.reference()
    }

    pub fn minority(&self) -> GroupId {
        self.minority
    }

    pub fn mutable(&self) -> &[usize] {
        &self.mutable
    }

    /// `d^s(i, j)` in group `s`'s view.
    pub fn directed(&self, s: GroupId, i: &Individual, j: &Individual) -> Result<f64> {
        let label = (self.effort.label_rank(s, j.y)? - self.effort.label_rank(s, i.y)?).max(0.0);
        Ok(label + self.effort.mutable_effort(s, &self.mutable, &i.x, &j.x)?)
    }

    pub fn distance(&self, i: &Individual, j: &Individual) -> Result<f64> {
        let mut d: f64 = 0.0;
        for &s in self.reference().groups() {
            d = d.max(self.directed(s, i, j)?);
        }
        Ok(d)
    }

    /// Effort from an individual to a focal point in its own group's view.
    pub fn focal_distance(&self, i: &Individual, focal: &[f64]) -> Result<f64> {
        let mut target = i.x.clone();
        for (&k, &v) in self.mutable.iter().zip(focal) {
            target[k] = v;
        }
        self.effort.mutable_effort(i.group, &self.mutable, &i.x, &target)
    }

    /// Row `i` of the distance matrix of `pop`.
    pub fn distance_row(&self, pop: &Population, i: usize) -> Result<Vec<f64>> {
        let a = pop.individual(i);
        pop.individuals().iter().map(|b| self.distance(a, b)).collect()
    }
}

/// Row-major pairwise distances of one population.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn compute(ctx: &MetricContext<'_>, pop: &Population) -> Result<Self> {
        let rows = (0..pop.len()).map(|i| ctx.distance_row(pop, i)).collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("distance matrix must be square".into()));
        }
        Ok(DistanceMatrix {
            n,
            d: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub members: Vec<usize>,
    pub minority: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    FocalPoints(usize),
    PerIndividual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhoods {
    pub units: Vec<Unit>,
    pub construction: Construction,
}

impl Neighborhoods {
    /// Units from `(minority, total)` counts, without member lists.
    pub fn from_counts(counts: &[(usize, usize)]) -> Self {
        Neighborhoods {
            units: counts
                .iter()
                .map(|&(minority, total)| Unit {
                    members: Vec::new(),
                    minority,
                    total,
                })
                .collect(),
            construction: Construction::PerIndividual,
        }
    }
}

/// Nearest focal point of each member of `pop`, lowest index on ties.
pub fn assign_focal(ctx: &MetricContext<'_>, focal: &[FocalPoint], pop: &Population) -> Result<Vec<usize>> {
    if focal.is_empty() {
        return Err(Error::Degenerate("no focal points".into()));
    }
    pop.individuals()
        .iter()
        .map(|ind| {
            let mut best = (0, f64::INFINITY);
            for (f, point) in focal.iter().enumerate() {
                let d = ctx.focal_distance(ind, &point.values)?;
                if d < best.1 {
                    best = (f, d);
                }
            }
            Ok(best.0)
        })
        .collect()
}

pub fn build_focal_neighborhoods(
    ctx: &MetricContext<'_>,
    focal: &[FocalPoint],
    pop: &Population,
) -> Result<Neighborhoods> {
    let assignment = assign_focal(ctx, focal, pop)?;
    let mut units = vec![
        Unit {
            members: Vec::new(),
            minority: 0,
            total: 0,
        };
        focal.len()
    ];
    for (i, &u) in assignment.iter().enumerate() {
        units[u].members.push(i);
        units[u].total += 1;
        if pop.individual(i).group == ctx.minority {
            units[u].minority += 1;
        }
    }
    Ok(Neighborhoods {
        units,
        construction: Construction::FocalPoints(focal.len()),
    })
}

/// Atkinson evenness, `1 - P/(1-P) * [sum_i (1-p_i)^(1-b) p_i^b t_i / (T P)]^(1/(1-b))`,
/// clamped to `[0, 1]`. Empty units are skipped.
pub fn atkinson(neigh: &Neighborhoods, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
    }
    let total: usize = neigh.units.iter().map(|u| u.total).sum();
    let minority: usize = neigh.units.iter().map(|u| u.minority).sum();
    if total == 0 || minority == 0 || minority == total {
        return Err(Error::Degenerate("overall minority share is 0 or 1".into()));
    }
    let t = total as f64;
    let p_all = minority as f64 / t;
    let mut sum = 0.0;
    for u in neigh.units.iter().filter(|u| u.total > 0) {
        let p = u.minority as f64 / u.total as f64;
        sum += libm::pow(1.0 - p, 1.0 - beta) * libm::pow(p, beta) * u.total as f64;
    }
    let inner = sum / (t * p_all);
    let index = 1.0 - p_all / (1.0 - p_all) * libm::pow(inner, 1.0 / (1.0 - beta));
    Ok(index.clamp(0.0, 1.0))
}

/// Share of the minority predicted strictly above `threshold`.
pub fn centralization<H: Regressor + ?Sized>(h: &H, pop: &Population, minority: GroupId, threshold: f64) -> Result<f64> {
    let mut above = 0usize;
    let mut size = 0usize;
    for ind in pop.individuals().iter().filter(|i| i.group == minority) {
        size += 1;
        if h.predict(&ind.x) > threshold {
            above += 1;
        }
    }
    if size == 0 {
        return Err(Error::EmptyGroup(pop.schema().group_name(minority)));
    }
    Ok(above as f64 / size as f64)
}

pub fn mean_prediction<H: Regressor + ?Sized>(h: &H, pop: &Population) -> f64 {
    pop.individuals().iter().map(|i| h.predict(&i.x)).sum::<f64>() / pop.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AciResult {
    pub value: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
}

/// Absolute clustering with every individual its own unit and
/// `c_ij = exp(-d_ij)`, `c_ii = 1`.
pub fn absolute_clustering(dist: &DistanceMatrix, is_minority: &[bool]) -> Result<AciResult> {
    let n = dist.len();
    if is_minority.len() != n {
        return Err(Error::InvalidParameter("minority flags do not match the distance matrix".into()));
    }
    let m = is_minority.iter().filter(|&&b| b).count();
    if n < 2 || m == 0 || m == n {
        return Err(Error::Degenerate("clustering needs both groups and at least two members".into()));
    }
    let (nf, mf) = (n as f64, m as f64);
    let (mut mm, mut mt, mut all) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let mut row_all = 0.0;
        let mut row_min = 0.0;
        for (j, &minor) in is_minority.iter().enumerate() {
            let c = if i == j { 1.0 } else { libm::exp(-dist.get(i, j)) };
            row_all += c;
            if minor {
                row_min += c;
            }
        }
        all += row_all;
        if is_minority[i] {
            mm += row_min;
            mt += row_all;
        }
    }
    let base = all * mf / (nf * nf);
    let numerator = mm / mf - base;
    let denominator = mt / mf - base;
    Ok(AciResult {
        value: (denominator != 0.0).then(|| numerator / denominator),
        numerator,
        denominator,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsiResult {
    pub value: Option<f64>,
    pub components: usize,
    pub max_iterations: usize,
    pub converged: bool,
    /// Per member of the group, in population order.
    pub scores: Vec<f64>,
}

/// Dominant eigenpair of a nonnegative matrix by power iteration on
/// `B + I`; the eigenvector sums to 1. A reducible `B` whose leading
/// eigenvalue is defective converges too slowly for the cap and is reported
/// as not converged.
pub fn dominant_eigenpair(b: &[Vec<f64>]) -> (f64, Vec<f64>, usize, bool) {
    let n = b.len();
    // Directed weights can leave no cycle at all: B is then nilpotent, lambda
    // is 0 and power iteration on B + I only creeps toward it.
    if is_acyclic(b) {
        let sources: Vec<bool> = (0..n).map(|c| (0..n).all(|r| b[r][c] <= 0.0)).collect();
        let k = sources.iter().filter(|&&s| s).count() as f64;
        return (0.0, sources.iter().map(|&s| if s { 1.0 / k } else { 0.0 }).collect(), 0, true);
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut mu = 0.0;
    for it in 1..=POWER_MAX_ITERATIONS {
        let mut y: Vec<f64> = (0..n).map(|r| x[r] + b[r].iter().zip(&x).map(|(a, v)| a * v).sum::<f64>()).collect();
        mu = y.iter().sum::<f64>();
        for v in &mut y {
            *v /= mu;
        }
        let change = y.iter().zip(&x).map(|(a, c)| libm::fabs(a - c)).fold(0.0, f64::max);
        x = y;
        if change < POWER_TOLERANCE {
            return (mu - 1.0, x, it, true);
        }
    }
    (mu - 1.0, x, POWER_MAX_ITERATIONS, false)
}

fn is_acyclic(b: &[Vec<f64>]) -> bool {
    let n = b.len();
    let mut indegree: Vec<usize> = (0..n).map(|c| (0..n).filter(|&r| b[r][c] > 0.0).count()).collect();
    let mut ready: Vec<usize> = (0..n).filter(|&c| indegree[c] == 0).collect();
    let mut seen = 0;
    while let Some(r) = ready.pop() {
        seen += 1;
        for c in 0..n {
            if b[r][c] > 0.0 {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
    }
    seen == n
}

/// Spectral segregation of one group: mean of `lambda_k x_{k,i} |C_k|` over
/// connected components of the thresholded within-group similarity graph.
pub fn spectral_segregation(dist: &DistanceMatrix, members: &[usize], threshold: f64) -> SsiResult {
    let n = members.len();
    let w: Vec<Vec<f64>> = members
        .iter()
        .map(|&a| {
            members
                .iter()
                .map(|&b| {
                    let c = if a == b { 0.0 } else { libm::exp(-dist.get(a, b)) };
                    if c < threshold {
                        0.0
                    } else {
                        c
                    }
                })
                .collect()
        })
        .collect();
    let mut component = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut queue = vec![start];
        component[start] = id;
        let mut head = 0;
        while head < queue.len() {
            let a = queue[head];
            head += 1;
            for b in 0..n {
                if component[b] == usize::MAX && (w[a][b] > 0.0 || w[b][a] > 0.0) {
                    component[b] = id;
                    queue.push(b);
                }
            }
        }
        queue.sort_unstable();
        comps.push(queue);
    }
    let mut scores = vec![0.0; n];
    let (mut max_iterations, mut converged) = (0, true);
    for comp in &comps {
        if comp.len() < 2 {
            continue;
        }
        let sub: Vec<Vec<f64>> = comp.iter().map(|&a| comp.iter().map(|&b| w[a][b]).collect()).collect();
        let (lambda, x, it, ok) = dominant_eigenpair(&sub);
        max_iterations = max_iterations.max(it);
        converged &= ok;
        for (p, &a) in comp.iter().enumerate() {
            scores[a] = lambda * x[p] * comp.len() as f64;
        }
    }
    let value = (converged && n > 0).then(|| scores.iter().sum::<f64>() / n as f64);
    SsiResult {
        value,
        components: comps.len(),
        max_iterations,
        converged,
        scores,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegregationMeta {
    pub beta: f64,
    pub centralization_threshold: f64,
    pub ssi_threshold: f64,
    pub minority: String,
    pub focal_points: usize,
    pub atkinson_form: String,
    pub aci_numerator: f64,
    pub aci_denominator: f64,
    pub ssi_components: usize,
    pub ssi_converged: bool,
    pub ssi_iterations: usize,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegregationReport {
    pub atkinson: Option<f64>,
    pub centralization: f64,
    pub aci: Option<f64>,
    pub ssi: Option<f64>,
    pub meta: SegregationMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegregationSettings {
    pub beta: f64,
    /// Defaults to the mean prediction over the reference population.
    pub centralization_threshold: Option<f64>,
    pub ssi_threshold: f64,
}

impl Default for SegregationSettings {
    fn default() -> Self {
        SegregationSettings {
            beta: DEFAULT_BETA,
            centralization_threshold: None,
            ssi_threshold: DEFAULT_SSI_THRESHOLD,
        }
    }
}

/// All four measures for one population, with distances supplied.
pub fn report<H: Regressor + ?Sized>(
    ctx: &MetricContext<'_>,
    h: &H,
    pop: &Population,
    dist: &DistanceMatrix,
    focal: &[FocalPoint],
    settings: SegregationSettings,
) -> Result<SegregationReport> {
    let threshold = settings
        .centralization_threshold
        .unwrap_or_else(|| mean_prediction(h, ctx.reference()));
    let atkinson = match build_focal_neighborhoods(ctx, focal, pop) {
        Ok(n) => match atkinson(&n, settings.beta) {
            Ok(v) => Some(v),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        },
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let flags: Vec<bool> = pop.individuals().iter().map(|i| i.group == ctx.minority).collect();
    let aci = absolute_clustering(dist, &flags)?;
    let members: Vec<usize> = (0..pop.len()).filter(|&i| flags[i]).collect();
    let ssi = spectral_segregation(dist, &members, settings.ssi_threshold);
    Ok(SegregationReport {
        atkinson,
        centralization: centralization(h, pop, ctx.minority, threshold)?,
        aci: aci.value,
        ssi: ssi.value,
        meta: SegregationMeta {
            beta: settings.beta,
            centralization_threshold: threshold,
            ssi_threshold: settings.ssi_threshold,
            minority: pop.schema().group_name(ctx.minority),
            focal_points: focal.len(),
            atkinson_form: "standard, without 1/N".into(),
            aci_numerator: aci.numerator,
            aci_denominator: aci.denominator,
            ssi_components: ssi.components,
            ssi_converged: ssi.converged,
            ssi_iterations: ssi.max_iterations,
            reference: "initial population quantiles".into(),
        },
    })
}

/// Before/after reports under one frozen context.
pub fn compare<H: Regressor + ?Sized>(
    ctx: &MetricContext<'_>,
    h: &H,
    before: &Population,
    after: &Population,
    focal: &[FocalPoint],
    settings: SegregationSettings,
) -> Result<(SegregationReport, SegregationReport)> {
    if before.schema() != after.schema() {
        return Err(Error::FeatureMismatch);
    }
    let settings = SegregationSettings {
        centralization_threshold: Some(
            settings
                .centralization_threshold
                .unwrap_or_else(|| mean_prediction(h, ctx.reference())),
        ),
        ..settings
    };
    let first = report(ctx, h, before, &DistanceMatrix::compute(ctx, before)?, focal, settings)?;
    let second = report(ctx, h, after, &DistanceMatrix::compute(ctx, after)?, focal, settings)?;
    Ok((first, second))
}
