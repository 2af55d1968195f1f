//! Individuals, populations and the frozen group-conditional quantile tables.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{FeatureFilter, FeatureSchema, GroupId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    /// Feature vector; categorical entries are level indices.
    pub x: Vec<f64>,
    pub y: f64,
    pub group: GroupId,
}

/// Sorted sample of one feature (or the label) within one group.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    sorted: Vec<f64>,
}

impl QuantileTable {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        QuantileTable { sorted: values }
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Right-continuous empirical CDF: fraction of values `<= x`.
    pub fn rank(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v <= x);
        below as f64 / self.sorted.len() as f64
    }

    /// Rank in the negated distribution: fraction of values `>= x`.
    pub fn rank_desc(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v < x);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupTables {
    pub group: GroupId,
    pub size: usize,
    pub features: Vec<QuantileTable>,
    pub label: QuantileTable,
}

/// A population together with its group-conditional quantile tables.
///
/// Immutable after construction. `row_ids` tracks each individual's row in
/// the originally ingested data so that splits can be audited.
#[derive(Debug, Clone)]
pub struct Population {
    schema: Arc<FeatureSchema>,
    individuals: Vec<Individual>,
    row_ids: Vec<usize>,
    groups: Vec<GroupId>,
    tables: Vec<GroupTables>,
}

impl PartialEq for Population {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.individuals == other.individuals && self.row_ids == other.row_ids
    }
}

impl Population {
    /// Builds a population, validating every row against the schema.
    pub fn new(schema: Arc<FeatureSchema>, individuals: Vec<Individual>) -> Result<Self> {
        let row_ids = (0..individuals.len()).collect();
        Self::with_row_ids(schema, individuals, row_ids)
    }

    pub fn with_row_ids(schema: Arc<FeatureSchema>, individuals: Vec<Individual>, row_ids: Vec<usize>) -> Result<Self> {
        if individuals.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if row_ids.len() != individuals.len() {
            return Err(Error::InvalidParameter("row id count differs from population size".into()));
        }
        let k = schema.len();
        let sens = schema.sensitive_index();
        for (row, ind) in individuals.iter().enumerate() {
            if ind.x.len() != k {
                return Err(Error::InvalidRow {
                    row,
                    message: format!("expected {k} features, found {}", ind.x.len()),
                });
            }
            for (j, &v) in ind.x.iter().enumerate() {
                schema.check_value(j, v).map_err(|e| Error::InvalidRow {
                    row,
                    message: format!("{e}"),
                })?;
            }
            if !ind.y.is_finite() {
                return Err(Error::InvalidRow {
                    row,
                    message: "non-finite label".into(),
                });
            }
            let g = schema.group_of(ind.x[sens])?;
            if g != ind.group {
                return Err(Error::InvalidRow {
                    row,
                    message: format!("group {:?} disagrees with sensitive value {}", ind.group, ind.x[sens]),
                });
            }
        }
        let mut groups: Vec<GroupId> = individuals.iter().map(|i| i.group).collect();
        groups.sort();
        groups.dedup();
        let tables = groups
            .iter()
            .map(|&g| {
                let members: Vec<&Individual> = individuals.iter().filter(|i| i.group == g).collect();
                GroupTables {
                    group: g,
                    size: members.len(),
                    features: (0..k)
                        .map(|j| QuantileTable::new(members.iter().map(|i| i.x[j]).collect()))
                        .collect(),
                    label: QuantileTable::new(members.iter().map(|i| i.y).collect()),
                }
            })
            .collect();
        Ok(Population {
            schema,
            individuals,
            row_ids,
            groups,
            tables,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn individual(&self, i: usize) -> &Individual {
        &self.individuals[i]
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    /// Groups present, ascending.
    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn group_index(&self, g: GroupId) -> Option<usize> {
        self.groups.binary_search(&g).ok()
    }

    pub fn tables(&self, g: GroupId) -> Result<&GroupTables> {
        self.group_index(g)
            .map(|i| &self.tables[i])
            .ok_or_else(|| Error::EmptyGroup(self.schema.group_name(g)))
    }

    pub fn group_size(&self, g: GroupId) -> usize {
        self.group_index(g).map_or(0, |i| self.tables[i].size)
    }

    /// Smallest group (lowest id on ties).
    pub fn smallest_group(&self) -> GroupId {
        *self
            .groups
            .iter()
            .min_by_key(|&&g| self.group_size(g))
            .expect("population has at least one group")
    }

    pub fn labels(&self) -> Vec<f64> {
        self.individuals.iter().map(|i| i.y).collect()
    }

    /// Deterministic shuffled split; the test part holds
    /// `n - floor(train_fraction * n)` rows. Both parts keep input order.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Population, Population)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!("train fraction {train_fraction} not in (0, 1)")));
        }
        let n = self.len();
        let n_test = n - libm::floor(train_fraction * n as f64 + 1e-9) as usize;
        if n_test == 0 || n_test >= n {
            return Err(Error::InvalidParameter(format!("fraction {train_fraction} leaves an empty part of {n} rows")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut train: Vec<usize> = order[n_test..].to_vec();
        let mut test: Vec<usize> = order[..n_test].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        let train_pop = self.subset(&train)?;
        let test_pop = self.subset(&test)?;
        for &g in &self.groups {
            if train_pop.group_size(g) == 0 || test_pop.group_size(g) == 0 {
                return Err(Error::EmptyGroup(self.schema.group_name(g)));
            }
        }
        Ok((train_pop, test_pop))
    }

    /// Population over the given member positions (quantile tables rebuilt).
    pub fn subset(&self, positions: &[usize]) -> Result<Population> {
        let individuals = positions.iter().map(|&p| self.individuals[p].clone()).collect();
        let rows = positions.iter().map(|&p| self.row_ids[p]).collect();
        Population::with_row_ids(self.schema.clone(), individuals, rows)
    }

    pub fn restrict_features(&self, filter: FeatureFilter) -> Result<Population> {
        let keep = self.schema.filter_indices(filter);
        let schema = Arc::new(self.schema.select(&keep)?);
        let individuals = self
            .individuals
            .iter()
            .map(|ind| Individual {
                x: keep.iter().map(|&k| ind.x[k]).collect(),
                y: ind.y,
                group: ind.group,
            })
            .collect();
        Population::with_row_ids(schema, individuals, self.row_ids.clone())
    }

    /// Same schema and row ids, new member records (groups must be kept).
    pub fn with_individuals(&self, individuals: Vec<Individual>) -> Result<Population> {
        Population::with_row_ids(self.schema.clone(), individuals, self.row_ids.clone())
    }
}
