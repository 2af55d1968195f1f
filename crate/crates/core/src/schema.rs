//! Feature schema: per-feature kind, mutability, monotone direction and
//! effort weights.
//!
//! The schema is the contract that drives both effort and distance
//! computations. Its on-disk JSON form is mirrored by [`SchemaFile`];
//! [`FeatureSchema::from_file`] validates it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a sensitive group. For a sensitive feature with levels it
/// is the level index, otherwise the (integer) feature value itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    NumericalMonotone { direction: Direction },
    NumericalNonMonotone,
    OrdinalMonotone { direction: Direction },
    OrdinalNonMonotone,
    Categorical { levels: Vec<String> },
    /// Values may be numeric (`levels == None`) or level indices.
    Immutable { levels: Option<Vec<String>> },
    ConditionallyImmutable { allowed_direction: Direction },
}

impl FeatureKind {
    /// Level names for features whose values are stored as level indices.
    pub fn levels(&self) -> Option<&[String]> {
        match self {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Immutable { levels: Some(levels) } => Some(levels),
            _ => None,
        }
    }

    /// Freely mutable: can change in at least one direction without being
    /// (conditionally) immutable. This is the schema's `mutable` flag.
    pub fn is_mutable(&self) -> bool {
        !matches!(
            self,
            FeatureKind::Immutable { .. } | FeatureKind::ConditionallyImmutable { .. }
        )
    }

    /// Can change in at least one direction.
    pub fn is_changeable(&self) -> bool {
        !matches!(self, FeatureKind::Immutable { .. })
    }

    pub fn is_binary(&self) -> bool {
        self.levels().is_some_and(|l| l.len() == 2)
    }

    fn tag(&self) -> &'static str {
        match self {
            FeatureKind::NumericalMonotone { .. } => "numerical_monotone",
            FeatureKind::NumericalNonMonotone => "numerical_non_monotone",
            FeatureKind::OrdinalMonotone { .. } => "ordinal_monotone",
            FeatureKind::OrdinalNonMonotone => "ordinal_non_monotone",
            FeatureKind::Categorical { .. } => "categorical",
            FeatureKind::Immutable { .. } => "immutable",
            FeatureKind::ConditionallyImmutable { .. } => "conditionally_immutable",
        }
    }
}

/// Effort weight `c_{s,k}`: uniform, or keyed by group name (missing groups
/// default to 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Uniform(f64),
    PerGroup(BTreeMap<String, f64>),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Uniform(1.0)
    }
}

impl WeightSpec {
    pub fn for_group(&self, group: &str) -> f64 {
        match self {
            WeightSpec::Uniform(w) => *w,
            WeightSpec::PerGroup(map) => map.get(group).copied().unwrap_or(1.0),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            WeightSpec::Uniform(w) => alloc::vec![*w],
            WeightSpec::PerGroup(map) => map.values().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub weight: WeightSpec,
    /// Overrides the effort parameters' categorical cost for this feature.
    pub categorical_cost: Option<f64>,
    /// Inclusive value range, checked on ingestion when present.
    pub range: Option<[f64; 2]>,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        FeatureSpec {
            name: name.into(),
            kind,
            weight: WeightSpec::default(),
            categorical_cost: None,
            range: None,
        }
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = Some([lo, hi]);
        self
    }

    pub fn is_mutable(&self) -> bool {
        self.kind.is_mutable()
    }
}

/// Which features [`crate::Population::restrict_features`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFilter {
    /// Every feature that can change in at least one direction, plus the
    /// sensitive feature.
    MutablePlusSensitive,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
    sensitive: usize,
    label: String,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>, sensitive: &str, label: impl Into<String>) -> Result<Self> {
        let sensitive_idx = features
            .iter()
            .position(|f| f.name == sensitive)
            .ok_or_else(|| Error::Schema(format!("sensitive feature `{sensitive}` is not declared")))?;
        let schema = FeatureSchema {
            features,
            sensitive: sensitive_idx,
            label: label.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("no features declared".into()));
        }
        for (i, f) in self.features.iter().enumerate() {
            if self.features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Schema(format!("duplicate feature `{}`", f.name)));
            }
            if f.name == self.label {
                return Err(Error::Schema(format!("label `{}` is also declared as a feature", f.name)));
            }
            if let Some(levels) = f.kind.levels() {
                let categorical = matches!(f.kind, FeatureKind::Categorical { .. });
                if categorical && levels.len() < 2 {
                    return Err(Error::Schema(format!("categorical `{}` needs at least 2 levels", f.name)));
                }
                if levels.is_empty() {
                    return Err(Error::Schema(format!("feature `{}` declares no levels", f.name)));
                }
                for (j, l) in levels.iter().enumerate() {
                    if levels[..j].contains(l) {
                        return Err(Error::Schema(format!("feature `{}` repeats level `{l}`", f.name)));
                    }
                }
            }
            for w in f.weight.values() {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Schema(format!("feature `{}` has invalid weight {w}", f.name)));
                }
            }
            if let Some(c) = f.categorical_cost {
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::Schema(format!("feature `{}` has invalid categorical cost {c}", f.name)));
                }
            }
            if let Some([lo, hi]) = f.range {
                if !(lo <= hi) {
                    return Err(Error::Schema(format!("feature `{}` has empty range", f.name)));
                }
            }
        }
        if !matches!(self.features[self.sensitive].kind, FeatureKind::Immutable { .. }) {
            return Err(Error::Schema(format!(
                "sensitive feature `{}` must be immutable",
                self.features[self.sensitive].name
            )));
        }
        Ok(())
    }

    /// Total feature count `K`.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, k: usize) -> &FeatureSpec {
        &self.features[k]
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn sensitive_index(&self) -> usize {
        self.sensitive
    }

    pub fn sensitive_name(&self) -> &str {
        &self.features[self.sensitive].name
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Indices of freely mutable features.
    pub fn mutable_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.features[k].is_mutable()).collect()
    }

    pub fn binary_count(&self) -> usize {
        self.features.iter().filter(|f| f.kind.is_binary()).count()
    }

    /// Maps a sensitive-feature value to its group.
    pub fn group_of(&self, sensitive_value: f64) -> Result<GroupId> {
        if sensitive_value < 0.0 || libm::trunc(sensitive_value) != sensitive_value || sensitive_value > u32::MAX as f64 {
            return Err(Error::InvalidParameter(format!(
                "sensitive value {sensitive_value} is not a group identifier"
            )));
        }
        Ok(GroupId(sensitive_value as u32))
    }

    pub fn group_name(&self, group: GroupId) -> String {
        match self.features[self.sensitive].kind.levels() {
            Some(levels) if (group.0 as usize) < levels.len() => levels[group.0 as usize].clone(),
            _ => group.0.to_string(),
        }
    }

    /// Inverse of [`Self::group_name`].
    pub fn group_by_name(&self, name: &str) -> Option<GroupId> {
        match self.features[self.sensitive].kind.levels() {
            Some(levels) => levels.iter().position(|l| l == name).map(|i| GroupId(i as u32)),
            None => name.parse::<u32>().ok().map(GroupId),
        }
    }

    pub fn level_index(&self, k: usize, level: &str) -> Option<usize> {
        self.features[k].kind.levels()?.iter().position(|l| l == level)
    }

    /// Checks a single value against feature `k`'s declaration.
    pub fn check_value(&self, k: usize, v: f64) -> Result<()> {
        let f = &self.features[k];
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("feature `{}` has non-finite value", f.name)));
        }
        if let Some(levels) = f.kind.levels() {
            if v < 0.0 || libm::trunc(v) != v || v as usize >= levels.len() {
                return Err(Error::InvalidLevel {
                    feature: f.name.clone(),
                    index: v,
                });
            }
        }
        if let Some([lo, hi]) = f.range {
            if v < lo || v > hi {
                return Err(Error::InvalidParameter(format!(
                    "feature `{}` value {v} outside [{lo}, {hi}]",
                    f.name
                )));
            }
        }
        Ok(())
    }

    /// Indices kept by `filter`, in schema order.
    pub fn filter_indices(&self, filter: FeatureFilter) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| match filter {
                FeatureFilter::All => true,
                FeatureFilter::MutablePlusSensitive => k == self.sensitive || self.features[k].kind.is_changeable(),
            })
            .collect()
    }

    /// Sub-schema over `keep` (which must contain the sensitive index).
    pub fn select(&self, keep: &[usize]) -> Result<FeatureSchema> {
        if !keep.contains(&self.sensitive) {
            return Err(Error::Schema("the sensitive feature must be retained".into()));
        }
        let features = keep.iter().map(|&k| self.features[k].clone()).collect();
        FeatureSchema::new(features, self.sensitive_name(), self.label.clone())
    }

    pub fn from_file(file: SchemaFile) -> Result<Self> {
        let mut features = Vec::with_capacity(file.features.len());
        for raw in file.features {
            features.push(raw.into_spec()?);
        }
        FeatureSchema::new(features, &file.sensitive, file.label)
    }

    pub fn to_file(&self) -> SchemaFile {
        SchemaFile {
            features: self.features.iter().map(RawFeature::from_spec).collect(),
            sensitive: self.sensitive_name().to_string(),
            label: self.label.clone(),
        }
    }
}

/// JSON mirror of the schema file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub features: Vec<RawFeature>,
    pub sensitive: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFeature {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    pub mutable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categorical_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

impl RawFeature {
    fn into_spec(self) -> Result<FeatureSpec> {
        let need_direction = |d: Option<Direction>| {
            d.ok_or_else(|| Error::Schema(format!("feature `{}` of kind `{}` needs a direction", self.name, self.kind)))
        };
        let kind = match self.kind.as_str() {
            "numerical_monotone" => FeatureKind::NumericalMonotone {
                direction: need_direction(self.direction)?,
            },
            "numerical_non_monotone" => FeatureKind::NumericalNonMonotone,
            "ordinal_monotone" => FeatureKind::OrdinalMonotone {
                direction: need_direction(self.direction)?,
            },
            "ordinal_non_monotone" => FeatureKind::OrdinalNonMonotone,
            "categorical" => FeatureKind::Categorical {
                levels: self
                    .levels
                    .clone()
                    .ok_or_else(|| Error::Schema(format!("categorical `{}` needs levels", self.name)))?,
            },
            "immutable" => FeatureKind::Immutable {
                levels: self.levels.clone(),
            },
            "conditionally_immutable" => FeatureKind::ConditionallyImmutable {
                allowed_direction: need_direction(self.direction)?,
            },
            other => return Err(Error::Schema(format!("feature `{}` has unknown kind `{other}`", self.name))),
        };
        if self.levels.is_some() && kind.levels().is_none() {
            return Err(Error::Schema(format!("feature `{}` of kind `{}` cannot declare levels", self.name, self.kind)));
        }
        if self.mutable != kind.is_mutable() {
            return Err(Error::Schema(format!(
                "feature `{}`: mutable = {} contradicts kind `{}`",
                self.name, self.mutable, self.kind
            )));
        }
        Ok(FeatureSpec {
            name: self.name,
            kind,
            weight: self.weight.unwrap_or_default(),
            categorical_cost: self.categorical_cost,
            range: self.range,
        })
    }

    fn from_spec(spec: &FeatureSpec) -> Self {
        let direction = match &spec.kind {
            FeatureKind::NumericalMonotone { direction } | FeatureKind::OrdinalMonotone { direction } => Some(*direction),
            FeatureKind::ConditionallyImmutable { allowed_direction } => Some(*allowed_direction),
            _ => None,
        };
        RawFeature {
            name: spec.name.clone(),
            kind: spec.kind.tag().to_string(),
            direction,
            levels: spec.kind.levels().map(|l| l.to_vec()),
            mutable: spec.is_mutable(),
            weight: match &spec.weight {
                WeightSpec::Uniform(w) if *w == 1.0 => None,
                w => Some(w.clone()),
            },
            categorical_cost: spec.categorical_cost,
            range: spec.range,
        }
    }
}
