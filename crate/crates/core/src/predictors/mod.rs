//! Regression models: least squares, ridge, CART, a small MLP and a
//! benefit-gap penalized linear model.
//!
//! Every model is fitted on an encoded design (numeric features as-is,
//! level-coded features expanded to `L - 1` indicator columns) and keeps the
//! feature names it was fitted on.

mod constrained;
mod linear;
mod mlp;
mod tree;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use constrained::{benefit_gap, fit_constrained_linear, fit_constrained_linear_detailed, ConstrainedFit, GdSettings};
pub use linear::{fit_linear, fit_ridge};
pub use mlp::{fit_mlp, MlpSettings};
pub use tree::{fit_tree, TreeNode};

use crate::error::{Error, Result};
use crate::population::Population;
use crate::schema::{FeatureSchema, GroupId};

/// Anything that maps a schema-encoded feature vector to a prediction.
pub trait Regressor {
    fn predict(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Regressor for F {
    fn predict(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Column {
    Numeric { feature: usize },
    /// 1 when the feature's level index equals `level`.
    Indicator { feature: usize, level: usize },
}

/// Maps schema vectors to design-matrix columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub columns: Vec<Column>,
}

impl Encoding {
    pub fn for_schema(schema: &FeatureSchema) -> Self {
        let mut columns = Vec::new();
        for (k, f) in schema.features().iter().enumerate() {
            match f.kind.levels() {
                Some(levels) => columns.extend((1..levels.len()).map(|level| Column::Indicator { feature: k, level })),
                None => columns.push(Column::Numeric { feature: k }),
            }
        }
        Encoding { columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn value(&self, c: usize, x: &[f64]) -> f64 {
        match self.columns[c] {
            Column::Numeric { feature } => x[feature],
            Column::Indicator { feature, level } => {
                if x[feature] == level as f64 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        (0..self.width()).map(|c| self.value(c, x)).collect()
    }

    /// Row-major design matrix of `pop`.
    pub fn design(&self, pop: &Population) -> Vec<Vec<f64>> {
        pop.individuals().iter().map(|i| self.encode(&i.x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Constant {
        value: f64,
    },
    Linear {
        weights: Vec<f64>,
        intercept: f64,
        /// Normal equations needed the `1e-8` diagonal jitter.
        jittered: bool,
    },
    Ridge {
        lambda: f64,
        weights: Vec<f64>,
        intercept: f64,
    },
    DecisionTree {
        max_depth: usize,
        nodes: Vec<TreeNode>,
    },
    Mlp {
        hidden: usize,
        l2: f64,
        input_mean: Vec<f64>,
        input_scale: Vec<f64>,
        /// `hidden x width`, row-major.
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    },
    ConstrainedLinear {
        tau: f64,
        weights: Vec<f64>,
        intercept: f64,
    },
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Constant { .. } => "constant",
            Model::Linear { .. } => "linear",
            Model::Ridge { .. } => "ridge",
            Model::DecisionTree { .. } => "tree",
            Model::Mlp { .. } => "mlp",
            Model::ConstrainedLinear { .. } => "constrained",
        }
    }

    /// Slope weights of linear-family models.
    pub fn linear_weights(&self) -> Option<(&[f64], f64)> {
        match self {
            Model::Linear { weights, intercept, .. }
            | Model::Ridge { weights, intercept, .. }
            | Model::ConstrainedLinear { weights, intercept, .. } => Some((weights, *intercept)),
            _ => None,
        }
    }
}

/// A fitted model plus the feature list and encoding it was fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    /// Empty for schema-agnostic models (constants built by hand).
    pub feature_names: Vec<String>,
    pub encoding: Encoding,
    pub model: Model,
}

impl Predictor {
    /// Schema-agnostic constant predictor.
    pub fn constant(value: f64) -> Self {
        Predictor {
            feature_names: Vec::new(),
            encoding: Encoding { columns: Vec::new() },
            model: Model::Constant { value },
        }
    }

    pub(crate) fn fitted(schema: &FeatureSchema, encoding: Encoding, model: Model) -> Self {
        Predictor {
            feature_names: schema.names(),
            encoding,
            model,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.model.kind()
    }

    /// Errors unless `schema` lists exactly the fit-time features, in order.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if self.feature_names.is_empty() {
            return Ok(());
        }
        let same = self.feature_names.len() == schema.len()
            && self.feature_names.iter().zip(schema.features()).all(|(a, f)| *a == f.name);
        if same {
            Ok(())
        } else {
            Err(Error::FeatureMismatch)
        }
    }

    fn linear(&self, weights: &[f64], intercept: f64, x: &[f64]) -> f64 {
        let mut acc = intercept;
        for (c, w) in weights.iter().enumerate() {
            acc += w * self.encoding.value(c, x);
        }
        acc
    }

    pub fn hyperparameters(&self) -> BTreeMap<String, f64> {
        let mut h = BTreeMap::new();
        match &self.model {
            Model::Ridge { lambda, .. } => {
                h.insert("lambda".to_string(), *lambda);
            }
            Model::DecisionTree { max_depth, .. } => {
                h.insert("max_depth".to_string(), *max_depth as f64);
            }
            Model::Mlp { hidden, l2, .. } => {
                h.insert("hidden".to_string(), *hidden as f64);
                h.insert("l2".to_string(), *l2);
            }
            Model::ConstrainedLinear { tau, .. } => {
                h.insert("tau".to_string(), *tau);
            }
            _ => {}
        }
        h
    }
}

impl Regressor for Predictor {
    fn predict(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Constant { value } => *value,
            Model::Linear { weights, intercept, .. }
            | Model::Ridge { weights, intercept, .. }
            | Model::ConstrainedLinear { weights, intercept, .. } => self.linear(weights, *intercept, x),
            Model::DecisionTree { nodes, .. } => tree::predict(nodes, &self.encoding, x),
            Model::Mlp {
                hidden,
                input_mean,
                input_scale,
                w1,
                b1,
                w2,
                b2,
                ..
            } => {
                let width = self.encoding.width();
                let input: Vec<f64> = (0..width)
                    .map(|c| (self.encoding.value(c, x) - input_mean[c]) / input_scale[c])
                    .collect();
                let mut out = *b2;
                for h in 0..*hidden {
                    let row = &w1[h * width..(h + 1) * width];
                    let pre: f64 = b1[h] + row.iter().zip(&input).map(|(w, v)| w * v).sum::<f64>();
                    if pre > 0.0 {
                        out += w2[h] * pre;
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMae {
    pub group: GroupId,
    pub name: String,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model_kind: String,
    pub hyperparameters: BTreeMap<String, f64>,
    pub mae_overall: f64,
    pub mae_per_group: Vec<GroupMae>,
}

/// Mean absolute error overall and per group on `pop`.
pub fn evaluate(h: &Predictor, pop: &Population) -> Result<FitReport> {
    h.check_schema(pop.schema())?;
    let errors: Vec<f64> = pop.individuals().iter().map(|i| libm::fabs(h.predict(&i.x) - i.y)).collect();
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        let (s, n) = it.fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
        s / n as f64
    };
    let mae_overall = mean(&mut errors.iter().copied());
    let mae_per_group = pop
        .groups()
        .iter()
        .map(|&g| GroupMae {
            group: g,
            name: pop.schema().group_name(g),
            mae: mean(&mut pop.individuals().iter().zip(&errors).filter(|(i, _)| i.group == g).map(|(_, e)| *e)),
        })
        .collect();
    Ok(FitReport {
        model_kind: h.kind().to_string(),
        hyperparameters: h.hyperparameters(),
        mae_overall,
        mae_per_group,
    })
}

/// Mean squared training error of `h` on `pop`.
pub fn mse<H: Regressor + ?Sized>(h: &H, pop: &Population) -> f64 {
    let n = pop.len() as f64;
    pop.individuals()
        .iter()
        .map(|i| {
            let r = h.predict(&i.x) - i.y;
            r * r
        })
        .sum::<f64>()
        / n
}
