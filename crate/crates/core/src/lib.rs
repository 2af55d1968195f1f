//! Effort-based unfairness of regression models and the population-level
//! impact of role-model imitation.
//!
//! The crate is `no_std` (with `alloc`): every computation here is a pure
//! function of in-memory populations and fitted models. File formats, the
//! experiment harness and the CLI live in the `effortsim` crate.
//!
//! * [`schema`] / [`population`]: feature schema, individuals, group
//!   quantile tables, splitting and feature restriction.
//! * [`synthetic`]: seeded synthetic populations.
//! * [`effort`]: quantile ranks, per-feature and total effort, reward,
//!   utility.
//! * [`predictors`]: least squares, ridge, CART, MLP and the benefit-gap
//!   penalized linear model.
//! * [`fairness`]: bounded-effort, threshold-reward and effort-reward
//!   unfairness, residual differences and delta sweeps.
//! * [`dynamics`]: role-model selection and one round of imitation.
//! * [`segregation`]: distance, focal neighborhoods, Atkinson,
//!   centralization, absolute clustering and spectral segregation.
// Negated comparisons are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#![no_std]
extern crate alloc;

pub mod dynamics;
pub mod effort;
pub mod error;
pub mod fairness;
pub mod population;
pub mod predictors;
pub mod schema;
pub mod segregation;
pub mod synthetic;

pub use effort::{BenefitFn, EffortModel, EffortParams, PairEvaluator, UtilityBreakdown};
pub use error::{Error, Result};
pub use population::{Individual, Population, QuantileTable};
pub use predictors::{Predictor, Regressor};
pub use schema::{Direction, FeatureFilter, FeatureKind, FeatureSchema, FeatureSpec, GroupId};
