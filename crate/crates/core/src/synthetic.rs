//! Seeded synthetic populations for offline tests and demos.
//!
//! Every non-sensitive feature is driven by a standard normal draw plus
//! `shift * group_position`, then mapped into the feature's domain: levels by
//! normal-CDF bucketing, bounded features by rounding or clamping into the
//! declared range. The label is a noisy sum of the oriented latent draws.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Individual, Population};
use crate::schema::{Direction, FeatureKind, FeatureSchema, SchemaFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub schema: SchemaFile,
    /// Members per group, in sensitive-level order.
    pub group_sizes: Vec<usize>,
    /// Mean shift of every latent draw per unit of group position.
    #[serde(default)]
    pub shift: f64,
    #[serde(default)]
    pub seed: u64,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

fn value_for(kind: &FeatureKind, range: Option<[f64; 2]>, latent: f64) -> f64 {
    if let Some(levels) = kind.levels() {
        let l = levels.len();
        return ((normal_cdf(latent) * l as f64) as usize).min(l - 1) as f64;
    }
    let ordinal = matches!(
        kind,
        FeatureKind::OrdinalMonotone { .. } | FeatureKind::OrdinalNonMonotone | FeatureKind::ConditionallyImmutable { .. }
    );
    match range {
        Some([lo, hi]) => {
            let v = (lo + hi) / 2.0 + latent * (hi - lo) / 6.0;
            let v = if ordinal { libm::round(v) } else { v };
            v.clamp(lo, hi)
        }
        None if ordinal => libm::round(3.0 + latent).clamp(1.0, 5.0),
        None => latent,
    }
}

fn label_sign(kind: &FeatureKind) -> f64 {
    match kind {
        FeatureKind::NumericalMonotone { direction } | FeatureKind::OrdinalMonotone { direction } => match direction {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        },
        FeatureKind::Categorical { .. } => 0.5,
        _ => 0.0,
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Population> {
    let schema = Arc::new(FeatureSchema::from_file(spec.schema.clone())?);
    if !spec.shift.is_finite() {
        return Err(Error::InvalidParameter("shift must be finite".into()));
    }
    let sens = schema.sensitive_index();
    if let Some(levels) = schema.feature(sens).kind.levels() {
        if spec.group_sizes.len() > levels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} group sizes for {} sensitive levels",
                spec.group_sizes.len(),
                levels.len()
            )));
        }
    }
    let signs: Vec<f64> = schema.features().iter().map(|f| label_sign(&f.kind)).collect();
    let scale = libm::sqrt(signs.iter().filter(|s| **s != 0.0).count().max(1) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut individuals = Vec::with_capacity(spec.group_sizes.iter().sum());
    for (g, &size) in spec.group_sizes.iter().enumerate() {
        let offset = spec.shift * g as f64;
        for _ in 0..size {
            let mut x = Vec::with_capacity(schema.len());
            let mut y = 10.0;
            for (k, f) in schema.features().iter().enumerate() {
                if k == sens {
                    x.push(g as f64);
                    continue;
                }
                let z: f64 = rng.sample(StandardNormal);
                let latent = z + offset;
                y += 3.0 * signs[k] * latent / scale;
                x.push(value_for(&f.kind, f.range, latent));
            }
            let noise: f64 = rng.sample(StandardNormal);
            individuals.push(Individual {
                x,
                y: y + noise,
                group: schema.group_of(g as f64)?,
            });
        }
    }
    Population::new(schema, individuals)
}
