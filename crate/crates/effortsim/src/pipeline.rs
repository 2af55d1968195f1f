//! Shared pipeline steps: data, split, model fitting and parallel assembly.

use std::sync::Arc;

use effortsim_core::dynamics::{simulate_with_table, ImpactResult};
use effortsim_core::fairness::PairTable;
use effortsim_core::predictors::{self, MlpSettings};
use effortsim_core::segregation::{DistanceMatrix, MetricContext};
use effortsim_core::synthetic::{generate_synthetic, SyntheticSpec};
use effortsim_core::{EffortParams, GroupId, PairEvaluator, Population, Predictor, Regressor};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ModelKind, ModelSpec};
use crate::error::{HarnessError, Result};
use crate::io;

/// Named random substreams derived from the one config seed.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Split = 1,
    Mlp = 2,
    Synthetic = 3,
}

pub fn substream(seed: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

/// `EFFORTSIM_THREADS`, default 1.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("EFFORTSIM_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(HarnessError::config(format!("EFFORTSIM_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}

/// `f(0..n)` on up to `threads` workers over contiguous chunks, assembled
/// in index order so results do not depend on the thread count.
pub fn map_indexed<T, F>(n: usize, threads: usize, f: F) -> effortsim_core::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> effortsim_core::Result<T> + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    let parts: Vec<effortsim_core::Result<Vec<T>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let (lo, hi) = (t * chunk, ((t + 1) * chunk).min(n));
                s.spawn(move || (lo..hi).map(f).collect())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub struct Dataset {
    pub full: Population,
    pub train: Population,
    pub test: Population,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let schema = Arc::new(io::load_schema(&cfg.schema)?);
    let full = match (&cfg.data, &cfg.synthetic) {
        (Some(path), _) => io::load_csv(path, schema)?,
        (None, Some(syn)) => generate_synthetic(&SyntheticSpec {
            schema: schema.to_file(),
            group_sizes: syn.group_sizes.clone(),
            shift: syn.shift,
            seed: substream(cfg.seed, Stream::Synthetic),
        })?,
        (None, None) => return Err(HarnessError::config("no data source")),
    };
    let (train, test) = full.split(cfg.split.train_fraction, substream(cfg.seed, Stream::Split))?;
    Ok(Dataset { full, train, test })
}

pub fn minority(cfg: &ExperimentConfig, pop: &Population) -> Result<GroupId> {
    match &cfg.minority {
        Some(name) => {
            let g = pop
                .schema()
                .group_by_name(name)
                .ok_or_else(|| HarnessError::config(format!("minority `{name}` is not a group")))?;
            if pop.group_size(g) == 0 {
                return Err(HarnessError::data(format!("minority `{name}` has no training members")));
            }
            Ok(g)
        }
        None => Ok(pop.smallest_group()),
    }
}

pub fn fit_model(spec: &ModelSpec, cfg: &ExperimentConfig, train: &Population) -> Result<Predictor> {
    Ok(match spec.model {
        ModelKind::Linear => predictors::fit_linear(train)?,
        ModelKind::Ridge => predictors::fit_ridge(train, spec.lambda())?,
        ModelKind::Tree => predictors::fit_tree(train, spec.max_depth())?,
        ModelKind::Mlp => {
            let settings = MlpSettings {
                seed: substream(cfg.seed, Stream::Mlp),
                ..spec.mlp.unwrap_or_default()
            };
            predictors::fit_mlp(train, settings)?
        }
        ModelKind::Constrained => predictors::fit_constrained_linear(
            train,
            spec.tau.unwrap_or(0.0),
            cfg.benefit,
            minority(cfg, train)?,
        )?,
        ModelKind::Constant => {
            Predictor::constant(spec.value.unwrap_or_else(|| train.labels().iter().sum::<f64>() / train.len() as f64))
        }
    })
}

pub fn pair_table<H: Regressor + Sync + ?Sized>(
    h: &H,
    pop: &Population,
    params: &EffortParams,
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<PairTable> {
    let eval = PairEvaluator::new(h, pop, params, cfg.benefit)?;
    let rows = map_indexed(pop.len(), threads, |i| eval.row(i))?;
    Ok(PairTable::from_rows(pop, rows)?)
}

pub fn impact<H: Regressor + Sync + ?Sized>(
    h: &H,
    pop: &Population,
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<ImpactResult> {
    let table = pair_table(h, pop, &cfg.effort, cfg, threads)?;
    Ok(simulate_with_table(pop, &table)?)
}

pub fn distances(ctx: &MetricContext<'_>, pop: &Population, threads: usize) -> Result<DistanceMatrix> {
    let rows = map_indexed(pop.len(), threads, |i| ctx.distance_row(pop, i))?;
    Ok(DistanceMatrix::from_rows(rows)?)
}
