//! One-hidden-layer ReLU network trained by full-batch Adam on standardized
//! inputs. Seeded, but not part of any reproducibility guarantee beyond a
//! fixed build.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Encoding, Model, Predictor};
use crate::error::{Error, Result};
use crate::population::Population;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSettings {
    pub hidden: usize,
    /// L2 strength, applied as `l2 / (2n) * ||W||^2`.
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpSettings {
    fn default() -> Self {
        MlpSettings {
            hidden: 100,
            l2: 10.0,
            epochs: 500,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - libm::pow(B1, self.t as f64);
        let c2 = 1.0 - libm::pow(B2, self.t as f64);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / (libm::sqrt(self.v[i] / c2) + 1e-8);
        }
    }
}

pub fn fit_mlp(pop: &Population, settings: MlpSettings) -> Result<Predictor> {
    if settings.hidden == 0 || !(settings.l2 >= 0.0) || !(settings.learning_rate > 0.0) {
        return Err(Error::InvalidParameter("invalid MLP settings".into()));
    }
    let encoding = Encoding::for_schema(pop.schema());
    let raw = encoding.design(pop);
    let y = pop.labels();
    let n = raw.len();
    let nf = n as f64;
    let width = encoding.width();
    let hidden = settings.hidden;
    let input_mean: Vec<f64> = (0..width).map(|c| raw.iter().map(|r| r[c]).sum::<f64>() / nf).collect();
    let input_scale: Vec<f64> = (0..width)
        .map(|c| {
            let var = raw.iter().map(|r| (r[c] - input_mean[c]) * (r[c] - input_mean[c])).sum::<f64>() / nf;
            if var > 0.0 {
                libm::sqrt(var)
            } else {
                1.0
            }
        })
        .collect();
    let x: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| (0..width).map(|c| (r[c] - input_mean[c]) / input_scale[c]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let bound1 = libm::sqrt(6.0 / (width + hidden) as f64);
    let bound2 = libm::sqrt(6.0 / (hidden + 1) as f64);
    let mut w1: Vec<f64> = (0..hidden * width).map(|_| rng.random_range(-bound1..bound1)).collect();
    let mut b1 = vec![0.0; hidden];
    let mut w2: Vec<f64> = (0..hidden).map(|_| rng.random_range(-bound2..bound2)).collect();
    let mut b2 = [y.iter().sum::<f64>() / nf];

    let (mut o_w1, mut o_b1, mut o_w2, mut o_b2) = (Adam::new(w1.len()), Adam::new(hidden), Adam::new(hidden), Adam::new(1));
    let mut act = vec![0.0; hidden];
    for _ in 0..settings.epochs {
        let mut g_w1 = vec![0.0; w1.len()];
        let mut g_b1 = vec![0.0; hidden];
        let mut g_w2 = vec![0.0; hidden];
        let mut g_b2 = 0.0;
        for (row, &target) in x.iter().zip(&y) {
            let mut out = b2[0];
            for h in 0..hidden {
                let pre = b1[h] + w1[h * width..(h + 1) * width].iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
                act[h] = pre.max(0.0);
                out += w2[h] * act[h];
            }
            let d = (out - target) / nf;
            g_b2 += d;
            for h in 0..hidden {
                g_w2[h] += d * act[h];
                if act[h] > 0.0 {
                    let dh = d * w2[h];
                    g_b1[h] += dh;
                    for (g, v) in g_w1[h * width..(h + 1) * width].iter_mut().zip(row) {
                        *g += dh * v;
                    }
                }
            }
        }
        let reg = settings.l2 / nf;
        for (g, w) in g_w1.iter_mut().zip(&w1) {
            *g += reg * w;
        }
        for (g, w) in g_w2.iter_mut().zip(&w2) {
            *g += reg * w;
        }
        o_w1.step(&mut w1, &g_w1, settings.learning_rate);
        o_b1.step(&mut b1, &g_b1, settings.learning_rate);
        o_w2.step(&mut w2, &g_w2, settings.learning_rate);
        o_b2.step(&mut b2, &[g_b2], settings.learning_rate);
    }
    Ok(Predictor::fitted(
        pop.schema(),
        encoding,
        Model::Mlp {
            hidden,
            l2: settings.l2,
            input_mean,
            input_scale,
            w1,
            b1,
            w2,
            b2: b2[0],
        },
    ))
}
