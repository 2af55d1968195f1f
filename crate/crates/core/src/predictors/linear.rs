use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{Encoding, Model, Predictor};
use crate::error::{Error, Result};
use crate::population::Population;

const JITTER: f64 = 1e-8;

/// Centered ridge solution; the intercept is not penalized.
/// Returns `(weights, intercept, jittered)`.
pub(crate) fn solve_ridge(design: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64, bool) {
    let n = design.len();
    let p = design.first().map_or(0, Vec::len);
    let nf = n as f64;
    let x_mean: Vec<f64> = (0..p).map(|c| design.iter().map(|r| r[c]).sum::<f64>() / nf).collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let xc = DMatrix::from_fn(n, p, |i, c| design[i][c] - x_mean[c]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = xc.transpose() * &xc;
    for c in 0..p {
        gram[(c, c)] += lambda;
    }
    let rhs = xc.transpose() * yc;

    let scale = (0..p).map(|c| gram[(c, c)]).fold(0.0_f64, f64::max).max(1.0);
    let well_posed = |m: &DMatrix<f64>| {
        m.clone()
            .cholesky()
            .filter(|ch| (0..p).all(|c| ch.l_dirty()[(c, c)] > 1e-7 * libm::sqrt(scale)))
    };
    let (chol, jittered) = match well_posed(&gram) {
        Some(ch) => (ch, false),
        None => {
            let mut g = gram.clone();
            for c in 0..p {
                g[(c, c)] += JITTER;
            }
            let ch = g.cholesky().expect("jittered gram matrix is positive definite");
            (ch, true)
        }
    };
    let w = chol.solve(&rhs);
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    (weights, intercept, jittered)
}

/// Ordinary least squares via the normal equations.
pub fn fit_linear(pop: &Population) -> Result<Predictor> {
    let encoding = Encoding::for_schema(pop.schema());
    let design = encoding.design(pop);
    let (weights, intercept, jittered) = solve_ridge(&design, &pop.labels(), 0.0);
    Ok(Predictor::fitted(
        pop.schema(),
        encoding,
        Model::Linear {
            weights,
            intercept,
            jittered,
        },
    ))
}

/// Closed-form ridge regression; `lambda = 0` reproduces [`fit_linear`].
pub fn fit_ridge(pop: &Population, lambda: f64) -> Result<Predictor> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!("ridge lambda must be >= 0, got {lambda}")));
    }
    let encoding = Encoding::for_schema(pop.schema());
    let design = encoding.design(pop);
    let (weights, intercept, _) = solve_ridge(&design, &pop.labels(), lambda);
    Ok(Predictor::fitted(
        pop.schema(),
        encoding,
        Model::Ridge {
            lambda,
            weights,
            intercept,
        },
    ))
}
