//! Linear regression with a group benefit-gap hinge penalty:
//!
//! `min_w  mean((y_hat - y)^2) + tau * max(0, mean_b(majority) - mean_b(minority))`
//!
//! where `mean_b(g)` is the group mean of `b(y_i, y_hat_i)`. The benefit is
//! linear in `y_hat`, so the gap is an affine function of the weights and the
//! objective is convex and piecewise quadratic. It is minimized by full-batch
//! gradient descent in standardized coordinates, started at the OLS solution.
//! On the hinge's kink the minimum-norm subgradient is used, and steps that
//! would cross the kink are truncated onto it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::linear::fit_linear;
use super::{Encoding, Model, Predictor, Regressor};
use crate::effort::BenefitFn;
use crate::error::{Error, Result};
use crate::population::Population;
use crate::schema::GroupId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdSettings {
    pub max_iterations: usize,
    /// Stop once the (minimum-norm sub)gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for GdSettings {
    fn default() -> Self {
        GdSettings {
            max_iterations: 50_000,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedFit {
    pub predictor: Predictor,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub objective: f64,
    /// Objective at the OLS warm start.
    pub initial_objective: f64,
    pub gap: f64,
    pub initial_gap: f64,
}

fn check_groups(pop: &Population, minority: GroupId) -> Result<()> {
    if pop.groups().len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "benefit-gap penalty needs exactly two groups, found {}",
            pop.groups().len()
        )));
    }
    if pop.group_index(minority).is_none() {
        return Err(Error::EmptyGroup(pop.schema().group_name(minority)));
    }
    Ok(())
}

/// `mean_b(majority) - mean_b(minority)` under predictor `h`.
pub fn benefit_gap<H: Regressor + ?Sized>(h: &H, pop: &Population, b: BenefitFn, minority: GroupId) -> Result<f64> {
    check_groups(pop, minority)?;
    let (mut sum_min, mut n_min, mut sum_maj, mut n_maj) = (0.0, 0usize, 0.0, 0usize);
    for ind in pop.individuals() {
        let v = b.eval(ind.y, h.predict(&ind.x));
        if ind.group == minority {
            sum_min += v;
            n_min += 1;
        } else {
            sum_maj += v;
            n_maj += 1;
        }
    }
    Ok(sum_maj / n_maj as f64 - sum_min / n_min as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The objective in standardized coordinates `(theta, beta)`, reduced to
/// Gram-matrix form: the design is centered, so the intercept decouples.
struct Problem {
    /// `U^T U / n`.
    gram: Vec<Vec<f64>>,
    /// `U^T y / n`.
    cross: Vec<f64>,
    y_mean: f64,
    y_sq_mean: f64,
    /// Gap gradient over `(theta, beta)`; constant since the gap is affine.
    a: Vec<f64>,
    /// Gap at zero predictions (the label-only part of the benefit).
    gap_offset: f64,
    tau: f64,
}

impl Problem {
    fn width(&self) -> usize {
        self.cross.len()
    }

    fn gap(&self, theta: &[f64], beta: f64) -> f64 {
        self.gap_offset + dot(&self.a[..self.width()], theta) + self.a[self.width()] * beta
    }

    fn gram_times(&self, theta: &[f64]) -> Vec<f64> {
        self.gram.iter().map(|row| dot(row, theta)).collect()
    }

    fn objective(&self, theta: &[f64], beta: f64) -> f64 {
        let quad = dot(theta, &self.gram_times(theta));
        let mse = quad - 2.0 * dot(&self.cross, theta) + beta * beta - 2.0 * beta * self.y_mean + self.y_sq_mean;
        mse + self.tau * self.gap(theta, beta).max(0.0)
    }

    fn mse_gradient(&self, theta: &[f64], beta: f64) -> Vec<f64> {
        let mut g: Vec<f64> = self
            .gram_times(theta)
            .iter()
            .zip(&self.cross)
            .map(|(gt, c)| 2.0 * (gt - c))
            .collect();
        g.push(2.0 * (beta - self.y_mean));
        g
    }

    /// Step-size curvature bound from the MSE Hessian `2 diag(G, 1)`.
    fn curvature(&self) -> f64 {
        let p = self.width();
        let trace = 2.0 * ((0..p).map(|c| self.gram[c][c]).sum::<f64>() + 1.0);
        let mut v = vec![1.0; p + 1];
        let mut estimate = 0.0;
        for _ in 0..500 {
            let mut w: Vec<f64> = self.gram_times(&v[..p]).iter().map(|x| 2.0 * x).collect();
            w.push(2.0 * v[p]);
            let norm = libm::sqrt(dot(&w, &w));
            if norm == 0.0 {
                break;
            }
            estimate = dot(&v, &w) / dot(&v, &v);
            v = w.iter().map(|x| x / norm).collect();
        }
        trace.min(1.25 * estimate).max(f64::MIN_POSITIVE)
    }
}

/// Fits the penalized model and reports solver diagnostics.
pub fn fit_constrained_linear_detailed(
    pop: &Population,
    tau: f64,
    b: BenefitFn,
    minority: GroupId,
    settings: GdSettings,
) -> Result<ConstrainedFit> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be finite and >= 0, got {tau}")));
    }
    check_groups(pop, minority)?;
    let ols = fit_linear(pop)?;
    let (w0, b0) = ols.model.linear_weights().expect("OLS is linear");
    let (w0, b0) = (w0.to_vec(), b0);
    let encoding = Encoding::for_schema(pop.schema());
    let wrap = |weights: Vec<f64>, intercept: f64| {
        Predictor::fitted(pop.schema(), encoding.clone(), Model::ConstrainedLinear { tau, weights, intercept })
    };

    let design = encoding.design(pop);
    let y = pop.labels();
    let n = y.len() as f64;
    let p = encoding.width();
    let means: Vec<f64> = (0..p).map(|c| design.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let scales: Vec<f64> = (0..p)
        .map(|c| libm::sqrt(design.iter().map(|r| (r[c] - means[c]) * (r[c] - means[c])).sum::<f64>() / n))
        .collect();
    let n_min = pop.group_size(minority) as f64;
    let n_maj = n - n_min;
    let gap_weight: Vec<f64> = pop
        .individuals()
        .iter()
        .map(|i| if i.group == minority { -1.0 / n_min } else { 1.0 / n_maj })
        .collect();
    // b(y, y_hat) = y_hat + offset(y); the gap's label-only part
    let gap_offset: f64 = pop
        .individuals()
        .iter()
        .zip(&gap_weight)
        .map(|(i, w)| w * b.eval(i.y, 0.0))
        .sum();
    let u: Vec<Vec<f64>> = design
        .iter()
        .map(|r| {
            (0..p)
                .map(|c| if scales[c] > 0.0 { (r[c] - means[c]) / scales[c] } else { 0.0 })
                .collect()
        })
        .collect();
    let gram: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..p).map(|c| u.iter().map(|r| r[a] * r[c]).sum::<f64>() / n).collect())
        .collect();
    let cross: Vec<f64> = (0..p).map(|c| u.iter().zip(&y).map(|(r, v)| r[c] * v).sum::<f64>() / n).collect();
    let mut a: Vec<f64> = (0..p).map(|c| u.iter().zip(&gap_weight).map(|(r, w)| r[c] * w).sum()).collect();
    a.push(gap_weight.iter().sum());
    let problem = Problem {
        gram,
        cross,
        y_mean: y.iter().sum::<f64>() / n,
        y_sq_mean: y.iter().map(|v| v * v).sum::<f64>() / n,
        a,
        gap_offset,
        tau,
    };

    let mut theta: Vec<f64> = (0..p).map(|c| if scales[c] > 0.0 { w0[c] * scales[c] } else { 0.0 }).collect();
    let mut beta = b0 + (0..p).map(|c| w0[c] * means[c]).sum::<f64>();
    let initial_gap = benefit_gap(&ols, pop, b, minority)?;
    let initial_objective = problem.objective(&theta, beta);
    if tau == 0.0 || initial_gap <= 0.0 {
        return Ok(ConstrainedFit {
            predictor: wrap(w0, b0),
            iterations: 0,
            converged: true,
            gradient_norm: 0.0,
            objective: initial_objective,
            initial_objective,
            gap: initial_gap,
            initial_gap,
        });
    }

    let step = 1.0 / problem.curvature();
    let a = problem.a.clone();
    let a_sq = dot(&a, &a);
    let gap_tol = 1e-12;

    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;
    let mut best = (initial_objective, theta.clone(), beta);
    while iterations < settings.max_iterations {
        let gap = problem.gap(&theta, beta);
        let g_mse = problem.mse_gradient(&theta, beta);
        let mu = if gap > gap_tol {
            tau
        } else if gap < -gap_tol || a_sq == 0.0 {
            0.0
        } else {
            (-dot(&g_mse, &a) / a_sq).clamp(0.0, tau)
        };
        let g: Vec<f64> = g_mse.iter().zip(&a).map(|(gm, ac)| gm + mu * ac).collect();
        gradient_norm = libm::sqrt(dot(&g, &g));
        let objective = problem.objective(&theta, beta);
        if objective < best.0 {
            best = (objective, theta.clone(), beta);
        }
        if gradient_norm < settings.tolerance {
            break;
        }
        let mut t = step;
        let slope = dot(&a, &g);
        if libm::fabs(gap) > gap_tol && slope != 0.0 {
            // gap(t) = gap - t * slope; stop on the kink instead of crossing it
            let hit = gap / slope;
            if hit > 0.0 && hit < t {
                t = hit;
            }
        }
        for (th, gc) in theta.iter_mut().zip(&g) {
            *th -= t * gc;
        }
        beta -= t * g[p];
        iterations += 1;
    }
    let objective = problem.objective(&theta, beta);
    if objective < best.0 {
        best = (objective, theta, beta);
    }
    let (objective, theta, beta) = best;

    let weights: Vec<f64> = (0..p).map(|c| if scales[c] > 0.0 { theta[c] / scales[c] } else { 0.0 }).collect();
    let intercept = beta - (0..p).map(|c| weights[c] * means[c]).sum::<f64>();
    let predictor = wrap(weights, intercept);
    Ok(ConstrainedFit {
        gap: benefit_gap(&predictor, pop, b, minority)?,
        predictor,
        iterations,
        converged: gradient_norm < settings.tolerance,
        gradient_norm,
        objective,
        initial_objective,
        initial_gap,
    })
}

/// Penalized linear fit with default solver settings.
pub fn fit_constrained_linear(pop: &Population, tau: f64, b: BenefitFn, minority: GroupId) -> Result<Predictor> {
    Ok(fit_constrained_linear_detailed(pop, tau, b, minority, GdSettings::default())?.predictor)
}
