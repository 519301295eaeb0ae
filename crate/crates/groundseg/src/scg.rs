//! Scaled conjugate gradient minimization (Moller's algorithm).
//!
//! Line-search free: curvature along the search direction is estimated from
//! a finite gradient difference and regularized by a Levenberg-style trust
//! parameter lambda that grows on rejected steps and shrinks on very
//! successful ones. Evaluation failures (None) act as rejections, which is
//! how callers encode hard parameter bounds.

use alloc::vec::Vec;

use crate::error::Error;
#[allow(unused_imports)]
use crate::float::prelude::*;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScgOptions {
    pub max_iterations: usize,
    /// Stop when the gradient 2-norm falls below this.
    pub gradient_tolerance: f64,
    /// Scale of the finite step used for the curvature estimate.
    pub initial_sigma_scg: f64,
    /// Initial trust parameter.
    pub lambda_init: f64,
}

impl Default for ScgOptions {
    fn default() -> Self {
        // 40 iterations lands segment hyperparameters close enough that
        // labels stop moving; doubling the budget changes segmentation
        // quality by under a tenth of a percent while doubling train time.
        ScgOptions {
            max_iterations: 40,
            gradient_tolerance: 1e-5,
            initial_sigma_scg: 1e-4,
            lambda_init: 1e-6,
        }
    }
}

impl ScgOptions {
    pub fn validate(&self) -> Result<(), Error> {
        if self.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be > 0"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Domain("gradient_tolerance must be > 0"));
        }
        if !(self.initial_sigma_scg > 0.0) {
            return Err(Error::Domain("initial_sigma_scg must be > 0"));
        }
        if !(self.lambda_init > 0.0) {
            return Err(Error::Domain("lambda_init must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective after every accepted step, starting with the initial value.
    /// Non-increasing by the acceptance rule.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Relative objective change on an accepted step below this stops the run.
const RELATIVE_CHANGE_TOL: f64 = 1e-9;
/// Trust parameter past which no useful step can be scaled.
const LAMBDA_CAP: f64 = 1e15;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimize `f` starting from `x0`. `f` and `g` return `None` where the
/// objective is undefined; such trial points are rejected. Deterministic for
/// identical inputs.
pub fn minimize<F, G>(
    mut f: F,
    mut g: G,
    x0: &[f64],
    opts: &ScgOptions,
) -> Result<ScgOutcome, Error>
where
    F: FnMut(&[f64]) -> Option<f64>,
    G: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    opts.validate()?;
    let dim = x0.len();
    let mut w = x0.to_vec();
    let mut fw = match f(&w) {
        Some(v) if v.is_finite() => v,
        _ => return Err(Error::NonFiniteStart),
    };
    let grad0 = g(&w).ok_or(Error::NonFiniteStart)?;
    let mut r: Vec<f64> = grad0.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut trace = alloc::vec![fw];

    if norm2(&r) < opts.gradient_tolerance {
        return Ok(ScgOutcome {
            x: w,
            value: fw,
            trace,
            iterations: 0,
            converged: true,
        });
    }

    let mut lambda = opts.lambda_init;
    let mut lambda_bar = 0.0;
    let mut success = true;
    let mut raw_delta = 0.0;
    let mut p2 = dot(&p, &p);
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=opts.max_iterations {
        iterations = k;
        if success {
            // Curvature along p from a small gradient difference.
            let p_norm = p2.sqrt();
            if p_norm == 0.0 {
                converged = true;
                break;
            }
            let sigma = opts.initial_sigma_scg / p_norm;
            let probe: Vec<f64> = w.iter().zip(&p).map(|(wi, pi)| wi + sigma * pi).collect();
            raw_delta = match g(&probe) {
                Some(gp) => {
                    let mut acc = 0.0;
                    for i in 0..dim {
                        acc += p[i] * (gp[i] + r[i]) / sigma; // gp - (-r)
                    }
                    acc
                }
                // Probe left the feasible region: pretend curvature lambda I
                // and let the trial evaluation sort it out.
                None => lambda * p2,
            };
        }

        let mut delta = raw_delta + (lambda - lambda_bar) * p2;
        if delta <= 0.0 {
            lambda_bar = 2.0 * (lambda - delta / p2);
            delta = -delta + lambda * p2;
            lambda = lambda_bar;
        }

        let mu = dot(&p, &r);
        if mu <= 0.0 {
            // Stale direction; restart on steepest descent.
            p = r.clone();
            p2 = dot(&p, &p);
            success = true;
            continue;
        }
        let alpha = mu / delta;

        let trial: Vec<f64> = w.iter().zip(&p).map(|(wi, pi)| wi + alpha * pi).collect();
        let f_trial = f(&trial).filter(|v| v.is_finite());
        let comparison = f_trial.map(|ft| 2.0 * delta * (fw - ft) / (mu * mu));

        match comparison {
            Some(big_delta) if big_delta >= 0.0 => {
                let f_new = f_trial.expect("accepted step has a value");
                let grad_new = match g(&trial) {
                    Some(gn) => gn,
                    None => {
                        // Gradient failed where the objective succeeded; keep
                        // the best point found and stop.
                        w = trial;
                        fw = f_new;
                        trace.push(fw);
                        break;
                    }
                };
                let rel_change = (fw - f_new).abs() / fw.abs().max(1.0);
                w = trial;
                fw = f_new;
                trace.push(fw);
                let r_new: Vec<f64> = grad_new.iter().map(|v| -v).collect();
                lambda_bar = 0.0;
                success = true;

                if norm2(&r_new) < opts.gradient_tolerance || rel_change < RELATIVE_CHANGE_TOL {
                    converged = true;
                    break;
                }

                if k % dim == 0 {
                    p = r_new.clone();
                } else {
                    let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
                    for i in 0..dim {
                        p[i] = r_new[i] + beta * p[i];
                    }
                }
                p2 = dot(&p, &p);
                r = r_new;

                if big_delta >= 0.75 {
                    lambda *= 0.25;
                }
                if big_delta < 0.25 {
                    lambda += delta * (1.0 - big_delta) / p2.max(f64::MIN_POSITIVE);
                }
            }
            Some(big_delta) => {
                lambda_bar = lambda;
                success = false;
                lambda += delta * (1.0 - big_delta) / p2;
            }
            None => {
                // Trial point infeasible or non-finite.
                lambda_bar = lambda;
                success = false;
                lambda *= 4.0;
            }
        }

        if lambda > LAMBDA_CAP {
            break;
        }
    }

    Ok(ScgOutcome {
        x: w,
        value: fw,
        trace,
        iterations,
        converged,
    })
}
