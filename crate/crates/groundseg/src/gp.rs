//! Kernels and Gaussian-process posteriors.
//!
//! Two processes cooperate per segment. A latent GP with a stationary
//! squared-exponential kernel regresses log length-scales from the support
//! set; its posterior mean, exponentiated and clamped, gives every location
//! a local smoothness L. The ground-height GP then uses a non-stationary
//! kernel that blends the length-scales of both arguments, so covariance
//! reaches far across flat stretches and decays quickly over rough ones.

use alloc::vec::Vec;

use crate::error::Error;
#[allow(unused_imports)]
use crate::float::prelude::*;
use crate::linalg::{Cholesky, SymMatrix};
use crate::lines::SupportSet;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeightKernelParams {
    /// Signal magnitude (m).
    pub sigma_f: f64,
    /// Observation noise (m).
    pub sigma_n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatentKernelParams {
    /// Signal magnitude in log-length-scale space.
    pub sigma_f_bar: f64,
    /// Length-scale (m) of the latent process itself.
    pub sigma_l_bar: f64,
    /// Noise on the support targets.
    pub sigma_n_bar: f64,
}

impl HeightKernelParams {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.sigma_f > 0.0 && self.sigma_f.is_finite()) {
            return Err(Error::Domain("sigma_f must be > 0"));
        }
        if !(self.sigma_n > 0.0 && self.sigma_n.is_finite()) {
            return Err(Error::Domain("sigma_n must be > 0"));
        }
        Ok(())
    }
}

impl LatentKernelParams {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.sigma_f_bar > 0.0 && self.sigma_f_bar.is_finite()) {
            return Err(Error::Domain("sigma_f_bar must be > 0"));
        }
        if !(self.sigma_l_bar > 0.0 && self.sigma_l_bar.is_finite()) {
            return Err(Error::Domain("sigma_l_bar must be > 0"));
        }
        if !(self.sigma_n_bar > 0.0 && self.sigma_n_bar.is_finite()) {
            return Err(Error::Domain("sigma_n_bar must be > 0"));
        }
        Ok(())
    }
}

/// Non-stationary covariance between heights at radii `r_i`, `r_j` carrying
/// local length-scales `l_i`, `l_j`:
///
/// ```text
/// k = sigma_f^2 * sqrt(l_i * l_j / s) * exp(-(r_i - r_j)^2 / (2 s)),
/// s = (l_i^2 + l_j^2) / 2
/// ```
///
/// With `l_i = l_j = L` this is exactly the squared-exponential kernel
/// `sigma_f^2 exp(-(r_i-r_j)^2 / (2 L^2))`; the diagonal is `sigma_f^2`
/// regardless of L.
pub fn ns_kernel(r_i: f64, r_j: f64, l_i: f64, l_j: f64, sigma_f: f64) -> Result<f64, Error> {
    if !(l_i > 0.0 && l_j > 0.0) {
        return Err(Error::Domain("length-scales must be > 0"));
    }
    if !(sigma_f > 0.0) {
        return Err(Error::Domain("sigma_f must be > 0"));
    }
    let d = r_i - r_j;
    Ok(ns_kernel_raw(d * d, l_i, l_j, sigma_f * sigma_f))
}

#[inline(always)]
pub(crate) fn ns_kernel_raw(d2: f64, l_i: f64, l_j: f64, sf2: f64) -> f64 {
    // One division: 1/s = 2/(l_i^2 + l_j^2), reused by both factors.
    let inv_s = 2.0 / (l_i * l_i + l_j * l_j);
    sf2 * (l_i * l_j * inv_s).sqrt() * (-0.5 * d2 * inv_s).exp()
}

/// Stationary squared-exponential covariance of the latent log-length-scale
/// process: `sigma_f_bar^2 exp(-(a-b)^2 / (2 sigma_l_bar^2))`.
pub fn se_kernel(a: f64, b: f64, params: &LatentKernelParams) -> Result<f64, Error> {
    params.validate()?;
    let d = a - b;
    Ok(se_kernel_raw(
        d * d,
        params.sigma_f_bar * params.sigma_f_bar,
        params.sigma_l_bar * params.sigma_l_bar,
    ))
}

#[inline]
pub(crate) fn se_kernel_raw(d2: f64, sf2: f64, l2: f64) -> f64 {
    se_kernel_scaled(d2 / l2, sf2)
}

/// SE covariance with the squared distance pre-divided by sigma_l^2, so bulk
/// Gram builds can hoist that division out of their loops.
#[inline(always)]
pub(crate) fn se_kernel_scaled(q: f64, sf2: f64) -> f64 {
    sf2 * (-0.5 * q).exp()
}

/// Fitted latent process: support locations with the Cholesky factor of
/// `B = K_bar + sigma_n_bar^2 I` and the precomputed weight vector
/// `beta = B^{-1} l_bar`.
#[derive(Debug, Clone)]
pub struct LatentModel {
    pub r_bar: Vec<f64>,
    pub params: LatentKernelParams,
    beta: Vec<f64>,
}

impl LatentModel {
    pub fn fit(r_bar: &[f64], l_bar: &[f64], params: &LatentKernelParams) -> Result<Self, Error> {
        params.validate()?;
        if r_bar.is_empty() || r_bar.len() != l_bar.len() {
            return Err(Error::Domain("support set empty or inconsistent"));
        }
        let n = r_bar.len();
        let sf2 = params.sigma_f_bar * params.sigma_f_bar;
        let l2 = params.sigma_l_bar * params.sigma_l_bar;
        let mut b = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let d = r_bar[i] - r_bar[j];
                b.set_sym(i, j, se_kernel_raw(d * d, sf2, l2));
            }
        }
        b.add_diagonal(params.sigma_n_bar * params.sigma_n_bar);
        let chol = Cholesky::new_jittered(&b).ok_or(Error::SingularMatrix)?;
        let beta = chol.solve(l_bar);
        Ok(LatentModel {
            r_bar: r_bar.to_vec(),
            params: *params,
            beta,
        })
    }

    /// Posterior mean of the log length-scale at `q`. Stays in log space.
    pub fn predict_one(&self, q: f64) -> f64 {
        let sf2 = self.params.sigma_f_bar * self.params.sigma_f_bar;
        let inv_l2 = 1.0 / (self.params.sigma_l_bar * self.params.sigma_l_bar);
        let mut acc = 0.0;
        for (rb, w) in self.r_bar.iter().zip(&self.beta) {
            let d = q - rb;
            acc += se_kernel_scaled(d * d * inv_l2, sf2) * w;
        }
        acc
    }

    pub fn predict(&self, queries: &[f64]) -> Vec<f64> {
        queries.iter().map(|&q| self.predict_one(q)).collect()
    }
}

/// Latent posterior mean at each query, in log space; exponentiation happens
/// downstream where length-scales are consumed.
pub fn latent_predict(
    support: &SupportSet,
    queries: &[f64],
    params: &LatentKernelParams,
) -> Result<Vec<f64>, Error> {
    let model = LatentModel::fit(&support.r_bar, &support.l_bar, params)?;
    Ok(model.predict(queries))
}

/// Height posterior at one query location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    /// z_bar (m), in original height coordinates.
    pub mean: f64,
    /// V_z (m^2), noise-free predictive variance, clamped at 0.
    pub variance: f64,
}

/// Trained per-segment ground model: candidate training data, length-scales
/// at the training locations, and the factorization of
/// `A = K_ns + sigma_n^2 I` ready for prediction.
#[derive(Debug, Clone)]
pub struct GroundModel {
    pub train_r: Vec<f64>,
    /// Raw training heights; the GP works on `z - z_offset`.
    pub train_z: Vec<f64>,
    /// Median of the candidate heights, added back to predictions.
    pub z_offset: f64,
    /// Length-scales at `train_r`, already exponentiated and clamped.
    pub train_l: Vec<f64>,
    pub height: HeightKernelParams,
    pub latent: LatentModel,
    /// Clamp bounds applied to every exponentiated length-scale.
    pub l_bounds: (f64, f64),
    chol_a: Cholesky,
    /// `A^{-1} (z - z_offset)`.
    alpha: Vec<f64>,
}

/// Median of a small unsorted slice.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite heights"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl GroundModel {
    /// Factor the training covariance and precompute prediction weights.
    ///
    /// `latent` must already be fitted on this segment's support set;
    /// training length-scales are its exponentiated, clamped predictions at
    /// `train_r`.
    pub fn fit(
        train_r: &[f64],
        train_z: &[f64],
        latent: LatentModel,
        height: HeightKernelParams,
        l_bounds: (f64, f64),
    ) -> Result<Self, Error> {
        height.validate()?;
        if train_r.is_empty() || train_r.len() != train_z.len() {
            return Err(Error::Domain("training set empty or inconsistent"));
        }
        let (lo, hi) = l_bounds;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Domain("need 0 < l_min < l_max"));
        }
        let n = train_r.len();
        let train_l: Vec<f64> = latent
            .predict(train_r)
            .into_iter()
            .map(|m| m.exp().clamp(lo, hi))
            .collect();
        let sf2 = height.sigma_f * height.sigma_f;
        let mut a = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let d = train_r[i] - train_r[j];
                a.set_sym(i, j, ns_kernel_raw(d * d, train_l[i], train_l[j], sf2));
            }
        }
        a.add_diagonal(height.sigma_n * height.sigma_n);
        let chol_a = Cholesky::new_jittered(&a).ok_or(Error::SingularMatrix)?;
        let z_offset = median(train_z);
        let centered: Vec<f64> = train_z.iter().map(|&z| z - z_offset).collect();
        let alpha = chol_a.solve(&centered);
        Ok(GroundModel {
            train_r: train_r.to_vec(),
            train_z: train_z.to_vec(),
            z_offset,
            train_l,
            height,
            latent,
            l_bounds,
            chol_a,
            alpha,
        })
    }

    /// Length-scale at an arbitrary radius: exponentiated, clamped latent
    /// posterior mean.
    pub fn length_scale_at(&self, r: f64) -> f64 {
        let (lo, hi) = self.l_bounds;
        self.latent.predict_one(r).exp().clamp(lo, hi)
    }

    /// Posterior at one query given its length-scale. `k_star` is scratch of
    /// length `train_r.len()`.
    fn predict_into(&self, r: f64, l: f64, k_star: &mut [f64]) -> Posterior {
        let sf2 = self.height.sigma_f * self.height.sigma_f;
        for ((k, &rt), &lt) in k_star.iter_mut().zip(&self.train_r).zip(&self.train_l) {
            let d = r - rt;
            *k = ns_kernel_raw(d * d, l, lt, sf2);
        }
        let mut mean = self.z_offset;
        for (k, a) in k_star.iter().zip(&self.alpha) {
            mean += k * a;
        }
        // V = k** - |L^{-1} k*|^2 with k** = sigma_f^2 on the diagonal.
        self.chol_a.solve_lower(k_star);
        let mut quad = 0.0;
        for w in k_star.iter() {
            quad += w * w;
        }
        Posterior {
            mean,
            variance: (sf2 - quad).max(0.0),
        }
    }

    pub fn predict(&self, query_r: &[f64], query_l: &[f64]) -> Vec<Posterior> {
        let mut k_star = alloc::vec![0.0; self.train_r.len()];
        query_r
            .iter()
            .zip(query_l)
            .map(|(&r, &l)| self.predict_into(r, l, &mut k_star))
            .collect()
    }
}

/// Posterior mean and variance at each query radius, with caller-supplied
/// query length-scales.
pub fn height_posterior(
    model: &GroundModel,
    query_r: &[f64],
    query_l: &[f64],
) -> Result<Vec<Posterior>, Error> {
    if query_r.len() != query_l.len() {
        return Err(Error::LengthMismatch {
            left: query_r.len(),
            right: query_l.len(),
        });
    }
    if query_l.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Domain("query length-scales must be > 0"));
    }
    Ok(model.predict(query_r, query_l))
}
