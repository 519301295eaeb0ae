//! Per-segment MAP training of the two-level GP.
//!
//! The trained parameter vector is theta = (log sigma_f, log sigma_n,
//! log sigma_f_bar, log sigma_l_bar, log sigma_n_bar, l_bar...), i.e. all
//! scale parameters in log space plus the latent log length-scale targets at
//! the support locations. The objective is the negative joint log posterior
//!
//! ```text
//! F = 1/2 [ z' A^-1 z + ln|A| + l' B^-1 l + ln|B| + (n + n_bar) ln 2pi ]
//! A = K_ns(r, r; L) + sigma_n^2 I,   B = K_se(r_bar, r_bar) + sigma_n_bar^2 I
//! ```
//!
//! where the training length-scales L are the exponentiated (clamped) latent
//! posterior mean under the current theta, so the gradient of F chains
//! through the latent solve into the non-stationary Gram matrix. Every term
//! of the analytic gradient is cross-checked against central finite
//! differences in the tests and by the gradcheck command.

use alloc::vec;
use alloc::vec::Vec;

use alloc::rc::Rc;
use core::cell::RefCell;

use crate::error::Error;
#[allow(unused_imports)]
use crate::float::prelude::*;
use crate::gp::{ns_kernel_raw, se_kernel_scaled, HeightKernelParams, LatentKernelParams};
use crate::linalg::{Cholesky, SymMatrix};
use crate::scg::{self, ScgOptions};

/// Hard bounds on every exponentiated scale parameter; steps outside are
/// rejected, never clamped.
pub const SIGMA_MIN: f64 = 1e-4;
pub const SIGMA_MAX: f64 = 1e4;

/// Default central-difference step for the gradient oracle.
pub const FD_STEP: f64 = 1e-6;

/// Trainable parameters of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub log_sigma_f: f64,
    pub log_sigma_n: f64,
    pub log_sigma_f_bar: f64,
    pub log_sigma_l_bar: f64,
    pub log_sigma_n_bar: f64,
    /// Log length-scale targets at the segment's support locations.
    pub l_bar: Vec<f64>,
}

impl Theta {
    pub fn dim(&self) -> usize {
        5 + self.l_bar.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.log_sigma_f);
        v.push(self.log_sigma_n);
        v.push(self.log_sigma_f_bar);
        v.push(self.log_sigma_l_bar);
        v.push(self.log_sigma_n_bar);
        v.extend_from_slice(&self.l_bar);
        v
    }

    pub fn from_vec(v: &[f64]) -> Theta {
        assert!(v.len() >= 5, "theta needs 5 scale parameters");
        Theta {
            log_sigma_f: v[0],
            log_sigma_n: v[1],
            log_sigma_f_bar: v[2],
            log_sigma_l_bar: v[3],
            log_sigma_n_bar: v[4],
            l_bar: v[5..].to_vec(),
        }
    }

    pub fn height_params(&self) -> HeightKernelParams {
        HeightKernelParams {
            sigma_f: self.log_sigma_f.exp(),
            sigma_n: self.log_sigma_n.exp(),
        }
    }

    pub fn latent_params(&self) -> LatentKernelParams {
        LatentKernelParams {
            sigma_f_bar: self.log_sigma_f_bar.exp(),
            sigma_l_bar: self.log_sigma_l_bar.exp(),
            sigma_n_bar: self.log_sigma_n_bar.exp(),
        }
    }
}

/// One segment's immutable training view: candidate locations and centered
/// heights, support locations, and precomputed squared distances.
#[derive(Debug, Clone)]
pub struct SegmentData {
    pub train_r: Vec<f64>,
    /// Candidate heights with the median removed.
    pub z: Vec<f64>,
    /// The median that was removed.
    pub z_offset: f64,
    pub r_bar: Vec<f64>,
    /// Length-scale clamp applied after exponentiating the latent mean.
    pub l_bounds: (f64, f64),
    d2_train: Vec<f64>,
    d2_cross: Vec<f64>,
    d2_supp: Vec<f64>,
}

impl SegmentData {
    pub fn new(
        train_r: &[f64],
        raw_z: &[f64],
        r_bar: &[f64],
        l_bounds: (f64, f64),
    ) -> Result<Self, Error> {
        if train_r.is_empty() || train_r.len() != raw_z.len() {
            return Err(Error::Domain("training set empty or inconsistent"));
        }
        if r_bar.is_empty() {
            return Err(Error::Domain("support set is empty"));
        }
        let (lo, hi) = l_bounds;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Domain("need 0 < l_min < l_max"));
        }
        let z_offset = crate::gp::median(raw_z);
        let z: Vec<f64> = raw_z.iter().map(|&v| v - z_offset).collect();
        let sq = |a: f64, b: f64| (a - b) * (a - b);
        let n = train_r.len();
        let nb = r_bar.len();
        let mut d2_train = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d2_train[i * n + j] = sq(train_r[i], train_r[j]);
            }
        }
        let mut d2_cross = vec![0.0; n * nb];
        for i in 0..n {
            for j in 0..nb {
                d2_cross[i * nb + j] = sq(train_r[i], r_bar[j]);
            }
        }
        let mut d2_supp = vec![0.0; nb * nb];
        for i in 0..nb {
            for j in 0..nb {
                d2_supp[i * nb + j] = sq(r_bar[i], r_bar[j]);
            }
        }
        Ok(SegmentData {
            train_r: train_r.to_vec(),
            z,
            z_offset,
            r_bar: r_bar.to_vec(),
            l_bounds,
            d2_train,
            d2_cross,
            d2_supp,
        })
    }

    pub fn num_train(&self) -> usize {
        self.train_r.len()
    }

    pub fn num_support(&self) -> usize {
        self.r_bar.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Everything the objective evaluation produces that the gradient reuses.
struct Assembled {
    sn2: f64,
    snb2: f64,
    slb2: f64,
    /// Clamped length-scales at the training locations.
    l: Vec<f64>,
    /// Where the clamp did not bite (the latent chain passes through).
    unclamped: Vec<bool>,
    kbar: SymMatrix,
    /// Cross covariance train x support, row-major.
    c: Vec<f64>,
    k: SymMatrix,
    chol_a: Cholesky,
    chol_b: Cholesky,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    value: f64,
}

fn bounded_exp(log_v: f64) -> Result<f64, Error> {
    if !log_v.is_finite() {
        return Err(Error::NonFinite);
    }
    let v = log_v.exp();
    if !(SIGMA_MIN..=SIGMA_MAX).contains(&v) {
        return Err(Error::NonFinite);
    }
    Ok(v)
}

fn assemble(theta: &Theta, seg: &SegmentData) -> Result<Assembled, Error> {
    let n = seg.num_train();
    let nb = seg.num_support();
    if theta.l_bar.len() != nb {
        return Err(Error::LengthMismatch {
            left: theta.l_bar.len(),
            right: nb,
        });
    }
    let sigma_f = bounded_exp(theta.log_sigma_f)?;
    let sigma_n = bounded_exp(theta.log_sigma_n)?;
    let sigma_f_bar = bounded_exp(theta.log_sigma_f_bar)?;
    let sigma_l_bar = bounded_exp(theta.log_sigma_l_bar)?;
    let sigma_n_bar = bounded_exp(theta.log_sigma_n_bar)?;
    let (lo, hi) = seg.l_bounds;
    // Tolerant bound test: targets produced as ln(clamped span) may sit
    // exactly on the boundary up to rounding.
    let (lo_ln, hi_ln) = (lo.ln() - 1e-9, hi.ln() + 1e-9);
    for &lb in &theta.l_bar {
        if !(lb >= lo_ln && lb <= hi_ln) {
            return Err(Error::NonFinite);
        }
    }

    let sfb2 = sigma_f_bar * sigma_f_bar;
    let slb2 = sigma_l_bar * sigma_l_bar;
    let snb2 = sigma_n_bar * sigma_n_bar;
    let inv_slb2 = 1.0 / slb2;
    let mut kbar = SymMatrix::zeros(nb);
    for i in 0..nb {
        for j in 0..=i {
            kbar.set_sym(i, j, se_kernel_scaled(seg.d2_supp[i * nb + j] * inv_slb2, sfb2));
        }
    }
    let mut b = kbar.clone();
    b.add_diagonal(snb2);
    let chol_b = Cholesky::new_jittered(&b).ok_or(Error::SingularMatrix)?;
    let beta = chol_b.solve(&theta.l_bar);

    let mut c = vec![0.0; n * nb];
    for i in 0..n {
        for j in 0..nb {
            c[i * nb + j] = se_kernel_scaled(seg.d2_cross[i * nb + j] * inv_slb2, sfb2);
        }
    }
    let mut l = vec![0.0; n];
    let mut unclamped = vec![false; n];
    for i in 0..n {
        let mu = dot(&c[i * nb..(i + 1) * nb], &beta);
        let e = mu.exp();
        l[i] = e.clamp(lo, hi);
        unclamped[i] = e > lo && e < hi;
    }

    let sf2 = sigma_f * sigma_f;
    let sn2 = sigma_n * sigma_n;
    let mut k = SymMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            k.set_sym(i, j, ns_kernel_raw(seg.d2_train[i * n + j], l[i], l[j], sf2));
        }
    }
    let mut a = k.clone();
    a.add_diagonal(sn2);
    let chol_a = Cholesky::new_jittered(&a).ok_or(Error::SingularMatrix)?;
    let alpha = chol_a.solve(&seg.z);

    let ln_2pi = (2.0 * core::f64::consts::PI).ln();
    let value = 0.5
        * (dot(&seg.z, &alpha)
            + chol_a.log_det()
            + dot(&theta.l_bar, &beta)
            + chol_b.log_det()
            + ((n + nb) as f64) * ln_2pi);
    if !value.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(Assembled {
        sn2,
        snb2,
        slb2,
        l,
        unclamped,
        kbar,
        c,
        k,
        chol_a,
        chol_b,
        alpha,
        beta,
        value,
    })
}

/// Negative joint log posterior of one segment at `theta`; to be minimized.
pub fn objective(theta: &Theta, seg: &SegmentData) -> Result<f64, Error> {
    Ok(assemble(theta, seg)?.value)
}

/// Analytic gradient of [`objective`], same layout as `Theta::to_vec`.
pub fn gradient(theta: &Theta, seg: &SegmentData) -> Result<Vec<f64>, Error> {
    Ok(gradient_from(&assemble(theta, seg)?, seg))
}

/// Gradient post-processing on an already assembled evaluation.
fn gradient_from(asm: &Assembled, seg: &SegmentData) -> Vec<f64> {
    let n = seg.num_train();
    let nb = seg.num_support();
    let ainv = asm.chol_a.inverse();
    let binv = asm.chol_b.inverse();

    // Height-side sums: dF = sum G . dA with G = (A^-1 - alpha alpha')/2.
    let mut sum_gk = 0.0;
    let mut tr_g = 0.0;
    let mut u = vec![0.0; n]; // dF/dL
    for i in 0..n {
        let li = asm.l[i];
        let half_inv_li = 0.5 / li;
        let ai = asm.alpha[i];
        let ainv_row = &ainv.as_slice()[i * n..(i + 1) * n];
        let k_row = &asm.k.as_slice()[i * n..(i + 1) * n];
        let d2_row = &seg.d2_train[i * n..(i + 1) * n];
        let mut ui = 0.0;
        for j in 0..n {
            let g_ij = 0.5 * (ainv_row[j] - ai * asm.alpha[j]);
            let k_ij = k_row[j];
            sum_gk += g_ij * k_ij;
            if i == j {
                tr_g += g_ij;
            }
            // d k_ij / d L_i; identically 0 on the diagonal.
            let lj = asm.l[j];
            let inv_s = 2.0 / (li * li + lj * lj);
            let d3 = k_ij * (half_inv_li - 0.5 * li * inv_s + 0.5 * d2_row[j] * li * (inv_s * inv_s));
            ui += 2.0 * g_ij * d3;
        }
        u[i] = ui;
    }
    // Chain through L = clamp(exp(mu)) and mu = C beta.
    let v: Vec<f64> = (0..n)
        .map(|i| if asm.unclamped[i] { u[i] * asm.l[i] } else { 0.0 })
        .collect();
    let mut ctv = vec![0.0; nb];
    for i in 0..n {
        if v[i] == 0.0 {
            continue;
        }
        for j in 0..nb {
            ctv[j] += asm.c[i * nb + j] * v[i];
        }
    }
    let w = asm.chol_b.solve(&ctv);

    // Latent-side sums with H = (B^-1 - beta beta')/2.
    let mut sum_hk = 0.0;
    let mut tr_h = 0.0;
    let mut sum_hkd = 0.0;
    for i in 0..nb {
        let bi = asm.beta[i];
        let binv_row = &binv.as_slice()[i * nb..(i + 1) * nb];
        let kb_row = &asm.kbar.as_slice()[i * nb..(i + 1) * nb];
        let d2_row = &seg.d2_supp[i * nb..(i + 1) * nb];
        for j in 0..nb {
            let h_ij = 0.5 * (binv_row[j] - bi * asm.beta[j]);
            let kb = kb_row[j];
            sum_hk += h_ij * kb;
            sum_hkd += h_ij * kb * d2_row[j];
            if i == j {
                tr_h += h_ij;
            }
        }
    }
    // v' dmu/dsigma_l_bar needs C and K_bar weighted by their distances.
    let mut vq = 0.0;
    for i in 0..n {
        if v[i] == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for j in 0..nb {
            acc += asm.c[i * nb + j] * seg.d2_cross[i * nb + j] * asm.beta[j];
        }
        vq += v[i] * acc;
    }
    let mut wkb = 0.0;
    for i in 0..nb {
        let mut acc = 0.0;
        for j in 0..nb {
            acc += asm.kbar.get(i, j) * seg.d2_supp[i * nb + j] * asm.beta[j];
        }
        wkb += w[i] * acc;
    }
    let wb = dot(&w, &asm.beta);

    let mut g = vec![0.0; 5 + nb];
    g[0] = 2.0 * sum_gk;
    g[1] = 2.0 * asm.sn2 * tr_g;
    g[2] = 2.0 * sum_hk + 2.0 * asm.snb2 * wb;
    g[3] = (sum_hkd + vq - wkb) / asm.slb2;
    g[4] = 2.0 * asm.snb2 * (tr_h - wb);
    for j in 0..nb {
        g[5 + j] = asm.beta[j] + w[j];
    }
    g
}

/// Central finite differences of any scalar function; `None` if either side
/// of a difference fails to evaluate.
pub(crate) fn fd_of<F>(mut f: F, x: &[f64], step: f64) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let hi = f(&probe)?;
        probe[i] = x[i] - step;
        let lo = f(&probe)?;
        probe[i] = x[i];
        out.push((hi - lo) / (2.0 * step));
    }
    Some(out)
}

/// Finite-difference gradient of [`objective`]; the oracle for [`gradient`].
pub fn fd_gradient(theta: &Theta, seg: &SegmentData, step: f64) -> Result<Vec<f64>, Error> {
    let x = theta.to_vec();
    fd_of(|v| objective(&Theta::from_vec(v), seg).ok(), &x, step).ok_or(Error::NonFinite)
}

/// Scale-aware comparison metric for gradient checks. The floor guards
/// near-zero coordinates, where the fd oracle's ~1e-8 absolute noise would
/// otherwise dominate the ratio.
pub fn relative_error(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3)
}

/// Data-scaled starting point. `l_bar` comes from the line extraction.
pub fn initial_theta(seg: &SegmentData, l_bar: &[f64]) -> Theta {
    let n = seg.z.len() as f64;
    let rms = (seg.z.iter().map(|z| z * z).sum::<f64>() / n).sqrt();
    let extent = seg.train_r.last().unwrap() - seg.train_r[0];
    let (lo, hi) = seg.l_bounds;
    Theta {
        log_sigma_f: rms.max(0.01).ln(),
        log_sigma_n: 0.05_f64.ln(),
        log_sigma_f_bar: 0.0,
        log_sigma_l_bar: (extent / 3.0).max(0.5).ln(),
        log_sigma_n_bar: 0.1_f64.ln(),
        l_bar: l_bar.iter().map(|&v| v.clamp(lo.ln(), hi.ln())).collect(),
    }
}

/// Result of training one segment's hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub theta: Theta,
    /// Objective after every accepted step, starting with theta0's value.
    /// Non-increasing by the acceptance rule.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// One-entry memo shared between the objective and gradient closures.
type AssembleMemo = Rc<RefCell<Option<(Vec<f64>, Assembled)>>>;

/// Minimize the segment objective from `theta0`.
///
/// The optimizer asks for the objective and the gradient at the same point
/// back to back on accepted steps; a one-entry memo keyed on the parameter
/// vector makes that pair cost a single Gram assembly.
pub fn scg_minimize(
    seg: &SegmentData,
    theta0: &Theta,
    opts: &ScgOptions,
) -> Result<TrainOutcome, Error> {
    let x0 = theta0.to_vec();
    let cache: AssembleMemo = Rc::new(RefCell::new(None));
    let f_cache = Rc::clone(&cache);
    let g_cache = Rc::clone(&cache);
    let out = scg::minimize(
        move |x| {
            let mut slot = f_cache.borrow_mut();
            if let Some((cx, asm)) = slot.as_ref() {
                if cx.as_slice() == x {
                    return Some(asm.value);
                }
            }
            let asm = assemble(&Theta::from_vec(x), seg).ok()?;
            let value = asm.value;
            *slot = Some((x.to_vec(), asm));
            Some(value)
        },
        move |x| {
            let mut slot = g_cache.borrow_mut();
            let hit = matches!(slot.as_ref(), Some((cx, _)) if cx.as_slice() == x);
            if !hit {
                let asm = assemble(&Theta::from_vec(x), seg).ok()?;
                *slot = Some((x.to_vec(), asm));
            }
            let (_, asm) = slot.as_ref().expect("memo was just filled");
            Some(gradient_from(asm, seg))
        },
        &x0,
        opts,
    )?;
    Ok(TrainOutcome {
        theta: Theta::from_vec(&out.x),
        trace: out.trace,
        iterations: out.iterations,
        converged: out.converged,
    })
}
