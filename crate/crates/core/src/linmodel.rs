//! A solvable model of neural scaling: least-squares regression on a random
//! `N`-dimensional projection of `M` Gaussian features whose covariance has a
//! power-law spectrum `lambda_i = i^-(beta+1)`, trained on `D` samples of a
//! random linear teacher.
//!
//! [`simulate_loss`] estimates the expected validation loss by Monte Carlo;
//! [`theory_loss`] and [`delta_closed`] give the large-`M` closed form and
//! [`delta_bisect`] its exact finite-`M` counterpart.
//!
//! The default [`Sampling::Gram`] mode never forms the `D x M` feature matrix.
//! With `U = Lambda^{1/2} V^T` and `a = Lambda^{1/2} w`, each training row
//! `(phi, y) = (V x, w.x)` is exactly Gaussian with covariance
//! `[[U^T U, U^T a], [a^T U, a^T a]]`, so rows are drawn from that
//! `(N+1)`-dimensional distribution. [`Sampling::Explicit`] draws `x` itself.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Draws per seed before giving up on a singular system.
pub const MAX_ATTEMPTS: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Gram,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinSimConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub beta: f64,
    pub sigma_v: f64,
    pub sigma_w: f64,
    pub seeds: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
}

impl LinSimConfig {
    pub fn new(m: usize, n: usize, d: usize, beta: f64) -> Self {
        Self {
            m,
            n,
            d,
            beta,
            sigma_v: 1.0,
            sigma_w: 1.0,
            seeds: 200,
            base_seed: 0,
            sampling: Sampling::Gram,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n >= self.d {
            return Err(Error::validation(format!(
                "need 1 <= N < D (underparametrized), got N={} D={}",
                self.n, self.d
            )));
        }
        if self.n >= self.m {
            return Err(Error::validation(format!("need N < M, got N={} M={}", self.n, self.m)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::validation(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.sigma_v > 0.0 && self.sigma_v.is_finite() && self.sigma_w > 0.0 && self.sigma_w.is_finite()) {
            return Err(Error::validation("sigma_v and sigma_w must be positive and finite"));
        }
        if self.seeds == 0 {
            return Err(Error::validation("seeds must be >= 1"));
        }
        Ok(())
    }

    /// Eigenvalues `i^-(beta+1)`, `i = 1..=M`.
    pub fn spectrum(&self) -> Vec<f64> {
        (1..=self.m).map(|i| (i as f64).powf(-(self.beta + 1.0))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinSimResult {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub beta: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub theory: f64,
    pub theory_finite_m: f64,
    /// Draws discarded because a system was numerically singular.
    pub regenerations: u64,
}

fn stream_rng(base_seed: u64, seed_index: usize, proj_attempt: u64, data_attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(((seed_index as u64) << 16) | (proj_attempt << 8) | data_attempt);
    rng
}

struct Projection {
    /// `V`, `N x M`.
    v: DMatrix<f64>,
    w: DVector<f64>,
    /// `V Lambda V^T`, `V Lambda w`, `w^T Lambda w`.
    g: DMatrix<f64>,
    c: DVector<f64>,
    s: f64,
}

fn draw_projection(cfg: &LinSimConfig, sqrt_l: &[f64], rng: &mut ChaCha8Rng) -> Projection {
    let (n, m) = (cfg.n, cfg.m);
    let sv = cfg.sigma_v / (m as f64).sqrt();
    let mut v = DMatrix::<f64>::zeros(n, m);
    for r in 0..n {
        for col in 0..m {
            let z: f64 = StandardNormal.sample(rng);
            v[(r, col)] = sv * z;
        }
    }
    let w = DVector::from_iterator(
        m,
        (0..m).map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            cfg.sigma_w * z
        }),
    );
    let mut u = v.clone();
    for (col, &sl) in sqrt_l.iter().enumerate() {
        u.column_mut(col).scale_mut(sl);
    }
    let a = DVector::from_iterator(m, w.iter().zip(sqrt_l).map(|(wi, sl)| wi * sl));
    let g = &u * u.transpose();
    let c = &u * &a;
    let s = a.dot(&a);
    Projection { v, w, g, c, s }
}

/// Training rows `[phi | y]`, `d_max x (N+1)`, drawn row by row so that a
/// prefix of rows is the same regardless of `d_max`.
fn draw_rows(
    cfg: &LinSimConfig,
    proj: &Projection,
    sqrt_l: &[f64],
    d_max: usize,
    rng: &mut ChaCha8Rng,
) -> Option<DMatrix<f64>> {
    let n = cfg.n;
    let mut z = DMatrix::<f64>::zeros(d_max, n + 1);
    match cfg.sampling {
        Sampling::Gram => {
            let mut cov = DMatrix::<f64>::zeros(n + 1, n + 1);
            cov.view_mut((0, 0), (n, n)).copy_from(&proj.g);
            cov.view_mut((0, n), (n, 1)).copy_from(&proj.c);
            cov.view_mut((n, 0), (1, n)).copy_from(&proj.c.transpose());
            cov[(n, n)] = proj.s;
            let l = cov.cholesky()?.unpack();
            let mut xi = DMatrix::<f64>::zeros(d_max, n + 1);
            for r in 0..d_max {
                for col in 0..=n {
                    xi[(r, col)] = StandardNormal.sample(rng);
                }
            }
            z = xi * l.transpose();
        }
        Sampling::Explicit => {
            let mut x = DVector::<f64>::zeros(cfg.m);
            for r in 0..d_max {
                for (i, &sl) in sqrt_l.iter().enumerate() {
                    let e: f64 = StandardNormal.sample(rng);
                    x[i] = sl * e;
                }
                let phi = &proj.v * &x;
                z.view_mut((r, 0), (1, n)).copy_from(&phi.transpose());
                z[(r, n)] = proj.w.dot(&x);
            }
        }
    }
    Some(z)
}

/// Least-squares fit on the first `d` rows and its exact expected loss.
fn fitted_loss(proj: &Projection, rows: &DMatrix<f64>, n: usize, d: usize) -> Option<f64> {
    let head = rows.rows(0, d);
    let gram = head.transpose() * head;
    let phi_t_phi = gram.view((0, 0), (n, n)).into_owned();
    let phi_t_y = gram.view((0, n), (n, 1)).into_owned();
    let theta = phi_t_phi.cholesky()?.solve(&phi_t_y);
    let theta = DVector::from_column_slice(theta.as_slice());
    let loss = 0.5 * (theta.dot(&(&proj.g * &theta)) - 2.0 * theta.dot(&proj.c) + proj.s);
    (loss.is_finite() && loss >= 0.0).then_some(loss)
}

/// Losses for one seed at each `ds`, and the number of regenerated draws.
fn run_seed(cfg: &LinSimConfig, sqrt_l: &[f64], ds: &[usize], seed_index: usize) -> Result<(Vec<f64>, u64)> {
    let d_max = *ds.iter().max().expect("non-empty");
    let mut regenerations = 0;
    for p in 0..MAX_ATTEMPTS {
        let proj = draw_projection(cfg, sqrt_l, &mut stream_rng(cfg.base_seed, seed_index, p, 0));
        for r in 1..=MAX_ATTEMPTS {
            let mut rng = stream_rng(cfg.base_seed, seed_index, p, r);
            let Some(rows) = draw_rows(cfg, &proj, sqrt_l, d_max, &mut rng) else {
                regenerations += 1;
                break;
            };
            let losses: Option<Vec<f64>> = ds.iter().map(|&d| fitted_loss(&proj, &rows, cfg.n, d)).collect();
            match losses {
                Some(l) => return Ok((l, regenerations)),
                None => regenerations += 1,
            }
        }
    }
    Err(Error::numerical(format!(
        "seed {seed_index}: system singular on every one of {} draws",
        MAX_ATTEMPTS * MAX_ATTEMPTS
    )))
}

/// Monte-Carlo losses at several training-set sizes.
///
/// All sizes share each seed's projection, teacher and training rows (the
/// first `D` rows of one stream), so differences between sizes are not
/// blurred by independent noise. `cfg.d` is ignored.
pub fn simulate_sweep(cfg: &LinSimConfig, ds: &[usize]) -> Result<Vec<LinSimResult>> {
    if ds.is_empty() {
        return Err(Error::validation("sweep needs at least one D"));
    }
    for &d in ds {
        LinSimConfig { d, ..cfg.clone() }.validate()?;
    }
    let sqrt_l: Vec<f64> = cfg.spectrum().iter().map(|l| l.sqrt()).collect();
    let per_seed: Vec<(Vec<f64>, u64)> = (0..cfg.seeds)
        .into_par_iter()
        .map(|i| run_seed(cfg, &sqrt_l, ds, i))
        .collect::<Result<_>>()?;
    let regenerations = per_seed.iter().map(|s| s.1).sum();
    let delta_m = delta_bisect(cfg)?;
    ds.iter()
        .enumerate()
        .map(|(k, &d)| {
            let sub = LinSimConfig { d, ..cfg.clone() };
            let losses: Vec<f64> = per_seed.iter().map(|s| s.0[k]).collect();
            let count = losses.len() as f64;
            let mean = losses.iter().sum::<f64>() / count;
            let stderr = if losses.len() > 1 {
                (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (count - 1.0) / count).sqrt()
            } else {
                0.0
            };
            Ok(LinSimResult {
                m: cfg.m,
                n: cfg.n,
                d,
                beta: cfg.beta,
                mc_mean: ensure_finite(mean, "Monte-Carlo mean loss")?,
                mc_stderr: stderr,
                theory: theory_loss(&sub)?,
                theory_finite_m: 0.5 * cfg.sigma_w.powi(2) * delta_m / (1.0 - cfg.n as f64 / d as f64),
                regenerations,
            })
        })
        .collect()
}

/// Monte-Carlo estimate of the expected validation loss, with theory values.
pub fn simulate_loss(cfg: &LinSimConfig) -> Result<LinSimResult> {
    cfg.validate()?;
    Ok(simulate_sweep(cfg, &[cfg.d])?.remove(0))
}

/// Unique `Delta > 0` with `sum_i lambda_i / (Delta + n lambda_i) = 1`.
///
/// Bisects geometrically on `[1e-300, sum(lambda)]`, where the left side is
/// strictly decreasing in `Delta`.
pub fn solve_delta(lambdas: &[f64], n: f64) -> Result<f64> {
    let rhs = |delta: f64| lambdas.iter().rev().map(|&l| l / (delta + n * l)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (1e-300f64, lambdas.iter().sum::<f64>());
    if !(rhs(lo) > 0.0 && rhs(hi) < 0.0) {
        return Err(Error::validation(format!(
            "no root in [1e-300, sum(lambda)]: need more eigenvalues than N (M = {}, N = {n})",
            lambdas.len()
        )));
    }
    while hi / lo > 1.0 + 1e-14 {
        let mid = (lo * hi).sqrt();
        if rhs(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// [`solve_delta`] on the configuration's finite spectrum.
pub fn delta_bisect(cfg: &LinSimConfig) -> Result<f64> {
    if !(cfg.beta > 0.0) || cfg.n == 0 {
        return Err(Error::validation("delta needs beta > 0 and N >= 1"));
    }
    solve_delta(&cfg.spectrum(), cfg.n as f64)
}

/// `N pi^(b+1) (csc(pi/(b+1)) / (1 + N(b+1) + b))^(b+1)`.
pub fn delta_closed(n: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && n >= 1.0) {
        return Err(Error::validation(format!(
            "delta_closed needs beta > 0 and N >= 1, got beta={beta}, N={n}"
        )));
    }
    let b1 = beta + 1.0;
    let csc = 1.0 / (PI / b1).sin();
    ensure_finite(
        n * PI.powf(b1) * (csc / (1.0 + n * b1 + beta)).powf(b1),
        "closed-form delta",
    )
}

fn check_underparametrized(cfg: &LinSimConfig) -> Result<()> {
    if cfg.n >= cfg.d || cfg.n == 0 {
        return Err(Error::validation(format!(
            "need 1 <= N < D, got N={} D={}",
            cfg.n, cfg.d
        )));
    }
    Ok(())
}

/// `(sigma_w^2 / 2) delta_closed(N, beta) / (1 - N/D)`.
pub fn theory_loss(cfg: &LinSimConfig) -> Result<f64> {
    check_underparametrized(cfg)?;
    let delta = delta_closed(cfg.n as f64, cfg.beta)?;
    Ok(0.5 * cfg.sigma_w.powi(2) * delta / (1.0 - cfg.n as f64 / cfg.d as f64))
}

/// Leading terms of [`theory_loss`] for `N << D`:
/// `(sigma_w^2/2) (N^-b + 1/(D N^(b-1))) (pi csc(pi/(b+1)) / (b+1))^(b+1)`.
pub fn expansion_loss(cfg: &LinSimConfig) -> Result<f64> {
    check_underparametrized(cfg)?;
    if !(cfg.beta > 0.0) {
        return Err(Error::validation("beta must be positive"));
    }
    let (n, d, b) = (cfg.n as f64, cfg.d as f64, cfg.beta);
    let b1 = b + 1.0;
    let prefactor = (PI / (PI / b1).sin() / b1).powf(b1);
    Ok(0.5 * cfg.sigma_w.powi(2) * (n.powf(-b) + 1.0 / (d * n.powf(b - 1.0))) * prefactor)
}
