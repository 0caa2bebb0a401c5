//! Local optimizers used by the fitting routines.
//!
//! [`minimize_lbfgs`] is a limited-memory BFGS with box constraints handled
//! by projection (an active-set variant: coordinates pinned at a bound with the
//! gradient pointing outward are frozen for that step). [`levenberg_marquardt`]
//! is a dense LM for the small raw-space least-squares problems (3-4 unknowns).

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Closed box `[lo, hi]` per coordinate; infinite bounds are allowed.
pub type Bounds = [(f64, f64)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Stop when an accepted step lowers the objective by no more than this.
    pub f_tol: f64,
    /// Stop when the projected gradient's sup-norm falls below this.
    pub g_tol: f64,
    pub memory: usize,
    /// Largest coordinate change allowed in one step.
    pub max_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            f_tol: 1e-10,
            g_tol: 0.0,
            memory: 8,
            max_step: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], bounds: &Bounds) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Gradient with components zeroed where a bound blocks descent.
fn projected_gradient(x: &[f64], g: &[f64], bounds: &Bounds, out: &mut [f64]) {
    for i in 0..x.len() {
        let (lo, hi) = bounds[i];
        out[i] = if (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0) {
            0.0
        } else {
            g[i]
        };
    }
}

/// Minimize `fg` (which returns f and writes the gradient) inside `bounds`.
///
/// Fails only if the objective is non-finite at the starting point.
pub fn minimize_lbfgs<F>(mut fg: F, x0: &[f64], bounds: &Bounds, opts: &LbfgsOptions) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(bounds.len(), n, "bounds length must match x0");
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("objective is not finite at the starting point"));
    }

    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut pg = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory.max(1)];

    for iter in 0..opts.max_iters {
        projected_gradient(&x, &g, bounds, &mut pg);
        if sup_norm(&pg) <= opts.g_tol {
            return Ok(Minimum {
                x,
                f,
                iters: iter,
                converged: true,
            });
        }

        // Two-loop recursion on the projected gradient.
        d.iter_mut().zip(&pg).for_each(|(di, gi)| *di = -gi);
        for (k, (s, y, rho)) in memory.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alpha[k] * yi);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for (k, (s, y, rho)) in memory.iter().enumerate() {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha[k] - b) * si);
        }
        for i in 0..n {
            if pg[i] == 0.0 {
                d[i] = 0.0;
            }
        }
        if dot(&d, &pg) >= 0.0 {
            memory.clear();
            d.iter_mut().zip(&pg).for_each(|(di, gi)| *di = -gi);
        }

        let mut t = if memory.is_empty() {
            (0.1 / sup_norm(&d)).min(1.0)
        } else {
            1.0
        };
        let step = sup_norm(&d) * t;
        if step > opts.max_step {
            t *= opts.max_step / step;
        }

        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + t * d[i];
            }
            project(&mut x_new, bounds);
            let f_try = fg(&x_new, &mut g_new);
            let decrease: f64 = g
                .iter()
                .zip(x_new.iter().zip(&x))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if f_try.is_finite() && g_new.iter().all(|v| v.is_finite()) && f_try <= f + 1e-4 * decrease {
                accepted = Some(f_try);
                break;
            }
            t *= 0.5;
        }

        let Some(f_next) = accepted else {
            if memory.is_empty() {
                // Steepest descent cannot make progress: treat as a stationary point.
                return Ok(Minimum {
                    x,
                    f,
                    iters: iter,
                    converged: true,
                });
            }
            memory.clear();
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }

        let improvement = f - f_next;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_next;
        if improvement <= opts.f_tol {
            return Ok(Minimum {
                x,
                f,
                iters: iter + 1,
                converged: true,
            });
        }
    }
    Ok(Minimum {
        x,
        f,
        iters: opts.max_iters,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Relative reduction of the sum of squares below which iteration stops.
    pub f_rtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            f_rtol: 1e-15,
        }
    }
}

/// Minimize `0.5 * |r(p)|^2` with Levenberg-Marquardt, projecting onto `bounds`.
///
/// `rj(p, r, jac)` fills residuals `r` (length `m`) and the row-major Jacobian
/// `jac` (length `m * p.len()`). Returns `f = 0.5 * |r|^2` at the solution.
pub fn levenberg_marquardt<F>(mut rj: F, p0: &[f64], m: usize, bounds: &Bounds, opts: &LmOptions) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64], &mut [f64]),
{
    let k = p0.len();
    assert_eq!(bounds.len(), k);
    let mut p = p0.to_vec();
    project(&mut p, bounds);
    let mut r = vec![0.0; m];
    let mut jac = vec![0.0; m * k];
    let mut r_try = vec![0.0; m];
    let mut jac_try = vec![0.0; m * k];

    let cost_of = |r: &[f64]| 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    rj(&p, &mut r, &mut jac);
    let mut cost = cost_of(&r);
    if !cost.is_finite() || jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "least-squares residuals are not finite at the starting point",
        ));
    }

    let normal = |jac: &[f64], r: &[f64]| {
        let j = DMatrix::from_row_slice(m, k, jac);
        let jt = j.transpose();
        (&jt * &j, &jt * DVector::from_column_slice(r))
    };
    let (mut jtj, mut jtr) = normal(&jac, &r);
    let mut mu = 1e-3 * (0..k).map(|i| jtj[(i, i)]).fold(0.0f64, f64::max).max(1e-12);

    for iter in 0..opts.max_iters {
        if cost == 0.0 {
            return Ok(Minimum {
                x: p,
                f: cost,
                iters: iter,
                converged: true,
            });
        }
        let mut lhs = jtj.clone();
        for i in 0..k {
            lhs[(i, i)] += mu * jtj[(i, i)].max(1e-12);
        }
        let rhs = -&jtr;
        let delta = match lhs.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => match lhs.lu().solve(&rhs) {
                Some(s) => s,
                None => {
                    mu *= 10.0;
                    continue;
                }
            },
        };
        let mut p_try: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        project(&mut p_try, bounds);
        rj(&p_try, &mut r_try, &mut jac_try);
        let cost_try = cost_of(&r_try);
        if cost_try.is_finite() && jac_try.iter().all(|v| v.is_finite()) && cost_try < cost {
            let reduction = cost - cost_try;
            let moved = p_try.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            p = p_try.clone();
            std::mem::swap(&mut r, &mut r_try);
            std::mem::swap(&mut jac, &mut jac_try);
            cost = cost_try;
            (jtj, jtr) = normal(&jac, &r);
            mu = (mu / 3.0).max(1e-20);
            let scale = p.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if reduction <= opts.f_rtol * cost || moved <= 1e-15 * scale {
                return Ok(Minimum {
                    x: p,
                    f: cost,
                    iters: iter + 1,
                    converged: true,
                });
            }
        } else {
            mu *= 4.0;
            if mu > 1e20 {
                return Ok(Minimum {
                    x: p,
                    f: cost,
                    iters: iter + 1,
                    converged: true,
                });
            }
        }
    }
    Ok(Minimum {
        x: p,
        f: cost,
        iters: opts.max_iters,
        converged: false,
    })
}
