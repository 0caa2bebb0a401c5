//! Scaling-law fitting.
//!
//! Fits minimize the summed Huber loss of log residuals from every point of an
//! initialization grid, each start refined by projected L-BFGS over
//! `(E, ln A, ln B, alpha, beta)`. The best start (lowest objective, ties to the
//! smaller `alpha + beta`, then to the earlier start) is polished once more.

mod law;
mod objective;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use law::{optimal_model_size, predict_loss, FitMeta, LawForm, ScalingLaw};
pub use objective::{huber, LawObjective};

use crate::error::{Error, Result};
use crate::optim::{minimize_lbfgs, LbfgsOptions};
use crate::records::RunRecord;

/// Box for the fitted exponents; keeps both inside `(0, 3)`.
pub const EXPONENT_BOUNDS: (f64, f64) = (1e-3, 2.999);

/// Initialization values per parameter. `A` and `B` are given as base-10 logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitGrid {
    pub e: Vec<f64>,
    pub log10_a: Vec<f64>,
    pub log10_b: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Default for InitGrid {
    fn default() -> Self {
        let exps: Vec<f64> = (1..=7).map(|k| k as f64 / 10.0).collect();
        Self {
            e: vec![0.25, 0.5, 1.0, 1.5, 2.0, 2.5],
            log10_a: vec![4.0, 6.0, 8.0, 10.0],
            log10_b: vec![6.0, 8.0, 10.0, 12.0],
            alpha: exps.clone(),
            beta: exps,
        }
    }
}

impl InitGrid {
    pub fn len(&self) -> usize {
        self.e.len() * self.log10_a.len() * self.log10_b.len() * self.alpha.len() * self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Starts in `[E, ln A, ln B, alpha, beta]` order, enumerated deterministically.
    pub fn starts(&self) -> Vec<[f64; 5]> {
        let ln10 = std::f64::consts::LN_10;
        let mut out = Vec::with_capacity(self.len());
        for &e in &self.e {
            for &la in &self.log10_a {
                for &lb in &self.log10_b {
                    for &alpha in &self.alpha {
                        for &beta in &self.beta {
                            out.push([e, la * ln10, lb * ln10, alpha, beta]);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub huber_delta: f64,
    pub grid: InitGrid,
    /// L-BFGS iterations per start.
    pub max_iters: usize,
    /// Stop a start once an iteration improves the objective by no more than this.
    pub convergence_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            huber_delta: 1e-3,
            grid: InitGrid::default(),
            max_iters: 500,
            convergence_tol: 1e-10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.huber_delta.is_finite() && self.huber_delta > 0.0) {
            return Err(Error::validation("huber_delta must be positive"));
        }
        if self.grid.is_empty() {
            return Err(Error::validation("every initialization grid axis must be non-empty"));
        }
        if self.max_iters == 0 || !(self.convergence_tol >= 0.0) {
            return Err(Error::validation("max_iters must be >= 1 and convergence_tol >= 0"));
        }
        Ok(())
    }
}

fn check_fit_inputs(records: &[RunRecord]) -> Result<()> {
    if records.len() < 6 {
        return Err(Error::validation(format!(
            "need at least 6 records to fit a scaling law, got {}",
            records.len()
        )));
    }
    let first = &records[0];
    for r in records {
        r.validate()?;
        if r.train_dataset != first.train_dataset || r.metric != first.metric {
            return Err(Error::validation(format!(
                "records mix ({}, {}) and ({}, {}); fit one dataset and metric at a time",
                first.train_dataset, first.metric, r.train_dataset, r.metric
            )));
        }
    }
    let ns: BTreeSet<u64> = records.iter().map(|r| r.n_params).collect();
    let ds: BTreeSet<u64> = records.iter().map(|r| r.n_tokens).collect();
    if ns.len() < 2 || ds.len() < 2 {
        return Err(Error::validation(format!(
            "degenerate design: {} distinct model sizes and {} distinct token counts (need >= 2 of each)",
            ns.len(),
            ds.len()
        )));
    }
    Ok(())
}

fn bounds() -> [(f64, f64); 5] {
    let inf = f64::INFINITY;
    [(0.0, inf), (-inf, inf), (-inf, inf), EXPONENT_BOUNDS, EXPONENT_BOUNDS]
}

/// Fit a scaling law of the given form to records of one dataset and metric.
pub fn fit_law(records: &[RunRecord], form: LawForm, cfg: &FitConfig) -> Result<ScalingLaw> {
    cfg.validate()?;
    check_fit_inputs(records)?;
    let objective = LawObjective::new(form, records, cfg.huber_delta);
    let bounds = bounds();
    let opts = LbfgsOptions {
        max_iters: cfg.max_iters,
        f_tol: cfg.convergence_tol,
        ..Default::default()
    };

    let starts = cfg.grid.starts();
    let results: Vec<Option<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|x0| {
            minimize_lbfgs(|x, g| objective.value_grad(x, g), x0, &bounds, &opts)
                .ok()
                .filter(|m| m.f.is_finite())
                .map(|m| (m.f, m.x))
        })
        .collect();

    let restarts = results.iter().filter(|r| r.is_some()).count();
    let (best_start, (best_f, best_x)) = results
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .min_by(|(i, (fa, xa)), (j, (fb, xb))| {
            fa.total_cmp(fb)
                .then((xa[3] + xa[4]).total_cmp(&(xb[3] + xb[4])))
                .then(i.cmp(j))
        })
        .ok_or_else(|| Error::numerical("objective was non-finite from every grid start"))?;

    // Polish the winner until the line search stalls.
    let polish = LbfgsOptions {
        max_iters: cfg.max_iters,
        f_tol: 0.0,
        g_tol: 0.0,
        ..Default::default()
    };
    let (f, x) = match minimize_lbfgs(|x, g| objective.value_grad(x, g), &best_x, &bounds, &polish) {
        Ok(m) if m.f <= best_f => (m.f, m.x),
        _ => (best_f, best_x),
    };

    let mut law = ScalingLaw::new(form, x[0], x[1].exp(), x[2].exp(), x[3], x[4])
        .map_err(|e| Error::numerical(format!("fit produced an invalid law: {e}")))?;
    law.fit_meta = Some(FitMeta {
        objective: f,
        n_points: records.len(),
        restarts,
        best_start,
    });
    Ok(law)
}

/// Coefficient of determination of `predict` over `records`, in raw loss space.
pub fn r_squared<F>(records: &[RunRecord], mut predict: F) -> Result<f64>
where
    F: FnMut(&RunRecord) -> Result<f64>,
{
    if records.len() < 2 {
        return Err(Error::validation("R^2 needs at least 2 records"));
    }
    let mean = records.iter().map(|r| r.loss).sum::<f64>() / records.len() as f64;
    let ss_tot: f64 = records.iter().map(|r| (r.loss - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::validation("R^2 undefined: target losses have zero variance"));
    }
    let mut ss_res = 0.0;
    for r in records {
        ss_res += (predict(r)? - r.loss).powi(2);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// R^2 of a scaling law's predictions.
pub fn r_squared_law(law: &ScalingLaw, records: &[RunRecord]) -> Result<f64> {
    r_squared(records, |r| predict_loss(law, r.n_params, r.n_tokens))
}
