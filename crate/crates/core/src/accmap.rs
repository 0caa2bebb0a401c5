//! Maps from a loss to a downstream error rate.
//!
//! The raw map is a shifted power law `K (loss - shift_x)^kappa + M`. With a
//! chance floor `c`, the prediction is the temperature soft-min
//! `-(1/alpha) ln(exp(-alpha c) + exp(-alpha raw))`, which follows the power
//! law for strong models and flattens at `c` for weak ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{levenberg_marquardt, LmOptions, Minimum};

pub const DEFAULT_SOFTMIN_ALPHA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorMap {
    #[serde(rename = "K")]
    pub k: f64,
    pub kappa: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub chance_floor: Option<f64>,
    pub softmin_alpha: f64,
    pub shift_x: f64,
    /// Every fitted error sat on the floor; the power-law branch is arbitrary.
    #[serde(default)]
    pub plateau: bool,
}

impl ErrorMap {
    pub fn new(k: f64, kappa: f64, m: f64, shift_x: f64, chance_floor: Option<f64>) -> Result<Self> {
        let map = Self {
            k,
            kappa,
            m,
            chance_floor,
            softmin_alpha: DEFAULT_SOFTMIN_ALPHA,
            shift_x,
            plateau: false,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.k.is_finite()
            && self.k > 0.0
            && self.kappa.is_finite()
            && self.kappa > 0.0
            && self.m.is_finite()
            && self.shift_x.is_finite()
            && self.shift_x >= 0.0
            && self.softmin_alpha.is_finite()
            && self.softmin_alpha > 0.0;
        if !ok {
            return Err(Error::validation(format!(
                "invalid error map: need K, kappa, softmin_alpha > 0, finite M and shift_x >= 0 \
                 (K={}, kappa={}, M={}, shift_x={}, alpha={})",
                self.k, self.kappa, self.m, self.shift_x, self.softmin_alpha
            )));
        }
        if let Some(c) = self.chance_floor {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::validation(format!("chance floor must lie in (0, 1), got {c}")));
            }
        }
        Ok(())
    }

    fn raw(&self, loss: f64) -> f64 {
        self.k * (loss - self.shift_x).powf(self.kappa) + self.m
    }
}

/// `-(1/alpha) ln(exp(-alpha x) + exp(-alpha y))`, evaluated stably.
pub fn softmin(x: f64, y: f64, alpha: f64) -> f64 {
    x.min(y) - (-alpha * (x - y).abs()).exp().ln_1p() / alpha
}

/// Predicted error rate at a train loss.
pub fn predict_error(map: &ErrorMap, train_loss: f64) -> Result<f64> {
    if !(train_loss > map.shift_x) {
        return Err(Error::Domain {
            what: "train_loss",
            value: train_loss,
            name: "shift_x",
            shift: map.shift_x,
        });
    }
    let raw = map.raw(train_loss);
    Ok(match map.chance_floor {
        Some(c) => softmin(c, raw, map.softmin_alpha),
        None => raw,
    })
}

fn check_points(points: &[(f64, f64)], shift_x: f64, needed: usize) -> Result<()> {
    if points.len() < needed {
        return Err(Error::validation(format!(
            "need at least {needed} points for this error-map fit, got {}",
            points.len()
        )));
    }
    if !(shift_x.is_finite() && shift_x >= 0.0) {
        return Err(Error::validation(format!(
            "shift_x must be finite and >= 0, got {shift_x}"
        )));
    }
    for &(x, e) in points {
        if !(x.is_finite() && x > shift_x) {
            return Err(Error::Domain {
                what: "train_loss",
                value: x,
                name: "shift_x",
                shift: shift_x,
            });
        }
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::validation(format!("error rates must lie in (0, 1), got {e}")));
        }
    }
    Ok(())
}

/// `(ln K, kappa)` from least squares of `ln(e - m)` on `ln(x - shift_x)`.
fn log_log_start(points: &[(f64, f64)], shift_x: f64, m: f64) -> (f64, f64) {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1 > m)
        .map(|&(x, e)| ((x - shift_x).ln(), (e - m).ln()))
        .collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let kappa = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    if kappa.is_finite() && kappa > 0.0 {
        (my - kappa * mx, kappa)
    } else {
        (my, 1.0)
    }
}

fn best_of(candidates: impl IntoIterator<Item = Result<Minimum>>) -> Result<Minimum> {
    candidates
        .into_iter()
        .filter_map(|r| r.ok())
        .filter(|m| m.f.is_finite())
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or_else(|| Error::numerical("error-map objective was non-finite from every start"))
}

/// Least-squares fit of an error map in raw error space.
///
/// Starts from a log-log fit at `M = 0.9 min(error)` (and, with a floor,
/// `floor = max(error)`); a second start fits the power law to the points
/// below the median error only, which helps when many points sit at chance.
pub fn fit_error_map(points: &[(f64, f64)], shift_x: f64, use_floor: bool) -> Result<ErrorMap> {
    check_points(points, shift_x, if use_floor { 5 } else { 4 })?;
    let errs: Vec<f64> = points.iter().map(|p| p.1).collect();
    let min_e = errs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_e = errs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let m0 = 0.9 * min_e;

    if min_e == max_e {
        if !use_floor {
            return Err(Error::validation(
                "error rates have zero variance; nothing to fit without a floor",
            ));
        }
        let mut map = ErrorMap::new(1.0, 1.0, max_e, shift_x, Some(max_e))?;
        map.plateau = true;
        return Ok(map);
    }

    let ln_t: Vec<f64> = points.iter().map(|p| (p.0 - shift_x).ln()).collect();
    let inf = f64::INFINITY;
    let opts = LmOptions::default();
    let mut sorted = errs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let lower: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 <= median).collect();
    let mut starts = vec![log_log_start(points, shift_x, m0)];
    if lower.len() >= 2 {
        let lower_min = lower.iter().map(|p| p.1).fold(inf, f64::min);
        starts.push(log_log_start(&lower, shift_x, 0.9 * lower_min));
    }

    let (p, floor) = if use_floor {
        let alpha = DEFAULT_SOFTMIN_ALPHA;
        let rj = |p: &[f64], r: &mut [f64], j: &mut [f64]| {
            for i in 0..errs.len() {
                let pw = (p[0] + p[1] * ln_t[i]).exp();
                let raw = pw + p[2];
                let w = 1.0 / (1.0 + (-alpha * (p[3] - raw)).exp());
                r[i] = softmin(p[3], raw, alpha) - errs[i];
                j[4 * i] = w * pw;
                j[4 * i + 1] = w * pw * ln_t[i];
                j[4 * i + 2] = w;
                j[4 * i + 3] = 1.0 - w;
            }
        };
        let bounds = [(-inf, inf), (1e-6, 1e3), (-inf, inf), (1e-9, 1.0 - 1e-9)];
        let best = best_of(starts.iter().map(|&(lk, ka)| {
            levenberg_marquardt(rj, &[lk, ka, m0, max_e.min(1.0 - 1e-9)], errs.len(), &bounds, &opts)
        }))?;
        let floor = best.x[3];
        (best.x, Some(floor))
    } else {
        let rj = |p: &[f64], r: &mut [f64], j: &mut [f64]| {
            for i in 0..errs.len() {
                let pw = (p[0] + p[1] * ln_t[i]).exp();
                r[i] = pw + p[2] - errs[i];
                j[3 * i] = pw;
                j[3 * i + 1] = pw * ln_t[i];
                j[3 * i + 2] = 1.0;
            }
        };
        let bounds = [(-inf, inf), (1e-6, 1e3), (-inf, inf)];
        let best = best_of(
            starts
                .iter()
                .map(|&(lk, ka)| levenberg_marquardt(rj, &[lk, ka, m0], errs.len(), &bounds, &opts)),
        )?;
        (best.x, None)
    };
    ErrorMap::new(p[0].exp(), p[1], p[2], shift_x, floor)
        .map_err(|e| Error::numerical(format!("fit produced an invalid error map: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn equal_arguments_lose_ln2_over_alpha() {
        let map = ErrorMap::new(1.0, 1.0, 0.25, 0.0, Some(0.75)).unwrap();
        let v = predict_error(&map, 0.5).unwrap();
        assert!((v - (0.75 - 2f64.ln() / 10.0)).abs() < 1e-15);
        assert!((v - 0.6807).abs() < 1e-4);
    }

    #[test]
    fn floor_free_identity() {
        let map = ErrorMap::new(1.0, 1.0, 0.0, 0.0, None).unwrap();
        for x in [0.01, 0.3, 0.99] {
            assert!((predict_error(&map, x).unwrap() - x).abs() < 1e-15);
        }
        assert!(matches!(predict_error(&map, 0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn softmin_is_near_hard_min_away_from_crossover() {
        let v = softmin(0.75, 0.2, 10.0);
        assert!((v - 0.2).abs() < 0.005, "{v}");
        assert_eq!(softmin(0.3, 0.7, 10.0), softmin(0.7, 0.3, 10.0));
    }

    #[test]
    fn softmin_lies_within_ln2_over_alpha_below_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = rand_distr::Uniform::new(-2.0, 2.0).unwrap();
        for _ in 0..1000 {
            let (x, y) = (u.sample(&mut rng), u.sample(&mut rng));
            let s = softmin(x, y, 10.0);
            assert!(s <= x.min(y) + 1e-15 && s >= x.min(y) - 2f64.ln() / 10.0 - 1e-15);
        }
    }

    #[test]
    fn recovers_floor_free_map() {
        let truth = ErrorMap::new(0.35, 1.3, 0.05, 1.9, None).unwrap();
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|i| 2.3 + 0.15 * i as f64)
            .map(|x| (x, predict_error(&truth, x).unwrap()))
            .collect();
        let fit = fit_error_map(&pts, 1.9, false).unwrap();
        assert!((fit.k / truth.k - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.kappa - truth.kappa).abs() < 1e-6);
        assert!((fit.m - truth.m).abs() < 1e-6);
    }

    #[test]
    fn recovers_chance_floor_under_noise() {
        let truth = ErrorMap::new(0.5, 1.2, 0.1, 1.9, Some(0.75)).unwrap();
        let xs: Vec<f64> = (0..16).map(|i| 2.2 + 0.12 * i as f64).collect();
        let at_floor = xs.iter().filter(|&&x| predict_error(&truth, x).unwrap() > 0.7).count();
        assert!(at_floor >= 6, "{at_floor}");
        let noise = Normal::new(0.0, 0.01).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(f64, f64)> = xs
                .iter()
                .map(|&x| (x, predict_error(&truth, x).unwrap() + noise.sample(&mut rng)))
                .collect();
            let fit = fit_error_map(&pts, 1.9, true).unwrap();
            let floor = fit.chance_floor.unwrap();
            assert!((floor - 0.75).abs() <= 0.02, "seed {seed}: {fit:?}");
        }
    }

    #[test]
    fn plateau_is_flagged() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (2.5 + i as f64 * 0.1, 0.75)).collect();
        let fit = fit_error_map(&pts, 2.0, true).unwrap();
        assert!(fit.plateau);
        assert_eq!(fit.chance_floor, Some(0.75));
        assert!(fit_error_map(&pts, 2.0, false).is_err());
        assert!(fit_error_map(&pts[..4], 2.0, true).is_err());
    }
}
