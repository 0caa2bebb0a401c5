//! Shifted power-law links between two losses,
//! `y = K (x - shift_x)^kappa + shift_y`, and the algebra built on them:
//! translating a scaling law through a link and composing links.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::lawfit::{fit_law, FitConfig, LawForm, ScalingLaw};
use crate::optim::{levenberg_marquardt, LmOptions};
use crate::records::{DatasetId, MetricId, PairedPoint, RunRecord};

/// Absolute tolerance when checking that two shifts refer to the same entropy.
pub const SHIFT_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    TrainToTrain,
    TrainToTest,
    TestToTest,
    General,
}

impl std::str::FromStr for LinkKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train_to_train" => Ok(LinkKind::TrainToTrain),
            "train_to_test" => Ok(LinkKind::TrainToTest),
            "test_to_test" => Ok(LinkKind::TestToTest),
            "general" => Ok(LinkKind::General),
            other => Err(Error::validation(format!(
                "unknown link kind {other:?} (expected train_to_train, train_to_test, test_to_test or general)"
            ))),
        }
    }
}

/// One axis of a link: models trained on `dataset`, evaluated on `metric`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub dataset: DatasetId,
    pub metric: MetricId,
}

impl Endpoint {
    pub fn new(dataset: DatasetId, metric: MetricId) -> Self {
        Self { dataset, metric }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.dataset, self.metric)
    }
}

/// `DATASET:NAME/SPLIT`.
impl std::str::FromStr for Endpoint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (ds, metric) = s
            .split_once(':')
            .ok_or_else(|| Error::validation(format!("endpoint {s:?} must look like DATASET:NAME/SPLIT")))?;
        Ok(Endpoint::new(DatasetId::new(ds)?, metric.parse()?))
    }
}

/// Target shift: supplied (an entropy from a scaling-law fit) or fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftY {
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossLink {
    pub kind: LinkKind,
    #[serde(rename = "K")]
    pub k: f64,
    pub kappa: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub shift_y_fitted_free: bool,
    pub source: Endpoint,
    pub target: Endpoint,
}

impl LossLink {
    /// `y = x` between two views of the same loss.
    pub fn identity(endpoint: Endpoint, shift: f64) -> Self {
        Self {
            kind: LinkKind::General,
            k: 1.0,
            kappa: 1.0,
            shift_x: shift,
            shift_y: shift,
            shift_y_fitted_free: false,
            source: endpoint.clone(),
            target: endpoint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.k.is_finite()
            && self.k > 0.0
            && self.kappa.is_finite()
            && self.kappa > 0.0
            && self.shift_x.is_finite()
            && self.shift_x >= 0.0
            && self.shift_y.is_finite()
            && self.shift_y >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "invalid link: need K, kappa > 0 and nonnegative shifts (K={}, kappa={}, shift_x={}, shift_y={})",
                self.k, self.kappa, self.shift_x, self.shift_y
            )))
        }
    }
}

/// Evaluate a link at a source loss.
pub fn apply_link(link: &LossLink, loss_x: f64) -> Result<f64> {
    if !(loss_x > link.shift_x) {
        return Err(Error::Domain {
            what: "loss_x",
            value: loss_x,
            name: "shift_x",
            shift: link.shift_x,
        });
    }
    let t = loss_x - link.shift_x;
    ensure_finite(link.k * (link.kappa * t.ln()).exp() + link.shift_y, "linked loss")
}

fn log_log_ols(pairs: &[PairedPoint], shift_x: f64, shift_y: f64) -> Result<(f64, f64)> {
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| (p.loss_x - shift_x).ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| (p.loss_y - shift_y).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::validation("all source losses are identical; slope is undefined"));
    }
    let kappa = sxy / sxx;
    let ln_k = my - kappa * mx;
    if !(kappa.is_finite() && ln_k.is_finite()) {
        return Err(Error::numerical("log-log regression produced non-finite coefficients"));
    }
    Ok((ln_k, kappa))
}

/// Fit a link to paired losses.
///
/// With a fixed `shift_y` this is ordinary least squares of `ln(y - shift_y)`
/// on `ln(x - shift_x)`. With [`ShiftY::Free`], `(K, kappa, shift_y)` are fit by
/// least squares in raw loss space, starting from the fixed-shift fit at
/// `0.9 * min(y)`, with `shift_y` kept in `[0, min(y))`.
pub fn fit_link(
    pairs: &[PairedPoint],
    shift_x: f64,
    shift_y: ShiftY,
    kind: LinkKind,
    source: Endpoint,
    target: Endpoint,
) -> Result<LossLink> {
    let needed = match shift_y {
        ShiftY::Fixed(_) => 3,
        ShiftY::Free => 4,
    };
    if pairs.len() < needed {
        return Err(Error::validation(format!(
            "need at least {needed} pairs for this link fit, got {}",
            pairs.len()
        )));
    }
    if !(shift_x.is_finite() && shift_x >= 0.0) {
        return Err(Error::validation(format!(
            "shift_x must be finite and >= 0, got {shift_x}"
        )));
    }
    for p in pairs {
        if !(p.loss_x > shift_x) {
            return Err(Error::Domain {
                what: "loss_x",
                value: p.loss_x,
                name: "shift_x",
                shift: shift_x,
            });
        }
        if !(p.loss_y.is_finite() && p.loss_y > 0.0) {
            return Err(Error::validation(format!("loss_y must be positive, got {}", p.loss_y)));
        }
    }

    let (ln_k, kappa, sy, free) = match shift_y {
        ShiftY::Fixed(sy) => {
            if !(sy.is_finite() && sy >= 0.0) {
                return Err(Error::validation(format!("shift_y must be finite and >= 0, got {sy}")));
            }
            for p in pairs {
                if !(p.loss_y > sy) {
                    return Err(Error::Domain {
                        what: "loss_y",
                        value: p.loss_y,
                        name: "shift_y",
                        shift: sy,
                    });
                }
            }
            let (ln_k, kappa) = log_log_ols(pairs, shift_x, sy)?;
            (ln_k, kappa, sy, false)
        }
        ShiftY::Free => {
            let (ln_k, kappa, sy) = fit_free_shift(pairs, shift_x)?;
            (ln_k, kappa, sy, true)
        }
    };

    if !(kappa > 0.0) {
        return Err(Error::numerical(format!(
            "fitted exponent kappa = {kappa} is not positive; the losses are not positively related"
        )));
    }
    let link = LossLink {
        kind,
        k: ln_k.exp(),
        kappa,
        shift_x,
        shift_y: sy,
        shift_y_fitted_free: free,
        source,
        target,
    };
    link.validate().map_err(|e| Error::numerical(e.to_string()))?;
    Ok(link)
}

fn fit_free_shift(pairs: &[PairedPoint], shift_x: f64) -> Result<(f64, f64, f64)> {
    let min_y = pairs.iter().map(|p| p.loss_y).fold(f64::INFINITY, f64::min);
    let sy0 = 0.9 * min_y;
    let (ln_k0, kappa0) = log_log_ols(pairs, shift_x, sy0)?;
    let kappa0 = if kappa0 > 0.0 { kappa0 } else { 1.0 };

    let ln_t: Vec<f64> = pairs.iter().map(|p| (p.loss_x - shift_x).ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.loss_y).collect();
    let rj = |p: &[f64], r: &mut [f64], j: &mut [f64]| {
        for i in 0..ys.len() {
            let pw = (p[0] + p[1] * ln_t[i]).exp();
            r[i] = pw + p[2] - ys[i];
            j[3 * i] = pw;
            j[3 * i + 1] = pw * ln_t[i];
            j[3 * i + 2] = 1.0;
        }
    };
    let upper = min_y * (1.0 - 1e-12);
    let bounds = [(f64::NEG_INFINITY, f64::INFINITY), (1e-6, 1e3), (0.0, upper)];
    let m = levenberg_marquardt(rj, &[ln_k0, kappa0, sy0], ys.len(), &bounds, &LmOptions::default())?;
    if !m.f.is_finite() {
        return Err(Error::numerical("free-shift link objective is not finite"));
    }
    Ok((m.x[0], m.x[1], m.x[2]))
}

/// Carry a scaling law through a link: the returned law predicts
/// `apply_link(link, predict_loss(law, N, D))` for every `(N, D)`.
pub fn translate_law(law: &ScalingLaw, link: &LossLink) -> Result<ScalingLaw> {
    if law.form != LawForm::PaperEq4 {
        return Err(Error::validation(
            "only paper_eq4 laws can be translated through a link",
        ));
    }
    if (link.shift_x - law.e).abs() > SHIFT_MATCH_TOL {
        return Err(Error::validation(format!(
            "link shift_x = {} does not match the law's entropy E = {}",
            link.shift_x, law.e
        )));
    }
    let (k, kappa) = (link.k, link.kappa);
    let alpha = kappa * law.alpha;
    let beta = kappa * law.beta;
    let a = law.a * k.powf(1.0 / alpha);
    let b = law.b * k.powf(1.0 / beta);
    ScalingLaw::paper(link.shift_y, a, b, alpha, beta)
        .map_err(|e| Error::numerical(format!("translation produced an invalid law: {e}")))
}

/// `second ∘ first`, valid when `first` ends where `second` begins.
pub fn compose_links(first: &LossLink, second: &LossLink) -> Result<LossLink> {
    if first.target != second.source {
        return Err(Error::validation(format!(
            "cannot compose: first link ends at {} but second starts at {}",
            first.target, second.source
        )));
    }
    if (second.shift_x - first.shift_y).abs() > SHIFT_MATCH_TOL {
        return Err(Error::validation(format!(
            "cannot compose: second shift_x = {} differs from first shift_y = {}",
            second.shift_x, first.shift_y
        )));
    }
    Ok(LossLink {
        kind: LinkKind::General,
        k: second.k * first.k.powf(second.kappa),
        kappa: first.kappa * second.kappa,
        shift_x: first.shift_x,
        shift_y: second.shift_y,
        shift_y_fitted_free: second.shift_y_fitted_free,
        source: first.source.clone(),
        target: second.target.clone(),
    })
}

/// Entropy term of a scaling law fit to (typically test-loss) records, e.g.
/// the floor of one distribution's loss for models trained on another.
pub fn estimate_conditional_entropy(records: &[RunRecord], cfg: &FitConfig) -> Result<f64> {
    Ok(fit_law(records, LawForm::PaperEq4, cfg)?.e)
}
