//! Practitioner scenarios: translating a scaling law to a new dataset from a
//! handful of runs, and predicting a large model's downstream loss.

use std::cell::OnceCell;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::lawfit::{fit_law, huber, predict_loss, r_squared_law, FitConfig, LawForm, ScalingLaw};
use crate::losslink::{
    apply_link, estimate_conditional_entropy, fit_link, translate_law, Endpoint, LinkKind, LossLink, ShiftY,
};
use crate::optim::{minimize_lbfgs, LbfgsOptions};
use crate::records::{pair_records, DatasetId, MetricId, RunKey, RunRecord};

/// Inputs shared by both scenarios.
///
/// Each run list may mix metrics; records are selected by `train_metric` or
/// `test_metric` as each step needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Full grid on the source dataset.
    pub source_runs: Vec<RunRecord>,
    /// The few runs available on the target dataset.
    pub target_runs_small: Vec<RunRecord>,
    /// Held-out target runs used for scoring.
    pub target_runs_eval: Vec<RunRecord>,
    pub train_metric: MetricId,
    pub test_metric: Option<MetricId>,
}

fn single_dataset(records: &[RunRecord], what: &str) -> Result<DatasetId> {
    let first = records
        .first()
        .ok_or_else(|| Error::validation(format!("{what} is empty")))?;
    if let Some(r) = records.iter().find(|r| r.train_dataset != first.train_dataset) {
        return Err(Error::validation(format!(
            "{what} mixes datasets {} and {}",
            first.train_dataset, r.train_dataset
        )));
    }
    Ok(first.train_dataset.clone())
}

fn with_metric(records: &[RunRecord], metric: &MetricId) -> Vec<RunRecord> {
    records.iter().filter(|r| &r.metric == metric).cloned().collect()
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        for r in self
            .source_runs
            .iter()
            .chain(&self.target_runs_small)
            .chain(&self.target_runs_eval)
        {
            r.validate()?;
        }
        single_dataset(&self.source_runs, "source_runs")?;
        let target = single_dataset(&self.target_runs_small, "target_runs_small")?;
        if !self.target_runs_eval.is_empty() && single_dataset(&self.target_runs_eval, "target_runs_eval")? != target {
            return Err(Error::validation(
                "target_runs_eval and target_runs_small use different datasets",
            ));
        }
        let source_keys: BTreeSet<RunKey> = self.source_runs.iter().map(RunRecord::key).collect();
        if let Some(r) = self.target_runs_small.iter().find(|r| !source_keys.contains(&r.key())) {
            return Err(Error::validation(format!(
                "target run (N, D) = ({}, {}) has no source run to pair with",
                r.n_params, r.n_tokens
            )));
        }
        Ok(())
    }

    fn source_dataset(&self) -> DatasetId {
        self.source_runs[0].train_dataset.clone()
    }

    fn target_dataset(&self) -> DatasetId {
        self.target_runs_small[0].train_dataset.clone()
    }

    fn test_metric(&self) -> Result<&MetricId> {
        self.test_metric
            .as_ref()
            .ok_or_else(|| Error::validation("this method needs a test metric"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct R2Scores {
    pub translated: f64,
    pub baseline: Option<f64>,
    pub skyline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationOutcome {
    pub source_law: ScalingLaw,
    pub link: LossLink,
    pub translated: ScalingLaw,
    /// Fit on the small target runs alone; it may legitimately fail.
    pub baseline: Result<ScalingLaw>,
    /// Fit on the evaluation runs, when they form a usable grid.
    pub skyline: Option<ScalingLaw>,
    pub scores: R2Scores,
}

fn is_full_grid(eval: &[RunRecord], small: &[RunRecord]) -> bool {
    let ns: BTreeSet<u64> = eval.iter().map(|r| r.n_params).collect();
    let ds: BTreeSet<u64> = eval.iter().map(|r| r.n_tokens).collect();
    eval.len() > small.len() && eval.len() >= 6 && ns.len() >= 2 && ds.len() >= 2
}

/// Fit the source law, link it to the target with the small runs, and score
/// the translated law against a baseline and skyline fit.
pub fn translate_law_scenario(spec: &ScenarioSpec, cfg: &FitConfig) -> Result<TranslationOutcome> {
    spec.validate()?;
    let metric = &spec.train_metric;
    let source = with_metric(&spec.source_runs, metric);
    let small = with_metric(&spec.target_runs_small, metric);
    let eval = with_metric(&spec.target_runs_eval, metric);

    let source_law = fit_law(&source, LawForm::PaperEq4, cfg)?;
    let pairs = pair_records(&source, &small)?;
    let link = fit_link(
        &pairs,
        source_law.e,
        ShiftY::Free,
        LinkKind::TrainToTrain,
        Endpoint::new(spec.source_dataset(), metric.clone()),
        Endpoint::new(spec.target_dataset(), metric.clone()),
    )?;
    let translated = translate_law(&source_law, &link)?;
    let baseline = fit_law(&small, LawForm::PaperEq4, cfg);
    let skyline = if is_full_grid(&eval, &small) {
        Some(fit_law(&eval, LawForm::PaperEq4, cfg)?)
    } else {
        None
    };

    let scores = R2Scores {
        translated: r_squared_law(&translated, &eval)?,
        baseline: match &baseline {
            Ok(law) => Some(r_squared_law(law, &eval)?),
            Err(_) => None,
        },
        skyline: skyline.as_ref().map(|law| r_squared_law(law, &eval)).transpose()?,
    };
    Ok(TranslationOutcome {
        source_law,
        link,
        translated,
        baseline,
        skyline,
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictMethod {
    GeneralTrainToTest,
    TestToTest,
    FlopsToLoss,
    IndepScalingLaw,
    Identity,
}

impl PredictMethod {
    pub const ALL: [PredictMethod; 5] = [
        PredictMethod::GeneralTrainToTest,
        PredictMethod::TestToTest,
        PredictMethod::FlopsToLoss,
        PredictMethod::IndepScalingLaw,
        PredictMethod::Identity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictMethod::GeneralTrainToTest => "general_train_to_test",
            PredictMethod::TestToTest => "test_to_test",
            PredictMethod::FlopsToLoss => "flops_to_loss",
            PredictMethod::IndepScalingLaw => "indep_scaling_law",
            PredictMethod::Identity => "identity",
        }
    }

    /// Whether the method goes through a loss-to-loss link.
    pub fn is_loss_link(self) -> bool {
        matches!(self, PredictMethod::GeneralTrainToTest | PredictMethod::TestToTest)
    }
}

impl std::str::FromStr for PredictMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|m| m.as_str()).collect();
            Error::validation(format!("unknown method {s:?} (expected one of {})", names.join(", ")))
        })
    }
}

/// Train and test loss of the large source-dataset model.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeSource {
    pub train: RunRecord,
    pub test: RunRecord,
}

impl LargeSource {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.test.validate()?;
        if self.train.key() != self.test.key() || self.train.train_dataset != self.test.train_dataset {
            return Err(Error::validation(
                "large-model train and test records describe different runs",
            ));
        }
        Ok(())
    }
}

/// Compute-to-loss curve `L = E + F C^-gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlopsLaw {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub gamma: f64,
}

impl FlopsLaw {
    pub fn predict(&self, flops: f64) -> f64 {
        self.e + self.f * flops.powf(-self.gamma)
    }
}

/// Fit a [`FlopsLaw`] with the scaling-law Huber objective on log residuals.
pub fn fit_flops_law(records: &[RunRecord], cfg: &FitConfig) -> Result<FlopsLaw> {
    cfg.validate()?;
    let budgets: BTreeSet<u64> = records.iter().map(|r| r.flops().to_bits()).collect();
    if budgets.len() < 4 {
        return Err(Error::validation(format!(
            "flops-to-loss fit needs at least 4 distinct budgets, got {}",
            budgets.len()
        )));
    }
    let ln_c: Vec<f64> = records.iter().map(|r| r.flops().ln()).collect();
    let center = ln_c.iter().sum::<f64>() / ln_c.len() as f64;
    let xc: Vec<f64> = ln_c.iter().map(|c| c - center).collect();
    let ln_y: Vec<f64> = records.iter().map(|r| r.loss.ln()).collect();
    let delta = cfg.huber_delta;

    // Parameters: [E, ln F', gamma] with F' = F exp(-gamma * center).
    let objective = |p: &[f64], g: &mut [f64]| -> f64 {
        g[..3].fill(0.0);
        let mut total = 0.0;
        for (x, y) in xc.iter().zip(&ln_y) {
            let pw = (p[1] - p[2] * x).exp();
            let loss = p[0] + pw;
            if !(loss.is_finite() && loss > 0.0) {
                return f64::INFINITY;
            }
            let r = loss.ln() - y;
            total += huber(r, delta);
            let w = r.clamp(-delta, delta) / loss;
            g[0] += w;
            g[1] += w * pw;
            g[2] -= w * pw * x;
        }
        total
    };

    let bounds = [(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY), (1e-3, 3.0)];
    let opts = LbfgsOptions {
        max_iters: cfg.max_iters,
        f_tol: cfg.convergence_tol,
        ..Default::default()
    };
    let min_y = records.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &e0 in &cfg.grid.e {
        let e0 = e0.min(0.9 * min_y);
        for gamma0 in [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5] {
            let lf0 = records
                .iter()
                .zip(&xc)
                .map(|(r, x)| (r.loss - e0).max(1e-3 * r.loss).ln() + gamma0 * x)
                .sum::<f64>()
                / records.len() as f64;
            let Ok(m) = minimize_lbfgs(objective, &[e0, lf0, gamma0], &bounds, &opts) else {
                continue;
            };
            if m.f.is_finite() && best.as_ref().map_or(true, |(f, _)| m.f < *f) {
                best = Some((m.f, m.x));
            }
        }
    }
    let (_, p) = best.ok_or_else(|| Error::numerical("flops-to-loss objective was non-finite from every start"))?;
    Ok(FlopsLaw {
        e: p[0],
        f: ensure_finite((p[1] + p[2] * center).exp(), "flops-to-loss coefficient")?,
        gamma: p[2],
    })
}

/// Predicts the large target model's test loss by each method, sharing fits
/// between methods.
pub struct LargeTestPredictor<'a> {
    spec: &'a ScenarioSpec,
    large: &'a LargeSource,
    cfg: &'a FitConfig,
    source_law: OnceCell<ScalingLaw>,
}

impl<'a> LargeTestPredictor<'a> {
    pub fn new(spec: &'a ScenarioSpec, large: &'a LargeSource, cfg: &'a FitConfig) -> Result<Self> {
        spec.validate()?;
        large.validate()?;
        if large.train.metric != spec.train_metric {
            return Err(Error::validation(format!(
                "large-model train record has metric {}, expected {}",
                large.train.metric, spec.train_metric
            )));
        }
        if Some(&large.test.metric) != spec.test_metric.as_ref() {
            return Err(Error::validation(format!(
                "large-model test record has metric {}, expected the scenario test metric",
                large.test.metric
            )));
        }
        Ok(Self {
            spec,
            large,
            cfg,
            source_law: OnceCell::new(),
        })
    }

    fn source_law(&self) -> Result<&ScalingLaw> {
        if let Some(law) = self.source_law.get() {
            return Ok(law);
        }
        let law = fit_law(
            &with_metric(&self.spec.source_runs, &self.spec.train_metric),
            LawForm::PaperEq4,
            self.cfg,
        )?;
        Ok(self.source_law.get_or_init(|| law))
    }

    fn target_test(&self) -> Result<Vec<RunRecord>> {
        Ok(with_metric(&self.spec.target_runs_small, self.spec.test_metric()?))
    }

    /// The fitted link used by a loss-link method.
    pub fn link(&self, method: PredictMethod) -> Result<LossLink> {
        let test_metric = self.spec.test_metric()?;
        let target = Endpoint::new(self.spec.target_dataset(), test_metric.clone());
        let ys = self.target_test()?;
        match method {
            PredictMethod::GeneralTrainToTest => {
                let xs = with_metric(&self.spec.source_runs, &self.spec.train_metric);
                let shift_x = self.source_law()?.e;
                let pairs = pair_records(&xs, &ys)?;
                let source = Endpoint::new(self.spec.source_dataset(), self.spec.train_metric.clone());
                fit_link(&pairs, shift_x, ShiftY::Free, LinkKind::General, source, target)
            }
            PredictMethod::TestToTest => {
                let xs = with_metric(&self.spec.source_runs, test_metric);
                let shift_x = estimate_conditional_entropy(&xs, self.cfg)?;
                let pairs = pair_records(&xs, &ys)?;
                let source = Endpoint::new(self.spec.source_dataset(), test_metric.clone());
                fit_link(&pairs, shift_x, ShiftY::Free, LinkKind::TestToTest, source, target)
            }
            other => Err(Error::validation(format!(
                "{} does not use a loss link",
                other.as_str()
            ))),
        }
    }

    pub fn predict(&self, method: PredictMethod) -> Result<f64> {
        match method {
            PredictMethod::GeneralTrainToTest => apply_link(&self.link(method)?, self.large.train.loss),
            PredictMethod::TestToTest => apply_link(&self.link(method)?, self.large.test.loss),
            PredictMethod::FlopsToLoss => {
                let law = fit_flops_law(&self.target_test()?, self.cfg)?;
                ensure_finite(law.predict(self.large.train.flops()), "flops-to-loss prediction")
            }
            PredictMethod::IndepScalingLaw => {
                let law = fit_law(&self.target_test()?, LawForm::PaperEq4, self.cfg)?;
                predict_loss(&law, self.large.train.n_params, self.large.train.n_tokens)
            }
            PredictMethod::Identity => Ok(self.large.test.loss),
        }
    }
}

/// Predict the test loss of a large target-dataset model with one method.
pub fn predict_large_test(
    spec: &ScenarioSpec,
    large: &LargeSource,
    method: PredictMethod,
    cfg: &FitConfig,
) -> Result<f64> {
    LargeTestPredictor::new(spec, large, cfg)?.predict(method)
}

/// `|pred - actual| / actual`.
pub fn relative_error(pred: f64, actual: f64) -> Result<f64> {
    if !(actual > 0.0) || !pred.is_finite() || !actual.is_finite() {
        return Err(Error::validation(format!(
            "relative error needs finite values and actual > 0 (pred={pred}, actual={actual})"
        )));
    }
    Ok((pred - actual).abs() / actual)
}
