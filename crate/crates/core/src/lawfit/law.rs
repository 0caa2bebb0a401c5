use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Functional form of a scaling law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawForm {
    /// `E + ((A/N)^(alpha/beta) + B/D)^beta`; closed under loss-to-loss translation.
    PaperEq4,
    /// `E + A/N^alpha + B/D^beta`.
    ChinchillaEq1,
}

impl LawForm {
    pub fn as_str(self) -> &'static str {
        match self {
            LawForm::PaperEq4 => "paper_eq4",
            LawForm::ChinchillaEq1 => "chinchilla_eq1",
        }
    }
}

impl std::str::FromStr for LawForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_eq4" | "paper" => Ok(LawForm::PaperEq4),
            "chinchilla_eq1" | "chinchilla" => Ok(LawForm::ChinchillaEq1),
            other => Err(Error::validation(format!(
                "unknown law form {other:?} (expected paper_eq4 or chinchilla_eq1)"
            ))),
        }
    }
}

/// Diagnostics of the fit that produced a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMeta {
    /// Summed Huber loss of log residuals at the winning parameters.
    pub objective: f64,
    pub n_points: usize,
    /// Grid starts that produced a finite local minimum.
    pub restarts: usize,
    pub best_start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingLaw {
    pub form: LawForm,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_meta: Option<FitMeta>,
}

impl ScalingLaw {
    pub fn new(form: LawForm, e: f64, a: f64, b: f64, alpha: f64, beta: f64) -> Result<Self> {
        let law = Self {
            form,
            e,
            a,
            b,
            alpha,
            beta,
            fit_meta: None,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn paper(e: f64, a: f64, b: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(LawForm::PaperEq4, e, a, b, alpha, beta)
    }

    pub fn chinchilla(e: f64, a: f64, b: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(LawForm::ChinchillaEq1, e, a, b, alpha, beta)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.e.is_finite()
            && self.e >= 0.0
            && [self.a, self.b, self.alpha, self.beta]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "invalid scaling law: need E >= 0 and A, B, alpha, beta > 0 (got E={}, A={}, B={}, alpha={}, beta={})",
                self.e, self.a, self.b, self.alpha, self.beta
            )))
        }
    }

    /// Exponent `a = beta / (alpha + beta)` of compute-optimal size in FLOPs.
    pub fn compute_exponent(&self) -> f64 {
        self.beta / (self.alpha + self.beta)
    }

    /// Reducible part of the loss at real-valued `(N, D)`, evaluated in log space.
    pub(crate) fn reducible(&self, n: f64, d: f64) -> f64 {
        let (ln_n, ln_d) = (n.ln(), d.ln());
        let (ln_a, ln_b) = (self.a.ln(), self.b.ln());
        match self.form {
            LawForm::PaperEq4 => {
                let lu = self.alpha / self.beta * (ln_a - ln_n);
                let lv = ln_b - ln_d;
                (self.beta * log_add_exp(lu, lv)).exp()
            }
            LawForm::ChinchillaEq1 => (ln_a - self.alpha * ln_n).exp() + (ln_b - self.beta * ln_d).exp(),
        }
    }

    /// Loss at real-valued model and data sizes.
    pub fn predict_at(&self, n: f64, d: f64) -> Result<f64> {
        if !(n > 0.0 && d > 0.0) {
            return Err(Error::validation(format!("N and D must be positive (got {n}, {d})")));
        }
        ensure_finite(self.e + self.reducible(n, d), "predicted loss")
    }
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Predicted loss of an `N`-parameter model trained on `D` tokens.
pub fn predict_loss(law: &ScalingLaw, n_params: u64, n_tokens: u64) -> Result<f64> {
    law.predict_at(n_params as f64, n_tokens as f64)
}

/// Compute-optimal parameter count `(G C / 6)^a` for a FLOP budget `C = 6ND`.
pub fn optimal_model_size(law: &ScalingLaw, flop_budget: f64) -> Result<f64> {
    if law.form != LawForm::PaperEq4 {
        return Err(Error::validation("optimal_model_size requires a paper_eq4 law"));
    }
    if !(flop_budget.is_finite() && flop_budget > 0.0) {
        return Err(Error::validation(format!(
            "FLOP budget must be positive, got {flop_budget}"
        )));
    }
    let (alpha, beta) = (law.alpha, law.beta);
    let ln_g = alpha.ln() + alpha / beta * law.a.ln() - beta.ln() - law.b.ln();
    let ln_n = law.compute_exponent() * (ln_g + flop_budget.ln() - 6f64.ln());
    ensure_finite(ln_n.exp(), "optimal model size")
}
