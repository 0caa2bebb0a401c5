use super::law::LawForm;
use crate::records::RunRecord;

/// Huber penalty with threshold `delta`.
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn huber_slope(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

/// Robust log-space objective `sum_i huber(ln L(N_i, D_i) - ln loss_i)`.
///
/// Parameters are ordered `[E, ln A, ln B, alpha, beta]`.
#[derive(Debug, Clone)]
pub struct LawObjective {
    form: LawForm,
    delta: f64,
    ln_n: Vec<f64>,
    ln_d: Vec<f64>,
    ln_y: Vec<f64>,
}

impl LawObjective {
    pub const DIM: usize = 5;

    pub fn new(form: LawForm, records: &[RunRecord], delta: f64) -> Self {
        Self {
            form,
            delta,
            ln_n: records.iter().map(|r| (r.n_params as f64).ln()).collect(),
            ln_d: records.iter().map(|r| (r.n_tokens as f64).ln()).collect(),
            ln_y: records.iter().map(|r| r.loss.ln()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ln_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_y.is_empty()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let mut g = [0.0; Self::DIM];
        self.value_grad(theta, &mut g)
    }

    /// Objective value; writes the analytic gradient into `grad`.
    ///
    /// Returns `+inf` where the model loss is not positive and finite.
    pub fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let [e, ln_a, ln_b, alpha, beta] = [theta[0], theta[1], theta[2], theta[3], theta[4]];
        grad[..Self::DIM].fill(0.0);
        let mut total = 0.0;
        for i in 0..self.ln_y.len() {
            let (ln_n, ln_d) = (self.ln_n[i], self.ln_d[i]);
            let (loss, dl) = match self.form {
                LawForm::PaperEq4 => {
                    let x = ln_a - ln_n;
                    let lu = alpha / beta * x;
                    let lv = ln_b - ln_d;
                    // ls = ln(e^lu + e^lv), with the two softmax weights from the same exp.
                    let t = (-(lu - lv).abs()).exp();
                    let ls = lu.max(lv) + t.ln_1p();
                    let (wu, wv) = if lu >= lv {
                        (1.0 / (1.0 + t), t / (1.0 + t))
                    } else {
                        (t / (1.0 + t), 1.0 / (1.0 + t))
                    };
                    let p = (beta * ls).exp();
                    (
                        e + p,
                        [
                            1.0,
                            p * alpha * wu,
                            p * beta * wv,
                            p * wu * x,
                            p * (ls - alpha * wu * x / beta),
                        ],
                    )
                }
                LawForm::ChinchillaEq1 => {
                    let ta = (ln_a - alpha * ln_n).exp();
                    let tb = (ln_b - beta * ln_d).exp();
                    (e + ta + tb, [1.0, ta, tb, -ta * ln_n, -tb * ln_d])
                }
            };
            if !(loss.is_finite() && loss > 0.0) {
                return f64::INFINITY;
            }
            let r = loss.ln() - self.ln_y[i];
            total += huber(r, self.delta);
            let w = huber_slope(r, self.delta) / loss;
            for k in 0..Self::DIM {
                grad[k] += w * dl[k];
            }
        }
        total
    }
}
