//! Synthetic two-dataset worlds with known, exactly linked scaling laws.
//!
//! The default world uses published FineWeb-Edu / ProofPile 2 parameters:
//! a source train law, a train-to-train link to the target dataset, a
//! train-to-test link onto a downstream loss for source models, and a
//! test-to-test link from source-model to target-model downstream loss.
//! Every surface is an exact function of `(N, D)`; observations carry
//! optional multiplicative log-normal noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::lawfit::{optimal_model_size, predict_loss, ScalingLaw};
use crate::losslink::{apply_link, translate_law, Endpoint, LinkKind, LossLink};
use crate::records::{DatasetId, MetricId, RunKey, RunRecord, Split};

/// Eight FLOP budgets, log-spaced from 2e17 to 4.84e19.
pub fn standard_budgets() -> Vec<f64> {
    let (lo, hi) = (2e17f64.ln(), 4.84e19f64.ln());
    (0..8).map(|i| (lo + (hi - lo) * i as f64 / 7.0).exp()).collect()
}

/// Iso-FLOP grid: `per_budget` model sizes log-spaced over
/// `[N*(C) / spread, N*(C) * spread]` for each budget, `D = round(C / 6N)`.
pub fn isoflop_grid(law: &ScalingLaw, budgets: &[f64], per_budget: usize, spread: f64) -> Result<Vec<RunKey>> {
    let mut keys = Vec::with_capacity(budgets.len() * per_budget);
    for &c in budgets {
        let n_opt = optimal_model_size(law, c)?;
        for j in 0..per_budget {
            let t = if per_budget == 1 {
                0.0
            } else {
                2.0 * j as f64 / (per_budget - 1) as f64 - 1.0
            };
            let n = (n_opt * spread.powf(t)).round().max(1.0);
            let d = (c / (6.0 * n)).round().max(1.0);
            keys.push((n as u64, d as u64));
        }
    }
    Ok(keys)
}

/// Multiplicative log-normal noise source, deterministic per seed.
pub struct Noise {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl Noise {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn apply(&mut self, value: f64) -> f64 {
        if self.sigma == 0.0 {
            return value;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        value * (self.sigma * z).exp()
    }
}

#[derive(Debug, Clone)]
pub struct TwinWorld {
    pub source: DatasetId,
    pub target: DatasetId,
    pub train_metric: MetricId,
    pub test_metric: MetricId,
    /// Train loss of source models.
    pub source_law: ScalingLaw,
    /// Source train loss -> target train loss.
    pub train_link: LossLink,
    /// Source train loss -> downstream loss of source models.
    pub source_test_link: LossLink,
    /// Downstream loss of source models -> downstream loss of target models.
    pub test_link: LossLink,
}

/// All four observed surfaces at a set of keys.
#[derive(Debug, Clone, Default)]
pub struct WorldRecords {
    pub source_train: Vec<RunRecord>,
    pub source_test: Vec<RunRecord>,
    pub target_train: Vec<RunRecord>,
    pub target_test: Vec<RunRecord>,
}

impl WorldRecords {
    pub fn all(&self) -> Vec<RunRecord> {
        [
            &self.source_train,
            &self.source_test,
            &self.target_train,
            &self.target_test,
        ]
        .into_iter()
        .flatten()
        .cloned()
        .collect()
    }
}

impl TwinWorld {
    /// FineWeb-Edu -> ProofPile 2 with a Hellaswag-style downstream loss.
    pub fn published() -> Self {
        let source = DatasetId::new("fineweb-edu").expect("literal");
        let target = DatasetId::new("proof-pile-2").expect("literal");
        let train_metric = MetricId::new("loss", Split::Train).expect("literal");
        let test_metric = MetricId::new("hellaswag", Split::Test).expect("literal");
        let src_train = Endpoint::new(source.clone(), train_metric.clone());
        let tgt_train = Endpoint::new(target.clone(), train_metric.clone());
        let src_test = Endpoint::new(source.clone(), test_metric.clone());
        let tgt_test = Endpoint::new(target.clone(), test_metric.clone());
        let link = |kind, k, kappa, sx, sy, s: &Endpoint, t: &Endpoint| LossLink {
            kind,
            k,
            kappa,
            shift_x: sx,
            shift_y: sy,
            shift_y_fitted_free: false,
            source: s.clone(),
            target: t.clone(),
        };
        Self {
            source_law: ScalingLaw::paper(1.97, 6.68e7, 8.90e8, 0.41, 0.46).expect("literal"),
            train_link: link(LinkKind::TrainToTrain, 0.60, 1.07, 1.97, 1.32, &src_train, &tgt_train),
            source_test_link: link(LinkKind::TrainToTest, 0.93, 1.08, 1.97, 2.12, &src_train, &src_test),
            test_link: link(LinkKind::TestToTest, 1.60, 0.74, 2.12, 2.39, &src_test, &tgt_test),
            source,
            target,
            train_metric,
            test_metric,
        }
    }

    /// Exact target train law implied by the train-to-train link.
    pub fn target_law(&self) -> Result<ScalingLaw> {
        translate_law(&self.source_law, &self.train_link)
    }

    /// Exact `(source train, source test, target train, target test)` at a key.
    pub fn exact(&self, n: u64, d: u64) -> Result<[f64; 4]> {
        let l0 = predict_loss(&self.source_law, n, d)?;
        let l1 = apply_link(&self.train_link, l0)?;
        let l2_0 = apply_link(&self.source_test_link, l0)?;
        let l2_1 = apply_link(&self.test_link, l2_0)?;
        Ok([l0, l2_0, l1, l2_1])
    }

    /// Observe every surface at `keys` with log-normal noise `sigma`.
    pub fn observe(&self, keys: &[RunKey], sigma: f64, seed: u64) -> Result<WorldRecords> {
        let mut noise = Noise::new(sigma, seed);
        let mut out = WorldRecords::default();
        for &(n, d) in keys {
            let exact = self.exact(n, d)?;
            let rec = |ds: &DatasetId, m: &MetricId, loss: f64| RunRecord::new(ds.clone(), n, d, m.clone(), loss, None);
            out.source_train
                .push(rec(&self.source, &self.train_metric, noise.apply(exact[0]))?);
            out.source_test
                .push(rec(&self.source, &self.test_metric, noise.apply(exact[1]))?);
            out.target_train
                .push(rec(&self.target, &self.train_metric, noise.apply(exact[2]))?);
            out.target_test
                .push(rec(&self.target, &self.test_metric, noise.apply(exact[3]))?);
        }
        Ok(out)
    }

    /// 88-point iso-FLOP grid: 8 budgets x 11 sizes within a factor 4 of optimal.
    pub fn standard_keys(&self) -> Result<Vec<RunKey>> {
        isoflop_grid(&self.source_law, &standard_budgets(), 11, 4.0)
    }

    /// Eight target runs for translating a law: one per budget, alternating
    /// between about 1.7x and 0.57x the optimal size. A subset of [`Self::standard_keys`].
    pub fn translation_keys(&self) -> Result<Vec<RunKey>> {
        let grid = self.standard_keys()?;
        Ok((0..8).map(|b| grid[b * 11 + if b % 2 == 0 { 7 } else { 3 }]).collect())
    }

    /// The compute-optimal model at each of the eight budgets.
    pub fn optimal_keys(&self) -> Result<Vec<RunKey>> {
        let grid = self.standard_keys()?;
        Ok((0..8).map(|b| grid[b * 11 + 5]).collect())
    }

    /// Three sizes (0.57x, 1x and 1.7x optimal) at each budget: 24 runs.
    pub fn sparse_keys(&self) -> Result<Vec<RunKey>> {
        let grid = self.standard_keys()?;
        Ok((0..8).flat_map(|b| [3, 5, 7].map(|j| grid[b * 11 + j])).collect())
    }

    /// The extrapolation model: 20x the largest standard budget, at `N*(C)`.
    pub fn large_key(&self) -> Result<RunKey> {
        let c = 20.0 * standard_budgets()[7];
        let n = optimal_model_size(&self.source_law, c)?.round();
        Ok((n as u64, (c / (6.0 * n)).round() as u64))
    }
}
