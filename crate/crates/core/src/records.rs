//! Run records and the pairing of runs across datasets.
//!
//! A [`RunRecord`] is one trained model evaluated on one metric. Loss-to-loss
//! regressions operate on [`PairedPoint`]s: two losses observed for models
//! with identical parameter and token counts.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of a training distribution, e.g. `fineweb-edu`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DatasetId(String);

impl DatasetId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::validation("dataset name must be non-empty"));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for DatasetId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<DatasetId> for String {
    fn from(value: DatasetId) -> Self {
        value.0
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::validation(format!(
                "unknown split {other:?} (expected \"train\" or \"test\")"
            ))),
        }
    }
}

/// Evaluation key: which loss was measured, and whether it is the training loss.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricId {
    pub name: String,
    pub split: Split,
}

impl MetricId {
    pub fn new(name: impl Into<String>, split: Split) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::validation("metric name must be non-empty"));
        }
        Ok(Self { name, split })
    }

    pub fn train(name: impl Into<String>) -> Result<Self> {
        Self::new(name, Split::Train)
    }

    pub fn test(name: impl Into<String>) -> Result<Self> {
        Self::new(name, Split::Test)
    }
}

/// `NAME/SPLIT`, or `NAME` for the train split.
impl std::str::FromStr for MetricId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('/') {
            Some((name, split)) => MetricId::new(name, split.parse()?),
            None => MetricId::train(s),
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.split.as_str())
    }
}

/// `(N, D)` identifying a model within one dataset's grid.
pub type RunKey = (u64, u64);

/// Training compute under the `C = 6ND` convention.
///
/// The product is formed in 128-bit integer arithmetic and rounded once, so
/// it is exact whenever `6ND` is representable and symmetric in its inputs.
pub fn flops_of(n_params: u64, n_tokens: u64) -> f64 {
    (6u128 * n_params as u128 * n_tokens as u128) as f64
}

/// One trained model's final evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub train_dataset: DatasetId,
    pub n_params: u64,
    pub n_tokens: u64,
    pub metric: MetricId,
    pub loss: f64,
    /// Explicit compute, when the producing codebase counts it differently.
    pub flops: Option<f64>,
}

impl RunRecord {
    pub fn new(
        train_dataset: DatasetId,
        n_params: u64,
        n_tokens: u64,
        metric: MetricId,
        loss: f64,
        flops: Option<f64>,
    ) -> Result<Self> {
        let rec = Self {
            train_dataset,
            n_params,
            n_tokens,
            metric,
            loss,
            flops,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_params == 0 {
            return Err(Error::validation("n_params must be >= 1"));
        }
        if self.n_tokens == 0 {
            return Err(Error::validation("n_tokens must be >= 1"));
        }
        if !(self.loss.is_finite() && self.loss > 0.0) {
            return Err(Error::validation(format!(
                "loss must be positive and finite, got {}",
                self.loss
            )));
        }
        if let Some(c) = self.flops {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::validation(format!("flops must be positive and finite, got {c}")));
            }
        }
        Ok(())
    }

    pub fn key(&self) -> RunKey {
        (self.n_params, self.n_tokens)
    }

    /// Explicit compute if recorded, otherwise `6ND`.
    pub fn flops(&self) -> f64 {
        self.flops.unwrap_or_else(|| flops_of(self.n_params, self.n_tokens))
    }
}

/// Two losses observed at the same `(N, D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedPoint {
    pub n_params: u64,
    pub n_tokens: u64,
    pub loss_x: f64,
    pub loss_y: f64,
}

impl PairedPoint {
    pub fn swapped(self) -> Self {
        Self {
            loss_x: self.loss_y,
            loss_y: self.loss_x,
            ..self
        }
    }
}

fn index_by_key<'a>(records: &'a [RunRecord], side: &str) -> Result<BTreeMap<RunKey, &'a RunRecord>> {
    let mut out = BTreeMap::new();
    for r in records {
        if out.insert(r.key(), r).is_some() {
            return Err(Error::validation(format!(
                "duplicate (N, D) = ({}, {}) in {side} records",
                r.n_params, r.n_tokens
            )));
        }
    }
    Ok(out)
}

/// Inner join of two record lists on exact `(N, D)`, sorted by key.
pub fn pair_records(xs: &[RunRecord], ys: &[RunRecord]) -> Result<Vec<PairedPoint>> {
    let xs = index_by_key(xs, "x")?;
    let ys = index_by_key(ys, "y")?;
    Ok(xs
        .iter()
        .filter_map(|(key, x)| {
            ys.get(key).map(|y| PairedPoint {
                n_params: key.0,
                n_tokens: key.1,
                loss_x: x.loss,
                loss_y: y.loss,
            })
        })
        .collect())
}

/// Records from `records` matching a dataset and metric, in input order.
pub fn select<'a>(
    records: &'a [RunRecord],
    dataset: &'a DatasetId,
    metric: &'a MetricId,
) -> impl Iterator<Item = &'a RunRecord> + 'a {
    records
        .iter()
        .filter(move |r| &r.train_dataset == dataset && &r.metric == metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: u64, d: u64, loss: f64) -> RunRecord {
        RunRecord::new(
            DatasetId::new("a").unwrap(),
            n,
            d,
            MetricId::train("loss").unwrap(),
            loss,
            None,
        )
        .unwrap()
    }

    #[test]
    fn flops_examples() {
        assert_eq!(flops_of(100_000_000, 2_000_000_000), 1.2e18);
        assert_eq!(flops_of(1, 1), 6.0);
        let d = (1e21f64 / (6.0 * 3.3e9)).round() as u64;
        let c = flops_of(3_300_000_000, d);
        assert!((c / 1e21 - 1.0).abs() < 1e-9, "{c}");
    }

    #[test]
    fn flops_is_exact_below_2_52() {
        let a = (1u64 << 26) - 3;
        let b = (1u64 << 24) + 7;
        assert_eq!(flops_of(a, b), flops_of(b, a));
        assert_eq!(flops_of(a, b) as u128, 6 * a as u128 * b as u128);
    }

    #[test]
    fn pair_drops_unmatched_keys() {
        let xs = vec![
            rec(100_000_000, 2_000_000_000, 3.0),
            rec(200_000_000, 4_000_000_000, 2.8),
        ];
        let ys = vec![rec(100_000_000, 2_000_000_000, 2.5)];
        let pairs = pair_records(&xs, &ys).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].n_params, pairs[0].n_tokens), (100_000_000, 2_000_000_000));
        assert_eq!((pairs[0].loss_x, pairs[0].loss_y), (3.0, 2.5));
    }

    #[test]
    fn pairing_with_self_is_identity() {
        let xs: Vec<_> = (1..=5).map(|i| rec(i * 10, i * 200, 4.0 - i as f64 * 0.1)).collect();
        for p in pair_records(&xs, &xs).unwrap() {
            assert_eq!(p.loss_x, p.loss_y);
        }
    }

    #[test]
    fn grid_minus_three_keys_gives_85_pairs() {
        let grid: Vec<_> = (0..8u64)
            .flat_map(|c| (0..11u64).map(move |m| (c, m)))
            .map(|(c, m)| rec(1_000 + m, 50_000 + c, 3.0))
            .collect();
        assert_eq!(grid.len(), 88);
        let mut fewer = grid.clone();
        fewer.remove(70);
        fewer.remove(30);
        fewer.remove(2);
        assert_eq!(pair_records(&grid, &fewer).unwrap().len(), 85);
    }

    #[test]
    fn duplicate_key_is_reported() {
        let xs = vec![rec(10, 20, 3.0), rec(10, 20, 2.9)];
        let err = pair_records(&xs, &xs).unwrap_err();
        assert!(err.to_string().contains("(10, 20)"), "{err}");
    }

    #[test]
    fn rejects_nonpositive_loss() {
        let r = RunRecord::new(
            DatasetId::new("a").unwrap(),
            1,
            1,
            MetricId::train("loss").unwrap(),
            0.0,
            None,
        );
        assert!(r.is_err());
        assert!(DatasetId::new("   ").is_err());
    }

    #[test]
    fn explicit_flops_are_honored() {
        let mut r = rec(10, 10, 1.0);
        assert_eq!(r.flops(), 600.0);
        r.flops = Some(750.0);
        assert_eq!(r.flops(), 750.0);
    }
}
