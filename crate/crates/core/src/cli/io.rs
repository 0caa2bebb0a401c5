//! Run tables (CSV) and JSON documents.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accmap::ErrorMap;
use crate::error::{Error, Result};
use crate::lawfit::ScalingLaw;
use crate::linmodel::LinSimResult;
use crate::losslink::LossLink;
use crate::records::{DatasetId, MetricId, RunRecord, Split};

pub const CSV_HEADER: [&str; 7] = ["dataset", "split", "metric", "n_params", "n_tokens", "flops", "loss"];
pub const SCHEMA_VERSION: u32 = 1;

/// Validated rows of a run CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTable {
    pub records: Vec<RunRecord>,
}

impl RunTable {
    pub fn datasets(&self) -> Vec<DatasetId> {
        let mut out: Vec<DatasetId> = self.records.iter().map(|r| r.train_dataset.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn metrics(&self) -> Vec<MetricId> {
        let mut out: Vec<MetricId> = self.records.iter().map(|r| r.metric.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Records of one dataset and metric; errors name what is available.
    pub fn select(&self, dataset: &str, metric: &MetricId) -> Result<Vec<RunRecord>> {
        if !self.records.iter().any(|r| r.train_dataset.as_str() == dataset) {
            let names: Vec<String> = self.datasets().iter().map(|d| d.to_string()).collect();
            return Err(Error::validation(format!(
                "unknown dataset {dataset:?}; available: {}",
                names.join(", ")
            )));
        }
        let out: Vec<RunRecord> = self
            .records
            .iter()
            .filter(|r| r.train_dataset.as_str() == dataset && &r.metric == metric)
            .cloned()
            .collect();
        if out.is_empty() {
            let names: Vec<String> = self.metrics().iter().map(|m| m.to_string()).collect();
            return Err(Error::validation(format!(
                "no {metric} records for dataset {dataset:?}; metrics in file: {}",
                names.join(", ")
            )));
        }
        Ok(out)
    }
}

fn parse_count(field: &str, what: &str, line: u64) -> Result<u64> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v >= 0.0 && v < 2f64.powi(64) => Ok(v as u64),
        _ => Err(Error::validation(format!(
            "line {line}: {what} {field:?} is not a non-negative integer"
        ))),
    }
}

fn parse_real(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::validation(format!("line {line}: {what} {field:?} is not a number")))
}

/// Parse a run table from CSV text.
pub fn parse_runs(text: &str) -> Result<RunTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::validation(format!("cannot read CSV header: {e}")))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::validation(format!(
            "CSV header must be exactly {:?}, got {:?}",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    let mut seen: HashMap<(DatasetId, MetricId, u64, u64), u64> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::validation(format!("malformed CSV: {e}")))?;
        let line = row.position().map_or(0, |p| p.line());
        let at = |e: Error| match e {
            Error::Validation(msg) if !msg.starts_with("line ") => Error::validation(format!("line {line}: {msg}")),
            other => other,
        };
        let split: Split = row[1].parse().map_err(at)?;
        let flops = match row[5].trim() {
            "" => None,
            f => Some(parse_real(f, "flops", line)?),
        };
        let rec = RunRecord::new(
            DatasetId::new(&row[0]).map_err(at)?,
            parse_count(&row[3], "n_params", line)?,
            parse_count(&row[4], "n_tokens", line)?,
            MetricId::new(&row[2], split).map_err(at)?,
            parse_real(&row[6], "loss", line)?,
            flops,
        )
        .map_err(at)?;
        let key = (
            rec.train_dataset.clone(),
            rec.metric.clone(),
            rec.n_params,
            rec.n_tokens,
        );
        if let Some(first) = seen.insert(key, line) {
            return Err(Error::validation(format!(
                "line {line}: duplicate ({}, {}, N={}, D={}) first seen on line {first}",
                rec.train_dataset, rec.metric, rec.n_params, rec.n_tokens
            )));
        }
        records.push(rec);
    }
    Ok(RunTable { records })
}

/// Read and validate a run CSV.
pub fn ingest(path: &Path) -> Result<RunTable> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
    parse_runs(&text).map_err(|e| match e {
        Error::Validation(msg) => Error::validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Render records as CSV text under the run-table schema.
pub fn runs_to_csv(records: &[RunRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in records {
        let flops = r.flops.map(|f| f.to_string()).unwrap_or_default();
        w.write_record([
            r.train_dataset.as_str(),
            r.metric.split.as_str(),
            &r.metric.name,
            &r.n_params.to_string(),
            &r.n_tokens.to_string(),
            &flops,
            &r.loss.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, inputs: Vec<InputDigest>, config: serde_json::Value) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            inputs,
            config,
        }
    }
}

/// A JSON document body tagged with its kind.
pub trait Payload: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document<T> {
    pub schema_version: u32,
    pub kind: String,
    #[serde(bound(deserialize = "T: DeserializeOwned"))]
    pub body: T,
    pub provenance: Provenance,
}

impl<T: Payload> Document<T> {
    pub fn new(body: T, provenance: Provenance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: T::KIND.to_string(),
            body,
            provenance,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::validation(format!("invalid document: {e}")))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        if doc.kind != T::KIND {
            return Err(Error::validation(format!(
                "expected a {} document, got {:?}",
                T::KIND,
                doc.kind
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
    }
}

/// Parse a payload from either a full document or its bare JSON body.
pub fn parse_body<T: Payload>(text: &str) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::validation(format!("invalid JSON: {e}")))?;
    if value.get("schema_version").is_some() {
        Ok(Document::<T>::from_json(text)?.body)
    } else {
        serde_json::from_value(value).map_err(|e| Error::validation(format!("not a {}: {e}", T::KIND)))
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f =
        fs::File::create(path).map_err(|e| Error::validation(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| Error::validation(format!("cannot write {}: {e}", path.display())))
}

impl Payload for ScalingLaw {
    const KIND: &'static str = "scaling_law";
}

impl Payload for LossLink {
    const KIND: &'static str = "loss_link";
}

impl Payload for ErrorMap {
    const KIND: &'static str = "error_map";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSweep {
    pub rows: Vec<LinSimResult>,
}

impl Payload for SimSweep {
    const KIND: &'static str = "linear_model_sweep";
}

/// Scores of the translate-a-law scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationReport {
    pub source_law: ScalingLaw,
    pub link: LossLink,
    pub translated: ScalingLaw,
    pub baseline: Option<ScalingLaw>,
    pub baseline_error: Option<String>,
    pub skyline: Option<ScalingLaw>,
    pub r2_translated: f64,
    pub r2_baseline: Option<f64>,
    pub r2_skyline: Option<f64>,
}

impl Payload for TranslationReport {
    const KIND: &'static str = "translation_scenario";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodPrediction {
    pub method: String,
    pub prediction: Option<f64>,
    pub relative_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionReport {
    pub n_params: u64,
    pub n_tokens: u64,
    pub actual: Option<f64>,
    pub methods: Vec<MethodPrediction>,
}

impl Payload for PredictionReport {
    const KIND: &'static str = "prediction_scenario";
}
