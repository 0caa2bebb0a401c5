//! The `losslaw` command-line front end.

pub mod io;
pub mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::Error;
use crate::lawfit::{fit_law, r_squared_law, FitConfig, LawForm, ScalingLaw};
use crate::linmodel::{simulate_sweep, LinSimConfig, LinSimResult, Sampling};
use crate::losslink::{
    compose_links, estimate_conditional_entropy, fit_link, translate_law, Endpoint, LinkKind, LossLink, ShiftY,
};
use crate::records::{pair_records, MetricId, RunRecord, Split};
use crate::synth::TwinWorld;
use crate::workflows::{
    relative_error, translate_law_scenario, LargeSource, LargeTestPredictor, PredictMethod, ScenarioSpec,
};
use io::{
    ingest, runs_to_csv, write_file, Document, InputDigest, MethodPrediction, PredictionReport, Provenance, RunTable,
    SimSweep, TranslationReport,
};

pub type LawDocument = Document<ScalingLaw>;
pub type LinkDocument = Document<LossLink>;
pub type SimDocument = Document<SimSweep>;

#[derive(Debug, Parser)]
#[command(name = "losslaw", version, about = "Fit scaling laws and loss-to-loss links")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file for the result document (a directory for `synth`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a scaling law to one dataset's runs.
    FitLaw(FitLawArgs),
    /// Print the parameter table of a saved law.
    ShowLaw { law: PathBuf },
    /// Fit a shifted power law between two paired losses.
    FitLink(FitLinkArgs),
    /// Carry a law through a link.
    Translate {
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        link: PathBuf,
    },
    /// Chain two links.
    Compose {
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
    },
    /// Rehearse translation or large-model prediction from a few target runs.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Monte-Carlo sweep of the sketched linear model against theory.
    Simulate(SimulateArgs),
    /// Write the synthetic twin-dataset world as run tables.
    Synth {
        /// Log-normal noise scale.
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
    },
}

#[derive(Debug, Args)]
pub struct FitLawArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub dataset: String,
    /// `NAME[/SPLIT]`; the split defaults to train.
    #[arg(long, default_value = "loss/train")]
    pub metric: String,
    #[arg(long, value_enum, default_value_t = FormArg::PaperEq4)]
    pub form: FormArg,
    #[arg(long)]
    pub huber_delta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormArg {
    PaperEq4,
    ChinchillaEq1,
}

impl From<FormArg> for LawForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::PaperEq4 => LawForm::PaperEq4,
            FormArg::ChinchillaEq1 => LawForm::ChinchillaEq1,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitLinkArgs {
    #[arg(long)]
    pub runs: PathBuf,
    /// Source loss, `DATASET:NAME/SPLIT`.
    #[arg(long)]
    pub x: String,
    /// Target loss, `DATASET:NAME/SPLIT`.
    #[arg(long)]
    pub y: String,
    /// A number, or `fit` for the entropy of a law fit to the x runs.
    #[arg(long, default_value = "fit")]
    pub shift_x: String,
    /// A number, `fit` for the entropy of a law fit to the y runs, or `free`.
    #[arg(long, default_value = "free")]
    pub shift_y: String,
    /// Defaults to a kind inferred from the endpoints.
    #[arg(long)]
    pub kind: Option<String>,
    /// Also write `x,y,series` rows here.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Translate a source law to a target dataset from a few target runs.
    Translate(TranslateScenarioArgs),
    /// Predict a large target model's test loss by each method.
    Predict(PredictScenarioArgs),
}

#[derive(Debug, Args)]
pub struct TranslateScenarioArgs {
    /// Source grid plus the target runs used for scoring.
    #[arg(long)]
    pub runs: PathBuf,
    /// The few target runs used for fitting.
    #[arg(long)]
    pub small_runs: PathBuf,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value = "loss/train")]
    pub metric: String,
}

#[derive(Debug, Args)]
pub struct PredictScenarioArgs {
    /// Source grid, the large source model, and optionally the large target model.
    #[arg(long)]
    pub runs: PathBuf,
    /// The few target runs used for fitting.
    #[arg(long)]
    pub small_runs: PathBuf,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value = "loss/train")]
    pub train_metric: String,
    #[arg(long)]
    pub test_metric: String,
    /// Size of the large model, `N:D`.
    #[arg(long)]
    pub large: String,
    /// Method to run; repeatable. All methods by default.
    #[arg(long)]
    pub method: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 50_000)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    /// Repeat for a sweep over data sizes.
    #[arg(long, required = true)]
    pub d: Vec<usize>,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 200)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_v: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_w: f64,
    #[arg(long, value_enum, default_value_t = SamplingArg::Gram)]
    pub sampling: SamplingArg,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SamplingArg {
    Gram,
    Explicit,
}

/// Run one command, writing its table to stdout.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let text = execute(&cli)?;
    print!("{text}");
    Ok(())
}

/// Run one command and return the text it prints.
pub fn execute(cli: &Cli) -> anyhow::Result<String> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::FitLaw(a) => fit_law_cmd(a, cli.seed, out),
        Command::ShowLaw { law } => Ok(law_table(&load_law(law)?)),
        Command::FitLink(a) => fit_link_cmd(a, cli.seed, out),
        Command::Translate { law, link } => translate_cmd(law, link, cli.seed, out),
        Command::Compose { first, second } => compose_cmd(first, second, cli.seed, out),
        Command::Scenario(ScenarioCommand::Translate(a)) => scenario_translate_cmd(a, cli.seed, out),
        Command::Scenario(ScenarioCommand::Predict(a)) => scenario_predict_cmd(a, cli.seed, out),
        Command::Simulate(a) => simulate_cmd(a, cli.seed, out),
        Command::Synth { sigma } => synth_cmd(*sigma, cli.seed, out),
    }
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(1, Error::exit_code)
}

fn parse_key(s: &str) -> Result<(u64, u64), Error> {
    let bad = || Error::validation(format!("model size {s:?} must look like N:D"));
    let (n, d) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        n.trim().parse().map_err(|_| bad())?,
        d.trim().parse().map_err(|_| bad())?,
    ))
}

fn infer_kind(x: &Endpoint, y: &Endpoint) -> LinkKind {
    match (x.metric.split, y.metric.split) {
        (Split::Train, Split::Train) if x.dataset != y.dataset => LinkKind::TrainToTrain,
        (Split::Train, Split::Test) if x.dataset == y.dataset => LinkKind::TrainToTest,
        (Split::Test, Split::Test) if x.dataset != y.dataset => LinkKind::TestToTest,
        _ => LinkKind::General,
    }
}

fn fit_config(delta: Option<f64>, max_iters: Option<usize>) -> Result<FitConfig, Error> {
    let mut cfg = FitConfig::default();
    if let Some(d) = delta {
        cfg.huber_delta = d;
    }
    if let Some(m) = max_iters {
        cfg.max_iters = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_law(path: &Path) -> anyhow::Result<ScalingLaw> {
    load_body(path)
}

fn load_link(path: &Path) -> anyhow::Result<LossLink> {
    load_body(path)
}

/// Accept either a full document or the bare serialized object.
fn load_body<T: io::Payload>(path: &Path) -> anyhow::Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(io::parse_body(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))?)
}

fn save<T: io::Payload>(out: Option<&Path>, doc: &Document<T>) -> anyhow::Result<()> {
    if let Some(path) = out {
        doc.save(path)?;
    }
    Ok(())
}

fn law_table(law: &ScalingLaw) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<14} {:>12} {:>12} {:>8} {:>8} {:>8} {:>8}",
        "form", "A", "B", "E", "alpha", "beta", "a"
    )
    .unwrap();
    writeln!(
        s,
        "{:<14} {:>12.4e} {:>12.4e} {:>8.4} {:>8.4} {:>8.4} {:>8.5}",
        law.form.as_str(),
        law.a,
        law.b,
        law.e,
        law.alpha,
        law.beta,
        law.compute_exponent()
    )
    .unwrap();
    s
}

fn link_table(link: &LossLink) -> String {
    let mut s = String::new();
    let kind = serde_json::to_value(link.kind).expect("unit enum");
    writeln!(
        s,
        "{} -> {} ({})",
        link.source,
        link.target,
        kind.as_str().unwrap_or_default()
    )
    .unwrap();
    writeln!(
        s,
        "{:>10} {:>10} {:>10} {:>10} {:>10}",
        "K", "kappa", "shift_x", "shift_y", "free"
    )
    .unwrap();
    writeln!(
        s,
        "{:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10}",
        link.k, link.kappa, link.shift_x, link.shift_y, link.shift_y_fitted_free
    )
    .unwrap();
    s
}

fn fit_law_cmd(a: &FitLawArgs, seed: u64, out: Option<&Path>) -> anyhow::Result<String> {
    let table = ingest(&a.runs)?;
    let metric = a.metric.parse::<MetricId>()?;
    let records = table.select(&a.dataset, &metric)?;
    let cfg = fit_config(a.huber_delta, a.max_iters)?;
    let form: LawForm = a.form.into();
    let law = fit_law(&records, form, &cfg)?;
    let r2 = r_squared_law(&law, &records)?;
    let config = json!({ "dataset": a.dataset, "metric": metric, "form": form, "fit": cfg });
    let doc = Document::new(
        law,
        Provenance::new("fit-law", seed, vec![InputDigest::of(&a.runs)?], config),
    );
    save(out, &doc)?;
    Ok(format!(
        "{}{} runs, R^2 = {r2:.6}\n",
        law_table(&doc.body),
        records.len()
    ))
}

fn resolve_shift(spec: &str, records: &[RunRecord], cfg: &FitConfig) -> anyhow::Result<Option<f64>> {
    match spec {
        "fit" => Ok(Some(estimate_conditional_entropy(records, cfg)?)),
        "free" => Ok(None),
        v => Ok(Some(v.parse::<f64>().map_err(|_| {
            Error::validation(format!("shift {v:?} must be a number, \"fit\" or \"free\""))
        })?)),
    }
}

fn fit_link_cmd(a: &FitLinkArgs, seed: u64, out: Option<&Path>) -> anyhow::Result<String> {
    let table = ingest(&a.runs)?;
    let x = a.x.parse::<Endpoint>()?;
    let y = a.y.parse::<Endpoint>()?;
    let xs = table.select(x.dataset.as_str(), &x.metric)?;
    let ys = table.select(y.dataset.as_str(), &y.metric)?;
    let pairs = pair_records(&xs, &ys)?;
    let cfg = FitConfig::default();
    let shift_x = resolve_shift(&a.shift_x, &xs, &cfg)?
        .ok_or_else(|| Error::validation("shift_x cannot be free; give a number or \"fit\""))?;
    let shift_y = match resolve_shift(&a.shift_y, &ys, &cfg)? {
        Some(v) => ShiftY::Fixed(v),
        None => ShiftY::Free,
    };
    let kind = match &a.kind {
        Some(k) => k.parse()?,
        None => infer_kind(&x, &y),
    };
    let link = fit_link(&pairs, shift_x, shift_y, kind, x, y)?;
    if let Some(path) = &a.plot {
        let csv = plot::series_csv(&plot::link_series(&link, &pairs)?)?;
        write_file(path, csv.as_bytes())?;
    }
    let config = json!({
        "x": a.x, "y": a.y, "shift_x": a.shift_x, "shift_y": a.shift_y, "kind": kind, "pairs": pairs.len(),
    });
    let doc = Document::new(
        link,
        Provenance::new("fit-link", seed, vec![InputDigest::of(&a.runs)?], config),
    );
    save(out, &doc)?;
    Ok(format!("{}{} pairs\n", link_table(&doc.body), pairs.len()))
}

fn translate_cmd(law: &Path, link: &Path, seed: u64, out: Option<&Path>) -> anyhow::Result<String> {
    let translated = translate_law(&load_law(law)?, &load_link(link)?)?;
    let inputs = vec![InputDigest::of(law)?, InputDigest::of(link)?];
    let doc = Document::new(
        translated,
        Provenance::new("translate", seed, inputs, serde_json::Value::Null),
    );
    save(out, &doc)?;
    Ok(law_table(&doc.body))
}

fn compose_cmd(first: &Path, second: &Path, seed: u64, out: Option<&Path>) -> anyhow::Result<String> {
    let link = compose_links(&load_link(first)?, &load_link(second)?)?;
    let inputs = vec![InputDigest::of(first)?, InputDigest::of(second)?];
    let doc = Document::new(link, Provenance::new("compose", seed, inputs, serde_json::Value::Null));
    save(out, &doc)?;
    Ok(link_table(&doc.body))
}

fn dataset_records(table: &RunTable, dataset: &str, what: &str) -> anyhow::Result<Vec<RunRecord>> {
    let out: Vec<RunRecord> = table
        .records
        .iter()
        .filter(|r| r.train_dataset.as_str() == dataset)
        .cloned()
        .collect();
    if out.is_empty() {
        let names: Vec<String> = table.datasets().iter().map(|d| d.to_string()).collect();
        bail!(Error::validation(format!(
            "{what} has no runs for dataset {dataset:?}; available: {}",
            names.join(", ")
        )));
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn scenario_translate_cmd(a: &TranslateScenarioArgs, seed: u64, out: Option<&Path>) -> anyhow::Result<String> {
    let runs = ingest(&a.runs)?;
    let small = ingest(&a.small_runs)?;
    let spec = ScenarioSpec {
        source_runs: dataset_records(&runs, &a.source, "--runs")?,
        target_runs_small: dataset_records(&small, &a.target, "--small-runs")?,
        target_runs_eval: dataset_records(&runs, &a.target, "--runs")?,
        train_metric: a.metric.parse::<MetricId>()?,
        test_metric: None,
    };
    let outcome = translate_law_scenario(&spec, &FitConfig::default())?;
    let s = outcome.scores;
    let mut text = String::new();
    writeln!(
        text,
        "R^2 on {} {} runs",
        spec.target_runs_eval
            .iter()
            .filter(|r| r.metric == spec.train_metric)
            .count(),
        a.target
    )?;
    writeln!(text, "{:>12} {:>12} {:>12}", "translated", "baseline", "skyline")?;
    writeln!(
        text,
        "{:>12.6} {:>12} {:>12}",
        s.translated,
        fmt_opt(s.baseline),
        fmt_opt(s.skyline)
    )?;
    let (baseline, baseline_error) = match outcome.baseline {
        Ok(law) => (Some(law), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = TranslationReport {
        source_law: outcome.source_law,
        link: outcome.link,
        translated: outcome.translated,
        baseline,
        baseline_error,
        skyline: outcome.skyline,
        r2_translated: s.translated,
        r2_baseline: s.baseline,
        r2_skyline: s.skyline,
    };
    let config = json!({ "source": a.source, "target": a.target, "metric": spec.train_metric });
    let inputs = vec![InputDigest::of(&a.runs)?, InputDigest::of(&a.small_runs)?];
    save(
        out,
        &Document::new(report, Provenance::new("scenario translate", seed, inputs, config)),
    )?;
    Ok(text)
}

fn find_record(records: &[RunRecord], key: (u64, u64), metric: &MetricId) -> Option<RunRecord> {
    records.iter().find(|r| r.key() == key && &r.metric == metric).cloned()
}

fn scenario_predict_cmd(a: &PredictScenarioArgs, seed: u64, out: Option<&Path>) -> anyhow::Result<String> {
    let runs = ingest(&a.runs)?;
    let small = ingest(&a.small_runs)?;
    let train_metric = a.train_metric.parse::<MetricId>()?;
    let test_metric = a.test_metric.parse::<MetricId>()?;
    let key = parse_key(&a.large)?;
    let source_all = dataset_records(&runs, &a.source, "--runs")?;
    let large = LargeSource {
        train: find_record(&source_all, key, &train_metric).ok_or_else(|| {
            Error::validation(format!("--runs has no {} {train_metric} run at {}", a.source, a.large))
        })?,
        test: find_record(&source_all, key, &test_metric)
            .ok_or_else(|| Error::validation(format!("--runs has no {} {test_metric} run at {}", a.source, a.large)))?,
    };
    let actual = runs
        .records
        .iter()
        .find(|r| r.train_dataset.as_str() == a.target && r.key() == key && r.metric == test_metric)
        .map(|r| r.loss);
    let spec = ScenarioSpec {
        source_runs: source_all.into_iter().filter(|r| r.key() != key).collect(),
        target_runs_small: dataset_records(&small, &a.target, "--small-runs")?,
        target_runs_eval: Vec::new(),
        train_metric: train_metric.clone(),
        test_metric: Some(test_metric.clone()),
    };
    let methods: Vec<PredictMethod> = if a.method.is_empty() {
        PredictMethod::ALL.to_vec()
    } else {
        a.method.iter().map(|m| m.parse()).collect::<Result<_, _>>()?
    };
    let cfg = FitConfig::default();
    let predictor = LargeTestPredictor::new(&spec, &large, &cfg)?;

    let mut rows = Vec::new();
    for m in methods {
        let row = match predictor.predict(m) {
            Ok(p) => MethodPrediction {
                method: m.as_str().to_string(),
                prediction: Some(p),
                relative_error: actual.map(|t| relative_error(p, t)).transpose()?,
                error: None,
            },
            Err(e) => MethodPrediction {
                method: m.as_str().to_string(),
                prediction: None,
                relative_error: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }

    let mut text = String::new();
    let header: Vec<String> = rows.iter().map(|r| format!("{:>22}", r.method)).collect();
    writeln!(text, "{:<14}{}", "", header.join(""))?;
    let preds: Vec<String> = rows.iter().map(|r| format!("{:>22}", fmt_opt(r.prediction))).collect();
    writeln!(text, "{:<14}{}", "prediction", preds.join(""))?;
    if actual.is_some() {
        let errs: Vec<String> = rows
            .iter()
            .map(|r| format!("{:>22}", fmt_opt(r.relative_error)))
            .collect();
        writeln!(text, "{:<14}{}", "rel. error", errs.join(""))?;
    }
    for r in rows.iter().filter(|r| r.error.is_some()) {
        writeln!(text, "{}: {}", r.method, r.error.as_deref().unwrap_or_default())?;
    }
    let report = PredictionReport {
        n_params: key.0,
        n_tokens: key.1,
        actual,
        methods: rows,
    };
    let config = json!({
        "source": a.source, "target": a.target, "train_metric": train_metric, "test_metric": test_metric, "large": a.large,
    });
    let inputs = vec![InputDigest::of(&a.runs)?, InputDigest::of(&a.small_runs)?];
    save(
        out,
        &Document::new(report, Provenance::new("scenario predict", seed, inputs, config)),
    )?;
    Ok(text)
}

fn sim_table(rows: &[LinSimResult]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>8} {:>6} {:>7} {:>5} {:>12} {:>12} {:>12} {:>15}",
        "M", "N", "D", "beta", "mc_mean", "mc_stderr", "theory", "theory_finite_m"
    )
    .unwrap();
    for r in rows {
        writeln!(
            s,
            "{:>8} {:>6} {:>7} {:>5} {:>12.6} {:>12.6} {:>12.6} {:>15.6}",
            r.m, r.n, r.d, r.beta, r.mc_mean, r.mc_stderr, r.theory, r.theory_finite_m
        )
        .unwrap();
    }
    s
}

fn simulate_cmd(a: &SimulateArgs, seed: u64, out: Option<&Path>) -> anyhow::Result<String> {
    let mut cfg = LinSimConfig::new(a.m, a.n, a.d.iter().copied().max().unwrap_or(0), a.beta);
    cfg.seeds = a.seeds;
    cfg.sigma_v = a.sigma_v;
    cfg.sigma_w = a.sigma_w;
    cfg.base_seed = seed;
    cfg.sampling = match a.sampling {
        SamplingArg::Gram => Sampling::Gram,
        SamplingArg::Explicit => Sampling::Explicit,
    };
    let rows = simulate_sweep(&cfg, &a.d)?;
    if let Some(path) = &a.plot {
        write_file(path, plot::series_csv(&plot::sim_series(&rows)?)?.as_bytes())?;
    }
    let text = sim_table(&rows);
    let config = json!({ "simulation": cfg, "D": a.d });
    save(
        out,
        &Document::new(SimSweep { rows }, Provenance::new("simulate", seed, vec![], config)),
    )?;
    Ok(text)
}

fn synth_cmd(sigma: f64, seed: u64, out: Option<&Path>) -> anyhow::Result<String> {
    let dir = out.ok_or_else(|| anyhow!(Error::validation("synth needs --out DIR")))?;
    if !(sigma.is_finite() && sigma >= 0.0) {
        bail!(Error::validation(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let w = TwinWorld::published();
    let grid = w.observe(&w.standard_keys()?, sigma, seed)?;

    let small_keys = w.translation_keys()?;
    let small: Vec<RunRecord> = grid
        .target_train
        .iter()
        .filter(|r| small_keys.contains(&r.key()))
        .cloned()
        .collect();

    let large_key = w.large_key()?;
    let mut keys = w.sparse_keys()?;
    keys.push(large_key);
    let sparse = w.observe(&keys, sigma, seed.wrapping_add(1))?;
    let mut predict = sparse.source_train.clone();
    predict.extend(sparse.source_test.iter().cloned());
    predict.extend(sparse.target_test.iter().filter(|r| r.key() == large_key).cloned());
    let optimal = w.optimal_keys()?;
    let in_optimal = |r: &&RunRecord| optimal.contains(&r.key());
    let predict_small: Vec<RunRecord> = sparse
        .target_train
        .iter()
        .filter(in_optimal)
        .chain(sparse.target_test.iter().filter(in_optimal))
        .cloned()
        .collect();

    let files: [(&str, Vec<RunRecord>); 4] = [
        ("twin_world.csv", grid.all()),
        ("twin_world_small.csv", small),
        ("twin_world_predict.csv", predict),
        ("twin_world_predict_small.csv", predict_small),
    ];
    let mut text = String::new();
    for (name, records) in &files {
        write_file(&dir.join(name), runs_to_csv(records).as_bytes())?;
        writeln!(text, "{name}: {} runs", records.len())?;
    }
    let config = json!({ "sigma": sigma });
    let law = Document::new(
        w.source_law.clone(),
        Provenance::new("synth", seed, vec![], config.clone()),
    );
    law.save(&dir.join("source_law.json"))?;
    let link = Document::new(w.train_link.clone(), Provenance::new("synth", seed, vec![], config));
    link.save(&dir.join("train_link.json"))?;
    writeln!(text, "source_law.json, train_link.json")?;
    writeln!(text, "large model N:D = {}:{}", large_key.0, large_key.1)?;
    Ok(text)
}
