use losslaw::lawfit::{fit_law, predict_loss, FitConfig, LawForm, ScalingLaw};
use losslaw::linmodel::{delta_closed, simulate_sweep, LinSimConfig};
use losslaw::losslink::{
    apply_link, compose_links, estimate_conditional_entropy, fit_link, translate_law, Endpoint, LinkKind, LossLink,
    ShiftY,
};
use losslaw::records::{pair_records, DatasetId, MetricId, RunKey, RunRecord};
use losslaw::synth::{TwinWorld, WorldRecords};
use losslaw::workflows::{
    predict_large_test, relative_error, translate_law_scenario, LargeSource, LargeTestPredictor, PredictMethod,
    ScenarioSpec,
};

fn translation_spec(world: &TwinWorld, grid: &WorldRecords, small_keys: &[RunKey]) -> ScenarioSpec {
    ScenarioSpec {
        source_runs: grid.source_train.clone(),
        target_runs_small: grid
            .target_train
            .iter()
            .filter(|r| small_keys.contains(&r.key()))
            .cloned()
            .collect(),
        target_runs_eval: grid.target_train.clone(),
        train_metric: world.train_metric.clone(),
        test_metric: None,
    }
}

#[test]
fn noiseless_translation_matches_skyline() {
    let w = TwinWorld::published();
    let grid = w.observe(&w.standard_keys().unwrap(), 0.0, 0).unwrap();
    let spec = translation_spec(&w, &grid, &w.translation_keys().unwrap());
    let out = translate_law_scenario(&spec, &FitConfig::default()).unwrap();
    assert!((out.scores.translated - 1.0).abs() <= 1e-6, "{:?}", out.scores);
    let skyline = out.skyline.as_ref().expect("88 eval runs form a full grid");
    for r in &spec.target_runs_eval {
        let t = predict_loss(&out.translated, r.n_params, r.n_tokens).unwrap();
        let s = predict_loss(skyline, r.n_params, r.n_tokens).unwrap();
        assert!(relative_error(t, s).unwrap() <= 1e-8, "{:?}: {t} vs {s}", r.key());
    }
    assert!(out.scores.baseline.unwrap() <= out.scores.translated);
}

#[test]
fn single_size_subset_still_translates() {
    let w = TwinWorld::published();
    let mut keys = w.standard_keys().unwrap();
    let small: Vec<RunKey> = [2e9, 3e9, 5e9, 8e9, 1.3e10, 2e10, 3e10, 5e10]
        .iter()
        .map(|&d| (100_000_000, d as u64))
        .collect();
    keys.extend(&small);
    let grid = w.observe(&keys, 0.0, 0).unwrap();
    let mut spec = translation_spec(&w, &grid, &small);
    spec.target_runs_eval.retain(|r| !small.contains(&r.key()));
    let out = translate_law_scenario(&spec, &FitConfig::default()).unwrap();
    assert!(out.baseline.is_err(), "{:?}", out.baseline);
    assert_eq!(out.scores.baseline, None);
    assert!(out.scores.translated > 0.999999, "{:?}", out.scores);
}

fn prediction_world(sigma: f64, seed: u64, target_keys: &[RunKey]) -> (ScenarioSpec, LargeSource, f64) {
    let w = TwinWorld::published();
    let large = w.large_key().unwrap();
    let mut keys = w.sparse_keys().unwrap();
    keys.push(large);
    let obs = w.observe(&keys, sigma, seed).unwrap();
    let not_large = |r: &&RunRecord| r.key() != large;
    let is_target = |r: &&RunRecord| target_keys.contains(&r.key());
    let spec = ScenarioSpec {
        source_runs: obs
            .source_train
            .iter()
            .chain(&obs.source_test)
            .filter(not_large)
            .cloned()
            .collect(),
        target_runs_small: obs
            .target_train
            .iter()
            .chain(&obs.target_test)
            .filter(is_target)
            .cloned()
            .collect(),
        target_runs_eval: Vec::new(),
        train_metric: w.train_metric.clone(),
        test_metric: Some(w.test_metric.clone()),
    };
    let find = |rs: &[RunRecord]| rs.iter().find(|r| r.key() == large).unwrap().clone();
    let source = LargeSource {
        train: find(&obs.source_train),
        test: find(&obs.source_test),
    };
    (spec, source, find(&obs.target_test).loss)
}

#[test]
fn exact_world_predictions() {
    let w = TwinWorld::published();
    let cfg = FitConfig::default();
    let (spec, large, actual) = prediction_world(0.0, 0, &w.optimal_keys().unwrap());
    let p = LargeTestPredictor::new(&spec, &large, &cfg).unwrap();
    assert_eq!(p.predict(PredictMethod::Identity).unwrap(), large.test.loss);
    let t2t = p.predict(PredictMethod::TestToTest).unwrap();
    assert!(relative_error(t2t, actual).unwrap() <= 1e-8, "{t2t} vs {actual}");
    let general = p.predict(PredictMethod::GeneralTrainToTest).unwrap();
    assert!(relative_error(general, actual).unwrap() < relative_error(large.test.loss, actual).unwrap());
}

#[test]
fn independent_law_is_exact_on_law_generated_data() {
    let w = TwinWorld::published();
    let (spec, large, actual) = prediction_world(0.0, 0, &w.sparse_keys().unwrap());
    let pred = predict_large_test(&spec, &large, PredictMethod::IndepScalingLaw, &FitConfig::default()).unwrap();
    assert!(relative_error(pred, actual).unwrap() <= 1e-6, "{pred} vs {actual}");
}

#[test]
fn predictions_are_deterministic() {
    let w = TwinWorld::published();
    let cfg = FitConfig::default();
    let run = || {
        let (spec, large, _) = prediction_world(0.01, 11, &w.optimal_keys().unwrap());
        let p = LargeTestPredictor::new(&spec, &large, &cfg).unwrap();
        PredictMethod::ALL.map(|m| p.predict(m).ok().map(f64::to_bits))
    };
    assert_eq!(run(), run());
}

#[test]
fn chained_train_links_match_composition() {
    // (0,0) -> (1,1) -> (n,1): train-to-train then a target-model train-to-test link
    let w = TwinWorld::published();
    let target_test = Endpoint::new(w.target.clone(), w.test_metric.clone());
    let second = LossLink {
        kind: LinkKind::TrainToTest,
        k: 1.3,
        kappa: 0.9,
        shift_x: w.train_link.shift_y,
        shift_y: 2.0,
        shift_y_fitted_free: false,
        source: w.train_link.target.clone(),
        target: target_test.clone(),
    };
    let keys = w.standard_keys().unwrap();
    let obs = w.observe(&keys, 0.0, 0).unwrap();
    let tgt_test: Vec<RunRecord> = obs
        .target_train
        .iter()
        .map(|r| RunRecord {
            metric: w.test_metric.clone(),
            loss: apply_link(&second, r.loss).unwrap(),
            ..r.clone()
        })
        .collect();
    let first = fit_link(
        &pair_records(&obs.source_train, &obs.target_train).unwrap(),
        w.train_link.shift_x,
        ShiftY::Fixed(w.train_link.shift_y),
        LinkKind::TrainToTrain,
        w.train_link.source.clone(),
        w.train_link.target.clone(),
    )
    .unwrap();
    let fitted_second = fit_link(
        &pair_records(&obs.target_train, &tgt_test).unwrap(),
        second.shift_x,
        ShiftY::Fixed(second.shift_y),
        LinkKind::TrainToTest,
        second.source.clone(),
        target_test,
    )
    .unwrap();
    let composed = compose_links(&first, &fitted_second).unwrap();
    for (src, tt) in obs.source_train.iter().zip(&tgt_test) {
        let via = apply_link(&composed, src.loss).unwrap();
        assert!(relative_error(via, tt.loss).unwrap() <= 1e-10, "{:?}", src.key());
    }
    let law = translate_law(&w.source_law, &composed).unwrap();
    for r in &tgt_test {
        let p = predict_loss(&law, r.n_params, r.n_tokens).unwrap();
        assert!(relative_error(p, r.loss).unwrap() <= 1e-10);
    }
}

#[test]
fn conditional_entropy_round_trips() {
    let w = TwinWorld::published();
    let cfg = FitConfig::default();
    let obs = w.observe(&w.sparse_keys().unwrap(), 0.0, 0).unwrap();
    let e = estimate_conditional_entropy(&obs.source_test, &cfg).unwrap();
    assert!((e - 2.12).abs() <= 0.05, "{e}");
    let e_train = estimate_conditional_entropy(&obs.source_train, &cfg).unwrap();
    let law = fit_law(&obs.source_train, LawForm::PaperEq4, &cfg).unwrap();
    assert_eq!(e_train, law.e);

    let zero = ScalingLaw::paper(0.0, 6.68e7, 8.9e8, 0.41, 0.46).unwrap();
    let ds = DatasetId::new("z").unwrap();
    let metric = MetricId::test("x").unwrap();
    let recs: Vec<RunRecord> = w
        .sparse_keys()
        .unwrap()
        .into_iter()
        .map(|(n, d)| {
            RunRecord::new(
                ds.clone(),
                n,
                d,
                metric.clone(),
                predict_loss(&zero, n, d).unwrap(),
                None,
            )
            .unwrap()
        })
        .collect();
    let e0 = estimate_conditional_entropy(&recs, &cfg).unwrap();
    assert!(e0 <= 0.02, "{e0}");
}

#[test]
fn linear_model_losses_for_two_spectra_have_unit_slope() {
    let n = 50;
    let ds = [75, 100, 150, 250, 500, 1000];
    let sweep = |beta: f64| {
        let mut cfg = LinSimConfig::new(4000, n, 1000, beta);
        cfg.seeds = 200;
        simulate_sweep(&cfg, &ds).unwrap()
    };
    let (a, b) = (sweep(1.0), sweep(2.0));
    let x: Vec<f64> = b.iter().map(|r| r.mc_mean.ln()).collect();
    let y: Vec<f64> = a.iter().map(|r| r.mc_mean.ln()).collect();
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let slope = x.iter().zip(&y).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / x.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let intercept = my - slope * mx;
    let expected = (delta_closed(n as f64, 1.0).unwrap() / delta_closed(n as f64, 2.0).unwrap()).ln();
    assert!((slope - 1.0).abs() <= 0.05, "slope {slope}");
    assert!(
        (intercept - expected).abs() <= 0.1,
        "intercept {intercept} vs {expected}"
    );
}
