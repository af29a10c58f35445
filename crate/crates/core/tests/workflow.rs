mod common;

use rand::seq::SliceRandom;
use tempnet::dataset::Split;
use tempnet::eval::{compare_runs, evaluate, metric_math, ClipRecord, EvalReport};
use tempnet::pipeline::{load_split, Sample};
use tempnet::train::{train, TrainOptions};
use tempnet::{Config, ParamStore, TempNet};

fn tiny_samples(n: usize, seed: u64) -> (Config, Vec<Sample>, Vec<Sample>, Vec<Sample>) {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::tiny_dataset(dir.path(), n, seed);
    let cfg = Config::parse(common::TINY_CONFIG).unwrap();
    let load = |s| load_split(&manifest, s, &cfg, 1).unwrap();
    let (tr, va, te) = (load(Split::Train), load(Split::Val), load(Split::Test));
    (cfg, tr, va, te)
}

#[test]
fn table_row_metrics() {
    let m = metric_math(39, 41, 9, 11);
    assert!((m.accuracy.unwrap() - 0.80).abs() < 0.005);
    assert!((m.precision.unwrap() - 0.8125).abs() < 1e-12);
    assert!((m.f1.unwrap() - 0.795918).abs() < 1e-6);
    let none = metric_math(0, 5, 0, 5);
    assert_eq!(none.precision, None);
    assert_eq!(none.f1, None);
    assert_eq!(none.accuracy, Some(0.5));
}

fn records(n: usize) -> Vec<ClipRecord> {
    (0..n)
        .map(|i| ClipRecord { id: format!("clip_{i:03}"), label: i % 3 == 0, probability: (i as f64 * 0.37) % 1.0 })
        .collect()
}

#[test]
fn report_is_invariant_to_clip_order() {
    let base = EvalReport::from_records(records(40), 0.5).unwrap();
    let mut r = common::rng(8);
    for _ in 0..10 {
        let mut shuffled = records(40);
        shuffled.shuffle(&mut r);
        assert_eq!(EvalReport::from_records(shuffled, 0.5).unwrap().to_text(), base.to_text());
    }
}

#[test]
fn perfect_predictor_scores_one() {
    let recs: Vec<ClipRecord> =
        (0..10).map(|i| ClipRecord { id: i.to_string(), label: i % 2 == 0, probability: if i % 2 == 0 { 0.9 } else { 0.1 } }).collect();
    let rep = EvalReport::from_records(recs, 0.5).unwrap();
    assert_eq!(rep.metrics.accuracy, Some(1.0));
    assert_eq!(rep.metrics.f1, Some(1.0));
    let text = rep.to_text();
    for key in ["accuracy", "precision", "bce", "fn", "fp", "f1"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{key} = "))), "{key}");
    }
}

#[test]
fn comparison_marks_winners_and_ties() {
    let a = EvalReport::from_records(records(30), 0.5).unwrap();
    let b = EvalReport::from_records(records(30), 0.3).unwrap();
    let c = compare_runs(&[("a".into(), a.clone()), ("b".into(), b.clone()), ("a2".into(), a.clone())]);
    for col in 0..6 {
        assert_eq!(c.best[0][col], c.best[2][col], "ties mark every tied entry");
        assert!(c.best.iter().any(|row| row[col]));
    }
    let single = compare_runs(&[("only".into(), a)]);
    assert!(single.best[0].iter().enumerate().all(|(col, &b)| b || single.values[0][col].is_none()));
    assert!(c.render().contains('*'));
}

#[test]
fn golden_report_is_byte_stable() {
    let (cfg, _, _, test) = tiny_samples(60, 2);
    let (net, params) = TempNet::build::<f32>(cfg.net.clone(), 3).unwrap();
    let text = evaluate(&net, &params, &test, 0.5, 1).unwrap().to_text();
    let golden = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/tiny_report.txt");
    if std::env::var_os("TEMPNET_BLESS").is_some() {
        std::fs::write(&golden, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(&golden).unwrap());
    // the worker count must not change a byte
    assert_eq!(evaluate(&net, &params, &test, 0.5, 3).unwrap().to_text(), text);
}

#[test]
fn checkpoints_round_trip() {
    let (cfg, ..) = tiny_samples(12, 4);
    let (_, mut params) = TempNet::build::<f32>(cfg.net.clone(), 5).unwrap();
    params.set_metadata("config", cfg.to_text());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tnwt");
    params.save(&path).unwrap();
    let back = ParamStore::<f32>::load(&path).unwrap();
    assert_eq!(back.to_bytes(), params.to_bytes());
    assert_eq!(Config::parse(back.metadata("config").unwrap()).unwrap(), cfg);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    assert!(ParamStore::<f32>::from_bytes(&bytes).is_err());
}

#[test]
fn training_is_deterministic_across_runs_and_threads() {
    let (cfg, tr, va, _) = tiny_samples(24, 6);
    let run = |threads| {
        let (net, init) = TempNet::build::<f32>(cfg.net.clone(), cfg.train.seed).unwrap();
        let opts = TrainOptions { threads, target_val_accuracy: None };
        let out = train(&net, init, &tr, &va, &cfg.train, &opts, |_| {}).unwrap();
        (out.history.to_text(), out.params.to_bytes())
    };
    let first = run(1);
    assert_eq!(run(1), first);
    assert_eq!(run(2), first);
}

#[test]
fn training_reduces_loss_on_a_fixed_set() {
    let (mut cfg, tr, _, _) = tiny_samples(24, 7);
    cfg.train.learning_rate = 3e-3;
    cfg.train.epochs = 15;
    cfg.train.patience = 15;
    let (net, init) = TempNet::build::<f32>(cfg.net.clone(), cfg.train.seed).unwrap();
    let out = train(&net, init, &tr, &tr, &cfg.train, &TrainOptions::default(), |_| {}).unwrap();
    let h = &out.history.epochs;
    assert!(h.last().unwrap().train_bce < h[0].train_bce, "{}", out.history.to_text());
    assert!(out.history.best().unwrap().val_bce < h[0].val_bce);
}
