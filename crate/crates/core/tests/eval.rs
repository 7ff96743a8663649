mod common;

use cnnsa_core::data::{split, LabelSchema, LabeledCorpus};
use cnnsa_core::embeddings::EmbeddingTable;
use cnnsa_core::eval::{evaluate, grid_search, GridAxes, VectorVariant};
use cnnsa_core::nn::{ClassifierHead, ConvFilter, ModelConfig, ModelParams, Nonlinearity};
use cnnsa_core::training::{train, TrainConfig};
use cnnsa_core::Error;

fn cue_fixture() -> (LabeledCorpus, EmbeddingTable) {
    let mut table = EmbeddingTable::new(2, 0).unwrap();
    table.insert("bad", &[1.0, 0.0]).unwrap();
    table.insert("good", &[0.0, 1.0]).unwrap();
    table.insert("the", &[0.0, 0.0]).unwrap();
    let docs = vec![
        (vec!["the", "bad"], 0),
        (vec!["bad", "the", "the"], 0),
        (vec!["good"], 1),
        (vec!["the", "good", "the"], 1),
    ];
    (LabeledCorpus::from_tokens(LabelSchema::Binary, docs).unwrap(), table)
}

/// Two height-1 filters that fire on "bad" and "good" respectively.
fn perfect_model() -> ModelParams {
    let filters = vec![
        ConvFilter::new(1, 2, vec![1.0, 0.0], 0.0).unwrap(),
        ConvFilter::new(1, 2, vec![0.0, 1.0], 0.0).unwrap(),
    ];
    let head = ClassifierHead::new(2, 2, vec![40.0, -40.0, -40.0, 40.0], vec![0.0, 0.0]).unwrap();
    ModelParams::new(filters, head, Nonlinearity::Relu, 0.5).unwrap()
}

#[test]
fn perfect_model_scores_one() {
    let (corpus, table) = cue_fixture();
    let r = evaluate(&perfect_model(), &corpus, &table).unwrap();
    assert_eq!(r.auc, 1.0);
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 2]]);
    assert!(r.to_string().starts_with("auc=1.000000\n"));
}

#[test]
fn zero_model_scores_chance() {
    let (corpus, table) = cue_fixture();
    let model = ModelParams::zeros(&ModelConfig::default(), 2, 2).unwrap();
    let r = evaluate(&model, &corpus, &table).unwrap();
    assert_eq!(r.auc, 0.5);
    assert!(r.scored.probs.iter().all(|p| p.as_slice() == [0.5, 0.5]));
}

#[test]
fn schema_mismatch_is_rejected() {
    let (corpus, table) = cue_fixture();
    let model = ModelParams::zeros(&ModelConfig::default(), 2, 5).unwrap();
    assert!(matches!(evaluate(&model, &corpus, &table), Err(Error::Config(_))));
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            per_height: 6,
            ..ModelConfig::default()
        },
        max_epochs: 15,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn one_cell_grid_matches_plain_run() {
    let (corpus, table) = common::lexicon_corpus(100, 5, 8, 21);
    let axes = GridAxes {
        heights: vec![vec![2]],
        vectors: vec![VectorVariant { label: "v".into(), table: table.clone() }],
    };
    let report = grid_search(&corpus, &axes, &quick_config(), 0.2, 4).unwrap();
    assert_eq!(report.cells.len(), 1);

    let (tr, ev) = split(&corpus, 0.2, 4).unwrap();
    let config = TrainConfig {
        model: ModelConfig { heights: vec![2], ..quick_config().model },
        ..quick_config()
    };
    let outcome = train(&tr, &config, &table).unwrap();
    let plain = evaluate(&outcome.model, &ev, &table).unwrap();
    let cell = report.cells[0].result.as_ref().unwrap();
    assert_eq!(cell.auc, plain.auc);
    assert_eq!(cell.best_epoch, outcome.history.best_epoch());
}

#[test]
fn grid_is_deterministic_and_best_is_max() {
    let (corpus, table) = common::lexicon_corpus(100, 5, 8, 22);
    let other = common::random_table(table.words(), 8, 99);
    let axes = GridAxes {
        heights: vec![vec![2], vec![3]],
        vectors: vec![
            VectorVariant { label: "a".into(), table },
            VectorVariant { label: "b".into(), table: other },
        ],
    };
    let first = grid_search(&corpus, &axes, &quick_config(), 0.2, 5).unwrap();
    let second = grid_search(&corpus, &axes, &quick_config(), 0.2, 5).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.cells.len(), 4);
    let max = first.cells.iter().filter_map(|c| c.auc()).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(first.best().unwrap().auc(), Some(max));
    assert_eq!(first.cell(1, 0).heights, vec![3]);
    assert_eq!(first.cell(1, 0).vectors, "a");

    let text = first.render_text();
    assert!(text.lines().nth(1).unwrap().starts_with("filter size"));
    assert_eq!(first.to_csv().lines().count(), 5);
}

#[test]
fn failed_cell_is_recorded() {
    let (corpus, table) = common::lexicon_corpus(60, 5, 8, 23);
    let axes = GridAxes {
        // A zero filter height fails model validation.
        heights: vec![vec![2], vec![0]],
        vectors: vec![VectorVariant { label: "v".into(), table }],
    };
    let report = grid_search(&corpus, &axes, &quick_config(), 0.2, 6).unwrap();
    assert_eq!(report.failures(), 1);
    assert!(report.cells[1].result.is_err());
    assert!(report.best().is_some());
}

#[test]
fn height_two_beats_height_three_on_bigram_cues() {
    let (corpus, table) = common::bigram_corpus(240, 20, 13);
    let axes = GridAxes {
        heights: vec![vec![2], vec![3]],
        vectors: vec![VectorVariant { label: "v".into(), table }],
    };
    let base = TrainConfig {
        model: ModelConfig { per_height: 20, ..ModelConfig::default() },
        ..TrainConfig::default()
    };
    let report = grid_search(&corpus, &axes, &base, 0.2, 13).unwrap();
    assert!(report.cells[0].auc().unwrap() >= report.cells[1].auc().unwrap());
}
