//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cnnsa_core::data::split;
use cnnsa_core::eval::{evaluate, grid_search, mann_whitney_u2, roc_auc_binary, GridAxes, VectorVariant};
use cnnsa_core::nn::{
    build_global_feature, convolve, forward_with_mask, softmax, ConvFilter, ModelConfig, Nonlinearity,
    SentenceMatrix,
};
use cnnsa_core::preprocess::preprocess;
use cnnsa_core::training::{
    backward, finite_difference_gradient, max_relative_error, train, Accumulators, EarlyStopping, TrainConfig,
    DEFAULT_EPSILON, DEFAULT_RHO,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}, {:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let c = common::tiny_case(&mut rng);
        let exact = backward(&c.model, &c.d, c.gold, None).map_err(|e| e.to_string())?;
        let numeric = finite_difference_gradient(&c.model, &c.d, c.gold, None, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(max_relative_error(&exact, &numeric));
    }
    let elapsed = start.elapsed();
    check(worst <= 1e-4, format!("max relative error {worst:.3e}"))
        .and_then(|d| within(elapsed, Duration::from_secs(30), d))
}

fn head_bias_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c = common::tiny_case(&mut rng);
        let grads = backward(&c.model, &c.d, c.gold, None).map_err(|e| e.to_string())?;
        let logits = forward_with_mask(&c.model, &c.d, None).map_err(|e| e.to_string())?.logits;
        // Softmax evaluated independently of the forward pass's own probs.
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|y| (y - m).exp()).sum();
        for (j, g) in grads.head_bias().iter().enumerate() {
            let p = (logits[j] - m).exp() / z;
            let onehot = if j == c.gold { 1.0 } else { 0.0 };
            worst = worst.max((g - (p - onehot)).abs());
        }
    }
    check(worst <= 1e-10, format!("max deviation {worst:.3e} over 100 cases"))
}

fn shape_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    let (mut sum_dev, mut shift_dev) = (0.0f64, 0.0f64);
    for trial in 0..300 {
        let s = rng.random_range(1..=6);
        let n = rng.random_range(1..=30);
        let d = SentenceMatrix::new(n, s, (0..n * s).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let h = rng.random_range(1..=n);
        let f = ConvFilter::new(h, s, (0..h * s).map(|_| rng.random_range(-1.0..1.0)).collect(), 0.1).unwrap();
        let len = convolve(&d, &f, Nonlinearity::Relu).map_err(|e| e.to_string())?.len();
        if len != n - h + 1 {
            return Err(format!("trial {trial}: feature map length {len} for n={n} h={h}"));
        }
        let mut filters = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let hh = rng.random_range(1..=n);
            for _ in 0..rng.random_range(1..=4) {
                filters.push(ConvFilter::zeros(hh, s));
            }
        }
        filters.sort_by_key(ConvFilter::height);
        let g = build_global_feature(&d, &filters, Nonlinearity::Tanh).map_err(|e| e.to_string())?;
        if g.len() != filters.len() {
            return Err(format!("trial {trial}: global feature length {} for k={}", g.len(), filters.len()));
        }
        let y: Vec<f64> = (0..rng.random_range(2..=5)).map(|_| rng.random_range(-30.0..30.0)).collect();
        let p = softmax(&y);
        sum_dev = sum_dev.max((p.as_slice().iter().sum::<f64>() - 1.0).abs());
        let alpha = rng.random_range(-50.0..50.0);
        let shifted: Vec<f64> = y.iter().map(|v| v + alpha).collect();
        for (a, b) in softmax(&shifted).as_slice().iter().zip(p.as_slice()) {
            shift_dev = shift_dev.max((a - b).abs());
        }
    }
    check(
        sum_dev <= 1e-9 && shift_dev <= 1e-9,
        format!("300 trials, softmax sum deviation {sum_dev:.1e}, shift deviation {shift_dev:.1e}"),
    )
}

fn brute_u2(scores: &[f64], labels: &[bool]) -> u64 {
    let mut u2 = 0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                u2 += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    u2
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2027);
    for trial in 0..100 {
        let n = rng.random_range(2..=200);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..25u32)) / 32.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let (u2, p, q) = mann_whitney_u2(&scores, &labels).map_err(|e| e.to_string())?;
        if u2 != brute_u2(&scores, &labels) {
            return Err(format!("trial {trial}: pair count mismatch"));
        }
        let auc = roc_auc_binary(&scores, &labels).map_err(|e| e.to_string())?;
        if auc != u2 as f64 / (2 * p * q) as f64 {
            return Err(format!("trial {trial}: AUC differs from the pair-count ratio"));
        }
        let mapped: Vec<f64> = scores.iter().map(|s| (5.0 * s).exp() - 3.0).collect();
        if roc_auc_binary(&mapped, &labels).map_err(|e| e.to_string())? != auc {
            return Err(format!("trial {trial}: not invariant under a monotone map"));
        }
    }
    Ok("100 instances, exact".into())
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let (corpus, table) = common::cue_corpus(10, 50, 11);
    let config = TrainConfig {
        max_epochs: 200,
        patience: None,
        ..TrainConfig::default()
    };
    let outcome = train(&corpus, &config, &table).map_err(|e| e.to_string())?;
    let report = evaluate(&outcome.model, &corpus, &table).map_err(|e| e.to_string())?;
    let loss = *outcome.history.train_loss.last().unwrap();
    let elapsed = start.elapsed();
    check(
        report.accuracy == 1.0 && loss < 0.01,
        format!(
            "accuracy {:.3} over all 20 documents, final training loss {loss:.2e} after {} epochs",
            report.accuracy,
            outcome.history.epochs()
        ),
    )
    .and_then(|d| within(elapsed, Duration::from_secs(60), d))
}

fn generalization() -> Outcome {
    let start = Instant::now();
    let (corpus, table) = common::lexicon_corpus(400, 5, 50, 12);
    let (train_part, eval_part) = split(&corpus, 0.2, 12).map_err(|e| e.to_string())?;
    let outcome = train(&train_part, &TrainConfig::default(), &table).map_err(|e| e.to_string())?;
    let report = evaluate(&outcome.model, &eval_part, &table).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        report.auc >= 0.95,
        format!(
            "held-out AUC {:.4} on {} documents, best epoch {}",
            report.auc,
            eval_part.len(),
            outcome.history.best_epoch()
        ),
    )
    .and_then(|d| within(elapsed, Duration::from_secs(300), d))
}

fn sweep_shape() -> Outcome {
    let (corpus, table) = common::bigram_corpus(240, 20, 13);
    let axes = GridAxes {
        heights: vec![vec![2], vec![3], vec![5], vec![7], vec![9]],
        vectors: vec![VectorVariant {
            label: "dim20".into(),
            table,
        }],
    };
    let base = TrainConfig {
        model: ModelConfig {
            per_height: 20,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let report = grid_search(&corpus, &axes, &base, 0.2, 13).map_err(|e| e.to_string())?;
    let cells: Vec<String> = report
        .cells
        .iter()
        .map(|c| format!("h{}={:.4}", c.heights[0], c.auc().unwrap_or(f64::NAN)))
        .collect();
    let best = report.best().ok_or("every cell failed")?;
    check(
        matches!(best.heights[0], 2 | 3),
        format!("best height {} ({})", best.heights[0], cells.join(" ")),
    )
}

fn preprocessing_golden() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let input = fs::read_to_string(dir.join("preprocess_input.txt")).map_err(|e| e.to_string())?;
    let expected = fs::read_to_string(dir.join("preprocess_expected.txt")).map_err(|e| e.to_string())?;
    let actual: String = input.lines().map(|l| format!("{}\n", preprocess(l))).collect();
    if actual != expected {
        let bad = actual.lines().zip(expected.lines()).position(|(a, e)| a != e);
        return Err(format!("golden output differs at line {}", bad.map_or(0, |i| i + 1)));
    }
    let rows = [
        ("@username", "<کاربر>"),
        ("http://www.example.com", "<آدرس>"),
        ("۱۲۳", "<عدد>"),
        ("#موضوع", "<هشتگ>"),
    ];
    for (raw, want) in rows {
        let got = preprocess(raw).to_string();
        if got != want {
            return Err(format!("`{raw}` became `{got}`"));
        }
    }
    Ok(format!("{} fixture lines byte-exact, 4 substitution rows literal", input.lines().count()))
}

fn determinism() -> Outcome {
    let (corpus, table) = common::lexicon_corpus(120, 5, 16, 14);
    let config = TrainConfig {
        model: ModelConfig {
            per_height: 10,
            heights: vec![2, 3],
            ..ModelConfig::default()
        },
        max_epochs: 15,
        seed: 99,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("run{run}.ckpt"));
        let outcome = train(&corpus, &config, &table).map_err(|e| e.to_string())?;
        outcome.checkpoint().save(&path).map_err(|e| e.to_string())?;
        bytes.push(fs::read(&path).map_err(|e| e.to_string())?);
    }
    if bytes[0] != bytes[1] {
        return Err("checkpoints differ between identical runs".into());
    }

    // Snapshots stand in for parameters: each is the one-based epoch number.
    let mut stopper = EarlyStopping::new(Some(5));
    let mut epochs = 0;
    for (i, loss) in [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99].into_iter().enumerate() {
        epochs += 1;
        if stopper.observe(loss, || i + 1).stop {
            break;
        }
    }
    let restored = stopper.into_best().map_or(0, |(_, epoch)| epoch);
    check(
        epochs == 7 && restored == 2,
        format!("checkpoints identical ({} bytes); trace stops after epoch {epochs}, restores epoch {restored}", bytes[0].len()),
    )
}

fn adadelta_first_step() -> Outcome {
    let mut worst = 0.0f64;
    for g in [1.0, -0.5, 3e-4, -42.0, 1e-8] {
        let mut acc = Accumulators::zeros(1);
        let mut theta = [0.0];
        acc.step(&mut theta, &[g], DEFAULT_RHO, DEFAULT_EPSILON);
        let closed = -(DEFAULT_EPSILON.sqrt() / ((1.0 - DEFAULT_RHO) * g * g + DEFAULT_EPSILON).sqrt()) * g;
        worst = worst.max((theta[0] - closed).abs());
    }
    check(worst <= 1e-12, format!("max deviation {worst:.1e} over 5 gradients"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("head-bias identity", head_bias_identity),
        ("shape laws", shape_laws),
        ("AUC oracle", auc_oracle),
        ("overfit", overfit),
        ("generalization", generalization),
        ("sweep shape", sweep_shape),
        ("preprocessing golden file", preprocessing_golden),
        ("determinism", determinism),
        ("Adadelta recurrence", adadelta_first_step),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (status, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {status} {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
