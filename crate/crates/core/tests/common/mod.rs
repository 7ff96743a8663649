//! Synthetic corpora and embedding tables shared by the integration tests.

#![allow(dead_code)]

use cnnsa_core::data::{LabelSchema, LabeledCorpus};
use cnnsa_core::embeddings::EmbeddingTable;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Table with an independent uniform `[-0.5, 0.5]` vector per word.
pub fn random_table<S: AsRef<str>>(vocab: &[S], dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::new(dim, seed).unwrap();
    for w in vocab {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        table.insert(w.as_ref(), &v).unwrap();
    }
    table
}

fn filler(rng: &mut ChaCha8Rng, pool: &[String], len: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let n = rng.random_range(len);
    (0..n).map(|_| pool.choose(rng).unwrap().clone()).collect()
}

/// `per_class` documents per binary class. Each document is filler words with
/// its class's single cue token inserted at a random position.
pub fn cue_corpus(per_class: usize, dim: usize, seed: u64) -> (LabeledCorpus, EmbeddingTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = words("w", 30);
    let cues = ["cue-negative".to_string(), "cue-positive".to_string()];
    let mut docs = Vec::new();
    for (label, cue) in cues.iter().enumerate() {
        for _ in 0..per_class {
            let mut toks = filler(&mut rng, &pool, 4..=8);
            let at = rng.random_range(0..=toks.len());
            toks.insert(at, cue.clone());
            docs.push((toks, label));
        }
    }
    let mut vocab = pool;
    vocab.extend(cues);
    let corpus = LabeledCorpus::from_tokens(LabelSchema::Binary, docs).unwrap();
    (corpus, random_table(&vocab, dim, seed ^ 0x5eed))
}

/// Binary corpus separable by lexicon: every document carries one or two
/// words from its class's lexicon among neutral filler.
pub fn lexicon_corpus(n: usize, lexicon: usize, dim: usize, seed: u64) -> (LabeledCorpus, EmbeddingTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = words("n", 100);
    let lexicons = [words("neg", lexicon), words("pos", lexicon)];
    let mut docs = Vec::new();
    for i in 0..n {
        let label = i % 2;
        let mut toks = filler(&mut rng, &pool, 5..=12);
        for _ in 0..rng.random_range(1..=2) {
            let at = rng.random_range(0..=toks.len());
            toks.insert(at, lexicons[label].choose(&mut rng).unwrap().clone());
        }
        docs.push((toks, label));
    }
    let mut vocab = pool;
    vocab.extend(lexicons.into_iter().flatten());
    let corpus = LabeledCorpus::from_tokens(LabelSchema::Binary, docs).unwrap();
    (corpus, random_table(&vocab, dim, seed ^ 0x5eed))
}

/// Binary corpus whose label depends only on word order. Each document holds
/// one pair `(a_i, b_i)` among filler; positives have the pair adjacent as
/// `a_i b_i`, negatives have it reversed or split by filler. Unigram counts
/// carry no signal, so the discriminative unit is the 2-gram.
pub fn bigram_corpus(n: usize, dim: usize, seed: u64) -> (LabeledCorpus, EmbeddingTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = words("f", 40);
    let firsts = words("a", 4);
    let seconds = words("b", 4);
    let mut docs = Vec::new();
    for i in 0..n {
        let label = i % 2;
        let p = rng.random_range(0..firsts.len());
        let (a, b) = (firsts[p].clone(), seconds[p].clone());
        let mut toks = filler(&mut rng, &pool, 4..=10);
        if label == 1 {
            let at = rng.random_range(0..=toks.len());
            toks.splice(at..at, [a, b]);
        } else if rng.random_bool(0.5) {
            let at = rng.random_range(0..=toks.len());
            toks.splice(at..at, [b, a]);
        } else {
            let at = rng.random_range(0..toks.len());
            let gap = rng.random_range(1..=3).min(toks.len() - at);
            toks.insert(at, a);
            toks.insert(at + 1 + gap, b);
        }
        docs.push((toks, label));
    }
    let mut vocab = pool;
    vocab.extend(firsts);
    vocab.extend(seconds);
    let corpus = LabeledCorpus::from_tokens(LabelSchema::Binary, docs).unwrap();
    (corpus, random_table(&vocab, dim, seed ^ 0x5eed))
}

pub struct TinyCase {
    pub model: cnnsa_core::nn::ModelParams,
    pub d: cnnsa_core::nn::SentenceMatrix,
    pub gold: usize,
}

/// Random tanh model with k <= 6, s <= 8, n <= 10 and L in {2, 5}, no
/// dropout. Draws whose max-pool winner leads the runner-up by less than
/// 1e-3 are redrawn: central differences straddling an argmax switch
/// measure the kink, not the gradient.
pub fn tiny_case(rng: &mut ChaCha8Rng) -> TinyCase {
    use cnnsa_core::nn::{ClassifierHead, ConvFilter, ModelParams, Nonlinearity, SentenceMatrix};
    loop {
        let s = rng.random_range(1..=8);
        let n = rng.random_range(4..=10);
        let classes = if rng.random_bool(0.5) { 2 } else { 5 };
        let heights: Vec<usize> = match rng.random_range(0..3) {
            0 => vec![rng.random_range(1..=4)],
            1 => vec![1, 3],
            _ => vec![2, 3],
        };
        let per = rng.random_range(1..=6 / heights.len());
        let mut filters = Vec::new();
        for &h in &heights {
            for _ in 0..per {
                let w = (0..h * s).map(|_| rng.random_range(-0.5..0.5)).collect();
                filters.push(ConvFilter::new(h, s, w, rng.random_range(-0.2..0.2)).unwrap());
            }
        }
        let k = filters.len();
        let u = (0..classes * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bu = (0..classes).map(|_| rng.random_range(-0.2..0.2)).collect();
        let head = ClassifierHead::new(classes, k, u, bu).unwrap();
        let model = ModelParams::new(filters, head, Nonlinearity::Tanh, 0.0).unwrap();
        let d = SentenceMatrix::new(n, s, (0..n * s).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let margin = model
            .filters
            .iter()
            .map(|f| {
                let mut pre = f.pre_activations(&d).unwrap();
                pre.sort_by(|a, b| b.total_cmp(a));
                pre.get(1).map_or(f64::INFINITY, |second| pre[0] - second)
            })
            .fold(f64::INFINITY, f64::min);
        if margin >= 1e-3 {
            let gold = rng.random_range(0..classes);
            return TinyCase { model, d, gold };
        }
    }
}
