//! ROC-AUC scoring, model evaluation, and grid search.

use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::data::{split, LabelSchema, LabeledCorpus};
use crate::embeddings::EmbeddingTable;
use crate::nn::{predict, ModelParams, ProbabilityVector};
use crate::training::{train, TrainConfig};
use crate::{Error, Result};

/// Twice the Mann-Whitney U statistic, as an exact integer count.
///
/// Each (positive, negative) pair where the positive scores higher counts 2,
/// each tie counts 1. Returns `(2U, positives, negatives)`.
pub fn mann_whitney_u2(scores: &[f64], labels: &[bool]) -> Result<(u64, u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let (mut u2, mut neg_below) = (0u64, 0u64);
    let (mut pos_total, mut neg_total) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        u2 += 2 * p * neg_below + p * n;
        neg_below += n;
        pos_total += p;
        neg_total += n;
        i = j;
    }
    Ok((u2, pos_total, neg_total))
}

/// Area under the ROC curve of `scores` for the positive labels.
pub fn roc_auc_binary(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (u2, p, n) = mann_whitney_u2(scores, labels)?;
    if p == 0 || n == 0 {
        return Err(Error::UndefinedAuc(format!("{p} positive and {n} negative examples")));
    }
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Probability vectors and gold labels for a scored document set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub classes: usize,
    pub probs: Vec<ProbabilityVector>,
    pub gold: Vec<usize>,
}

impl ScoredSet {
    pub fn new(classes: usize, probs: Vec<ProbabilityVector>, gold: Vec<usize>) -> Result<Self> {
        if probs.len() != gold.len() {
            return Err(Error::Shape("probability and label counts differ".into()));
        }
        if probs.iter().any(|p| p.as_slice().len() != classes) || gold.iter().any(|&g| g >= classes) {
            return Err(Error::Shape(format!("scored set is not {classes}-class")));
        }
        Ok(ScoredSet { classes, probs, gold })
    }

    /// One-vs-rest AUC of class `c`.
    pub fn class_auc(&self, c: usize) -> Result<f64> {
        let scores: Vec<f64> = self.probs.iter().map(|p| p.as_slice()[c]).collect();
        let labels: Vec<bool> = self.gold.iter().map(|&g| g == c).collect();
        roc_auc_binary(&scores, &labels)
            .map_err(|e| Error::UndefinedAuc(format!("class {c}: {e}")))
    }
}

/// Unweighted mean of the one-vs-rest AUCs over all classes.
pub fn macro_auc_multiclass(scored: &ScoredSet) -> Result<f64> {
    let aucs = (0..scored.classes)
        .map(|c| scored.class_auc(c))
        .collect::<Result<Vec<f64>>>()?;
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Headline AUC: positive-class AUC for two classes, macro AUC otherwise.
pub fn headline_auc(scored: &ScoredSet) -> Result<f64> {
    if scored.classes == 2 {
        scored.class_auc(1)
    } else {
        macro_auc_multiclass(scored)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub schema: LabelSchema,
    pub auc: f64,
    pub class_auc: Vec<f64>,
    pub accuracy: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub scored: ScoredSet,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "auc={:.6}", self.auc)?;
        writeln!(f, "accuracy={:.6}", self.accuracy)?;
        writeln!(f, "documents={}", self.scored.gold.len())?;
        for (c, auc) in self.class_auc.iter().enumerate() {
            writeln!(f, "class_auc[{}]={auc:.6}", self.schema.class_name(c))?;
        }
        writeln!(f, "confusion (rows gold, columns predicted):")?;
        for (c, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|n| format!("{n:>6}")).collect();
            writeln!(f, "{:>20} {}", self.schema.class_name(c), cells.join(""))?;
        }
        Ok(())
    }
}

/// Score a model on every document of `corpus` in inference mode.
pub fn score(model: &ModelParams, corpus: &LabeledCorpus, table: &EmbeddingTable) -> Result<ScoredSet> {
    let classes = corpus.schema().levels();
    if model.classes() != classes {
        return Err(Error::Config(format!(
            "model has {} classes but the dataset uses a {classes}-level schema",
            model.classes()
        )));
    }
    let probs = corpus
        .docs()
        .par_iter()
        .map(|d| predict(model, &model.embed(d.tokens.as_slice(), table)?))
        .collect::<Result<Vec<_>>>()?;
    ScoredSet::new(classes, probs, corpus.docs().iter().map(|d| d.label).collect())
}

pub fn evaluate(model: &ModelParams, corpus: &LabeledCorpus, table: &EmbeddingTable) -> Result<EvalReport> {
    let scored = score(model, corpus, table)?;
    let classes = scored.classes;
    let class_auc = (0..classes).map(|c| scored.class_auc(c)).collect::<Result<Vec<_>>>()?;
    let auc = if classes == 2 {
        class_auc[1]
    } else {
        class_auc.iter().sum::<f64>() / classes as f64
    };
    let mut confusion = vec![vec![0; classes]; classes];
    for (p, &g) in scored.probs.iter().zip(&scored.gold) {
        confusion[g][p.argmax()] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        schema: corpus.schema(),
        auc,
        class_auc,
        accuracy: correct as f64 / scored.gold.len().max(1) as f64,
        confusion,
        scored,
    })
}

/// One pretrained-vector option on the grid, e.g. a dimension or a
/// pretraining-iteration count. The label is carried through to reports.
#[derive(Debug, Clone)]
pub struct VectorVariant {
    pub label: String,
    pub table: EmbeddingTable,
}

#[derive(Debug, Clone)]
pub struct GridAxes {
    /// Each entry is the filter-height set of one grid row.
    pub heights: Vec<Vec<usize>>,
    pub vectors: Vec<VectorVariant>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub auc: f64,
    pub accuracy: f64,
    pub best_epoch: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub heights: Vec<usize>,
    pub vectors: String,
    pub dim: usize,
    pub result: std::result::Result<CellScore, String>,
}

impl GridCell {
    pub fn auc(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|s| s.auc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub dataset: String,
    pub schema: LabelSchema,
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    /// Row-major: `cells[row * columns + column]`.
    pub cells: Vec<GridCell>,
}

pub fn heights_label(h: &[usize]) -> String {
    h.iter().map(usize::to_string).collect::<Vec<_>>().join("+")
}

impl SweepReport {
    pub fn cell(&self, row: usize, column: usize) -> &GridCell {
        &self.cells[row * self.column_labels.len() + column]
    }

    /// Highest-AUC successful cell; the first in grid order wins ties.
    pub fn best(&self) -> Option<&GridCell> {
        self.cells.iter().filter(|c| c.auc().is_some()).fold(None, |best: Option<&GridCell>, c| match best {
            Some(b) if b.auc() >= c.auc() => Some(b),
            _ => Some(c),
        })
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,schema,heights,vectors,dim,auc,accuracy,best_epoch,epochs,error\n");
        let levels = self.schema.levels();
        for c in &self.cells {
            let h = heights_label(&c.heights);
            match &c.result {
                Ok(s) => writeln!(
                    out,
                    "{},{levels},{h},{},{},{},{},{},{},",
                    self.dataset, c.vectors, c.dim, s.auc, s.accuracy, s.best_epoch, s.epochs
                ),
                Err(e) => writeln!(
                    out,
                    "{},{levels},{h},{},{},,,,,\"{}\"",
                    self.dataset,
                    c.vectors,
                    c.dim,
                    e.replace('"', "'")
                ),
            }
            .expect("writing to a String");
        }
        out
    }

    /// Aligned table: rows are height sets, columns vector variants.
    pub fn render_text(&self) -> String {
        let mut out = format!("{} ({}-class), AUC\n", self.dataset, self.schema.levels());
        let first = self
            .row_labels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("filter size".len());
        let width = self.column_labels.iter().map(String::len).max().unwrap_or(0).max(8);
        write!(out, "{:<first$}", "filter size").unwrap();
        for c in &self.column_labels {
            write!(out, "  {c:>width$}").unwrap();
        }
        out.push('\n');
        for (r, label) in self.row_labels.iter().enumerate() {
            write!(out, "{label:<first$}").unwrap();
            for col in 0..self.column_labels.len() {
                let cell = match self.cell(r, col).auc() {
                    Some(a) => format!("{a:.4}"),
                    None => "failed".to_owned(),
                };
                write!(out, "  {cell:>width$}").unwrap();
            }
            out.push('\n');
        }
        if let Some(b) = self.best() {
            writeln!(
                out,
                "best: heights={} vectors={} auc={:.6}",
                heights_label(&b.heights),
                b.vectors,
                b.auc().unwrap_or(f64::NAN)
            )
            .unwrap();
        }
        out
    }
}

/// Train and evaluate one model per grid cell.
///
/// The corpus is split once into train/eval with `split_seed`; every cell
/// reuses that split and the base config's seed, so cells differ only in
/// their grid coordinates. A failing cell is recorded and does not stop the
/// sweep.
pub fn grid_search(
    corpus: &LabeledCorpus,
    axes: &GridAxes,
    base: &TrainConfig,
    eval_fraction: f64,
    split_seed: u64,
) -> Result<SweepReport> {
    if axes.heights.is_empty() || axes.vectors.is_empty() {
        return Err(Error::Config("grid axes must be non-empty".into()));
    }
    base.validate()?;
    let (train_part, eval_part) = split(corpus, eval_fraction, split_seed)?;

    let coords: Vec<(usize, usize)> = (0..axes.heights.len())
        .flat_map(|r| (0..axes.vectors.len()).map(move |c| (r, c)))
        .collect();
    let cells = coords
        .par_iter()
        .map(|&(r, c)| {
            let heights = axes.heights[r].clone();
            let variant = &axes.vectors[c];
            let mut config = base.clone();
            config.model.heights = heights.clone();
            let result = run_cell(&train_part, &eval_part, &config, &variant.table).map_err(|e| e.to_string());
            GridCell {
                heights,
                vectors: variant.label.clone(),
                dim: variant.table.dim(),
                result,
            }
        })
        .collect();

    Ok(SweepReport {
        dataset: corpus.provenance.clone(),
        schema: corpus.schema(),
        row_labels: axes.heights.iter().map(|h| heights_label(h)).collect(),
        column_labels: axes.vectors.iter().map(|v| v.label.clone()).collect(),
        cells,
    })
}

fn run_cell(
    train_part: &LabeledCorpus,
    eval_part: &LabeledCorpus,
    config: &TrainConfig,
    table: &EmbeddingTable,
) -> Result<CellScore> {
    let outcome = train(train_part, config, table)?;
    let table = outcome.checkpoint().embedding_table(table)?;
    let report = evaluate(&outcome.model, eval_part, &table)?;
    Ok(CellScore {
        auc: report.auc,
        accuracy: report.accuracy,
        best_epoch: outcome.history.best_epoch(),
        epochs: outcome.history.epochs(),
    })
}
