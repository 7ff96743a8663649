//! Labeled corpora.
//!
//! Dataset files are UTF-8 with one record per line: a class index, a tab,
//! then the raw document text. Records are preprocessed on load.
//!
//! Five-level labels follow the annotation convention where a five-level
//! label is kept when at least two of three annotators agree, and documents
//! whose annotators agree only on polarity go to the binary set. Merging raw
//! annotations is done upstream; this module only reads merged files.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::preprocess::{preprocess, TokenSequence};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelSchema {
    Binary,
    FiveLevel,
}

const BINARY_NAMES: [&str; 2] = ["negative", "positive"];
const FIVE_NAMES: [&str; 5] = [
    "emotional-negative",
    "rational-negative",
    "neutral",
    "rational-positive",
    "emotional-positive",
];

impl LabelSchema {
    pub fn from_levels(levels: usize) -> Result<Self> {
        match levels {
            2 => Ok(LabelSchema::Binary),
            5 => Ok(LabelSchema::FiveLevel),
            l => Err(Error::Config(format!("label schema must have 2 or 5 levels, got {l}"))),
        }
    }

    pub fn levels(self) -> usize {
        self.class_names().len()
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            LabelSchema::Binary => &BINARY_NAMES,
            LabelSchema::FiveLevel => &FIVE_NAMES,
        }
    }

    pub fn class_name(self, index: usize) -> &'static str {
        self.class_names()[index]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub tokens: TokenSequence,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    schema: LabelSchema,
    docs: Vec<Document>,
    pub provenance: String,
}

impl LabeledCorpus {
    pub fn new(schema: LabelSchema, docs: Vec<Document>) -> Result<Self> {
        for (i, d) in docs.iter().enumerate() {
            if d.label >= schema.levels() {
                return Err(Error::Config(format!(
                    "document {i}: label {} outside the {}-level schema",
                    d.label,
                    schema.levels()
                )));
            }
            if d.tokens.is_empty() {
                return Err(Error::DegenerateDocument);
            }
        }
        Ok(LabeledCorpus {
            schema,
            docs,
            provenance: String::new(),
        })
    }

    /// Build from pre-tokenized documents, e.g. synthetic corpora.
    pub fn from_tokens<I, S>(schema: LabelSchema, docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<S>, usize)>,
        S: Into<String>,
    {
        let docs = docs
            .into_iter()
            .map(|(toks, label)| Document {
                tokens: TokenSequence::new(toks.into_iter().map(Into::into).collect()),
                label,
            })
            .collect();
        Self::new(schema, docs)
    }

    pub fn schema(&self) -> LabelSchema {
        self.schema
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.schema.levels()];
        for d in &self.docs {
            counts[d.label] += 1;
        }
        counts
    }

    fn subset(&self, indices: &[usize], note: &str) -> LabeledCorpus {
        LabeledCorpus {
            schema: self.schema,
            docs: indices.iter().map(|&i| self.docs[i].clone()).collect(),
            provenance: format!("{} [{note}]", self.provenance),
        }
    }

    pub fn stats(&self) -> CorpusStats {
        let classes = (0..self.schema.levels())
            .map(|c| {
                ClassStats::from_docs(
                    self.schema.class_name(c),
                    self.docs.iter().filter(|d| d.label == c),
                )
            })
            .collect();
        CorpusStats {
            classes,
            total: ClassStats::from_docs("all", self.docs.iter()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetReport {
    pub records: usize,
    pub dropped_empty: usize,
}

fn parse_dataset(text: &str, schema: LabelSchema, origin: &str) -> Result<(LabeledCorpus, DatasetReport)> {
    let mut docs = Vec::new();
    let mut report = DatasetReport::default();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let (label, raw) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "missing tab after label"))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("bad label `{label}`")))?;
        if label >= schema.levels() {
            return Err(Error::parse(
                origin,
                lineno,
                format!("label {label} outside the {}-level schema", schema.levels()),
            ));
        }
        report.records += 1;
        let tokens = preprocess(raw);
        if tokens.is_empty() {
            report.dropped_empty += 1;
            continue;
        }
        docs.push(Document { tokens, label });
    }
    let mut corpus = LabeledCorpus::new(schema, docs)?;
    corpus.provenance = origin.to_owned();
    Ok((corpus, report))
}

pub fn load_dataset(path: &Path, schema: LabelSchema) -> Result<(LabeledCorpus, DatasetReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, schema, &path.display().to_string())
}

/// Parse dataset records from an in-memory string.
pub fn parse_records(text: &str, schema: LabelSchema) -> Result<(LabeledCorpus, DatasetReport)> {
    parse_dataset(text, schema, "<memory>")
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("split fraction must be in (0, 1), got {fraction}")))
    }
}

/// Number of held-out documents for a class of `count` documents.
pub fn held_out_count(count: usize, fraction: f64) -> usize {
    let n = (count as f64 * fraction).floor() as usize;
    if count >= 2 {
        n.max(1)
    } else {
        n
    }
}

/// Stratified split. Returns index lists `(keep, held_out)` into the corpus.
pub fn split_indices(corpus: &LabeledCorpus, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    check_fraction(fraction)?;
    let counts = corpus.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!(
            "class {c} ({}) has no documents",
            corpus.schema.class_name(c)
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::SPLIT]));

    let mut quota: Vec<usize> = counts.iter().map(|&n| held_out_count(n, fraction)).collect();
    let (mut keep, mut held) = (Vec::new(), Vec::new());
    for i in order {
        let q = &mut quota[corpus.docs[i].label];
        if *q > 0 {
            *q -= 1;
            held.push(i);
        } else {
            keep.push(i);
        }
    }
    Ok((keep, held))
}

/// Seeded stratified split into `(train, eval)`.
pub fn split(corpus: &LabeledCorpus, eval_fraction: f64, seed: u64) -> Result<(LabeledCorpus, LabeledCorpus)> {
    let (keep, held) = split_indices(corpus, eval_fraction, seed)?;
    Ok((corpus.subset(&keep, "train"), corpus.subset(&held, "eval")))
}

/// Per-class token statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub name: String,
    pub documents: usize,
    pub tokens: usize,
    pub vocabulary: usize,
}

impl ClassStats {
    fn from_docs<'a>(name: &str, docs: impl Iterator<Item = &'a Document>) -> Self {
        let mut documents = 0;
        let mut tokens = 0;
        let mut vocab = HashSet::new();
        for d in docs {
            documents += 1;
            tokens += d.tokens.len();
            vocab.extend(d.tokens.iter().map(String::as_str));
        }
        ClassStats {
            name: name.to_owned(),
            documents,
            tokens,
            vocabulary: vocab.len(),
        }
    }

    pub fn mean_tokens(&self) -> f64 {
        if self.documents == 0 {
            0.0
        } else {
            self.tokens as f64 / self.documents as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub classes: Vec<ClassStats>,
    pub total: ClassStats,
}

type Cell = Box<dyn Fn(&ClassStats) -> String>;

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols: Vec<&ClassStats> = self.classes.iter().chain(std::iter::once(&self.total)).collect();
        let width = cols.iter().map(|c| c.name.len()).max().unwrap_or(0).max(10);
        write!(f, "{:<16}", "")?;
        for c in &cols {
            write!(f, " {:>width$}", c.name)?;
        }
        writeln!(f)?;
        let rows: [(&str, Cell); 4] = [
            ("documents", Box::new(|c| c.documents.to_string())),
            ("tokens", Box::new(|c| c.tokens.to_string())),
            ("tokens/doc", Box::new(|c| format!("{:.2}", c.mean_tokens()))),
            ("vocabulary", Box::new(|c| c.vocabulary.to_string())),
        ];
        for (label, cell) in rows.iter() {
            write!(f, "{label:<16}")?;
            for c in &cols {
                write!(f, " {:>width$}", cell(c))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Label histogram keyed by class index, for diagnostics.
pub fn label_histogram(docs: &[Document]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for d in docs {
        *h.entry(d.label).or_insert(0) += 1;
    }
    h
}
