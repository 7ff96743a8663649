//! Forward pass: sentence matrix, convolution, max-over-time pooling,
//! dropout, affine head and softmax.

use std::fmt;

use rand::Rng;

use crate::embeddings::EmbeddingTable;
use crate::{Error, Result};

/// `n x s` document matrix, one embedding per row, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SentenceMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("sentence matrix must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} sentence matrix",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("sentence matrix entry".into()));
        }
        Ok(SentenceMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged sentence rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rows `start..start + height` as one contiguous slice.
    fn window(&self, start: usize, height: usize) -> &[f64] {
        &self.data[start * self.cols..(start + height) * self.cols]
    }
}

/// Stack embedding rows for `tokens`, zero-padding up to `min_rows`.
pub fn embed_sentence<S: AsRef<str>>(
    tokens: &[S],
    table: &EmbeddingTable,
    min_rows: usize,
) -> Result<SentenceMatrix> {
    if tokens.is_empty() {
        return Err(Error::DegenerateDocument);
    }
    let s = table.dim();
    let rows = tokens.len().max(min_rows);
    let mut data = vec![0.0; rows * s];
    for (tok, row) in tokens.iter().zip(data.chunks_exact_mut(s)) {
        table.lookup_into(tok.as_ref(), row);
    }
    SentenceMatrix::new(rows, s, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Nonlinearity {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`. ReLU uses 0 at the kink.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Nonlinearity::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Identity => "identity",
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Nonlinearity::Relu),
            "tanh" => Ok(Nonlinearity::Tanh),
            "identity" => Ok(Nonlinearity::Identity),
            other => Err(Error::Config(format!("unknown nonlinearity `{other}`"))),
        }
    }
}

/// `h x s` convolution filter with a scalar bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvFilter {
    height: usize,
    width: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ConvFilter {
    pub fn new(height: usize, width: usize, weights: Vec<f64>, bias: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("filter must be non-empty, got {height}x{width}")));
        }
        if weights.len() != height * width {
            return Err(Error::Shape(format!(
                "{} weights for a {height}x{width} filter",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite("filter parameter".into()));
        }
        Ok(ConvFilter {
            height,
            width,
            weights,
            bias,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        ConvFilter {
            height,
            width,
            weights: vec![0.0; height * width],
            bias: 0.0,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn check(&self, d: &SentenceMatrix) -> Result<()> {
        if self.width != d.cols() {
            return Err(Error::Shape(format!(
                "filter width {} does not match embedding dimension {}",
                self.width,
                d.cols()
            )));
        }
        if self.height > d.rows() {
            return Err(Error::Shape(format!(
                "filter height {} exceeds sentence length {}",
                self.height,
                d.rows()
            )));
        }
        Ok(())
    }

    /// Window sum `W * d[j..j+h]` plus bias, for every window start `j`.
    pub fn pre_activations(&self, d: &SentenceMatrix) -> Result<Vec<f64>> {
        self.check(d)?;
        let count = d.rows() - self.height + 1;
        Ok((0..count)
            .map(|j| {
                let window = d.window(j, self.height);
                let dot: f64 = self.weights.iter().zip(window).map(|(w, x)| w * x).sum();
                dot + self.bias
            })
            .collect())
    }
}

/// Filter responses over window positions; length `n - h + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(pub Vec<f64>);

impl FeatureMap {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn convolve(d: &SentenceMatrix, filter: &ConvFilter, f: Nonlinearity) -> Result<FeatureMap> {
    let mut a = filter.pre_activations(d)?;
    for x in &mut a {
        *x = f.apply(*x);
    }
    Ok(FeatureMap(a))
}

/// Index of the first maximum. Returns `None` for an empty slice.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn max_pool(c: &FeatureMap) -> Result<f64> {
    argmax(&c.0)
        .map(|i| c.0[i])
        .ok_or_else(|| Error::Shape("max-pool over an empty feature map".into()))
}

/// Pooled filter responses, one entry per filter in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeatureVector(pub Vec<f64>);

impl GlobalFeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn build_global_feature(
    d: &SentenceMatrix,
    filters: &[ConvFilter],
    f: Nonlinearity,
) -> Result<GlobalFeatureVector> {
    filters
        .iter()
        .map(|filter| max_pool(&convolve(d, filter, f)?))
        .collect::<Result<Vec<_>>>()
        .map(GlobalFeatureVector)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")))
    }
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1/(1-rate)`.
pub fn sample_dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_rate(rate)?;
    if rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

pub fn apply_dropout<R: Rng + ?Sized>(v: &[f64], rate: f64, rng: &mut R, mode: Mode) -> Result<Vec<f64>> {
    check_rate(rate)?;
    match mode {
        Mode::Infer => Ok(v.to_vec()),
        Mode::Train => {
            let mask = sample_dropout_mask(v.len(), rate, rng)?;
            Ok(v.iter().zip(&mask).map(|(x, m)| x * m).collect())
        }
    }
}

/// Softmax layer parameters: `L x k` weights and `L` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    classes: usize,
    width: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ClassifierHead {
    pub fn new(classes: usize, width: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Shape(format!("classifier needs at least 2 classes, got {classes}")));
        }
        if weights.len() != classes * width || bias.len() != classes {
            return Err(Error::Shape(format!(
                "head of {classes}x{width} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(ClassifierHead {
            classes,
            width,
            weights,
            bias,
        })
    }

    pub fn zeros(classes: usize, width: usize) -> Self {
        ClassifierHead {
            classes,
            width,
            weights: vec![0.0; classes * width],
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.width..(j + 1) * self.width]
    }
}

pub fn logits(g: &[f64], head: &ClassifierHead) -> Result<Vec<f64>> {
    if g.len() != head.width {
        return Err(Error::Shape(format!(
            "feature vector has {} entries, head expects {}",
            g.len(),
            head.width
        )));
    }
    Ok((0..head.classes)
        .map(|j| {
            let dot: f64 = head.row(j).iter().zip(g).map(|(u, x)| u * x).sum();
            dot + head.bias[j]
        })
        .collect())
}

/// Class probabilities; entries positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(pub Vec<f64>);

impl ProbabilityVector {
    pub fn argmax(&self) -> usize {
        argmax(&self.0).expect("non-empty probability vector")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Max-shifted softmax.
pub fn softmax(y: &[f64]) -> ProbabilityVector {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = y.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbabilityVector(exps.into_iter().map(|e| e / sum).collect())
}

/// `ln Σ exp(y)`, computed with the max shift.
pub fn log_sum_exp(y: &[f64]) -> f64 {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + y.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Filter heights; stored sorted ascending and deduplicated.
    pub heights: Vec<usize>,
    pub per_height: usize,
    pub nonlinearity: Nonlinearity,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            heights: vec![3],
            per_height: 100,
            nonlinearity: Nonlinearity::Relu,
            dropout: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heights.is_empty() || self.heights.contains(&0) {
            return Err(Error::Config("filter heights must be non-empty and positive".into()));
        }
        if self.per_height == 0 {
            return Err(Error::Config("filters per height must be at least 1".into()));
        }
        check_rate(self.dropout)
    }

    pub fn normalized_heights(&self) -> Vec<usize> {
        let mut h = self.heights.clone();
        h.sort_unstable();
        h.dedup();
        h
    }
}

/// Every trainable parameter of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Ordered by height ascending, then filter index.
    pub filters: Vec<ConvFilter>,
    pub head: ClassifierHead,
    pub nonlinearity: Nonlinearity,
    pub dropout: f64,
    dim: usize,
    per_height: usize,
}

/// Uniform init half-width for weights. Biases start at zero.
pub const INIT_RANGE: f64 = 0.05;

impl ModelParams {
    pub fn new(
        filters: Vec<ConvFilter>,
        head: ClassifierHead,
        nonlinearity: Nonlinearity,
        dropout: f64,
    ) -> Result<Self> {
        check_rate(dropout)?;
        let dim = filters
            .first()
            .map(ConvFilter::width)
            .ok_or_else(|| Error::Shape("model needs at least one filter".into()))?;
        if filters.iter().any(|f| f.width() != dim) {
            return Err(Error::Shape("all filters must share the embedding width".into()));
        }
        if filters.windows(2).any(|w| w[0].height() > w[1].height()) {
            return Err(Error::Shape("filters must be ordered by ascending height".into()));
        }
        if head.width() != filters.len() {
            return Err(Error::Shape(format!(
                "head width {} does not match {} filters",
                head.width(),
                filters.len()
            )));
        }
        let first = filters[0].height();
        let per_height = filters.iter().take_while(|f| f.height() == first).count();
        Ok(ModelParams {
            filters,
            head,
            nonlinearity,
            dropout,
            dim,
            per_height,
        })
    }

    /// Random init: weights uniform in `[-INIT_RANGE, INIT_RANGE]`, zero biases.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut filters = Vec::new();
        for h in config.normalized_heights() {
            for _ in 0..config.per_height {
                let w = (0..h * dim).map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE)).collect();
                filters.push(ConvFilter::new(h, dim, w, 0.0)?);
            }
        }
        let k = filters.len();
        let u = (0..classes * k)
            .map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        let head = ClassifierHead::new(classes, k, u, vec![0.0; classes])?;
        Self::new(filters, head, config.nonlinearity, config.dropout)
    }

    /// All-zero parameters with the given architecture.
    pub fn zeros(config: &ModelConfig, dim: usize, classes: usize) -> Result<Self> {
        config.validate()?;
        let filters: Vec<ConvFilter> = config
            .normalized_heights()
            .into_iter()
            .flat_map(|h| (0..config.per_height).map(move |_| ConvFilter::zeros(h, dim)))
            .collect();
        let head = ClassifierHead::zeros(classes, filters.len());
        Self::new(filters, head, config.nonlinearity, config.dropout)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    /// Total filter count `k`.
    pub fn feature_len(&self) -> usize {
        self.filters.len()
    }

    pub fn per_height(&self) -> usize {
        self.per_height
    }

    /// Distinct filter heights, ascending.
    pub fn heights(&self) -> Vec<usize> {
        let mut h: Vec<usize> = self.filters.iter().map(ConvFilter::height).collect();
        h.dedup();
        h
    }

    pub fn max_height(&self) -> usize {
        self.filters.iter().map(ConvFilter::height).max().unwrap_or(1)
    }

    /// Embed a token sequence with the padding this model needs.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S], table: &EmbeddingTable) -> Result<SentenceMatrix> {
        if table.dim() != self.dim {
            return Err(Error::Shape(format!(
                "embedding dimension {} does not match model dimension {}",
                table.dim(),
                self.dim
            )));
        }
        embed_sentence(tokens, table, self.max_height())
    }

    /// Parameter arrays in checkpoint order: per filter its weights then bias,
    /// then head weights and head bias.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.filters.len() + 2);
        for (i, f) in self.filters.iter().enumerate() {
            out.push((format!("filter.{i}.weights"), f.weights.as_slice()));
            out.push((format!("filter.{i}.bias"), std::slice::from_ref(&f.bias)));
        }
        out.push(("head.weights".to_owned(), self.head.weights.as_slice()));
        out.push(("head.bias".to_owned(), self.head.bias.as_slice()));
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.filters.len() + 2);
        for f in &mut self.filters {
            out.push(f.weights.as_mut_slice());
            out.push(std::slice::from_mut(&mut f.bias));
        }
        out.push(self.head.weights.as_mut_slice());
        out.push(self.head.bias.as_mut_slice());
        out
    }

    /// Number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Pre-activation at the pooled window, per filter.
    pub pooled_pre: Vec<f64>,
    /// Window start of the pooled maximum, per filter.
    pub pooled_at: Vec<usize>,
    pub features: Vec<f64>,
    /// Features after dropout.
    pub dropped: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: ProbabilityVector,
}

/// Forward pass with an explicit dropout mask (`None` means no dropout).
pub fn forward_with_mask(
    model: &ModelParams,
    d: &SentenceMatrix,
    mask: Option<&[f64]>,
) -> Result<ForwardTrace> {
    let k = model.feature_len();
    let mut pooled_pre = Vec::with_capacity(k);
    let mut pooled_at = Vec::with_capacity(k);
    let mut features = Vec::with_capacity(k);
    let f = model.nonlinearity;
    for filter in &model.filters {
        let pre = filter.pre_activations(d)?;
        let acts: Vec<f64> = pre.iter().map(|&a| f.apply(a)).collect();
        let j = argmax(&acts).ok_or_else(|| Error::Shape("empty feature map".into()))?;
        pooled_pre.push(pre[j]);
        pooled_at.push(j);
        features.push(acts[j]);
    }
    let dropped = match mask {
        None => features.clone(),
        Some(m) => {
            if m.len() != k {
                return Err(Error::Shape(format!("dropout mask of {} for {k} features", m.len())));
            }
            features.iter().zip(m).map(|(x, m)| x * m).collect()
        }
    };
    let y = logits(&dropped, &model.head)?;
    let probs = softmax(&y);
    Ok(ForwardTrace {
        pooled_pre,
        pooled_at,
        features,
        dropped,
        logits: y,
        probs,
    })
}

/// Full network: features, dropout (train mode only), head, softmax.
pub fn forward<R: Rng + ?Sized>(
    model: &ModelParams,
    d: &SentenceMatrix,
    mode: Mode,
    rng: &mut R,
) -> Result<ProbabilityVector> {
    let mask = match mode {
        Mode::Infer => None,
        Mode::Train => Some(sample_dropout_mask(model.feature_len(), model.dropout, rng)?),
    };
    Ok(forward_with_mask(model, d, mask.as_deref())?.probs)
}

/// Inference-mode forward pass; no randomness involved.
pub fn predict(model: &ModelParams, d: &SentenceMatrix) -> Result<ProbabilityVector> {
    Ok(forward_with_mask(model, d, None)?.probs)
}
