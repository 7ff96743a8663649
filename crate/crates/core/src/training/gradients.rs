//! Loss, exact backpropagation, and the finite-difference oracle.

use std::collections::BTreeMap;

use crate::nn::{forward_with_mask, log_sum_exp, ModelParams, ProbabilityVector, SentenceMatrix};
use crate::{Error, Result};

/// Floor applied to the gold probability before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Negative log-likelihood of the gold class.
pub fn nll_loss(probs: &ProbabilityVector, gold: usize) -> Result<f64> {
    let p = probs
        .as_slice()
        .get(gold)
        .ok_or_else(|| Error::Shape(format!("gold class {gold} out of range")))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// NLL computed from logits as `logsumexp(y) - y[gold]`. Matches
/// [`nll_loss`] away from the floor and keeps full precision near zero loss.
pub fn nll_from_logits(logits: &[f64], gold: usize) -> f64 {
    log_sum_exp(logits) - logits[gold]
}

/// Batch loss: the sum of per-document losses.
pub fn batch_loss<I: IntoIterator<Item = f64>>(losses: I) -> f64 {
    losses.into_iter().sum()
}

/// One gradient array per parameter array of [`ModelParams`], in the order of
/// [`ModelParams::arrays`], plus optional gradients for embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub arrays: Vec<Vec<f64>>,
    pub embeddings: BTreeMap<String, Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelParams) -> Self {
        Gradients {
            arrays: model.arrays().iter().map(|(_, a)| vec![0.0; a.len()]).collect(),
            embeddings: BTreeMap::new(),
        }
    }

    pub fn filter_weights(&self, i: usize) -> &[f64] {
        &self.arrays[2 * i]
    }

    pub fn filter_bias(&self, i: usize) -> f64 {
        self.arrays[2 * i + 1][0]
    }

    pub fn head_weights(&self) -> &[f64] {
        &self.arrays[self.arrays.len() - 2]
    }

    pub fn head_bias(&self) -> &[f64] {
        &self.arrays[self.arrays.len() - 1]
    }

    /// Elementwise `self += other`.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (tok, g) in &other.embeddings {
            let slot = self
                .embeddings
                .entry(tok.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            for (x, y) in slot.iter_mut().zip(g) {
                *x += y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.arrays.iter().flatten().all(|x| x.is_finite())
            && self.embeddings.values().flatten().all(|x| x.is_finite())
    }

    /// Largest absolute entry of the model-parameter gradients.
    pub fn max_abs(&self) -> f64 {
        self.arrays.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Result of a backward pass on one document.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: Gradients,
    /// Gradient with respect to the sentence matrix, row-major.
    pub input: Vec<f64>,
    pub loss: f64,
    pub probs: ProbabilityVector,
}

/// Exact gradients of `nll ∘ forward` for one document.
///
/// The same dropout mask that was used for the forward pass must be passed
/// here. Max pooling routes the gradient to the first maximal window only.
pub fn backward(model: &ModelParams, d: &SentenceMatrix, gold: usize, mask: Option<&[f64]>) -> Result<Gradients> {
    backward_full(model, d, gold, mask).map(|b| b.grads)
}

pub fn backward_full(
    model: &ModelParams,
    d: &SentenceMatrix,
    gold: usize,
    mask: Option<&[f64]>,
) -> Result<Backprop> {
    let classes = model.classes();
    if gold >= classes {
        return Err(Error::Shape(format!("gold class {gold} out of range for {classes} classes")));
    }
    let trace = forward_with_mask(model, d, mask)?;
    let k = model.feature_len();
    let head = &model.head;

    // dL/dy = p - onehot(gold)
    let mut dy = trace.probs.as_slice().to_vec();
    dy[gold] -= 1.0;

    let mut grads = Gradients::zeros_like(model);
    let n_arrays = grads.arrays.len();
    {
        let gu = &mut grads.arrays[n_arrays - 2];
        for (j, &dyj) in dy.iter().enumerate() {
            for (t, &x) in trace.dropped.iter().enumerate() {
                gu[j * k + t] = dyj * x;
            }
        }
    }
    grads.arrays[n_arrays - 1].copy_from_slice(&dy);

    let s = d.cols();
    let mut input = vec![0.0; d.rows() * s];
    for (t, filter) in model.filters.iter().enumerate() {
        let mut g = 0.0;
        for (j, &dyj) in dy.iter().enumerate() {
            g += head.row(j)[t] * dyj;
        }
        if let Some(m) = mask {
            g *= m[t];
        }
        let g_pre = g * model.nonlinearity.derivative(trace.pooled_pre[t]);
        let start = trace.pooled_at[t] * s;
        let window = &d.as_slice()[start..start + filter.height() * s];
        let gw = &mut grads.arrays[2 * t];
        for (gw, &x) in gw.iter_mut().zip(window) {
            *gw = g_pre * x;
        }
        grads.arrays[2 * t + 1][0] = g_pre;
        for (gi, &w) in input[start..start + filter.height() * s].iter_mut().zip(&filter.weights) {
            *gi += g_pre * w;
        }
    }

    Ok(Backprop {
        grads,
        input,
        loss: nll_from_logits(&trace.logits, gold),
        probs: trace.probs,
    })
}

/// Loss used by the finite-difference oracle.
pub fn document_loss(model: &ModelParams, d: &SentenceMatrix, gold: usize, mask: Option<&[f64]>) -> Result<f64> {
    let trace = forward_with_mask(model, d, mask)?;
    Ok(nll_from_logits(&trace.logits, gold))
}

/// Central difference `(f(x + eps) - f(x - eps)) / 2 eps`.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Numerical gradient of the document loss by central differences over
/// every model parameter, holding the dropout mask fixed.
pub fn finite_difference_gradient(
    model: &ModelParams,
    d: &SentenceMatrix,
    gold: usize,
    mask: Option<&[f64]>,
    eps: f64,
) -> Result<Gradients> {
    let mut probe = model.clone();
    let mut grads = Gradients::zeros_like(model);
    for a in 0..grads.arrays.len() {
        for i in 0..grads.arrays[a].len() {
            let original = probe.arrays_mut()[a][i];
            let mut eval = |x: f64| -> Result<f64> {
                probe.arrays_mut()[a][i] = x;
                document_loss(&probe, d, gold, mask)
            };
            let plus = eval(original + eps)?;
            let minus = eval(original - eps)?;
            probe.arrays_mut()[a][i] = original;
            grads.arrays[a][i] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grads)
}

/// Numerical gradient with respect to the sentence matrix entries.
pub fn finite_difference_input(
    model: &ModelParams,
    d: &SentenceMatrix,
    gold: usize,
    mask: Option<&[f64]>,
    eps: f64,
) -> Result<Vec<f64>> {
    let mut probe = d.clone();
    let mut out = vec![0.0; d.as_slice().len()];
    for (i, o) in out.iter_mut().enumerate() {
        let original = probe.as_slice()[i];
        probe.as_mut_slice()[i] = original + eps;
        let plus = document_loss(model, &probe, gold, mask)?;
        probe.as_mut_slice()[i] = original - eps;
        let minus = document_loss(model, &probe, gold, mask)?;
        probe.as_mut_slice()[i] = original;
        *o = (plus - minus) / (2.0 * eps);
    }
    Ok(out)
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn max_relative_error(a: &Gradients, b: &Gradients) -> f64 {
    a.arrays
        .iter()
        .flatten()
        .zip(b.arrays.iter().flatten())
        .map(|(&x, &y)| relative_error(x, y))
        .fold(0.0, f64::max)
}
