/// Absolute slack: a new loss counts as an improvement only below `best - MIN_DELTA`.
pub const MIN_DELTA: f64 = 1e-6;

/// Patience-based early stopping over a validation-loss sequence.
///
/// Keeps a snapshot of whatever state the caller associates with the best
/// epoch so it can be restored when training stops.
#[derive(Debug, Clone)]
pub struct EarlyStopping<T> {
    patience: Option<usize>,
    best: Option<(usize, f64, T)>,
    since_best: usize,
    seen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl<T> EarlyStopping<T> {
    /// `None` disables stopping; the best snapshot is still tracked.
    pub fn new(patience: Option<usize>) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
            seen: 0,
        }
    }

    /// Record the loss of the next epoch. `snapshot` is only called when the
    /// epoch is a new best.
    pub fn observe<F: FnOnce() -> T>(&mut self, loss: f64, snapshot: F) -> Observation {
        let epoch = self.seen;
        self.seen += 1;
        let improved = match &self.best {
            None => true,
            Some((_, best, _)) => loss < best - MIN_DELTA,
        };
        if improved {
            self.best = Some((epoch, loss, snapshot()));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        let stop = self.patience.is_some_and(|p| self.since_best >= p);
        Observation { improved, stop }
    }

    /// Zero-based index of the best epoch so far.
    pub fn best_index(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.0)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.1)
    }

    pub fn into_best(self) -> Option<(usize, T)> {
        self.best.map(|(i, _, t)| (i, t))
    }
}
