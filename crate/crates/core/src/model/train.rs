use serde::{Deserialize, Serialize};

use crate::dataset::{to_tensors, BatchIterator, MisrSample};
use crate::error::{Error, Result};
use crate::rng::mix64;

use super::optim::{cosine_lr, Adam};
use super::real::Real;
use super::SrModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub max_iters: u64,
    pub val_every: u64,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_max: 1e-4,
            lr_min: 1e-7,
            max_iters: 300_000,
            val_every: 1_000,
            patience: 10,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min < self.lr_max) || !(self.lr_min >= 0.0) {
            return Err(Error::InvalidArgument("need 0 <= lr_min < lr_max".into()));
        }
        if self.patience == 0 || self.val_every == 0 || self.batch_size == 0 || self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "patience, val_every, batch_size and max_iters must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One validation checkpoint of the training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: u64,
    /// Mean mini-batch loss since the previous row.
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxIters,
    EarlyStopped,
    Diverged,
}

/// Patience-based stopping on a stream of validation losses.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_iter: Option<u64>,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_iter: None,
            stale: 0,
        }
    }

    /// Records a validation loss; returns `(improved, should_stop)`.
    pub fn observe(&mut self, iter: u64, loss: f64) -> (bool, bool) {
        if loss < self.best {
            self.best = loss;
            self.best_iter = Some(iter);
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.stale >= self.patience)
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_iter(&self) -> Option<u64> {
        self.best_iter
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters at the lowest validation loss.
    pub best_model: SrModel<T>,
    pub best_iter: u64,
    pub best_val_loss: f64,
    pub history: Vec<HistoryRow>,
    pub stop: StopReason,
    pub iterations: u64,
    pub optimizer: Adam,
}

impl<T> TrainOutcome<T> {
    pub fn history_csv(&self) -> String {
        history_csv(&self.history)
    }
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("iter,train_loss,val_loss,lr\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.iter, r.train_loss, r.val_loss, r.lr));
    }
    out
}

/// Mean absolute error over a whole sample set, in batches.
pub fn mean_loss<T: Real>(model: &SrModel<T>, samples: &[MisrSample], batch_size: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = to_tensors::<T>(samples, chunk)?;
        let out = model.forward(&x)?;
        total += out
            .data
            .iter()
            .zip(&y.data)
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .sum::<f64>();
    }
    Ok(total / (samples.len() * out_len()) as f64)
}

fn out_len() -> usize {
    super::HR_SIDE * super::HR_SIDE
}

/// Adam + cosine annealing with periodic validation and early stopping.
pub fn train<T: Real>(
    model: SrModel<T>,
    train_set: &[MisrSample],
    val_set: &[MisrSample],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("train and validation sets must be nonempty".into()));
    }
    let mut model = model;
    let mut adam = Adam::new(model.num_params());
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best_model = model.clone();
    let mut history = Vec::new();
    let indices: Vec<usize> = (0..train_set.len()).collect();
    let (mut iter, mut epoch) = (0u64, 0u64);
    let (mut window_loss, mut window_n) = (0.0, 0usize);
    let mut stop = StopReason::MaxIters;

    'outer: while iter < cfg.max_iters {
        let batches = BatchIterator::new(&indices, cfg.batch_size, mix64(cfg.seed ^ mix64(epoch)))?;
        epoch += 1;
        for batch in batches {
            let lr = cosine_lr(iter, cfg)?;
            let (x, y) = to_tensors::<T>(train_set, &batch)?;
            let (loss, grads) = match model.loss_and_gradients(&x, &y) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => {
                    stop = StopReason::Diverged;
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            if adam.step(model.params_mut(), &grads, lr).is_err() {
                stop = StopReason::Diverged;
                break 'outer;
            }
            iter += 1;
            window_loss += loss;
            window_n += 1;

            if iter % cfg.val_every == 0 || iter == cfg.max_iters {
                let val_loss = mean_loss(&model, val_set, cfg.batch_size)?;
                if !val_loss.is_finite() {
                    stop = StopReason::Diverged;
                    break 'outer;
                }
                let row = HistoryRow {
                    iter,
                    train_loss: window_loss / window_n as f64,
                    val_loss,
                    lr,
                };
                observer(&row);
                history.push(row);
                window_loss = 0.0;
                window_n = 0;
                let (improved, halt) = stopper.observe(iter, val_loss);
                if improved {
                    best_model = model.clone();
                }
                if halt {
                    stop = StopReason::EarlyStopped;
                    break 'outer;
                }
            }
            if iter >= cfg.max_iters {
                break 'outer;
            }
        }
    }
    Ok(TrainOutcome {
        best_model,
        best_iter: stopper.best_iter().unwrap_or(0),
        best_val_loss: stopper.best(),
        history,
        stop,
        iterations: iter,
        optimizer: adam,
    })
}
