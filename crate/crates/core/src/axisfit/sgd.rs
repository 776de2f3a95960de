use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_regression_inputs, mse, FitResult, LinearConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Training counts as diverged once the loss exceeds this multiple of the
/// loss at initialisation. Without it a run whose weights exploded and then
/// froze under the decaying learning rate would pass as finite.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Whether `loss` signals divergence from a start at `initial_loss`.
pub(crate) fn diverged(loss: f64, initial_loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial_loss.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr0: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-2,
            weight_decay: 0.0,
            epochs: 100,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "lr0 must be positive, got {}",
                self.lr0
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidValue(
                "epochs and batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Learning rate for epoch `t` of `total`: `lr0 · ½(1 + cos(πt/total))`.
pub fn cosine_lr(lr0: f64, t: usize, total: usize) -> f64 {
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos())
}

/// Epoch-wise shuffled minibatches; the final partial batch is kept.
pub(crate) struct BatchPlan {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    batch_size: usize,
}

impl BatchPlan {
    pub(crate) fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            batch_size,
        }
    }

    pub(crate) fn next_epoch(&mut self) -> std::slice::Chunks<'_, usize> {
        self.order.shuffle(&mut self.rng);
        self.order.chunks(self.batch_size)
    }
}

/// Minibatch SGD on the same objective as the closed-form solver,
/// `(1/n) Σ (w·xᵢ + b - yᵢ)² + λ‖w‖²` with `λ = weight_decay`.
///
/// Parameters start at zero. The learning rate follows [`cosine_lr`] per
/// epoch, and the data is reshuffled every epoch from a generator seeded
/// with `config.seed`.
pub fn fit_linear_sgd(x: &Matrix, y: &[f64], config: &SgdConfig) -> Result<FitResult> {
    check_regression_inputs(x, y)?;
    config.validate()?;
    let d = x.cols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad_w = vec![0.0; d];
    let mut plan = BatchPlan::new(x.rows(), config.batch_size, config.seed);
    let initial_loss = mse(std::iter::repeat_n(0.0, x.rows()), y);

    for epoch in 0..config.epochs {
        let lr = cosine_lr(config.lr0, epoch, config.epochs);
        for batch in plan.next_epoch() {
            let scale = 2.0 / batch.len() as f64;
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for &i in batch {
                let row = x.row(i);
                let r = dot(&w, row) + b - y[i];
                grad_b += r;
                grad_w.iter_mut().zip(row).for_each(|(g, v)| *g += r * v);
            }
            for (wk, gk) in w.iter_mut().zip(&grad_w) {
                *wk -= lr * (scale * gk + 2.0 * config.weight_decay * *wk);
            }
            b -= lr * scale * grad_b;
        }
        let loss = mse(x.iter_rows().map(|r| dot(&w, r) + b), y);
        if diverged(loss, initial_loss) {
            return Err(Error::Diverged { epoch });
        }
    }

    let train_loss = mse(x.iter_rows().map(|r| dot(&w, r) + b), y);
    Ok(FitResult {
        weights: w,
        bias: b,
        train_loss,
        val_rho: None,
        config: LinearConfig::Sgd(config.clone()),
        seed: config.seed,
    })
}
