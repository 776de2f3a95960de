use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sgd::{diverged, BatchPlan};
use super::{check_regression_inputs, cosine_lr, mse, SgdConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, mean, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_width: usize,
    #[serde(flatten)]
    pub sgd: SgdConfig,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_width: 512,
            sgd: SgdConfig::default(),
        }
    }
}

/// `ŷ(x) = w2 · max(0, W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRegressor {
    /// `h×d` hidden weights.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Gradient with the same layout as [`MlpRegressor`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpRegressor {
    /// Uniform fan-in initialisation of both layers; the output bias starts
    /// at `output_bias` (the label mean when training).
    pub fn init(input_dim: usize, hidden_width: usize, output_bias: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = 1.0 / (input_dim as f64).sqrt();
        let a2 = 1.0 / (hidden_width as f64).sqrt();
        let mut uniform = |a: f64| (rng.random::<f64>() * 2.0 - 1.0) * a;
        let w1: Vec<f64> = (0..hidden_width * input_dim).map(|_| uniform(a1)).collect();
        let b1 = (0..hidden_width).map(|_| uniform(a1)).collect();
        let w2 = (0..hidden_width).map(|_| uniform(a2)).collect();
        Self {
            w1: Matrix::from_vec(hidden_width, input_dim, w1).expect("shape"),
            b1,
            w2,
            b2: output_bias,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.w1.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    fn hidden(&self, x: &[f64], out: &mut [f64]) {
        for (j, h) in out.iter_mut().enumerate() {
            *h = (dot(self.w1.row(j), x) + self.b1[j]).max(0.0);
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden_width()];
        self.hidden(x, &mut h);
        dot(&self.w2, &h) + self.b2
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden_width()];
        x.iter_rows()
            .map(|r| {
                self.hidden(r, &mut h);
                dot(&self.w2, &h) + self.b2
            })
            .collect()
    }

    fn penalty(&self) -> f64 {
        self.w1.as_slice().iter().map(|v| v * v).sum::<f64>()
            + self.w2.iter().map(|v| v * v).sum::<f64>()
    }

    /// `(1/n) Σ (ŷᵢ - yᵢ)² + wd (‖W1‖² + ‖w2‖²)`.
    pub fn loss(&self, x: &Matrix, y: &[f64], weight_decay: f64) -> f64 {
        mse(self.predict(x).into_iter(), y) + weight_decay * self.penalty()
    }

    /// Loss over the rows `batch` and its gradient by backpropagation.
    pub fn loss_and_grad_rows(
        &self,
        x: &Matrix,
        y: &[f64],
        batch: &[usize],
        weight_decay: f64,
    ) -> (f64, MlpGradient) {
        let (h, d) = (self.hidden_width(), self.input_dim());
        let mut grad = MlpGradient {
            w1: Matrix::zeros(h, d),
            b1: vec![0.0; h],
            w2: vec![0.0; h],
            b2: 0.0,
        };
        let scale = 1.0 / batch.len() as f64;
        let mut pre = vec![0.0; h];
        let mut act = vec![0.0; h];
        let mut sq = 0.0;
        for &i in batch {
            let row = x.row(i);
            for j in 0..h {
                pre[j] = dot(self.w1.row(j), row) + self.b1[j];
                act[j] = pre[j].max(0.0);
            }
            let r = dot(&self.w2, &act) + self.b2 - y[i];
            sq += r * r;
            let dy = 2.0 * r * scale;
            grad.b2 += dy;
            for j in 0..h {
                grad.w2[j] += dy * act[j];
                if pre[j] > 0.0 {
                    let dh = dy * self.w2[j];
                    grad.b1[j] += dh;
                    grad.w1
                        .row_mut(j)
                        .iter_mut()
                        .zip(row)
                        .for_each(|(g, v)| *g += dh * v);
                }
            }
        }
        if weight_decay != 0.0 {
            for j in 0..h {
                grad.w2[j] += 2.0 * weight_decay * self.w2[j];
                for (g, w) in grad.w1.row_mut(j).iter_mut().zip(self.w1.row(j)) {
                    *g += 2.0 * weight_decay * w;
                }
            }
        }
        (sq * scale + weight_decay * self.penalty(), grad)
    }

    pub fn loss_and_grad(&self, x: &Matrix, y: &[f64], weight_decay: f64) -> (f64, MlpGradient) {
        let all: Vec<usize> = (0..x.rows()).collect();
        self.loss_and_grad_rows(x, y, &all, weight_decay)
    }

    fn step(&mut self, grad: &MlpGradient, lr: f64) {
        for j in 0..self.hidden_width() {
            for (w, g) in self.w1.row_mut(j).iter_mut().zip(grad.w1.row(j)) {
                *w -= lr * g;
            }
        }
        self.b1.iter_mut().zip(&grad.b1).for_each(|(w, g)| *w -= lr * g);
        self.w2.iter_mut().zip(&grad.w2).for_each(|(w, g)| *w -= lr * g);
        self.b2 -= lr * grad.b2;
    }

    fn is_finite(&self) -> bool {
        self.w1
            .as_slice()
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .all(|v| v.is_finite())
            && self.b2.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFit {
    pub model: MlpRegressor,
    /// Mean squared error on the training rows.
    pub train_loss: f64,
    pub val_rho: Option<f64>,
    pub config: MlpConfig,
}

/// Trains `model` in place with the cosine-scheduled minibatch SGD loop.
pub(crate) fn train_mlp(model: &mut MlpRegressor, x: &Matrix, y: &[f64], config: &MlpConfig) -> Result<f64> {
    let sgd = &config.sgd;
    let mut plan = BatchPlan::new(x.rows(), sgd.batch_size, sgd.seed);
    let initial_loss = model.loss(x, y, 0.0);
    for epoch in 0..sgd.epochs {
        let lr = cosine_lr(sgd.lr0, epoch, sgd.epochs);
        for batch in plan.next_epoch() {
            let (_, grad) = model.loss_and_grad_rows(x, y, batch, sgd.weight_decay);
            model.step(&grad, lr);
        }
        if !model.is_finite() || diverged(model.loss(x, y, 0.0), initial_loss) {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(model.loss(x, y, 0.0))
}

/// Two-layer rectifier MLP regressor trained by minibatch SGD; weight decay
/// applies to `W1` and `w2` only.
pub fn fit_mlp(x: &Matrix, y: &[f64], config: &MlpConfig) -> Result<MlpFit> {
    check_regression_inputs(x, y)?;
    config.sgd.validate()?;
    if config.hidden_width == 0 {
        return Err(Error::InvalidValue("hidden width must be at least 1".into()));
    }
    let mut model = MlpRegressor::init(x.cols(), config.hidden_width, mean(y), config.sgd.seed);
    let train_loss = train_mlp(&mut model, x, y, config)?;
    Ok(MlpFit {
        model,
        train_loss,
        val_rho: None,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axisfit::{fit_ridge_closed_form, RidgeConfig};

    #[test]
    fn zero_output_weights_predict_bias() {
        let mut model = MlpRegressor::init(3, 4, 0.0, 1);
        model.w2 = vec![0.0; 4];
        model.b2 = 2.5;
        assert_eq!(model.predict_row(&[1.0, -2.0, 3.0]), 2.5);
        assert_eq!(model.predict_row(&[0.0, 0.0, 0.0]), 2.5);
    }

    #[test]
    fn beats_linear_fit_on_quadratic() {
        let xs: Vec<[f64; 1]> = (-2..=2).map(|v| [f64::from(v)]).collect();
        let x = Matrix::from_rows(&xs).unwrap();
        let y: Vec<f64> = xs.iter().map(|r| r[0] * r[0]).collect();
        let linear = fit_ridge_closed_form(&x, &y, &RidgeConfig::default()).unwrap();
        // symmetric inputs: best line is flat at the mean, loss = var(y) = 2.8
        assert!((linear.train_loss - 2.8).abs() < 1e-12);

        let cfg = MlpConfig {
            hidden_width: 8,
            sgd: SgdConfig {
                lr0: 0.05,
                weight_decay: 0.0,
                epochs: 2000,
                batch_size: 5,
                seed: 0,
            },
        };
        let fit = fit_mlp(&x, &y, &cfg).unwrap();
        assert!(
            fit.train_loss < linear.train_loss,
            "mlp {} vs linear {}",
            fit.train_loss,
            linear.train_loss
        );
    }

    #[test]
    fn zero_hidden_weights_reduce_to_constant() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [-1.0, 3.0]]).unwrap();
        let y = [1.0, 4.0, 2.0, 7.0];
        let mut model = MlpRegressor::init(2, 3, 0.0, 5);
        model.w1 = Matrix::zeros(3, 2);
        model.b1 = vec![0.0; 3];
        let cfg = MlpConfig {
            hidden_width: 3,
            sgd: SgdConfig {
                lr0: 0.2,
                weight_decay: 0.0,
                epochs: 300,
                batch_size: 4,
                seed: 0,
            },
        };
        let loss = train_mlp(&mut model, &x, &y, &cfg).unwrap();
        let m = mean(&y);
        let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64;
        assert!((loss - var).abs() < 1e-9, "loss {loss} var {var}");
        assert!((model.b2 - m).abs() < 1e-6);
        assert!(model.w1.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_zero_width() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let cfg = MlpConfig {
            hidden_width: 0,
            ..MlpConfig::default()
        };
        assert!(fit_mlp(&x, &[1.0, 2.0], &cfg).is_err());
    }
}
