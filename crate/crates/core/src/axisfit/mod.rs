//! Rank-axis estimation.
//!
//! Axes come from four sources:
//!
//! * linear regression on labelled embeddings, solved in closed form
//!   ([`fit_ridge_closed_form`]) or by minibatch SGD with a cosine learning
//!   rate schedule ([`fit_linear_sgd`]); the axis is the normalised weight
//!   vector ([`axis_from_weights`]);
//! * the normalised difference of the mean embeddings of a few low and high
//!   exemplars ([`extreme_pair_axis`]);
//! * a text-prompt embedding, or the difference of two
//!   ([`zero_shot_single_prompt_axis`], [`zero_shot_difference_axis`]).
//!
//! A two-layer rectifier MLP ([`fit_mlp`]) is also provided; it yields no
//! axis but bounds how much ordinal information the embeddings hold.

mod directions;
mod mlp;
mod ridge;
mod search;
mod sgd;

use serde::{Deserialize, Serialize};

use crate::embstore::{AxisMethod, AxisRecord};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use directions::{
    extreme_pair_axis, zero_shot_difference_axis, zero_shot_single_prompt_axis, ExtremeSpec,
    PromptEmbeddingSet,
};
pub use mlp::{fit_mlp, MlpConfig, MlpFit, MlpGradient, MlpRegressor};
pub use ridge::{fit_ridge_closed_form, RidgeConfig};
pub use search::{
    hyperparameter_search, log_uniform, prompt_search, rank_candidates, run_trials,
    sample_trial_configs, HyperSearchSpec, LeaderboardEntry, PromptSearchResult, SearchData,
    SearchResult, TrainedModel, Trainer, TrialConfig, TrialOutcome,
};
pub use sgd::{cosine_lr, fit_linear_sgd, SgdConfig};

/// Configuration a linear fit was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum LinearConfig {
    Ridge(RidgeConfig),
    Sgd(SgdConfig),
}

/// A fitted linear regressor `y ≈ w·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Mean squared error on the training rows (penalty excluded).
    pub train_loss: f64,
    /// Validation SRCC, filled in when the fit was scored on a validation split.
    pub val_rho: Option<f64>,
    pub config: LinearConfig,
    pub seed: u64,
}

impl FitResult {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| crate::linalg::dot(&self.weights, r) + self.bias)
            .collect()
    }
}

/// Turns a linear fit into a rank axis: `vector = w/‖w‖`, `offset = b`.
pub fn axis_from_weights(result: &FitResult) -> Result<AxisRecord> {
    let n = crate::linalg::norm(&result.weights);
    if !(n > 0.0) {
        return Err(Error::DegenerateAxis(
            "fitted weight vector is zero".into(),
        ));
    }
    let method = match result.config {
        LinearConfig::Ridge(_) => AxisMethod::Ridge,
        LinearConfig::Sgd(_) => AxisMethod::SgdLinear,
    };
    let mut axis = AxisRecord::from_direction(&result.weights, result.bias, method)?
        .with_provenance("seed", result.seed)
        .with_provenance("train_loss", result.train_loss);
    if let Ok(serde_json::Value::Object(cfg)) = serde_json::to_value(&result.config) {
        for (k, v) in cfg {
            axis = axis.with_provenance(&k, v);
        }
    }
    if let Some(rho) = result.val_rho {
        axis = axis.with_provenance("val_rho", rho);
    }
    Ok(axis)
}

/// Shared argument checks for the regressors.
fn check_regression_inputs(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Dim {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "regression needs at least 2 samples, got {}",
            y.len()
        )));
    }
    if x.cols() == 0 {
        return Err(Error::Shape("regression inputs have no features".into()));
    }
    if !y.iter().any(|v| *v != y[0]) {
        return Err(Error::DegenerateInput(
            "labels are constant; at least 2 distinct values are required".into(),
        ));
    }
    if x.as_slice().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("regression inputs are not finite".into()));
    }
    Ok(())
}

fn mse(pred: impl Iterator<Item = f64>, y: &[f64]) -> f64 {
    pred.zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}
