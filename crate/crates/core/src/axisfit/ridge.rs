use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_regression_inputs, mse, FitResult, LinearConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, mean, solve_spd, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    /// L2 strength on the weights (the bias is not penalised).
    pub lambda: f64,
    /// Z-score every feature before fitting. The returned weights and bias
    /// are mapped back to raw coordinates, so they apply to unscaled data.
    #[serde(default)]
    pub standardize: bool,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            standardize: false,
        }
    }
}

const GRAM_CHUNK_ROWS: usize = 512;

/// Upper triangle of `Σ rows (x - shift)(x - shift)ᵀ` and `Σ (x - shift)(y - ȳ)`.
///
/// Row chunks are reduced in index order so the result does not depend on
/// the thread schedule.
fn centered_moments(x: &Matrix, y: &[f64], shift: &[f64], scale: &[f64], y_mean: f64) -> (Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let chunks: Vec<(usize, usize)> = (0..x.rows())
        .step_by(GRAM_CHUNK_ROWS)
        .map(|s| (s, (s + GRAM_CHUNK_ROWS).min(x.rows())))
        .collect();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut gram = vec![0.0; d * d];
            let mut xty = vec![0.0; d];
            let mut z = vec![0.0; d];
            for i in start..end {
                for (k, v) in x.row(i).iter().enumerate() {
                    z[k] = (v - shift[k]) / scale[k];
                }
                let yc = y[i] - y_mean;
                for a in 0..d {
                    let za = z[a];
                    xty[a] += za * yc;
                    let row = &mut gram[a * d..a * d + d];
                    for b in a..d {
                        row[b] += za * z[b];
                    }
                }
            }
            (gram, xty)
        })
        .collect();

    let mut gram = vec![0.0; d * d];
    let mut xty = vec![0.0; d];
    for (g, v) in partials {
        gram.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        xty.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
    }
    (gram, xty)
}

/// Minimises `(1/n) Σ (w·xᵢ + b - yᵢ)² + λ‖w‖²` exactly.
///
/// Solved on centred data: `(XcᵀXc/n + λI) w = Xcᵀyc/n`, `b = ȳ - w·x̄`.
pub fn fit_ridge_closed_form(x: &Matrix, y: &[f64], config: &RidgeConfig) -> Result<FitResult> {
    check_regression_inputs(x, y)?;
    if !(config.lambda >= 0.0) || !config.lambda.is_finite() {
        return Err(Error::InvalidValue(format!(
            "ridge lambda must be a nonnegative number, got {}",
            config.lambda
        )));
    }
    let (n, d) = (x.rows(), x.cols());
    let nf = n as f64;
    let means = x.column_means();
    let scale: Vec<f64> = if config.standardize {
        (0..d)
            .map(|k| {
                let var = x
                    .iter_rows()
                    .map(|r| (r[k] - means[k]).powi(2))
                    .sum::<f64>()
                    / nf;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; d]
    };
    let y_mean = mean(y);

    let (mut gram, mut rhs) = centered_moments(x, y, &means, &scale, y_mean);
    for a in 0..d {
        for b in a..d {
            let v = gram[a * d + b] / nf;
            gram[a * d + b] = v;
            gram[b * d + a] = v;
        }
        gram[a * d + a] += config.lambda;
        rhs[a] /= nf;
    }
    let w_scaled = solve_spd(&gram, &rhs, d).map_err(|e| match e {
        Error::SingularSystem(msg) if config.lambda == 0.0 => Error::SingularSystem(format!(
            "{msg}; centred inputs are rank deficient at lambda = 0, use lambda > 0"
        )),
        other => other,
    })?;

    let weights: Vec<f64> = w_scaled.iter().zip(&scale).map(|(w, s)| w / s).collect();
    let bias = y_mean - dot(&weights, &means);
    let train_loss = mse(x.iter_rows().map(|r| dot(&weights, r) + bias), y);

    Ok(FitResult {
        weights,
        bias,
        train_loss,
        val_rho: None,
        config: LinearConfig::Ridge(config.clone()),
        seed: 0,
    })
}
