use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{fit_mlp, MlpConfig, MlpFit};
use super::sgd::{fit_linear_sgd, SgdConfig};
use super::{check_regression_inputs, FitResult};
use crate::embstore::{AttributeLabels, AxisRecord, EmbeddingSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::spearman_rho;

/// Random search over learning rate and weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSearchSpec {
    pub n_trials: usize,
    pub lr_range: (f64, f64),
    pub wd_range: (f64, f64),
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Only used by the MLP trainer.
    pub hidden_width: usize,
}

impl Default for HyperSearchSpec {
    fn default() -> Self {
        Self {
            n_trials: 30,
            lr_range: (1e-6, 1e-1),
            wd_range: (1e-7, 1e-4),
            seed: 0,
            epochs: 100,
            batch_size: 128,
            hidden_width: 512,
        }
    }
}

impl HyperSearchSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("lr", self.lr_range), ("weight decay", self.wd_range)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidValue(format!(
                    "{name} range must satisfy 0 < low < high, got ({lo}, {hi})"
                )));
            }
        }
        if self.n_trials == 0 || self.epochs == 0 || self.batch_size == 0 || self.hidden_width == 0
        {
            return Err(Error::InvalidValue(
                "trials, epochs, batch size and hidden width must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    SgdLinear,
    Mlp,
}

/// `exp(ln lo + u (ln hi - ln lo))`, clamped into `[lo, hi]` against rounding.
pub fn log_uniform(u: f64, lo: f64, hi: f64) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    (a + u * (b - a)).exp().clamp(lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub index: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    /// Train on flip-augmented rows as well (only when they are available).
    pub augment: bool,
    pub seed: u64,
}

/// Draws the trial list. Each trial consumes three uniforms in a fixed
/// order (lr, weight decay, augmentation coin) from one seeded stream.
pub fn sample_trial_configs(spec: &HyperSearchSpec) -> Result<Vec<TrialConfig>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.n_trials)
        .map(|index| {
            let lr0 = log_uniform(rng.random(), spec.lr_range.0, spec.lr_range.1);
            let weight_decay = log_uniform(rng.random(), spec.wd_range.0, spec.wd_range.1);
            let augment = rng.random::<f64>() < 0.5;
            TrialConfig {
                index,
                lr0,
                weight_decay,
                augment,
                seed: spec.seed.wrapping_add(index as u64),
            }
        })
        .collect())
}

/// Training and validation data for a search.
#[derive(Debug, Clone, Copy)]
pub struct SearchData<'a> {
    pub train_x: &'a Matrix,
    pub train_y: &'a [f64],
    /// Train rows stacked with their flip-augmented copies.
    pub augmented: Option<(&'a Matrix, &'a [f64])>,
    pub val_x: &'a Matrix,
    pub val_y: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Linear(FitResult),
    Mlp(MlpFit),
}

impl TrainedModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        match self {
            TrainedModel::Linear(fit) => fit.predict(x),
            TrainedModel::Mlp(fit) => fit.model.predict(x),
        }
    }

    pub fn val_rho(&self) -> Option<f64> {
        match self {
            TrainedModel::Linear(fit) => fit.val_rho,
            TrainedModel::Mlp(fit) => fit.val_rho,
        }
    }

    pub fn as_linear(&self) -> Option<&FitResult> {
        match self {
            TrainedModel::Linear(fit) => Some(fit),
            TrainedModel::Mlp(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub config: TrialConfig,
    pub val_rho: Option<f64>,
    pub train_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: TrainedModel,
    pub best_index: usize,
    /// Every trial, in trial-index order.
    pub trials: Vec<TrialOutcome>,
}

fn run_one(
    data: &SearchData<'_>,
    trial: &TrialConfig,
    trainer: Trainer,
    spec: &HyperSearchSpec,
) -> Result<TrainedModel> {
    let (x, y) = match (trial.augment, data.augmented) {
        (true, Some(aug)) => aug,
        _ => (data.train_x, data.train_y),
    };
    let sgd = SgdConfig {
        lr0: trial.lr0,
        weight_decay: trial.weight_decay,
        epochs: spec.epochs,
        batch_size: spec.batch_size,
        seed: trial.seed,
    };
    let mut model = match trainer {
        Trainer::SgdLinear => TrainedModel::Linear(fit_linear_sgd(x, y, &sgd)?),
        Trainer::Mlp => TrainedModel::Mlp(fit_mlp(
            x,
            y,
            &MlpConfig {
                hidden_width: spec.hidden_width,
                sgd,
            },
        )?),
    };
    let rho = spearman_rho(&model.predict(data.val_x), data.val_y)?;
    match &mut model {
        TrainedModel::Linear(fit) => fit.val_rho = Some(rho),
        TrainedModel::Mlp(fit) => fit.val_rho = Some(rho),
    }
    Ok(model)
}

/// Trains every trial (in parallel) and keeps the one with the highest
/// validation SRCC; ties go to the lowest trial index. Failed trials
/// (divergence, constant predictions) are logged and skipped.
pub fn run_trials(
    data: &SearchData<'_>,
    trials: &[TrialConfig],
    trainer: Trainer,
    spec: &HyperSearchSpec,
) -> Result<SearchResult> {
    check_regression_inputs(data.train_x, data.train_y)?;
    if data.val_x.rows() != data.val_y.len() {
        return Err(Error::Dim {
            expected: data.val_x.rows(),
            found: data.val_y.len(),
        });
    }
    if data.val_x.cols() != data.train_x.cols() {
        return Err(Error::Dim {
            expected: data.train_x.cols(),
            found: data.val_x.cols(),
        });
    }
    if data.val_y.len() < 2 || !data.val_y.iter().any(|v| *v != data.val_y[0]) {
        return Err(Error::DegenerateInput(
            "validation labels need at least 2 distinct values".into(),
        ));
    }
    if trials.is_empty() {
        return Err(Error::EmptyInput("no trials to run".into()));
    }

    let results: Vec<Result<TrainedModel>> = trials
        .par_iter()
        .map(|t| run_one(data, t, trainer, spec))
        .collect();

    let mut best: Option<(usize, TrainedModel)> = None;
    let mut log = Vec::with_capacity(trials.len());
    for (pos, (trial, result)) in trials.iter().zip(results).enumerate() {
        match result {
            Ok(model) => {
                let rho = model.val_rho().expect("scored above");
                let train_loss = match &model {
                    TrainedModel::Linear(f) => f.train_loss,
                    TrainedModel::Mlp(f) => f.train_loss,
                };
                log.push(TrialOutcome {
                    config: trial.clone(),
                    val_rho: Some(rho),
                    train_loss: Some(train_loss),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, b)) => rho > b.val_rho().expect("scored"),
                };
                if better {
                    best = Some((pos, model));
                }
            }
            Err(e) => {
                log::debug!("trial {} failed: {e}", trial.index);
                log.push(TrialOutcome {
                    config: trial.clone(),
                    val_rho: None,
                    train_loss: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (pos, model) = best.ok_or(Error::AllTrialsFailed {
        trials: trials.len(),
    })?;
    Ok(SearchResult {
        best: model,
        best_index: trials[pos].index,
        trials: log,
    })
}

/// Samples `spec.n_trials` configurations and returns the best by
/// validation SRCC, with the full trial log.
pub fn hyperparameter_search(
    data: &SearchData<'_>,
    spec: &HyperSearchSpec,
    trainer: Trainer,
) -> Result<SearchResult> {
    let trials = sample_trial_configs(spec)?;
    run_trials(data, &trials, trainer, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub index: usize,
    pub axis_id: String,
    /// `None` when the candidate's projections were constant.
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSearchResult {
    pub best: AxisRecord,
    pub rho_val: f64,
    /// Sorted by descending SRCC, ties by candidate index; unscorable last.
    pub leaderboard: Vec<LeaderboardEntry>,
}

/// Scores every candidate axis on `(x, y)` and returns the best.
pub fn rank_candidates(candidates: &[AxisRecord], x: &Matrix, y: &[f64]) -> Result<PromptSearchResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidate axes".into()));
    }
    if let Some(c) = candidates.iter().find(|c| c.dim != x.cols()) {
        return Err(Error::Dim {
            expected: x.cols(),
            found: c.dim,
        });
    }
    if x.rows() != y.len() {
        return Err(Error::Dim {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if y.len() < 2 || !y.iter().any(|v| *v != y[0]) {
        return Err(Error::DegenerateInput(
            "validation labels need at least 2 distinct values".into(),
        ));
    }
    let scores: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|axis| {
            let proj: Vec<f64> = x.iter_rows().map(|r| axis.project(r)).collect();
            spearman_rho(&proj, y).ok()
        })
        .collect();

    let mut leaderboard: Vec<LeaderboardEntry> = candidates
        .iter()
        .zip(&scores)
        .enumerate()
        .map(|(index, (axis, rho))| LeaderboardEntry {
            index,
            axis_id: axis.axis_id.clone(),
            rho: *rho,
        })
        .collect();
    // stable sort keeps index order among equal scores
    leaderboard.sort_by(|a, b| match (a.rho, b.rho) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let top = &leaderboard[0];
    let rho_val = top.rho.ok_or_else(|| {
        Error::DegenerateInput("every candidate projects the split to a constant".into())
    })?;
    Ok(PromptSearchResult {
        best: candidates[top.index].clone().with_provenance("val_rho", rho_val),
        rho_val,
        leaderboard,
    })
}

/// Prompt search over candidate axes, scored on a validation embedding set.
pub fn prompt_search(
    candidates: &[AxisRecord],
    val_embeddings: &EmbeddingSet,
    val_labels: &AttributeLabels,
) -> Result<PromptSearchResult> {
    let y = val_labels.values_for(val_embeddings.ids())?;
    rank_candidates(candidates, val_embeddings.matrix(), &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embstore::AxisMethod;
    use crate::linalg::dot;

    fn axis(v: &[f64], id: &str) -> AxisRecord {
        AxisRecord::from_direction(v, 0.0, AxisMethod::ZeroShotSingle)
            .unwrap()
            .with_id(id)
    }

    fn grid() -> (Matrix, Vec<f64>) {
        let rows: Vec<[f64; 2]> = (0..12)
            .map(|i| {
                let t = f64::from(i);
                [t, (t * 2.3).sin() * 4.0]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn single_candidate() {
        let (x, y) = grid();
        let r = rank_candidates(&[axis(&[1.0, 0.0], "a")], &x, &y).unwrap();
        assert_eq!(r.best.axis_id, "a");
        assert_eq!(r.rho_val, 1.0);
    }

    #[test]
    fn opposite_candidates() {
        let (x, y) = grid();
        let v = axis(&[1.0, 0.3], "v");
        let neg = v.negated().with_id("neg");
        let r = rank_candidates(&[neg, v], &x, &y).unwrap();
        assert_eq!(r.best.axis_id, "v");
        let rhos: Vec<f64> = r.leaderboard.iter().map(|e| e.rho.unwrap()).collect();
        assert_eq!(rhos[0], -rhos[1]);
        assert!(rhos[0] > 0.0);
    }

    #[test]
    fn leaderboard_matches_independent_evaluation() {
        let (x, y) = grid();
        let cands = vec![
            axis(&[0.2, 1.0], "weak"),
            axis(&[1.0, 0.0], "exact"),
            axis(&[1.0, 0.8], "mid"),
        ];
        let r = rank_candidates(&cands, &x, &y).unwrap();
        let mut expected: Vec<(String, f64)> = cands
            .iter()
            .map(|c| {
                let p: Vec<f64> = (0..x.rows()).map(|i| dot(&c.vector, x.row(i))).collect();
                (c.axis_id.clone(), spearman_rho(&p, &y).unwrap())
            })
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1));
        let got: Vec<(String, f64)> = r
            .leaderboard
            .iter()
            .map(|e| (e.axis_id.clone(), e.rho.unwrap()))
            .collect();
        assert_eq!(got, expected);
        assert_eq!(r.best.axis_id, "exact");
    }

    #[test]
    fn ties_go_to_earliest() {
        let (x, y) = grid();
        let r = rank_candidates(&[axis(&[1.0, 0.0], "first"), axis(&[1.0, 0.0], "second")], &x, &y)
            .unwrap();
        assert_eq!(r.best.axis_id, "first");
    }

    #[test]
    fn empty_candidates() {
        let (x, y) = grid();
        assert_eq!(rank_candidates(&[], &x, &y).unwrap_err().code(), "EmptyInput");
    }

    #[test]
    fn sampled_configs_respect_bounds_and_seed() {
        let spec = HyperSearchSpec {
            n_trials: 500,
            seed: 42,
            ..HyperSearchSpec::default()
        };
        let a = sample_trial_configs(&spec).unwrap();
        for t in &a {
            assert!((1e-6..=1e-1).contains(&t.lr0), "{}", t.lr0);
            assert!((1e-7..=1e-4).contains(&t.weight_decay), "{}", t.weight_decay);
        }
        assert_eq!(a, sample_trial_configs(&spec).unwrap());
        assert_eq!(a.len(), 500);
        // the log of a log-uniform draw is uniform: check its mean roughly
        let mean_log = a.iter().map(|t| t.lr0.log10()).sum::<f64>() / a.len() as f64;
        assert!((mean_log - (-3.5)).abs() < 0.3, "{mean_log}");
    }

    #[test]
    fn log_uniform_endpoints() {
        assert!((log_uniform(0.0, 1e-6, 1e-1) - 1e-6).abs() < 1e-20);
        assert!((log_uniform(1.0, 1e-6, 1e-1) - 1e-1).abs() < 1e-16);
        assert!((log_uniform(0.5, 1e-4, 1e-2) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn planted_config_wins() {
        // correlated features: the first gradient step points away from the
        // true weights, so an under-trained model ranks imperfectly
        let truth = [1.0, -1.0];
        let rows: Vec<[f64; 2]> = (0..60)
            .map(|i| {
                let t = f64::from(i) / 60.0;
                [t + 0.5 * (f64::from(i) * 1.7).sin(), t + 0.5 * (f64::from(i) * 0.9).cos()]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| dot(&truth, r)).collect();
        let (vx, vy) = (x.select_rows(&(40..60).collect::<Vec<_>>()), y[40..].to_vec());
        let (tx, ty) = (x.select_rows(&(0..40).collect::<Vec<_>>()), y[..40].to_vec());
        let data = SearchData {
            train_x: &tx,
            train_y: &ty,
            augmented: None,
            val_x: &vx,
            val_y: &vy,
        };
        let spec = HyperSearchSpec {
            epochs: 300,
            batch_size: 8,
            ..HyperSearchSpec::default()
        };
        let trial = |index, lr0| TrialConfig {
            index,
            lr0,
            weight_decay: 0.0,
            augment: false,
            seed: 1,
        };
        let trials = vec![trial(0, 1e-6), trial(1, 1e3), trial(2, 0.5), trial(3, 1e-5)];
        let result = run_trials(&data, &trials, Trainer::SgdLinear, &spec).unwrap();
        assert_eq!(result.best_index, 2);
        assert_eq!(result.best.val_rho(), Some(1.0));
        assert!(result.trials[1].error.is_some());
        assert!(result.trials[0].val_rho.unwrap() < 1.0);
        assert_eq!(result.trials.len(), 4);
    }

    #[test]
    fn all_failed() {
        let x = Matrix::from_rows(&[[100.0, 0.0], [0.0, 100.0], [50.0, 50.0], [10.0, 80.0]]).unwrap();
        let y = [1.0, 2.0, 3.0, 4.0];
        let data = SearchData {
            train_x: &x,
            train_y: &y,
            augmented: None,
            val_x: &x,
            val_y: &y,
        };
        let spec = HyperSearchSpec {
            epochs: 50,
            ..HyperSearchSpec::default()
        };
        let trials = vec![TrialConfig {
            index: 0,
            lr0: 50.0,
            weight_decay: 0.0,
            augment: false,
            seed: 0,
        }];
        let err = run_trials(&data, &trials, Trainer::SgdLinear, &spec).unwrap_err();
        assert_eq!(err.code(), "AllTrialsFailed");
    }
}
