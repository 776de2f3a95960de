use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::search_data;
use crate::axisfit::{
    axis_from_weights, extreme_pair_axis, fit_ridge_closed_form, hyperparameter_search,
    ExtremeSpec, HyperSearchSpec, RidgeConfig, Trainer,
};
use crate::embstore::{ItemId, SplitPart, ValidatedDataset};
use crate::error::{Error, Result};
use crate::metrics::evaluate_axis;

pub const DEFAULT_REPEATS: usize = 5;
pub const DEFAULT_TAIL_QUANTILE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    LabeledFewShot,
    ExtremePairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum FewShotSolver {
    /// Closed-form ridge; deterministic given the subsample.
    ClosedForm(RidgeConfig),
    /// SGD linear regressor chosen by random search on the validation split.
    Sgd(HyperSearchSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Train subsample size, or exemplars per tail for extreme pairs.
    pub size: usize,
    pub mean_rho: f64,
    /// Sample standard deviation over repeats (0 for a single repeat).
    pub std_rho: f64,
    pub rhos: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotCurve {
    pub dataset: String,
    pub mode: CurveMode,
    pub repeats: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_quantile: Option<f64>,
    pub points: Vec<CurvePoint>,
}

impl FewShotCurve {
    pub fn sizes(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.size).collect()
    }
}

/// `16, 32, 64, ...` below `n_train`, then `n_train` itself.
pub fn default_sizes(n_train: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = std::iter::successors(Some(16usize), |s| s.checked_mul(2))
        .take_while(|s| *s < n_train)
        .collect();
    if n_train > 0 {
        sizes.push(n_train);
    }
    sizes
}

fn check_sizes(sizes: &[usize], repeats: usize) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("no curve sizes given".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidValue("repeats must be positive".into()));
    }
    if sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidValue(format!(
            "sizes must be positive and strictly increasing, got {sizes:?}"
        )));
    }
    Ok(())
}

fn summarize(size: usize, rhos: Vec<f64>) -> CurvePoint {
    let n = rhos.len() as f64;
    let mean_rho = rhos.iter().sum::<f64>() / n;
    let std_rho = if rhos.len() > 1 {
        (rhos.iter().map(|r| (r - mean_rho).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    CurvePoint {
        size,
        mean_rho,
        std_rho,
        rhos,
    }
}

/// Runs `job(size, repeat)` for every grid cell in parallel and gathers
/// the results in grid order.
fn grid<F>(sizes: &[usize], repeats: usize, job: F) -> Result<Vec<CurvePoint>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let cells: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&s| (0..repeats).map(move |r| (s, r)))
        .collect();
    let rhos: Vec<f64> = cells
        .par_iter()
        .map(|&(s, r)| job(s, r))
        .collect::<Result<_>>()?;
    Ok(sizes
        .iter()
        .zip(rhos.chunks(repeats))
        .map(|(&s, chunk)| summarize(s, chunk.to_vec()))
        .collect())
}

/// `k` ids drawn without replacement from `pool`, kept in pool order.
fn subsample(pool: &[ItemId], k: usize, seed: u64) -> Vec<ItemId> {
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), pool.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

/// Test SRCC of linear axes fitted on random train subsamples of each size.
/// Repeat `i` draws its subsample with seed `seed + i`.
pub fn few_shot_curve(
    dataset: &ValidatedDataset,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
    solver: &FewShotSolver,
) -> Result<FewShotCurve> {
    check_sizes(sizes, repeats)?;
    let train = &dataset.split.train;
    let largest = *sizes.last().expect("non-empty");
    if largest > train.len() {
        return Err(Error::Range(format!(
            "size {largest} exceeds the {} train items",
            train.len()
        )));
    }
    let points = grid(sizes, repeats, |size, rep| {
        let rep_seed = seed.wrapping_add(rep as u64);
        let ids = subsample(train, size, rep_seed);
        let fit = match solver {
            FewShotSolver::ClosedForm(cfg) => {
                let (x, y) = dataset.xy_for(&ids)?;
                fit_ridge_closed_form(&x, &y, cfg)?
            }
            FewShotSolver::Sgd(spec) => {
                let data = search_data(dataset, &ids)?;
                let spec = HyperSearchSpec {
                    seed: spec.seed.wrapping_add(rep_seed),
                    ..spec.clone()
                };
                let result = hyperparameter_search(&data.view(), &spec, Trainer::SgdLinear)?;
                result.best.as_linear().expect("linear trainer").clone()
            }
        };
        let axis = axis_from_weights(&fit)?;
        Ok(evaluate_axis(&axis, dataset, SplitPart::Test)?.rho)
    })?;
    Ok(FewShotCurve {
        dataset: dataset.name.clone(),
        mode: CurveMode::LabeledFewShot,
        repeats,
        seed,
        tail_quantile: None,
        points,
    })
}

/// Train ids sorted by (label, id) and the tail length `max(1, ceil(q·n))`.
fn tails(dataset: &ValidatedDataset, q: f64) -> Result<(Vec<ItemId>, usize)> {
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::Range(format!("tail quantile {q} outside (0, 0.5)")));
    }
    let mut sorted: Vec<(f64, ItemId)> = dataset
        .split
        .train
        .iter()
        .map(|id| Ok((dataset.labels.values_for(std::slice::from_ref(id))?[0], id.clone())))
        .collect::<Result<_>>()?;
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let n = sorted.len();
    let t = ((q * n as f64).ceil() as usize).max(1);
    if 2 * t > n {
        return Err(Error::Range(format!(
            "train split of {n} items is too small for two disjoint tails of {t}"
        )));
    }
    Ok((sorted.into_iter().map(|p| p.1).collect(), t))
}

/// The bottom and top `q` tails of train labels, each of `max(1, ceil(q·n))` ids.
pub fn label_tails(dataset: &ValidatedDataset, q: f64) -> Result<(Vec<ItemId>, Vec<ItemId>)> {
    let (sorted, t) = tails(dataset, q)?;
    let n = sorted.len();
    Ok((sorted[..t].to_vec(), sorted[n - t..].to_vec()))
}

/// Test SRCC of extreme-pair axes built from `k` exemplars drawn from each
/// of the bottom and top `tail_quantile` of train labels.
pub fn extreme_shot_curve(
    dataset: &ValidatedDataset,
    k_values: &[usize],
    tail_quantile: f64,
    repeats: usize,
    seed: u64,
) -> Result<FewShotCurve> {
    check_sizes(k_values, repeats)?;
    let (sorted, t) = tails(dataset, tail_quantile)?;
    let largest = *k_values.last().expect("non-empty");
    if largest > t {
        return Err(Error::Range(format!(
            "k = {largest} exceeds the tail size {t} at quantile {tail_quantile}"
        )));
    }
    let (low_tail, high_tail) = (&sorted[..t], &sorted[sorted.len() - t..]);
    let points = grid(k_values, repeats, |k, rep| {
        let rep_seed = seed.wrapping_add(rep as u64);
        let low = subsample(low_tail, k, rep_seed);
        let high = subsample(high_tail, k, rep_seed.wrapping_add(0x5bd1_e995));
        let axis = extreme_pair_axis(&dataset.embeddings, &ExtremeSpec::new(low, high)?)?
            .with_provenance("tail_quantile", tail_quantile);
        Ok(evaluate_axis(&axis, dataset, SplitPart::Test)?.rho)
    })?;
    Ok(FewShotCurve {
        dataset: dataset.name.clone(),
        mode: CurveMode::ExtremePairs,
        repeats,
        seed,
        tail_quantile: Some(tail_quantile),
        points,
    })
}
