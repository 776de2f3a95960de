//! Planted-axis datasets with a known ground-truth direction.
//!
//! Each item gets a label `y` and the embedding `z = y·v* + ε`, where `ε`
//! points in a uniformly random direction with `‖ε‖ ≤ noise·|y|`. An optional
//! isotropic Gaussian background is added on top.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embstore::{make_split, AttributeLabels, EmbeddingSet, ItemId, SplitSpec, ValidatedDataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelDistribution {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std: f64 },
    /// Integers `low..=high`, uniformly; produces tied labels.
    Discrete { low: i64, high: i64 },
}

impl LabelDistribution {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            LabelDistribution::Uniform { low, high } => low + rng.random::<f64>() * (high - low),
            LabelDistribution::Normal { mean, std } => {
                mean + std * normal(rng)
            }
            LabelDistribution::Discrete { low, high } => rng.random_range(low..=high) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub name: String,
    pub n: usize,
    pub dim: usize,
    /// Relative noise bound: `‖ε‖ ≤ noise·|y|`.
    pub noise: f64,
    /// Standard deviation of isotropic noise added to every coordinate.
    #[serde(default)]
    pub background: f64,
    pub labels: LabelDistribution,
    /// Train/val/test fractions.
    pub fractions: (f64, f64, f64),
    pub seed: u64,
    /// Planted direction; a random unit vector when absent.
    #[serde(default)]
    pub axis: Option<Vec<f64>>,
}

impl PlantedSpec {
    pub fn new(n: usize, dim: usize, noise: f64, seed: u64) -> Self {
        Self {
            name: "synthetic".into(),
            n,
            dim,
            noise,
            background: 0.0,
            labels: LabelDistribution::Uniform { low: 1.0, high: 10.0 },
            fractions: (0.6, 0.2, 0.2),
            seed,
            axis: None,
        }
    }

    pub fn with_axis(mut self, axis: Vec<f64>) -> Self {
        self.axis = Some(axis);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub dataset: ValidatedDataset,
    /// The unit direction the labels were planted along.
    pub axis: Vec<f64>,
}

/// Zero-padded ids `item-00000`, so lexicographic and numeric order agree.
pub fn item_ids(n: usize) -> Vec<ItemId> {
    let width = n.saturating_sub(1).to_string().len().max(5);
    (0..n)
        .map(|i| ItemId::new(format!("item-{i:0width$}")).expect("valid id"))
        .collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| normal(rng)).collect()
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = gaussian_vector(dim, &mut rng);
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Two random unit vectors made exactly orthogonal by Gram-Schmidt.
pub fn orthogonal_pair(dim: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let a = random_unit_vector(dim, seed);
    let b = random_unit_vector(dim, seed.wrapping_add(0x9e37_79b9));
    let p = dot(&a, &b);
    let b: Vec<f64> = b.iter().zip(&a).map(|(bi, ai)| bi - p * ai).collect();
    let n = norm(&b);
    (a, b.into_iter().map(|x| x / n).collect())
}

/// Generates a planted-axis dataset with a random train/val/test split.
pub fn planted_dataset(spec: &PlantedSpec) -> Result<PlantedDataset> {
    if spec.dim < 2 || spec.n < 3 {
        return Err(Error::InvalidValue(format!(
            "synthetic data needs dim >= 2 and n >= 3, got dim {} n {}",
            spec.dim, spec.n
        )));
    }
    if !(spec.noise >= 0.0) || !(spec.background >= 0.0) {
        return Err(Error::InvalidValue("noise levels must be nonnegative".into()));
    }
    let axis = match &spec.axis {
        Some(v) if v.len() != spec.dim => {
            return Err(Error::Dim {
                expected: spec.dim,
                found: v.len(),
            })
        }
        Some(v) => {
            let n = norm(v);
            if !(n > 0.0) {
                return Err(Error::DegenerateAxis("planted axis is zero".into()));
            }
            v.iter().map(|x| x / n).collect()
        }
        None => random_unit_vector(spec.dim, spec.seed ^ 0xa5a5_a5a5),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids = item_ids(spec.n);
    let mut data = Vec::with_capacity(spec.n * spec.dim);
    let mut labels = BTreeMap::new();
    for id in &ids {
        let y = spec.labels.sample(&mut rng);
        let dir = gaussian_vector(spec.dim, &mut rng);
        let scale = spec.noise * y.abs() * rng.random::<f64>() / norm(&dir);
        for k in 0..spec.dim {
            let mut z = y * axis[k] + scale * dir[k];
            if spec.background > 0.0 {
                z += spec.background * normal(&mut rng);
            }
            data.push(z);
        }
        labels.insert(id.clone(), y);
    }
    let matrix = Matrix::from_vec(spec.n, spec.dim, data)?;
    let embeddings = EmbeddingSet::new(ids.clone(), matrix, "synthetic")?;
    let labels = AttributeLabels::new("planted", labels)?;
    let split = make_split(&ids, spec.fractions, spec.seed)?;
    Ok(PlantedDataset {
        dataset: ValidatedDataset::from_parts(spec.name.clone(), embeddings, labels, split)?,
        axis,
    })
}

/// Pure Gaussian embeddings for the ids of `dataset`, carrying no label
/// information; stands in for a randomly initialised encoder.
pub fn noise_embeddings(dataset: &ValidatedDataset, seed: u64) -> Result<EmbeddingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (dataset.embeddings.len(), dataset.dim());
    let data = (0..n * d).map(|_| normal(&mut rng)).collect();
    EmbeddingSet::new(
        dataset.embeddings.ids().to_vec(),
        Matrix::from_vec(n, d, data)?,
        "noise",
    )
}

/// Same items and split as `dataset` but with train reduced to its first
/// `n_train` ids; val and test are kept.
pub fn shrink_train(dataset: &ValidatedDataset, n_train: usize) -> Result<ValidatedDataset> {
    if n_train > dataset.split.train.len() {
        return Err(Error::Range(format!(
            "cannot keep {n_train} of {} train items",
            dataset.split.train.len()
        )));
    }
    let split = SplitSpec::new(
        dataset.split.train[..n_train].to_vec(),
        dataset.split.val.clone(),
        dataset.split.test.clone(),
    )?;
    let mut out = ValidatedDataset::from_parts(
        dataset.name.clone(),
        dataset.embeddings.clone(),
        dataset.labels.clone(),
        split,
    )?;
    out.augmented = dataset.augmented.clone();
    Ok(out)
}
