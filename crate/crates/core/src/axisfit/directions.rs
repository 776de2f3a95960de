use std::collections::HashSet;
use std::path::Path;

use crate::embstore::{load_npy, AxisMethod, AxisRecord, EmbeddingSet, ItemId};
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

/// Smallest separation accepted between the two ends of an axis.
const MIN_SEPARATION: f64 = 1e-12;

/// Low and high exemplar sets used to build an axis without labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtremeSpec {
    low: Vec<ItemId>,
    high: Vec<ItemId>,
}

fn dedup(ids: Vec<ItemId>) -> Vec<ItemId> {
    let mut seen = HashSet::new();
    ids.into_iter().filter(|id| seen.insert(id.clone())).collect()
}

impl ExtremeSpec {
    pub fn new(low: Vec<ItemId>, high: Vec<ItemId>) -> Result<Self> {
        let (low, high) = (dedup(low), dedup(high));
        if low.is_empty() || high.is_empty() {
            return Err(Error::EmptyInput(
                "both the low and the high exemplar sets need at least one id".into(),
            ));
        }
        let lows: HashSet<&ItemId> = low.iter().collect();
        let shared: Vec<String> = high
            .iter()
            .filter(|id| lows.contains(id))
            .map(ToString::to_string)
            .collect();
        if !shared.is_empty() {
            return Err(Error::DegenerateAxis(format!(
                "ids marked both low and high: {}",
                shared.join(",")
            )));
        }
        Ok(Self { low, high })
    }

    pub fn from_strs<S: AsRef<str>>(low: &[S], high: &[S]) -> Result<Self> {
        let parse = |ids: &[S]| {
            ids.iter()
                .map(|s| ItemId::new(s.as_ref()))
                .collect::<Result<Vec<_>>>()
        };
        Self::new(parse(low)?, parse(high)?)
    }

    pub fn low(&self) -> &[ItemId] {
        &self.low
    }

    pub fn high(&self) -> &[ItemId] {
        &self.high
    }

    pub fn swapped(&self) -> Self {
        Self {
            low: self.high.clone(),
            high: self.low.clone(),
        }
    }
}

fn mean_of_rows(embeddings: &EmbeddingSet, rows: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; embeddings.dim()];
    for &i in rows {
        acc.iter_mut()
            .zip(embeddings.matrix().row(i))
            .for_each(|(a, v)| *a += v);
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn difference_axis(high: &[f64], low: &[f64], method: AxisMethod, what: &str) -> Result<AxisRecord> {
    if high.len() != low.len() {
        return Err(Error::Dim {
            expected: high.len(),
            found: low.len(),
        });
    }
    let diff: Vec<f64> = high.iter().zip(low).map(|(h, l)| h - l).collect();
    let n = norm(&diff);
    if !(n > MIN_SEPARATION) {
        return Err(Error::DegenerateAxis(format!(
            "{what} coincide (separation {n:e})"
        )));
    }
    AxisRecord::from_direction(&diff, 0.0, method)
}

/// Unit vector from the mean of the low exemplars to the mean of the high
/// exemplars.
pub fn extreme_pair_axis(embeddings: &EmbeddingSet, spec: &ExtremeSpec) -> Result<AxisRecord> {
    let low_rows = embeddings.indices_of(spec.low())?;
    let high_rows = embeddings.indices_of(spec.high())?;
    let x_low = mean_of_rows(embeddings, &low_rows);
    let x_high = mean_of_rows(embeddings, &high_rows);
    Ok(
        difference_axis(&x_high, &x_low, AxisMethod::Extremes, "low and high cluster means")?
            .with_provenance("n_low", spec.low().len())
            .with_provenance("n_high", spec.high().len()),
    )
}

pub fn zero_shot_single_prompt_axis(prompt_row: &[f64]) -> Result<AxisRecord> {
    if !(norm(prompt_row) > 0.0) {
        return Err(Error::DegenerateAxis("prompt embedding is zero".into()));
    }
    AxisRecord::from_direction(prompt_row, 0.0, AxisMethod::ZeroShotSingle)
}

pub fn zero_shot_difference_axis(e_high: &[f64], e_low: &[f64]) -> Result<AxisRecord> {
    difference_axis(e_high, e_low, AxisMethod::ZeroShotDiff, "prompt embeddings")
}

/// Precomputed text-prompt embeddings, row-aligned with their prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbeddingSet {
    prompts: Vec<String>,
    matrix: Matrix,
}

impl PromptEmbeddingSet {
    pub fn new(prompts: Vec<String>, matrix: Matrix) -> Result<Self> {
        if prompts.len() != matrix.rows() {
            return Err(Error::Shape(format!(
                "{} prompts for {} embedding rows",
                prompts.len(),
                matrix.rows()
            )));
        }
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("prompt embeddings are not finite".into()));
        }
        Ok(Self { prompts, matrix })
    }

    /// Loads an NPY matrix and its sidecar text file (one prompt per line).
    pub fn load(npy_path: &Path, prompts_path: &Path) -> Result<Self> {
        let matrix = load_npy(npy_path)?;
        let text = std::fs::read_to_string(prompts_path)
            .map_err(|e| Error::Io {
                path: prompts_path.to_path_buf(),
                source: e,
            })?;
        let prompts = text
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
            .collect();
        Self::new(prompts, matrix)
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn find(&self, prompt: &str) -> Result<usize> {
        self.prompts
            .iter()
            .position(|p| p == prompt)
            .ok_or_else(|| Error::consistency("unknown prompt", vec![prompt.to_string()]))
    }

    /// One single-prompt axis per row, tagged with its prompt.
    pub fn single_axes(&self) -> Result<Vec<AxisRecord>> {
        (0..self.len())
            .map(|i| {
                Ok(zero_shot_single_prompt_axis(self.row(i))?
                    .with_id(format!("prompt-{i}"))
                    .with_provenance("prompt", self.prompts[i].clone()))
            })
            .collect()
    }

    /// Difference axes for consecutive rows read as `(high, low)` pairs.
    pub fn pair_axes(&self) -> Result<Vec<AxisRecord>> {
        if self.len() % 2 != 0 {
            return Err(Error::Shape(format!(
                "prompt pairs need an even number of rows, got {}",
                self.len()
            )));
        }
        (0..self.len() / 2)
            .map(|k| {
                let (hi, lo) = (2 * k, 2 * k + 1);
                Ok(zero_shot_difference_axis(self.row(hi), self.row(lo))?
                    .with_id(format!("pair-{k}"))
                    .with_provenance("prompt_high", self.prompts[hi].clone())
                    .with_provenance("prompt_low", self.prompts[lo].clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn single_point_clusters() {
        let set = EmbeddingSet::from_rows(&["l", "u"], &[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let spec = ExtremeSpec::from_strs(&["l"], &["u"]).unwrap();
        let axis = extreme_pair_axis(&set, &spec).unwrap();
        assert_eq!(axis.vector, vec![0.6, 0.8]);
        assert_eq!(axis.offset, 0.0);
        assert_eq!(axis.method, AxisMethod::Extremes);
    }

    #[test]
    fn two_point_clusters() {
        let set = EmbeddingSet::from_rows(
            &["a", "b", "c", "d"],
            &[[0.0, 0.0], [0.0, 2.0], [4.0, 1.0], [4.0, 3.0]],
        )
        .unwrap();
        let spec = ExtremeSpec::from_strs(&["a", "b"], &["c", "d"]).unwrap();
        let axis = extreme_pair_axis(&set, &spec).unwrap();
        let s = 17f64.sqrt();
        assert!(close(&axis.vector, &[4.0 / s, 1.0 / s], 1e-15));
        assert!(close(&axis.vector, &[0.970143, 0.242536], 1e-6));

        let swapped = extreme_pair_axis(&set, &spec.swapped()).unwrap();
        let neg: Vec<f64> = axis.vector.iter().map(|v| -v).collect();
        assert_eq!(swapped.vector, neg);
    }

    #[test]
    fn coincident_means_and_unknown_ids() {
        let set = EmbeddingSet::from_rows(&["a", "b"], &[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let spec = ExtremeSpec::from_strs(&["a"], &["b"]).unwrap();
        assert_eq!(
            extreme_pair_axis(&set, &spec).unwrap_err().code(),
            "DegenerateAxis"
        );
        let spec = ExtremeSpec::from_strs(&["a"], &["zz"]).unwrap();
        assert_eq!(
            extreme_pair_axis(&set, &spec).unwrap_err().code(),
            "ConsistencyError"
        );
    }

    #[test]
    fn spec_invariants() {
        assert_eq!(
            ExtremeSpec::from_strs(&["a"], &["a"]).unwrap_err().code(),
            "DegenerateAxis"
        );
        let empty: [&str; 0] = [];
        assert_eq!(
            ExtremeSpec::from_strs(&empty, &["a"]).unwrap_err().code(),
            "EmptyInput"
        );
    }

    #[test]
    fn single_prompt_examples() {
        assert_eq!(zero_shot_single_prompt_axis(&[0.0, 2.0]).unwrap().vector, vec![0.0, 1.0]);
        let unit = [0.6, 0.8];
        assert!(close(&zero_shot_single_prompt_axis(&unit).unwrap().vector, &unit, 1e-12));
        assert_eq!(
            zero_shot_single_prompt_axis(&[1.0; 4]).unwrap().vector,
            vec![0.5; 4]
        );
        assert_eq!(
            zero_shot_single_prompt_axis(&[0.0, 0.0]).unwrap_err().code(),
            "DegenerateAxis"
        );
    }

    #[test]
    fn difference_prompt_examples() {
        assert_eq!(
            zero_shot_difference_axis(&[1.0, 0.0], &[0.0, 0.0]).unwrap().vector,
            vec![1.0, 0.0]
        );
        let a = zero_shot_difference_axis(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!(close(&a.vector, &[h, h], 1e-15));
        let b = zero_shot_difference_axis(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert_eq!(b.vector, a.vector.iter().map(|v| -v).collect::<Vec<_>>());
        assert_eq!(
            zero_shot_difference_axis(&[1.0, 1.0], &[1.0, 1.0]).unwrap_err().code(),
            "DegenerateAxis"
        );
    }

    #[test]
    fn prompt_set_axes() {
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [0.0, 0.0]]).unwrap();
        let prompts = vec!["old".into(), "young".into(), "elderly".into(), "baby".into()];
        let set = PromptEmbeddingSet::new(prompts, m).unwrap();
        assert_eq!(set.find("elderly").unwrap(), 2);
        let pairs = set.pair_axes().unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].vector, vec![1.0, 0.0]);
        assert_eq!(pairs[0].provenance["prompt_low"], "young");
        // the zero row makes its single-prompt axis degenerate
        assert_eq!(set.single_axes().unwrap_err().code(), "DegenerateAxis");
    }
}
