use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embstore::{AxisRecord, SplitPart, ValidatedDataset};
use crate::error::{Error, Result};
use crate::metrics::{cosine_similarity, evaluate_axis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub datasets: Vec<String>,
    /// `srcc_matrix[i][j]`: axis fitted on dataset `i`, evaluated on the
    /// test split of dataset `j`.
    pub srcc_matrix: Vec<Vec<f64>>,
    /// Cosine similarity between the axes of datasets `i` and `j`.
    pub cosine_matrix: Vec<Vec<f64>>,
}

/// Cross-evaluates every axis on every dataset's test split.
pub fn transfer_matrix(fitted: &[(&ValidatedDataset, &AxisRecord)]) -> Result<TransferReport> {
    if fitted.is_empty() {
        return Err(Error::EmptyInput("no fitted axes to compare".into()));
    }
    let d = fitted[0].1.dim;
    for (ds, axis) in fitted {
        for found in [axis.dim, ds.dim()] {
            if found != d {
                return Err(Error::Dim { expected: d, found });
            }
        }
    }
    let k = fitted.len();
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let srcc: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| Ok(evaluate_axis(fitted[i].1, fitted[j].0, SplitPart::Test)?.rho))
        .collect::<Result<_>>()?;

    let mut cosine = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let c = cosine_similarity(&fitted[i].1.vector, &fitted[j].1.vector)?;
            cosine[i][j] = c;
            cosine[j][i] = c;
        }
    }
    Ok(TransferReport {
        datasets: fitted.iter().map(|(ds, _)| ds.name.clone()).collect(),
        srcc_matrix: srcc.chunks(k).map(<[f64]>::to_vec).collect(),
        cosine_matrix: cosine,
    })
}
