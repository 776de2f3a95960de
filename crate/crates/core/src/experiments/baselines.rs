use serde::{Deserialize, Serialize};

use crate::axisfit::{
    axis_from_weights, hyperparameter_search, HyperSearchSpec, SearchData, TrainedModel, Trainer,
};
use crate::embstore::{AxisRecord, SplitPart, ValidatedDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{evaluate_axis, spearman_rho};

/// Test SRCCs of one embedding source on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dataset: String,
    pub source_tag: String,
    pub attribute_name: String,
    /// Linear fit on the uninformative (no-train) embeddings.
    pub rho_notrain: f64,
    pub rho_linear: f64,
    pub rho_nonlinear: f64,
    /// `rho_linear - rho_notrain`.
    pub linear_gain: f64,
    /// `rho_nonlinear - rho_linear`.
    pub nonlinear_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BaselineReport {
    pub rows: Vec<BaselineRow>,
}

/// A baseline row plus the axes it was computed from.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub row: BaselineRow,
    pub linear_axis: AxisRecord,
    pub notrain_axis: AxisRecord,
}

/// Owned train (optionally augmented) and validation matrices of a dataset.
pub struct OwnedSearchData {
    train: (Matrix, Vec<f64>),
    augmented: Option<(Matrix, Vec<f64>)>,
    val: (Matrix, Vec<f64>),
}

impl OwnedSearchData {
    pub fn view(&self) -> SearchData<'_> {
        SearchData {
            train_x: &self.train.0,
            train_y: &self.train.1,
            augmented: self.augmented.as_ref().map(|(x, y)| (x, y.as_slice())),
            val_x: &self.val.0,
            val_y: &self.val.1,
        }
    }
}

/// Search inputs for `dataset`, training on `train_ids`.
pub fn search_data(dataset: &ValidatedDataset, train_ids: &[crate::embstore::ItemId]) -> Result<OwnedSearchData> {
    if dataset.split.val.is_empty() {
        return Err(Error::Split(format!(
            "dataset {:?} has no validation split for model selection",
            dataset.name
        )));
    }
    let train = dataset.xy_for(train_ids)?;
    let augmented = match dataset.augmented {
        Some(_) => Some(dataset.train_xy_augmented(train_ids)?),
        None => None,
    };
    Ok(OwnedSearchData {
        train,
        augmented,
        val: dataset.xy(SplitPart::Val)?,
    })
}

fn linear_axis(dataset: &ValidatedDataset, search: &HyperSearchSpec) -> Result<AxisRecord> {
    let data = search_data(dataset, &dataset.split.train)?;
    let result = hyperparameter_search(&data.view(), search, Trainer::SgdLinear)?;
    let fit = result.best.as_linear().expect("linear trainer");
    Ok(axis_from_weights(fit)?
        .with_attribute(dataset.attribute_name())
        .with_id(format!("{}-{}-linear", dataset.name, dataset.embeddings.source_tag())))
}

fn nonlinear_rho(dataset: &ValidatedDataset, search: &HyperSearchSpec) -> Result<f64> {
    let data = search_data(dataset, &dataset.split.train)?;
    let result = hyperparameter_search(&data.view(), search, Trainer::Mlp)?;
    let (x, y) = dataset.xy(SplitPart::Test)?;
    let model: &TrainedModel = &result.best;
    spearman_rho(&model.predict(&x), &y)
}

/// Linear and MLP test SRCCs on `trained`, and the linear SRCC on
/// `notrain`, each selected by random search on the validation split.
pub fn run_baselines(
    trained: &ValidatedDataset,
    notrain: &ValidatedDataset,
    search: &HyperSearchSpec,
) -> Result<BaselineOutcome> {
    if trained.split != notrain.split {
        return Err(Error::Split(
            "trained and no-train datasets must share the split".into(),
        ));
    }
    let (lin, (mlp, nt)) = rayon::join(
        || linear_axis(trained, search),
        || rayon::join(|| nonlinear_rho(trained, search), || linear_axis(notrain, search)),
    );
    let (linear_axis, rho_nonlinear, notrain_axis) = (lin?, mlp?, nt?);
    let rho_linear = evaluate_axis(&linear_axis, trained, SplitPart::Test)?.rho;
    let rho_notrain = evaluate_axis(&notrain_axis, notrain, SplitPart::Test)?.rho;
    Ok(BaselineOutcome {
        row: BaselineRow {
            dataset: trained.name.clone(),
            source_tag: trained.embeddings.source_tag().to_string(),
            attribute_name: trained.attribute_name().to_string(),
            rho_notrain,
            rho_linear,
            rho_nonlinear,
            linear_gain: rho_linear - rho_notrain,
            nonlinear_gap: rho_nonlinear - rho_linear,
        },
        linear_axis,
        notrain_axis,
    })
}
