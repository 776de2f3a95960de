use std::path::Path;

use anyhow::{Context, Result};
use rankaxis_core::axisfit::{
    axis_from_weights, extreme_pair_axis, fit_ridge_closed_form, hyperparameter_search, prompt_search,
    zero_shot_difference_axis, zero_shot_single_prompt_axis, ExtremeSpec, HyperSearchSpec,
    PromptEmbeddingSet, RidgeConfig, Trainer,
};
use rankaxis_core::embstore::{
    load_axis, load_embedding_set, save_axis, validate_dataset, write_npy, AxisMethod, AxisRecord,
    DatasetManifest, EmbeddingSet, ItemId, SplitPart, ValidatedDataset,
};
use rankaxis_core::experiments::{
    default_sizes, extreme_shot_curve, few_shot_curve, label_tails, run_baselines, search_data,
    transfer_matrix, BaselineReport, FewShotSolver, Report,
};
use rankaxis_core::metrics::evaluate_axis;
use rankaxis_core::rankquery::{percentile_item, rank_items, Order};
use rankaxis_core::synthetic::{noise_embeddings, planted_dataset, PlantedSpec};
use rankaxis_core::{write_atomic, Error};
use serde_json::json;

use crate::output::{print_json_line, print_value, write_reports};
use crate::{
    BaselinesArgs, CurveSolver, ExtremeshotArgs, FewshotArgs, FitArgs, FitMethod, GlobalOpts, SearchOpts,
    SynthArgs, TransferArgs,
};

fn load_dataset(path: &Path) -> Result<ValidatedDataset> {
    let manifest = DatasetManifest::load(path)?;
    validate_dataset(&manifest).with_context(|| format!("dataset {}", path.display()))
}

fn search_spec(g: &GlobalOpts, s: &SearchOpts) -> HyperSearchSpec {
    HyperSearchSpec {
        n_trials: s.n_trials,
        epochs: s.epochs,
        batch_size: s.batch_size,
        hidden_width: s.hidden_width,
        seed: g.seed,
        ..HyperSearchSpec::default()
    }
}

pub fn ingest(g: &GlobalOpts, manifest: &Path) -> Result<()> {
    print_value(g, &load_dataset(manifest)?.summary())
}

pub fn fit(g: &GlobalOpts, args: &FitArgs) -> Result<()> {
    if args.method == FitMethod::Mlp {
        return fit_mlp(g, args);
    }
    let manifest = DatasetManifest::load(&args.manifest)?;
    let axis = match args.method {
        FitMethod::Ridge => {
            let ds = validate_dataset(&manifest)?;
            let (x, y) = ds.xy(SplitPart::Train)?;
            let config = RidgeConfig {
                lambda: args.lambda,
                standardize: args.standardize,
            };
            let mut result = fit_ridge_closed_form(&x, &y, &config)?;
            if !ds.split.val.is_empty() {
                let (vx, vy) = ds.xy(SplitPart::Val)?;
                result.val_rho = Some(rankaxis_core::metrics::spearman_rho(&result.predict(&vx), &vy)?);
            }
            axis_from_weights(&result)?.with_attribute(ds.attribute_name())
        }
        FitMethod::Sgd => {
            let ds = validate_dataset(&manifest)?;
            let data = search_data(&ds, &ds.split.train)?;
            let search = hyperparameter_search(&data.view(), &search_spec(g, &args.search), Trainer::SgdLinear)?;
            let best = search.best.as_linear().expect("linear trainer yields linear fits");
            axis_from_weights(best)?
                .with_provenance("best_trial", search.best_index)
                .with_attribute(ds.attribute_name())
        }
        FitMethod::Extremes => fit_extremes(&manifest, args)?,
        FitMethod::ZeroshotSingle | FitMethod::ZeroshotDiff => fit_zero_shot(&manifest, args)?,
        FitMethod::Mlp => unreachable!(),
    };
    let method = serde_json::to_value(axis.method)?;
    let axis = axis.with_id(format!("{}-{}", manifest.name, method.as_str().unwrap_or("axis")));
    save_axis(&axis, &args.out)?;
    print_value(
        g,
        &json!({
            "axis_id": axis.axis_id,
            "method": axis.method,
            "dim": axis.dim,
            "attribute_name": axis.attribute_name,
            "val_rho": axis.provenance.get("val_rho"),
            "out": args.out,
        }),
    )
}

fn fit_mlp(g: &GlobalOpts, args: &FitArgs) -> Result<()> {
    let ds = load_dataset(&args.manifest)?;
    let data = search_data(&ds, &ds.split.train)?;
    let search = hyperparameter_search(&data.view(), &search_spec(g, &args.search), Trainer::Mlp)?;
    let text = serde_json::to_string_pretty(&search.best)?;
    write_atomic(&args.out, text.as_bytes())?;
    print_value(
        g,
        &json!({
            "model": "mlp",
            "best_trial": search.best_index,
            "val_rho": search.best.val_rho(),
            "out": args.out,
        }),
    )
}

fn fit_extremes(manifest: &DatasetManifest, args: &FitArgs) -> Result<AxisRecord> {
    match (args.tail_quantile, args.low.is_empty() && args.high.is_empty()) {
        (Some(q), true) => {
            let ds = validate_dataset(manifest)?;
            let (low, high) = label_tails(&ds, q)?;
            Ok(extreme_pair_axis(&ds.embeddings, &ExtremeSpec::new(low, high)?)?
                .with_provenance("tail_quantile", q)
                .with_attribute(ds.attribute_name()))
        }
        (None, false) => {
            let emb = load_embedding_set(manifest)?;
            let spec = ExtremeSpec::from_strs(&args.low, &args.high)?;
            let mut axis = extreme_pair_axis(&emb, &spec)?;
            if let Some(name) = &manifest.attribute_name {
                axis = axis.with_attribute(name.clone());
            }
            Ok(axis)
        }
        _ => Err(Error::InvalidValue(
            "extremes needs either --low and --high or --tail-quantile".into(),
        )
        .into()),
    }
}

fn fit_zero_shot(manifest: &DatasetManifest, args: &FitArgs) -> Result<AxisRecord> {
    let (Some(npy), Some(txt)) = (&args.prompt_embeddings, &args.prompts) else {
        return Err(Error::InvalidValue("zero-shot fits need --prompt-embeddings and --prompts".into()).into());
    };
    let prompts = PromptEmbeddingSet::load(npy, txt)?;
    let single = args.method == FitMethod::ZeroshotSingle;
    let chosen = if single {
        args.prompt
            .as_deref()
            .map(|p| Ok::<_, Error>(zero_shot_single_prompt_axis(prompts.row(prompts.find(p)?))?.with_provenance("prompt", p)))
    } else {
        match (&args.prompt_high, &args.prompt_low) {
            (Some(hi), Some(lo)) => Some((|| {
                let axis = zero_shot_difference_axis(prompts.row(prompts.find(hi)?), prompts.row(prompts.find(lo)?))?;
                Ok(axis.with_provenance("prompt_high", hi.as_str()).with_provenance("prompt_low", lo.as_str()))
            })()),
            (None, None) => None,
            _ => return Err(Error::InvalidValue("give both --prompt-high and --prompt-low".into()).into()),
        }
    };
    if let Some(axis) = chosen {
        let axis = axis?;
        let emb = load_embedding_set(manifest)?;
        if emb.dim() != axis.dim {
            return Err(Error::Dim {
                expected: emb.dim(),
                found: axis.dim,
            }
            .into());
        }
        return Ok(match &manifest.attribute_name {
            Some(name) => axis.with_attribute(name.clone()),
            None => axis,
        });
    }
    // prompt search: pick the candidate with the best validation SRCC
    let ds = validate_dataset(manifest)?;
    if ds.split.val.is_empty() {
        return Err(Error::Split("prompt search needs a validation split".into()).into());
    }
    let candidates = if single { prompts.single_axes()? } else { prompts.pair_axes()? };
    let (vx, _) = ds.xy(SplitPart::Val)?;
    let val = EmbeddingSet::new(ds.split.val.clone(), vx, ds.embeddings.source_tag())?;
    let result = prompt_search(&candidates, &val, &ds.labels)?;
    log::info!(
        "prompt search: best {} of {} candidates, val rho {:.4}",
        result.best.axis_id,
        candidates.len(),
        result.rho_val
    );
    Ok(result
        .best
        .with_provenance("candidates", candidates.len())
        .with_attribute(ds.attribute_name()))
}

pub fn eval(g: &GlobalOpts, manifest: &Path, axis: &Path, split: SplitPart) -> Result<()> {
    let ds = load_dataset(manifest)?;
    let axis = load_axis(axis)?;
    print_value(g, &evaluate_axis(&axis, &ds, split)?)
}

pub fn fewshot(g: &GlobalOpts, args: &FewshotArgs) -> Result<()> {
    let ds = load_dataset(&args.manifest)?;
    let sizes = if args.sizes.is_empty() {
        default_sizes(ds.split.train.len())
    } else {
        args.sizes.clone()
    };
    let solver = match args.solver {
        CurveSolver::Ridge => FewShotSolver::ClosedForm(RidgeConfig {
            lambda: args.lambda,
            standardize: false,
        }),
        CurveSolver::Sgd => FewShotSolver::Sgd(search_spec(g, &args.search)),
    };
    let curve = few_shot_curve(&ds, &sizes, args.repeats, g.seed, &solver)?;
    write_reports(g, &args.report, &[Report::Curve(curve)])
}

pub fn extremeshot(g: &GlobalOpts, args: &ExtremeshotArgs) -> Result<()> {
    let ds = load_dataset(&args.manifest)?;
    let curve = extreme_shot_curve(&ds, &args.k, args.tail_quantile, args.repeats, g.seed)?;
    write_reports(g, &args.report, &[Report::Curve(curve)])
}

pub fn transfer(g: &GlobalOpts, args: &TransferArgs) -> Result<()> {
    if !args.axes.is_empty() && args.axes.len() != args.manifests.len() {
        return Err(Error::InvalidValue(format!(
            "{} --axis files for {} --manifest files",
            args.axes.len(),
            args.manifests.len()
        ))
        .into());
    }
    let datasets = args
        .manifests
        .iter()
        .map(|p| load_dataset(p))
        .collect::<Result<Vec<_>>>()?;
    let axes = if args.axes.is_empty() {
        let config = RidgeConfig {
            lambda: args.lambda,
            standardize: false,
        };
        datasets
            .iter()
            .map(|ds| {
                let (x, y) = ds.xy(SplitPart::Train)?;
                Ok(axis_from_weights(&fit_ridge_closed_form(&x, &y, &config)?)?
                    .with_id(ds.name.clone())
                    .with_attribute(ds.attribute_name()))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        args.axes.iter().map(|p| Ok(load_axis(p)?)).collect::<Result<Vec<_>>>()?
    };
    let pairs: Vec<_> = datasets.iter().zip(&axes).collect();
    let report = transfer_matrix(&pairs)?;
    write_reports(g, &args.report, &[Report::Transfer(report)])
}

pub fn baselines(g: &GlobalOpts, args: &BaselinesArgs) -> Result<()> {
    if !args.notrain.is_empty() && args.notrain.len() != args.manifests.len() {
        return Err(Error::InvalidValue(format!(
            "{} --notrain-manifest files for {} --manifest files",
            args.notrain.len(),
            args.manifests.len()
        ))
        .into());
    }
    let spec = search_spec(g, &args.search);
    let mut rows = Vec::new();
    for (i, path) in args.manifests.iter().enumerate() {
        let ds = load_dataset(path)?;
        let notrain = match args.notrain.get(i) {
            Some(p) => load_dataset(p)?,
            None => ds.with_embeddings(noise_embeddings(&ds, g.seed.wrapping_add(i as u64))?)?,
        };
        let outcome = run_baselines(&ds, &notrain, &spec).with_context(|| format!("baselines for {}", path.display()))?;
        rows.push(outcome.row);
    }
    write_reports(g, &args.report, &[Report::Baselines(BaselineReport { rows })])
}

pub fn percentiles(_g: &GlobalOpts, manifest: &Path, axis: &Path, rs: &[f64]) -> Result<()> {
    let emb = load_embedding_set(&DatasetManifest::load(manifest)?)?;
    let axis = load_axis(axis)?;
    let view = rank_items(&emb, &axis, Order::Ascending)?;
    let rows = rs
        .iter()
        .map(|&r| percentile_item(&view, r).map(|(id, score)| (r, id, score)))
        .collect::<Result<Vec<_>, _>>()?;
    for (r, id, score) in rows {
        print_json_line(&json!({ "r": r, "item_id": id, "score": score }))?;
    }
    Ok(())
}

pub fn synth(g: &GlobalOpts, args: &SynthArgs) -> Result<()> {
    let spec = PlantedSpec {
        background: args.background,
        ..PlantedSpec::new(args.n, args.dim, args.noise, g.seed).with_name(args.name.clone())
    };
    let planted = planted_dataset(&spec)?;
    let ds = &planted.dataset;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    write_npy(&dir.join("embeddings.npy"), ds.embeddings.matrix())?;
    let ids: Vec<&str> = ds.embeddings.ids().iter().map(ItemId::as_str).collect();
    write_atomic(&dir.join("ids.txt"), (ids.join("\n") + "\n").as_bytes())?;
    let mut labels = String::from("id,value\n");
    for (id, v) in ds.labels.iter() {
        labels.push_str(&format!("{},{v}\n", id.as_str()));
    }
    write_atomic(&dir.join("labels.csv"), labels.as_bytes())?;
    let part = |p: SplitPart| ds.ids(p).iter().map(ItemId::as_str).collect::<Vec<_>>();
    let manifest = json!({
        "name": args.name,
        "embeddings_path": "embeddings.npy",
        "ids_path": "ids.txt",
        "labels_path": "labels.csv",
        "attribute_name": ds.attribute_name(),
        "source_tag": ds.embeddings.source_tag(),
        "split": {"train": part(SplitPart::Train), "val": part(SplitPart::Val), "test": part(SplitPart::Test)},
    });
    let manifest_path = dir.join("manifest.json");
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    let axis = AxisRecord::from_direction(&planted.axis, 0.0, AxisMethod::Raw)?
        .with_id("planted")
        .with_attribute(ds.attribute_name());
    save_axis(&axis, &dir.join("planted_axis.json"))?;
    print_value(g, &json!({ "manifest": manifest_path, "summary": ds.summary() }))
}
