//! The subcommands. Each stage reads what the previous one wrote under the
//! output directory, so they can run one at a time or chained by `pipeline`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use carenet_core::autonn::{load_checkpoint, save_checkpoint, NetworkGraph};
use carenet_core::carenet::{build_carenet, predict_patch, train_model, write_history, Example};
use carenet_core::evaluate::{
    classification_metrics, make_report, regression_report, split_dataset, vote_sample,
    voted_accuracy, write_folds_csv, FoldResult, ReportInput, SplitMode, SplitUnit, VoteRecord,
};
use carenet_core::explain::{
    channel_importance, grad_cam, grad_cam_layer, group_bands, path_contribution, write_bands_csv,
    write_heatmap_csv, write_heatmap_png, write_importance_csv, ChannelImportance,
};
use carenet_core::labels::{
    class_weights, decode_output, read_manifest, write_manifest, Decoded, EncodingKind, Label,
    LabelRecord, TaskSchema,
};
use carenet_core::preprocess::{extract_patches, run_pipeline};
use carenet_core::spectra::{
    read_cube, synth_dataset, write_cube, Patch, ReferenceLibrary, WavenumberAxis,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{CliError, Command, RunConfig, RunSummary};

/// Where each stage reads and writes.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
    pub raw: PathBuf,
    pub labels: PathBuf,
    pub library: PathBuf,
    pub preprocessed: PathBuf,
    pub train: PathBuf,
    pub predict: PathBuf,
    pub explain: PathBuf,
    pub evaluate: PathBuf,
}

impl Layout {
    pub fn new(out: &Path, cfg: &RunConfig) -> Layout {
        let raw = cfg.raw_dir.clone().unwrap_or_else(|| out.join("raw"));
        let task = cfg.task.to_ascii_lowercase();
        Layout {
            out: out.to_path_buf(),
            labels: cfg
                .labels_path
                .clone()
                .unwrap_or_else(|| raw.join("labels.csv")),
            library: cfg
                .library_path
                .clone()
                .unwrap_or_else(|| raw.join("library.json")),
            raw,
            preprocessed: out.join("preprocessed"),
            train: out.join("train").join(&task),
            predict: out.join("predict").join(&task),
            explain: out.join("explain").join(&task),
            evaluate: out.join("evaluate").join(&task),
        }
    }

    fn fold_dir(&self, fold: usize) -> PathBuf {
        self.train.join(format!("fold{fold}"))
    }
}

pub(crate) fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add(fold as u64)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(
    path: &Path,
    stage: &'static str,
) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Stage {
        stage,
        message: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Stage {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

fn cube_files(dir: &Path, stage: &'static str) -> Result<Vec<PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::Stage {
        stage,
        message: format!("{}: {e}", dir.display()),
    })?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "hsc"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Stage {
            stage,
            message: format!("no .hsc cubes in {}", dir.display()),
        });
    }
    Ok(files)
}

/// Labels for every task derived from a synthetic class index.
pub fn synthetic_record(sample_id: &str, patient_id: &str, class: usize) -> LabelRecord {
    let subtypes = ["LA", "LB", "HER2", "TNBC"];
    let levels = ["-", "+", "++", "+++"];
    let ki67 = [5.0, 10.0, 20.0, 30.0];
    LabelRecord {
        sample_id: sample_id.into(),
        patient_id: patient_id.into(),
        type_: Some(if class == 0 { "AT" } else { "CA" }.into()),
        subtype: Some(subtypes[class % 4].into()),
        er: Some(levels[class % 4].into()),
        pr: Some(levels[class % 4].into()),
        her2: Some(if class.is_multiple_of(2) { "0" } else { "3+" }.into()),
        ki67_percent: Some(ki67[class % 4]),
    }
}

pub(crate) fn dispatch(
    command: Command,
    cfg: &RunConfig,
    seed: u64,
    layout: &Layout,
) -> Result<RunSummary, CliError> {
    let mut summary = RunSummary {
        seed,
        ..Default::default()
    };
    match command {
        Command::Synth => synth(cfg, seed, layout)?,
        Command::Preprocess => preprocess(cfg, layout)?,
        Command::Train => train(cfg, seed, layout)?,
        Command::Predict => predict(cfg, layout)?,
        Command::Explain => summary.top_band = explain(cfg, layout)?,
        Command::Evaluate => summary.voted_accuracy = evaluate(layout)?,
        Command::Pipeline => {
            synth(cfg, seed, layout)?;
            preprocess(cfg, layout)?;
            train(cfg, seed, layout)?;
            predict(cfg, layout)?;
            summary.top_band = explain(cfg, layout)?;
            summary.voted_accuracy = evaluate(layout)?;
        }
    }
    Ok(summary)
}

fn synth(cfg: &RunConfig, seed: u64, layout: &Layout) -> Result<(), CliError> {
    let err = CliError::stage("synth");
    let data = synth_dataset(&cfg.synth(), seed).map_err(|e| err(&e))?;
    let dir = layout.out.join("raw");
    std::fs::create_dir_all(&dir)?;
    let mut records = Vec::new();
    let mut truth = csv::Writer::from_path(dir.join("truth.csv")).map_err(|e| err(&e))?;
    truth
        .write_record(["sample_id", "class_index", "tissue_pixels"])
        .map_err(|e| err(&e))?;
    for (m, t) in data.mosaics.iter().zip(&data.truth) {
        write_cube(m, dir.join(format!("{}.hsc", m.sample_id))).map_err(|e| err(&e))?;
        records.push(synthetic_record(&m.sample_id, &m.patient_id, t.class_index));
        let tissue = t.tissue_mask.iter().filter(|&&b| b).count();
        truth
            .write_record([
                m.sample_id.clone(),
                t.class_index.to_string(),
                tissue.to_string(),
            ])
            .map_err(|e| err(&e))?;
    }
    truth.flush()?;
    write_manifest(&dir.join("labels.csv"), &records).map_err(|e| err(&e))?;
    write_json(&dir.join("library.json"), &data.library)?;
    log::info!("synth: {} mosaics in {}", data.mosaics.len(), dir.display());
    Ok(())
}

fn preprocess(cfg: &RunConfig, layout: &Layout) -> Result<(), CliError> {
    let err = CliError::stage("preprocess");
    let library: ReferenceLibrary = read_json(&layout.library, "preprocess")?;
    let pipe = cfg.pipeline();
    std::fs::create_dir_all(&layout.preprocessed)?;
    let mut reports = Vec::new();
    for path in cube_files(&layout.raw, "preprocess")? {
        let mosaic = read_cube(&path).map_err(|e| err(&e))?;
        let (clean, mut report) = run_pipeline(&mosaic, &library, &pipe)
            .map_err(|e| err(&format!("{}: {e}", mosaic.sample_id)))?;
        report.patches =
            Some(extract_patches(&clean, pipe.patch_size, pipe.patch_zero_fraction).counts());
        write_cube(
            &clean,
            layout.preprocessed.join(format!("{}.hsc", clean.sample_id)),
        )
        .map_err(|e| err(&e))?;
        log::info!(
            "preprocess: {} keeps {} of {} pixels",
            report.sample_id,
            report.live_pixels,
            report.pixels
        );
        reports.push(report);
    }
    write_json(&layout.preprocessed.join("report.json"), &reports)
}

/// Labelled patches of every preprocessed mosaic that has a label for the task.
struct Dataset {
    schema: TaskSchema,
    axis: WavenumberAxis,
    patches: Vec<Patch>,
    labels: Vec<Label>,
}

fn patch_id(p: &Patch) -> String {
    format!("{}_r{}_c{}", p.sample_id, p.origin.0, p.origin.1)
}

fn label_text(label: &Label) -> String {
    match label {
        Label::Class(c) => c.clone(),
        Label::Percent(p) => p.to_string(),
    }
}

fn parse_label(schema: &TaskSchema, text: &str) -> Result<Label, CliError> {
    if schema.kind == EncodingKind::Regression {
        text.parse()
            .map(Label::Percent)
            .map_err(|_| CliError::Stage {
                stage: "evaluate",
                message: format!("bad percent '{text}'"),
            })
    } else {
        Ok(Label::Class(text.into()))
    }
}

fn load_dataset(
    cfg: &RunConfig,
    layout: &Layout,
    stage: &'static str,
) -> Result<Dataset, CliError> {
    let err = CliError::stage(stage);
    let task = cfg.task();
    let manifest = read_manifest(&layout.labels).map_err(|e| err(&e))?;
    for w in &manifest.warnings {
        log::warn!("{stage}: {w}");
    }
    let by_id: HashMap<&str, &LabelRecord> = manifest
        .records
        .iter()
        .map(|r| (r.sample_id.as_str(), r))
        .collect();
    let (mut patches, mut labels, mut axis) = (Vec::new(), Vec::new(), None);
    for path in cube_files(&layout.preprocessed, stage)? {
        let mosaic = read_cube(&path).map_err(|e| err(&e))?;
        let Some(label) = by_id
            .get(mosaic.sample_id.as_str())
            .and_then(|r| r.label(task))
        else {
            log::warn!(
                "{stage}: {} has no {} label, skipped",
                mosaic.sample_id,
                task.name()
            );
            continue;
        };
        match axis {
            None => axis = Some(*mosaic.axis()),
            Some(a) if !a.matches(mosaic.axis()) => {
                return Err(err(&format!(
                    "{} has a different wavenumber axis",
                    mosaic.sample_id
                )))
            }
            _ => {}
        }
        for p in extract_patches(&mosaic, cfg.patch_size, cfg.patch_zero_fraction).patches {
            patches.push(p);
            labels.push(label.clone());
        }
    }
    let axis = axis.ok_or_else(|| err(&format!("no labelled mosaics for task {}", task.name())))?;
    let mut schema = TaskSchema::for_task(task);
    if schema.kind == EncodingKind::OneHot {
        let present: Vec<usize> = labels
            .iter()
            .map(|l| schema.stratum(l))
            .collect::<Result<_, _>>()
            .map_err(|e| err(&e))?;
        let mut distinct = present.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < schema.n_classes() {
            schema = schema.restrict(&distinct).map_err(|e| err(&e))?;
            log::info!(
                "{stage}: classes without samples dropped, training on {:?}",
                schema.classes
            );
        }
    }
    Ok(Dataset {
        schema,
        axis,
        patches,
        labels,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    mode: SplitMode,
    test_patients: Vec<String>,
    test: Vec<String>,
    folds: Vec<FoldIds>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FoldIds {
    train: Vec<String>,
    dev: Vec<String>,
}

fn train(cfg: &RunConfig, seed: u64, layout: &Layout) -> Result<(), CliError> {
    let err = CliError::stage("train");
    let ds = load_dataset(cfg, layout, "train")?;
    let units: Vec<SplitUnit> = ds
        .patches
        .iter()
        .zip(&ds.labels)
        .map(|(p, l)| SplitUnit {
            id: patch_id(p),
            patient_id: p.patient_id.clone(),
            label: l.clone(),
        })
        .collect();
    let mode = if cfg.task().splits_by_patient() {
        SplitMode::ByPatient
    } else {
        SplitMode::ByPatch
    };
    let plan = split_dataset(&units, &ds.schema, mode, cfg.folds, seed).map_err(|e| err(&e))?;
    std::fs::create_dir_all(&layout.train)?;
    write_json(&layout.train.join("schema.json"), &ds.schema)?;
    write_folds_csv(&layout.train.join("folds.csv"), &plan, &units).map_err(|e| err(&e))?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| units[i].id.clone()).collect::<Vec<_>>();
    write_json(
        &layout.train.join("split.json"),
        &SplitFile {
            mode,
            test_patients: plan.test_patients.clone(),
            test: ids(&plan.test),
            folds: plan
                .folds
                .iter()
                .map(|f| FoldIds {
                    train: ids(&f.train),
                    dev: ids(&f.dev),
                })
                .collect(),
        },
    )?;

    let channels = ds.axis.len();
    for (f, fold) in plan.folds.iter().enumerate() {
        let weights = if ds.schema.kind == EncodingKind::Regression {
            Vec::new()
        } else {
            let mut counts = vec![0usize; ds.schema.n_classes()];
            for &i in &fold.train {
                counts[ds.schema.stratum(&ds.labels[i]).map_err(|e| err(&e))?] += 1;
            }
            class_weights(&counts).map_err(|e| err(&format!("fold {f}: {e}")))?
        };
        let examples = |idx: &[usize]| -> Result<Vec<Example>, CliError> {
            idx.iter()
                .map(|&i| {
                    Example::new(ds.patches[i].clone(), &ds.schema, &ds.labels[i], &weights)
                        .map_err(|e| err(&e))
                })
                .collect()
        };
        let (tr, dv) = (examples(&fold.train)?, examples(&fold.dev)?);
        let s = fold_seed(seed, f);
        let graph = build_carenet(&cfg.network(channels), &ds.schema, s).map_err(|e| err(&e))?;
        let outcome = train_model(&graph, &tr, &dv, &ds.schema, &cfg.train(s))
            .map_err(|e| err(&format!("fold {f}: {e}")))?;
        let dir = layout.fold_dir(f);
        std::fs::create_dir_all(&dir)?;
        let best = outcome.history.last().map(|r| r.best_dev_metric);
        let meta = serde_json::json!({
            "task": ds.schema.name,
            "fold": f,
            "seed": s,
            "best_epoch": outcome.best_epoch,
            "best_dev_metric": best,
            "train_patches": tr.len(),
            "dev_patches": dv.len(),
        });
        save_checkpoint(&outcome.best, &dir.join("model.bin"), meta).map_err(|e| err(&e))?;
        write_history(&dir.join("history.csv"), &outcome.history).map_err(|e| err(&e))?;
        log::info!(
            "train: fold {f} best dev metric {best:?} at epoch {}",
            outcome.best_epoch
        );
    }
    Ok(())
}

struct Trained {
    schema: TaskSchema,
    split: SplitFile,
    models: Vec<NetworkGraph>,
}

fn load_trained(layout: &Layout, stage: &'static str) -> Result<Trained, CliError> {
    let err = CliError::stage(stage);
    let schema: TaskSchema = read_json(&layout.train.join("schema.json"), stage)?;
    let split: SplitFile = read_json(&layout.train.join("split.json"), stage)?;
    let models = (0..split.folds.len())
        .map(|f| {
            load_checkpoint(&layout.fold_dir(f).join("model.bin"))
                .map(|(g, _)| g)
                .map_err(|e| err(&e))
        })
        .collect::<Result<_, _>>()?;
    Ok(Trained {
        schema,
        split,
        models,
    })
}

fn test_patches(
    ds: &Dataset,
    split: &SplitFile,
    stage: &'static str,
) -> Result<Vec<(Patch, Label)>, CliError> {
    let index: HashMap<String, usize> = ds
        .patches
        .iter()
        .enumerate()
        .map(|(i, p)| (patch_id(p), i))
        .collect();
    split
        .test
        .iter()
        .map(|id| {
            index
                .get(id)
                .map(|&i| (ds.patches[i].clone(), ds.labels[i].clone()))
                .ok_or_else(|| CliError::Stage {
                    stage,
                    message: format!("test patch {id} not found in the preprocessed data"),
                })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRow {
    fold: usize,
    sample_id: String,
    patient_id: String,
    row: usize,
    col: usize,
    truth: String,
    outputs: String,
    decoded: String,
}

fn decoded_text(d: &Decoded) -> String {
    match d {
        Decoded::Class { name, .. } => name.clone(),
        Decoded::Percent(p) => format!("{p:.4}"),
    }
}

fn predict(cfg: &RunConfig, layout: &Layout) -> Result<(), CliError> {
    let err = CliError::stage("predict");
    let trained = load_trained(layout, "predict")?;
    let ds = load_dataset(cfg, layout, "predict")?;
    let test = test_patches(&ds, &trained.split, "predict")?;
    std::fs::create_dir_all(&layout.predict)?;
    let mut w =
        csv::Writer::from_path(layout.predict.join("predictions.csv")).map_err(|e| err(&e))?;
    for (f, model) in trained.models.iter().enumerate() {
        let outputs: Vec<Vec<f64>> = test
            .par_iter()
            .map(|(p, _)| predict_patch(model, p))
            .collect::<Result<_, _>>()
            .map_err(|e| err(&e))?;
        for ((p, label), out) in test.iter().zip(outputs) {
            let decoded = decode_output(&trained.schema, &out).map_err(|e| err(&e))?;
            w.serialize(PredictionRow {
                fold: f,
                sample_id: p.sample_id.clone(),
                patient_id: p.patient_id.clone(),
                row: p.origin.0,
                col: p.origin.1,
                truth: label_text(label),
                outputs: out
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                decoded: decoded_text(&decoded),
            })
            .map_err(|e| err(&e))?;
        }
    }
    w.flush()?;
    log::info!(
        "predict: {} test patches × {} folds",
        test.len(),
        trained.models.len()
    );
    Ok(())
}

type SampleOutputs<'a> = (Vec<Vec<f64>>, &'a str);

/// Voted accuracy, `None` for regression tasks.
fn evaluate(layout: &Layout) -> Result<Option<f64>, CliError> {
    let err = CliError::stage("evaluate");
    let schema: TaskSchema = read_json(&layout.train.join("schema.json"), "evaluate")?;
    let mut reader =
        csv::Reader::from_path(layout.predict.join("predictions.csv")).map_err(|e| err(&e))?;
    let rows: Vec<PredictionRow> = reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| err(&e))?;
    if rows.is_empty() {
        return Err(err(&"no predictions"));
    }
    let parse_outputs = |r: &PredictionRow| -> Result<Vec<f64>, CliError> {
        r.outputs
            .split(' ')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| err(&format!("output '{v}': {e}")))
            })
            .collect()
    };
    let n_folds = rows.iter().map(|r| r.fold).max().unwrap() + 1;
    let mut folds = Vec::new();
    let mut votes = Vec::new();
    for f in 0..n_folds {
        let fold_rows: Vec<&PredictionRow> = rows.iter().filter(|r| r.fold == f).collect();
        let outputs: Vec<Vec<f64>> = fold_rows
            .iter()
            .map(|r| parse_outputs(r))
            .collect::<Result<_, _>>()?;
        let truths: Vec<Label> = fold_rows
            .iter()
            .map(|r| parse_label(&schema, &r.truth))
            .collect::<Result<_, _>>()?;
        let result = if schema.kind == EncodingKind::Regression {
            let preds: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
            let t: Vec<f64> = truths
                .iter()
                .map(|l| match l {
                    Label::Percent(p) => schema.scale(*p),
                    Label::Class(_) => unreachable!("regression truths parse as percentages"),
                })
                .collect::<Result<_, _>>()
                .map_err(|e| err(&e))?;
            FoldResult {
                classification: None,
                regression: Some(regression_report(&preds, &t, &schema).map_err(|e| err(&e))?),
            }
        } else {
            let preds: Vec<usize> = outputs
                .iter()
                .map(|o| decode_output(&schema, o).map(|d| d.class_index().unwrap()))
                .collect::<Result<_, _>>()
                .map_err(|e| err(&e))?;
            let t: Vec<usize> = truths
                .iter()
                .map(|l| schema.stratum(l))
                .collect::<Result<_, _>>()
                .map_err(|e| err(&e))?;
            FoldResult {
                classification: Some(
                    classification_metrics(&preds, &t, &schema.classes).map_err(|e| err(&e))?,
                ),
                regression: None,
            }
        };
        folds.push(result);

        // (patient, sample) -> (patch outputs, truth)
        let mut by_sample: BTreeMap<(&str, &str), SampleOutputs> = BTreeMap::new();
        for (r, o) in fold_rows.iter().zip(outputs) {
            by_sample
                .entry((&r.patient_id, &r.sample_id))
                .or_insert_with(|| (Vec::new(), &r.truth))
                .0
                .push(o);
        }
        for ((patient, sample), (outs, truth)) in by_sample {
            let vote = vote_sample(&outs, &schema).map_err(|e| err(&e))?;
            let correct = match &vote.prediction {
                Decoded::Class { name, .. } => Some(name == truth),
                Decoded::Percent(_) => None,
            };
            votes.push(VoteRecord {
                patient: patient.into(),
                sample: sample.into(),
                fold: f,
                truth: truth.into(),
                prediction: decoded_text(&vote.prediction),
                correct,
            });
        }
    }
    votes.sort_by(|a, b| (&a.patient, &a.sample, a.fold).cmp(&(&b.patient, &b.sample, b.fold)));
    let acc = Some(voted_accuracy(&votes)).filter(|a| !a.is_nan());
    let patch_acc: Vec<f64> = folds
        .iter()
        .filter_map(|f| f.classification.as_ref().map(|c| c.overall_accuracy))
        .collect();
    let input = ReportInput {
        task: schema.name.clone(),
        classes: schema.classes.clone(),
        folds,
        votes,
    };
    make_report(&layout.evaluate, &input).map_err(|e| err(&e))?;
    write_json(
        &layout.evaluate.join("summary.json"),
        &serde_json::json!({
            "task": schema.name,
            "voted_accuracy": acc,
            "patch_accuracy_per_fold": patch_acc,
            "votes": input.votes.len(),
        }),
    )?;
    match acc {
        Some(a) => log::info!(
            "evaluate: voted accuracy {a:.3} over {} votes",
            input.votes.len()
        ),
        None => log::info!("evaluate: {} regression votes", input.votes.len()),
    }
    Ok(acc)
}

fn explain(cfg: &RunConfig, layout: &Layout) -> Result<Option<(f64, f64)>, CliError> {
    let err = CliError::stage("explain");
    let trained = load_trained(layout, "explain")?;
    let ds = load_dataset(cfg, layout, "explain")?;
    let test = test_patches(&ds, &trained.split, "explain")?;
    let heat_dir = layout.explain.join("heatmaps");
    std::fs::create_dir_all(&heat_dir)?;

    // Per-fold kernel scores, averaged into one ranking.
    let mut mean = vec![0.0; ds.axis.len()];
    for (f, model) in trained.models.iter().enumerate() {
        let ci = channel_importance(model, &ds.axis, cfg.top_n, cfg.signed_importance)
            .map_err(|e| err(&e))?;
        write_importance_csv(
            &layout.explain.join(format!("importance_fold{f}.csv")),
            &ds.axis,
            &ci,
        )
        .map_err(|e| err(&e))?;
        for (m, s) in mean.iter_mut().zip(&ci.scores) {
            *m += s / trained.models.len() as f64;
        }
    }
    let ci = ChannelImportance {
        top_bands: group_bands(&mean, &ds.axis, cfg.top_n),
        scores: mean,
        signed: cfg.signed_importance,
    };
    write_importance_csv(&layout.explain.join("importance.csv"), &ds.axis, &ci)
        .map_err(|e| err(&e))?;
    write_bands_csv(&layout.explain.join("bands.csv"), &ci).map_err(|e| err(&e))?;

    let test_only: Vec<Patch> = test.iter().map(|(p, _)| p.clone()).collect();
    let mut pc_rows = csv::Writer::from_path(layout.explain.join("path_contribution.csv"))
        .map_err(|e| err(&e))?;
    pc_rows
        .write_record(["fold", "spectral", "spatial", "skipped"])
        .map_err(|e| err(&e))?;
    let mut contributions = Vec::new();
    for (f, model) in trained.models.iter().enumerate() {
        let pc = path_contribution(model, &test_only).map_err(|e| err(&e))?;
        pc_rows
            .write_record([
                f.to_string(),
                format!("{:.6}", pc.spectral),
                format!("{:.6}", pc.spatial),
                pc.skipped.to_string(),
            ])
            .map_err(|e| err(&e))?;
        contributions.push(pc);
    }
    pc_rows.flush()?;

    // Grad-CAM of the first fold's model for the true class of every test patch.
    let model = &trained.models[0];
    let (mut zero, mut live) = ((0.0, 0usize), (0.0, 0usize));
    for (p, label) in &test {
        let class = match trained.schema.kind {
            EncodingKind::Regression => 1,
            _ => trained.schema.stratum(label).map_err(|e| err(&e))?,
        };
        let hm = grad_cam(model, p, class).map_err(|e| err(&e))?;
        let id = patch_id(p);
        write_heatmap_png(&heat_dir.join(format!("{id}.png")), &hm).map_err(|e| err(&e))?;
        write_heatmap_csv(&heat_dir.join(format!("{id}.csv")), &hm).map_err(|e| err(&e))?;
        for r in 0..p.size {
            for c in 0..p.size {
                let acc = if p.pixel(r, c).iter().all(|&v| v == 0.0) {
                    &mut zero
                } else {
                    &mut live
                };
                acc.0 += hm.at(r, c);
                acc.1 += 1;
            }
        }
    }
    let avg = |(s, n): (f64, usize)| if n == 0 { None } else { Some(s / n as f64) };
    let top = ci
        .top_bands
        .first()
        .map(|b| (b.wavenumber_hi, b.wavenumber_lo));
    write_json(
        &layout.explain.join("summary.json"),
        &serde_json::json!({
            "task": trained.schema.name,
            "grad_cam_layer": grad_cam_layer(model).map_err(|e| err(&e))?,
            "top_band": top,
            "bands": ci.top_bands,
            "heatmap_mean_zeroed_pixels": avg(zero),
            "heatmap_mean_live_pixels": avg(live),
            "path_contribution": contributions,
        }),
    )?;
    log::info!("explain: top band {top:?}");
    Ok(top)
}
