//! End-to-end experiments: load, split, augment, build, train, evaluate and
//! write every artifact.
//!
//! Per-experiment directory contents: `split_manifest.txt`, `history.csv`,
//! `last.ckpt`, `best_val.ckpt`, `report.csv`, `report.txt`,
//! `metrics.json`, `curves_loss.png`, `curves_acc.png` and
//! `overlays/<id>.png`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use tumorseg_core::dataset::{generate_synthetic_dataset, split_dataset};
use tumorseg_core::metrics::binarize_prediction;
use tumorseg_core::trainer::{evaluate_detailed, train, EpochRecord, TrainingHistory, TrainingObserver};
use tumorseg_core::unet::build_unet;
use tumorseg_core::{DatasetSplits, MetricReport, Sample, UNet};

use crate::checkpoint::save_checkpoint;
use crate::config::{DatasetSource, ExperimentSpec};
use crate::error::{Error, Result};
use crate::history::write_history;
use crate::io::{load_dataset, write_file};
use crate::manifest::write_manifest;
use crate::overlay::render_overlay;
use crate::plot::write_curves;
use crate::report::{write_report, ReportRow};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub name: String,
    pub report: MetricReport,
    pub history: TrainingHistory,
    pub history_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub best_val_path: PathBuf,
}

#[derive(Debug)]
pub struct CampaignRow {
    pub name: String,
    pub outcome: Result<ExperimentOutcome>,
}

#[derive(Debug, Default)]
pub struct CampaignResult {
    pub rows: Vec<CampaignRow>,
}

impl CampaignResult {
    pub fn completed(&self) -> impl Iterator<Item = &ExperimentOutcome> {
        self.rows.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> Vec<(String, String)> {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| (r.name.clone(), e.to_string())))
            .collect()
    }

    pub fn report_rows(&self) -> Vec<ReportRow> {
        self.completed().map(|o| ReportRow::new(&o.name, &o.report)).collect()
    }

    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.is_ok())
    }
}

pub fn load_source(source: &DatasetSource, seed: u64) -> Result<Vec<Sample>> {
    match source {
        DatasetSource::Directory { root, image_size } => load_dataset(root, *image_size),
        DatasetSource::Synthetic { n, size } => Ok(generate_synthetic_dataset(*n, *size, seed)?),
    }
}

/// Writes history after every epoch and the best-validation checkpoint
/// whenever validation loss improves.
struct ArtifactObserver<'a> {
    dir: &'a Path,
    name: &'a str,
    history: TrainingHistory,
    total_epochs: usize,
}

impl TrainingObserver for ArtifactObserver<'_> {
    fn on_epoch_end(&mut self, record: &EpochRecord, model: &UNet, improved: bool) -> tumorseg_core::Result<()> {
        log::info!(
            "[{}] epoch {}/{}: train loss {:.5} acc {:.4}, val loss {:.5} acc {:.4}",
            self.name,
            record.epoch,
            self.total_epochs,
            record.train_loss,
            record.train_accuracy,
            record.val_loss,
            record.val_accuracy
        );
        self.history.records.push(*record);
        let observer_err = |e: Error| tumorseg_core::Error::Observer(e.to_string());
        write_history(&self.dir.join("history.csv"), &self.history).map_err(observer_err)?;
        if improved {
            save_checkpoint(&self.dir.join("best_val.ckpt"), model, record.epoch).map_err(observer_err)?;
        }
        Ok(())
    }
}

/// Runs one experiment on an already loaded corpus.
pub fn run_experiment(spec: &ExperimentSpec, samples: &[Sample]) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let started = Instant::now();
    let dir = spec.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;

    let splits: DatasetSplits = split_dataset(samples.to_vec(), spec.split_seed)?;
    write_manifest(&dir.join("split_manifest.txt"), &splits.ids())?;
    log::info!(
        "[{}] split {}/{}/{}, {} parameters",
        spec.name,
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        tumorseg_core::unet::LayerGraph::describe(&spec.model).param_count()
    );

    let mut model = build_unet(&spec.model, spec.training.seed)?;
    let mut observer = ArtifactObserver {
        dir,
        name: &spec.name,
        history: TrainingHistory::default(),
        total_epochs: spec.training.epochs,
    };
    let history = train(
        &mut model,
        &splits,
        &spec.focal,
        &spec.augmentation,
        &spec.training,
        &mut observer,
    )?;
    let checkpoint_path = dir.join("last.ckpt");
    save_checkpoint(&checkpoint_path, &model, spec.training.epochs)?;

    let eval = evaluate_detailed(&model, &splits.test, &spec.focal, spec.training.eval_threshold)?;
    let row = ReportRow::new(&spec.name, &eval.report);
    write_report(dir, std::slice::from_ref(&row), &[])?;
    let metrics_json = serde_json::to_string_pretty(&serde_json::json!({
        "experiment": spec.name,
        "report": eval.report,
        "counts": eval.metrics.counts,
        "micro": eval.metrics.micro,
        "per_image_mean_dice": eval.metrics.per_image_mean_dice,
        "per_image_mean_iou": eval.metrics.per_image_mean_iou,
    }))
    .expect("metrics serialize");
    write_file(&dir.join("metrics.json"), metrics_json)?;

    write_curves(&history, &spec.name, dir)?;
    for s in splits.test.iter().take(spec.overlays) {
        let probs = model.predict(&s.image)?;
        let pred = binarize_prediction(&probs, spec.training.eval_threshold)?;
        let img = render_overlay(&s.image, &s.mask, &pred)?;
        let path = dir.join("overlays").join(format!("{}.png", s.id));
        std::fs::create_dir_all(path.parent().unwrap()).map_err(Error::io(dir))?;
        img.save(&path).map_err(|source| Error::Decode { path, source })?;
    }
    log::info!(
        "[{}] done in {:.1}s: dice {:.4}, iou {:.4}",
        spec.name,
        started.elapsed().as_secs_f64(),
        eval.report.dice,
        eval.report.iou
    );
    Ok(ExperimentOutcome {
        name: spec.name.clone(),
        report: eval.report,
        history,
        history_path: dir.join("history.csv"),
        checkpoint_path,
        best_val_path: dir.join("best_val.ckpt"),
    })
}

/// Runs every spec, continuing past failures. All specs must share one
/// dataset and split seed so every experiment sees the same partition.
pub fn run_campaign(specs: &[ExperimentSpec], parallel: bool) -> Result<CampaignResult> {
    let Some(first) = specs.first() else {
        return Err(Error::Config("campaign has no experiments".into()));
    };
    for s in specs {
        s.validate()?;
        if s.dataset != first.dataset || s.split_seed != first.split_seed {
            return Err(Error::Config(format!(
                "experiment {} uses a different dataset or split seed than {}",
                s.name, first.name
            )));
        }
    }
    let samples = load_source(&first.dataset, first.split_seed)?;
    let rows = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = specs
                .iter()
                .map(|spec| scope.spawn(|| run_experiment(spec, &samples)))
                .collect();
            specs
                .iter()
                .zip(handles)
                .map(|(spec, h)| CampaignRow {
                    name: spec.name.clone(),
                    outcome: h
                        .join()
                        .unwrap_or_else(|_| Err(Error::Panicked(spec.name.clone()))),
                })
                .collect()
        })
    } else {
        specs
            .iter()
            .map(|spec| CampaignRow {
                name: spec.name.clone(),
                outcome: run_experiment(spec, &samples),
            })
            .collect()
    };
    let result = CampaignResult { rows };
    for (name, err) in result.failures() {
        log::error!("[{name}] failed: {err}");
    }
    Ok(result)
}

/// Combined `report.csv` and `report.txt` for the campaign directory.
pub fn write_campaign_report(dir: &Path, result: &CampaignResult) -> Result<()> {
    write_report(dir, &result.report_rows(), &result.failures())
}
