//! Command-line interface.
//!
//! Exit status: 0 when everything succeeded, 1 when any experiment or
//! operation failed, 2 for configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tumorseg_core::augment::apply_augmentation;
use tumorseg_core::dataset::{split_dataset, split_from_ids};
use tumorseg_core::trainer::evaluate;
use tumorseg_core::{AugmentationKind, AugmentationSpec, FocalParams, UNetConfig};

use crate::campaign::{load_source, run_campaign, write_campaign_report, CampaignResult};
use crate::checkpoint::load_checkpoint;
use crate::config::{
    preset, CampaignConfig, DatasetConfig, DatasetSource, ExperimentConfig, Overrides, SyntheticConfig,
    DEFAULT_SEED, PRESETS,
};
use crate::error::{Error, Result};
use crate::io::write_dataset;
use crate::manifest::read_manifest;
use crate::plot::plot_curves;
use crate::report::{read_csv, write_report, ReportRow};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "tumorseg", version, about = "U-Net brain-tumor segmentation experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Split seed; also seeds every experiment that does not set its own.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Directory with images/<id>.png and masks/<id>.png.
    #[arg(long, global = true)]
    pub dataset_root: Option<PathBuf>,
    /// Generated corpus instead of files on disk, as N,SIZE.
    #[arg(long, global = true, value_name = "N,SIZE", value_parser = parse_synthetic)]
    pub synthetic: Option<SyntheticConfig>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Built-in campaign: phase1, phase2 or desk.
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    pub preset: Option<String>,
    /// Campaign TOML file.
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AugmentationArg {
    None,
    Flip,
    Rotation,
    Scaling,
}

impl From<AugmentationArg> for AugmentationKind {
    fn from(a: AugmentationArg) -> Self {
        match a {
            AugmentationArg::None => AugmentationKind::None,
            AugmentationArg::Flip => AugmentationKind::HorizontalFlip,
            AugmentationArg::Rotation => AugmentationKind::Rotation,
            AugmentationArg::Scaling => AugmentationKind::Scaling,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate a single experiment.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Evaluate(EvaluateArgs),
    /// Write an augmented copy of a dataset.
    Augment(AugmentArgs),
    /// Run every experiment of a preset or config file.
    Campaign(CampaignArgs),
    /// Combine the per-experiment reports of a campaign directory.
    Report {
        campaign_dir: PathBuf,
    },
    /// Draw loss and accuracy curves from a history CSV.
    Plot {
        history_csv: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment to run from the preset or config (default: the first).
    #[arg(long)]
    pub experiment: Option<String>,
    #[arg(long, value_enum)]
    pub augmentation: Option<AugmentationArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub base_filters: Option<usize>,
    /// Resize loaded images to this side length.
    #[arg(long)]
    pub image_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split manifest to take the test ids from; otherwise the dataset is
    /// re-split with --seed.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long, value_enum)]
    pub kind: AugmentationArg,
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    #[arg(long, default_value_t = 256)]
    pub image_size: usize,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    /// Run experiments concurrently.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Print the resolved campaign as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
}

fn parse_synthetic(s: &str) -> std::result::Result<SyntheticConfig, String> {
    let (n, size) = s
        .split_once(',')
        .ok_or_else(|| format!("expected N,SIZE, got {s:?}"))?;
    let n = n.trim().parse().map_err(|e| format!("bad N: {e}"))?;
    let size = size.trim().parse().map_err(|e| format!("bad SIZE: {e}"))?;
    Ok(SyntheticConfig { n, size })
}

/// Failures tagged with the exit status they map to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = if error.is_config() { EXIT_CONFIG } else { EXIT_FAILURE };
        Failure { code, error }
    }
}

impl From<tumorseg_core::Error> for Failure {
    fn from(error: tumorseg_core::Error) -> Self {
        Error::from(error).into()
    }
}

fn config_failure(error: Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error,
    }
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            dataset_root: self.dataset_root.clone(),
            synthetic: self.synthetic,
            alpha: self.alpha,
            gamma: self.gamma,
            ..Overrides::default()
        }
    }

    fn base_campaign(&self) -> Result<Option<CampaignConfig>> {
        if let Some(path) = &self.config {
            return CampaignConfig::load(path).map(Some);
        }
        Ok(self.preset.as_deref().and_then(preset))
    }

    fn focal(&self) -> Result<FocalParams> {
        Ok(FocalParams::new(self.alpha.unwrap_or(0.25), self.gamma.unwrap_or(2.0))?)
    }

    fn dataset(&self, image_size: usize) -> Result<DatasetSource> {
        match (&self.dataset_root, self.synthetic) {
            (Some(root), None) => Ok(DatasetSource::Directory {
                root: root.clone(),
                image_size,
            }),
            (None, Some(SyntheticConfig { n, size })) => Ok(DatasetSource::Synthetic { n, size }),
            (None, None) => Err(Error::Config("give --dataset-root or --synthetic N,SIZE".into())),
            (Some(_), Some(_)) => Err(Error::Config(
                "--dataset-root and --synthetic are mutually exclusive".into(),
            )),
        }
    }
}

fn single_experiment_campaign() -> CampaignConfig {
    CampaignConfig {
        name: "train".into(),
        seed: DEFAULT_SEED,
        output_dir: PathBuf::from("runs"),
        parallel: false,
        overlays: 8,
        dataset: DatasetConfig::default(),
        model: UNetConfig::default(),
        training: Default::default(),
        experiments: vec![ExperimentConfig {
            name: "train".into(),
            focal: FocalParams::new(0.25, 2.0).expect("valid defaults"),
            augmentation: AugmentationSpec::default(),
            seed: None,
        }],
    }
}

fn finish(result: &CampaignResult) -> u8 {
    if result.all_succeeded() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

fn cmd_train(g: &GlobalArgs, a: &TrainArgs) -> std::result::Result<u8, Failure> {
    let mut campaign = g
        .base_campaign()
        .map_err(config_failure)?
        .unwrap_or_else(single_experiment_campaign);
    if let Some(name) = &a.experiment {
        campaign.experiments.retain(|e| &e.name == name);
        if campaign.experiments.is_empty() {
            return Err(config_failure(Error::Config(format!("no experiment named {name:?}"))));
        }
    } else {
        campaign.experiments.truncate(1);
    }
    campaign.apply(&g.overrides());
    if let Some(e) = campaign.experiments.first_mut() {
        if let Some(kind) = a.augmentation {
            e.augmentation.kind = kind.into();
        }
    }
    if let Some(v) = a.epochs {
        campaign.training.epochs = v;
    }
    if let Some(v) = a.batch_size {
        campaign.training.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        campaign.training.learning_rate = v;
    }
    if let Some(v) = a.base_filters {
        campaign.model = UNetConfig::scaled(campaign.model.input_size, v);
    }
    if let Some(v) = a.image_size {
        campaign.dataset.image_size = Some(v);
        campaign.model.input_size = v;
    }
    let specs = campaign.resolve().map_err(config_failure)?;
    let result = run_campaign(&specs, false)?;
    for o in result.completed() {
        println!("{}", ReportRow::new(&o.name, &o.report).to_json());
    }
    Ok(finish(&result))
}

fn cmd_campaign(g: &GlobalArgs, a: &CampaignArgs) -> std::result::Result<u8, Failure> {
    let mut campaign = g.base_campaign().map_err(config_failure)?.ok_or_else(|| {
        config_failure(Error::Config("campaign needs --preset or --config".into()))
    })?;
    campaign.apply(&Overrides {
        epochs: a.epochs,
        parallel: a.parallel,
        ..g.overrides()
    });
    if a.print_config {
        print!("{}", campaign.to_toml());
        return Ok(EXIT_OK);
    }
    let specs = campaign.resolve().map_err(config_failure)?;
    log::info!(
        "campaign {}: {} experiment(s) into {}",
        campaign.name,
        specs.len(),
        campaign.output_dir.display()
    );
    let result = run_campaign(&specs, campaign.parallel)?;
    if result.completed().next().is_some() {
        write_campaign_report(&campaign.output_dir, &result)?;
        print!("{}", crate::io::read_file(&campaign.output_dir.join("report.txt"))?);
    }
    Ok(finish(&result))
}

fn cmd_evaluate(g: &GlobalArgs, a: &EvaluateArgs) -> std::result::Result<u8, Failure> {
    let (model, _) = load_checkpoint(&a.checkpoint, None)?;
    let focal = g.focal().map_err(config_failure)?;
    let source = g.dataset(model.config().input_size).map_err(config_failure)?;
    let seed = g.seed.unwrap_or(DEFAULT_SEED);
    let samples = load_source(&source, seed)?;
    let splits = match &a.manifest {
        Some(path) => split_from_ids(samples, &read_manifest(path)?)?,
        None => split_dataset(samples, seed)?,
    };
    let report = evaluate(&model, &splits.test, &focal, a.threshold)?;
    let name = a
        .checkpoint
        .parent()
        .and_then(Path::file_name)
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint");
    let row = ReportRow::new(name, &report);
    if let Some(dir) = &g.output_dir {
        write_report(dir, std::slice::from_ref(&row), &[])?;
    }
    println!("{}", row.to_json());
    Ok(EXIT_OK)
}

fn cmd_augment(g: &GlobalArgs, a: &AugmentArgs) -> std::result::Result<u8, Failure> {
    let source = g.dataset(a.image_size).map_err(config_failure)?;
    let seed = g.seed.unwrap_or(DEFAULT_SEED);
    let spec = AugmentationSpec {
        kind: a.kind.into(),
        fraction: a.fraction,
        seed,
        ..AugmentationSpec::default()
    };
    spec.validate().map_err(|e| config_failure(e.into()))?;
    let out = g.output_dir.clone().unwrap_or_else(|| PathBuf::from("augmented"));
    let samples = load_source(&source, seed)?;
    let n = samples.len();
    let augmented = apply_augmentation(samples, &spec)?;
    write_dataset(&out, &augmented)?;
    println!("{} samples ({} new) written to {}", augmented.len(), augmented.len() - n, out.display());
    Ok(EXIT_OK)
}

fn cmd_report(dir: &Path) -> std::result::Result<u8, Failure> {
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("report.csv").is_file())
        .collect();
    subdirs.sort();
    let mut rows = Vec::new();
    for d in subdirs {
        rows.extend(read_csv(&d.join("report.csv"))?);
    }
    write_report(dir, &rows, &[])?;
    print!("{}", crate::io::read_file(&dir.join("report.txt"))?);
    Ok(EXIT_OK)
}

fn cmd_plot(g: &GlobalArgs, history: &Path) -> std::result::Result<u8, Failure> {
    for p in plot_curves(history, g.output_dir.as_deref())? {
        println!("{}", p.display());
    }
    Ok(EXIT_OK)
}

pub fn run(cli: &Cli) -> std::result::Result<u8, Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Train(a) => cmd_train(g, a),
        Command::Evaluate(a) => cmd_evaluate(g, a),
        Command::Augment(a) => cmd_augment(g, a),
        Command::Campaign(a) => cmd_campaign(g, a),
        Command::Report { campaign_dir } => cmd_report(campaign_dir),
        Command::Plot { history_csv } => cmd_plot(g, history_csv),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn synthetic_flag() {
        assert_eq!(parse_synthetic("200,64").unwrap(), SyntheticConfig { n: 200, size: 64 });
        assert!(parse_synthetic("200x64").is_err());
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from([
            "tumorseg", "campaign", "--preset", "desk", "--seed", "3", "--synthetic", "40,32",
        ])
        .unwrap();
        assert_eq!(cli.global.seed, Some(3));
        assert_eq!(cli.global.preset.as_deref(), Some("desk"));
    }

    #[test]
    fn unknown_preset_is_a_usage_error() {
        let err = Cli::try_parse_from(["tumorseg", "campaign", "--preset", "nope"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
