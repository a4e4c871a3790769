//! Command-line front end: `synth`, `mask`, `train` and `eval`.
//!
//! Failures print one line, `error[<category>]: <message>`, to stderr and exit
//! with status 1; usage errors exit with status 2.

mod args;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

pub use args::{Cli, Command, EvalArgs, MaskArgs, SynthArgs, TrainArgs};

use crate::dataio::{generate_mask, generate_synthetic, load_dataset_at, read_labels, write_dataset, write_labels, write_matrix, SyntheticSpec};
use crate::error::{Error, Result};
use crate::evalmetrics::{score, ClusteringScores};
use crate::numerics::Rng;
use crate::trainer::{load_checkpoint, save_checkpoint, write_curves, StageSchedule, TrainConfig, Trainer};

pub const REPORT_FILE: &str = "report.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const LABELS_FILE: &str = "labels_pred.csv";
pub const EMBEDDING_FILE: &str = "embedding.csv";

/// Everything a training run leaves behind, written as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub n_samples: usize,
    pub n_views: usize,
    pub n_clusters: usize,
    pub recovered_slots: usize,
    pub schedule: Vec<StageSchedule>,
    pub stage_seconds: Vec<f64>,
    /// Present when the dataset carries labels.
    pub metrics: Option<ClusteringScores>,
    pub curves: PathBuf,
    pub labels: PathBuf,
    pub embedding: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            let message = first.trim_start_matches("error: ");
            eprintln!("error[usage]: {message}");
            return 2;
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            0
        }
        Err(e) => {
            let one_line = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {one_line}", e.category());
            1
        }
    }
}

/// Runs a parsed command and returns what it prints on success.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Mask(a) => cmd_mask(&a),
        Command::Train(a) => cmd_train(&a).map(|r| {
            let summary = match r.metrics {
                Some(m) => format!("acc={:.6} nmi={:.6} ari={:.6}", m.acc, m.nmi, m.ari),
                None => "unlabeled".to_string(),
            };
            format!("variant \"{}\", {summary}", r.variant)
        }),
        Command::Eval(a) => cmd_eval(&a),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let mut spec = SyntheticSpec::new(a.n, a.k, a.views, a.view_dim, a.seed);
    spec.latent_dim = a.latent_dim;
    spec.cluster_separation = a.separation;
    spec.noise_std = a.noise;
    spec.view_noise_std = a.view_noise;
    let dataset = generate_synthetic(&spec)?;
    let manifest = write_dataset(&a.out, &dataset)?;
    Ok(format!("wrote {}", manifest.display()))
}

pub fn cmd_mask(a: &MaskArgs) -> Result<String> {
    let dataset = load_dataset_at(&a.data)?;
    if dataset.missing_count() > 0 {
        return Err(Error::Validation(format!(
            "{} already has {} missing slots; mask a complete dataset",
            a.data.display(),
            dataset.missing_count()
        )));
    }
    let mask = generate_mask(
        dataset.n_samples(),
        dataset.n_views(),
        a.missing_rate,
        &mut Rng::derived(a.seed, "mask"),
    )
    .map_err(|e| match e {
        Error::Contract(msg) => Error::Validation(msg),
        other => other,
    })?;
    let masked = dataset.with_mask(mask)?;
    let manifest = write_dataset(&a.out, &masked)?;
    Ok(format!("wrote {} ({} missing slots)", manifest.display(), masked.missing_count()))
}

fn effective_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut config = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    a.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn checkpoint_path(out: &Path, stage: u8) -> PathBuf {
    out.join(format!("checkpoint_stage{stage}.bin"))
}

pub fn cmd_train(a: &TrainArgs) -> Result<RunReport> {
    let config = effective_config(a)?;
    let dataset = load_dataset_at(&a.data)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut trainer = match &a.resume {
        Some(path) => load_checkpoint(&dataset, &config, path)?,
        None => Trainer::new(&dataset, config.clone())?,
    };
    let mut checkpoints: Vec<PathBuf> = (1..=trainer.stages_completed())
        .map(|s| checkpoint_path(&a.out, s))
        .filter(|p| p.exists())
        .collect();
    for stage in trainer.stages_completed() + 1..=3 {
        match stage {
            1 => trainer.run_stage1()?,
            2 => trainer.run_stage2()?,
            _ => trainer.run_stage3()?,
        }
        let path = checkpoint_path(&a.out, stage);
        save_checkpoint(&trainer, &path)?;
        checkpoints.push(path);
    }

    let (state, labels) = trainer.predict()?;
    let curves = a.out.join(CURVES_FILE);
    write_curves(&curves, trainer.curves())?;
    let labels_path = a.out.join(LABELS_FILE);
    write_labels(&labels_path, &labels)?;
    let embedding = a.out.join(EMBEDDING_FILE);
    write_matrix(&embedding, &state.concatenated())?;
    let metrics = match dataset.labels() {
        Some(truth) => Some(score(&labels, truth)?),
        None => None,
    };
    let report = RunReport {
        variant: config.variant().to_string(),
        seed: config.seed,
        config_hash: config.hash(),
        config: config.clone(),
        n_samples: dataset.n_samples(),
        n_views: dataset.n_views(),
        n_clusters: trainer.n_clusters(),
        recovered_slots: state.recovered_count(),
        schedule: trainer.schedule().to_vec(),
        stage_seconds: trainer.stage_seconds().to_vec(),
        metrics,
        curves,
        labels: labels_path,
        embedding,
        checkpoints,
    };
    let report_path = a.out.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json + "\n").map_err(|e| Error::io(&report_path, e))?;
    Ok(report)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let pred = read_labels(&a.pred)?;
    let truth = read_labels(&a.truth)?;
    if pred.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} has {} labels but {} has {}",
            a.pred.display(),
            pred.len(),
            a.truth.display(),
            truth.len()
        )));
    }
    let s = score(&pred, &truth)?;
    Ok(format!("{{\"acc\":{:.6},\"nmi\":{:.6},\"ari\":{:.6}}}", s.acc, s.nmi, s.ari))
}
