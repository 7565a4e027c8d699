//! `voicelr`: stage-by-stage and end-to-end forensic voice-comparison
//! evaluation. Exit codes: 0 ok, 1 I/O, 2 validation, 3 numeric.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "voicelr",
    version,
    about = "Likelihood-ratio evaluation of speaker-comparison systems"
)]
struct Cli {
    /// TOML config with per-stage sections; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `voicelr=debug` (RUST_LOG also works).
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Silence removal, chunking and optional augmentation of a recording manifest.
    Prep(PrepArgs),
    /// Baseline embeddings for every row of a (chunk) manifest.
    Embed(EmbedArgs),
    /// Per-speaker enrollment vectors from an embeddings file.
    Enroll(EnrollArgs),
    /// Cross-session (or all-session) trials for a manifest.
    Trials(TrialsArgs),
    /// Cosine scores for a trial list.
    Score(ScoreArgs),
    /// Fit the logistic score-to-LR calibration on scored trials.
    Calibrate(CalibrateArgs),
    /// Calibrate on one split and evaluate on another, writing a full report.
    Evaluate(EvaluateArgs),
    /// Human-readable summary of a report.json.
    Report(ReportArgs),
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct PrepArgs {
    /// Recording-level manifest (CSV with a .meta.json sidecar).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory that manifest paths are relative to [default: manifest directory].
    #[arg(long)]
    pub base_dir: Option<PathBuf>,
    /// Receives chunks/, chunks.csv and the effective config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Abort on the first failing recording and leave no partial output.
    #[arg(long)]
    pub strict: bool,
    /// Add time-scaled and noisy variants of every chunk.
    #[arg(long)]
    pub augment: bool,
    /// Comma-separated time-scale factors [default: 0.95,1.05].
    #[arg(long, value_delimiter = ',')]
    pub time_scales: Option<Vec<f64>>,
    /// SNR of the noise variants, in dB [default: 15].
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    /// Noise variants per chunk [default: 1].
    #[arg(long)]
    pub noise_variants: Option<usize>,
    /// Base seed of the noise variants [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// VAD frame length in ms [default: 25].
    #[arg(long)]
    pub vad_frame_ms: Option<f64>,
    /// VAD hop in ms [default: 10].
    #[arg(long)]
    pub vad_hop_ms: Option<f64>,
    /// VAD threshold relative to the loudest frame, in dB [default: -35].
    #[arg(long, allow_hyphen_values = true)]
    pub vad_threshold_db: Option<f64>,
}

#[derive(Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory that manifest paths are relative to [default: manifest directory].
    #[arg(long)]
    pub base_dir: Option<PathBuf>,
    /// Output embeddings.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EnrollArgs {
    /// Embeddings files (repeatable).
    #[arg(long = "embeddings", required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Output JSONL of enrollment vectors (`enroll:<speaker>` ids).
    #[arg(long)]
    pub out: PathBuf,
    /// Sessions whose samples are averaged [default: 1].
    #[arg(long, value_delimiter = ',')]
    pub sessions: Option<Vec<u32>>,
    /// Also average augmented variants.
    #[arg(long)]
    pub include_augmented: bool,
    /// Only these speakers (comma-separated) [default: all].
    #[arg(long, value_delimiter = ',')]
    pub speakers: Option<Vec<String>>,
}

#[derive(Args)]
pub struct TrialsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Embeddings files covering the manifest (repeatable).
    #[arg(long = "embeddings", required = true)]
    pub embeddings: Vec<PathBuf>,
    /// pairwise | enrollment [default: pairwise].
    #[arg(long)]
    pub mode: Option<String>,
    /// cross-session | all-sessions [default: cross-session].
    #[arg(long)]
    pub scope: Option<String>,
    /// Output trials.csv; enrollment mode also writes enrollments.jsonl beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub trials: PathBuf,
    /// Embeddings files, including any enrollment vectors (repeatable).
    #[arg(long = "embeddings", required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Output scores.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone)]
pub struct CalibrationFlags {
    /// equal-prior | unweighted [default: equal-prior].
    #[arg(long)]
    pub weighting: Option<String>,
    /// L2 penalty on the weight [default: 0].
    #[arg(long)]
    pub l2: Option<f64>,
    /// Posterior clipping bound applied before the LR conversion [default: 1e-15].
    #[arg(long)]
    pub clip: Option<f64>,
    /// Unweighted fit with l2 = 1 (overridden by explicit --weighting/--l2).
    #[arg(long)]
    pub compat: bool,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Output calibration.json.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub calibration: CalibrationFlags,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// pairwise | enrollment [default: pairwise].
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub calibration_manifest: Option<PathBuf>,
    #[arg(long)]
    pub evaluation_manifest: Option<PathBuf>,
    /// Embeddings files covering both manifests (repeatable).
    #[arg(long = "embeddings")]
    pub embeddings: Vec<PathBuf>,
    /// Breakdown axes, comma-separated [default: duration,task].
    #[arg(long, value_delimiter = ',')]
    pub breakdowns: Option<Vec<String>>,
    /// Minimum same-origin trials for a reported cell [default: 5].
    #[arg(long)]
    pub min_cell_so: Option<usize>,
    /// Minimum different-origin trials for a reported cell [default: 20].
    #[arg(long)]
    pub min_cell_do: Option<usize>,
    /// Calibration trial set: all-sessions | cross-session
    /// [default: all-sessions in pairwise mode, cross-session in enrollment mode].
    #[arg(long)]
    pub calibration_scope: Option<String>,
    /// Tippet grid step in log10 LR [default: 0.01].
    #[arg(long)]
    pub tippet_step: Option<f64>,
    /// Tippet grid margin beyond the data range [default: 0.5].
    #[arg(long)]
    pub tippet_margin: Option<f64>,
    #[command(flatten)]
    pub calibration: CalibrationFlags,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// report.json written by `evaluate`.
    #[arg(long)]
    pub report: PathBuf,
    /// Print the report as JSON instead of tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct SynthArgs {
    /// clusters (embedding-space Gaussians) | voices (synthetic speech WAVs).
    #[arg(long, default_value = "clusters")]
    pub kind: String,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub calibration_speakers: usize,
    #[arg(long, default_value_t = 20)]
    pub evaluation_speakers: usize,
    /// Speech seconds per voice recording.
    #[arg(long, default_value_t = 52.0)]
    pub voiced_s: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(&cli.log));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let result = config::FileConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Prep(a) => commands::prep(a, &file),
        Command::Embed(a) => commands::embed(a, &file),
        Command::Enroll(a) => commands::enroll(a, &file),
        Command::Trials(a) => commands::trials(a, &file),
        Command::Score(a) => commands::score(a),
        Command::Calibrate(a) => commands::calibrate(a, &file),
        Command::Evaluate(a) => commands::evaluate(a, &file),
        Command::Report(a) => commands::report(a),
        Command::Synth(a) => commands::synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
