use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pedrisk", version, about = "Pediatric obesity risk: synthetic cohorts, training, evaluation and serving")]
pub struct Cli {
    /// TOML config file with [synth], [train] and [serve] sections.
    #[arg(long, global = true, env = "PEDRISK_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory that relative paths resolve against.
    #[arg(long, global = true, env = "PEDRISK_WORKDIR")]
    pub workdir: Option<PathBuf>,
    #[arg(long, global = true, env = "PEDRISK_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for training and evaluation; 0 uses every core.
    #[arg(long, global = true, env = "PEDRISK_THREADS")]
    pub threads: Option<usize>,
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort of FHIR bundles.
    Synth(SynthArgs),
    /// Train a model on a cohort and evaluate it on the held-out test split.
    Train(TrainArgs),
    /// Evaluate a trained model on a cohort.
    Eval(EvalArgs),
    /// Run the REST service.
    Serve(ServeArgs),
    /// Score one FHIR bundle and print the prediction document.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, env = "PEDRISK_N_PATIENTS")]
    pub n_patients: Option<usize>,
    /// Cohort directory to write.
    #[arg(long, default_value = "cohort")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cohort directory written by `synth`.
    #[arg(long = "in", default_value = "cohort")]
    pub input: PathBuf,
    /// Model directory to write.
    #[arg(long, default_value = "model")]
    pub out: PathBuf,
    #[arg(long, env = "PEDRISK_MAX_EPOCHS")]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    /// The test split the model was trained with.
    Test,
    /// Every eligible patient.
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model directory written by `train`.
    #[arg(long, env = "PEDRISK_MODEL", default_value = "model")]
    pub model: PathBuf,
    #[arg(long = "in", default_value = "cohort")]
    pub input: PathBuf,
    /// Directory for the report.
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    #[arg(long)]
    pub bootstrap_reps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PEDRISK_LISTEN")]
    pub listen: Option<String>,
    /// Model directory; overrides [serve] weights and registry.
    #[arg(long, env = "PEDRISK_MODEL")]
    pub model: Option<PathBuf>,
    /// Bearer token clients must present.
    #[arg(long, env = "PEDRISK_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// Default upstream FHIR base URL.
    #[arg(long, env = "PEDRISK_FHIR_SERVER")]
    pub fhir_server: Option<String>,
    #[arg(long, env = "PEDRISK_UI_DIR")]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// FHIR R4 bundle for one patient.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Model directory; overrides [serve] weights and registry.
    #[arg(long, env = "PEDRISK_MODEL")]
    pub model: Option<PathBuf>,
    /// Write the document here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub top_k: Option<usize>,
}
