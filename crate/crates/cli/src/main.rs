//! `slogan`: train style-transfer models, generate handwriting-style text
//! images, export synthetic datasets and score them.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "slogan", version, about = "Handwriting-style text image synthesis")]
struct Cli {
    /// Where to write the run manifest (each command has a default).
    #[arg(long, global = true)]
    run_manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train (or resume training) on a dataset manifest.
    Train(TrainArgs),
    /// Generate one image for a piece of text.
    Generate(GenerateArgs),
    /// Export a synthetic labeled dataset.
    SynthDataset(SynthArgs),
    /// Score generated images or recognizer output.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Print a writer's latent style vector and the sampling bounds.
    InspectStyle(InspectArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key=value training config; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest (image path, transcript, writer id; tab separated).
    #[arg(long)]
    pub data: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop once this many iterations in total have run.
    #[arg(long)]
    pub max_iters: Option<u64>,
    /// Checkpoint period in iterations.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Directory for checkpoints, the loss log and the run manifest.
    #[arg(long, default_value = "slogan-run")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("style").required(true).args(["style_id", "style_file", "style_random"])))]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub text: String,
    /// Writer id as it appeared in the training manifest.
    #[arg(long)]
    pub style_id: Option<String>,
    /// One real number per line.
    #[arg(long)]
    pub style_file: Option<PathBuf>,
    /// Draw a style inside the stored writers' bounds (seeded by --seed).
    #[arg(long)]
    pub style_random: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub interval_px: Option<usize>,
    /// Lay the text on an arc of this radius (pixels).
    #[arg(long)]
    pub curve_radius: Option<f64>,
    /// Angle covered by the arc, in radians.
    #[arg(long, requires = "curve_radius", default_value_t = 1.0)]
    pub curve_span: f64,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Word list, one entry per line.
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// `random`, `cycle` or `writer:<id>`.
    #[arg(long, default_value = "random")]
    pub style: String,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Fréchet distance between features of two image sets.
    Fid(FidArgs),
    /// Character and word error rates of line-aligned text files.
    Cer(CerArgs),
}

#[derive(Debug, Args)]
pub struct FidArgs {
    #[arg(long)]
    pub real_manifest: PathBuf,
    #[arg(long)]
    pub fake_manifest: PathBuf,
    /// Also report the unweighted mean of per-writer distances.
    #[arg(long)]
    pub per_writer: bool,
    /// Checkpoint whose discriminator trunk provides the features.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CerArgs {
    #[arg(long)]
    pub ref_file: PathBuf,
    #[arg(long)]
    pub hyp_file: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Writer to dump; all writer ids are listed when omitted.
    #[arg(long)]
    pub style_id: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap prints usage; help and version are not failures.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let manifest = cli.run_manifest;
    let result = match cli.command {
        Command::Train(a) => commands::train(a, manifest),
        Command::Generate(a) => commands::generate(a, manifest),
        Command::SynthDataset(a) => commands::synth_dataset(a, manifest),
        Command::Eval(EvalCommand::Fid(a)) => commands::eval_fid(a, manifest),
        Command::Eval(EvalCommand::Cer(a)) => commands::eval_cer(a, manifest),
        Command::InspectStyle(a) => commands::inspect_style(a, manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
