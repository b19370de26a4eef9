//! The `ctl` command line: ingest, hack, synth, vocab, curriculum, eval and
//! report subcommands over the `ctl-core` library.

mod commands;
mod sidecar;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ctl_core::par::Execution;
use ctl_core::Error;

pub use sidecar::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

/// Outcome of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub log: String,
}

#[derive(Debug, Parser)]
#[command(name = "ctl", version, about = "Curricular transfer learning pipeline")]
struct Cli {
    /// Run data-parallel work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert annotated dialogs into encoded train/val/test corpora.
    Ingest(IngestArgs),
    /// Turn a forum dump into a pseudo-labelled dialog corpus.
    Hack(HackArgs),
    /// Sample a synthetic corpus from a grammar.
    Synth(SynthArgs),
    /// Build a word vocabulary from corpora.
    Vocab(VocabArgs),
    /// Validate and run a curriculum manifest.
    Curriculum(CurriculumArgs),
    /// Generate responses with oracle belief/action and score them.
    Eval(EvalArgs),
    /// Render loss curves and metrics tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub(crate) struct IngestArgs {
    /// Dialog file (JSON array or JSON lines) or dataset directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// train,val,test ratios used when no official split lists exist.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
}

#[derive(Debug, Args)]
pub(crate) struct HackArgs {
    /// Line-delimited forum threads.
    #[arg(long)]
    pub threads: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Token limit per packed line.
    #[arg(long, default_value_t = ctl_core::codec::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long)]
    pub no_shuffle: bool,
    /// Also write the same text without markers (the no-encode corpus).
    #[arg(long)]
    pub plain_out: Option<PathBuf>,
    /// Write the pseudo grammar derived from the thread topics.
    #[arg(long)]
    pub grammar_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct SynthArgs {
    /// Built-in grammar name or grammar file.
    #[arg(long)]
    pub grammar: String,
    /// Number of sessions.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub turns: usize,
    /// Size of the synthetic surface vocabulary.
    #[arg(long, default_value_t = 200)]
    pub words: usize,
    /// Pack sessions into lines of at most this many tokens.
    #[arg(long)]
    pub pack: Option<usize>,
    /// Also write the sessions as JSON lines (for `eval`).
    #[arg(long)]
    pub sessions_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct VocabArgs {
    #[arg(long = "corpus", required = true)]
    pub corpora: Vec<PathBuf>,
    #[arg(long, default_value = ctl_core::grammar::TARGET)]
    pub grammar: String,
    #[arg(long, default_value_t = 50_000)]
    pub max_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub(crate) struct CurriculumArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to `runs/<manifest name>` next to the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub validate_only: bool,
}

#[derive(Debug, Args)]
pub(crate) struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Test sessions as JSON lines.
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long, default_value = ctl_core::grammar::TARGET)]
    pub grammar: String,
    /// Venue database (file or directory of JSON lines).
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = ctl_core::lm::DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
    /// Evaluate only the first N sessions.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-dialog detail as JSON lines.
    #[arg(long)]
    pub detail: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub(crate) struct ReportArgs {
    /// `NAME=TRACE_CSV`, one per curriculum.
    #[arg(long = "run")]
    pub runs: Vec<String>,
    /// `NAME:SIZE=REPORT_JSON`, one per evaluated model.
    #[arg(long = "metrics")]
    pub metrics: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "csv,svg")]
    pub format: Vec<String>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Training(_) => EXIT_TRAINING,
        _ => EXIT_VALIDATION,
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            return CommandResult {
                exit_code: code,
                artifacts: Vec::new(),
                log: e.render().to_string(),
            };
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let mut ctx = commands::Context::new(exec, argv);
    let outcome = match &cli.command {
        Command::Ingest(a) => commands::ingest(&mut ctx, a),
        Command::Hack(a) => commands::hack(&mut ctx, a),
        Command::Synth(a) => commands::synth(&mut ctx, a),
        Command::Vocab(a) => commands::vocab(&mut ctx, a),
        Command::Curriculum(a) => commands::curriculum(&mut ctx, a),
        Command::Eval(a) => commands::eval(&mut ctx, a),
        Command::Report(a) => commands::report(&mut ctx, a),
    };
    match outcome {
        Ok(()) => CommandResult {
            exit_code: EXIT_OK,
            artifacts: ctx.artifacts,
            log: ctx.log.join("\n"),
        },
        Err(e) => {
            ctx.log.push(format!("error: {e}"));
            CommandResult {
                exit_code: exit_code(&e),
                artifacts: ctx.artifacts,
                log: ctx.log.join("\n"),
            }
        }
    }
}
