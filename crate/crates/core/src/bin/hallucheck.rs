use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hallucheck::pipeline::{self, CooccurrenceSource, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "hallucheck", version, about = "Find and remove hallucinated content in visual instruction data")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run config; `${VAR}` is replaced from the environment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Flag chunks whose consistency score is below this value.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seeds retry jitter only.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Maximum number of counterfactual samples.
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true, value_enum)]
    co_occurrence_source: Option<Source>,
    /// Expert list (TOML `[[experts]]` or JSON); replaces the config's.
    #[arg(long, global = true)]
    experts: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    annotations: Option<PathBuf>,
    /// Verdict file to consume (default: <out>/verdicts.jsonl).
    #[arg(long, global = true)]
    verdicts: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// CHAIR rates of the corpus against the annotations.
    Chair,
    /// Cross-check every answer chunk with the expert panel.
    Detect,
    /// Remove flagged chunks and write the rectified corpus.
    Eliminate,
    /// Append counterfactual samples for flagged objects.
    Expand,
    /// Re-threshold stored verdicts.
    Sweep,
    /// Summarize everything in the output directory.
    Report,
}

#[derive(ValueEnum, Clone, Copy)]
enum Source {
    Annotations,
    Chunks,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        corpus: cli.corpus,
        annotations: cli.annotations,
        verdicts: cli.verdicts,
        threshold: cli.threshold,
        jobs: cli.jobs,
        seed: cli.seed,
        cache_dir: cli.cache_dir,
        out: cli.out,
        budget: cli.budget,
        co_occurrence_source: cli.co_occurrence_source.map(|s| match s {
            Source::Annotations => CooccurrenceSource::Annotations,
            Source::Chunks => CooccurrenceSource::Chunks,
        }),
        experts_file: cli.experts,
    };
    let result = RunConfig::load(cli.config.as_deref(), &overrides).and_then(|cfg| match cli.command {
        Command::Chair => pipeline::cmd_chair(&cfg),
        Command::Detect => pipeline::cmd_detect(&cfg),
        Command::Eliminate => pipeline::cmd_eliminate(&cfg),
        Command::Expand => pipeline::cmd_expand(&cfg),
        Command::Sweep => pipeline::cmd_sweep(&cfg),
        Command::Report => pipeline::cmd_report(&cfg),
    });
    let code = match result {
        Ok(outcome) => {
            println!("{}", outcome.message.trim_end());
            if outcome.degraded {
                eprintln!("warning: some chunks could not be verified");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
