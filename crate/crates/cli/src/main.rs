use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hift_cli::commands::{self, AblationOutcome};
use hift_cli::{CliResult, RunConfig};

#[derive(Parser)]
#[command(
    name = "hift",
    version,
    about = "Hierarchical feature transformer tracker: train, track, evaluate"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// INI run configuration; defaults apply to every key it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent sequences, seeds or variants.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference check of every parameter group on a tiny model.
    Gradcheck,
    /// Train on synthetic sequences (or `--data`) and write a checkpoint.
    Train {
        /// Directory of sequence subdirectories to train on instead of synthetic data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Track one sequence directory, or the synthetic evaluation suite.
    Track {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sequence directory (frames plus groundtruth.txt).
        #[arg(long)]
        sequence: Option<PathBuf>,
        /// Also write each frame's fused score map as CSV.
        #[arg(long)]
        dump_scores: bool,
    },
    /// One-pass evaluation of tracking results.
    Eval {
        /// A results file, or a directory of `<name>/results.txt`.
        #[arg(long)]
        results: PathBuf,
        /// Ground-truth file or directory; defaults to groundtruth.txt beside each results file.
        #[arg(long)]
        groundtruth: Option<PathBuf>,
    },
    /// Train and evaluate the six component-ablation variants.
    Ablate,
}

fn config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let c = &cli.common;
    let out = &c.out;
    match cli.command {
        Command::Gradcheck => {
            let cfg = config(c)?;
            commands::prepare_out(out, &cfg)?;
            let reports = commands::gradcheck(&cfg, c.jobs)?;
            for r in &reports {
                println!("{r}\n");
            }
            commands::gradcheck_verdict(&reports)?;
            println!("all parameter groups within tolerance {:e}", cfg.gradcheck.tolerance);
        }
        Command::Train { data } => {
            let cfg = config(c)?;
            let s = commands::cmd_train(&cfg, data.as_deref(), out)?;
            println!(
                "trained {} steps: loss {:.4} -> {:.4} ({:.1}% of initial)",
                s.logs.len(),
                s.initial,
                s.last,
                100.0 * s.ratio()
            );
            println!("checkpoint {}", s.checkpoint.display());
        }
        Command::Track {
            checkpoint,
            sequence,
            dump_scores,
        } => {
            let cfg = config(c)?;
            let dirs = commands::cmd_track(&cfg, &checkpoint, sequence.as_deref(), dump_scores, c.jobs, out)?;
            for d in dirs {
                println!("{}", d.join(commands::RESULTS).display());
            }
        }
        Command::Eval { results, groundtruth } => {
            let s = commands::cmd_eval(&results, groundtruth.as_deref(), out)?;
            for (name, r) in &s.per_sequence {
                println!(
                    "{name:<24} precision@20 {:.4}  success AUC {:.4}",
                    r.precision_at_20, r.success_auc
                );
            }
            println!(
                "{:<24} precision@20 {:.4}  success AUC {:.4}",
                "overall", s.overall.precision_at_20, s.overall.success_auc
            );
        }
        Command::Ablate => {
            let cfg = config(c)?;
            let rows = commands::cmd_ablate(&cfg, c.jobs, out)?;
            print!("{}", commands::ablation_table(&rows));
            let failed = rows
                .iter()
                .filter(|r| matches!(r.outcome, AblationOutcome::Failed(_)))
                .count();
            if failed > 0 {
                println!("{failed} variant(s) failed numerically");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
