use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use streamfair::config::RunConfig;
use streamfair::pipeline;
use streamfair::report::RunReport;
use streamfair::Result;

/// Fair neighborhood sampling for stream temperature graph models.
#[derive(Parser)]
#[command(name = "streamfair", version)]
struct Cli {
    /// Run on one thread; results are identical either way, this only makes
    /// the schedule reproducible too.
    #[arg(long, global = true)]
    single_thread: bool,

    /// Print per-seed results.
    #[arg(short, long, global = true, conflicts_with = "quiet")]
    verbose: bool,

    /// Print nothing on success.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(long, short)]
    config: PathBuf,

    /// Replace the configured seed list; repeat for several seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if !self.seeds.is_empty() {
            cfg.train.seeds = self.seeds.clone();
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic basin bundle.
    Generate(ConfigArgs),
    /// Train the configured sampler mode over all seeds.
    Train(ConfigArgs),
    /// Recompute test metrics of a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        /// Comma-separated window widths; defaults to the training config.
        #[arg(long, value_delimiter = ',')]
        window_sizes: Option<Vec<f64>>,
        /// Output directory; defaults to `evaluation/` next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare sampler modes under identical seeds.
    Ablate(ConfigArgs),
}

fn summarize(report: &RunReport, verbose: bool) {
    for r in &report.results {
        match &r.aggregate {
            Some(a) => {
                let windows: Vec<String> = a
                    .worst_window_rmse
                    .iter()
                    .map(|(w, s)| format!("{w}:{:.4}", s.median))
                    .collect();
                println!(
                    "{:<20} seeds {:>2}  rmse {:.4}  m_fair {:.4}  worst-window {}",
                    r.mode.name(),
                    a.seeds,
                    a.overall_rmse.median,
                    a.m_fair.median,
                    windows.join(" ")
                );
            }
            None => println!("{:<20} no successful seeds", r.mode.name()),
        }
        if verbose {
            for s in &r.per_seed {
                println!(
                    "  seed {:>6}  rmse {:.4}  m_fair {:.4}  best epoch {}",
                    s.seed, s.metrics.overall_rmse, s.metrics.fairness.m_fair, s.history.best_epoch
                );
            }
        }
        for f in &r.failures {
            eprintln!("  seed {} failed: {}", f.seed, f.error);
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let talk = !cli.quiet;
    match &cli.command {
        Command::Generate(args) => {
            let cfg = args.load()?;
            let s = pipeline::cmd_generate(&cfg)?;
            if talk {
                println!(
                    "wrote {}: {} segments, {} edges, {} days, {} temperature and {} flow observations",
                    cfg.bundle_dir.display(),
                    s.segments,
                    s.edges,
                    s.days,
                    s.temperature_observations,
                    s.flow_observations
                );
            }
        }
        Command::Train(args) => {
            let report = pipeline::cmd_train(&args.load()?)?;
            if talk {
                summarize(&report, cli.verbose);
            }
        }
        Command::Ablate(args) => {
            let report = pipeline::cmd_ablate(&args.load()?)?;
            if talk {
                summarize(&report, cli.verbose);
            }
        }
        Command::Evaluate {
            checkpoint,
            bundle,
            window_sizes,
            out,
        } => {
            let ckpt = pipeline::read_checkpoint(checkpoint)?;
            let out = out.clone().unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .map_or_else(|| PathBuf::from("evaluation"), |p| p.join("evaluation"))
            });
            let report = pipeline::cmd_evaluate(&ckpt, bundle, window_sizes.clone(), &out)?;
            if talk {
                summarize(&report, cli.verbose);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.single_thread {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(1).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
