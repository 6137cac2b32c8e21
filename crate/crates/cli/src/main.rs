use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qrc_cli::catalog::{self, CATALOG};
use qrc_cli::error::EXIT_CONFIG;
use qrc_cli::{run_experiment, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "qrc", version, about = "Run quantum reservoir computing experiments from config files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result files.
    Run {
        #[command(flatten)]
        target: Target,
        /// Output directory (default: the config's output_dir, else results/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Evaluate the config's expected orderings; exit 3 if any fails.
        #[arg(long)]
        check: bool,
    },
    /// List the bundled experiment configs.
    List {
        /// Print one config path per line.
        #[arg(long)]
        paths: bool,
    },
    /// Check a config without running it.
    Validate {
        #[command(flatten)]
        target: Target,
    },
}

#[derive(Args)]
struct Target {
    /// Config file, or the name of a bundled config.
    #[arg(long)]
    config: String,
    /// Number of coupling realizations.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
}

impl Target {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = catalog::load(&self.config)?;
        if let Some(n) = self.seeds {
            cfg.seeds = n;
        }
        if let Some(s) = self.master_seed {
            cfg.master_seed = s;
        }
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { target, out, threads, check } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Threads(e.to_string()))?;
            }
            let cfg = target.load()?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
            let summary = run_experiment(&cfg, &dir)?;
            println!(
                "{}: {} metric rows, {} files in {}",
                cfg.name,
                summary.metric_rows,
                summary.files.len(),
                summary.out_dir.display()
            );
            if check {
                for c in &summary.checks {
                    let verdict = if c.passed { "PASS" } else { "FAIL" };
                    println!(
                        "[{verdict}] {}: {} {} ({}) > {} ({})",
                        c.description, c.metric, c.higher, c.higher_mean, c.lower, c.lower_mean
                    );
                }
                let failed = summary.checks.iter().filter(|c| !c.passed).count();
                if failed > 0 {
                    return Err(CliError::ChecksFailed { failed, total: summary.checks.len() });
                }
            }
            Ok(())
        }
        Command::List { paths } => {
            for b in CATALOG {
                if paths {
                    println!("{}", catalog::source_path(b).display());
                } else {
                    println!("{:<16} {}", b.name, b.description);
                }
            }
            Ok(())
        }
        Command::Validate { target } => {
            let cfg = target.load()?;
            let violations = cfg.violations();
            if violations.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(CliError::Invalid(violations))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
