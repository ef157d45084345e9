use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chiralcurl::commands::{self, exit_code};
use chiralcurl::io::{RunConfig, Task};
use chiralcurl::{par, Error};

#[derive(Parser)]
#[command(name = "chiralcurl", version, about = "Chiral Maxwell eigenvalue sweeps on Bravais lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diagonalization, SVD, census and reduced-problem checks (verify.json)
    Verify(Common),
    /// Eigencurves over the configured chirality grid (curves.csv, events.json)
    Sweep(Common),
    /// Regularity certificate at the critical chirality (certificate.json)
    Analyze(Common),
    /// Spectra of the null-space free problem (nfgep.json)
    Nfgep(Common),
    /// Every task listed in the config, in order
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 keeps the default)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn execute(cli: Cli) -> Result<bool, Error> {
    let (common, tasks) = match cli.command {
        Command::Verify(c) => (c, Some(Task::Verify)),
        Command::Sweep(c) => (c, Some(Task::Sweep)),
        Command::Analyze(c) => (c, Some(Task::Analyze)),
        Command::Nfgep(c) => (c, Some(Task::Nfgep)),
        Command::Run(c) => (c, None),
    };
    let cfg = RunConfig::load(&common.config)?;
    par::configure_threads(common.threads).map_err(Error::InvalidArgument)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let tasks = tasks.map(|t| vec![t]).unwrap_or_else(|| cfg.tasks.clone());
    let mut ok = true;
    for task in tasks {
        let pass = commands::run_task(&cfg, task, &out)?;
        println!("{task:?}: {}", if pass { "ok" } else { "FAILED" });
        ok &= pass;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
