use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nnreach::graph::Network;
use nnreach_cli::run::summary;
use nnreach_cli::{demo, run_file, CliError};

/// Reachability analysis for neural-network dynamical systems.
#[derive(Parser)]
#[command(name = "nnreach", version)]
struct Args {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in demo.
    Demo {
        name: String,
        #[arg(long, default_value = "demo-out")]
        out: PathBuf,
    },
    /// Load and check a network file.
    Validate { network: PathBuf },
}

fn execute(args: Args) -> Result<i32, CliError> {
    match args.cmd {
        Cmd::Run { scenario, out } => {
            let report = run_file(&scenario, out.as_deref())?;
            println!("{}", summary(&report));
            Ok(report.outcome.exit_code())
        }
        Cmd::Demo { name, out } => {
            let report = demo(&name, &out.join(&name))?;
            for (label, r) in &report.runs {
                println!("== {label}\n{}", summary(r));
            }
            for n in &report.notes {
                println!("{n}");
            }
            Ok(report.outcome.exit_code())
        }
        Cmd::Validate { network } => {
            let net = Network::load(&network).map_err(|e| CliError::field("network", e))?;
            let g = &net.graph;
            println!(
                "ok: {} nodes, {} activations, state dim {}, disturbance dim {}",
                g.len(),
                g.activation_nodes().len(),
                net.state_dim,
                net.disturbance_dim
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NNREACH_LOG", "error")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
