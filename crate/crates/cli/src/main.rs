//! `delibsched` command-line harness.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error.

mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spec::Spec;

/// A spec or input that failed validation (exit code 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(name = "delibsched", version, about = "Anytime planning and deliberation scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gather profile (`kind = precursor`) or EIV (`kind = eiv`) statistics into a table file.
    Gather(Common),
    /// Run the precursor modes over a deadline sweep and write anytime traces.
    Precursor(Common),
    /// Run the recurrent schedulers with matched seeds and write run traces.
    Recurrent(Common),
    /// Write exact optimal values and actions for a map and goal.
    Oracle(Common),
    /// Check a map, table or automaton file.
    Validate {
        file: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Spec file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
}

impl Common {
    fn spec(&self) -> anyhow::Result<Spec> {
        let mut spec = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Invalid(format!("reading {}: {e}", p.display())))?;
                Spec::parse(&text).map_err(|e| Invalid(format!("{}: {e}", p.display())))?
            }
            None => Spec::default(),
        };
        if let Some(m) = &self.map {
            spec.map = Some(m.clone());
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(g) = self.gamma {
            spec.gamma = g;
        }
        if let Some(o) = &self.out {
            spec.out = Some(o.clone());
        }
        if let Some(t) = &self.table {
            spec.table = Some(t.clone());
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let summary = match cli.command {
        Command::Gather(c) => commands::gather(&c.spec()?)?,
        Command::Precursor(c) => commands::precursor(&c.spec()?)?,
        Command::Recurrent(c) => commands::recurrent(&c.spec()?)?,
        Command::Oracle(c) => commands::oracle(&c.spec()?)?,
        Command::Validate { file } => {
            let (kind, problems) = commands::validate(&file)?;
            if problems.is_empty() {
                println!("{}: valid {kind}", file.display());
                return Ok(ExitCode::SUCCESS);
            }
            for p in &problems {
                println!("{}: {p}", file.display());
            }
            return Ok(ExitCode::from(1));
        }
    };
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
