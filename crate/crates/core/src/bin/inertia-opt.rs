use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use inertia_core::run::{run, Command, GammaGrid, RunOptions};
use inertia_core::scenario::{Scenario, VariantName};
use inertia_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Evaluate,
    Optimize,
    Sweep,
    Simulate,
    Spectrum,
    SparsityPath,
    Robust,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Optimize => Command::Optimize,
            Cmd::Sweep => Command::Sweep,
            Cmd::Simulate => Command::Simulate,
            Cmd::Spectrum => Command::Spectrum,
            Cmd::SparsityPath => Command::SparsityPath,
            Cmd::Robust => Command::Robust,
        }
    }
}

/// Optimal virtual-inertia placement studies on Kron-reduced networks.
#[derive(Debug, Parser)]
#[command(name = "inertia-opt", version)]
struct Cli {
    command: Cmd,
    scenario: PathBuf,
    /// Output directory for results.json and CSV files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `log:a:b:K`, `lin:a:b:K` or a comma list of γ values.
    #[arg(long, value_parser = parse_grid)]
    gamma_grid: Option<GammaGrid>,
    /// Number of (w₁, w₂) points for the two-bus disturbance sweep.
    #[arg(long)]
    sweep_w: Option<usize>,
    /// Overrides the problem variant (general, primary_effort, uniform_ratio,
    /// sparse, robust, robust_primary).
    #[arg(long, value_parser = parse_variant)]
    variant: Option<VariantName>,
}

fn parse_grid(s: &str) -> Result<GammaGrid, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<VariantName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn fail(err: &Error) -> ExitCode {
    let report = serde_json::json!({
        "error": { "kind": err.kind(), "message": err.to_string() }
    });
    eprintln!("{report}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let scenario = match std::fs::read_to_string(&cli.scenario)
        .map_err(Error::from)
        .and_then(|text| Scenario::from_json(&text))
    {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let opts = RunOptions {
        out: cli.out,
        seed: cli.seed,
        gamma_grid: cli.gamma_grid,
        sweep_w: cli.sweep_w,
        variant: cli.variant,
    };
    match run(&scenario, cli.command.into(), &opts) {
        Ok(out) => {
            // a closed pipe (e.g. `| head`) is not an error for a batch tool
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", out.summary);
            for f in out.files {
                let _ = writeln!(stdout, "wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
