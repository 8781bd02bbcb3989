//! `suskit`: susceptibility experiments from the command line.
//!
//! Every subcommand prints a JSON envelope
//! `{command, inputs, outputs, diagnostics, versions, seed}`; `inputs` is the
//! fully resolved configuration and can be fed back through `--config`.

mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::{Failure, Report};
use config::{ExperimentConfig, Format, InvalidInput};

/// Environment variable holding the default worker thread count.
const THREADS_ENV: &str = "SUSKIT_THREADS";

#[derive(Parser)]
#[command(name = "suskit", version, about = "Susceptibility of inhomogeneous random graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Operator norm ‖T‖ and λ_c = 1/‖T‖.
    Norm,
    /// χ(λκ) from the operator series.
    Chi,
    /// χ̂(λκ) from the branching-process dual.
    Chihat,
    /// Integrated ρ_k for k ≤ k-max.
    Rhok,
    /// Monte Carlo branching process.
    #[command(name = "mc-bp")]
    McBp,
    /// One sampled graph; the table is its edge list.
    Sample,
    /// Empirical χ and χ̂ over a λ grid beside the operator predictions.
    Scan,
    /// λ_c by the norm route, the solvability route or both.
    Threshold,
    /// Cross-check χ (or χ̂) across independent routes.
    Verify,
    /// CHKNS family graphs against the exact formulas.
    Chkns,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Norm => "norm",
            Command::Chi => "chi",
            Command::Chihat => "chihat",
            Command::Rhok => "rhok",
            Command::McBp => "mc-bp",
            Command::Sample => "sample",
            Command::Scan => "scan",
            Command::Threshold => "threshold",
            Command::Verify => "verify",
            Command::Chkns => "chkns",
        }
    }
}

#[derive(Args)]
struct Opts {
    /// `key = value` file, or a previous result envelope to re-run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: $SUSKIT_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// constant:C | chkns | dubins | rank1:psi=NAME | max:phi=NAME | finite:2,eps=E | finite:ROWS
    #[arg(long, global = true)]
    kernel: Option<String>,
    /// atom | uniform:M | graded:M[:GAMMA] | powerlaw:Q:XMAX:M | finite:w1,w2,..
    #[arg(long, visible_alias = "space", global = true)]
    mesh: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<String>,
    /// LO:HI:COUNT
    #[arg(long, global = true)]
    lambda_grid: Option<String>,
    /// Vertex count, or a comma-separated ladder.
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    reps: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// clip | exponential
    #[arg(long, global = true)]
    edge_rule: Option<String>,
    /// iid | grid
    #[arg(long, global = true)]
    vertices: Option<String>,
    /// auto | skip | naive
    #[arg(long, global = true)]
    strategy: Option<String>,
    #[arg(long, global = true)]
    tol: Option<String>,
    #[arg(long, global = true)]
    j_max: Option<String>,
    /// norm | solvability | both
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true)]
    lo: Option<String>,
    #[arg(long, global = true)]
    hi: Option<String>,
    #[arg(long, global = true)]
    bracket_tol: Option<String>,
    #[arg(long, global = true)]
    k_max: Option<String>,
    #[arg(long, global = true)]
    runs: Option<String>,
    #[arg(long, global = true)]
    cap: Option<String>,
    /// I | II | III | growth
    #[arg(long, global = true)]
    variant: Option<String>,
    #[arg(long, global = true)]
    rel_tol: Option<String>,
    /// Write the envelope (or, with --format csv, the table) here.
    #[arg(long, global = true)]
    output: Option<String>,
    /// json | csv
    #[arg(long, global = true)]
    format: Option<String>,
    /// Also write the CSV table here.
    #[arg(long, global = true)]
    csv: Option<String>,
}

impl Opts {
    fn pairs(&self) -> [(&'static str, Option<&String>); 24] {
        [
            ("kernel", self.kernel.as_ref()),
            ("mesh", self.mesh.as_ref()),
            ("lambda", self.lambda.as_ref()),
            ("lambda-grid", self.lambda_grid.as_ref()),
            ("n", self.n.as_ref()),
            ("reps", self.reps.as_ref()),
            ("seed", self.seed.as_ref()),
            ("edge-rule", self.edge_rule.as_ref()),
            ("vertices", self.vertices.as_ref()),
            ("strategy", self.strategy.as_ref()),
            ("tol", self.tol.as_ref()),
            ("j-max", self.j_max.as_ref()),
            ("method", self.method.as_ref()),
            ("lo", self.lo.as_ref()),
            ("hi", self.hi.as_ref()),
            ("bracket-tol", self.bracket_tol.as_ref()),
            ("k-max", self.k_max.as_ref()),
            ("runs", self.runs.as_ref()),
            ("cap", self.cap.as_ref()),
            ("variant", self.variant.as_ref()),
            ("rel-tol", self.rel_tol.as_ref()),
            ("output", self.output.as_ref()),
            ("format", self.format.as_ref()),
            ("csv", self.csv.as_ref()),
        ]
    }

    /// Defaults, then the config file, then flags.
    fn config(&self) -> Result<ExperimentConfig, InvalidInput> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for (key, value) in self.pairs() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.resolve()?;
        Ok(cfg)
    }

    fn threads(&self) -> Result<Option<usize>, InvalidInput> {
        if let Some(t) = self.threads {
            return Ok(Some(t));
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| InvalidInput::new(THREADS_ENV, format!("cannot parse {v:?}"))),
            Err(_) => Ok(None),
        }
    }
}

fn dispatch(command: Command, cfg: &ExperimentConfig) -> Result<Report, Failure> {
    match command {
        Command::Norm => commands::norm(cfg),
        Command::Chi => commands::chi(cfg),
        Command::Chihat => commands::chihat(cfg),
        Command::Rhok => commands::rhok(cfg),
        Command::McBp => commands::mc_bp(cfg),
        Command::Sample => commands::sample(cfg),
        Command::Scan => commands::scan_cmd(cfg),
        Command::Threshold => commands::threshold(cfg),
        Command::Verify => commands::verify(cfg),
        Command::Chkns => commands::chkns(cfg),
    }
}

fn emit(path: Option<&str>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    if let Some(t) = cli.opts.threads()? {
        // fails only if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let cfg = cli.opts.config()?;
    let report = dispatch(cli.command, &cfg)?;
    if let Some(path) = &cfg.csv {
        let table = report
            .table
            .as_deref()
            .ok_or_else(|| InvalidInput::new("csv", format!("{} produces no table", cli.command.name())))?;
        fs::write(path, table)?;
    }
    match cfg.format {
        Format::Csv => {
            let table = report
                .table
                .as_deref()
                .ok_or_else(|| InvalidInput::new("format", format!("{} produces no table", cli.command.name())))?;
            emit(cfg.output.as_deref(), table)?;
        }
        Format::Json => {
            let envelope = json!({
                "command": cli.command.name(),
                "inputs": cfg,
                "outputs": report.outputs,
                "diagnostics": report.diagnostics,
                "versions": { "suskit": env!("CARGO_PKG_VERSION"), "suskit-core": suskit_core::VERSION },
                "seed": cfg.seed,
            });
            let mut text = serde_json::to_string_pretty(&envelope).expect("serializable");
            text.push('\n');
            emit(cfg.output.as_deref(), &text)?;
        }
    }
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
