use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sublinear_clt::config::{reference_experiment, reference_names, ExperimentConfig, Mode};
use sublinear_clt::experiment::{describe, run, write_outputs, Overrides};
use sublinear_clt::Error;

/// Sub-linear expectation CLT experiments for m-dependent arrays.
#[derive(Parser)]
#[command(name = "sublin-clt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Upper and lower expectations of each functional of S_n.
    Eval(Common),
    /// G-heat solutions, grid refinements and Peng-oracle comparison.
    Gnormal(Common),
    /// E[phi(S_n / B_n)] against the G-normal limit, with condition columns.
    CltSweep(Common),
    /// Maximal moment inequality on a model or on the random battery.
    Rosenthal(Common),
    /// Blocking plan and diagnostics per n.
    BlockingInspect(Common),
    /// Hypothesis diagnostics per n with log-n trend slopes.
    Conditions(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "reference", required_unless_present = "reference")]
    config: Option<PathBuf>,
    /// Built-in experiment name.
    #[arg(long)]
    reference: Option<String>,
    /// Output directory for CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// PDE grid points.
    #[arg(long)]
    grid_nx: Option<usize>,
    /// PDE half width L of the domain [-L, L].
    #[arg(long = "grid-L")]
    grid_l: Option<f64>,
    /// Engine state cap.
    #[arg(long)]
    state_cap: Option<usize>,
    /// Block length tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn execute(mode: Mode, args: &Common) -> Result<String, Error> {
    let mut cfg = match (&args.config, &args.reference) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => reference_experiment(name).map_err(|_| {
            Error::Config(format!("unknown reference {name:?}; known: {}", reference_names().join(", ")))
        })?,
        (None, None) => return Err(Error::Config("--config or --reference is required".into())),
    };
    if args.reference.is_some() {
        cfg.mode = None;
    }
    Overrides {
        grid_nx: args.grid_nx,
        grid_half_width: args.grid_l,
        state_cap: args.state_cap,
        tol: args.tol,
    }
    .apply(&mut cfg)?;
    let files = run(&cfg, mode)?;
    write_outputs(&args.out, &files)?;
    Ok(describe(&files))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (mode, args) = match &cli.command {
        Command::Eval(a) => (Mode::Eval, a),
        Command::Gnormal(a) => (Mode::GnormalEval, a),
        Command::CltSweep(a) => (Mode::CltSweep, a),
        Command::Rosenthal(a) => (Mode::Rosenthal, a),
        Command::BlockingInspect(a) => (Mode::BlockingInspect, a),
        Command::Conditions(a) => (Mode::Conditions, a),
    };
    match execute(mode, args) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
