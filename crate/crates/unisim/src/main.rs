use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use unisim::report::write_steady_report;
use unisim::{load_netlist, run_compare, run_startup, run_steady, write_waveforms, RunError, Settings};

#[derive(Parser)]
#[command(name = "unisim", version, about = "Steady-state and transient simulation of power circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phasor-domain steady state (power flow, machine operating points)
    Steady(RunArgs),
    /// Start-up run from the zero state; writes waveform CSV
    Transient(RunArgs),
    /// Steady state against the end of a start-up run
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Netlist file
    #[arg(long)]
    net: PathBuf,
    /// Time step in seconds
    #[arg(long)]
    dt: Option<f64>,
    /// End time in seconds
    #[arg(long)]
    tend: Option<f64>,
    /// Newton tolerance on update and residual max-norms
    #[arg(long)]
    tol: Option<f64>,
    /// Newton iterations allowed per solve
    #[arg(long = "max-nr")]
    max_nr: Option<usize>,
    /// Output file (standard output when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn settings(&self) -> Settings {
        Settings {
            dt: self.dt,
            t_end: self.tend,
            tol: self.tol,
            max_nr: self.max_nr,
        }
    }

    fn sink(&self) -> Result<Box<dyn Write>, RunError> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

/// Exit status for a finished run.
enum Outcome {
    Done,
    Disagree,
}

fn run(cli: Cli) -> Result<Outcome, RunError> {
    match cli.command {
        Command::Steady(args) => {
            let netlist = load_netlist(&args.net)?;
            let sol = run_steady(&netlist, args.settings())?;
            let mut out = args.sink()?;
            write_steady_report(&netlist, &sol, &mut out)?;
            out.flush()?;
            Ok(Outcome::Done)
        }
        Command::Transient(args) => {
            let netlist = load_netlist(&args.net)?;
            let run = run_startup(&netlist, args.settings())?;
            write_waveforms(&run.waveforms, args.sink()?)?;
            if run.unconverged_steps > 0 {
                eprintln!(
                    "warning: {} of {} steps accepted after a single iteration (max residual {:.3e})",
                    run.unconverged_steps,
                    run.waveforms.len() - 1,
                    run.max_residual_norm
                );
            }
            Ok(Outcome::Done)
        }
        Command::Compare(args) => {
            let netlist = load_netlist(&args.net)?;
            let report = run_compare(&netlist, args.settings())?;
            let mut out = args.sink()?;
            writeln!(out, "{report}")?;
            out.flush()?;
            Ok(if report.agrees() { Outcome::Done } else { Outcome::Disagree })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Disagree) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
