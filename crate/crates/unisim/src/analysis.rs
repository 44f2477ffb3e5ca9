//! Runs the analyses a netlist asks for, with command-line overrides on top.

use std::path::{Path, PathBuf};
use std::thread;

use thiserror::Error;
use unisim_core::numeric::NewtonConfig;
use unisim_core::transient::{run_transient, TimeGrid, TransientRun};
use unisim_core::{solve_power_flow, SteadyStateSolution};

use crate::netlist::{parse_netlist, AnalysisKind, Netlist, NetlistError, Settings};
use crate::report::{ComparisonReport, MotorComparison};
use crate::waveform_io::CsvError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {}: {source}", path.display())]
    Input { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    /// Missing or out-of-range analysis settings.
    #[error("{0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] unisim_core::Error),
    #[error(transparent)]
    Output(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

impl RunError {
    /// Process exit status: 1 for solver and output failures, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Input { .. } | RunError::Netlist(_) | RunError::Config(_) => 2,
            RunError::Solver(_) | RunError::Output(_) | RunError::Csv(_) => 1,
        }
    }
}

pub fn load_netlist(path: &Path) -> Result<Netlist, RunError> {
    let bytes = std::fs::read(path).map_err(|source| RunError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_netlist(&String::from_utf8_lossy(&bytes))?)
}

fn checked(s: Settings) -> Result<Settings, RunError> {
    let bad = |what: &str, v: f64| RunError::Config(format!("{what} must be positive and finite, got {v}"));
    for (what, v) in [("dt", s.dt), ("tend", s.t_end), ("tol", s.tol)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(what, v));
            }
        }
    }
    if s.max_nr == Some(0) {
        return Err(RunError::Config("max_nr must be at least 1".into()));
    }
    Ok(s)
}

fn newton(s: Settings) -> NewtonConfig {
    let d = NewtonConfig::default();
    NewtonConfig {
        abs_tolerance: s.tol.unwrap_or(d.abs_tolerance),
        max_iterations: s.max_nr.unwrap_or(d.max_iterations),
        ..d
    }
}

pub fn steady_config(netlist: &Netlist, flags: Settings) -> Result<NewtonConfig, RunError> {
    Ok(newton(checked(flags.or(netlist.settings(AnalysisKind::Steady)))?))
}

/// Grid and Newton settings for a start-up run; `dt` and `tend` must come from somewhere.
pub fn transient_config(netlist: &Netlist, kind: AnalysisKind, flags: Settings) -> Result<(TimeGrid, NewtonConfig), RunError> {
    let s = checked(flags.or(netlist.settings(kind)))?;
    let dt = s.dt.ok_or_else(|| RunError::Config("transient analysis needs a time step (`dt=` or --dt)".into()))?;
    let t_end = s
        .t_end
        .ok_or_else(|| RunError::Config("transient analysis needs an end time (`tend=` or --tend)".into()))?;
    let grid = TimeGrid::new(0.0, t_end, dt).map_err(|e| RunError::Config(e.to_string()))?;
    Ok((grid, newton(s)))
}

pub fn run_steady(netlist: &Netlist, flags: Settings) -> Result<SteadyStateSolution, RunError> {
    let cfg = steady_config(netlist, flags)?;
    Ok(solve_power_flow(&netlist.circuit, &cfg)?)
}

/// Start-up run from the zero state.
pub fn run_startup(netlist: &Netlist, flags: Settings) -> Result<TransientRun, RunError> {
    let (grid, cfg) = transient_config(netlist, AnalysisKind::Transient, flags)?;
    Ok(run_transient(&netlist.circuit, &grid, &cfg, None)?)
}

/// Steady state against the end of a start-up run, one block per motor.
///
/// `max_nr` limits the transient only; the steady solve always iterates to its tolerance.
pub fn run_compare(netlist: &Netlist, flags: Settings) -> Result<ComparisonReport, RunError> {
    if netlist.motors().is_empty() {
        return Err(RunError::Config("compare needs at least one motor".into()));
    }
    let (grid, transient_cfg) = transient_config(netlist, AnalysisKind::Compare, flags)?;
    let steady_cfg = NewtonConfig {
        max_iterations: NewtonConfig::default().max_iterations,
        ..transient_cfg
    };
    let circuit = &netlist.circuit;
    let (steady, run) = thread::scope(|s| {
        let steady = s.spawn(|| solve_power_flow(circuit, &steady_cfg));
        let run = run_transient(circuit, &grid, &transient_cfg, None);
        (steady.join().expect("steady-state thread panicked"), run)
    });
    let (steady, run) = (steady?, run?);
    let motors = steady
        .motors
        .iter()
        .map(|m| {
            let name = circuit.element(m.element).name.clone();
            let last = |q: &str| {
                let col = run.waveforms.column(&format!("{name}.{q}")).expect("motor signals recorded");
                *col.last().expect("at least the start point")
            };
            let transient = [last("wr"), last("te"), last("ids"), last("iqs"), last("idr"), last("iqr")];
            MotorComparison::new(name, [m.wr, m.te, m.ids, m.iqs, m.idr, m.iqr], transient)
        })
        .collect();
    Ok(ComparisonReport {
        t_end: grid.time(grid.steps()),
        motors,
    })
}
