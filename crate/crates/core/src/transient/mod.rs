//! Trapezoidal time-domain analysis with a Newton solve at every step.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::circuit::{build_system, motor_history_at, BranchRef, CircuitGraph, Context, ElementId, ElementKind};
use crate::error::{Error, Result};
use crate::machine::{electrical_torque, MotorHistory, MOTOR_STATES};
use crate::numeric::{newton_solve, NewtonConfig, SolveReport};

mod companion;

pub use companion::{
    coil_voltages, companion_coupled_coils, taylor_linearize_product, validate_inductance, CoilHistory,
    CompanionStamp, LinearizedProduct,
};

/// Per-element memory carried between time points.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementHistory {
    None,
    Coils(CoilHistory),
    Motor(MotorHistory),
}

/// Solved time point plus everything the next step's companion models need.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState {
    pub time: f64,
    pub state: Vec<f64>,
    pub elements: Vec<ElementHistory>,
}

impl HistoryState {
    /// Makes `x0` algebraically consistent at `t0`: inductor currents and machine
    /// states are kept, node voltages and source currents are solved for, and the
    /// derivative terms follow from the circuit equations.
    pub fn initialize(circuit: &CircuitGraph, t0: f64, x0: &[f64], cfg: &NewtonConfig) -> Result<Self> {
        reject_phasor_only(circuit)?;
        let ctx = Context::Initial { time: t0, held: x0 };
        let mut provider = |x: &[f64]| build_system(circuit, x, &ctx);
        let (state, report) = newton_solve(&mut provider, x0, cfg)?;
        if !report.converged {
            return Err(Error::NoConvergence { report, time: Some(t0) });
        }
        let elements = (0..circuit.elements().len())
            .map(|i| initial_history(circuit, ElementId(i), &state, t0))
            .collect();
        Ok(Self {
            time: t0,
            state,
            elements,
        })
    }

    fn advance(&self, circuit: &CircuitGraph, time: f64, dt: f64, state: Vec<f64>) -> Self {
        let layout = circuit.transient_layout();
        let elements = circuit
            .elements()
            .iter()
            .zip(&self.elements)
            .enumerate()
            .map(|(i, (e, h))| match (&e.kind, h) {
                (ElementKind::Inductors { inductance, .. }, ElementHistory::Coils(hist)) => {
                    let current = coil_currents(circuit, e.branch, hist.current.len(), &state);
                    let voltage = coil_voltages(inductance, dt, hist, &current);
                    ElementHistory::Coils(CoilHistory { current, voltage })
                }
                (ElementKind::InductionMotor { params, .. }, ElementHistory::Motor(hist)) => {
                    let base = layout.internal(ElementId(i)).expect("motor internal unknowns");
                    let s: [f64; MOTOR_STATES] = core::array::from_fn(|k| state[base + k]);
                    ElementHistory::Motor(hist.advance(params, dt, s))
                }
                _ => ElementHistory::None,
            })
            .collect();
        Self { time, state, elements }
    }
}

fn reject_phasor_only(circuit: &CircuitGraph) -> Result<()> {
    match circuit.phasor_only_elements().next() {
        Some(e) => Err(Error::SteadyStateOnly {
            element: e.name.clone(),
        }),
        None => Ok(()),
    }
}

fn coil_currents(circuit: &CircuitGraph, base: Option<BranchRef>, n: usize, state: &[f64]) -> Vec<f64> {
    let sub = circuit.transient_layout().real();
    let base = base.expect("inductor branches assigned at build").0;
    (0..n).map(|k| state[sub.branch(BranchRef(base + k))]).collect()
}

fn initial_history(circuit: &CircuitGraph, id: ElementId, state: &[f64], t0: f64) -> ElementHistory {
    let e = circuit.element(id);
    let sub = circuit.transient_layout().real();
    match &e.kind {
        ElementKind::Inductors { coils, .. } => {
            let current = coil_currents(circuit, e.branch, coils.len(), state);
            let v = |n| sub.node(n).map_or(0.0, |i| state[i]);
            let voltage = coils.iter().map(|c| v(c.p) - v(c.n)).collect();
            ElementHistory::Coils(CoilHistory { current, voltage })
        }
        ElementKind::InductionMotor { .. } => {
            ElementHistory::Motor(motor_history_at(circuit, id, state, t0).expect("motor element"))
        }
        _ => ElementHistory::None,
    }
}

/// Uniform time grid; point `k` is `t_start + k * dt`, never an accumulated sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        let grid = Self { t_start, t_end, dt };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams {
                reason: alloc::format!("time step must be positive, got {}", self.dt),
            });
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return Err(Error::InvalidParams {
                reason: alloc::format!("end time {} must follow start time {}", self.t_end, self.t_start),
            });
        }
        if self.steps() == 0 {
            return Err(Error::InvalidParams {
                reason: "time window shorter than one step".to_string(),
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        libm::round((self.t_end - self.t_start) / self.dt) as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }
}

/// One trapezoidal step of `dt` from `hist`.
pub fn step(circuit: &CircuitGraph, hist: &HistoryState, dt: f64, cfg: &NewtonConfig) -> Result<(HistoryState, SolveReport)> {
    step_to(circuit, hist, hist.time + dt, cfg)
}

/// One trapezoidal step from `hist` to `time`.
///
/// An unconverged step is an error unless the configuration allows a single
/// iteration, in which case the one-shot linearized answer is accepted.
pub fn step_to(
    circuit: &CircuitGraph,
    hist: &HistoryState,
    time: f64,
    cfg: &NewtonConfig,
) -> Result<(HistoryState, SolveReport)> {
    let dt = time - hist.time;
    if !(dt > 0.0) {
        return Err(Error::InvalidParams {
            reason: alloc::format!("step to {time} does not advance from {}", hist.time),
        });
    }
    let ctx = Context::Transient {
        time,
        dt,
        history: hist,
    };
    let mut provider = |x: &[f64]| build_system(circuit, x, &ctx);
    let (x, report) = match newton_solve(&mut provider, &hist.state, cfg) {
        Ok(r) => r,
        Err(Error::NoConvergence { report, .. }) => return Err(Error::NoConvergence { report, time: Some(time) }),
        Err(e) => return Err(e),
    };
    if !report.converged && cfg.max_iterations > 1 {
        return Err(Error::NoConvergence {
            report,
            time: Some(time),
        });
    }
    Ok((hist.advance(circuit, time, dt, x), report))
}

/// Sampled signals, one column per name, aligned with `time`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WaveformSet {
    pub time: Vec<f64>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl WaveformSet {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&self.columns[i])
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Index of the sample nearest `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        (0..self.time.len()).min_by(|&a, &b| (self.time[a] - t).abs().total_cmp(&(self.time[b] - t).abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientRun {
    pub waveforms: WaveformSet,
    pub last: HistoryState,
    /// Newton iterations summed over all steps.
    pub iterations: usize,
    /// Steps accepted without meeting the tolerance (single-iteration mode only).
    pub unconverged_steps: usize,
    /// Largest residual norm left at an accepted step.
    pub max_residual_norm: f64,
}

/// Signal names recorded by [`run_transient`]: every unknown, then each motor's torque.
pub fn signal_names(circuit: &CircuitGraph) -> Vec<String> {
    let mut names = circuit.unknown_names();
    for e in circuit.elements() {
        if matches!(e.kind, ElementKind::InductionMotor { .. }) {
            names.push(alloc::format!("{}.te", e.name));
        }
    }
    names
}

fn record(circuit: &CircuitGraph, set: &mut WaveformSet, time: f64, x: &[f64]) {
    set.time.push(time);
    for (col, v) in set.columns.iter_mut().zip(x) {
        col.push(*v);
    }
    let layout = circuit.transient_layout();
    let mut col = x.len();
    for (i, e) in circuit.elements().iter().enumerate() {
        if let ElementKind::InductionMotor { params, .. } = &e.kind {
            let at = layout.internal(ElementId(i)).expect("motor internal unknowns");
            let te = electrical_torque(x[at + 1], x[at + 2], x[at + 3], x[at + 4], params);
            set.columns[col].push(te);
            col += 1;
        }
    }
}

/// Integrates over `grid`, starting from `initial` (zero state when `None`).
pub fn run_transient(
    circuit: &CircuitGraph,
    grid: &TimeGrid,
    cfg: &NewtonConfig,
    initial: Option<&[f64]>,
) -> Result<TransientRun> {
    grid.validate()?;
    cfg.validate()?;
    reject_phasor_only(circuit)?;
    let dim = circuit.transient_layout().dimension;
    let zero = vec![0.0; dim];
    let x0 = initial.unwrap_or(&zero);
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: x0.len(),
        });
    }
    let names = signal_names(circuit);
    let mut set = WaveformSet {
        time: Vec::with_capacity(grid.steps() + 1),
        columns: vec![Vec::with_capacity(grid.steps() + 1); names.len()],
        names,
    };
    let mut hist = HistoryState::initialize(circuit, grid.t_start, x0, &NewtonConfig::default())?;
    record(circuit, &mut set, hist.time, &hist.state);
    let (mut iterations, mut unconverged_steps, mut max_residual_norm) = (0, 0, 0.0f64);
    for k in 1..=grid.steps() {
        let (next, report) = step_to(circuit, &hist, grid.time(k), cfg)?;
        iterations += report.iterations_used;
        unconverged_steps += usize::from(!report.converged);
        max_residual_norm = max_residual_norm.max(report.final_residual_norm);
        record(circuit, &mut set, next.time, &next.state);
        hist = next;
    }
    Ok(TransientRun {
        waveforms: set,
        last: hist,
        iterations,
        unconverged_steps,
        max_residual_norm,
    })
}
