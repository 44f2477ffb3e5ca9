//! Power-system circuit engine with one set of element models behind two analyses:
//! a phasor steady state on split real/imaginary circuits and a trapezoidal
//! transient with a Newton-Raphson solve per step.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod circuit;
pub mod error;
pub mod machine;
pub mod numeric;
pub mod steady;
pub mod transient;

pub use circuit::{CircuitBuilder, CircuitGraph, ElementId, ElementKind, NodeRef, Waveform};
pub use error::{Error, Result};
pub use machine::{MotorParams, SpeedMode};
pub use numeric::{NewtonConfig, SolveReport};
pub use steady::{solve_power_flow, SplitPhasor, SteadyStateSolution};
pub use transient::{run_transient, TimeGrid, TransientRun, WaveformSet};
