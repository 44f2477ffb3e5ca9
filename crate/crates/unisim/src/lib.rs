//! Netlist files, waveform CSV and reports around `unisim-core`.

pub mod analysis;
pub mod netlist;
pub mod report;
pub mod waveform_io;

pub use unisim_core as core;

pub use analysis::{load_netlist, run_compare, run_startup, run_steady, RunError};
pub use netlist::{parse_netlist, AnalysisKind, Netlist, NetlistError, Settings};
pub use report::{ComparisonReport, AGREEMENT_TOLERANCE};
pub use waveform_io::{read_waveforms, write_waveforms};
