//! Linear system assembly, direct solves, and the Newton-Raphson driver shared
//! by the steady-state and transient engines.

mod linear;
mod newton;

pub use linear::{dense_lu_solve, lu_solve, max_norm, CsrMatrix, LinearSystem, PIVOT_THRESHOLD};
pub use newton::{newton_solve, NewtonConfig, SolveReport, StampProvider, DIVERGENCE_LIMIT};
