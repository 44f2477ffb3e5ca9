use alloc::vec::Vec;

use super::linear::{lu_solve, max_norm, LinearSystem};
use crate::error::{Error, Result};

/// Update norms above this are treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Threshold applied to both the update and residual max-norms.
    pub abs_tolerance: f64,
    pub max_iterations: usize,
    /// Step scaling `x <- x + damping * dx`, in (0, 1].
    pub damping_factor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            abs_tolerance: 1e-9,
            max_iterations: 50,
            damping_factor: 1.0,
        }
    }
}

impl NewtonConfig {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.abs_tolerance = tol;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tolerance > 0.0) {
            return Err(Error::InvalidParams {
                reason: "newton tolerance must be positive".into(),
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParams {
                reason: "newton needs at least one iteration".into(),
            });
        }
        if !(self.damping_factor > 0.0 && self.damping_factor <= 1.0) {
            return Err(Error::InvalidParams {
                reason: "damping factor must lie in (0, 1]".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub converged: bool,
    /// Number of Newton updates applied to the iterate.
    pub iterations_used: usize,
    pub final_update_norm: f64,
    pub final_residual_norm: f64,
}

/// Produces the system linearized at an iterate.
///
/// The returned system uses circuit form: at the linearization point `x`,
/// `A` is the Jacobian and `A x - b` is the nonlinear residual.
pub trait StampProvider {
    fn linearize(&mut self, x: &[f64]) -> Result<LinearSystem>;
}

impl<F> StampProvider for F
where
    F: FnMut(&[f64]) -> Result<LinearSystem>,
{
    fn linearize(&mut self, x: &[f64]) -> Result<LinearSystem> {
        self(x)
    }
}

/// Damped Newton-Raphson on a circuit-form stamp provider.
///
/// Each pass linearizes at the current iterate, solves `A dx = -(A x - b)`,
/// and stops once both `|dx|` and the residual are within tolerance. The
/// iterate is returned as-is when the budget runs out; `converged` in the
/// report is then false unless the last update and the residual at the
/// returned point are both small. With `max_iterations == 1` exactly one
/// linear solve is performed.
pub fn newton_solve<P: StampProvider + ?Sized>(
    provider: &mut P,
    x0: &[f64],
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let mut x = x0.to_vec();
    let mut last_update = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let system = provider.linearize(&x)?;
        if system.dimension() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: system.dimension(),
            });
        }
        let residual = system.residual(&x);
        let residual_norm = max_norm(&residual);

        if iterations == cfg.max_iterations {
            let report = SolveReport {
                converged: last_update <= cfg.abs_tolerance && residual_norm <= cfg.abs_tolerance,
                iterations_used: iterations,
                final_update_norm: last_update,
                final_residual_norm: residual_norm,
            };
            return Ok((x, report));
        }

        let mut correction = LinearSystem::new(system.dimension());
        for &(r, c, v) in system.entries() {
            correction.add(r, c, v);
        }
        for (r, f) in residual.iter().enumerate() {
            correction.add_rhs(r, -f);
        }
        let dx = lu_solve(&correction)?;
        let update_norm = max_norm(&dx);

        if update_norm <= cfg.abs_tolerance && residual_norm <= cfg.abs_tolerance {
            let report = SolveReport {
                converged: true,
                iterations_used: iterations,
                final_update_norm: update_norm,
                final_residual_norm: residual_norm,
            };
            return Ok((x, report));
        }
        if !update_norm.is_finite() || update_norm > DIVERGENCE_LIMIT {
            return Err(Error::DivergenceDetected { update_norm });
        }
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += cfg.damping_factor * di;
        }
        last_update = cfg.damping_factor * update_norm;
        iterations += 1;
    }
}
