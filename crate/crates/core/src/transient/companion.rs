use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Trapezoidal companion of one coil in a coupled block.
///
/// At the new time point the coil obeys
/// `v_i = -v_hist + r_eq * I_i + sum_{j != i} transresistance[j] * I_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionStamp {
    /// `2 L_ii / dt`
    pub r_eq: f64,
    /// `2 L_ij / dt` for every coil `j` of the block (entry `i` equals `r_eq`).
    pub transresistance: Vec<f64>,
    /// History voltage built from the previous currents and coil voltages.
    pub v_hist: f64,
}

/// Previous-point currents and total coil voltages (`sum_j L_ij dI_j/dt`) of a coil block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoilHistory {
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
}

/// Checks that `l` is an n-by-n symmetric positive semidefinite matrix with a positive diagonal.
pub fn validate_inductance(l: &[f64], n: usize) -> Result<()> {
    if n == 0 || l.len() != n * n {
        return Err(Error::InvalidInductance {
            reason: "matrix is not square",
        });
    }
    for i in 0..n {
        let lii = l[i * n + i];
        if !(lii > 0.0 && lii.is_finite()) {
            return Err(Error::InvalidInductance {
                reason: "self inductance must be positive",
            });
        }
        for j in 0..i {
            let (a, b) = (l[i * n + j], l[j * n + i]);
            if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(lii) {
                return Err(Error::InvalidInductance {
                    reason: "matrix is not symmetric",
                });
            }
        }
    }
    // Cholesky with a tolerance on the pivots; a coupling of exactly 1 gives zero pivots.
    let scale = (0..n).fold(0.0f64, |m, i| m.max(l[i * n + i]));
    let mut c = alloc::vec![0.0; n * n];
    for j in 0..n {
        let mut d = l[j * n + j];
        for k in 0..j {
            d -= c[j * n + k] * c[j * n + k];
        }
        if d < -1e-12 * scale {
            return Err(Error::InvalidInductance {
                reason: "matrix is not positive semidefinite",
            });
        }
        let d = libm::sqrt(d.max(0.0));
        c[j * n + j] = d;
        for i in j + 1..n {
            let mut s = l[i * n + j];
            for k in 0..j {
                s -= c[i * n + k] * c[j * n + k];
            }
            c[i * n + j] = if d > 0.0 { s / d } else { 0.0 };
        }
    }
    Ok(())
}

/// Builds the per-coil trapezoidal companions of a coupled coil block.
///
/// `l` is row-major n-by-n. The history voltage of coil `i` is
/// `sum_j V_ij^L(t) + sum_j (2 L_ij / dt) I_j(t)`; since only the sum of the
/// per-coupling voltages enters, the history carries the total coil voltage.
pub fn companion_coupled_coils(l: &[f64], dt: f64, hist: &CoilHistory) -> Result<Vec<CompanionStamp>> {
    let n = hist.current.len();
    validate_inductance(l, n)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParams {
            reason: "time step must be positive".into(),
        });
    }
    if hist.voltage.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: hist.voltage.len(),
        });
    }
    Ok((0..n)
        .map(|i| {
            let transresistance: Vec<f64> = (0..n).map(|j| 2.0 * l[i * n + j] / dt).collect();
            let v_hist = hist.voltage[i]
                + transresistance
                    .iter()
                    .zip(&hist.current)
                    .map(|(r, c)| r * c)
                    .sum::<f64>();
            CompanionStamp {
                r_eq: transresistance[i],
                transresistance,
                v_hist,
            }
        })
        .collect())
}

/// Coil voltages at the new point recovered from the solved currents:
/// `v_i(t+dt) = -v_i(t) + sum_j (2 L_ij / dt) (I_j(t+dt) - I_j(t))`.
pub fn coil_voltages(l: &[f64], dt: f64, hist: &CoilHistory, new_current: &[f64]) -> Vec<f64> {
    let n = new_current.len();
    (0..n)
        .map(|i| {
            -hist.voltage[i]
                + (0..n)
                    .map(|j| 2.0 * l[i * n + j] / dt * (new_current[j] - hist.current[j]))
                    .sum::<f64>()
        })
        .collect()
}

/// First-order expansion of a bilinear product about `(x_k, y_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedProduct {
    pub a_x: f64,
    pub a_y: f64,
    pub c: f64,
}

impl LinearizedProduct {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.a_x * x + self.a_y * y + self.c
    }
}

/// `x * y ~= y_k x + x_k y - x_k y_k`, exact at the expansion point.
pub fn taylor_linearize_product(x_k: f64, y_k: f64) -> LinearizedProduct {
    LinearizedProduct {
        a_x: y_k,
        a_y: x_k,
        c: -x_k * y_k,
    }
}
