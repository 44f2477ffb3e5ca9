use alloc::string::String;

use super::SplitPhasor;
use crate::circuit::{NodeRef, Stamp};
use crate::error::{Error, Result};

/// `|V|^2` at or below this is treated as a collapsed bus.
pub const COLLAPSE_EPSILON: f64 = 1e-12;

/// Constant-power load drawing `P + jQ` from a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PqLoadSpec {
    pub node: NodeRef,
    pub p: f64,
    pub q: f64,
}

/// Generator injecting real power `p_g` while holding `|V| = v_set`; its reactive output is an unknown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvGenSpec {
    pub node: NodeRef,
    pub p_g: f64,
    pub v_set: f64,
}

fn check_voltage(v: SplitPhasor) -> Result<f64> {
    let m = v.magnitude_sq();
    if m <= COLLAPSE_EPSILON || !m.is_finite() {
        return Err(Error::VoltageCollapse {
            element: String::new(),
            magnitude_sq: m,
        });
    }
    Ok(m)
}

/// Current with complex power `p + jq` at voltage `v`: `I = conj((p + jq) / V)`.
pub fn pq_injection(p: f64, q: f64, v: SplitPhasor) -> Result<SplitPhasor> {
    let m = check_voltage(v)?;
    Ok(SplitPhasor::new((p * v.re + q * v.im) / m, (p * v.im - q * v.re) / m))
}

/// `[[dIr/dVr, dIr/dVi], [dIi/dVr, dIi/dVi]]` of [`pq_injection`].
pub fn pq_partials(p: f64, q: f64, v: SplitPhasor) -> Result<[[f64; 2]; 2]> {
    let i = pq_injection(p, q, v)?;
    let m = v.magnitude_sq();
    Ok([
        [p / m - 2.0 * v.re * i.re / m, q / m - 2.0 * v.im * i.re / m],
        [-q / m - 2.0 * v.re * i.im / m, p / m - 2.0 * v.im * i.im / m],
    ])
}

/// Linearized load current at `v`; `rows` are the real and imaginary KCL rows of the node.
pub fn stamp_pq_load(spec: &PqLoadSpec, v: SplitPhasor, rows: [Option<usize>; 2]) -> Result<Stamp> {
    let i = pq_injection(spec.p, spec.q, v)?;
    let jac = pq_partials(spec.p, spec.q, v)?;
    let mut s = Stamp::new();
    let x = [v.re, v.im];
    for (r, (row, i_k)) in rows.iter().zip([i.re, i.im]).enumerate() {
        for c in 0..2 {
            s.add(*row, rows[c], jac[r][c]);
        }
        s.add_rhs(*row, jac[r][0] * x[0] + jac[r][1] * x[1] - i_k);
    }
    Ok(s)
}

/// Linearized PV generator at `(v, q)`; `rows` are the node's real and imaginary
/// KCL rows and the generator's own reactive-power unknown (its voltage constraint row).
pub fn stamp_pv_generator(spec: &PvGenSpec, v: SplitPhasor, q: f64, rows: [Option<usize>; 3]) -> Result<Stamp> {
    let i = pq_injection(spec.p_g, q, v)?;
    let jac = pq_partials(spec.p_g, q, v)?;
    let m = v.magnitude_sq();
    let d_dq = [v.im / m, -v.re / m];
    let mut s = Stamp::new();
    let x = [v.re, v.im];
    for (r, i_k) in [i.re, i.im].into_iter().enumerate() {
        let row = rows[r];
        for c in 0..2 {
            s.add(row, rows[c], -jac[r][c]);
        }
        s.add(row, rows[2], -d_dq[r]);
        s.add_rhs(row, -(jac[r][0] * x[0] + jac[r][1] * x[1] + d_dq[r] * q - i_k));
    }
    // |V|^2 = v_set^2
    s.add(rows[2], rows[0], 2.0 * v.re);
    s.add(rows[2], rows[1], 2.0 * v.im);
    s.add_rhs(rows[2], m + spec.v_set * spec.v_set);
    Ok(s)
}
