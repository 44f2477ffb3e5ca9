use alloc::string::ToString;
use alloc::vec::Vec;

use super::{BranchRef, NodeRef};
use crate::error::{Error, Result};
use crate::numeric::LinearSystem;

/// Additive contributions of one element to the system matrix and right-hand side.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stamp {
    pub matrix: Vec<(usize, usize, f64)>,
    pub rhs: Vec<(usize, f64)>,
}

impl Stamp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a matrix entry; either index being `None` (ground) drops it.
    pub fn add(&mut self, row: Option<usize>, col: Option<usize>, value: f64) {
        if let (Some(r), Some(c)) = (row, col) {
            if value != 0.0 {
                self.matrix.push((r, c, value));
            }
        }
    }

    pub fn add_rhs(&mut self, row: Option<usize>, value: f64) {
        if let Some(r) = row {
            if value != 0.0 {
                self.rhs.push((r, value));
            }
        }
    }

    pub fn extend(&mut self, other: Stamp) {
        self.matrix.extend(other.matrix);
        self.rhs.extend(other.rhs);
    }

    pub fn apply(&self, system: &mut LinearSystem) {
        for &(r, c, v) in &self.matrix {
            system.add(r, c, v);
        }
        for &(r, v) in &self.rhs {
            system.add_rhs(r, v);
        }
    }
}

/// Index map for one real sub-circuit: where its node voltages and branch
/// currents live in the unknown vector. The transient analysis has one; the
/// phasor analysis has a real and an imaginary one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubCircuit {
    pub node_base: usize,
    pub branch_base: usize,
}

impl SubCircuit {
    pub fn node(&self, n: NodeRef) -> Option<usize> {
        (n.0 != 0).then(|| self.node_base + n.0 - 1)
    }

    pub fn branch(&self, b: BranchRef) -> usize {
        self.branch_base + b.0
    }
}

/// Branch current flowing from `p` through the element to `n` enters both KCL rows.
pub fn stamp_branch_incidence(stamp: &mut Stamp, sub: &SubCircuit, p: NodeRef, n: NodeRef, branch: BranchRef) {
    let col = Some(sub.branch(branch));
    stamp.add(sub.node(p), col, 1.0);
    stamp.add(sub.node(n), col, -1.0);
}

pub fn stamp_resistor(sub: &SubCircuit, a: NodeRef, b: NodeRef, conductance: f64) -> Result<Stamp> {
    if !(conductance > 0.0 && conductance.is_finite()) {
        return Err(Error::NonPositiveConductance { value: conductance });
    }
    let (ra, rb) = (sub.node(a), sub.node(b));
    let mut s = Stamp::new();
    s.add(ra, ra, conductance);
    s.add(ra, rb, -conductance);
    s.add(rb, ra, -conductance);
    s.add(rb, rb, conductance);
    Ok(s)
}

/// Independent voltage source `V(p) - V(n) = value` with its current as an unknown.
pub fn stamp_voltage_source(
    sub: &SubCircuit,
    p: NodeRef,
    n: NodeRef,
    branch: Option<BranchRef>,
    value: f64,
) -> Result<Stamp> {
    let branch = branch.ok_or_else(|| Error::MissingBranch {
        element: "voltage source".to_string(),
    })?;
    let mut s = Stamp::new();
    stamp_branch_incidence(&mut s, sub, p, n, branch);
    let row = Some(sub.branch(branch));
    s.add(row, sub.node(p), 1.0);
    s.add(row, sub.node(n), -1.0);
    s.add_rhs(row, value);
    Ok(s)
}

/// Ideal switch: closed pins the branch voltage to zero, open pins the branch current to zero.
pub fn stamp_ideal_switch(
    sub: &SubCircuit,
    p: NodeRef,
    n: NodeRef,
    branch: Option<BranchRef>,
    closed: bool,
) -> Result<Stamp> {
    let branch = branch.ok_or_else(|| Error::MissingBranch {
        element: "switch".to_string(),
    })?;
    let mut s = Stamp::new();
    stamp_branch_incidence(&mut s, sub, p, n, branch);
    let row = Some(sub.branch(branch));
    if closed {
        s.add(row, sub.node(p), 1.0);
        s.add(row, sub.node(n), -1.0);
    } else {
        s.add(row, row, 1.0);
    }
    Ok(s)
}

/// Current `value` flowing from `p` through the source to `n`.
pub fn stamp_current_source(sub: &SubCircuit, p: NodeRef, n: NodeRef, value: f64) -> Stamp {
    let mut s = Stamp::new();
    s.add_rhs(sub.node(p), -value);
    s.add_rhs(sub.node(n), value);
    s
}

/// Current `gain * (V(cp) - V(cn))` flowing from `p` through the element to `n`.
pub fn stamp_vccs(sub: &SubCircuit, p: NodeRef, n: NodeRef, cp: NodeRef, cn: NodeRef, gain: f64) -> Stamp {
    let mut s = Stamp::new();
    for (row, sign) in [(sub.node(p), 1.0), (sub.node(n), -1.0)] {
        s.add(row, sub.node(cp), sign * gain);
        s.add(row, sub.node(cn), -sign * gain);
    }
    s
}

/// `V(p) - V(n) = gain * I(control)`, with its own branch current.
pub fn stamp_ccvs(
    sub: &SubCircuit,
    p: NodeRef,
    n: NodeRef,
    branch: BranchRef,
    control: BranchRef,
    gain: f64,
) -> Stamp {
    let mut s = Stamp::new();
    stamp_branch_incidence(&mut s, sub, p, n, branch);
    let row = Some(sub.branch(branch));
    s.add(row, sub.node(p), 1.0);
    s.add(row, sub.node(n), -1.0);
    s.add(row, Some(sub.branch(control)), -gain);
    s
}
