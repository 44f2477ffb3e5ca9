//! Text reports: the steady-state listing and the steady-vs-transient comparison.

use std::fmt;
use std::io::{self, Write};

use unisim_core::circuit::{ElementKind, NodeRef};
use unisim_core::SteadyStateSolution;

use crate::netlist::Netlist;

/// Relative difference at which the two analyses count as agreeing.
pub const AGREEMENT_TOLERANCE: f64 = 1e-3;

pub const QUANTITIES: [(&str, &str); 6] = [
    ("wr", "rad/s"),
    ("te", "N*m"),
    ("ids", "A"),
    ("iqs", "A"),
    ("idr", "A"),
    ("iqr", "A"),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub quantity: &'static str,
    pub unit: &'static str,
    pub steady: f64,
    pub transient: f64,
    pub abs_diff: f64,
    /// Relative to the steady-state value.
    pub rel_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotorComparison {
    pub motor: String,
    pub rows: [ComparisonRow; 6],
}

impl MotorComparison {
    /// Both arrays in the order of [`QUANTITIES`].
    pub fn new(motor: String, steady: [f64; 6], transient: [f64; 6]) -> Self {
        let rows = std::array::from_fn(|k| {
            let abs_diff = (transient[k] - steady[k]).abs();
            ComparisonRow {
                quantity: QUANTITIES[k].0,
                unit: QUANTITIES[k].1,
                steady: steady[k],
                transient: transient[k],
                abs_diff,
                rel_diff: if steady[k] == 0.0 { abs_diff } else { abs_diff / steady[k].abs() },
            }
        });
        Self { motor, rows }
    }

    pub fn row(&self, quantity: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub t_end: f64,
    pub motors: Vec<MotorComparison>,
}

impl ComparisonReport {
    pub fn max_rel_diff(&self) -> f64 {
        self.motors
            .iter()
            .flat_map(|m| m.rows.iter())
            .map(|r| r.rel_diff)
            .fold(0.0, f64::max)
    }

    pub fn agrees(&self) -> bool {
        self.max_rel_diff() <= AGREEMENT_TOLERANCE
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.motors {
            writeln!(f, "motor {}: steady state vs transient at t = {} s", m.motor, self.t_end)?;
            writeln!(
                f,
                "{:<14}{:>16}{:>16}{:>14}{:>14}",
                "quantity", "steady", "transient", "abs diff", "rel diff"
            )?;
            for r in &m.rows {
                writeln!(
                    f,
                    "{:<14}{:>16.6}{:>16.6}{:>14.3e}{:>14.3e}",
                    format!("{} [{}]", r.quantity, r.unit),
                    r.steady,
                    r.transient,
                    r.abs_diff,
                    r.rel_diff
                )?;
            }
        }
        write!(
            f,
            "max relative difference {:.3e} (limit {:.0e}): {}",
            self.max_rel_diff(),
            AGREEMENT_TOLERANCE,
            if self.agrees() { "agree" } else { "DISAGREE" }
        )
    }
}

/// Phasor listing of a steady-state solution. Phasors are peak values.
pub fn write_steady_report<W: Write>(netlist: &Netlist, sol: &SteadyStateSolution, mut out: W) -> io::Result<()> {
    let g = &netlist.circuit;
    if let Some(title) = &netlist.title {
        writeln!(out, "{title}")?;
    }
    let r = &sol.report;
    writeln!(
        out,
        "steady state converged in {} iteration(s) (update {:.3e}, residual {:.3e})",
        r.iterations_used, r.final_update_norm, r.final_residual_norm
    )?;
    writeln!(out)?;
    writeln!(out, "{:<16}{:>16}{:>16}{:>16}{:>12}", "node", "re", "im", "magnitude", "angle[deg]")?;
    for n in 1..g.node_count() {
        let v = sol.node_voltages[n];
        writeln!(
            out,
            "{:<16}{:>16.6}{:>16.6}{:>16.6}{:>12.4}",
            g.node_name(NodeRef(n)),
            v.re,
            v.im,
            v.magnitude(),
            v.angle().to_degrees()
        )?;
    }
    if g.branch_count() > 0 {
        writeln!(out)?;
        writeln!(out, "{:<16}{:>16}{:>16}{:>16}{:>12}", "branch", "re", "im", "magnitude", "angle[deg]")?;
        let names = g.unknown_names();
        let first_branch = g.node_count() - 1;
        for (b, i) in sol.branch_currents.iter().enumerate() {
            writeln!(
                out,
                "{:<16}{:>16.6}{:>16.6}{:>16.6}{:>12.4}",
                names[first_branch + b],
                i.re,
                i.im,
                i.magnitude(),
                i.angle().to_degrees()
            )?;
        }
    }
    for (id, q) in &sol.generator_q {
        writeln!(out)?;
        writeln!(out, "generator {}: q = {:.6}", g.element(*id).name, q)?;
    }
    for m in &sol.motors {
        let e = g.element(m.element);
        writeln!(out)?;
        writeln!(out, "motor {}", e.name)?;
        if let ElementKind::InductionMotor { params, .. } = &e.kind {
            let slip = 1.0 - m.wr / params.synchronous_speed();
            writeln!(out, "  {:<12}{:>16.6}", "slip", slip)?;
        }
        for (k, v) in [m.wr, m.te, m.ids, m.iqs, m.idr, m.iqr].into_iter().enumerate() {
            let (q, unit) = QUANTITIES[k];
            writeln!(out, "  {:<12}{:>16.6}", format!("{q} [{unit}]"), v)?;
        }
    }
    Ok(())
}
