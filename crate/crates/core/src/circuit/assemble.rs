use alloc::vec::Vec;

use super::stamp::*;
use super::{CircuitGraph, ElementId, ElementKind, Layout};
use crate::error::{Error, Result};
use crate::machine::{motor_stamps, MotorContext, MotorHistory};
use crate::numeric::LinearSystem;
use crate::steady::{stamp_pq_load, stamp_pv_generator, SplitPhasor};
use crate::transient::{companion_coupled_coils, ElementHistory, HistoryState};

/// What the assembled system represents.
#[derive(Debug, Clone, Copy)]
pub enum Context<'a> {
    /// Split real/imaginary phasor system at the circuit frequency.
    Steady,
    /// Trapezoidal system for the time point `time`, one step of `dt` after `history`.
    Transient {
        time: f64,
        dt: f64,
        history: &'a HistoryState,
    },
    /// Time-domain system at `time` with inductor currents and machine states held at
    /// their values in `held`; used to make an initial state algebraically consistent.
    Initial { time: f64, held: &'a [f64] },
}

impl Context<'_> {
    fn is_phasor(&self) -> bool {
        matches!(self, Context::Steady)
    }
}

/// Sums every element stamp, linearized at `state`, into one system.
pub fn build_system(circuit: &CircuitGraph, state: &[f64], ctx: &Context<'_>) -> Result<LinearSystem> {
    let layout = circuit.layout(ctx.is_phasor());
    if state.len() != layout.dimension {
        return Err(Error::DimensionMismatch {
            expected: layout.dimension,
            found: state.len(),
        });
    }
    let mut system = LinearSystem::new(layout.dimension);
    for (i, element) in circuit.elements().iter().enumerate() {
        let stamp = match ctx {
            Context::Steady => steady_stamp(circuit, layout, ElementId(i), state)?,
            _ => time_domain_stamp(circuit, layout, ElementId(i), state, ctx)?,
        };
        debug_assert!(
            stamp.matrix.iter().all(|&(r, c, _)| r < layout.dimension && c < layout.dimension),
            "{} stamped outside the layout",
            element.name
        );
        stamp.apply(&mut system);
    }
    Ok(system)
}

fn phasor_at(layout: &Layout, state: &[f64], node: super::NodeRef) -> SplitPhasor {
    match (layout.real().node(node), layout.imag().node(node)) {
        (Some(r), Some(i)) => SplitPhasor::new(state[r], state[i]),
        _ => SplitPhasor::default(),
    }
}

fn steady_stamp(circuit: &CircuitGraph, layout: &Layout, id: ElementId, state: &[f64]) -> Result<Stamp> {
    let element = circuit.element(id);
    let (re, im) = (layout.real(), layout.imag());
    let omega = circuit.omega();
    let mut s = Stamp::new();
    match &element.kind {
        ElementKind::Resistor { a, b, resistance } => {
            s.extend(stamp_resistor(&re, *a, *b, 1.0 / resistance)?);
            s.extend(stamp_resistor(&im, *a, *b, 1.0 / resistance)?);
        }
        ElementKind::Inductors { coils, inductance } => {
            // V_p - V_n = j omega L I, split into the two sub-circuits
            let n = coils.len();
            let base = element.branch.expect("inductor branches assigned at build").0;
            for (i, coil) in coils.iter().enumerate() {
                let br = super::BranchRef(base + i);
                stamp_branch_incidence(&mut s, &re, coil.p, coil.n, br);
                stamp_branch_incidence(&mut s, &im, coil.p, coil.n, br);
                let (row_re, row_im) = (Some(re.branch(br)), Some(im.branch(br)));
                s.add(row_re, re.node(coil.p), 1.0);
                s.add(row_re, re.node(coil.n), -1.0);
                s.add(row_im, im.node(coil.p), 1.0);
                s.add(row_im, im.node(coil.n), -1.0);
                for j in 0..n {
                    let x = omega * inductance[i * n + j];
                    let bj = super::BranchRef(base + j);
                    s.add(row_re, Some(im.branch(bj)), x);
                    s.add(row_im, Some(re.branch(bj)), -x);
                }
            }
        }
        ElementKind::VoltageSource { p, n, source } => {
            let v = source.phasor(omega);
            s.extend(stamp_voltage_source(&re, *p, *n, element.branch, v.re)?);
            s.extend(stamp_voltage_source(&im, *p, *n, element.branch, v.im)?);
        }
        ElementKind::CurrentSource { p, n, source } => {
            let i = source.phasor(omega);
            s.extend(stamp_current_source(&re, *p, *n, i.re));
            s.extend(stamp_current_source(&im, *p, *n, i.im));
        }
        ElementKind::Vccs { p, n, cp, cn, gain } => {
            s.extend(stamp_vccs(&re, *p, *n, *cp, *cn, *gain));
            s.extend(stamp_vccs(&im, *p, *n, *cp, *cn, *gain));
        }
        ElementKind::Ccvs { p, n, control, gain } => {
            let br = element.branch.expect("ccvs branch assigned at build");
            let ctrl = circuit.control_branch(*control).expect("control validated at build");
            s.extend(stamp_ccvs(&re, *p, *n, br, ctrl, *gain));
            s.extend(stamp_ccvs(&im, *p, *n, br, ctrl, *gain));
        }
        ElementKind::Switch { p, n, .. } => {
            let closed = element.switch_closed_at(0.0).unwrap_or(false);
            s.extend(stamp_ideal_switch(&re, *p, *n, element.branch, closed)?);
            s.extend(stamp_ideal_switch(&im, *p, *n, element.branch, closed)?);
        }
        ElementKind::PqLoad(spec) => {
            let v = phasor_at(layout, state, spec.node);
            s.extend(
                stamp_pq_load(spec, v, [re.node(spec.node), im.node(spec.node)])
                    .map_err(|e| name_collapse(e, &element.name))?,
            );
        }
        ElementKind::PvGenerator(spec) => {
            let v = phasor_at(layout, state, spec.node);
            let q_at = layout.internal(id).expect("pv internal unknown");
            s.extend(
                stamp_pv_generator(spec, v, state[q_at], [re.node(spec.node), im.node(spec.node), Some(q_at)])
                    .map_err(|e| name_collapse(e, &element.name))?,
            );
        }
        ElementKind::InductionMotor {
            terminals,
            params,
            speed,
        } => {
            let at = layout.internal(id).expect("motor internal unknowns");
            let mut map: Vec<Option<usize>> = terminals.iter().map(|t| re.node(*t)).collect();
            map.extend(terminals.iter().map(|t| im.node(*t)));
            map.extend((at..at + element.kind.internal_count(true)).map(Some));
            let local: Vec<f64> = map.iter().map(|m| m.map_or(0.0, |i| state[i])).collect();
            s.extend(motor_stamps(params, *speed, &MotorContext::Steady { omega }, &local, &map)?);
        }
    }
    Ok(s)
}

fn name_collapse(e: Error, name: &str) -> Error {
    match e {
        Error::VoltageCollapse { magnitude_sq, .. } => Error::VoltageCollapse {
            element: name.into(),
            magnitude_sq,
        },
        other => other,
    }
}

fn time_domain_stamp(
    circuit: &CircuitGraph,
    layout: &Layout,
    id: ElementId,
    state: &[f64],
    ctx: &Context<'_>,
) -> Result<Stamp> {
    let element = circuit.element(id);
    let sub = layout.real();
    let omega = circuit.omega();
    let time = match ctx {
        Context::Transient { time, .. } | Context::Initial { time, .. } => *time,
        Context::Steady => unreachable!(),
    };
    let mut s = Stamp::new();
    match &element.kind {
        ElementKind::Resistor { a, b, resistance } => {
            s.extend(stamp_resistor(&sub, *a, *b, 1.0 / resistance)?);
        }
        ElementKind::Inductors { coils, inductance } => {
            let base = element.branch.expect("inductor branches assigned at build").0;
            for (i, coil) in coils.iter().enumerate() {
                stamp_branch_incidence(&mut s, &sub, coil.p, coil.n, super::BranchRef(base + i));
            }
            match ctx {
                Context::Transient { dt, history, .. } => {
                    let ElementHistory::Coils(hist) = &history.elements[id.0] else {
                        return Err(Error::InvalidParams {
                            reason: alloc::format!("{}: missing coil history", element.name),
                        });
                    };
                    let companions = companion_coupled_coils(inductance, *dt, hist)?;
                    // v_p - v_n - sum_j r_ij I_j = -v_hist
                    for (i, (coil, comp)) in coils.iter().zip(&companions).enumerate() {
                        let row = Some(sub.branch(super::BranchRef(base + i)));
                        s.add(row, sub.node(coil.p), 1.0);
                        s.add(row, sub.node(coil.n), -1.0);
                        for (j, r) in comp.transresistance.iter().enumerate() {
                            s.add(row, Some(sub.branch(super::BranchRef(base + j))), -r);
                        }
                        s.add_rhs(row, -comp.v_hist);
                    }
                }
                Context::Initial { held, .. } => {
                    for i in 0..coils.len() {
                        let idx = sub.branch(super::BranchRef(base + i));
                        s.add(Some(idx), Some(idx), 1.0);
                        s.add_rhs(Some(idx), held[idx]);
                    }
                }
                Context::Steady => unreachable!(),
            }
        }
        ElementKind::VoltageSource { p, n, source } => {
            s.extend(stamp_voltage_source(&sub, *p, *n, element.branch, source.value_at(omega, time))?);
        }
        ElementKind::CurrentSource { p, n, source } => {
            s.extend(stamp_current_source(&sub, *p, *n, source.value_at(omega, time)));
        }
        ElementKind::Vccs { p, n, cp, cn, gain } => {
            s.extend(stamp_vccs(&sub, *p, *n, *cp, *cn, *gain));
        }
        ElementKind::Ccvs { p, n, control, gain } => {
            let br = element.branch.expect("ccvs branch assigned at build");
            let ctrl = circuit.control_branch(*control).expect("control validated at build");
            s.extend(stamp_ccvs(&sub, *p, *n, br, ctrl, *gain));
        }
        ElementKind::Switch { p, n, .. } => {
            let closed = element.switch_closed_at(time).unwrap_or(false);
            s.extend(stamp_ideal_switch(&sub, *p, *n, element.branch, closed)?);
        }
        ElementKind::PqLoad(_) | ElementKind::PvGenerator(_) => {
            return Err(Error::SteadyStateOnly {
                element: element.name.clone(),
            });
        }
        ElementKind::InductionMotor {
            terminals,
            params,
            speed,
        } => {
            let at = layout.internal(id).expect("motor internal unknowns");
            let mut map: Vec<Option<usize>> = terminals.iter().map(|t| sub.node(*t)).collect();
            map.extend((at..at + element.kind.internal_count(false)).map(Some));
            let local: Vec<f64> = map.iter().map(|m| m.map_or(0.0, |i| state[i])).collect();
            let theta = omega * time;
            let held_state;
            let motor_ctx = match ctx {
                Context::Transient { dt, history, .. } => {
                    let ElementHistory::Motor(hist) = &history.elements[id.0] else {
                        return Err(Error::InvalidParams {
                            reason: alloc::format!("{}: missing machine history", element.name),
                        });
                    };
                    MotorContext::Transient {
                        omega,
                        theta,
                        dt: *dt,
                        history: hist,
                    }
                }
                Context::Initial { held, .. } => {
                    held_state = core::array::from_fn(|k| held[at + k]);
                    MotorContext::Held {
                        theta,
                        state: &held_state,
                    }
                }
                Context::Steady => unreachable!(),
            };
            s.extend(motor_stamps(params, *speed, &motor_ctx, &local, &map)?);
        }
    }
    Ok(s)
}

/// History for a motor consistent with a time-domain state; shared with the transient engine.
pub(crate) fn motor_history_at(circuit: &CircuitGraph, id: ElementId, state: &[f64], time: f64) -> Option<MotorHistory> {
    let element = circuit.element(id);
    let ElementKind::InductionMotor {
        terminals,
        params,
        speed,
    } = &element.kind
    else {
        return None;
    };
    let layout = circuit.transient_layout();
    let at = layout.internal(id)?;
    let v = terminals.map(|t| layout.real().node(t).map_or(0.0, |i| state[i]));
    let internal = core::array::from_fn(|k| state[at + k]);
    Some(MotorHistory::consistent(
        params,
        *speed,
        circuit.omega(),
        circuit.omega() * time,
        internal,
        v,
    ))
}
