//! Phasor-domain analysis on split real/imaginary sub-circuits.
//!
//! Conjugate-based power injections are not complex-analytic, so every
//! complex unknown is carried as two real unknowns and Newton-Raphson runs on
//! the resulting real system. Phasors use peak amplitude:
//! `x(t) = Re(X e^{j omega t})`.

use alloc::vec;
use alloc::vec::Vec;

use crate::circuit::{build_system, BranchRef, CircuitBuilder, CircuitGraph, Context, ElementId, ElementKind, NodeRef, Waveform};
use crate::error::{Error, Result};
use crate::machine::{electrical_torque, MotorParams, SpeedMode, PHASE_SHIFT};
use crate::numeric::{lu_solve, newton_solve, LinearSystem, NewtonConfig, SolveReport};

mod injection;

pub use injection::{pq_injection, pq_partials, stamp_pq_load, stamp_pv_generator, PqLoadSpec, PvGenSpec, COLLAPSE_EPSILON};

/// Complex quantity held as two real scalars.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplitPhasor {
    pub re: f64,
    pub im: f64,
}

impl SplitPhasor {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn from_polar(magnitude: f64, angle: f64) -> Self {
        Self::new(magnitude * libm::cos(angle), magnitude * libm::sin(angle))
    }

    pub fn magnitude_sq(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn magnitude(&self) -> f64 {
        libm::sqrt(self.magnitude_sq())
    }

    pub fn angle(&self) -> f64 {
        libm::atan2(self.im, self.re)
    }

    pub fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    /// Instantaneous value `Re(X e^{j omega t})`.
    pub fn instantaneous(&self, omega: f64, t: f64) -> f64 {
        let a = omega * t;
        self.re * libm::cos(a) - self.im * libm::sin(a)
    }
}

/// Balanced three-phase set of peak amplitude `magnitude`, phase a at `phase_a` radians.
pub fn balanced_set(magnitude: f64, phase_a: f64) -> [SplitPhasor; 3] {
    core::array::from_fn(|k| SplitPhasor::from_polar(magnitude, phase_a - k as f64 * PHASE_SHIFT))
}

/// Motor quantities at a phasor-domain solution (dq values are constant in the synchronous frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorOperatingPoint {
    pub element: ElementId,
    pub i0s: SplitPhasor,
    pub ids: f64,
    pub iqs: f64,
    pub idr: f64,
    pub iqr: f64,
    pub wr: f64,
    pub te: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateSolution {
    /// Indexed by node; entry 0 is ground.
    pub node_voltages: Vec<SplitPhasor>,
    pub branch_currents: Vec<SplitPhasor>,
    /// Reactive output solved for each PV generator.
    pub generator_q: Vec<(ElementId, f64)>,
    pub motors: Vec<MotorOperatingPoint>,
    pub report: SolveReport,
    /// Raw phasor-layout unknowns.
    pub unknowns: Vec<f64>,
}

impl SteadyStateSolution {
    fn from_unknowns(circuit: &CircuitGraph, x: Vec<f64>, report: SolveReport) -> Self {
        let layout = circuit.steady_layout();
        let (re, im) = (layout.real(), layout.imag());
        let node_voltages = (0..circuit.node_count())
            .map(|n| match (re.node(NodeRef(n)), im.node(NodeRef(n))) {
                (Some(r), Some(i)) => SplitPhasor::new(x[r], x[i]),
                _ => SplitPhasor::default(),
            })
            .collect();
        let branch_currents = (0..circuit.branch_count())
            .map(|b| {
                let br = BranchRef(b);
                SplitPhasor::new(x[re.branch(br)], x[im.branch(br)])
            })
            .collect();
        let mut generator_q = Vec::new();
        let mut motors = Vec::new();
        for (i, e) in circuit.elements().iter().enumerate() {
            let id = ElementId(i);
            match &e.kind {
                ElementKind::PvGenerator(_) => {
                    generator_q.push((id, x[layout.internal(id).unwrap()]));
                }
                ElementKind::InductionMotor { params, .. } => {
                    let at = layout.internal(id).unwrap();
                    let s = &x[at..at + 7];
                    motors.push(MotorOperatingPoint {
                        element: id,
                        i0s: SplitPhasor::new(s[0], s[1]),
                        ids: s[2],
                        iqs: s[3],
                        idr: s[4],
                        iqr: s[5],
                        wr: s[6],
                        te: electrical_torque(s[2], s[3], s[4], s[5], params),
                    });
                }
                _ => {}
            }
        }
        Self {
            node_voltages,
            branch_currents,
            generator_q,
            motors,
            report,
            unknowns: x,
        }
    }

    /// Time-domain unknown vector this solution describes at time `t`.
    pub fn time_domain_state(&self, circuit: &CircuitGraph, t: f64) -> Vec<f64> {
        let omega = circuit.omega();
        let layout = circuit.transient_layout();
        let sub = layout.real();
        let mut x = vec![0.0; layout.dimension];
        for (n, v) in self.node_voltages.iter().enumerate().skip(1) {
            x[sub.node(NodeRef(n)).unwrap()] = v.instantaneous(omega, t);
        }
        for (b, i) in self.branch_currents.iter().enumerate() {
            x[sub.branch(BranchRef(b))] = i.instantaneous(omega, t);
        }
        for m in &self.motors {
            let at = layout.internal(m.element).unwrap();
            x[at..at + 6].copy_from_slice(&[m.i0s.instantaneous(omega, t), m.ids, m.iqs, m.idr, m.iqr, m.wr]);
        }
        x
    }
}

/// Flat start: every node at the slack magnitude with zero angle, nodes tied to
/// ground by a voltage source at that source's phasor, machines on their
/// equivalent circuit at 5 % slip.
pub fn flat_start(circuit: &CircuitGraph) -> Result<Vec<f64>> {
    let layout = circuit.steady_layout();
    let (re, im) = (layout.real(), layout.imag());
    let omega = circuit.omega();
    let mut x = vec![0.0; layout.dimension];
    let mut slack_magnitude = None;
    let mut pinned: Vec<(NodeRef, SplitPhasor)> = Vec::new();
    for e in circuit.elements() {
        if let ElementKind::VoltageSource { p, n, source } = &e.kind {
            let v = source.phasor(omega);
            let (node, v) = match (p.is_ground(), n.is_ground()) {
                (false, true) => (*p, v),
                (true, false) => (*n, SplitPhasor::new(-v.re, -v.im)),
                _ => continue,
            };
            slack_magnitude.get_or_insert(v.magnitude());
            pinned.push((node, v));
        }
    }
    let flat = slack_magnitude.unwrap_or(0.0);
    for n in 1..circuit.node_count() {
        x[re.node(NodeRef(n)).unwrap()] = flat;
    }
    for (node, v) in pinned {
        x[re.node(node).unwrap()] = v.re;
        x[im.node(node).unwrap()] = v.im;
    }
    for (i, e) in circuit.elements().iter().enumerate() {
        if let ElementKind::InductionMotor {
            terminals,
            params,
            speed,
        } = &e.kind
        {
            let at = layout.internal(ElementId(i)).unwrap();
            let v: [SplitPhasor; 3] = terminals.map(|t| match (re.node(t), im.node(t)) {
                (Some(r), Some(i)) => SplitPhasor::new(x[r], x[i]),
                _ => SplitPhasor::default(),
            });
            let wr = match speed {
                SpeedMode::Free => 0.95 * omega,
                SpeedMode::Pinned(w) => *w,
            };
            let currents = dq_currents_at_speed(params, omega, positive_sequence_dq(&v), wr)?;
            x[at + 2..at + 6].copy_from_slice(&currents);
            x[at + 6] = wr;
        }
    }
    Ok(x)
}

/// Positive-sequence terminal voltage as synchronous-frame `(v_d, v_q)`.
pub fn positive_sequence_dq(v: &[SplitPhasor; 3]) -> (f64, f64) {
    let mut v1 = SplitPhasor::default();
    for (k, vk) in v.iter().enumerate() {
        let a = SplitPhasor::from_polar(1.0 / 3.0, k as f64 * PHASE_SHIFT);
        let t = vk.mul(a);
        v1.re += t.re;
        v1.im += t.im;
    }
    (v1.re, -v1.im)
}

/// With rotor speed fixed the steady electrical equations are linear in the dq currents.
pub fn dq_currents_at_speed(params: &MotorParams, omega: f64, (vd, vq): (f64, f64), wr: f64) -> Result<[f64; 4]> {
    let slip_speed = omega - wr;
    let (ls, lr, lm) = (params.ls(), params.lr(), params.lm);
    // unknowns ids, iqs, idr, iqr
    let rows = [
        ([params.rs, -omega * ls, 0.0, -omega * lm], vd),
        ([omega * ls, params.rs, omega * lm, 0.0], vq),
        ([0.0, -slip_speed * lm, params.rr, -slip_speed * lr], 0.0),
        ([slip_speed * lm, 0.0, slip_speed * lr, params.rr], 0.0),
    ];
    let mut sys = LinearSystem::new(4);
    for (r, (coef, b)) in rows.iter().enumerate() {
        for (c, v) in coef.iter().enumerate() {
            if *v != 0.0 {
                sys.add(r, c, *v);
            }
        }
        sys.add_rhs(r, *b);
    }
    let x = lu_solve(&sys)?;
    Ok([x[0], x[1], x[2], x[3]])
}

/// Phasor-domain Newton solve of a circuit from an explicit starting point.
pub fn solve_steady_state_from(circuit: &CircuitGraph, x0: Vec<f64>, cfg: &NewtonConfig) -> Result<SteadyStateSolution> {
    let mut provider = |x: &[f64]| build_system(circuit, x, &Context::Steady);
    let (x, report) = match newton_solve(&mut provider, &x0, cfg) {
        Ok(r) => r,
        Err(Error::DivergenceDetected { update_norm }) => {
            return Err(Error::NoConvergence {
                report: SolveReport {
                    converged: false,
                    iterations_used: 0,
                    final_update_norm: update_norm,
                    final_residual_norm: f64::NAN,
                },
                time: None,
            })
        }
        Err(e) => return Err(e),
    };
    if !report.converged {
        return Err(Error::NoConvergence { report, time: None });
    }
    let solution = SteadyStateSolution::from_unknowns(circuit, x, report);
    for m in &solution.motors {
        if m.te < -1e-6 {
            return Err(Error::NegativeTorque {
                element: circuit.element(m.element).name.clone(),
                torque: m.te,
            });
        }
    }
    Ok(solution)
}

/// Balanced power flow (and any other phasor-domain circuit) from a flat start.
pub fn solve_power_flow(circuit: &CircuitGraph, cfg: &NewtonConfig) -> Result<SteadyStateSolution> {
    solve_steady_state_from(circuit, flat_start(circuit)?, cfg)
}

/// Motor named `motor` wye-connected to ideal sources `va`, `vb`, `vc` at nodes `a`, `b`, `c`.
pub fn motor_on_ideal_source(
    params: &MotorParams,
    terminal: [SplitPhasor; 3],
    f_source: f64,
    speed: SpeedMode,
) -> Result<CircuitGraph> {
    if !(f_source > 0.0 && f_source.is_finite()) {
        return Err(Error::InvalidParams {
            reason: alloc::format!("source frequency must be positive, got {f_source}"),
        });
    }
    let mut b = CircuitBuilder::new("0").frequency(f_source);
    let nodes = ["a", "b", "c"].map(|n| b.node(n));
    for (k, (node, v)) in nodes.iter().zip(terminal).enumerate() {
        b.add(
            ["va", "vb", "vc"][k],
            ElementKind::VoltageSource {
                p: *node,
                n: NodeRef::GROUND,
                source: Waveform::from_phasor(v),
            },
        );
    }
    b.add(
        "motor",
        ElementKind::InductionMotor {
            terminals: nodes,
            params: params.clone(),
            speed,
        },
    );
    b.build()
}

/// Steady state of a motor on ideal sources, with the speed mode chosen by the caller.
pub fn im_operating_point(
    params: &MotorParams,
    terminal: [SplitPhasor; 3],
    f_source: f64,
    speed: SpeedMode,
    cfg: &NewtonConfig,
) -> Result<SteadyStateSolution> {
    solve_power_flow(&motor_on_ideal_source(params, terminal, f_source, speed)?, cfg)
}

/// Motor steady state with rotor speed solved jointly with the electrical unknowns.
pub fn im_steady_state(
    params: &MotorParams,
    terminal: [SplitPhasor; 3],
    f_source: f64,
    cfg: &NewtonConfig,
) -> Result<SteadyStateSolution> {
    im_operating_point(params, terminal, f_source, SpeedMode::Free, cfg)
}
