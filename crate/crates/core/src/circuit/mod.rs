//! Circuit description and system assembly.
//!
//! The formulation is augmented nodal: node voltages are unknowns, and every
//! voltage-defined element (sources, switches, current-controlled voltage
//! sources) and every inductor coil also carries its branch current as an
//! unknown. That gives coupled coils a natural current state and lets an
//! ideal switch flip between a zero-voltage and a zero-current constraint.
//!
//! Unknown layout, time domain: `[node voltages][branch currents][device internals]`.
//! Phasor domain: `[node re][branch re][node im][branch im][device internals]`.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::machine::{MotorParams, SpeedMode, MOTOR_STATES};
use crate::machine::stamps::STEADY_MOTOR_STATES;
use crate::steady::{PqLoadSpec, PvGenSpec, SplitPhasor};
use crate::transient::validate_inductance;

mod assemble;
mod stamp;

pub use assemble::{build_system, Context};
pub(crate) use assemble::motor_history_at;
pub use stamp::{
    stamp_branch_incidence, stamp_ccvs, stamp_current_source, stamp_ideal_switch, stamp_resistor,
    stamp_vccs, stamp_voltage_source, Stamp, SubCircuit,
};

/// Node index; 0 is the ground reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef(pub usize);

impl NodeRef {
    pub const GROUND: NodeRef = NodeRef(0);

    pub fn is_ground(self) -> bool {
        self.0 == 0
    }
}

/// Index into the branch-current segment of the unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BranchRef(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementId(pub usize);

/// Sinusoid `amplitude * cos(omega t + phase)` at the circuit frequency; constant when the frequency is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waveform {
    pub amplitude: f64,
    /// Radians.
    pub phase: f64,
}

impl Waveform {
    pub fn dc(value: f64) -> Self {
        Self {
            amplitude: value,
            phase: 0.0,
        }
    }

    pub fn from_phasor(v: SplitPhasor) -> Self {
        Self {
            amplitude: v.magnitude(),
            phase: libm::atan2(v.im, v.re),
        }
    }

    pub fn value_at(&self, omega: f64, t: f64) -> f64 {
        self.amplitude * libm::cos(omega * t + self.phase)
    }

    /// Phasor with `x(t) = Re(X e^{j omega t})`; at DC the imaginary part is dropped.
    pub fn phasor(&self, omega: f64) -> SplitPhasor {
        if omega == 0.0 {
            SplitPhasor::new(self.amplitude * libm::cos(self.phase), 0.0)
        } else {
            SplitPhasor::from_polar(self.amplitude, self.phase)
        }
    }
}

/// One coil of an inductor block, with its current flowing from `p` to `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coil {
    pub label: String,
    pub p: NodeRef,
    pub n: NodeRef,
}

/// A branch current used as a control input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlRef {
    pub element: ElementId,
    /// Coil index for inductor blocks, 0 otherwise.
    pub coil: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor {
        a: NodeRef,
        b: NodeRef,
        resistance: f64,
    },
    /// Self/mutual inductor block; `inductance` is row-major n-by-n over `coils`.
    Inductors {
        coils: Vec<Coil>,
        inductance: Vec<f64>,
    },
    VoltageSource {
        p: NodeRef,
        n: NodeRef,
        source: Waveform,
    },
    /// Current flows from `p` through the source to `n`.
    CurrentSource {
        p: NodeRef,
        n: NodeRef,
        source: Waveform,
    },
    /// Current `gain * (V(cp) - V(cn))` from `p` through the element to `n`.
    Vccs {
        p: NodeRef,
        n: NodeRef,
        cp: NodeRef,
        cn: NodeRef,
        gain: f64,
    },
    /// `V(p) - V(n) = gain * I(control)`.
    Ccvs {
        p: NodeRef,
        n: NodeRef,
        control: ControlRef,
        gain: f64,
    },
    /// Ideal switch; the state flips at each listed time (seconds).
    Switch {
        p: NodeRef,
        n: NodeRef,
        closed: bool,
        toggles: Vec<f64>,
    },
    PqLoad(PqLoadSpec),
    PvGenerator(PvGenSpec),
    InductionMotor {
        terminals: [NodeRef; 3],
        params: MotorParams,
        speed: SpeedMode,
    },
}

impl ElementKind {
    pub fn branch_count(&self) -> usize {
        match self {
            ElementKind::Inductors { coils, .. } => coils.len(),
            ElementKind::VoltageSource { .. } | ElementKind::Ccvs { .. } | ElementKind::Switch { .. } => 1,
            _ => 0,
        }
    }

    /// Device-internal unknowns for the phasor (`true`) or time-domain analysis.
    pub fn internal_count(&self, phasor: bool) -> usize {
        match (self, phasor) {
            (ElementKind::PvGenerator(_), true) => 1,
            (ElementKind::InductionMotor { .. }, true) => STEADY_MOTOR_STATES,
            (ElementKind::InductionMotor { .. }, false) => MOTOR_STATES,
            _ => 0,
        }
    }

    pub fn nodes(&self) -> Vec<NodeRef> {
        match self {
            ElementKind::Resistor { a, b, .. } => vec![*a, *b],
            ElementKind::Inductors { coils, .. } => coils.iter().flat_map(|c| [c.p, c.n]).collect(),
            ElementKind::VoltageSource { p, n, .. }
            | ElementKind::CurrentSource { p, n, .. }
            | ElementKind::Ccvs { p, n, .. }
            | ElementKind::Switch { p, n, .. } => vec![*p, *n],
            ElementKind::Vccs { p, n, cp, cn, .. } => vec![*p, *n, *cp, *cn],
            ElementKind::PqLoad(spec) => vec![spec.node],
            ElementKind::PvGenerator(spec) => vec![spec.node],
            ElementKind::InductionMotor { terminals, .. } => terminals.to_vec(),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidParams { reason });
        match self {
            ElementKind::Resistor { resistance, .. } if !(*resistance > 0.0 && resistance.is_finite()) => {
                bad(alloc::format!("{name}: resistance must be positive, got {resistance}"))
            }
            ElementKind::Inductors { coils, inductance } => validate_inductance(inductance, coils.len()),
            ElementKind::VoltageSource { source, .. } | ElementKind::CurrentSource { source, .. }
                if !(source.amplitude.is_finite() && source.phase.is_finite()) =>
            {
                bad(alloc::format!("{name}: source value must be finite"))
            }
            ElementKind::Vccs { gain, .. } | ElementKind::Ccvs { gain, .. } if !gain.is_finite() => {
                bad(alloc::format!("{name}: gain must be finite"))
            }
            ElementKind::Switch { toggles, .. } if toggles.iter().any(|t| !t.is_finite()) => {
                bad(alloc::format!("{name}: switch times must be finite"))
            }
            ElementKind::PqLoad(spec) if !(spec.p.is_finite() && spec.q.is_finite()) => {
                bad(alloc::format!("{name}: P and Q must be finite"))
            }
            ElementKind::PvGenerator(spec) if !(spec.v_set > 0.0 && spec.p_g.is_finite()) => {
                bad(alloc::format!("{name}: voltage setpoint must be positive"))
            }
            ElementKind::InductionMotor { params, .. } => params.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    /// First branch owned by the element, if any.
    pub branch: Option<BranchRef>,
}

impl Element {
    /// Switch state at time `t` (toggles at or before `t` have taken effect).
    pub fn switch_closed_at(&self, t: f64) -> Option<bool> {
        match &self.kind {
            ElementKind::Switch { closed, toggles, .. } => {
                let flips = toggles.iter().filter(|&&s| s <= t).count();
                Some(*closed ^ (flips % 2 == 1))
            }
            _ => None,
        }
    }
}

/// Where each class of unknown lives for one analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub phasor: bool,
    pub nodes: usize,
    pub branches: usize,
    internal: Vec<Option<usize>>,
    pub dimension: usize,
}

impl Layout {
    fn new(nodes: usize, branches: usize, elements: &[Element], phasor: bool) -> Self {
        let mut next = if phasor { 2 * (nodes + branches) } else { nodes + branches };
        let internal = elements
            .iter()
            .map(|e| {
                let count = e.kind.internal_count(phasor);
                (count > 0).then(|| {
                    let at = next;
                    next += count;
                    at
                })
            })
            .collect();
        Self {
            phasor,
            nodes,
            branches,
            internal,
            dimension: next,
        }
    }

    /// Real sub-circuit (the only one in the time domain).
    pub fn real(&self) -> SubCircuit {
        SubCircuit {
            node_base: 0,
            branch_base: self.nodes,
        }
    }

    /// Imaginary sub-circuit of the phasor layout.
    pub fn imag(&self) -> SubCircuit {
        debug_assert!(self.phasor);
        let base = self.nodes + self.branches;
        SubCircuit {
            node_base: base,
            branch_base: base + self.nodes,
        }
    }

    pub fn internal(&self, element: ElementId) -> Option<usize> {
        self.internal[element.0]
    }
}

/// Immutable circuit shared by both analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitGraph {
    node_names: Vec<String>,
    elements: Vec<Element>,
    branch_count: usize,
    /// System frequency, Hz.
    pub frequency: f64,
    steady: Layout,
    transient: Layout,
}

impl CircuitGraph {
    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn node_name(&self, n: NodeRef) -> &str {
        &self.node_names[n.0]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeRef> {
        self.node_names.iter().position(|n| n == name).map(NodeRef)
    }

    pub fn branch_count(&self) -> usize {
        self.branch_count
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, id: ElementId) -> &Element {
        &self.elements[id.0]
    }

    pub fn element_by_name(&self, name: &str) -> Option<ElementId> {
        self.elements.iter().position(|e| e.name == name).map(ElementId)
    }

    pub fn omega(&self) -> f64 {
        2.0 * core::f64::consts::PI * self.frequency
    }

    pub fn steady_layout(&self) -> &Layout {
        &self.steady
    }

    pub fn transient_layout(&self) -> &Layout {
        &self.transient
    }

    pub fn layout(&self, phasor: bool) -> &Layout {
        if phasor {
            &self.steady
        } else {
            &self.transient
        }
    }

    /// Branch carrying a control current.
    pub fn control_branch(&self, control: ControlRef) -> Option<BranchRef> {
        let e = self.elements.get(control.element.0)?;
        let base = e.branch?;
        (control.coil < e.kind.branch_count()).then_some(BranchRef(base.0 + control.coil))
    }

    /// Elements that only exist in the phasor domain.
    pub fn phasor_only_elements(&self) -> impl Iterator<Item = &Element> {
        self.elements
            .iter()
            .filter(|e| matches!(e.kind, ElementKind::PqLoad(_) | ElementKind::PvGenerator(_)))
    }

    /// Checks that every unknown of a layout has exactly one owner.
    pub fn check_layout(&self, layout: &Layout) -> Result<()> {
        let mut owners = vec![0u32; layout.dimension];
        let subs: Vec<SubCircuit> = if layout.phasor {
            vec![layout.real(), layout.imag()]
        } else {
            vec![layout.real()]
        };
        for sub in &subs {
            for n in 1..self.node_count() {
                owners[sub.node(NodeRef(n)).unwrap()] += 1;
            }
            for b in 0..self.branch_count {
                owners[sub.branch(BranchRef(b))] += 1;
            }
        }
        for (i, e) in self.elements.iter().enumerate() {
            if let Some(at) = layout.internal(ElementId(i)) {
                for slot in at..at + e.kind.internal_count(layout.phasor) {
                    if slot >= layout.dimension {
                        return Err(Error::UnownedUnknown { index: slot });
                    }
                    owners[slot] += 1;
                }
            }
        }
        match owners.iter().position(|&c| c != 1) {
            Some(index) => Err(Error::UnownedUnknown { index }),
            None => Ok(()),
        }
    }

    /// Signal names of the time-domain unknowns, in layout order.
    pub fn unknown_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.node_names[1..]
            .iter()
            .map(|n| alloc::format!("v({n})"))
            .collect();
        let mut branch_names = vec![String::new(); self.branch_count];
        for e in &self.elements {
            let Some(base) = e.branch else { continue };
            match &e.kind {
                ElementKind::Inductors { coils, .. } => {
                    for (k, c) in coils.iter().enumerate() {
                        branch_names[base.0 + k] = alloc::format!("i({})", c.label);
                    }
                }
                _ => branch_names[base.0] = alloc::format!("i({})", e.name),
            }
        }
        names.extend(branch_names);
        for e in &self.elements {
            if e.kind.internal_count(false) > 0 {
                for s in ["i0s", "ids", "iqs", "idr", "iqr", "wr"] {
                    names.push(alloc::format!("{}.{s}", e.name));
                }
            }
        }
        names
    }
}

/// Incrementally describes a circuit; nodes are created on first use.
#[derive(Debug, Clone)]
pub struct CircuitBuilder {
    node_names: Vec<String>,
    elements: Vec<Element>,
    frequency: f64,
}

impl CircuitBuilder {
    pub fn new(ground: &str) -> Self {
        Self {
            node_names: vec![ground.to_string()],
            elements: Vec::new(),
            frequency: 0.0,
        }
    }

    pub fn frequency(mut self, hz: f64) -> Self {
        self.frequency = hz;
        self
    }

    pub fn set_frequency(&mut self, hz: f64) {
        self.frequency = hz;
    }

    pub fn node(&mut self, name: &str) -> NodeRef {
        match self.node_names.iter().position(|n| n == name) {
            Some(i) => NodeRef(i),
            None => {
                self.node_names.push(name.to_string());
                NodeRef(self.node_names.len() - 1)
            }
        }
    }

    pub fn add(&mut self, name: &str, kind: ElementKind) -> ElementId {
        self.elements.push(Element {
            name: name.to_string(),
            kind,
            branch: None,
        });
        ElementId(self.elements.len() - 1)
    }

    pub fn build(self) -> Result<CircuitGraph> {
        let Self {
            node_names,
            mut elements,
            frequency,
        } = self;
        if !(frequency >= 0.0 && frequency.is_finite()) {
            return Err(Error::InvalidParams {
                reason: alloc::format!("system frequency must be non-negative, got {frequency}"),
            });
        }
        let mut referenced = vec![false; node_names.len()];
        let mut branch_count = 0;
        for e in &mut elements {
            e.kind.validate(&e.name)?;
            for n in e.kind.nodes() {
                if n.0 >= node_names.len() {
                    return Err(Error::InvalidParams {
                        reason: alloc::format!("{}: node index {} out of range", e.name, n.0),
                    });
                }
                referenced[n.0] = true;
            }
            let count = e.kind.branch_count();
            if count > 0 {
                e.branch = Some(BranchRef(branch_count));
                branch_count += count;
            }
            if let ElementKind::Switch { toggles, .. } = &mut e.kind {
                toggles.sort_by(f64::total_cmp);
            }
        }
        if let Some(n) = (1..node_names.len()).find(|&n| !referenced[n]) {
            return Err(Error::UnreferencedNode {
                node: node_names[n].clone(),
            });
        }
        let nodes = node_names.len() - 1;
        let steady = Layout::new(nodes, branch_count, &elements, true);
        let transient = Layout::new(nodes, branch_count, &elements, false);
        let graph = CircuitGraph {
            node_names,
            elements,
            branch_count,
            frequency,
            steady,
            transient,
        };
        for e in &graph.elements {
            if let ElementKind::Ccvs { control, .. } = &e.kind {
                if graph.control_branch(*control).is_none() {
                    return Err(Error::MissingBranch {
                        element: alloc::format!("{} (control of {})", control.element.0, e.name),
                    });
                }
            }
        }
        graph.check_layout(&graph.steady)?;
        graph.check_layout(&graph.transient)?;
        Ok(graph)
    }
}
