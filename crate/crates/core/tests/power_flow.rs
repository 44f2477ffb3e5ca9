use num_complex::Complex64 as C;
use unisim_core::circuit::{CircuitBuilder, CircuitGraph, Coil, ElementKind, NodeRef, Waveform};
use unisim_core::numeric::NewtonConfig;
use unisim_core::steady::{pq_injection, solve_power_flow, PqLoadSpec, PvGenSpec, SplitPhasor};
use unisim_core::Error;

const G: NodeRef = NodeRef::GROUND;
const F: f64 = 60.0;

fn omega() -> f64 {
    2.0 * std::f64::consts::PI * F
}

/// Slack `1∠0` at `slack`, series `r + jx` to `load`, plus one bus element.
fn two_bus(r: f64, x: f64, bus: impl FnOnce(NodeRef) -> ElementKind) -> CircuitGraph {
    let mut b = CircuitBuilder::new("0").frequency(F);
    let slack = b.node("slack");
    let load = b.node("load");
    b.add(
        "VS",
        ElementKind::VoltageSource {
            p: slack,
            n: G,
            source: Waveform::dc(1.0),
        },
    );
    let line_end = if r > 0.0 {
        let mid = b.node("mid");
        b.add("RL", ElementKind::Resistor { a: slack, b: mid, resistance: r });
        mid
    } else {
        slack
    };
    b.add(
        "XL",
        ElementKind::Inductors {
            coils: vec![Coil {
                label: "XL".into(),
                p: line_end,
                n: load,
            }],
            inductance: vec![x / omega()],
        },
    );
    b.add("BUS", bus(load));
    b.build().unwrap()
}

fn pq(p: f64, q: f64) -> impl FnOnce(NodeRef) -> ElementKind {
    move |node| ElementKind::PqLoad(PqLoadSpec { node, p, q })
}

fn pv(p_g: f64, v_set: f64) -> impl FnOnce(NodeRef) -> ElementKind {
    move |node| ElementKind::PvGenerator(PvGenSpec { node, p_g, v_set })
}

fn bus_voltage(g: &CircuitGraph, sol: &unisim_core::SteadyStateSolution, name: &str) -> C {
    let v = sol.node_voltages[g.node_by_name(name).unwrap().0];
    C::new(v.re, v.im)
}

/// Gauss iteration `V = Vs - Z conj(S / V)` on the load bus.
fn fixed_point_load_voltage(z: C, s: C) -> C {
    let mut v = C::new(1.0, 0.0);
    for _ in 0..10_000 {
        let next = C::new(1.0, 0.0) - z * (s / v).conj();
        if (next - v).norm() < 1e-15 {
            return next;
        }
        v = next;
    }
    panic!("fixed point did not settle");
}

#[test]
fn slack_only_network_is_flat() {
    let mut b = CircuitBuilder::new("0").frequency(F);
    let n = b.node("slack");
    b.add(
        "VS",
        ElementKind::VoltageSource {
            p: n,
            n: G,
            source: Waveform::dc(1.0),
        },
    );
    let g = b.build().unwrap();
    let sol = solve_power_flow(&g, &NewtonConfig::default()).unwrap();
    assert_eq!(sol.node_voltages[1], SplitPhasor::new(1.0, 0.0));
    assert_eq!(sol.branch_currents[0], SplitPhasor::new(0.0, 0.0));
}

#[test]
fn two_bus_pq_matches_fixed_point_oracle() {
    let (r, x, p, q) = (0.01, 0.1, 0.5, 0.2);
    let g = two_bus(r, x, pq(p, q));
    let sol = solve_power_flow(&g, &NewtonConfig::default()).unwrap();
    assert!(sol.report.converged);
    let v = bus_voltage(&g, &sol, "load");
    let oracle = fixed_point_load_voltage(C::new(r, x), C::new(p, q));
    assert!((v - oracle).norm() < 1e-8, "{v} vs {oracle}");

    // the power actually delivered through the line equals the specification
    let line = sol.branch_currents[g.element(g.element_by_name("XL").unwrap()).branch.unwrap().0];
    let s = v * C::new(line.re, line.im).conj();
    assert!((s - C::new(p, q)).norm() < 1e-9);
}

#[test]
fn split_circuit_recombines_to_complex_power() {
    let g = two_bus(0.02, 0.08, pq(0.7, -0.1));
    let sol = solve_power_flow(&g, &NewtonConfig::default()).unwrap();
    let v = bus_voltage(&g, &sol, "load");
    let direct = (C::new(0.7, -0.1) / v).conj();
    let stamped = pq_injection(0.7, -0.1, SplitPhasor::new(v.re, v.im)).unwrap();
    assert!((direct.re - stamped.re).abs() < 1e-12 && (direct.im - stamped.im).abs() < 1e-12);
}

/// Loading multiplier at the nose: the quadratic in `|V|^2` loses its real roots.
fn nose_multiplier(r: f64, x: f64, p: f64, q: f64) -> f64 {
    let disc = |k: f64| {
        let b = 2.0 * k * (r * p + x * q) - 1.0;
        let c = (r * r + x * x) * k * k * (p * p + q * q);
        b * b - 4.0 * c
    };
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if disc(mid) >= 0.0 && 2.0 * mid * (r * p + x * q) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn loading_past_the_nose_reports_no_convergence() {
    let (r, x, p, q) = (0.01, 0.1, 0.5, 0.2);
    let k_nose = nose_multiplier(r, x, p, q);
    assert!(k_nose > 1.0);

    // continuation up to the nose: the solver tracks the upper root of the quadratic
    let cfg = NewtonConfig::default();
    for frac in [0.5, 0.8, 0.95] {
        let k = frac * k_nose;
        let sol = solve_power_flow(&two_bus(r, x, pq(k * p, k * q)), &cfg).unwrap();
        let v = sol.node_voltages[2];
        let b = 2.0 * k * (r * p + x * q) - 1.0;
        let c = (r * r + x * x) * k * k * (p * p + q * q);
        let upper = (-b + (b * b - 4.0 * c).sqrt()) / 2.0;
        assert!((v.magnitude_sq() - upper).abs() < 1e-8, "k={k}");
    }

    let beyond = solve_power_flow(&two_bus(r, x, pq(1.05 * k_nose * p, 1.05 * k_nose * q)), &cfg);
    assert!(matches!(beyond, Err(Error::NoConvergence { time: None, .. })), "{beyond:?}");
}

#[test]
fn pv_bus_without_flow() {
    let g = two_bus(0.0, 0.1, pv(0.0, 1.0));
    let sol = solve_power_flow(&g, &NewtonConfig::default()).unwrap();
    let v = bus_voltage(&g, &sol, "load");
    assert!((v - C::new(1.0, 0.0)).norm() < 1e-12);
    assert!(sol.generator_q[0].1.abs() < 1e-12);
}

/// Polar Newton on the single unknown angle, then reactive output in closed form.
fn polar_pv_oracle(p: f64, x: f64, v_set: f64) -> (f64, f64) {
    let mut delta = 0.0f64;
    for _ in 0..50 {
        let f = v_set * delta.sin() / x - p;
        delta -= f / (v_set * delta.cos() / x);
    }
    let q = (v_set * v_set - v_set * delta.cos()) / x;
    (delta, q)
}

#[test]
fn pv_bus_matches_polar_power_flow() {
    let (p, x, v_set) = (0.5, 0.1, 1.0);
    let g = two_bus(0.0, x, pv(p, v_set));
    let sol = solve_power_flow(&g, &NewtonConfig::default()).unwrap();
    let v = bus_voltage(&g, &sol, "load");
    let (delta, q) = polar_pv_oracle(p, x, v_set);
    assert!((v.arg() - delta).abs() < 1e-8);
    assert!((sol.generator_q[0].1 - q).abs() < 1e-8);
    assert!((v.norm_sqr() - v_set * v_set).abs() <= 1e-9);
}

#[test]
fn pv_magnitude_independent_of_line_scaling() {
    for scale in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let g = two_bus(0.0, 0.1 * scale, pv(0.3, 1.02));
        let sol = solve_power_flow(&g, &NewtonConfig::default()).unwrap();
        assert!((sol.node_voltages[2].magnitude() - 1.02).abs() < 1e-9, "scale {scale}");
    }
}

#[test]
fn collapsed_bus_is_reported_by_name() {
    // zero-voltage slack feeding a PQ load: the load model is undefined there
    let mut b = CircuitBuilder::new("0").frequency(F);
    let n = b.node("bus");
    b.add(
        "VS",
        ElementKind::VoltageSource {
            p: n,
            n: G,
            source: Waveform::dc(0.0),
        },
    );
    b.add("LOAD", ElementKind::PqLoad(PqLoadSpec { node: n, p: 1.0, q: 0.0 }));
    let g = b.build().unwrap();
    match solve_power_flow(&g, &NewtonConfig::default()) {
        Err(Error::VoltageCollapse { element, .. }) => assert_eq!(element, "LOAD"),
        other => panic!("{other:?}"),
    }
}
