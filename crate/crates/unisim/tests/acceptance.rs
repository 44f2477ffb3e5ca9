//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unisim::core::circuit::ElementKind;
use unisim::core::machine::stamps::motor_jacobian;
use unisim::core::machine::{dq_transform, inverse_dq_transform, motor_residual, AbcTriple, MotorContext, MotorHistory, MotorParams};
use unisim::core::numeric::NewtonConfig;
use unisim::core::steady::{balanced_set, im_operating_point, pq_injection, pq_partials, SplitPhasor};
use unisim::core::transient::{run_transient, TimeGrid};
use unisim::core::SpeedMode;
use unisim::{load_netlist, run_compare, run_startup, run_steady, Netlist, Settings};

mod tol {
    /// Published steady state: speed, torque, ids, iqs, idr, iqr.
    pub const TABLE2: [f64; 6] = [375.01, 16.64, -11.36, 13.09, 11.56, -0.49];
    pub const TABLE2_REL: f64 = 5e-3;
    pub const STEADY_RUNTIME_S: f64 = 1.0;
    pub const TRANSIENT_RUNTIME_S: f64 = 30.0;
    pub const STARTUP_DT: f64 = 1e-4;
    pub const STARTUP_T_END: f64 = 1.5;
    pub const UNIFICATION_REL: f64 = 1e-3;
    pub const TORQUE_BALANCE_ABS: f64 = 1e-6;
    pub const RL_DTS: [f64; 3] = [4e-3, 2e-3, 1e-3];
    pub const RL_SLOPE: f64 = 2.0;
    pub const RL_SLOPE_BAND: f64 = 0.1;
    pub const PEAK_WINDOW_S: f64 = 0.5;
    pub const PEAK_DTS: [f64; 2] = [1e-4, 5e-5];
    pub const TOL_LOOSE: f64 = 1e-9;
    pub const TOL_TIGHT: f64 = 1e-12;
    pub const TOL_SENSITIVITY_REL: f64 = 1e-4;
    /// Single-iteration offsets at the two steps must differ by this fraction.
    pub const DT_DEPENDENCE_REL: f64 = 1e-2;
    pub const SLIP_RANGE: (f64, f64) = (0.001, 0.2);
    pub const SLIP_POINTS: usize = 41;
    pub const ORACLE_REL: f64 = 1e-6;
    pub const POWER_FLOW_ABS: f64 = 1e-8;
    pub const DQ_ROUND_TRIP: f64 = 1e-13;
    pub const PQ_PARTIALS_ABS: f64 = 1e-6;
    pub const DRIFT_REL: f64 = 1e-6;
    pub const DRIFT_STEPS: usize = 1000;
    pub const JACOBIAN_REL: f64 = 1e-6;
}

const QUANTITIES: [&str; 6] = ["wr", "te", "ids", "iqs", "idr", "iqr"];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn netlist(name: &str) -> Netlist {
    load_netlist(&Path::new(env!("CARGO_MANIFEST_DIR")).join("netlists").join(name)).expect("golden netlist")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn worst_vs_table(values: [f64; 6]) -> (f64, &'static str) {
    values
        .iter()
        .zip(tol::TABLE2)
        .zip(QUANTITIES)
        .map(|((v, t), q)| (rel(*v, t), q))
        .fold((0.0, ""), |m, x| if x.0 > m.0 { x } else { m })
}

fn table2_steady() -> Outcome {
    let n = netlist("motor20hp.net");
    let (sol, took) = timed(|| run_steady(&n, Settings::default()));
    let sol = sol.map_err(|e| e.to_string())?;
    let m = sol.motors[0];
    let (worst, q) = worst_vs_table([m.wr, m.te, m.ids, m.iqs, m.idr, m.iqr]);
    check(
        worst <= tol::TABLE2_REL && took.as_secs_f64() < tol::STEADY_RUNTIME_S,
        format!("worst {q} off by {worst:.2e}, {:.3} s", took.as_secs_f64()),
    )
}

fn table2_transient() -> Outcome {
    let n = netlist("motor20hp.net");
    let flags = Settings {
        dt: Some(tol::STARTUP_DT),
        t_end: Some(tol::STARTUP_T_END),
        ..Settings::default()
    };
    let (run, took) = timed(|| run_startup(&n, flags));
    let run = run.map_err(|e| e.to_string())?;
    let last = |q: &str| *run.waveforms.column(&format!("m1.{q}")).unwrap().last().unwrap();
    let (worst, q) = worst_vs_table(QUANTITIES.map(last));
    check(
        worst <= tol::TABLE2_REL && took.as_secs_f64() < tol::TRANSIENT_RUNTIME_S,
        format!("worst {q} off by {worst:.2e}, {:.2} s", took.as_secs_f64()),
    )
}

fn unification() -> Outcome {
    let report = run_compare(&netlist("motor20hp.net"), Settings::default()).map_err(|e| e.to_string())?;
    let worst = report.max_rel_diff();
    check(
        worst <= tol::UNIFICATION_REL && report.agrees(),
        format!("max relative difference {worst:.3e} at t = {} s", report.t_end),
    )
}

fn torque_balance() -> Outcome {
    let n = netlist("motor20hp.net");
    let p = n.motor("m1").unwrap();
    let m = run_steady(&n, Settings::default()).map_err(|e| e.to_string())?.motors[0];
    let gap = (m.te - p.load_torque.value(m.wr) - p.damping * m.wr).abs();
    check(gap <= tol::TORQUE_BALANCE_ABS, format!("|Te - TL - D wr| = {gap:.2e} N*m"))
}

fn trapezoidal_order() -> Outcome {
    let n = netlist("rl.net");
    let mut errors = Vec::new();
    for dt in tol::RL_DTS {
        let run = run_startup(&n, Settings { dt: Some(dt), ..Settings::default() }).map_err(|e| e.to_string())?;
        let i = run.waveforms.column("i(L1)").unwrap();
        let err = run.waveforms.time.iter().zip(i).map(|(t, i)| (i - (1.0 - (-t).exp())).abs()).fold(0.0, f64::max);
        errors.push(err);
    }
    // least-squares slope through the three (log dt, log error) points
    let xs: Vec<f64> = tol::RL_DTS.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    check(
        (slope - tol::RL_SLOPE).abs() <= tol::RL_SLOPE_BAND,
        format!("slope {slope:.4}, errors {:.3e} {:.3e} {:.3e}", errors[0], errors[1], errors[2]),
    )
}

fn peak_torque(n: &Netlist, dt: f64, tol_abs: f64, max_nr: usize) -> Result<f64, String> {
    let flags = Settings {
        dt: Some(dt),
        t_end: Some(tol::PEAK_WINDOW_S),
        tol: Some(tol_abs),
        max_nr: Some(max_nr),
    };
    let run = run_startup(n, flags).map_err(|e| e.to_string())?;
    Ok(run.waveforms.column("m1.te").unwrap().iter().copied().fold(f64::MIN, f64::max))
}

fn single_iteration_mechanism() -> Outcome {
    let n = netlist("motor20hp.net");
    let mut offsets = Vec::new();
    for dt in tol::PEAK_DTS {
        let converged = peak_torque(&n, dt, tol::TOL_LOOSE, 50)?;
        let single = peak_torque(&n, dt, tol::TOL_LOOSE, 1)?;
        offsets.push((single - converged).abs());
    }
    let loose = peak_torque(&n, tol::PEAK_DTS[0], tol::TOL_LOOSE, 50)?;
    let tight = peak_torque(&n, tol::PEAK_DTS[0], tol::TOL_TIGHT, 50)?;
    let sensitivity = rel(tight, loose);
    let spread = (offsets[0] - offsets[1]).abs() / offsets[0].max(offsets[1]);
    check(
        offsets.iter().all(|d| *d > 0.0) && spread > tol::DT_DEPENDENCE_REL && sensitivity < tol::TOL_SENSITIVITY_REL,
        format!(
            "single-iteration peak offset {:.3e} / {:.3e} N*m at dt {:e} / {:e}, tolerance sensitivity {sensitivity:.2e}",
            offsets[0], offsets[1], tol::PEAK_DTS[0], tol::PEAK_DTS[1]
        ),
    )
}

/// Per-phase equivalent circuit with peak phasors: torque and stator current magnitude.
fn equivalent_circuit(p: &MotorParams, v_pk: f64, slip: f64) -> (f64, f64) {
    let w = 2.0 * PI * p.frequency;
    let zs = C::new(p.rs, w * p.lls);
    let zm = C::new(0.0, w * p.lm);
    let zr = C::new(p.rr / slip, w * p.llr);
    let is = C::new(v_pk, 0.0) / (zs + zm * zr / (zm + zr));
    let ir = is * zm / (zm + zr);
    let air_gap = 1.5 * ir.norm_sqr() * p.rr / slip;
    (air_gap * (p.poles as f64 / 2.0) / w, is.norm())
}

fn oracle_equivalence() -> Outcome {
    let n = netlist("motor20hp.net");
    let p = n.motor("m1").unwrap();
    let ws = p.synchronous_speed();
    let v_pk = p.peak_phase_voltage();
    let mut worst: f64 = 0.0;
    for k in 0..tol::SLIP_POINTS {
        let (lo, hi) = tol::SLIP_RANGE;
        let slip = lo + (hi - lo) * k as f64 / (tol::SLIP_POINTS - 1) as f64;
        let sol = im_operating_point(p, balanced_set(v_pk, PI), p.frequency, SpeedMode::Pinned((1.0 - slip) * ws), &NewtonConfig::default())
            .map_err(|e| e.to_string())?;
        let m = sol.motors[0];
        let (te, is) = equivalent_circuit(p, v_pk, slip);
        worst = worst.max(rel(m.te, te)).max(rel(m.ids.hypot(m.iqs), is));
    }

    let pf = netlist("twobus_pq.net");
    let g = &pf.circuit;
    let sol = run_steady(&pf, Settings::default()).map_err(|e| e.to_string())?;
    let x = 2.0 * PI * g.frequency * inductance(&pf, "XL");
    let r = resistance(&pf, "RL");
    let (pl, ql) = pq_spec(&pf, "LOAD");
    // Gauss iteration V = 1 - Z conj(S / V) on the load bus
    let (z, load) = (C::new(r, x), C::new(pl, ql));
    let mut v = C::new(1.0, 0.0);
    for _ in 0..10_000 {
        v = C::new(1.0, 0.0) - z * (load / v).conj();
    }
    let got = sol.node_voltages[g.node_by_name("load").unwrap().0];
    let pf_err = (C::new(got.re, got.im) - v).norm();
    check(
        worst <= tol::ORACLE_REL && pf_err <= tol::POWER_FLOW_ABS,
        format!("torque-slip worst {worst:.2e} over {} slips, two-bus |dV| {pf_err:.2e}", tol::SLIP_POINTS),
    )
}

fn inductance(n: &Netlist, name: &str) -> f64 {
    match &n.circuit.element(n.circuit.element_by_name(name).unwrap()).kind {
        ElementKind::Inductors { inductance, .. } => inductance[0],
        _ => unreachable!(),
    }
}

fn resistance(n: &Netlist, name: &str) -> f64 {
    match &n.circuit.element(n.circuit.element_by_name(name).unwrap()).kind {
        ElementKind::Resistor { resistance, .. } => *resistance,
        _ => unreachable!(),
    }
}

fn pq_spec(n: &Netlist, name: &str) -> (f64, f64) {
    match &n.circuit.element(n.circuit.element_by_name(name).unwrap()).kind {
        ElementKind::PqLoad(spec) => (spec.p, spec.q),
        _ => unreachable!(),
    }
}

fn invariant_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut dq: f64 = 0.0;
    for _ in 0..10_000 {
        let f = AbcTriple::new(rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3));
        let theta = rng.gen_range(-10.0..10.0);
        let back = inverse_dq_transform(dq_transform(f, theta), theta);
        let scale = 1f64.max(f.a.abs()).max(f.b.abs()).max(f.c.abs());
        dq = dq.max(((back.a - f.a).abs().max((back.b - f.b).abs()).max((back.c - f.c).abs())) / scale);
    }

    let mut pq: f64 = 0.0;
    for _ in 0..1000 {
        let (p, q) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let v = SplitPhasor::from_polar(rng.gen_range(0.5..1.5), rng.gen_range(-3.0..3.0));
        let jac = pq_partials(p, q, v).map_err(|e| e.to_string())?;
        let h = 1e-6;
        for c in 0..2 {
            let shift = |s: f64| if c == 0 { SplitPhasor::new(v.re + s, v.im) } else { SplitPhasor::new(v.re, v.im + s) };
            let (hi, lo) = (pq_injection(p, q, shift(h)).unwrap(), pq_injection(p, q, shift(-h)).unwrap());
            let fd = [(hi.re - lo.re) / (2.0 * h), (hi.im - lo.im) / (2.0 * h)];
            for r in 0..2 {
                pq = pq.max((fd[r] - jac[r][c]).abs());
            }
        }
    }

    let n = netlist("motor20hp.net");
    let sol = run_steady(&n, Settings::default()).map_err(|e| e.to_string())?;
    let x0 = sol.time_domain_state(&n.circuit, 0.0);
    let dt = 1e-4;
    let grid = TimeGrid::new(0.0, tol::DRIFT_STEPS as f64 * dt, dt).unwrap();
    let run = run_transient(&n.circuit, &grid, &NewtonConfig::default().with_tolerance(tol::TOL_TIGHT), Some(&x0))
        .map_err(|e| e.to_string())?;
    let mut drift: f64 = 0.0;
    for q in QUANTITIES {
        let c = run.waveforms.column(&format!("m1.{q}")).unwrap();
        drift = drift.max(c.iter().map(|v| rel(*v, c[0])).fold(0.0, f64::max));
    }

    let p = n.motor("m1").unwrap();
    let mut jac_err: f64 = 0.0;
    for _ in 0..50 {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-400.0..400.0));
        let i: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-60.0..60.0));
        let wr = rng.gen_range(0.0..380.0);
        let theta = rng.gen_range(0.0..6.3);
        let old = [i[0] * 0.9, i[1] * 0.9, i[2] * 1.1, i[3] * 0.9, i[4] * 1.1, wr * 0.99];
        let hist = MotorHistory::consistent(p, SpeedMode::Free, 376.99, theta - 0.0377, old, [v[1], v[2], v[0]]);
        let ctx = MotorContext::Transient { omega: 376.99, theta, dt: 1e-4, history: &hist };
        let x = [v[0], v[1], v[2], i[0], i[1], i[2], i[3], i[4], wr];
        let jac = motor_jacobian(p, SpeedMode::Free, &ctx, &x).map_err(|e| e.to_string())?;
        let dim = x.len();
        for col in 0..dim {
            let h = 1e-6 * (1.0 + x[col].abs());
            let (mut xp, mut xm) = (x, x);
            xp[col] += h;
            xm[col] -= h;
            let (fp, fm) = (motor_residual(p, SpeedMode::Free, &ctx, &xp), motor_residual(p, SpeedMode::Free, &ctx, &xm));
            for row in 0..dim {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                let an = jac[row * dim + col];
                // entries far below the row's largest are judged on the row's scale
                let row_scale = jac[row * dim..(row + 1) * dim].iter().fold(0f64, |m, v| m.max(v.abs()));
                let scale = an.abs().max(fd.abs()).max(1e-3 * row_scale);
                if scale > 0.0 {
                    jac_err = jac_err.max((fd - an).abs() / scale);
                }
            }
        }
    }

    check(
        dq <= tol::DQ_ROUND_TRIP && pq <= tol::PQ_PARTIALS_ABS && drift <= tol::DRIFT_REL && jac_err <= tol::JACOBIAN_REL,
        format!("dq {dq:.1e}, PQ partials {pq:.1e}, drift {drift:.1e} over {} steps, Jacobian {jac_err:.1e}", tol::DRIFT_STEPS),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("steady state matches the reference table", table2_steady),
        ("start-up transient settles on the reference table", table2_transient),
        ("steady state and transient agree", unification),
        ("torque balance at the steady state", torque_balance),
        ("trapezoidal rule is second order", trapezoidal_order),
        ("single-iteration mode shifts peak torque", single_iteration_mechanism),
        ("independent oracles agree", oracle_equivalence),
        ("invariant suites", invariant_suites),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail})", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({detail})", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
