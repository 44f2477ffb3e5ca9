//! Motor residuals and their Newton linearization.
//!
//! Local unknown ordering (rows follow the same order):
//!
//! * time domain: `[va, vb, vc, i0s, ids, iqs, idr, iqr, wr]`; the first three
//!   rows are the currents the motor draws out of its terminal nodes.
//! * phasor: `[va.re, vb.re, vc.re, va.im, vb.im, vc.im, i0s.re, i0s.im, ids, iqs, idr, iqr, wr]`.
//!
//! In the time domain the winding rows are written in flux units (scaled by
//! `dt/2`) and the mechanical row in speed units (scaled by `dt/(2J)`); the
//! scaling leaves Newton iterates unchanged and keeps residual magnitudes
//! near the size of the states themselves.

use alloc::vec;
use alloc::vec::Vec;

use super::{
    electrical_torque, flux_linkages, mechanical_derivative, MotorParams, SpeedMode, PHASE_SHIFT,
};
use crate::circuit::Stamp;
use crate::error::{Error, Result};
use crate::transient::{companion_coupled_coils, taylor_linearize_product, CoilHistory};

/// Internal unknowns in the time domain: `i0s, ids, iqs, idr, iqr, wr`.
pub const MOTOR_STATES: usize = 6;
/// Internal unknowns in the phasor domain: `i0s.re, i0s.im, ids, iqs, idr, iqr, wr`.
pub const STEADY_MOTOR_STATES: usize = 7;

pub(crate) const TRANSIENT_LOCALS: usize = 3 + MOTOR_STATES;
pub(crate) const STEADY_LOCALS: usize = 6 + STEADY_MOTOR_STATES;

/// Motor state at the previous time point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotorHistory {
    pub state: [f64; MOTOR_STATES],
    /// Winding voltage terms `p(psi)` for zero, ds, qs, dr, qr.
    pub winding_voltage: [f64; 5],
    /// `p(w_r)`
    pub acceleration: f64,
}

impl MotorHistory {
    /// History consistent with the motor equations at a given state and terminal voltages.
    pub fn consistent(
        params: &MotorParams,
        speed: SpeedMode,
        omega: f64,
        theta: f64,
        state: [f64; MOTOR_STATES],
        terminal: [f64; 3],
    ) -> Self {
        let [i0, ids, iqs, idr, iqr, wr] = state;
        let (v0, vd, vq) = terminal_dq(theta, terminal);
        let psi = flux_linkages(ids, iqs, idr, iqr, params);
        let slip_speed = omega - wr;
        let winding_voltage = [
            v0 - params.rs * i0,
            vd - params.rs * ids + omega * psi.qs,
            vq - params.rs * iqs - omega * psi.ds,
            -params.rr * idr + slip_speed * psi.qr,
            -params.rr * iqr - slip_speed * psi.dr,
        ];
        let acceleration = match speed {
            SpeedMode::Free => {
                let te = electrical_torque(ids, iqs, idr, iqr, params);
                mechanical_derivative(te, wr, params)
            }
            SpeedMode::Pinned(_) => 0.0,
        };
        Self {
            state,
            winding_voltage,
            acceleration,
        }
    }

    /// Advances the derivative terms to a solved state with the trapezoidal difference equation.
    pub fn advance(&self, params: &MotorParams, dt: f64, state: [f64; MOTOR_STATES]) -> Self {
        let old = &self.state;
        let d = |k: usize| state[k] - old[k];
        let k = 2.0 / dt;
        let e = &self.winding_voltage;
        let winding_voltage = [
            -e[0] + k * params.lls * d(0),
            -e[1] + k * (params.ls() * d(1) + params.lm * d(3)),
            -e[2] + k * (params.ls() * d(2) + params.lm * d(4)),
            -e[3] + k * (params.lr() * d(3) + params.lm * d(1)),
            -e[4] + k * (params.lr() * d(4) + params.lm * d(2)),
        ];
        Self {
            state,
            winding_voltage,
            acceleration: -self.acceleration + k * d(5),
        }
    }
}

/// Analysis context seen by the motor.
#[derive(Debug, Clone, Copy)]
pub enum MotorContext<'a> {
    /// Phasor domain at the source angular frequency.
    Steady { omega: f64 },
    /// Trapezoidal step ending at frame angle `theta`.
    Transient {
        omega: f64,
        theta: f64,
        dt: f64,
        history: &'a MotorHistory,
    },
    /// Internal states held fixed; used for the initial consistency solve.
    Held {
        theta: f64,
        state: &'a [f64; MOTOR_STATES],
    },
}

impl MotorContext<'_> {
    pub fn locals(&self) -> usize {
        match self {
            MotorContext::Steady { .. } => STEADY_LOCALS,
            _ => TRANSIENT_LOCALS,
        }
    }
}

/// Zero, d and q terminal voltages from instantaneous phase voltages.
pub fn terminal_dq(theta: f64, v: [f64; 3]) -> (f64, f64, f64) {
    let coeffs = dq_coefficients(theta);
    let dot = |w: &[f64; 3]| w[0] * v[0] + w[1] * v[1] + w[2] * v[2];
    (dot(&coeffs.0), dot(&coeffs.1), dot(&coeffs.2))
}

/// Rows of the transform as (zero, d, q) weight vectors over phases a, b, c.
fn dq_coefficients(theta: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let mut d = [0.0; 3];
    let mut q = [0.0; 3];
    for k in 0..3 {
        let angle = theta - k as f64 * PHASE_SHIFT;
        d[k] = 2.0 / 3.0 * libm::cos(angle);
        q[k] = 2.0 / 3.0 * libm::sin(angle);
    }
    ([1.0 / 3.0; 3], d, q)
}

/// Plain evaluation of the motor equations at a local point (no linearization).
pub fn motor_residual(params: &MotorParams, speed: SpeedMode, ctx: &MotorContext<'_>, x: &[f64]) -> Vec<f64> {
    match ctx {
        MotorContext::Steady { omega } => steady_residual(params, speed, *omega, x),
        MotorContext::Transient {
            omega,
            theta,
            dt,
            history,
        } => transient_residual(params, speed, *omega, *theta, *dt, history, x),
        MotorContext::Held { theta, state } => {
            let mut f = kcl_time_domain(*theta, x);
            f.extend((0..MOTOR_STATES).map(|k| x[3 + k] - state[k]));
            f
        }
    }
}

fn kcl_time_domain(theta: f64, x: &[f64]) -> Vec<f64> {
    (0..3)
        .map(|k| {
            let angle = theta - k as f64 * PHASE_SHIFT;
            x[3] + libm::cos(angle) * x[4] + libm::sin(angle) * x[5]
        })
        .collect()
}

fn transient_residual(
    params: &MotorParams,
    speed: SpeedMode,
    omega: f64,
    theta: f64,
    dt: f64,
    history: &MotorHistory,
    x: &[f64],
) -> Vec<f64> {
    let [i0, ids, iqs, idr, iqr, wr] = [x[3], x[4], x[5], x[6], x[7], x[8]];
    let (v0, vd, vq) = terminal_dq(theta, [x[0], x[1], x[2]]);
    let psi = flux_linkages(ids, iqs, idr, iqr, params);
    let old = &history.state;
    let psi_old = flux_linkages(old[1], old[2], old[3], old[4], params);
    let e_old = &history.winding_voltage;
    let pd = |now: f64, before: f64, e: f64| 2.0 / dt * (now - before) - e;
    let e0 = pd(params.lls * i0, params.lls * old[0], e_old[0]);
    let eds = pd(psi.ds, psi_old.ds, e_old[1]);
    let eqs = pd(psi.qs, psi_old.qs, e_old[2]);
    let edr = pd(psi.dr, psi_old.dr, e_old[3]);
    let eqr = pd(psi.qr, psi_old.qr, e_old[4]);
    let half = dt / 2.0;
    let mut f = kcl_time_domain(theta, x);
    f.push(half * (params.rs * i0 + e0 - v0));
    f.push(half * (params.rs * ids + eds - omega * psi.qs - vd));
    f.push(half * (params.rs * iqs + eqs + omega * psi.ds - vq));
    f.push(half * (params.rr * idr + edr - (omega - wr) * psi.qr));
    f.push(half * (params.rr * iqr + eqr + (omega - wr) * psi.dr));
    f.push(match speed {
        SpeedMode::Free => {
            let accel = pd(wr, old[5], history.acceleration);
            let te = electrical_torque(ids, iqs, idr, iqr, params);
            dt / (2.0 * params.inertia)
                * (params.inertia * accel + params.damping * wr + params.load_torque.value(wr) - te)
        }
        SpeedMode::Pinned(w) => wr - w,
    });
    f
}

fn steady_residual(params: &MotorParams, speed: SpeedMode, omega: f64, x: &[f64]) -> Vec<f64> {
    let (i0r, i0i) = (x[6], x[7]);
    let [ids, iqs, idr, iqr, wr] = [x[8], x[9], x[10], x[11], x[12]];
    let (v0r, v0i, vd, vq) = steady_terminal(x);
    let psi = flux_linkages(ids, iqs, idr, iqr, params);
    let mut f = Vec::with_capacity(STEADY_LOCALS);
    for k in 0..3 {
        let (c, s) = phase_rotation(k);
        f.push(i0r + ids * c - iqs * s);
    }
    for k in 0..3 {
        let (c, s) = phase_rotation(k);
        f.push(i0i - ids * s - iqs * c);
    }
    f.push(params.rs * i0r - omega * params.lls * i0i - v0r);
    f.push(params.rs * i0i + omega * params.lls * i0r - v0i);
    f.push(params.rs * ids - omega * psi.qs - vd);
    f.push(params.rs * iqs + omega * psi.ds - vq);
    f.push(params.rr * idr - (omega - wr) * psi.qr);
    f.push(params.rr * iqr + (omega - wr) * psi.dr);
    f.push(match speed {
        SpeedMode::Free => {
            params.damping * wr + params.load_torque.value(wr) - electrical_torque(ids, iqs, idr, iqr, params)
        }
        SpeedMode::Pinned(w) => wr - w,
    });
    f
}

/// `(cos k*lambda, sin k*lambda)`
fn phase_rotation(k: usize) -> (f64, f64) {
    let a = k as f64 * PHASE_SHIFT;
    (libm::cos(a), libm::sin(a))
}

/// Zero-sequence phasor and positive-sequence dq voltages from terminal phasors.
fn steady_terminal(x: &[f64]) -> (f64, f64, f64, f64) {
    let (mut v0r, mut v0i, mut vd, mut vq) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..3 {
        let (c, s) = phase_rotation(k);
        let (re, im) = (x[k], x[3 + k]);
        v0r += re / 3.0;
        v0i += im / 3.0;
        vd += (re * c - im * s) / 3.0;
        vq -= (re * s + im * c) / 3.0;
    }
    (v0r, v0i, vd, vq)
}

/// Linearized residual row: `F(x) ~= coef . x + constant`.
struct Row {
    coef: Vec<f64>,
    constant: f64,
}

impl Row {
    fn new(n: usize) -> Self {
        Self {
            coef: vec![0.0; n],
            constant: 0.0,
        }
    }

    fn add(&mut self, var: usize, value: f64) -> &mut Self {
        self.coef[var] += value;
        self
    }

    fn add_terms(&mut self, terms: &[(usize, f64)], scale: f64) -> &mut Self {
        for &(v, c) in terms {
            self.coef[v] += scale * c;
        }
        self
    }

    /// Adds `scale * w * psi` linearized about the current point, where `psi` is linear in the locals.
    fn add_product(&mut self, x: &[f64], w_var: usize, psi: &[(usize, f64)], scale: f64) -> &mut Self {
        let psi_k: f64 = psi.iter().map(|&(v, c)| c * x[v]).sum();
        let lin = taylor_linearize_product(x[w_var], psi_k);
        self.coef[w_var] += scale * lin.a_x;
        self.add_terms(psi, scale * lin.a_y);
        self.constant += scale * lin.c;
        self
    }

    fn scale(&mut self, s: f64) -> &mut Self {
        for c in &mut self.coef {
            *c *= s;
        }
        self.constant *= s;
        self
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.constant
    }
}

/// Flux linkages as linear forms over local variable indices `(ids, iqs, idr, iqr)`.
fn flux_forms(p: &MotorParams, [ids, iqs, idr, iqr]: [usize; 4]) -> [[(usize, f64); 2]; 4] {
    [
        [(ids, p.ls()), (idr, p.lm)],
        [(iqs, p.ls()), (iqr, p.lm)],
        [(idr, p.lr()), (ids, p.lm)],
        [(iqr, p.lr()), (iqs, p.lm)],
    ]
}

/// Adds `scale * (T_L(w) + D w - T_e)` linearized about `x`.
fn mechanical_terms(row: &mut Row, p: &MotorParams, x: &[f64], vars: [usize; 5], scale: f64) {
    let [ids, iqs, idr, iqr, wr] = vars;
    let w = x[wr];
    row.add(wr, scale * (p.damping + p.load_torque.derivative(w)));
    row.constant += scale * (p.load_torque.value(w) - p.load_torque.derivative(w) * w);
    let kt = 0.75 * p.lm * p.poles as f64;
    for (a, b, sign) in [(idr, iqs, -1.0), (iqr, ids, 1.0)] {
        let lin = taylor_linearize_product(x[a], x[b]);
        row.add(a, scale * sign * kt * lin.a_x);
        row.add(b, scale * sign * kt * lin.a_y);
        row.constant += scale * sign * kt * lin.c;
    }
}

fn linearize(params: &MotorParams, speed: SpeedMode, ctx: &MotorContext<'_>, x: &[f64]) -> Result<Vec<Row>> {
    let n = ctx.locals();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    let mut rows: Vec<Row> = (0..n).map(|_| Row::new(n)).collect();
    match ctx {
        MotorContext::Steady { omega } => {
            let omega = *omega;
            let (i0r, i0i, ids, iqs, idr, iqr, wr) = (6, 7, 8, 9, 10, 11, 12);
            for k in 0..3 {
                let (c, s) = phase_rotation(k);
                rows[k].add(i0r, 1.0).add(ids, c).add(iqs, -s);
                rows[3 + k].add(i0i, 1.0).add(ids, -s).add(iqs, -c);
                // terminal voltage terms
                rows[6].add(k, -1.0 / 3.0);
                rows[7].add(3 + k, -1.0 / 3.0);
                rows[8].add(k, -c / 3.0).add(3 + k, s / 3.0);
                rows[9].add(k, s / 3.0).add(3 + k, c / 3.0);
            }
            rows[6].add(i0r, params.rs).add(i0i, -omega * params.lls);
            rows[7].add(i0i, params.rs).add(i0r, omega * params.lls);
            let [psi_ds, psi_qs, psi_dr, psi_qr] = flux_forms(params, [ids, iqs, idr, iqr]);
            rows[8].add(ids, params.rs).add_terms(&psi_qs, -omega);
            rows[9].add(iqs, params.rs).add_terms(&psi_ds, omega);
            rows[10]
                .add(idr, params.rr)
                .add_terms(&psi_qr, -omega)
                .add_product(x, wr, &psi_qr, 1.0);
            rows[11]
                .add(iqr, params.rr)
                .add_terms(&psi_dr, omega)
                .add_product(x, wr, &psi_dr, -1.0);
            match speed {
                SpeedMode::Free => mechanical_terms(&mut rows[12], params, x, [ids, iqs, idr, iqr, wr], 1.0),
                SpeedMode::Pinned(w) => {
                    rows[12].add(wr, 1.0).constant = -w;
                }
            }
        }
        MotorContext::Transient {
            omega,
            theta,
            dt,
            history,
        } => {
            let (omega, dt) = (*omega, *dt);
            let (i0, ids, iqs, idr, iqr, wr) = (3, 4, 5, 6, 7, 8);
            kcl_rows(&mut rows, *theta);
            let (c0, cd, cq) = dq_coefficients(*theta);
            for k in 0..3 {
                rows[3].add(k, -c0[k]);
                rows[4].add(k, -cd[k]);
                rows[5].add(k, -cq[k]);
            }
            let old = &history.state;
            let e = &history.winding_voltage;
            // winding derivative terms through the coupled-coil companions
            let zero = companion_coupled_coils(
                &[params.lls],
                dt,
                &CoilHistory {
                    current: vec![old[0]],
                    voltage: vec![e[0]],
                },
            )?;
            let pair_l = [params.ls(), params.lm, params.lm, params.lr()];
            let d_pair = companion_coupled_coils(
                &pair_l,
                dt,
                &CoilHistory {
                    current: vec![old[1], old[3]],
                    voltage: vec![e[1], e[3]],
                },
            )?;
            let q_pair = companion_coupled_coils(
                &pair_l,
                dt,
                &CoilHistory {
                    current: vec![old[2], old[4]],
                    voltage: vec![e[2], e[4]],
                },
            )?;
            let companion = |row: &mut Row, comp: &crate::transient::CompanionStamp, vars: &[usize]| {
                for (v, r) in vars.iter().zip(&comp.transresistance) {
                    row.add(*v, *r);
                }
                row.constant -= comp.v_hist;
            };
            companion(&mut rows[3], &zero[0], &[i0]);
            companion(&mut rows[4], &d_pair[0], &[ids, idr]);
            companion(&mut rows[6], &d_pair[1], &[ids, idr]);
            companion(&mut rows[5], &q_pair[0], &[iqs, iqr]);
            companion(&mut rows[7], &q_pair[1], &[iqs, iqr]);

            let [psi_ds, psi_qs, psi_dr, psi_qr] = flux_forms(params, [ids, iqs, idr, iqr]);
            rows[3].add(i0, params.rs);
            rows[4].add(ids, params.rs).add_terms(&psi_qs, -omega);
            rows[5].add(iqs, params.rs).add_terms(&psi_ds, omega);
            rows[6]
                .add(idr, params.rr)
                .add_terms(&psi_qr, -omega)
                .add_product(x, wr, &psi_qr, 1.0);
            rows[7]
                .add(iqr, params.rr)
                .add_terms(&psi_dr, omega)
                .add_product(x, wr, &psi_dr, -1.0);
            for row in &mut rows[3..8] {
                row.scale(dt / 2.0);
            }
            match speed {
                SpeedMode::Free => {
                    let j = params.inertia;
                    // J * (2/dt (w - w_old) - a_old), then the whole row times dt/(2J)
                    let row = &mut rows[8];
                    row.add(wr, 2.0 * j / dt);
                    row.constant -= j * (2.0 / dt * old[5] + history.acceleration);
                    mechanical_terms(row, params, x, [ids, iqs, idr, iqr, wr], 1.0);
                    row.scale(dt / (2.0 * j));
                }
                SpeedMode::Pinned(w) => {
                    rows[8].add(wr, 1.0).constant = -w;
                }
            }
        }
        MotorContext::Held { theta, state } => {
            kcl_rows(&mut rows, *theta);
            for k in 0..MOTOR_STATES {
                let row = &mut rows[3 + k];
                row.add(3 + k, 1.0);
                row.constant = -state[k];
            }
        }
    }
    Ok(rows)
}

fn kcl_rows(rows: &mut [Row], theta: f64) {
    for (k, row) in rows.iter_mut().take(3).enumerate() {
        let angle = theta - k as f64 * PHASE_SHIFT;
        row.add(3, 1.0).add(4, libm::cos(angle)).add(5, libm::sin(angle));
    }
}

/// Jacobian of the motor residual at `x`, row-major over locals.
pub fn motor_jacobian(params: &MotorParams, speed: SpeedMode, ctx: &MotorContext<'_>, x: &[f64]) -> Result<Vec<f64>> {
    Ok(linearize(params, speed, ctx, x)?
        .into_iter()
        .flat_map(|r| r.coef)
        .collect())
}

/// Linearized motor contribution in circuit form, mapped to global unknowns.
///
/// `map[i]` is the global index of local variable `i` (and of local row `i`);
/// `None` marks a grounded terminal, whose row and column are dropped.
pub fn motor_stamps(
    params: &MotorParams,
    speed: SpeedMode,
    ctx: &MotorContext<'_>,
    x: &[f64],
    map: &[Option<usize>],
) -> Result<Stamp> {
    let rows = linearize(params, speed, ctx, x)?;
    let mut stamp = Stamp::new();
    for (i, row) in rows.iter().enumerate() {
        let r = map[i];
        // b = J x - F(x); the linear form is exact at x, so F(x) = coef . x + constant
        let f = row.eval(x);
        let jx: f64 = row.coef.iter().zip(x).map(|(c, v)| c * v).sum();
        stamp.add_rhs(r, jx - f);
        for (j, &c) in row.coef.iter().enumerate() {
            stamp.add(r, map[j], c);
        }
    }
    Ok(stamp)
}
