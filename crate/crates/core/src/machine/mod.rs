//! Three-phase squirrel-cage induction motor in the synchronously rotating dq frame.
//!
//! Stator and rotor windings are projected with [`dq_transform`]; the
//! remaining nonlinearity is the speed-voltage product of rotor speed and
//! rotor flux, plus the current products in the torque expression. The same
//! equations back both the phasor steady state (all derivative terms zero)
//! and the trapezoidal transient (derivative terms replaced by companion
//! models), see [`stamps`].

use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, sin, sqrt};

use crate::error::{Error, Result};

pub mod stamps;

pub use stamps::{motor_residual, motor_stamps, MotorContext, MotorHistory, MOTOR_STATES};

/// Phase spacing of the three windings.
pub const PHASE_SHIFT: f64 = 2.0 * PI / 3.0;

/// Load torque as a polynomial in rotor electrical speed, lowest order first.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadTorque {
    pub coefficients: Vec<f64>,
}

impl LoadTorque {
    pub fn constant(value: f64) -> Self {
        Self {
            coefficients: alloc::vec![value],
        }
    }

    pub fn value(&self, wr: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * wr + c)
    }

    pub fn derivative(&self, wr: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * wr + k as f64 * c)
    }
}

/// Machine constants. Resistances in ohm, inductances in henry, SI mechanics.
#[derive(Debug, Clone, PartialEq)]
pub struct MotorParams {
    pub rs: f64,
    pub rr: f64,
    pub lls: f64,
    pub llr: f64,
    pub lm: f64,
    /// Inertia, kg*m^2.
    pub inertia: f64,
    /// Viscous damping, N*m*s.
    pub damping: f64,
    pub poles: u32,
    pub load_torque: LoadTorque,
    /// Nameplate line-line RMS voltage.
    pub v_ll: f64,
    /// Nameplate frequency, Hz.
    pub frequency: f64,
}

impl MotorParams {
    /// 20 hp, 460 V, 60 Hz single-cage machine driving a constant 10 N*m load.
    pub fn reference_20hp() -> Self {
        Self {
            rs: 0.2761,
            rr: 0.1645,
            lls: 2.191e-3,
            llr: 2.191e-3,
            lm: 76.14e-3,
            inertia: 0.1,
            damping: 0.01771,
            poles: 2,
            load_torque: LoadTorque::constant(10.0),
            v_ll: 460.0,
            frequency: 60.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rs", self.rs),
            ("rr", self.rr),
            ("lls", self.lls),
            ("llr", self.llr),
            ("lm", self.lm),
            ("j", self.inertia),
            ("vll", self.v_ll),
            ("f", self.frequency),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams {
                    reason: alloc::format!("motor parameter {name} must be positive, got {v}"),
                });
            }
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidParams {
                reason: "motor damping must be non-negative".to_string(),
            });
        }
        if self.poles == 0 || !self.poles.is_multiple_of(2) {
            return Err(Error::InvalidParams {
                reason: alloc::format!("pole count must be even and positive, got {}", self.poles),
            });
        }
        if self.load_torque.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams {
                reason: "load torque coefficients must be finite".to_string(),
            });
        }
        Ok(())
    }

    /// Stator self inductance `L_ls + L_m`.
    pub fn ls(&self) -> f64 {
        self.lls + self.lm
    }

    /// Rotor self inductance `L_lr + L_m`.
    pub fn lr(&self) -> f64 {
        self.llr + self.lm
    }

    pub fn synchronous_speed(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    /// Peak phase voltage for the nameplate line-line RMS rating.
    pub fn peak_phase_voltage(&self) -> f64 {
        self.v_ll * sqrt(2.0) / sqrt(3.0)
    }
}

/// Whether rotor speed is a free unknown or held at a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SpeedMode {
    #[default]
    Free,
    Pinned(f64),
}

/// Instantaneous three-phase quantity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbcTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AbcTriple {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

/// Zero, direct and quadrature components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZeroDq {
    pub zero: f64,
    pub d: f64,
    pub q: f64,
}

/// Row `k` of the transform: weights of phase `k` on the (0, d, q) axes, before the 2/3 factor.
pub fn phase_weights(theta: f64, k: usize) -> (f64, f64, f64) {
    let angle = theta - k as f64 * PHASE_SHIFT;
    (0.5, cos(angle), sin(angle))
}

/// abc -> 0dq with the 2/3-scaled transform. Rotor quantities pass the slip angle as `theta`.
pub fn dq_transform(f: AbcTriple, theta: f64) -> ZeroDq {
    let mut out = ZeroDq::default();
    for (k, v) in f.as_array().into_iter().enumerate() {
        let (w0, wd, wq) = phase_weights(theta, k);
        out.zero += w0 * v;
        out.d += wd * v;
        out.q += wq * v;
    }
    out.zero *= 2.0 / 3.0;
    out.d *= 2.0 / 3.0;
    out.q *= 2.0 / 3.0;
    out
}

/// 0dq -> abc; phase `k` is `f0 + fd cos(theta - k*lambda) + fq sin(theta - k*lambda)`.
pub fn inverse_dq_transform(f: ZeroDq, theta: f64) -> AbcTriple {
    let phase = |k| {
        let (_, wd, wq) = phase_weights(theta, k);
        f.zero + wd * f.d + wq * f.q
    };
    AbcTriple::new(phase(0), phase(1), phase(2))
}

/// dq currents (A) and rotor speed (electrical rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorState {
    pub i0s: f64,
    pub ids: f64,
    pub iqs: f64,
    pub idr: f64,
    pub iqr: f64,
    pub wr: f64,
    /// Stator frame angle, rad.
    pub theta: f64,
}

impl MotorState {
    /// Internal unknowns in solver order.
    pub fn to_array(&self) -> [f64; MOTOR_STATES] {
        [self.i0s, self.ids, self.iqs, self.idr, self.iqr, self.wr]
    }

    pub fn from_array(x: &[f64], theta: f64) -> Self {
        Self {
            i0s: x[0],
            ids: x[1],
            iqs: x[2],
            idr: x[3],
            iqr: x[4],
            wr: x[5],
            theta,
        }
    }

    pub fn fluxes(&self, params: &MotorParams) -> FluxLinkages {
        flux_linkages(self.ids, self.iqs, self.idr, self.iqr, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FluxLinkages {
    pub ds: f64,
    pub qs: f64,
    pub dr: f64,
    pub qr: f64,
}

pub fn flux_linkages(ids: f64, iqs: f64, idr: f64, iqr: f64, params: &MotorParams) -> FluxLinkages {
    FluxLinkages {
        ds: params.ls() * ids + params.lm * idr,
        qs: params.ls() * iqs + params.lm * iqr,
        dr: params.lr() * idr + params.lm * ids,
        qr: params.lr() * iqr + params.lm * iqs,
    }
}

/// Electromagnetic torque, N*m.
pub fn electrical_torque(ids: f64, iqs: f64, idr: f64, iqr: f64, params: &MotorParams) -> f64 {
    0.75 * params.lm * params.poles as f64 * (idr * iqs - iqr * ids)
}

/// Rotor acceleration `(T_e - T_L(w) - D w) / J`, rad/s^2.
pub fn mechanical_derivative(te: f64, wr: f64, params: &MotorParams) -> f64 {
    (te - params.load_torque.value(wr) - params.damping * wr) / params.inertia
}
