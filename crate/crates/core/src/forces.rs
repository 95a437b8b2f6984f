//! Actuator and gravity loads on the wing and fuselage.

use crate::quat::rotation_unchecked;
use nalgebra::{SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vector6 = SVector<f64, 6>;
pub type Matrix4x6 = SMatrix<f64, 4, 6>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForcesError {
    #[error("negative motor command {0}")]
    NegativeCommand(f64),
    #[error("invalid vehicle parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("tail moment balance has no positive root")]
    NoEquilibrium,
}

/// Vehicle constants. Motor commands are in rpm, so `k_f * u^2` is in newtons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub m_w: f64,
    pub m_f: f64,
    pub j_w: Vector3<f64>,
    pub j_f: Vector3<f64>,
    pub k_f: f64,
    /// Tail motor to pivot, fuselage frame.
    pub d_mow: Vector3<f64>,
    /// Fuselage centre of gravity to pivot, fuselage frame.
    pub d_gow: Vector3<f64>,
    pub g: f64,
    /// Fuselage origin to pivot (`p_W - p_F`), fuselage frame.
    pub d_fw: Vector3<f64>,
    /// Unit direction of the tail thrust, fuselage frame.
    pub tail_axis: Vector3<f64>,
    pub actuators: ActuatorLimits,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let d_gow = Vector3::new(0.052, 0.0, -0.171);
        Self {
            m_w: 0.53,
            m_f: 1.17,
            j_w: Vector3::new(0.1677, 0.0052, 0.1634),
            j_f: Vector3::new(0.0191, 0.0161, 0.0343),
            k_f: 1.78e-8,
            d_mow: Vector3::new(0.383, 0.0, -0.167),
            d_gow,
            g: 9.81,
            d_fw: d_gow,
            tail_axis: -Vector3::z(),
            actuators: ActuatorLimits::default(),
        }
    }
}

impl VehicleParams {
    pub fn total_mass(&self) -> f64 {
        self.m_w + self.m_f
    }

    pub fn validate(&self) -> Result<(), ForcesError> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ForcesError::InvalidParam { field, reason: format!("must be positive, got {v}") })
            }
        };
        positive("m_w", self.m_w)?;
        positive("m_f", self.m_f)?;
        positive("k_f", self.k_f)?;
        for i in 0..3 {
            positive("j_w", self.j_w[i])?;
            positive("j_f", self.j_f[i])?;
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(ForcesError::InvalidParam { field: "g", reason: format!("got {}", self.g) });
        }
        if (self.tail_axis.norm() - 1.0).abs() > 1e-9 {
            return Err(ForcesError::InvalidParam { field: "tail_axis", reason: "must be a unit vector".into() });
        }
        Ok(())
    }
}

/// Actuator saturation and first-order lag constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorLimits {
    pub motor_max: f64,
    pub elevon_max: f64,
    pub tau_motor: f64,
    pub tau_servo: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self { motor_max: 25000.0, elevon_max: 30f64.to_radians(), tau_motor: 0.02, tau_servo: 0.05 }
    }
}

impl ActuatorLimits {
    pub fn lower(&self) -> Vector6 {
        Vector6::new(0.0, 0.0, 0.0, 0.0, -self.elevon_max, -self.elevon_max)
    }

    pub fn upper(&self) -> Vector6 {
        let m = self.motor_max;
        Vector6::new(m, m, m, m, self.elevon_max, self.elevon_max)
    }

    /// Clamp to the admissible box; the flag is set if any channel was cut.
    pub fn clamp(&self, u: &Vector6) -> (Vector6, bool) {
        let (lo, hi) = (self.lower(), self.upper());
        let out = Vector6::from_fn(|i, _| u[i].clamp(lo[i], hi[i]));
        (out, out != *u)
    }

    pub fn taus(&self) -> Vector6 {
        let (m, s) = (self.tau_motor, self.tau_servo);
        Vector6::new(m, m, m, m, s, s)
    }
}

/// `u_W = (u1, u2, u3, u4, delta_l, delta_r)` plus the tail motor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlCommand {
    pub u_w: Vector6,
    pub u_tail: f64,
}

/// First-order actuator lag, advanced with the exact zero-order-hold update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorState {
    pub u_w: Vector6,
    pub u_tail: f64,
}

impl ActuatorState {
    pub fn new(cmd: &ControlCommand) -> Self {
        Self { u_w: cmd.u_w, u_tail: cmd.u_tail }
    }

    pub fn advance(&mut self, cmd: &ControlCommand, limits: &ActuatorLimits, dt: f64) {
        let taus = limits.taus();
        for i in 0..6 {
            self.u_w[i] += (cmd.u_w[i] - self.u_w[i]) * lag_factor(dt, taus[i]);
        }
        self.u_tail += (cmd.u_tail - self.u_tail) * lag_factor(dt, limits.tau_motor);
    }

    pub fn as_command(&self) -> ControlCommand {
        ControlCommand { u_w: self.u_w, u_tail: self.u_tail }
    }
}

pub fn lag_factor(dt: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        1.0
    } else {
        1.0 - (-dt / tau).exp()
    }
}

pub fn tail_force(u_tail: f64, params: &VehicleParams) -> Result<Vector3<f64>, ForcesError> {
    if u_tail < 0.0 {
        return Err(ForcesError::NegativeCommand(u_tail));
    }
    Ok(params.tail_axis * (params.k_f * u_tail * u_tail))
}

/// Gravity force on the fuselage in its own frame.
pub fn fuselage_weight(q_f: &Vector4<f64>, params: &VehicleParams) -> Vector3<f64> {
    rotation_unchecked(q_f).transpose() * (Vector3::z() * params.m_f * params.g)
}

/// Fuselage moment about the pivot, fuselage frame:
/// `f_g x d_GOW + F_m x d_MOW`.
pub fn fuselage_moment(q_f: &Vector4<f64>, u_tail: f64, params: &VehicleParams) -> Result<Vector3<f64>, ForcesError> {
    let f_m = tail_force(u_tail, params)?;
    let f_g = fuselage_weight(q_f, params);
    Ok(f_g.cross(&params.d_gow) + f_m.cross(&params.d_mow))
}

/// Non-gravitational fuselage force and the total moment about the fuselage
/// origin, both in the fuselage frame.
pub fn fuselage_wrench(q_f: &Vector4<f64>, u_tail: f64, params: &VehicleParams) -> Result<(Vector3<f64>, Vector3<f64>), ForcesError> {
    let f_m = tail_force(u_tail, params)?;
    let f_g = fuselage_weight(q_f, params);
    let about_pivot = fuselage_moment(q_f, u_tail, params)?;
    Ok((f_m, about_pivot + params.d_fw.cross(&(f_g + f_m))))
}

/// Tail speed zeroing the pitch moment of a level fuselage about the pivot.
/// The pitch moment is `a + b u^2`, so the balance is solved in `u^2`.
pub fn equilibrium_tail_command(params: &VehicleParams) -> Result<f64, ForcesError> {
    let level = Vector4::new(1.0, 0.0, 0.0, 0.0);
    let a = fuselage_moment(&level, 0.0, params)?[1];
    if a == 0.0 {
        return Ok(0.0);
    }
    let b = fuselage_moment(&level, 1.0, &VehicleParams { g: 0.0, ..*params })?[1];
    let u2 = -a / b;
    if b == 0.0 || u2.is_nan() || u2 <= 0.0 || !u2.is_finite() {
        return Err(ForcesError::NoEquilibrium);
    }
    Ok(u2.sqrt())
}

/// Wing force and moment model, both in the wing frame.
pub trait WingAero: Send + Sync {
    fn wrench(&self, u_w: &Vector6, params: &VehicleParams) -> (Vector3<f64>, Vector3<f64>);
}

/// Hover model: rotor thrust along wing -z, differential-thrust roll, and
/// elevon pitch/yaw scaled by prop wash. Coefficients are fitted so the
/// wrench linearizes to a given effectiveness matrix at the trim speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoverAero {
    /// Spanwise motor positions; roll moment is `-sum(y_i k_f u_i^2)`.
    pub arms: [f64; 4],
    /// Pitch moment per rad of collective elevon at trim wash.
    pub pitch_gain: f64,
    /// Yaw moment per rad of differential elevon at trim wash.
    pub yaw_gain: f64,
    pub trim_speed: f64,
}

impl HoverAero {
    /// `g` is expressed per effectiveness unit; `motor_unit` is the rpm size
    /// of one motor unit.
    pub fn fit(g: &Matrix4x6, motor_unit: f64, trim_speed: f64, params: &VehicleParams) -> Self {
        let per_rpm = motor_unit * 2.0 * params.k_f * trim_speed;
        let arms = std::array::from_fn(|i| -g[(0, i)] * params.j_w[0] / per_rpm);
        Self {
            arms,
            pitch_gain: params.j_w[1] * 0.5 * (g[(1, 4)] + g[(1, 5)]),
            yaw_gain: params.j_w[2] * 0.5 * (g[(2, 4)] - g[(2, 5)]),
            trim_speed,
        }
    }

    fn wash(&self, u_w: &Vector6) -> f64 {
        let s: f64 = (0..4).map(|i| u_w[i] * u_w[i]).sum();
        s / (4.0 * self.trim_speed * self.trim_speed)
    }
}

impl WingAero for HoverAero {
    fn wrench(&self, u_w: &Vector6, params: &VehicleParams) -> (Vector3<f64>, Vector3<f64>) {
        let thrusts: [f64; 4] = std::array::from_fn(|i| params.k_f * u_w[i] * u_w[i]);
        let w = self.wash(u_w);
        let roll = -(0..4).map(|i| self.arms[i] * thrusts[i]).sum::<f64>();
        let pitch = self.pitch_gain * (u_w[4] + u_w[5]) * w;
        let yaw = self.yaw_gain * (u_w[4] - u_w[5]) * w;
        (Vector3::new(0.0, 0.0, -thrusts.iter().sum::<f64>()), Vector3::new(roll, pitch, yaw))
    }
}

pub fn wing_actuator_wrench(u_w: &Vector6, params: &VehicleParams, aero: &dyn WingAero) -> (Vector3<f64>, Vector3<f64>) {
    aero.wrench(u_w, params)
}

/// Equal-motor speed holding the whole vehicle with the tail at `u_tail`
/// and both bodies level.
pub fn hover_trim_speed(params: &VehicleParams, u_tail: f64) -> Result<f64, ForcesError> {
    let tail_up = -tail_force(u_tail, params)?[2];
    let need = params.total_mass() * params.g - tail_up;
    if need <= 0.0 {
        return Err(ForcesError::NoEquilibrium);
    }
    Ok((need / (4.0 * params.k_f)).sqrt())
}
