//! INDI wing inner loop, cascaded position/attitude outer loop and the PD
//! tail law.

use crate::estimation::{EstimatorOutput, HighGainGains};
use crate::forces::{lag_factor, ActuatorLimits, Matrix4x6, Vector6, VehicleParams};
use crate::multibody::pseudo_inverse;
use crate::quat::{self, rotation_unchecked, Quat, QuatError};
use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Matrix6x4 = SMatrix<f64, 6, 4>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("effectiveness matrix has rank {0}, expected 4")]
    RankDeficient(usize),
    #[error(transparent)]
    Attitude(#[from] QuatError),
}

/// Actuator-to-(angular acceleration, thrust) map in its own units, with the
/// physical size of one unit per actuator channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivenessMatrix {
    pub g: Matrix4x6,
    pub unit: Vector6,
    g_pinv: Matrix6x4,
}

impl EffectivenessMatrix {
    pub fn new(g: Matrix4x6, unit: Vector6) -> Result<Self, ControlError> {
        let gd = DMatrix::from_fn(4, 6, |i, j| g[(i, j)]);
        let rank = gd.rank(1e-10 * gd.norm());
        if rank != 4 {
            return Err(ControlError::RankDeficient(rank));
        }
        let p = pseudo_inverse(&gd, 1e-10);
        Ok(Self { g, unit, g_pinv: Matrix6x4::from_fn(|i, j| p[(i, j)]) })
    }

    pub fn printed_values() -> Matrix4x6 {
        Matrix4x6::from_row_slice(&[
            -7.5, -15.0, 7.5, 15.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 15.0, 15.0, //
            0.0, 0.0, 0.0, 0.0, 4.0, -4.0, //
            -0.6, -0.6, -0.6, -0.6, 0.0, 0.0,
        ])
    }

    /// Printed matrix with motor units sized so the thrust row holds at the
    /// given trim speed.
    pub fn at_trim(trim_speed: f64, params: &VehicleParams) -> Result<Self, ControlError> {
        let g = Self::printed_values();
        let motor = -g[(3, 0)] / (2.0 * params.k_f * trim_speed);
        Self::new(g, Vector6::new(motor, motor, motor, motor, 1.0, 1.0))
    }

    pub fn motor_unit(&self) -> f64 {
        self.unit[0]
    }

    pub fn pinv(&self) -> &Matrix6x4 {
        &self.g_pinv
    }

    pub fn rank(&self) -> usize {
        let gd = DMatrix::from_fn(4, 6, |i, j| self.g[(i, j)]);
        gd.rank(1e-10 * gd.norm())
    }
}

/// Minimum-norm increment `G+ (nu - (omega_dot, T))`, in effectiveness units.
pub fn indi_increment(g: &EffectivenessMatrix, nu: &Vector4<f64>, omega_dot_meas: &Vector3<f64>, t_meas: f64) -> Vector6 {
    let y = nu - Vector4::new(omega_dot_meas[0], omega_dot_meas[1], omega_dot_meas[2], t_meas);
    g.pinv() * y
}

/// Second-order Butterworth low-pass (bilinear transform with prewarping).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Butterworth2 {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
    primed: bool,
}

impl Butterworth2 {
    pub fn new(cutoff_hz: f64, dt: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz * dt).tan();
        let s2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + s2 * k + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - s2 * k + k * k) * norm],
            x: [0.0; 2],
            y: [0.0; 2],
            primed: false,
        }
    }

    /// Starts the filter at steady state `x0`.
    pub fn reset(&mut self, x0: f64) {
        self.x = [x0; 2];
        self.y = [x0; 2];
        self.primed = true;
    }

    pub fn update(&mut self, x: f64) -> f64 {
        if !self.primed {
            self.reset(x);
        }
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1] - self.a[0] * self.y[0] - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndiConfig {
    pub filter_cutoff_hz: f64,
    pub saturation_warning_s: f64,
    /// Delay the pitch actuator estimate by the pivot-rate observer dynamics.
    pub sync_observer: bool,
}

impl Default for IndiConfig {
    fn default() -> Self {
        Self { filter_cutoff_hz: 15.0, saturation_warning_s: 0.5, sync_observer: true }
    }
}

/// The transfer `ω̂/ω` of the high-gain observer, `b / (s² + a s + b)`,
/// discretized with forward Euler like the observer itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverLag {
    a: f64,
    b: f64,
    y: f64,
    yd: f64,
}

impl ObserverLag {
    pub fn new(gains: &HighGainGains, y0: f64) -> Self {
        Self { a: gains.k_v / gains.eps, b: gains.k_p / (gains.eps * gains.eps), y: y0, yd: 0.0 }
    }

    pub fn update(&mut self, x: f64, dt: f64) -> f64 {
        let ydd = self.b * (x - self.y) - self.a * self.yd;
        self.y += self.yd * dt;
        self.yd += ydd * dt;
        self.y
    }
}

/// Running INDI state. `u_prev` is the last command; the increment is added
/// to the actuator estimate passed through the same filter as the angular
/// acceleration so that both sides of the increment are time-aligned.
#[derive(Debug, Clone)]
pub struct IndiState {
    pub u_prev: Vector6,
    pub omega_dot_filt: Vector3<f64>,
    pub t_meas: f64,
    u_model: Vector6,
    u_filt: Vector6,
    omega_prev: Option<Vector3<f64>>,
    omega_filters: [Butterworth2; 3],
    actuator_filters: [Butterworth2; 6],
    pitch_lag: Option<ObserverLag>,
    saturated_for: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndiOutput {
    pub u_w: Vector6,
    /// Physical increment applied this tick.
    pub increment: Vector6,
    pub saturated: bool,
    pub saturation_warning: bool,
}

#[derive(Debug, Clone)]
pub struct IndiController {
    pub g: EffectivenessMatrix,
    pub limits: ActuatorLimits,
    pub cfg: IndiConfig,
    pub k_f: f64,
    pub dt: f64,
    pub state: IndiState,
}

impl IndiController {
    pub fn new(g: EffectivenessMatrix, limits: ActuatorLimits, cfg: IndiConfig, k_f: f64, dt: f64, u0: Vector6) -> Self {
        let mut omega_filters = [Butterworth2::new(cfg.filter_cutoff_hz, dt); 3];
        let mut actuator_filters = [Butterworth2::new(cfg.filter_cutoff_hz, dt); 6];
        for f in omega_filters.iter_mut() {
            f.reset(0.0);
        }
        for (f, &u) in actuator_filters.iter_mut().zip(u0.iter()) {
            f.reset(u);
        }
        let t0 = -k_f * (0..4).map(|i| u0[i] * u0[i]).sum::<f64>();
        Self {
            g,
            limits,
            cfg,
            k_f,
            dt,
            state: IndiState {
                u_prev: u0,
                omega_dot_filt: Vector3::zeros(),
                t_meas: t0,
                u_model: u0,
                u_filt: u0,
                omega_prev: None,
                omega_filters,
                actuator_filters,
                pitch_lag: None,
                saturated_for: 0.0,
            },
        }
    }

    /// Pitch-row projection of a physical actuator vector, in G units.
    fn pitch_component(&self, u: &Vector6) -> f64 {
        let p = self.g.g.row(1);
        p.dot(&u.component_div(&self.g.unit).transpose()) / p.norm_squared()
    }

    /// Wing pitch rate reaches the controller through the pivot-rate
    /// observer, so the pitch part of the actuator estimate gets the same lag.
    pub fn with_observer_sync(mut self, gains: &HighGainGains) -> Self {
        let s0 = self.pitch_component(&self.state.u_filt);
        self.state.pitch_lag = Some(ObserverLag::new(gains, s0));
        self
    }

    pub fn thrust_of(&self, u: &Vector6) -> f64 {
        -self.k_f * (0..4).map(|i| u[i] * u[i]).sum::<f64>()
    }

    /// One control tick given `nu` and the latest wing rate.
    pub fn step(&mut self, nu: &Vector4<f64>, omega_w: &Vector3<f64>) -> IndiOutput {
        let dt = self.dt;
        let st = &mut self.state;
        let raw = match st.omega_prev {
            Some(prev) => (omega_w - prev) / dt,
            None => Vector3::zeros(),
        };
        st.omega_prev = Some(*omega_w);
        st.omega_dot_filt = Vector3::from_fn(|i, _| st.omega_filters[i].update(raw[i]));

        let taus = self.limits.taus();
        for i in 0..6 {
            st.u_model[i] += (st.u_prev[i] - st.u_model[i]) * lag_factor(dt, taus[i]);
            st.u_filt[i] = st.actuator_filters[i].update(st.u_model[i]);
        }
        let mut u_ref = st.u_filt;
        let t_meas = -self.k_f * (0..4).map(|i| u_ref[i] * u_ref[i]).sum::<f64>();
        self.state.t_meas = t_meas;
        if let Some(mut lag) = self.state.pitch_lag {
            let s = self.pitch_component(&u_ref);
            let shift = lag.update(s, dt) - s;
            let p = self.g.g.row(1).transpose();
            u_ref += (p * shift).component_mul(&self.g.unit);
            self.state.pitch_lag = Some(lag);
        }

        let du = indi_increment(&self.g, nu, &self.state.omega_dot_filt, t_meas).component_mul(&self.g.unit);
        let (u, saturated) = self.limits.clamp(&(u_ref + du));
        let st = &mut self.state;
        st.saturated_for = if saturated { st.saturated_for + dt } else { 0.0 };
        let increment = u - st.u_prev;
        st.u_prev = u;
        IndiOutput { u_w: u, increment, saturated, saturation_warning: st.saturated_for > self.cfg.saturation_warning_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterLoopGains {
    pub kp_pos: Vector3<f64>,
    pub kd_pos: Vector3<f64>,
    pub kp_att: Vector3<f64>,
    pub kd_att: Vector3<f64>,
    /// Largest commanded tilt of the wing thrust axis, rad.
    pub max_tilt: f64,
}

impl Default for OuterLoopGains {
    fn default() -> Self {
        Self {
            kp_pos: Vector3::new(1.2, 1.2, 1.4),
            kd_pos: Vector3::new(1.6, 1.6, 1.4),
            kp_att: Vector3::new(36.0, 36.0, 16.0),
            kd_att: Vector3::new(9.6, 9.6, 6.0),
            max_tilt: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setpoint {
    pub p_c: Vector3<f64>,
    pub psi_c: f64,
}

/// Reference quantities produced alongside `nu`, kept for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterLoopOutput {
    pub nu: Vector4<f64>,
    pub a_des: Vector3<f64>,
    pub q_des: Quat,
}

/// Desired attitude whose -z axis carries `f_des` and whose heading is `psi`.
pub fn attitude_from_thrust(f_des: &Vector3<f64>, psi: f64) -> Quat {
    let b3 = (-f_des).try_normalize(1e-9).unwrap_or_else(Vector3::z);
    let heading = Vector3::new(psi.cos(), psi.sin(), 0.0);
    let b2 = b3.cross(&heading).try_normalize(1e-9).unwrap_or_else(Vector3::y);
    let b1 = b2.cross(&b3);
    let r = Matrix3::from_columns(&[b1, b2, b3]);
    quat_from_rotation(&r)
}

pub fn quat_from_rotation(r: &Matrix3<f64>) -> Quat {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    let uq = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    Quat::new(uq.w, Vector3::new(uq.i, uq.j, uq.k))
}

/// Cascaded PD: position error to desired acceleration, desired force to
/// attitude and thrust, attitude error to angular acceleration.
pub fn outer_loop(
    est: &EstimatorOutput,
    sp: &Setpoint,
    gains: &OuterLoopGains,
    params: &VehicleParams,
    tail_force_inertial: &Vector3<f64>,
) -> OuterLoopOutput {
    let e3 = Vector3::z();
    let a_des = gains.kp_pos.component_mul(&(sp.p_c - est.p_w)) - gains.kd_pos.component_mul(&est.v_w);
    let mut f_des = params.total_mass() * (a_des - params.g * e3) - tail_force_inertial;
    // Limit the tilt of the requested force.
    let vertical = -f_des[2];
    let horiz = Vector3::new(f_des[0], f_des[1], 0.0);
    let max_h = vertical.max(0.0) * gains.max_tilt.tan();
    if horiz.norm() > max_h {
        let scaled = horiz * (max_h / horiz.norm());
        f_des = Vector3::new(scaled[0], scaled[1], f_des[2]);
    }
    let q_des = attitude_from_thrust(&f_des, sp.psi_c);
    let r_w = rotation_unchecked(&est.q_w.to_vec4());
    let thrust = f_des.dot(&(r_w * e3));

    let q_err = est.q_w.conjugate() * q_des;
    let sign = if q_err.eta < 0.0 { -1.0 } else { 1.0 };
    let e = q_err.eps * (2.0 * sign);
    let omega_dot = gains.kp_att.component_mul(&e) - gains.kd_att.component_mul(&est.omega_w);
    OuterLoopOutput { nu: Vector4::new(omega_dot[0], omega_dot[1], omega_dot[2], thrust), a_des, q_des }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailGains {
    pub k_p: f64,
    pub k_d: f64,
}

impl Default for TailGains {
    fn default() -> Self {
        Self { k_p: 5000.0, k_d: 4000.0 }
    }
}

/// `u_eq + k_p theta + k_d theta_dot`, clamped to `[0, u_max]`.
pub fn tail_pd(theta_f: f64, theta_f_dot: f64, gains: &TailGains, u_eq: f64, u_max: f64) -> f64 {
    (u_eq + gains.k_p * theta_f + gains.k_d * theta_f_dot).clamp(0.0, u_max)
}

/// Euler pitch, rejecting attitudes within 1e-3 rad of gimbal lock.
pub fn euler_zyx_pitch(q: &Quat) -> Result<f64, ControlError> {
    let pitch = quat::euler_zyx(q)[1];
    if pitch.abs() >= std::f64::consts::FRAC_PI_2 - 1e-3 {
        return Err(QuatError::GimbalLock { pitch_deg: pitch.to_degrees() }.into());
    }
    Ok(pitch)
}
