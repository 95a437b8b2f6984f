//! Passive fuselage pendulum under a held wing, compared with the
//! single-coordinate equation `J theta'' = m g (d_x cos theta + d_z sin theta)`.

use crate::forces::{ActuatorState, ControlCommand, HoverAero, VehicleParams};
use crate::multibody::{BaumgarteGains, MultibodyState, WingMount};
use crate::quat::{self, Quat};
use crate::sim::{rk4_step, Plant, SimError};
use nalgebra::Vector3;

/// Pitch inertia of the fuselage about the pivot.
pub fn pivot_inertia(params: &VehicleParams) -> f64 {
    let d = params.d_fw;
    params.j_f[1] + params.m_f * (d[0] * d[0] + d[2] * d[2])
}

/// Gravity pitch moment about the pivot at fuselage pitch `theta`.
pub fn gravity_pitch_moment(params: &VehicleParams, theta: f64) -> f64 {
    let d = params.d_gow;
    params.m_f * params.g * (d[0] * theta.cos() + d[2] * theta.sin())
}

/// RK4 solution of the single-coordinate pendulum, sampled every step.
pub fn pendulum_oracle(params: &VehicleParams, theta0: f64, omega0: f64, duration: f64, dt: f64) -> Vec<f64> {
    let j = pivot_inertia(params);
    let f = |th: f64, om: f64| (om, gravity_pitch_moment(params, th) / j);
    let n = (duration / dt).round() as usize;
    let (mut th, mut om) = (theta0, omega0);
    let mut out = Vec::with_capacity(n + 1);
    out.push(th);
    for _ in 0..n {
        let (a1, b1) = f(th, om);
        let (a2, b2) = f(th + 0.5 * dt * a1, om + 0.5 * dt * b1);
        let (a3, b3) = f(th + 0.5 * dt * a2, om + 0.5 * dt * b2);
        let (a4, b4) = f(th + dt * a3, om + dt * b3);
        th += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        om += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        out.push(th);
    }
    out
}

/// Pivot-angle history of the full two-body model with the wing held level.
pub fn pendulum_multibody(
    params: &VehicleParams,
    gains: &BaumgarteGains,
    theta0: f64,
    duration: f64,
    dt: f64,
) -> Result<Vec<f64>, SimError> {
    let s0 = MultibodyState::assemble(Vector3::zeros(), Quat::identity(), Vector3::zeros(), Vector3::zeros(), theta0, 0.0, &params.d_fw);
    let plant = Plant {
        params: *params,
        gains: *gains,
        aero: Box::new(HoverAero { arms: [0.0; 4], pitch_gain: 0.0, yaw_gain: 0.0, trim_speed: 1.0 }),
        mount: WingMount::Grounded { p: s0.p_w, q: s0.q_w },
    };
    let act = ActuatorState::new(&ControlCommand::default());
    let none = (Vector3::zeros(), Vector3::zeros());
    let n = (duration / dt).round() as usize;
    let mut s = s0;
    let mut out = Vec::with_capacity(n + 1);
    out.push(s.kappa());
    for _ in 0..n {
        s = rk4_step(&s, None, dt, |x| plant.accel(x, &act, &none))?;
        out.push(quat::relative_pitch(&s.wing_quat().normalize(), &s.fuselage_quat().normalize()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumReport {
    pub theta0: f64,
    pub duration: f64,
    pub max_deviation: f64,
    pub final_multibody: f64,
    pub final_oracle: f64,
}

pub fn pendulum_validate(params: &VehicleParams, theta0: f64, duration: f64, dt: f64) -> Result<PendulumReport, SimError> {
    let mb = pendulum_multibody(params, &BaumgarteGains::default(), theta0, duration, dt)?;
    let oracle = pendulum_oracle(params, theta0, 0.0, duration, dt);
    let max_deviation = mb.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(PendulumReport { theta0, duration, max_deviation, final_multibody: *mb.last().unwrap(), final_oracle: *oracle.last().unwrap() })
}
