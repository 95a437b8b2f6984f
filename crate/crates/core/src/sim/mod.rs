//! Fixed-step closed-loop scenario engine.

pub mod cli;
pub mod config;
pub mod log;
pub mod pendulum;
pub mod summary;

use crate::control::{euler_zyx_pitch, outer_loop, tail_pd, EffectivenessMatrix, IndiController, OuterLoopOutput, Setpoint};
use crate::estimation::{default_mag_ref, Estimator, EstimatorInit, EstimatorOutput, SensorFrameSet, SensorModel, SensorTruth};
use crate::forces::{
    equilibrium_tail_command, fuselage_wrench, hover_trim_speed, tail_force, ActuatorState, ControlCommand, HoverAero, Vector6,
    VehicleParams, WingAero,
};
use crate::multibody::{
    constrained_accel_mounted, constraint_residuals, BaumgarteGains, GeneralizedForces, MultibodyError, MultibodyState, Vector14, WingMount,
};
use crate::quat::{self, rotation_unchecked};
use config::{Mount, ScenarioConfig};
use log::{vector_columns, TrajectoryLog};
use nalgebra::{Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use summary::Summary;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("plant diverged at t = {t:.6} s: {reason}")]
    Divergence { t: f64, reason: String, last_state: Box<MultibodyState> },
    #[error("log error: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Divergence { .. } => 3,
            _ => 2,
        }
    }
}

/// Plant model: vehicle, wing aerodynamics, constraint stabilization, mount.
pub struct Plant {
    pub params: VehicleParams,
    pub gains: BaumgarteGains,
    pub aero: Box<dyn WingAero>,
    pub mount: WingMount,
}

impl Plant {
    pub fn generalized_forces(
        &self,
        s: &MultibodyState,
        act: &ActuatorState,
        disturbance: &(Vector3<f64>, Vector3<f64>),
    ) -> GeneralizedForces {
        let (f_b, m_w) = self.aero.wrench(&act.u_w, &self.params);
        let (f_f, m_f) = fuselage_wrench(&s.q_f, act.u_tail.max(0.0), &self.params).expect("non-negative tail command");
        GeneralizedForces { f_b: f_b + disturbance.0, m_w: m_w + disturbance.1, f_f, m_f }
    }

    pub fn accel(
        &self,
        s: &MultibodyState,
        act: &ActuatorState,
        disturbance: &(Vector3<f64>, Vector3<f64>),
    ) -> Result<Vector14, MultibodyError> {
        let gf = self.generalized_forces(s, act, disturbance);
        constrained_accel_mounted(s, &gf, &self.params, &self.gains, &self.mount)
    }
}

fn divergence(reason: impl ToString, state: &MultibodyState) -> SimError {
    SimError::Divergence { t: f64::NAN, reason: reason.to_string(), last_state: Box::new(*state) }
}

/// Classical RK4 on `x' = v`, `v' = accel(x, v)`. `k1` may supply the
/// acceleration already evaluated at `state`.
pub fn rk4_step<F>(state: &MultibodyState, k1: Option<Vector14>, dt: f64, mut accel: F) -> Result<MultibodyState, SimError>
where
    F: FnMut(&MultibodyState) -> Result<Vector14, MultibodyError>,
{
    let x0 = state.positions();
    let v0 = state.velocities();
    let mut eval = |x: &Vector14, v: &Vector14| -> Result<Vector14, SimError> {
        accel(&MultibodyState::from_vectors(x, v)).map_err(|e| divergence(e, state))
    };
    let a1 = match k1 {
        Some(a) => a,
        None => eval(&x0, &v0)?,
    };
    let h = 0.5 * dt;
    let (x2, v2) = (x0 + v0 * h, v0 + a1 * h);
    let a2 = eval(&x2, &v2)?;
    let (x3, v3) = (x0 + v2 * h, v0 + a2 * h);
    let a3 = eval(&x3, &v3)?;
    let (x4, v4) = (x0 + v3 * dt, v0 + a3 * dt);
    let a4 = eval(&x4, &v4)?;
    let x = x0 + (v0 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
    let v = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    let next = MultibodyState::from_vectors(&x, &v);
    if !next.is_finite() {
        return Err(divergence("non-finite state", state));
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub what: String,
}

pub struct SimOutput {
    pub trajectory: TrajectoryLog,
    pub sensors: TrajectoryLog,
    pub summary: Summary,
    pub events: Vec<Event>,
}

pub fn trajectory_columns() -> Vec<String> {
    let xyz = ["x", "y", "z"];
    let q = ["0", "1", "2", "3"];
    let mut c = vec!["t".to_string()];
    for (p, s) in [
        ("p_w", &xyz[..]),
        ("q_w", &q[..]),
        ("p_f", &xyz[..]),
        ("q_f", &q[..]),
        ("v_w", &xyz[..]),
        ("qdot_w", &q[..]),
        ("v_f", &xyz[..]),
        ("qdot_f", &q[..]),
        ("omega_w", &xyz[..]),
        ("omega_f", &xyz[..]),
        ("est_p", &xyz[..]),
        ("est_v", &xyz[..]),
        ("est_q_w", &q[..]),
        ("est_omega", &xyz[..]),
        ("est_q_f", &q[..]),
    ] {
        c.extend(vector_columns(p, s));
    }
    for name in ["kappa_true", "kappa_meas", "kappa_hat", "kappa_rate_true", "kappa_rate_hat"] {
        c.push(name.into());
    }
    c.extend(vector_columns("sp", &["x", "y", "z", "psi"]));
    c.extend(vector_columns("nu", &["roll", "pitch", "yaw", "thrust"]));
    c.extend(["u1", "u2", "u3", "u4", "delta_l", "delta_r", "u_tail"].map(String::from));
    c.extend(vector_columns("inc", &["1", "2", "3", "4", "5", "6"]));
    c.extend(["controller_tick", "saturated", "saturation_warning", "healthy"].map(String::from));
    c.extend(vector_columns("phi", &["1", "2", "3", "4", "5", "6", "7"]));
    c.extend(["roll_w", "pitch_w", "yaw_w", "roll_f", "pitch_f", "yaw_f"].map(String::from));
    c
}

pub fn sensor_columns() -> Vec<String> {
    let mut c = vec!["t".to_string()];
    c.extend(vector_columns("gyro", &["x", "y", "z"]));
    c.extend(vector_columns("accel", &["x", "y", "z"]));
    c.extend(vector_columns("mag", &["x", "y", "z"]));
    c.push("encoder".into());
    c.push("vision".into());
    c.extend(vector_columns("vision_p", &["x", "y", "z"]));
    c.extend(vector_columns("vision_v", &["x", "y", "z"]));
    c.push("kappa_true".into());
    c.push("kappa_rate_true".into());
    c
}

fn sensor_row(s: &SensorFrameSet, kappa: f64, kappa_rate: f64) -> Vec<f64> {
    let mut r = Vec::with_capacity(20);
    r.push(s.t);
    r.extend(s.omega_gyro_f.iter());
    r.extend(s.a_acc_f.iter());
    r.extend(s.e_mag.iter());
    r.push(s.encoder.kappa_q);
    match s.vision {
        Some(v) => {
            r.push(1.0);
            r.extend(v.p.iter());
            r.extend(v.v.iter());
        }
        None => r.extend([0.0; 7]),
    }
    r.push(kappa);
    r.push(kappa_rate);
    r
}

/// Pivot rate: fuselage pitch rate relative to the wing.
pub fn kappa_rate(s: &MultibodyState) -> f64 {
    let qk = pitch_quat_of(s);
    let r_k = rotation_unchecked(&qk.to_vec4());
    (s.omega_f() - r_k.transpose() * s.omega_w())[1]
}

fn pitch_quat_of(s: &MultibodyState) -> quat::Quat {
    quat::pitch_quat(s.kappa())
}

/// Mutable run state; [`Simulation::run`] drives it to completion.
pub struct Simulation {
    pub cfg: ScenarioConfig,
    pub plant: Plant,
    pub state: MultibodyState,
    pub actuators: ActuatorState,
    pub command: ControlCommand,
    pub u_eq: f64,
    pub u_trim: f64,
    sensors: SensorModel,
    estimator: Estimator,
    controller: IndiController,
    rng: ChaCha8Rng,
    last_outer: Option<OuterLoopOutput>,
    last_increment: Vector6,
    last_saturated: bool,
    last_warning: bool,
    controller_ticks: usize,
    events: Vec<Event>,
    was_healthy: bool,
    was_warning: bool,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let params = cfg.vehicle;
        let cerr = |e: &dyn std::fmt::Display| SimError::Config(e.to_string());
        let u_eq = equilibrium_tail_command(&params).map_err(|e| cerr(&e))?;
        let u_trim = hover_trim_speed(&params, u_eq).map_err(|e| cerr(&e))?;
        let g = EffectivenessMatrix::at_trim(u_trim, &params).map_err(|e| cerr(&e))?;
        let aero = HoverAero::fit(&g.g, g.motor_unit(), u_trim, &params);

        let init = &cfg.scenario.initial;
        let e = init.euler_deg.map(f64::to_radians);
        let q_w = quat::from_euler_zyx(e[0], e[1], e[2]);
        let state =
            MultibodyState::assemble(init.p_w, q_w, init.v_w, init.omega_w, init.kappa_deg.to_radians(), init.kappa_rate, &params.d_fw);
        let mount = match cfg.scenario.mount {
            Mount::Free => WingMount::Free,
            Mount::Grounded => WingMount::Grounded { p: state.p_w, q: state.q_w },
        };
        let command = if init.trim {
            ControlCommand { u_w: Vector6::new(u_trim, u_trim, u_trim, u_trim, 0.0, 0.0), u_tail: u_eq }
        } else {
            ControlCommand::default()
        };
        let dt = cfg.scenario.dt;
        let mag_ref = default_mag_ref();
        let estimator = Estimator::new(
            cfg.gains.estimator,
            params.d_fw,
            params.g,
            mag_ref,
            dt,
            EstimatorInit { p_w: init.p_w, v_w: init.v_w, q_w, kappa: init.kappa_deg.to_radians() },
        );
        let mut controller =
            IndiController::new(g, params.actuators, cfg.gains.indi, params.k_f, 1.0 / cfg.scenario.controller_rate, command.u_w);
        if cfg.gains.indi.sync_observer {
            controller = controller.with_observer_sync(&cfg.gains.estimator.high_gain);
        }
        Ok(Self {
            plant: Plant { params, gains: cfg.scenario.baumgarte, aero: Box::new(aero), mount },
            state,
            actuators: ActuatorState::new(&command),
            command,
            u_eq,
            u_trim,
            sensors: SensorModel { noise: cfg.noise, g: params.g, mag_ref },
            estimator,
            controller,
            rng: ChaCha8Rng::seed_from_u64(cfg.scenario.seed),
            last_outer: None,
            last_increment: Vector6::zeros(),
            last_saturated: false,
            last_warning: false,
            controller_ticks: 0,
            events: Vec::new(),
            was_healthy: true,
            was_warning: false,
            cfg,
        })
    }

    pub fn with_seed(mut cfg: ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        cfg.scenario.seed = seed;
        Self::new(cfg)
    }

    pub fn controller_ticks(&self) -> usize {
        self.controller_ticks
    }

    fn event(&mut self, t: f64, what: impl Into<String>) {
        self.events.push(Event { t, what: what.into() });
    }

    fn control(&mut self, est: &EstimatorOutput, gyro: &Vector3<f64>, sp: &Setpoint, t: f64) {
        self.controller_ticks += 1;
        let params = self.plant.params;
        let theta = match euler_zyx_pitch(&est.q_f) {
            Ok(th) => th,
            Err(e) => {
                self.event(t, format!("tail: {e}"));
                quat::euler_zyx(&est.q_f)[1]
            }
        };
        let u_tail = tail_pd(theta, gyro[1], &self.cfg.gains.tail, self.u_eq, params.actuators.motor_max);
        let tail_i = rotation_unchecked(&est.q_f.to_vec4()) * tail_force(u_tail, &params).unwrap_or_default();
        let outer = outer_loop(est, sp, &self.cfg.gains.outer, &params, &tail_i);
        let out = self.controller.step(&outer.nu, &est.omega_w);
        self.command = ControlCommand { u_w: out.u_w, u_tail };
        self.last_outer = Some(outer);
        self.last_increment = out.increment;
        self.last_saturated = out.saturated;
        self.last_warning = out.saturation_warning;
        if out.saturation_warning && !self.was_warning {
            self.event(t, "persistent actuator saturation");
        }
        self.was_warning = out.saturation_warning;
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        t: f64,
        est: &EstimatorOutput,
        sens: &SensorFrameSet,
        kappa_true: f64,
        kappa_rate_true: f64,
        sp: &Setpoint,
        ticked: bool,
    ) -> Vec<f64> {
        let s = &self.state;
        let mut r = Vec::with_capacity(128);
        r.push(t);
        r.extend(s.positions().iter());
        r.extend(s.velocities().iter());
        r.extend(s.omega_w().iter());
        r.extend(s.omega_f().iter());
        r.extend(est.p_w.iter());
        r.extend(est.v_w.iter());
        r.extend(est.q_w.to_vec4().iter());
        r.extend(est.omega_w.iter());
        r.extend(est.q_f.to_vec4().iter());
        r.extend([kappa_true, sens.encoder.kappa_q, est.kappa_hat, kappa_rate_true, est.kappa_rate_hat]);
        r.extend(sp.p_c.iter());
        r.push(sp.psi_c);
        r.extend(self.last_outer.map_or(Vector4::zeros(), |o| o.nu).iter());
        r.extend(self.command.u_w.iter());
        r.push(self.command.u_tail);
        r.extend(self.last_increment.iter());
        r.push(ticked as u8 as f64);
        r.push(self.last_saturated as u8 as f64);
        r.push(self.last_warning as u8 as f64);
        r.push(est.healthy as u8 as f64);
        r.extend(constraint_residuals(s, &self.plant.params.d_fw).phi.iter());
        r.extend(quat::euler_zyx(&s.wing_quat().normalize()).iter());
        r.extend(quat::euler_zyx(&s.fuselage_quat().normalize()).iter());
        r
    }

    pub fn run(mut self) -> Result<SimOutput, SimError> {
        let n = self.cfg.ticks();
        let dt = self.cfg.scenario.dt;
        let ctrl_div = self.cfg.controller_divider();
        let vis_div = self.cfg.vision_divider();
        let mut traj = TrajectoryLog::new(trajectory_columns());
        let mut sens_log = TrajectoryLog::new(sensor_columns());
        traj.rows.reserve(n + 1);
        sens_log.rows.reserve(n + 1);

        for k in 0..=n {
            let t = k as f64 * dt;
            let dist = self.cfg.disturbance_at(t);
            let acc = self.plant.accel(&self.state, &self.actuators, &dist).map_err(|e| SimError::Divergence {
                t,
                reason: e.to_string(),
                last_state: Box::new(self.state),
            })?;

            let kappa = self.state.kappa();
            let kappa_dot = kappa_rate(&self.state);
            let truth = SensorTruth {
                t,
                q_f: self.state.fuselage_quat().normalize(),
                omega_f: self.state.omega_f(),
                accel_f_inertial: acc.fixed_rows::<3>(7).into(),
                kappa,
                p_w: self.state.p_w,
                v_w: self.state.v_w,
            };
            let frame = self.sensors.sample(&truth, k % vis_div == 0 && self.cfg.vision_available(t), &mut self.rng);
            let est = self.estimator.update(&frame);
            if est.healthy != self.was_healthy {
                self.event(t, if est.healthy { "estimator healthy" } else { "estimator unhealthy" });
                self.was_healthy = est.healthy;
            }
            let sp = self.cfg.setpoint_at(t);
            let ticked = self.cfg.scenario.closed_loop && k < n && k % ctrl_div == 0;
            if ticked {
                self.control(&est, &frame.omega_gyro_f, &sp, t);
            }
            traj.push(self.row(t, &est, &frame, kappa, kappa_dot, &sp, ticked));
            sens_log.push(sensor_row(&frame, kappa, kappa_dot));
            if k == n {
                break;
            }

            let act = self.actuators;
            let plant = &self.plant;
            self.state = rk4_step(&self.state, Some(acc), dt, |s| plant.accel(s, &act, &dist)).map_err(|e| match e {
                SimError::Divergence { reason, last_state, .. } => SimError::Divergence { t, reason, last_state },
                other => other,
            })?;
            let limits = self.plant.params.actuators;
            self.actuators.advance(&self.command, &limits, dt);
        }
        let summary = Summary::from_log(&traj, &self.events)?;
        Ok(SimOutput { trajectory: traj, sensors: sens_log, summary, events: self.events })
    }
}

pub fn run(cfg: ScenarioConfig) -> Result<SimOutput, SimError> {
    Simulation::new(cfg)?.run()
}
