//! Scenario configuration files.

use crate::control::{IndiConfig, OuterLoopGains, Setpoint, TailGains};
use crate::estimation::{EstimatorConfig, NoiseParams};
use crate::forces::VehicleParams;
use crate::multibody::BaumgarteGains;
use crate::sim::SimError;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub vehicle: VehicleParams,
    pub scenario: Scenario,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub gains: Gains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mount {
    Free,
    /// Wing held at its initial pose.
    Grounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_controller_rate")]
    pub controller_rate: f64,
    #[serde(default = "default_estimator_rate")]
    pub estimator_rate: f64,
    #[serde(default = "default_vision_rate")]
    pub vision_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub closed_loop: bool,
    #[serde(default = "default_mount")]
    pub mount: Mount,
    #[serde(default)]
    pub baumgarte: BaumgarteGains,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub setpoints: Vec<SetpointEntry>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub vision_outages: Vec<Outage>,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_controller_rate() -> f64 {
    500.0
}
fn default_estimator_rate() -> f64 {
    1000.0
}
fn default_vision_rate() -> f64 {
    20.0
}
fn default_true() -> bool {
    true
}
fn default_mount() -> Mount {
    Mount::Free
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCondition {
    pub p_w: Vector3<f64>,
    pub v_w: Vector3<f64>,
    /// Wing roll, pitch, yaw (ZYX), degrees.
    pub euler_deg: Vector3<f64>,
    /// Wing body rate, rad/s.
    pub omega_w: Vector3<f64>,
    pub kappa_deg: f64,
    pub kappa_rate: f64,
    /// Start actuators at hover trim.
    pub trim: bool,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            p_w: Vector3::zeros(),
            v_w: Vector3::zeros(),
            euler_deg: Vector3::zeros(),
            omega_w: Vector3::zeros(),
            kappa_deg: 0.0,
            kappa_rate: 0.0,
            trim: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointEntry {
    pub t: f64,
    pub p_c: Vector3<f64>,
    #[serde(default)]
    pub psi_deg: f64,
}

/// External wrench on the wing, wing frame, over `[t, t + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub t: f64,
    pub duration: f64,
    #[serde(default)]
    pub wing_moment: Vector3<f64>,
    #[serde(default)]
    pub wing_force: Vector3<f64>,
}

/// Interval `[t, t + duration)` without vision fixes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outage {
    pub t: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Gains {
    pub outer: OuterLoopGains,
    pub tail: TailGains,
    pub indi: IndiConfig,
    pub estimator: EstimatorConfig,
}

fn divides(rate: f64, plant_rate: f64) -> Option<usize> {
    let ratio = plant_rate / rate;
    let n = ratio.round();
    ((ratio - n).abs() < 1e-9 * ratio.max(1.0) && n >= 1.0).then_some(n as usize)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            SimError::Config(msg) => SimError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let s = &self.scenario;
        let bad = |m: String| Err(SimError::Config(m));
        if s.duration.is_nan() || s.duration <= 0.0 {
            return bad(format!("scenario.duration must be positive, got {}", s.duration));
        }
        if s.dt.is_nan() || s.dt <= 0.0 {
            return bad(format!("scenario.dt must be positive, got {}", s.dt));
        }
        let plant = 1.0 / s.dt;
        for (name, rate) in [("controller_rate", s.controller_rate), ("estimator_rate", s.estimator_rate), ("vision_rate", s.vision_rate)] {
            if rate.is_nan() || rate <= 0.0 || divides(rate, plant).is_none() {
                return bad(format!("scenario.{name} = {rate} must divide the plant rate {plant}"));
            }
        }
        if s.estimator_rate != plant {
            return bad("scenario.estimator_rate must equal the plant rate".into());
        }
        if !s.baumgarte.is_hurwitz() {
            return bad("scenario.baumgarte gains must be positive".into());
        }
        if s.setpoints.windows(2).any(|w| w[1].t < w[0].t) {
            return bad("scenario.setpoints must be sorted by time".into());
        }
        self.vehicle.validate().map_err(|e| SimError::Config(format!("vehicle: {e}")))?;
        Ok(())
    }

    pub fn ticks(&self) -> usize {
        (self.scenario.duration / self.scenario.dt).round() as usize
    }

    pub fn controller_divider(&self) -> usize {
        divides(self.scenario.controller_rate, 1.0 / self.scenario.dt).unwrap_or(1)
    }

    pub fn vision_divider(&self) -> usize {
        divides(self.scenario.vision_rate, 1.0 / self.scenario.dt).unwrap_or(1)
    }

    /// Piecewise-constant setpoint at time `t`; before the first entry the
    /// initial position is held.
    pub fn setpoint_at(&self, t: f64) -> Setpoint {
        let init = &self.scenario.initial;
        let mut sp = Setpoint { p_c: init.p_w, psi_c: init.euler_deg[2].to_radians() };
        for e in &self.scenario.setpoints {
            if e.t <= t + 1e-12 {
                sp = Setpoint { p_c: e.p_c, psi_c: e.psi_deg.to_radians() };
            }
        }
        sp
    }

    pub fn vision_available(&self, t: f64) -> bool {
        !self.scenario.vision_outages.iter().any(|o| t >= o.t - 1e-12 && t < o.t + o.duration - 1e-12)
    }

    /// Wing disturbance force and moment active at `t`.
    pub fn disturbance_at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        self.scenario
            .disturbances
            .iter()
            .filter(|d| t >= d.t - 1e-12 && t < d.t + d.duration - 1e-12)
            .fold((Vector3::zeros(), Vector3::zeros()), |(f, m), d| (f + d.wing_force, m + d.wing_moment))
    }
}
