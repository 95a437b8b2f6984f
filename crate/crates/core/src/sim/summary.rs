//! Scalar figures of merit recomputed from a trajectory log.

use crate::quat::wrap_angle;
use crate::sim::log::TrajectoryLog;
use crate::sim::{Event, SimError};

/// Settling band around the final altitude, m.
pub const SETTLE_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub duration: f64,
    pub rows: usize,
    pub controller_ticks: usize,
    pub max_abs_phi: f64,
    pub max_abs_phi_each: [f64; 7],
    /// Time of the last altitude setpoint change, if any.
    pub step_time: Option<f64>,
    pub step_size: f64,
    pub overshoot_pct: f64,
    /// Time after the step until altitude stays within the band.
    pub settling_time: Option<f64>,
    pub max_roll_diff_deg: f64,
    pub max_yaw_diff_deg: f64,
    pub max_pitch_diff_deg: f64,
    pub rms_position_error: f64,
    pub rms_estimation_error: f64,
    pub saturated_fraction: f64,
    pub events: Vec<String>,
}

fn col(log: &TrajectoryLog, name: &str) -> Result<Vec<f64>, SimError> {
    log.column(name).ok_or_else(|| SimError::Log(format!("missing column `{name}`")))
}

/// Overshoot in percent of the step and settling time for a step from `y0`
/// to `y1` at index `k0`.
pub fn step_metrics(t: &[f64], y: &[f64], k0: usize, y0: f64, y1: f64, band: f64) -> (f64, Option<f64>) {
    let step = y1 - y0;
    let mut peak: f64 = 0.0;
    for &v in &y[k0..] {
        peak = peak.max((v - y1) / step);
    }
    let mut settle = None;
    for k in (k0..y.len()).rev() {
        if (y[k] - y1).abs() > band {
            settle = (k + 1 < y.len()).then(|| t[k + 1] - t[k0]);
            break;
        }
        if k == k0 {
            settle = Some(0.0);
        }
    }
    (100.0 * peak, settle)
}

impl Summary {
    pub fn from_log(log: &TrajectoryLog, events: &[Event]) -> Result<Self, SimError> {
        let t = col(log, "t")?;
        if t.is_empty() {
            return Err(SimError::Log("empty log".into()));
        }
        let mut s = Summary {
            duration: t[t.len() - 1] - t[0],
            rows: t.len(),
            controller_ticks: col(log, "controller_tick")?.iter().filter(|&&x| x != 0.0).count(),
            events: events.iter().map(|e| format!("{:.3}:{}", e.t, e.what)).collect(),
            ..Default::default()
        };
        for i in 0..7 {
            let c = col(log, &format!("phi_{}", i + 1))?;
            s.max_abs_phi_each[i] = c.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        }
        s.max_abs_phi = s.max_abs_phi_each.iter().copied().fold(0.0, f64::max);

        let diff = |a: &str, b: &str| -> Result<f64, SimError> {
            let (x, y) = (col(log, a)?, col(log, b)?);
            Ok(x.iter().zip(&y).fold(0.0, |m: f64, (p, q)| m.max(wrap_angle(p - q).abs())).to_degrees())
        };
        s.max_roll_diff_deg = diff("roll_w", "roll_f")?;
        s.max_yaw_diff_deg = diff("yaw_w", "yaw_f")?;
        s.max_pitch_diff_deg = diff("pitch_w", "pitch_f")?;

        let z = col(log, "p_w_z")?;
        let sp_z = col(log, "sp_z")?;
        if let Some(k0) = (1..sp_z.len()).rev().find(|&k| sp_z[k] != sp_z[k - 1]) {
            let (y0, y1) = (sp_z[k0 - 1], sp_z[k0]);
            let (ov, settle) = step_metrics(&t, &z, k0, y0, y1, SETTLE_BAND);
            s.step_time = Some(t[k0]);
            s.step_size = y1 - y0;
            s.overshoot_pct = ov;
            s.settling_time = settle;
        }

        let mut pos = 0.0;
        let mut est = 0.0;
        for axis in ["x", "y", "z"] {
            let p = col(log, &format!("p_w_{axis}"))?;
            let c = col(log, &format!("sp_{axis}"))?;
            let e = col(log, &format!("est_p_{axis}"))?;
            pos += p.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            est += p.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        let n = t.len() as f64;
        s.rms_position_error = (pos / n).sqrt();
        s.rms_estimation_error = (est / n).sqrt();
        let sat = col(log, "saturated")?;
        s.saturated_fraction = sat.iter().filter(|&&x| x != 0.0).count() as f64 / n;
        Ok(s)
    }

    pub fn to_key_values(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.6}"));
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("duration", format!("{:.6}", self.duration));
        kv("rows", self.rows.to_string());
        kv("controller_ticks", self.controller_ticks.to_string());
        kv("max_abs_phi", format!("{:.6e}", self.max_abs_phi));
        for (i, v) in self.max_abs_phi_each.iter().enumerate() {
            kv(&format!("max_abs_phi_{}", i + 1), format!("{v:.6e}"));
        }
        kv("step_time", opt(self.step_time));
        kv("step_size", format!("{:.6}", self.step_size));
        kv("overshoot_pct", format!("{:.6}", self.overshoot_pct));
        kv("settling_time", opt(self.settling_time));
        kv("max_roll_diff_deg", format!("{:.6}", self.max_roll_diff_deg));
        kv("max_yaw_diff_deg", format!("{:.6}", self.max_yaw_diff_deg));
        kv("max_pitch_diff_deg", format!("{:.6}", self.max_pitch_diff_deg));
        kv("rms_position_error", format!("{:.6}", self.rms_position_error));
        kv("rms_estimation_error", format!("{:.6}", self.rms_estimation_error));
        kv("saturated_fraction", format!("{:.6}", self.saturated_fraction));
        kv("events", self.events.join(";"));
        out
    }

    pub fn to_table(&self) -> String {
        let kv = self.to_key_values();
        let width = kv.lines().filter_map(|l| l.split_once('=')).map(|(k, _)| k.len()).max().unwrap_or(0);
        kv.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}
