mod common;

use common::load_scenario;
use freewing::estimation::NoiseParams;
use freewing::quat::rotation_columns;
use freewing::sim::config::{Disturbance, Outage, ScenarioConfig, SetpointEntry};
use freewing::sim::log::TrajectoryLog;
use freewing::sim::{run, SimOutput};
use nalgebra::{Vector3, Vector4};

fn hold_at(cfg: &mut ScenarioConfig, p: Vector3<f64>, duration: f64) {
    cfg.scenario.duration = duration;
    cfg.scenario.initial.p_w = p;
    cfg.scenario.setpoints = vec![SetpointEntry { t: 0.0, p_c: p, psi_deg: 0.0 }];
}

fn col(log: &TrajectoryLog, name: &str) -> Vec<f64> {
    log.column(name).unwrap_or_else(|| panic!("no column {name}"))
}

fn index_of(log: &TrajectoryLog, t: f64) -> usize {
    col(log, "t").iter().position(|&x| x >= t - 1e-9).unwrap()
}

fn position_error(out: &SimOutput) -> Vec<f64> {
    let log = &out.trajectory;
    let (x, y, z) = (col(log, "p_w_x"), col(log, "p_w_y"), col(log, "p_w_z"));
    let (ex, ey, ez) = (col(log, "est_p_x"), col(log, "est_p_y"), col(log, "est_p_z"));
    (0..x.len()).map(|k| ((x[k] - ex[k]).powi(2) + (y[k] - ey[k]).powi(2) + (z[k] - ez[k]).powi(2)).sqrt()).collect()
}

fn ideal_hold(noise: NoiseParams, duration: f64) -> SimOutput {
    let mut cfg = load_scenario("hover.cfg");
    hold_at(&mut cfg, Vector3::new(0.0, 0.0, -2.0), duration);
    cfg.noise = noise;
    run(cfg).unwrap()
}

#[test]
fn noiseless_trim_hover_is_stationary_and_indi_at_rest() {
    let out = ideal_hold(NoiseParams::ideal(), 20.0);
    let log = &out.trajectory;
    let k0 = index_of(log, 3.0);
    let mut states = Vec::new();
    for body in ["p_w", "p_f", "v_w", "v_f"] {
        for axis in ["x", "y", "z"] {
            states.push(format!("{body}_{axis}"));
        }
    }
    for body in ["q_w", "q_f", "qdot_w", "qdot_f"] {
        for i in 0..4 {
            states.push(format!("{body}_{i}"));
        }
    }
    for name in &states {
        let c = col(log, name);
        let spread = c[k0..].iter().map(|v| (v - c[k0]).abs()).fold(0.0, f64::max);
        assert!(spread < 1e-6, "{name} moved by {spread:e}");
    }
    for i in 1..=6 {
        let c = col(log, &format!("inc_{i}"));
        let worst = c[k0..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-6, "inc_{i} = {worst:e}");
    }
}

#[test]
fn estimated_attitudes_satisfy_pivot_constraints() {
    let out = ideal_hold(NoiseParams::noiseless(), 10.0);
    let log = &out.trajectory;
    let iw = log.index("est_q_w_0").unwrap();
    let i_f = log.index("est_q_f_0").unwrap();
    let mut worst: f64 = 0.0;
    for row in &log.rows {
        let q = |i: usize| Vector4::new(row[i], row[i + 1], row[i + 2], row[i + 3]);
        let rw = rotation_columns(&q(iw));
        let rf = rotation_columns(&q(i_f));
        worst = worst.max(rw[1].dot(&rf[2]).abs()).max(rw[1].dot(&rf[0]).abs());
    }
    assert!(worst < 1e-3, "{worst:e}");
}

#[test]
fn encoder_dead_zone_cycle_stays_small() {
    let out = ideal_hold(NoiseParams::noiseless(), 30.0);
    let log = &out.trajectory;
    let k0 = index_of(log, 10.0);
    let pitch = col(log, "pitch_w")[k0..].iter().fold(0.0f64, |m, p| m.max(p.to_degrees().abs()));
    let x = col(log, "p_w_x")[k0..].iter().fold(0.0f64, |m, p| m.max(p.abs()));
    assert!(pitch < 0.2, "{pitch}°");
    assert!(x < 0.01, "{x} m");
}

#[test]
fn controller_tick_count_follows_rate() {
    let out = ideal_hold(NoiseParams::ideal(), 2.0);
    assert_eq!(out.summary.controller_ticks, 1000);
    assert_eq!(out.trajectory.len(), 2001);
}

#[test]
fn wing_pitch_torque_pulse_is_rejected() {
    let mut cfg = load_scenario("hover.cfg");
    hold_at(&mut cfg, Vector3::new(0.0, 0.0, -2.0), 10.0);
    cfg.scenario.disturbances =
        vec![Disturbance { t: 4.0, duration: 0.05, wing_moment: Vector3::new(0.0, 0.05, 0.0), wing_force: Vector3::zeros() }];
    let out = run(cfg).unwrap();
    let log = &out.trajectory;
    let pitch: Vec<f64> = col(log, "pitch_w").iter().map(|p| p.to_degrees()).collect();
    let (k_on, k_off) = (index_of(log, 4.0), index_of(log, 4.05));
    let baseline = pitch[..k_on].iter().skip(k_on / 2).fold(0.0f64, |m, p| m.max(p.abs()));
    let peak = pitch[k_on..].iter().fold(0.0f64, |m, p| m.max(p.abs()));
    assert!(peak < 5.0, "peak wing pitch {peak}°");
    let band = baseline.max(0.2) * 1.5;
    let last_out = (k_on..pitch.len()).rev().find(|&k| pitch[k].abs() > band).unwrap_or(k_on);
    let recovery = col(log, "t")[last_out] - col(log, "t")[k_off];
    assert!(recovery < 2.0, "recovery {recovery} s (band {band}°, peak {peak}°)");
}

#[test]
fn lateral_offset_converges_with_bounded_overshoot() {
    let mut cfg = load_scenario("hover.cfg");
    hold_at(&mut cfg, Vector3::new(0.0, 0.0, -2.0), 15.0);
    cfg.scenario.initial.p_w = Vector3::new(0.0, 0.5, -2.0);
    let out = run(cfg).unwrap();
    let y = col(&out.trajectory, "p_w_y");
    let overshoot = y.iter().fold(0.0f64, |m, v| m.max(-v)) / 0.5;
    assert!(overshoot < 0.25, "overshoot {:.1}%", overshoot * 100.0);
    assert!(y.last().unwrap().abs() < 0.05);
}

#[test]
fn fuselage_levels_from_ten_degrees() {
    let mut cfg = load_scenario("hover.cfg");
    hold_at(&mut cfg, Vector3::new(0.0, 0.0, -2.0), 6.0);
    cfg.scenario.initial.kappa_deg = 10.0;
    let out = run(cfg).unwrap();
    let log = &out.trajectory;
    let pitch = col(log, "pitch_f");
    assert!((pitch[0].to_degrees() - 10.0).abs() < 1e-9);
    let k3 = index_of(log, 3.0);
    let worst = pitch[k3..].iter().fold(0.0f64, |m, p| m.max(p.to_degrees().abs()));
    assert!(worst < 1.0, "|theta_F| = {worst}° after 3 s");
}

#[test]
fn noisy_hover_position_estimate_within_two_centimetres() {
    let base = {
        let mut cfg = load_scenario("hover.cfg");
        cfg.scenario.duration = 20.0;
        cfg
    };
    let results: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..10u64)
            .map(|i| {
                let mut cfg = base.clone();
                cfg.scenario.seed = 100 + i;
                s.spawn(move || run(cfg).unwrap().summary.rms_estimation_error)
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (i, rms) in results.iter().enumerate() {
        assert!(*rms < 0.02, "seed {} rms {rms}", 100 + i);
    }
}

#[test]
fn vision_dropout_recovers_within_one_second() {
    let mut cfg = load_scenario("hover.cfg");
    cfg.scenario.duration = 14.0;
    cfg.noise.vision_pos = 0.0;
    cfg.noise.vision_vel = 0.0;
    cfg.scenario.vision_outages = vec![Outage { t: 10.0, duration: 0.3 }];
    let out = run(cfg).unwrap();
    let err = position_error(&out);
    let log = &out.trajectory;
    let (k_out, k_back, k_done) = (index_of(log, 10.0), index_of(log, 10.3), index_of(log, 11.3));
    let before = err[index_of(log, 8.0)..k_out].iter().fold(0.0f64, |m, e| m.max(*e));
    let during = err[k_out..k_back].iter().fold(0.0f64, |m, e| m.max(*e));
    let after = err[k_done..].iter().fold(0.0f64, |m, e| m.max(*e));
    assert!(during > before, "error should grow without vision: {during} vs {before}");
    assert!(after < 1.5 * before.max(0.01), "after {after}, before {before}");
    assert!(out.events.iter().all(|e| e.what != "estimator unhealthy"));
}

#[test]
fn long_vision_gap_flags_estimator() {
    let mut cfg = load_scenario("hover.cfg");
    cfg.scenario.duration = 5.0;
    cfg.scenario.vision_outages = vec![Outage { t: 2.0, duration: 1.0 }];
    let out = run(cfg).unwrap();
    let what: Vec<&str> = out.events.iter().map(|e| e.what.as_str()).collect();
    assert!(what.contains(&"estimator unhealthy") && what.contains(&"estimator healthy"), "{what:?}");
    let healthy = col(&out.trajectory, "healthy");
    assert_eq!(healthy[index_of(&out.trajectory, 2.8)], 0.0);
    assert_eq!(healthy[index_of(&out.trajectory, 4.0)], 1.0);
}
