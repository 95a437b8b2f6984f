//! Fuselage sensor emulation, pivot-rate observer, wing-frame transforms and
//! a complementary wing-state estimator.

use crate::quat::{self, pitch_quat, rotation_unchecked, Quat};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Encoder resolution, 0.09 degrees.
pub const ENCODER_STEP: f64 = 0.09 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderReading {
    pub counts: i64,
    pub kappa_q: f64,
    pub t: f64,
}

/// Round to the nearest encoder step, ties to even.
pub fn quantize_encoder(kappa: f64, t: f64) -> EncoderReading {
    quantize_with_step(kappa, t, ENCODER_STEP)
}

/// A zero step models an ideal encoder.
pub fn quantize_with_step(kappa: f64, t: f64, step: f64) -> EncoderReading {
    if step == 0.0 {
        return EncoderReading { counts: 0, kappa_q: kappa, t };
    }
    let counts = (kappa / step).round_ties_even() as i64;
    EncoderReading { counts, kappa_q: counts as f64 * step, t }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HighGainGains {
    pub k_p: f64,
    pub k_v: f64,
    pub eps: f64,
}

impl Default for HighGainGains {
    fn default() -> Self {
        Self { k_p: 1.0, k_v: 1.3, eps: 0.05 }
    }
}

impl HighGainGains {
    /// Damping of `s^2 + k_v s + k_p`.
    pub fn damping(&self) -> f64 {
        self.k_v / (2.0 * self.k_p.sqrt())
    }

    pub fn is_hurwitz(&self) -> bool {
        self.k_p > 0.0 && self.k_v > 0.0 && self.eps > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HighGainState {
    pub kappa_hat: f64,
    pub omega_kappa_hat: f64,
}

/// Forward-Euler step of
/// `kappa' = omega + (k_v/eps) e`, `omega' = (k_p/eps^2) e`, `e = kappa_meas - kappa`.
pub fn high_gain_step(hgs: HighGainState, kappa_meas: f64, dt: f64, gains: &HighGainGains) -> HighGainState {
    let e = kappa_meas - hgs.kappa_hat;
    HighGainState {
        kappa_hat: hgs.kappa_hat + dt * (hgs.omega_kappa_hat + gains.k_v / gains.eps * e),
        omega_kappa_hat: hgs.omega_kappa_hat + dt * gains.k_p / (gains.eps * gains.eps) * e,
    }
}

/// Wing rate from the fuselage gyro: `R(q_kappa) (omega_F - (0, kappa_rate, 0))`.
pub fn gyro_to_wing(omega_gyro_f: &Vector3<f64>, omega_kappa_hat: f64, kappa_hat: f64) -> Vector3<f64> {
    rotation_unchecked(&pitch_quat(kappa_hat).to_vec4()) * (omega_gyro_f - Vector3::new(0.0, omega_kappa_hat, 0.0))
}

/// Specific force at the pivot from the fuselage accelerometer.
pub fn accel_to_wing(
    a_acc_f: &Vector3<f64>,
    omega_f: &Vector3<f64>,
    omega_dot_f: &Vector3<f64>,
    d_fw: &Vector3<f64>,
    kappa_hat: f64,
) -> Vector3<f64> {
    let a = a_acc_f + omega_dot_f.cross(d_fw) + omega_f.cross(&omega_f.cross(d_fw));
    rotation_unchecked(&pitch_quat(kappa_hat).to_vec4()) * a
}

pub fn mag_to_wing(e_mag: &Vector3<f64>, kappa_hat: f64) -> Vector3<f64> {
    rotation_unchecked(&pitch_quat(kappa_hat).to_vec4()) * e_mag
}

pub fn fuselage_quat(q_w: &Quat, kappa_hat: f64) -> Quat {
    (*q_w * pitch_quat(kappa_hat)).normalize()
}

/// Single-pole low-pass on a 3-vector, matched-pole discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass3 {
    alpha: f64,
    pub value: Vector3<f64>,
    primed: bool,
}

impl LowPass3 {
    pub fn new(cutoff_hz: f64, dt: f64) -> Self {
        let alpha = 1.0 - (-2.0 * std::f64::consts::PI * cutoff_hz * dt).exp();
        Self { alpha, value: Vector3::zeros(), primed: false }
    }

    pub fn update(&mut self, x: &Vector3<f64>) -> Vector3<f64> {
        if self.primed {
            self.value += (x - self.value) * self.alpha;
        } else {
            self.value = *x;
            self.primed = true;
        }
        self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisionFix {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrameSet {
    pub t: f64,
    pub omega_gyro_f: Vector3<f64>,
    pub a_acc_f: Vector3<f64>,
    pub e_mag: Vector3<f64>,
    pub encoder: EncoderReading,
    pub vision: Option<VisionFix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    pub gyro: f64,
    pub accel: f64,
    pub mag: f64,
    pub vision_pos: f64,
    pub vision_vel: f64,
    pub encoder_step: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { gyro: 0.01, accel: 0.1, mag: 0.0, vision_pos: 0.005, vision_vel: 0.02, encoder_step: ENCODER_STEP }
    }
}

impl NoiseParams {
    /// No random noise; the encoder keeps its quantization.
    pub fn noiseless() -> Self {
        Self { gyro: 0.0, accel: 0.0, mag: 0.0, vision_pos: 0.0, vision_vel: 0.0, ..Default::default() }
    }

    /// No noise and an ideal encoder.
    pub fn ideal() -> Self {
        Self { encoder_step: 0.0, ..Self::noiseless() }
    }
}

/// Ground truth needed to synthesize one sensor sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorTruth {
    pub t: f64,
    pub q_f: Quat,
    pub omega_f: Vector3<f64>,
    /// Inertial acceleration of the IMU point (fuselage origin).
    pub accel_f_inertial: Vector3<f64>,
    pub kappa: f64,
    pub p_w: Vector3<f64>,
    pub v_w: Vector3<f64>,
}

/// Fuselage IMU, pivot encoder and external vision emulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub noise: NoiseParams,
    pub g: f64,
    pub mag_ref: Vector3<f64>,
}

fn gauss3<R: Rng>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

impl SensorModel {
    pub fn sample<R: Rng>(&self, truth: &SensorTruth, with_vision: bool, rng: &mut R) -> SensorFrameSet {
        let r_t = rotation_unchecked(&truth.q_f.to_vec4()).transpose();
        let specific = r_t * (truth.accel_f_inertial - Vector3::z() * self.g);
        let omega_gyro_f = truth.omega_f + gauss3(rng, self.noise.gyro);
        let a_acc_f = specific + gauss3(rng, self.noise.accel);
        let e_mag = r_t * self.mag_ref + gauss3(rng, self.noise.mag);
        let encoder = quantize_with_step(truth.kappa, truth.t, self.noise.encoder_step);
        let vision = with_vision
            .then(|| VisionFix { p: truth.p_w + gauss3(rng, self.noise.vision_pos), v: truth.v_w + gauss3(rng, self.noise.vision_vel) });
        SensorFrameSet { t: truth.t, omega_gyro_f, a_acc_f, e_mag, encoder, vision }
    }
}

pub fn default_mag_ref() -> Vector3<f64> {
    let inc = 60f64.to_radians();
    Vector3::new(inc.cos(), 0.0, inc.sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub high_gain: HighGainGains,
    /// Tilt correction from the vision velocity innovation, 1/s².
    pub k_tilt: f64,
    pub k_mag: f64,
    pub vision_pos_gain: f64,
    pub vision_vel_gain: f64,
    pub omega_dot_cutoff_hz: f64,
    pub gap_limit: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            high_gain: HighGainGains::default(),
            k_tilt: 9.0,
            k_mag: 2.5,
            vision_pos_gain: 0.3,
            vision_vel_gain: 0.3,
            omega_dot_cutoff_hz: 50.0,
            gap_limit: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOutput {
    pub t: f64,
    pub p_w: Vector3<f64>,
    pub v_w: Vector3<f64>,
    pub q_w: Quat,
    pub omega_w: Vector3<f64>,
    pub q_f: Quat,
    pub kappa_hat: f64,
    pub kappa_rate_hat: f64,
    /// Specific force at the pivot, wing frame.
    pub f_w: Vector3<f64>,
    pub healthy: bool,
}

/// Initial guess for [`Estimator::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorInit {
    pub p_w: Vector3<f64>,
    pub v_w: Vector3<f64>,
    pub q_w: Quat,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: EstimatorConfig,
    d_fw: Vector3<f64>,
    g: f64,
    mag_ref: Vector3<f64>,
    dt_nominal: f64,
    hg: HighGainState,
    p: Vector3<f64>,
    v: Vector3<f64>,
    q: Quat,
    omega_w: Vector3<f64>,
    f_w: Vector3<f64>,
    prev_gyro: Option<Vector3<f64>>,
    omega_dot: LowPass3,
    last_imu: Option<f64>,
    last_vision: Option<f64>,
    start: Option<f64>,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig, d_fw: Vector3<f64>, g: f64, mag_ref: Vector3<f64>, dt_nominal: f64, init: EstimatorInit) -> Self {
        Self {
            cfg,
            d_fw,
            g,
            mag_ref,
            dt_nominal,
            hg: HighGainState { kappa_hat: init.kappa, omega_kappa_hat: 0.0 },
            p: init.p_w,
            v: init.v_w,
            q: init.q_w.normalize(),
            omega_w: Vector3::zeros(),
            f_w: Vector3::new(0.0, 0.0, -g),
            prev_gyro: None,
            omega_dot: LowPass3::new(cfg.omega_dot_cutoff_hz, dt_nominal),
            last_imu: None,
            last_vision: None,
            start: None,
        }
    }

    pub fn high_gain_state(&self) -> HighGainState {
        self.hg
    }

    pub fn update(&mut self, s: &SensorFrameSet) -> EstimatorOutput {
        let start = *self.start.get_or_insert(s.t);
        let dt = match self.last_imu {
            Some(t0) if s.t > t0 => s.t - t0,
            _ => self.dt_nominal,
        };
        let imu_gap = dt > self.cfg.gap_limit;
        self.last_imu = Some(s.t);

        self.hg = high_gain_step(self.hg, s.encoder.kappa_q, dt, &self.cfg.high_gain);
        let (kappa, kappa_rate) = (self.hg.kappa_hat, self.hg.omega_kappa_hat);

        let raw_dot = match self.prev_gyro {
            Some(prev) => (s.omega_gyro_f - prev) / dt,
            None => Vector3::zeros(),
        };
        self.prev_gyro = Some(s.omega_gyro_f);
        let omega_dot_f = self.omega_dot.update(&raw_dot);

        self.omega_w = gyro_to_wing(&s.omega_gyro_f, kappa_rate, kappa);
        self.f_w = accel_to_wing(&s.a_acc_f, &s.omega_gyro_f, &omega_dot_f, &self.d_fw, kappa);
        let e_w = mag_to_wing(&s.e_mag, kappa);

        let r = rotation_unchecked(&self.q.to_vec4());
        let mut correction = Vector3::zeros();
        // Heading-only correction from the horizontal field components.
        let m_i = r * e_w;
        let (meas_h, ref_h) = (m_i[1].atan2(m_i[0]), self.mag_ref[1].atan2(self.mag_ref[0]));
        if m_i.xy().norm() > 1e-9 && self.mag_ref.xy().norm() > 1e-9 {
            let yaw_err = quat::wrap_angle(ref_h - meas_h);
            correction += r.transpose() * Vector3::z() * (self.cfg.k_mag * yaw_err);
        }
        let rate = self.omega_w + correction;
        self.q = (self.q * Quat::from_rotation_vector(&(rate * dt))).normalize();

        let a_i = rotation_unchecked(&self.q.to_vec4()) * self.f_w + Vector3::z() * self.g;
        self.p += self.v * dt + a_i * (0.5 * dt * dt);
        self.v += a_i * dt;

        if let Some(fix) = s.vision {
            // A tilt error δ makes the velocity innovation grow along δ × f.
            if let Some(t_prev) = self.last_vision.filter(|&t| s.t > t) {
                let f_i = a_i - Vector3::z() * self.g;
                let f2 = f_i.norm_squared();
                if f2 > 1e-6 {
                    let delta = f_i.cross(&(self.v - fix.v)) * (self.cfg.k_tilt * (s.t - t_prev) / f2);
                    self.q = (Quat::from_rotation_vector(&-delta) * self.q).normalize();
                }
            }
            self.p += (fix.p - self.p) * self.cfg.vision_pos_gain;
            self.v += (fix.v - self.v) * self.cfg.vision_vel_gain;
            self.last_vision = Some(s.t);
        }
        let vision_age = s.t - self.last_vision.unwrap_or(start);
        let healthy = !imu_gap && vision_age <= self.cfg.gap_limit;

        EstimatorOutput {
            t: s.t,
            p_w: self.p,
            v_w: self.v,
            q_w: self.q,
            omega_w: self.omega_w,
            q_f: fuselage_quat(&self.q, kappa),
            kappa_hat: kappa,
            kappa_rate_hat: kappa_rate,
            f_w: self.f_w,
            healthy,
        }
    }
}

/// Attitude error angle in radians between two unit quaternions.
pub fn attitude_error(a: &Quat, b: &Quat) -> f64 {
    (a.conjugate() * *b).to_rotation_vector().norm()
}

/// High-gain versus finite-difference differentiation of a quantized angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateComparison {
    pub rms_finite_difference: f64,
    pub rms_high_gain: f64,
    pub ratio: f64,
    /// Delay of the high-gain estimate with respect to truth, s.
    pub lag: f64,
    /// RMS error after removing `lag`.
    pub rms_high_gain_aligned: f64,
}

pub fn rms(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Runs both differentiators on a uniformly sampled encoder stream and scores
/// them against the true rate after `settle` seconds.
pub fn compare_rate_estimators(dt: f64, kappa_q: &[f64], rate_true: &[f64], gains: &HighGainGains, settle: f64) -> RateComparison {
    let n = kappa_q.len().min(rate_true.len());
    let mut hg = HighGainState { kappa_hat: kappa_q.first().copied().unwrap_or(0.0), omega_kappa_hat: 0.0 };
    let mut est = Vec::with_capacity(n);
    let mut fd = Vec::with_capacity(n);
    for i in 0..n {
        hg = high_gain_step(hg, kappa_q[i], dt, gains);
        est.push(hg.omega_kappa_hat);
        fd.push(if i == 0 { 0.0 } else { (kappa_q[i] - kappa_q[i - 1]) / dt });
    }
    let k0 = ((settle / dt).ceil() as usize).min(n);
    let rms_fd = rms((k0..n).map(|i| fd[i] - rate_true[i]));
    let rms_hg = rms((k0..n).map(|i| est[i] - rate_true[i]));

    let max_shift = ((0.5 / dt) as usize).min(n.saturating_sub(k0 + 1));
    let mut best = (0usize, f64::NEG_INFINITY);
    for s in 0..=max_shift {
        let c: f64 = (k0 + s..n).map(|i| est[i] * rate_true[i - s]).sum::<f64>() / (n - k0 - s).max(1) as f64;
        if c > best.1 {
            best = (s, c);
        }
    }
    let shift = best.0;
    let aligned = rms((k0 + shift..n).map(|i| est[i] - rate_true[i - shift]));
    RateComparison {
        rms_finite_difference: rms_fd,
        rms_high_gain: rms_hg,
        ratio: if rms_fd > 0.0 { rms_hg / rms_fd } else { f64::INFINITY },
        lag: shift as f64 * dt,
        rms_high_gain_aligned: aligned,
    }
}

/// Euler pitch difference between two attitudes, used by consistency checks.
pub fn pitch_difference(q_f: &Quat, q_w: &Quat) -> f64 {
    quat::euler_zyx(q_f)[1] - quat::euler_zyx(q_w)[1]
}
