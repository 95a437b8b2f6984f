#![allow(dead_code)]

use freewing::multibody::{GeneralizedForces, MultibodyState};
use freewing::quat::{h_matrix, l_matrices, quat_rate, rotation_of, rotation_unchecked, skew, Quat};
use freewing::sim::config::ScenarioConfig;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4};
use rand::Rng;
use std::path::PathBuf;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn load_scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&scenario_path(name)).expect("shipped scenario parses")
}

pub fn random_unit_quat<R: Rng>(rng: &mut R) -> Quat {
    loop {
        let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 {
            return Quat::from_vec4(&v).normalize();
        }
    }
}

/// Worst errors of the kinematic identities at one random sample.
#[derive(Debug, Clone, Copy, Default)]
pub struct KinematicErrors {
    pub orthogonality: f64,
    pub determinant: f64,
    pub h_null: f64,
    pub l_finite_difference: f64,
    pub rate_finite_difference: f64,
    pub rate_algebra: f64,
}

impl KinematicErrors {
    pub fn max(&self, other: &Self) -> Self {
        Self {
            orthogonality: self.orthogonality.max(other.orthogonality),
            determinant: self.determinant.max(other.determinant),
            h_null: self.h_null.max(other.h_null),
            l_finite_difference: self.l_finite_difference.max(other.l_finite_difference),
            rate_finite_difference: self.rate_finite_difference.max(other.rate_finite_difference),
            rate_algebra: self.rate_algebra.max(other.rate_algebra),
        }
    }
}

pub fn kinematic_sample<R: Rng>(rng: &mut R) -> KinematicErrors {
    let q = random_unit_quat(rng);
    let qv = q.to_vec4();
    let r = rotation_of(&q).expect("unit quaternion");
    let omega = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
    let qdot = quat_rate(&qv, &omega);

    // Column derivatives along the straight path q + t qdot.
    let h = 1e-6;
    let rp = rotation_unchecked(&(qv + qdot * h));
    let rm = rotation_unchecked(&(qv - qdot * h));
    let l = l_matrices(&qv);
    let mut l_err: f64 = 0.0;
    for (i, li) in l.iter().enumerate() {
        let fd = (rp.column(i) - rm.column(i)) / (2.0 * h);
        l_err = l_err.max((li * qdot - fd).amax());
    }

    // Body rate from R' on the rotation path q ⊗ exp(omega t).
    let step = |t: f64| rotation_of(&(q * Quat::from_rotation_vector(&(omega * t)))).unwrap();
    let rdot: Matrix3<f64> = (step(h) - step(-h)) / (2.0 * h);
    let body = h_matrix(&qv) * qdot;
    let rate_fd = (r.transpose() * rdot - skew(&body)).amax();

    let qd = Quat::from_vec4(&qdot);
    let algebra = (q.conjugate() * qd).eps * 2.0;

    KinematicErrors {
        orthogonality: (r.transpose() * r - Matrix3::identity()).amax(),
        determinant: (r.determinant() - 1.0).abs(),
        h_null: (h_matrix(&qv) * qv).amax(),
        l_finite_difference: l_err,
        rate_finite_difference: rate_fd,
        rate_algebra: (algebra - body).amax(),
    }
}

pub fn unit_vec<R: Rng>(rng: &mut R) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

pub fn random_state<R: Rng>(rng: &mut R, d_fw: &Vector3<f64>) -> MultibodyState {
    MultibodyState::assemble(
        unit_vec(rng) * 3.0,
        random_unit_quat(rng),
        unit_vec(rng),
        unit_vec(rng) * 2.0,
        rng.random_range(-1.2..1.2),
        rng.random_range(-2.0..2.0),
        d_fw,
    )
}

pub fn random_forces<R: Rng>(rng: &mut R) -> GeneralizedForces {
    GeneralizedForces { f_b: unit_vec(rng) * 10.0, m_w: unit_vec(rng) * 0.3, f_f: unit_vec(rng) * 3.0, m_f: unit_vec(rng) * 0.3 }
}

/// Equality-constrained quadratic program solved through its KKT system.
pub fn kkt_argmin(m: &DMatrix<f64>, q: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (n, k) = (m.nrows(), a.nrows());
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(m);
    kkt.view_mut((0, n), (n, k)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (k, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(q);
    rhs.rows_mut(n, k).copy_from(b);
    kkt.lu().solve(&rhs).unwrap().rows(0, n).into_owned()
}
