//! Quaternion and rotation kinematics.
//!
//! Quaternions are stored scalar first, `q = (eta, eps1, eps2, eps3)`, and the
//! rotation `R(q) = I + 2 eta [eps]x + 2 [eps]x^2` maps body-frame vectors to
//! the parent frame. Most helpers take a raw `Vector4` because the same maps
//! are also evaluated on quaternion rates and on slightly non-unit states
//! produced by constraint drift.

use nalgebra::{Matrix3, SMatrix, Vector3, Vector4};
use std::ops::Mul;
use thiserror::Error;

/// Norm tolerance accepted by the checked entry points.
pub const UNIT_TOLERANCE: f64 = 1e-6;

pub type Matrix3x4 = SMatrix<f64, 3, 4>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuatError {
    #[error("quaternion norm {norm} is not unit (tolerance {tol})")]
    NotUnit { norm: f64, tol: f64 },
    #[error("pitch {pitch_deg:.4} deg is within the gimbal margin")]
    GimbalLock { pitch_deg: f64 },
}

/// Quaternion `(eta, eps)`. Not normalized implicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub eta: f64,
    pub eps: Vector3<f64>,
}

impl Quat {
    pub fn new(eta: f64, eps: Vector3<f64>) -> Self {
        Self { eta, eps }
    }

    pub fn identity() -> Self {
        Self::new(1.0, Vector3::zeros())
    }

    pub fn from_vec4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], Vector3::new(v[1], v[2], v[3]))
    }

    pub fn to_vec4(&self) -> Vector4<f64> {
        Vector4::new(self.eta, self.eps[0], self.eps[1], self.eps[2])
    }

    pub fn norm(&self) -> f64 {
        self.to_vec4().norm()
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm();
        Self::new(self.eta / n, self.eps / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.eta, -self.eps)
    }

    /// Rotation of angle `|v|` about `v / |v|`.
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        let angle = v.norm();
        if angle < 1e-12 {
            return Self::new(1.0, v * 0.5).normalize();
        }
        let half = 0.5 * angle;
        Self::new(half.cos(), v * (half.sin() / angle))
    }

    /// Rotation vector of the shortest equivalent rotation.
    pub fn to_rotation_vector(&self) -> Vector3<f64> {
        let q = if self.eta < 0.0 { Self::new(-self.eta, -self.eps) } else { *self };
        let s = q.eps.norm();
        if s < 1e-12 {
            return 2.0 * q.eps;
        }
        2.0 * s.atan2(q.eta) * q.eps / s
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    fn check_unit(&self) -> Result<(), QuatError> {
        if self.is_unit(UNIT_TOLERANCE) {
            Ok(())
        } else {
            Err(QuatError::NotUnit { norm: self.norm(), tol: UNIT_TOLERANCE })
        }
    }
}

impl Default for Quat {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Quat {
    type Output = Quat;

    /// Hamilton product, fixed by `R(a * b) = R(a) R(b)`.
    fn mul(self, b: Quat) -> Quat {
        Quat::new(self.eta * b.eta - self.eps.dot(&b.eps), self.eta * b.eps + b.eta * self.eps + self.eps.cross(&b.eps))
    }
}

pub fn skew(u: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u[2], u[1], u[2], 0.0, -u[0], -u[1], u[0], 0.0)
}

/// `R(q)` evaluated as a polynomial, without any norm check.
pub fn rotation_unchecked(q: &Vector4<f64>) -> Matrix3<f64> {
    let eta = q[0];
    let e = Vector3::new(q[1], q[2], q[3]);
    let s = skew(&e);
    Matrix3::identity() + 2.0 * eta * s + 2.0 * s * s
}

/// Checked rotation matrix. Fails on a non-unit quaternion instead of normalizing.
pub fn rotation_of(q: &Quat) -> Result<Matrix3<f64>, QuatError> {
    q.check_unit()?;
    Ok(rotation_unchecked(&q.to_vec4()))
}

/// Columns `R_1, R_2, R_3` of `R(q)`.
pub fn rotation_columns(q: &Vector4<f64>) -> [Vector3<f64>; 3] {
    let r = rotation_unchecked(q);
    [r.column(0).into(), r.column(1).into(), r.column(2).into()]
}

/// `H(q) = 2 [-eps, eta I - [eps]x]`.
pub fn h_matrix(q: &Vector4<f64>) -> Matrix3x4 {
    let (eta, e1, e2, e3) = (q[0], q[1], q[2], q[3]);
    2.0 * Matrix3x4::new(
        -e1, eta, e3, -e2, //
        -e2, -e3, eta, e1, //
        -e3, e2, -e1, eta,
    )
}

/// Body-frame angular velocity `omega = H(q) qdot`.
pub fn angular_velocity(q: &Vector4<f64>, qdot: &Vector4<f64>) -> Vector3<f64> {
    h_matrix(q) * qdot
}

/// Quaternion rate for a body-frame angular velocity, `qdot = q * (0, omega) / 2`.
pub fn quat_rate(q: &Vector4<f64>, omega: &Vector3<f64>) -> Vector4<f64> {
    (Quat::from_vec4(q) * Quat::new(0.0, *omega)).to_vec4() * 0.5
}

/// Jacobians `L_i = dR_i/dq` of the rotation columns, hard-coded from the
/// polynomial form of `R(q)`. Each map is linear in `q`.
pub fn l_matrices(q: &Vector4<f64>) -> [Matrix3x4; 3] {
    let (n, a, b, c) = (q[0], q[1], q[2], q[3]);
    let l1 = Matrix3x4::new(
        0.0,
        0.0,
        -4.0 * b,
        -4.0 * c, //
        2.0 * c,
        2.0 * b,
        2.0 * a,
        2.0 * n, //
        -2.0 * b,
        2.0 * c,
        -2.0 * n,
        2.0 * a,
    );
    let l2 = Matrix3x4::new(
        -2.0 * c,
        2.0 * b,
        2.0 * a,
        -2.0 * n, //
        0.0,
        -4.0 * a,
        0.0,
        -4.0 * c, //
        2.0 * a,
        2.0 * n,
        2.0 * c,
        2.0 * b,
    );
    let l3 = Matrix3x4::new(
        2.0 * b,
        2.0 * c,
        2.0 * n,
        2.0 * a, //
        -2.0 * a,
        -2.0 * n,
        2.0 * c,
        2.0 * b, //
        0.0,
        -4.0 * a,
        -4.0 * b,
        0.0,
    );
    [l1, l2, l3]
}

pub fn quat_multiply(a: &Quat, b: &Quat) -> Quat {
    *a * *b
}

/// Pure pitch rotation `(cos(k/2), 0, sin(k/2), 0)`.
pub fn pitch_quat(kappa: f64) -> Quat {
    let h = 0.5 * kappa;
    Quat::new(h.cos(), Vector3::new(0.0, h.sin(), 0.0))
}

/// `(roll, pitch, yaw)` of the 'ZYX' decomposition `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn euler_zyx(q: &Quat) -> Vector3<f64> {
    let (w, x, y, z) = (q.eta, q.eps[0], q.eps[1], q.eps[2]);
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let sp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    Vector3::new(roll, sp.asin(), yaw)
}

/// Inverse of [`euler_zyx`].
pub fn from_euler_zyx(roll: f64, pitch: f64, yaw: f64) -> Quat {
    let qz = Quat::new((0.5 * yaw).cos(), Vector3::new(0.0, 0.0, (0.5 * yaw).sin()));
    let qy = pitch_quat(pitch);
    let qx = Quat::new((0.5 * roll).cos(), Vector3::new((0.5 * roll).sin(), 0.0, 0.0));
    qz * qy * qx
}

/// Relative pitch angle `kappa` of `q_f = q_w * pitch_quat(kappa)`.
pub fn relative_pitch(q_w: &Quat, q_f: &Quat) -> f64 {
    let rel = q_w.conjugate() * *q_f;
    let k = 2.0 * rel.eps[1].atan2(rel.eta);
    wrap_angle(k)
}

pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn unit_quat() -> impl Strategy<Value = Quat> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-2)
            .prop_map(|(a, b, c, d)| Quat::new(a, Vector3::new(b, c, d)).normalize())
    }

    #[test]
    fn identity_rotation() {
        let r = rotation_of(&Quat::identity()).unwrap();
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn quarter_pitch_maps_x_to_minus_z() {
        let q = Quat::new(FRAC_PI_4.cos(), Vector3::new(0.0, FRAC_PI_4.sin(), 0.0));
        let r = rotation_of(&q).unwrap();
        let v = r * Vector3::x();
        assert_relative_eq!(v, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
    }

    #[test]
    fn non_unit_rejected() {
        let q = Quat::new(1.1, Vector3::zeros());
        assert!(matches!(rotation_of(&q), Err(QuatError::NotUnit { .. })));
    }

    #[test]
    fn sign_flip_same_rotation() {
        let q = Quat::new(0.3, Vector3::new(0.1, -0.5, 0.7)).normalize();
        let neg = Quat::new(-q.eta, -q.eps);
        assert_relative_eq!(rotation_of(&q).unwrap(), rotation_of(&neg).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn h_at_identity() {
        let h = h_matrix(&Vector4::new(1.0, 0.0, 0.0, 0.0));
        let mut expect = Matrix3x4::zeros();
        expect[(0, 1)] = 2.0;
        expect[(1, 2)] = 2.0;
        expect[(2, 3)] = 2.0;
        assert_eq!(h, expect);
    }

    #[test]
    fn zero_rate_zero_omega() {
        let q = Quat::new(0.5, Vector3::new(0.5, 0.5, 0.5)).to_vec4();
        assert_eq!(angular_velocity(&q, &Vector4::zeros()), Vector3::zeros());
    }

    #[test]
    fn constant_pitch_spin_has_unit_pitch_rate() {
        // q(t) = pitch_quat(t), so qdot = (-sin(t/2), 0, cos(t/2), 0) / 2.
        for &t in &[0.0, 0.4, 1.3, 2.9] {
            let q = pitch_quat(t).to_vec4();
            let qdot = Vector4::new(-(0.5 * t).sin(), 0.0, (0.5 * t).cos(), 0.0) * 0.5;
            assert_relative_eq!(angular_velocity(&q, &qdot), Vector3::y(), epsilon = 1e-14);
        }
    }

    #[test]
    fn l1_at_identity() {
        let l = l_matrices(&Vector4::new(1.0, 0.0, 0.0, 0.0));
        // dR_1/dq at identity: only the eps3 entry of row 2 and the eps2 entry of row 3.
        let mut expect = Matrix3x4::zeros();
        expect[(1, 3)] = 2.0;
        expect[(2, 2)] = -2.0;
        assert_eq!(l[0], expect);
        assert_eq!(l[0].row(0).iter().copied().collect::<Vec<_>>(), vec![0.0; 4]);
    }

    #[test]
    fn pitch_quat_cases() {
        assert_eq!(pitch_quat(0.0), Quat::identity());
        let q = pitch_quat(std::f64::consts::PI);
        assert_relative_eq!(q.eta, 0.0, epsilon = 1e-16);
        assert_relative_eq!(q.eps, Vector3::y(), epsilon = 1e-16);
        for deg in [-90.0f64, -30.0, 30.0, 90.0] {
            let k = deg.to_radians();
            let (c, s) = (k.cos(), k.sin());
            let elementary = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
            assert_relative_eq!(rotation_of(&pitch_quat(k)).unwrap(), elementary, epsilon = 1e-15);
        }
    }

    #[test]
    fn multiply_identity_and_conjugate() {
        let a = Quat::new(0.2, Vector3::new(-0.4, 0.1, 0.6)).normalize();
        assert_eq!(a * Quat::identity(), a);
        let p = a * a.conjugate();
        assert_relative_eq!(p.eta, 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.eps, Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn euler_roundtrip_and_composition() {
        let q = from_euler_zyx(10f64.to_radians(), 20f64.to_radians(), 40f64.to_radians());
        let e = euler_zyx(&q);
        assert_relative_eq!(e, Vector3::new(10f64, 20.0, 40.0).map(f64::to_radians), epsilon = 1e-12);
        assert_relative_eq!(euler_zyx(&pitch_quat(0.5))[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rotation_vector_roundtrip() {
        let v = Vector3::new(0.3, -1.1, 0.7);
        assert_relative_eq!(Quat::from_rotation_vector(&v).to_rotation_vector(), v, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn h_annihilates_any_q(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64, d in -2.0..2.0f64) {
            let q = Vector4::new(a, b, c, d);
            prop_assert!((h_matrix(&q) * q).norm() < 1e-14);
        }

        #[test]
        fn h_rows_have_norm_two(q in unit_quat()) {
            let h = h_matrix(&q.to_vec4());
            for i in 0..3 {
                prop_assert!((h.row(i).norm() - 2.0).abs() < 1e-12);
            }
        }

        #[test]
        fn l_is_linear(a in unit_quat(), b in unit_quat(), s in -3.0..3.0f64, t in -3.0..3.0f64) {
            let (qa, qb) = (a.to_vec4(), b.to_vec4());
            let lhs = l_matrices(&(qa * s + qb * t));
            let (la, lb) = (l_matrices(&qa), l_matrices(&qb));
            for i in 0..3 {
                prop_assert!((lhs[i] - (la[i] * s + lb[i] * t)).norm() < 1e-12);
            }
        }

        #[test]
        fn same_axis_pitch_composes(k1 in -3.0..3.0f64, k2 in -3.0..3.0f64) {
            let p = pitch_quat(k1) * pitch_quat(k2);
            let e = pitch_quat(k1 + k2);
            prop_assert!((p.to_vec4() - e.to_vec4()).norm() < 1e-9);
        }

        #[test]
        fn product_is_homomorphism(a in unit_quat(), b in unit_quat()) {
            let ab = a * b;
            prop_assert!((ab.norm() - 1.0).abs() < 1e-9);
            let lhs = rotation_of(&ab).unwrap();
            let rhs = rotation_of(&a).unwrap() * rotation_of(&b).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }
    }
}
