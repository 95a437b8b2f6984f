//! Constrained two-body dynamics of the wing–fuselage pair.
//!
//! The generalized coordinates are `x = (p_W, q_W, p_F, q_F)` in R^14 with
//! velocities `v = xdot`. Quaternions are carried unnormalized and held on the
//! unit sphere by Baumgarte-stabilized constraints, together with the pivot
//! constraints. The constrained acceleration is
//!
//! ```text
//! xddot = [ (I - A+ A) M ; A ]+ [ Q ; B ]
//! ```
//!
//! which for a full-rank stack coincides with the Gauss-principle minimizer of
//! `(z - a)' M (z - a)` over `{ z : A z = B }`.

use crate::forces::VehicleParams;
use crate::quat::{self, h_matrix, l_matrices, rotation_columns, rotation_unchecked, Matrix3x4, Quat};
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vector14 = SVector<f64, 14>;
pub type Vector7 = SVector<f64, 7>;
pub type Matrix14 = SMatrix<f64, 14, 14>;
pub type Matrix7x14 = SMatrix<f64, 7, 14>;

/// Relative singular-value floor for the pseudo-inverses.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultibodyError {
    #[error("stacked mass/constraint matrix is rank deficient (singular values {singular_values:?})")]
    Singular { singular_values: Vec<f64> },
    #[error("non-finite value in the dynamics")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultibodyState {
    pub p_w: Vector3<f64>,
    pub q_w: Vector4<f64>,
    pub p_f: Vector3<f64>,
    pub q_f: Vector4<f64>,
    pub v_w: Vector3<f64>,
    pub qdot_w: Vector4<f64>,
    pub v_f: Vector3<f64>,
    pub qdot_f: Vector4<f64>,
}

impl MultibodyState {
    /// State satisfying every pivot constraint and its derivative, built from
    /// the wing pose/twist and the pivot angle `kappa` (fuselage pitch relative
    /// to the wing, `q_F = q_W * q_kappa`).
    pub fn assemble(
        p_w: Vector3<f64>,
        q_w: Quat,
        v_w: Vector3<f64>,
        omega_w: Vector3<f64>,
        kappa: f64,
        kappa_rate: f64,
        d_fw: &Vector3<f64>,
    ) -> Self {
        let qk = quat::pitch_quat(kappa);
        let q_f = q_w * qk;
        let r_k = rotation_unchecked(&qk.to_vec4());
        let omega_f = r_k.transpose() * omega_w + Vector3::new(0.0, kappa_rate, 0.0);
        let r_f = rotation_unchecked(&q_f.to_vec4());
        let p_f = p_w - r_f * d_fw;
        let v_f = v_w - r_f * omega_f.cross(d_fw);
        let (qw, qf) = (q_w.to_vec4(), q_f.to_vec4());
        Self { p_w, q_w: qw, p_f, q_f: qf, v_w, qdot_w: quat::quat_rate(&qw, &omega_w), v_f, qdot_f: quat::quat_rate(&qf, &omega_f) }
    }

    pub fn positions(&self) -> Vector14 {
        let mut x = Vector14::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p_w);
        x.fixed_rows_mut::<4>(3).copy_from(&self.q_w);
        x.fixed_rows_mut::<3>(7).copy_from(&self.p_f);
        x.fixed_rows_mut::<4>(10).copy_from(&self.q_f);
        x
    }

    pub fn velocities(&self) -> Vector14 {
        let mut v = Vector14::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.v_w);
        v.fixed_rows_mut::<4>(3).copy_from(&self.qdot_w);
        v.fixed_rows_mut::<3>(7).copy_from(&self.v_f);
        v.fixed_rows_mut::<4>(10).copy_from(&self.qdot_f);
        v
    }

    pub fn from_vectors(x: &Vector14, v: &Vector14) -> Self {
        Self {
            p_w: x.fixed_rows::<3>(0).into(),
            q_w: x.fixed_rows::<4>(3).into(),
            p_f: x.fixed_rows::<3>(7).into(),
            q_f: x.fixed_rows::<4>(10).into(),
            v_w: v.fixed_rows::<3>(0).into(),
            qdot_w: v.fixed_rows::<4>(3).into(),
            v_f: v.fixed_rows::<3>(7).into(),
            qdot_f: v.fixed_rows::<4>(10).into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positions().iter().chain(self.velocities().iter()).all(|x| x.is_finite())
    }

    pub fn wing_quat(&self) -> Quat {
        Quat::from_vec4(&self.q_w)
    }

    pub fn fuselage_quat(&self) -> Quat {
        Quat::from_vec4(&self.q_f)
    }

    /// Wing body rate (wing frame).
    pub fn omega_w(&self) -> Vector3<f64> {
        quat::angular_velocity(&self.q_w, &self.qdot_w)
    }

    /// Fuselage body rate (fuselage frame).
    pub fn omega_f(&self) -> Vector3<f64> {
        quat::angular_velocity(&self.q_f, &self.qdot_f)
    }

    /// Pivot angle, `q_F = q_W * pitch_quat(kappa)`.
    pub fn kappa(&self) -> f64 {
        quat::relative_pitch(&self.wing_quat().normalize(), &self.fuselage_quat().normalize())
    }
}

/// Forces and moments entering the generalized force vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneralizedForces {
    /// Wing force, wing frame.
    pub f_b: Vector3<f64>,
    /// Wing moment about the wing origin, wing frame.
    pub m_w: Vector3<f64>,
    /// Fuselage non-gravitational force, fuselage frame.
    pub f_f: Vector3<f64>,
    /// Fuselage moment about the fuselage origin, fuselage frame.
    pub m_f: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaumgarteGains {
    pub delta1: f64,
    pub delta2: f64,
}

impl Default for BaumgarteGains {
    fn default() -> Self {
        Self { delta1: 0.5, delta2: 8.0 }
    }
}

impl BaumgarteGains {
    pub fn is_hurwitz(&self) -> bool {
        self.delta1 > 0.0 && self.delta2 > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintResiduals {
    pub phi: Vector7,
    pub phidot: Vector7,
}

impl ConstraintResiduals {
    pub fn max_abs(&self) -> f64 {
        self.phi.amax()
    }
}

/// How the wing is attached to the world. `Grounded` holds the wing pose with
/// six extra stabilized rows; it exists for validation runs (fixed pivot).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WingMount {
    Free,
    Grounded { p: Vector3<f64>, q: Vector4<f64> },
}

fn quat_block(q: &Vector4<f64>, j: &Vector3<f64>) -> SMatrix<f64, 4, 4> {
    let h = h_matrix(q);
    h.transpose() * Matrix3::from_diagonal(j) * h
}

pub fn mass_matrix(state: &MultibodyState, params: &VehicleParams) -> Matrix14 {
    let mut m = Matrix14::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * params.m_w));
    m.fixed_view_mut::<4, 4>(3, 3).copy_from(&quat_block(&state.q_w, &params.j_w));
    m.fixed_view_mut::<3, 3>(7, 7).copy_from(&(Matrix3::identity() * params.m_f));
    m.fixed_view_mut::<4, 4>(10, 10).copy_from(&quat_block(&state.q_f, &params.j_f));
    m
}

/// Quaternion row of `Q`: `-2 H(qdot)' J H(q) qdot + H(q)' moment`.
fn quat_force(q: &Vector4<f64>, qdot: &Vector4<f64>, j: &Vector3<f64>, moment: &Vector3<f64>) -> Vector4<f64> {
    let h = h_matrix(q);
    let hd = h_matrix(qdot);
    let omega = h * qdot;
    -2.0 * hd.transpose() * omega.component_mul(j) + h.transpose() * moment
}

pub fn generalized_force(state: &MultibodyState, gf: &GeneralizedForces, params: &VehicleParams) -> Vector14 {
    let e3 = Vector3::z();
    let mut q = Vector14::zeros();
    let fw = params.m_w * params.g * e3 + rotation_unchecked(&state.q_w) * gf.f_b;
    let ff = params.m_f * params.g * e3 + rotation_unchecked(&state.q_f) * gf.f_f;
    q.fixed_rows_mut::<3>(0).copy_from(&fw);
    q.fixed_rows_mut::<4>(3).copy_from(&quat_force(&state.q_w, &state.qdot_w, &params.j_w, &gf.m_w));
    q.fixed_rows_mut::<3>(7).copy_from(&ff);
    q.fixed_rows_mut::<4>(10).copy_from(&quat_force(&state.q_f, &state.qdot_f, &params.j_f, &gf.m_f));
    q
}

fn offset_jacobian(q: &Vector4<f64>, d: &Vector3<f64>) -> Matrix3x4 {
    let l = l_matrices(q);
    l[0] * d[0] + l[1] * d[1] + l[2] * d[2]
}

pub fn constraint_residuals(state: &MultibodyState, d_fw: &Vector3<f64>) -> ConstraintResiduals {
    let (qw, qf, qdw, qdf) = (&state.q_w, &state.q_f, &state.qdot_w, &state.qdot_f);
    let rw = rotation_columns(qw);
    let rf = rotation_columns(qf);
    let lw = l_matrices(qw);
    let lf = l_matrices(qf);
    let r_f = rotation_unchecked(qf);

    let mut phi = Vector7::zeros();
    let mut phidot = Vector7::zeros();
    phi[0] = qw.dot(qw) - 1.0;
    phidot[0] = 2.0 * qw.dot(qdw);
    phi[1] = qf.dot(qf) - 1.0;
    phidot[1] = 2.0 * qf.dot(qdf);
    phi[2] = rw[1].dot(&rf[2]);
    phidot[2] = rf[2].dot(&(lw[1] * qdw)) + rw[1].dot(&(lf[2] * qdf));
    phi[3] = rw[1].dot(&rf[0]);
    phidot[3] = rf[0].dot(&(lw[1] * qdw)) + rw[1].dot(&(lf[0] * qdf));
    let pos = state.p_w - state.p_f - r_f * d_fw;
    let vel = state.v_w - state.v_f - offset_jacobian(qf, d_fw) * qdf;
    phi.fixed_rows_mut::<3>(4).copy_from(&pos);
    phidot.fixed_rows_mut::<3>(4).copy_from(&vel);
    ConstraintResiduals { phi, phidot }
}

/// `A(x, v) xddot = B(x, v)` for the pivot constraint set, with the Baumgarte
/// terms `-delta1 phidot - delta2 phi` folded into `B`.
pub fn constraint_matrices(state: &MultibodyState, gains: &BaumgarteGains, d_fw: &Vector3<f64>) -> (Matrix7x14, Vector7) {
    let (qw, qf, qdw, qdf) = (&state.q_w, &state.q_f, &state.qdot_w, &state.qdot_f);
    let res = constraint_residuals(state, d_fw);
    let (phi, phidot) = (&res.phi, &res.phidot);
    let (d1, d2) = (gains.delta1, gains.delta2);
    let rw = rotation_columns(qw);
    let rf = rotation_columns(qf);
    let lw = l_matrices(qw);
    let lf = l_matrices(qf);
    let lwd = l_matrices(qdw);
    let lfd = l_matrices(qdf);

    let mut a = Matrix7x14::zeros();
    let mut b = Vector7::zeros();

    a.fixed_view_mut::<1, 4>(0, 3).copy_from(&qw.transpose());
    b[0] = -qdw.dot(qdw) - d1 * qw.dot(qdw) - 0.5 * d2 * phi[0];
    a.fixed_view_mut::<1, 4>(1, 10).copy_from(&qf.transpose());
    b[1] = -qdf.dot(qdf) - d1 * qf.dot(qdf) - 0.5 * d2 * phi[1];

    // Pivot orthogonality rows: wing y against fuselage z (row 2) and x (row 3).
    for (row, k) in [(2usize, 2usize), (3, 0)] {
        a.fixed_view_mut::<1, 4>(row, 3).copy_from(&(rf[k].transpose() * lw[1]));
        a.fixed_view_mut::<1, 4>(row, 10).copy_from(&(rw[1].transpose() * lf[k]));
        let lw2_qd = lw[1] * qdw;
        let lfk_qd = lf[k] * qdf;
        b[row] = -rf[k].dot(&(lwd[1] * qdw)) - rw[1].dot(&(lfd[k] * qdf)) - 2.0 * lw2_qd.dot(&lfk_qd) - d1 * phidot[row] - d2 * phi[row];
    }

    let l_o = offset_jacobian(qf, d_fw);
    let l_o_dot = offset_jacobian(qdf, d_fw);
    a.fixed_view_mut::<3, 3>(4, 0).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(4, 7).copy_from(&(-Matrix3::identity()));
    a.fixed_view_mut::<3, 4>(4, 10).copy_from(&(-l_o));
    let bpos = l_o_dot * qdf - d1 * phidot.fixed_rows::<3>(4) - d2 * phi.fixed_rows::<3>(4);
    b.fixed_rows_mut::<3>(4).copy_from(&bpos);
    (a, b)
}

/// Extra rows holding the wing at a fixed pose.
fn grounding_rows(
    state: &MultibodyState,
    gains: &BaumgarteGains,
    p0: &Vector3<f64>,
    q0: &Vector4<f64>,
) -> (SMatrix<f64, 6, 14>, SVector<f64, 6>) {
    let (d1, d2) = (gains.delta1, gains.delta2);
    let mut a = SMatrix::<f64, 6, 14>::zeros();
    let mut b = SVector::<f64, 6>::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    b.fixed_rows_mut::<3>(0).copy_from(&(-d1 * state.v_w - d2 * (state.p_w - p0)));
    // vec(q0* q_W) = H(q0) q_W / 2 vanishes iff q_W = +-q0 on the unit sphere.
    let e0 = h_matrix(q0) * 0.5;
    a.fixed_view_mut::<3, 4>(3, 3).copy_from(&e0);
    b.fixed_rows_mut::<3>(3).copy_from(&(-d1 * (e0 * state.qdot_w) - d2 * (e0 * state.q_w)));
    (a, b)
}

/// Moore–Penrose pseudo-inverse; singular values below `rel_tol * sigma_max`
/// are treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.max();
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    if smax <= 0.0 {
        return out;
    }
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > rel_tol * smax {
            out += vt.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// Udwadia–Phohomsiri solve for an arbitrary system `(M, Q, A, B)`.
pub fn solve_constrained(m: &DMatrix<f64>, q: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, MultibodyError> {
    let n = m.ncols();
    let k = a.nrows();
    let a_pinv = pseudo_inverse(a, RANK_TOLERANCE);
    let proj = DMatrix::identity(n, n) - &a_pinv * a;
    let mut stacked = DMatrix::zeros(n + k, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&(proj * m));
    stacked.view_mut((n, 0), (k, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(q);
    rhs.rows_mut(n, k).copy_from(b);

    let svd = stacked.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smax.is_finite() && smin.is_finite()) {
        return Err(MultibodyError::NonFinite);
    }
    if sv.len() < n || smin < RANK_TOLERANCE * smax {
        return Err(MultibodyError::Singular { singular_values: sv.iter().copied().collect() });
    }
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let coeffs = (u.transpose() * rhs).component_div(sv);
    Ok(vt.transpose() * coeffs)
}

/// Full constraint stack `(A, B)` for a mount, as dynamic matrices.
pub fn constraint_stack(
    state: &MultibodyState,
    gains: &BaumgarteGains,
    d_fw: &Vector3<f64>,
    mount: &WingMount,
) -> (DMatrix<f64>, DVector<f64>) {
    let (a7, b7) = constraint_matrices(state, gains, d_fw);
    match mount {
        WingMount::Free => (DMatrix::from_fn(7, 14, |i, j| a7[(i, j)]), DVector::from_fn(7, |i, _| b7[i])),
        WingMount::Grounded { p, q } => {
            let (a6, b6) = grounding_rows(state, gains, p, q);
            let a = DMatrix::from_fn(13, 14, |i, j| if i < 7 { a7[(i, j)] } else { a6[(i - 7, j)] });
            let b = DVector::from_fn(13, |i, _| if i < 7 { b7[i] } else { b6[i - 7] });
            (a, b)
        }
    }
}

pub fn constrained_accel(
    state: &MultibodyState,
    gf: &GeneralizedForces,
    params: &VehicleParams,
    gains: &BaumgarteGains,
) -> Result<Vector14, MultibodyError> {
    constrained_accel_mounted(state, gf, params, gains, &WingMount::Free)
}

pub fn constrained_accel_mounted(
    state: &MultibodyState,
    gf: &GeneralizedForces,
    params: &VehicleParams,
    gains: &BaumgarteGains,
    mount: &WingMount,
) -> Result<Vector14, MultibodyError> {
    let m = mass_matrix(state, params);
    let q = generalized_force(state, gf, params);
    let (a, b) = constraint_stack(state, gains, &params.d_fw, mount);
    let md = DMatrix::from_fn(14, 14, |i, j| m[(i, j)]);
    let qd = DVector::from_fn(14, |i, _| q[i]);
    let acc = solve_constrained(&md, &qd, &a, &b)?;
    let out = Vector14::from_fn(|i, _| acc[i]);
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(MultibodyError::NonFinite)
    }
}

/// Kinetic plus gravitational energy. The fuselage weight acts at its centre
/// of gravity `O_F + R_F (d_FW - d_GOW)`.
pub fn mechanical_energy(state: &MultibodyState, params: &VehicleParams) -> f64 {
    let ow = state.omega_w();
    let of = state.omega_f();
    let kinetic = 0.5 * params.m_w * state.v_w.norm_squared()
        + 0.5 * ow.dot(&ow.component_mul(&params.j_w))
        + 0.5 * params.m_f * state.v_f.norm_squared()
        + 0.5 * of.dot(&of.component_mul(&params.j_f));
    let cg_f = state.p_f + rotation_unchecked(&state.q_f) * (params.d_fw - params.d_gow);
    let potential = -params.g * (params.m_w * state.p_w[2] + params.m_f * cg_f[2]);
    kinetic + potential
}
