//! Three-frame kinematics of modular units.
//!
//! Every unit contributes `A_t1 · A_J(θ) · A_t2`: the input frame (offset
//! `(x01, 0, z01)`, rotation about y by the unit's twist2), the joint frame
//! (rotation about z by the joint angle, offset `z12` along z) and, for units
//! carrying a link module, the output frame (offset `x23` along x, rotation
//! about x by twist1). Units without a link module have an identity output
//! factor.

use std::ops::Mul;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{get_catalog, Catalog};
use crate::composition::{Composition, ModularUnit};
use crate::error::{check_dim, Error, Result};
use crate::exec::Exec;
use crate::numfmt::sig;

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "TransformDoc", into = "TransformDoc")]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransformDoc {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<TransformDoc> for Transform {
    fn from(d: TransformDoc) -> Self {
        let r = d.rotation;
        Transform {
            rotation: Matrix3::new(
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ),
            translation: Vector3::from(d.translation),
        }
    }
}

impl From<Transform> for TransformDoc {
    fn from(t: Transform) -> Self {
        let m = t.rotation;
        TransformDoc {
            rotation: [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Matrix3::identity(), Vector3::new(x, y, z))
    }

    pub fn rot_x(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self::new(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c), Vector3::zeros())
    }

    pub fn rot_y(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self::new(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c), Vector3::zeros())
    }

    pub fn rot_z(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self::new(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0), Vector3::zeros())
    }

    /// URDF convention: `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        let r = Self::rot_z(rpy[2]) * Self::rot_y(rpy[1]) * Self::rot_x(rpy[0]);
        Self::new(r.rotation, Vector3::from(xyz))
    }

    /// Roll, pitch, yaw such that [`Transform::from_xyz_rpy`] reproduces the
    /// rotation. At pitch = ±90° the roll is set to zero.
    pub fn rpy(&self) -> [f64; 3] {
        let m = &self.rotation;
        let cp = m[(0, 0)].hypot(m[(1, 0)]);
        let pitch = (-m[(2, 0)]).atan2(cp);
        if cp > 1e-10 {
            [m[(2, 1)].atan2(m[(2, 2)]), pitch, m[(1, 0)].atan2(m[(0, 0)])]
        } else {
            [0.0, pitch, (-m[(0, 1)]).atan2(m[(1, 1)])]
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Largest entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max()
    }

    pub fn is_proper_rotation(&self, tol: f64) -> bool {
        self.orthonormality_error() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    /// Rotation angle of this transform's rotation, in [0, π].
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Position distance and relative rotation angle to `other`.
    pub fn distance(&self, other: &Transform) -> (f64, f64) {
        let dp = (self.translation - other.translation).norm();
        let dr = rotation_angle(&(self.rotation.transpose() * other.rotation));
        (dp, dr)
    }
}

/// Rotation angle of a rotation matrix; well conditioned near 0 and π.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() / 2.0;
    let c = (r.trace() - 1.0) / 2.0;
    s.atan2(c)
}

impl Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        Transform::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl Mul<&Transform> for &Transform {
    type Output = Transform;

    fn mul(self, rhs: &Transform) -> Transform {
        *self * *rhs
    }
}

/// Input-frame factor: rotation about y by `alpha_t2`, offset `(x01, 0, z01)`.
pub fn transform_t1(x01: f64, z01: f64, alpha_t2: f64) -> Transform {
    let mut t = Transform::rot_y(alpha_t2);
    t.translation = Vector3::new(x01, 0.0, z01);
    t
}

/// Joint-frame factor: rotation about z by `theta`, offset `(0, 0, z12)`.
pub fn transform_joint(z12: f64, theta: f64) -> Transform {
    let mut t = Transform::rot_z(theta);
    t.translation = Vector3::new(0.0, 0.0, z12);
    t
}

/// Output-frame factor: rotation about x by `alpha_t1`, offset `(x23, 0, 0)`.
pub fn transform_t2(x23: f64, alpha_t1: f64) -> Transform {
    let mut t = Transform::rot_x(alpha_t1);
    t.translation = Vector3::new(x23, 0.0, 0.0);
    t
}

/// Complete transform of one modular unit at joint angle `q` (radians).
pub fn unit_transform(unit: &ModularUnit, q: f64, catalog: &Catalog) -> Transform {
    let g = catalog.unit_geometry(unit.kind);
    let a = transform_t1(g.x01_m, g.z01_m, unit.twist2_deg.to_radians()) * transform_joint(g.z12_m, q);
    if unit.kind.has_link() {
        a * transform_t2(g.x23_m, unit.twist1_deg.to_radians())
    } else {
        a
    }
}

/// End-effector pose as `base · Π unit_transform(unit_i, q_i)`.
pub fn forward_kinematics_by_units(comp: &Composition, q: &[f64], catalog: &Catalog) -> Result<Transform> {
    check_dim(comp.dof(), q.len())?;
    Ok(comp
        .units
        .iter()
        .zip(q)
        .fold(comp.base_pose.to_transform(), |acc, (u, &qi)| {
            acc * unit_transform(u, qi, catalog)
        }))
}

/// Poses of the three frames of one unit, in base coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitFrames {
    pub twist1: Transform,
    pub joint: Transform,
    /// Equals `joint` for units without a link module.
    pub twist2: Transform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePoses {
    pub base: Transform,
    pub units: Vec<UnitFrames>,
    pub end_effector: Transform,
}

#[derive(Debug, Clone)]
struct ChainLink {
    t1: Transform,
    z12: f64,
    t2: Option<Transform>,
}

/// A composition resolved against a catalog, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct KinematicChain {
    base: Transform,
    links: Vec<ChainLink>,
    limits: Vec<(f64, f64)>,
}

impl KinematicChain {
    pub fn new(comp: &Composition, catalog: &Catalog) -> Self {
        let links = comp
            .units
            .iter()
            .map(|u| {
                let g = catalog.unit_geometry(u.kind);
                ChainLink {
                    t1: transform_t1(g.x01_m, g.z01_m, u.twist2_deg.to_radians()),
                    z12: g.z12_m,
                    t2: u
                        .kind
                        .has_link()
                        .then(|| transform_t2(g.x23_m, u.twist1_deg.to_radians())),
                }
            })
            .collect();
        Self {
            base: comp.base_pose.to_transform(),
            links,
            limits: comp.units.iter().map(ModularUnit::limits_rad).collect(),
        }
    }

    pub fn from_composition(comp: &Composition) -> Self {
        Self::new(comp, get_catalog())
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn base(&self) -> &Transform {
        &self.base
    }

    pub fn limits(&self) -> &[(f64, f64)] {
        &self.limits
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (qi, &(lo, hi)) in q.iter_mut().zip(&self.limits) {
            *qi = qi.clamp(lo, hi);
        }
    }

    /// All frames of the chain, expanded factor by factor.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<FramePoses> {
        check_dim(self.dof(), q.len())?;
        let mut acc = self.base;
        let mut units = Vec::with_capacity(self.dof());
        for (link, &qi) in self.links.iter().zip(q) {
            let twist1 = acc * link.t1;
            let joint = twist1 * transform_joint(link.z12, qi);
            let twist2 = match &link.t2 {
                Some(t2) => &joint * t2,
                None => joint,
            };
            units.push(UnitFrames { twist1, joint, twist2 });
            acc = twist2;
        }
        Ok(FramePoses {
            base: self.base,
            units,
            end_effector: acc,
        })
    }

    pub fn end_effector(&self, q: &[f64]) -> Result<Transform> {
        Ok(self.forward_kinematics(q)?.end_effector)
    }

    /// Geometric Jacobian (6×n, linear rows first) in base coordinates.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let poses = self.forward_kinematics(q)?;
        Ok(jacobian_from_poses(&poses))
    }

    /// Upper bound on the distance between the base and the end effector.
    pub fn reach_bound(&self) -> f64 {
        self.links
            .iter()
            .map(|l| {
                let x23 = l.t2.map_or(0.0, |t| t.translation.x);
                l.t1.translation.norm() + x23.hypot(l.z12)
            })
            .sum()
    }

    fn random_configuration(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.limits.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
    }

    /// End-effector positions for `samples` uniformly drawn in-limit joint
    /// states. Sample `k` draws from stream `k` of the seed, so the cloud is
    /// independent of the execution strategy.
    pub fn sample_workspace(&self, samples: usize, seed: u64, exec: Exec) -> Result<Vec<Vector3<f64>>> {
        if samples == 0 {
            return Err(Error::InvalidArgument("samples must be positive".into()));
        }
        Ok(exec.map_range(samples, |k| {
            let mut rng = stream_rng(seed, k as u64);
            let q = self.random_configuration(&mut rng);
            self.end_effector(&q).expect("dimension matches").translation
        }))
    }

    /// Damped least-squares inverse kinematics; see [`IkOptions`].
    pub fn inverse_kinematics(&self, target: &Transform, seed: &[f64], opts: &IkOptions) -> Result<IkResult> {
        check_dim(self.dof(), seed.len())?;
        if !target.is_proper_rotation(1e-6) {
            return Err(Error::InvalidArgument("target rotation is not orthonormal".into()));
        }
        let n = self.dof();
        let pose_error = |q: &[f64]| -> (DVector<f64>, f64, f64) {
            let ee = self.end_effector(q).expect("dimension matches");
            let dp = target.translation - ee.translation;
            let rerr = Rotation3::from_matrix_unchecked(target.rotation * ee.rotation.transpose());
            let dw = rerr.scaled_axis();
            let e = DVector::from_iterator(6, dp.iter().chain(dw.iter()).copied());
            (e, dp.norm(), dw.norm())
        };
        let converged = |pe: f64, re: f64| pe <= opts.pos_tol && re <= opts.rot_tol;

        let mut q0 = seed.to_vec();
        self.clamp(&mut q0);
        let (e0, pe0, re0) = pose_error(&q0);
        let mut best = IkResult {
            q: q0.clone(),
            pos_err_m: pe0,
            rot_err_rad: re0,
            converged: converged(pe0, re0),
            iterations: 0,
            error_trace: vec![e0.norm()],
        };
        if best.converged {
            return Ok(best);
        }
        let mut best_norm = e0.norm();
        let per_attempt = (opts.max_iters / (opts.restarts + 1)).max(20);
        let mut total = 0usize;

        for attempt in 0..=opts.restarts {
            let mut q = if attempt == 0 {
                q0.clone()
            } else {
                self.random_configuration(&mut stream_rng(opts.seed, attempt as u64))
            };
            let (mut e, mut pe, mut re) = pose_error(&q);
            let mut norm = e.norm();
            let mut lambda = opts.damping;
            let mut window_start = norm;
            let mut since_check = 0usize;
            let mut used = 0usize;

            while used < per_attempt && total < opts.max_iters {
                used += 1;
                total += 1;
                let j = self.jacobian(&q).expect("dimension matches");
                let jt = j.transpose();
                let lhs = &jt * &j + DMatrix::identity(n, n) * (lambda * lambda);
                let rhs = &jt * &e;
                let Some(dq) = lhs.cholesky().map(|c| c.solve(&rhs)) else {
                    lambda *= 2.0;
                    continue;
                };
                let mut q_new: Vec<f64> = q.iter().zip(dq.iter()).map(|(a, b)| a + b).collect();
                self.clamp(&mut q_new);
                let (e_new, pe_new, re_new) = pose_error(&q_new);
                let norm_new = e_new.norm();
                if norm_new < norm {
                    q = q_new;
                    (e, pe, re, norm) = (e_new, pe_new, re_new, norm_new);
                    lambda = (lambda * 0.5).max(1e-9);
                } else {
                    lambda *= 2.0;
                }
                if norm < best_norm {
                    best_norm = norm;
                    best.q.clone_from(&q);
                    best.pos_err_m = pe;
                    best.rot_err_rad = re;
                }
                best.error_trace.push(best_norm);
                if converged(pe, re) {
                    best.converged = true;
                    best.iterations = total;
                    return Ok(best);
                }
                since_check += 1;
                if since_check == 15 {
                    // stalled: less than 1% progress over the window
                    if norm > 0.99 * window_start {
                        break;
                    }
                    window_start = norm;
                    since_check = 0;
                }
                if lambda > 1e6 {
                    break;
                }
            }
            if total >= opts.max_iters {
                break;
            }
        }
        best.iterations = total;
        Err(Error::NotConverged(Box::new(best)))
    }

    /// Solves a batch of targets, each from the same seed.
    pub fn inverse_kinematics_batch(
        &self,
        targets: &[Transform],
        seed: &[f64],
        opts: &IkOptions,
        exec: Exec,
    ) -> Vec<Result<IkResult>> {
        exec.map_slice(targets, |t| self.inverse_kinematics(t, seed, opts))
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Column `i` = `(z_i × (p_ee − p_i), z_i)` with `z_i`, `p_i` the z-axis
/// and origin of unit `i`'s joint frame.
pub fn jacobian_from_poses(poses: &FramePoses) -> DMatrix<f64> {
    let p_ee = poses.end_effector.translation;
    let mut j = DMatrix::zeros(6, poses.units.len());
    for (i, f) in poses.units.iter().enumerate() {
        let z = f.joint.rotation.column(2).into_owned();
        let lin = z.cross(&(p_ee - f.joint.translation));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    j
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkOptions {
    pub pos_tol: f64,
    pub rot_tol: f64,
    /// Iteration budget shared by all attempts.
    pub max_iters: usize,
    /// Random reseeds after a stalled attempt.
    pub restarts: usize,
    /// Initial damping; halved after an improving step, doubled otherwise.
    pub damping: f64,
    /// Seed for the reseed draws.
    pub seed: u64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            pos_tol: 1e-4,
            rot_tol: 1e-3,
            max_iters: 500,
            restarts: 10,
            damping: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkResult {
    pub q: Vec<f64>,
    pub pos_err_m: f64,
    pub rot_err_rad: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Best combined pose-error norm after each iteration (starts with the seed's).
    pub error_trace: Vec<f64>,
}

/// `x,y,z` per line, 9 significant digits.
pub fn workspace_csv(points: &[Vector3<f64>]) -> String {
    let mut out = String::with_capacity(points.len() * 36);
    for p in points {
        out.push_str(&format!("{},{},{}\n", sig(p.x, 9), sig(p.y, 9), sig(p.z, 9)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{UnitKind, Variant};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn unit(kind: UnitKind) -> ModularUnit {
        ModularUnit::new(Variant::H, kind)
    }

    #[test]
    fn t1_factor() {
        let t = transform_t1(0.0, 0.074, 0.0);
        assert_eq!(t.rotation, Matrix3::identity());
        assert_eq!(t.translation, Vector3::new(0.0, 0.0, 0.074));
        let t = transform_t1(-0.0297, 0.075, FRAC_PI_2);
        assert_relative_eq!(t.rotation * Vector3::z(), Vector3::x(), epsilon = 1e-15);
        assert_eq!(t.translation, Vector3::new(-0.0297, 0.0, 0.075));
        let t = transform_t1(0.0, 0.0, PI);
        assert_relative_eq!(
            t.rotation,
            Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, -1.0)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn joint_factor() {
        let t = transform_joint(0.073, 0.0);
        assert_eq!(t.rotation, Matrix3::identity());
        assert_eq!(t.translation, Vector3::new(0.0, 0.0, 0.073));
        let t = transform_joint(0.073, FRAC_PI_2);
        assert_relative_eq!(t.rotation * Vector3::x(), Vector3::y(), epsilon = 1e-15);
        for th in [0.3, -2.0, 5.5] {
            assert_relative_eq!(transform_joint(0.073, th).rotation.determinant(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn t2_factor() {
        let t = transform_t2(0.22, 0.0);
        assert_eq!(t.rotation, Matrix3::identity());
        assert_eq!(t.translation, Vector3::new(0.22, 0.0, 0.0));
        let t = transform_t2(0.0, FRAC_PI_2);
        assert_relative_eq!(t.rotation * Vector3::y(), Vector3::z(), epsilon = 1e-15);
        let t = transform_t2(0.22, PI);
        assert_relative_eq!(
            t.rotation,
            Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn unit_transforms_at_zero() {
        let c = get_catalog();
        let t = unit_transform(&unit(UnitKind::U1), 0.0, c);
        assert_relative_eq!(t.translation, Vector3::new(0.0, 0.0, 0.147), epsilon = 1e-15);
        assert_eq!(t.rotation, Matrix3::identity());
        let t = unit_transform(&unit(UnitKind::U4), 0.0, c);
        assert_relative_eq!(t.translation, Vector3::new(0.1903, 0.0, 0.148), epsilon = 1e-15);
    }

    #[test]
    fn u3_with_twist1() {
        let t = unit_transform(&unit(UnitKind::U3).with_twist1(45.0), 0.0, get_catalog());
        assert_relative_eq!(t.translation, Vector3::new(0.22, 0.0, 0.147), epsilon = 1e-15);
        assert_relative_eq!(t.rotation, Transform::rot_x(FRAC_PI_4).rotation, epsilon = 1e-15);
    }

    #[test]
    fn twist1_has_no_effect_without_link() {
        let c = get_catalog();
        for kind in [UnitKind::U1, UnitKind::U2] {
            let a = unit_transform(&unit(kind), 0.7, c);
            let b = unit_transform(&unit(kind).with_twist1(60.0), 0.7, c);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rpy_roundtrip_including_gimbal_lock() {
        for rpy in [
            [0.1, 0.2, 0.3],
            [-2.0, 1.2, 3.0],
            [0.4, FRAC_PI_2, -0.3],
            [0.0, -FRAC_PI_2, 1.0],
        ] {
            let t = Transform::from_xyz_rpy([1.0, 2.0, 3.0], rpy);
            let back = Transform::from_xyz_rpy([1.0, 2.0, 3.0], t.rpy());
            assert!(t.distance(&back).1 < 1e-14);
        }
    }

    #[test]
    fn single_joint_jacobian() {
        let comp = Composition::new("one", vec![unit(UnitKind::U1)]);
        let j = KinematicChain::from_composition(&comp).jacobian(&[0.0]).unwrap();
        assert_eq!(j.fixed_view::<3, 1>(3, 0).into_owned(), Vector3::z());
        assert_eq!(j.fixed_view::<3, 1>(0, 0).norm(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let comp = Composition::new("one", vec![unit(UnitKind::U1)]);
        let chain = KinematicChain::from_composition(&comp);
        assert!(matches!(
            chain.forward_kinematics(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(chain.jacobian(&[]).is_err());
        assert!(forward_kinematics_by_units(&comp, &[], get_catalog()).is_err());
    }

    #[test]
    fn workspace_requires_samples() {
        let comp = Composition::new("one", vec![unit(UnitKind::U3)]);
        let chain = KinematicChain::from_composition(&comp);
        assert!(chain.sample_workspace(0, 1, Exec::Sequential).is_err());
        let csv = workspace_csv(&chain.sample_workspace(3, 1, Exec::Sequential).unwrap());
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').count() == 3));
    }
}
