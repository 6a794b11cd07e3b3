#![allow(dead_code)]

use modkin::dynamics::DynamicModel;
use modkin::kinematics::Transform;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_q(rng: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-span..span)).collect()
}

/// Rotation vector of `a · bᵀ` by the matrix logarithm.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = c.acos();
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if angle < 1e-12 {
        v / 2.0
    } else {
        v * (angle / (2.0 * angle.sin()))
    }
}

pub fn pose_gap(a: &Transform, b: &Transform) -> (f64, f64) {
    a.distance(b)
}

/// Kinetic energy from body velocities, independent of the recursion.
pub fn kinetic_energy(model: &DynamicModel, q: &[f64], qd: &[f64]) -> f64 {
    let poses = model.chain.forward_kinematics(q).unwrap();
    let axes: Vec<_> = poses
        .units
        .iter()
        .map(|u| (u.joint.rotation.column(2).into_owned(), u.joint.translation))
        .collect();
    let mut ke = 0.0;
    for (i, body) in model.bodies.iter().enumerate() {
        let frame = &poses.units[i].joint;
        let c = frame.apply(&body.com_m);
        let mut v = Vector3::zeros();
        let mut w = Vector3::zeros();
        for (j, (z, p)) in axes.iter().enumerate().take(i + 1) {
            v += z.cross(&(c - p)) * qd[j];
            w += z * qd[j];
        }
        let iw = frame.rotation * body.inertia * frame.rotation.transpose();
        ke += 0.5 * body.mass_kg * v.norm_squared() + 0.5 * w.dot(&(iw * w));
    }
    ke
}

pub fn potential_energy(model: &DynamicModel, q: &[f64], g: [f64; 3]) -> f64 {
    let poses = model.chain.forward_kinematics(q).unwrap();
    let g = Vector3::from(g);
    model
        .bodies
        .iter()
        .zip(&poses.units)
        .map(|(b, u)| -b.mass_kg * g.dot(&u.joint.apply(&b.com_m)))
        .sum()
}
