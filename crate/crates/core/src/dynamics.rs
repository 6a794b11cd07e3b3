//! Rigid-body model of a composition and its joint torques.
//!
//! Each moving body `i` is expressed in the joint frame of unit `i` and
//! holds that unit's actuator (solid cylinder on the joint axis, between the
//! input frame and the joint frame) plus, for units with a link module, the
//! link (solid cylinder along x). The payload is a point mass on the last
//! body. Joint friction and rotor inertia are not modeled.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Variant};
use crate::composition::Composition;
use crate::error::{check_dim, Error, Result};
use crate::exec::Exec;
use crate::kinematics::{stream_rng, transform_t2, FramePoses, KinematicChain};
use crate::numfmt::sig;

pub const STANDARD_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyInertia {
    pub mass_kg: f64,
    /// Center of mass in the body's joint frame.
    pub com_m: Vector3<f64>,
    /// Inertia tensor about the center of mass, joint-frame axes.
    pub inertia: Matrix3<f64>,
}

impl BodyInertia {
    pub fn zero() -> Self {
        Self {
            mass_kg: 0.0,
            com_m: Vector3::zeros(),
            inertia: Matrix3::zeros(),
        }
    }

    pub fn point(mass_kg: f64, at: Vector3<f64>) -> Self {
        Self {
            mass_kg,
            com_m: at,
            inertia: Matrix3::zeros(),
        }
    }

    /// Solid cylinder centered at `center` with its axis along `axis` (0=x, 1=y, 2=z).
    pub fn cylinder(mass_kg: f64, radius: f64, length: f64, axis: usize, center: Vector3<f64>) -> Self {
        let across = mass_kg * (3.0 * radius * radius + length * length) / 12.0;
        let mut d = Vector3::repeat(across);
        d[axis] = mass_kg * radius * radius / 2.0;
        Self {
            mass_kg,
            com_m: center,
            inertia: Matrix3::from_diagonal(&d),
        }
    }

    /// Combines rigidly attached parts using the parallel-axis theorem.
    pub fn combine(parts: &[BodyInertia]) -> Self {
        let mass: f64 = parts.iter().map(|p| p.mass_kg).sum();
        if mass <= 0.0 {
            return Self::zero();
        }
        let com = parts.iter().map(|p| p.com_m * p.mass_kg).sum::<Vector3<f64>>() / mass;
        let inertia = parts
            .iter()
            .map(|p| {
                let d = p.com_m - com;
                p.inertia + (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * p.mass_kg
            })
            .sum();
        Self {
            mass_kg: mass,
            com_m: com,
            inertia,
        }
    }

    /// Symmetric with principal moments that satisfy the triangle inequalities.
    pub fn is_physical(&self, tol: f64) -> bool {
        if (self.inertia - self.inertia.transpose()).abs().max() > tol {
            return false;
        }
        let ev = self.inertia.symmetric_eigenvalues();
        let (a, b, c) = (ev[0], ev[1], ev[2]);
        ev.iter().all(|&e| e >= -tol) && a + b >= c - tol && a + c >= b - tol && b + c >= a - tol
    }
}

/// One body per unit, built from catalog data. The payload (if any) is
/// merged into the last body.
pub fn build_inertial_model(comp: &Composition, catalog: &Catalog) -> Vec<BodyInertia> {
    let n = comp.dof();
    comp.units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let act = catalog.actuator(u.variant);
            let g = catalog.unit_geometry(u.kind);
            let mut parts = vec![BodyInertia::cylinder(
                act.mass_kg,
                act.body_radius_m,
                g.z12_m,
                2,
                Vector3::new(0.0, 0.0, -g.z12_m / 2.0),
            )];
            if u.kind.has_link() {
                let link = &catalog.link;
                parts.push(BodyInertia::cylinder(
                    link.mass_kg,
                    link.radius_m,
                    g.x23_m,
                    0,
                    Vector3::new(g.x23_m / 2.0, 0.0, 0.0),
                ));
            }
            if i + 1 == n && comp.payload.mass_kg > 0.0 {
                let offset = Vector3::from(comp.payload.offset_m);
                let at = if u.kind.has_link() {
                    transform_t2(g.x23_m, u.twist1_deg.to_radians()).apply(&offset)
                } else {
                    offset
                };
                parts.push(BodyInertia::point(comp.payload.mass_kg, at));
            }
            BodyInertia::combine(&parts)
        })
        .collect()
}

/// Kinematic chain plus inertial data.
#[derive(Debug, Clone)]
pub struct DynamicModel {
    pub chain: KinematicChain,
    pub bodies: Vec<BodyInertia>,
    pub variants: Vec<Variant>,
}

impl DynamicModel {
    pub fn new(comp: &Composition, catalog: &Catalog) -> Self {
        Self {
            chain: KinematicChain::new(comp, catalog),
            bodies: build_inertial_model(comp, catalog),
            variants: comp.units.iter().map(|u| u.variant).collect(),
        }
    }

    /// Uses caller-provided bodies instead of catalog-derived ones.
    pub fn with_bodies(comp: &Composition, catalog: &Catalog, bodies: Vec<BodyInertia>) -> Result<Self> {
        check_dim(comp.dof(), bodies.len())?;
        Ok(Self {
            chain: KinematicChain::new(comp, catalog),
            bodies,
            variants: comp.units.iter().map(|u| u.variant).collect(),
        })
    }

    pub fn dof(&self) -> usize {
        self.bodies.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass_kg).sum()
    }

    /// Joint torques by recursive Newton–Euler in base coordinates.
    pub fn inverse_dynamics(&self, q: &[f64], qd: &[f64], qdd: &[f64], gravity: [f64; 3]) -> Result<DVector<f64>> {
        let n = self.dof();
        check_dim(n, q.len())?;
        check_dim(n, qd.len())?;
        check_dim(n, qdd.len())?;
        let poses = self.chain.forward_kinematics(q)?;
        Ok(self.rnea(&poses, qd, qdd, Vector3::from(gravity)))
    }

    fn rnea(&self, poses: &FramePoses, qd: &[f64], qdd: &[f64], gravity: Vector3<f64>) -> DVector<f64> {
        let n = self.dof();
        let mut z = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        let mut omega = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        let mut acc_com = Vec::with_capacity(n);
        let mut com = Vec::with_capacity(n);
        let mut inertia_w = Vec::with_capacity(n);

        let (mut w_prev, mut dw_prev) = (Vector3::zeros(), Vector3::zeros());
        let mut a_prev = -gravity;
        let mut p_prev = poses.base.translation;
        for i in 0..n {
            let frame = &poses.units[i].joint;
            let zi = frame.rotation.column(2).into_owned();
            let pi = frame.translation;
            let d = pi - p_prev;
            let a_pi = a_prev + dw_prev.cross(&d) + w_prev.cross(&w_prev.cross(&d));
            let wi = w_prev + zi * qd[i];
            let dwi = dw_prev + zi * qdd[i] + w_prev.cross(&(zi * qd[i]));
            let ci = frame.apply(&self.bodies[i].com_m);
            let r = ci - pi;
            acc_com.push(a_pi + dwi.cross(&r) + wi.cross(&wi.cross(&r)));
            inertia_w.push(frame.rotation * self.bodies[i].inertia * frame.rotation.transpose());
            (w_prev, dw_prev, a_prev, p_prev) = (wi, dwi, a_pi, pi);
            z.push(zi);
            p.push(pi);
            omega.push(wi);
            alpha.push(dwi);
            com.push(ci);
        }

        let mut tau = DVector::zeros(n);
        let mut f_next = Vector3::zeros();
        let mut n_next = Vector3::zeros();
        for i in (0..n).rev() {
            let m = self.bodies[i].mass_kg;
            let force = acc_com[i] * m;
            let moment = inertia_w[i] * alpha[i] + omega[i].cross(&(inertia_w[i] * omega[i]));
            let lever_next = if i + 1 < n { p[i + 1] - p[i] } else { Vector3::zeros() };
            let fi = force + f_next;
            let ni = moment + (com[i] - p[i]).cross(&force) + n_next + lever_next.cross(&f_next);
            tau[i] = z[i].dot(&ni);
            (f_next, n_next) = (fi, ni);
        }
        tau
    }

    /// Joint-space inertia, one inverse-dynamics column per unit acceleration.
    pub fn mass_matrix(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dof();
        check_dim(n, q.len())?;
        let poses = self.chain.forward_kinematics(q)?;
        let zero = vec![0.0; n];
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            m.set_column(j, &self.rnea(&poses, &zero, &e, Vector3::zeros()));
        }
        Ok(m)
    }

    /// Velocity-product and gravity terms: `τ(q, q̇, 0)`.
    pub fn bias(&self, q: &[f64], qd: &[f64], gravity: [f64; 3]) -> Result<DVector<f64>> {
        self.inverse_dynamics(q, qd, &vec![0.0; self.dof()], gravity)
    }

    pub fn static_torques(&self, q: &[f64], gravity: [f64; 3]) -> Result<DVector<f64>> {
        let zero = vec![0.0; self.dof()];
        self.inverse_dynamics(q, &zero, &zero, gravity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeasibilityOptions {
    /// Samples per joint, uniformly over its limits.
    pub density: usize,
    /// Above this many grid points, a random subset of this size is used.
    pub max_samples: usize,
    /// Replaces the composition's payload mass when set.
    pub payload_mass_kg: Option<f64>,
    /// Adds the worst-case `|M(q)·q̈|` for `|q̈_j| ≤ bound` (rad/s²).
    pub qdd_bound: Option<f64>,
    pub gravity: [f64; 3],
    pub seed: u64,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        Self {
            density: 7,
            max_samples: 100_000,
            payload_mass_kg: None,
            qdd_bound: None,
            gravity: STANDARD_GRAVITY,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTorque {
    pub joint: usize,
    pub variant: Variant,
    /// Largest torque magnitude observed.
    pub tau_nm: f64,
    pub tau_nom_limit: f64,
    pub tau_max_limit: f64,
    pub nominal_ok: bool,
    pub peak_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueReport {
    pub joints: Vec<JointTorque>,
    pub samples: usize,
}

impl TorqueReport {
    fn from_maxima(model: &DynamicModel, catalog: &Catalog, maxima: &[f64], samples: usize) -> Self {
        let joints = maxima
            .iter()
            .zip(&model.variants)
            .enumerate()
            .map(|(i, (&tau, &variant))| {
                let spec = catalog.actuator(variant);
                JointTorque {
                    joint: i + 1,
                    variant,
                    tau_nm: tau,
                    tau_nom_limit: spec.tau_nom_nm,
                    tau_max_limit: spec.tau_max_nm,
                    nominal_ok: tau <= spec.tau_nom_nm,
                    peak_ok: tau <= spec.tau_max_nm,
                }
            })
            .collect();
        Self { joints, samples }
    }

    pub fn all_ok(&self) -> bool {
        self.joints.iter().all(|j| j.nominal_ok && j.peak_ok)
    }

    /// `joint,tau_max_observed,tau_nom,tau_max,nominal_ok,peak_ok` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("joint,tau_max_observed,tau_nom,tau_max,nominal_ok,peak_ok\n");
        for j in &self.joints {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                j.joint,
                sig(j.tau_nm, 9),
                sig(j.tau_nom_limit, 9),
                sig(j.tau_max_limit, 9),
                j.nominal_ok,
                j.peak_ok
            ));
        }
        out
    }
}

fn grid_value(lo: f64, hi: f64, density: usize, k: usize) -> f64 {
    if density == 1 {
        (lo + hi) / 2.0
    } else {
        lo + (hi - lo) * k as f64 / (density - 1) as f64
    }
}

/// Worst-case static (plus optional acceleration) torques over a joint grid,
/// compared with each joint's actuator limits.
pub fn feasibility_check(
    comp: &Composition,
    catalog: &Catalog,
    opts: &FeasibilityOptions,
    exec: Exec,
) -> Result<TorqueReport> {
    let mut comp = comp.clone();
    if let Some(m) = opts.payload_mass_kg {
        comp.payload.mass_kg = m;
    }
    let model = DynamicModel::new(&comp, catalog);
    feasibility_check_model(&model, catalog, opts, exec)
}

pub fn feasibility_check_model(
    model: &DynamicModel,
    catalog: &Catalog,
    opts: &FeasibilityOptions,
    exec: Exec,
) -> Result<TorqueReport> {
    if opts.density == 0 {
        return Err(Error::InvalidArgument("grid density must be at least 1".into()));
    }
    let n = model.dof();
    let limits = model.chain.limits().to_vec();
    let full = (opts.density as f64).powi(n as i32);
    let subsample = full > opts.max_samples as f64;
    let count = if subsample { opts.max_samples } else { full as usize };

    let per_sample = exec.map_range(count, |k| {
        let q: Vec<f64> = if subsample {
            let mut rng = stream_rng(opts.seed, k as u64);
            limits
                .iter()
                .map(|&(lo, hi)| grid_value(lo, hi, opts.density, rng.random_range(0..opts.density)))
                .collect()
        } else {
            let mut rem = k;
            limits
                .iter()
                .map(|&(lo, hi)| {
                    let idx = rem % opts.density;
                    rem /= opts.density;
                    grid_value(lo, hi, opts.density, idx)
                })
                .collect()
        };
        let mut tau = model.static_torques(&q, opts.gravity).expect("dimension matches").abs();
        if let Some(bound) = opts.qdd_bound {
            let m = model.mass_matrix(&q).expect("dimension matches");
            for j in 0..n {
                tau[j] += bound * m.row(j).iter().map(|v| v.abs()).sum::<f64>();
            }
        }
        tau
    });
    let maxima = per_sample.iter().fold(vec![0.0f64; n], |mut acc, t| {
        for (a, v) in acc.iter_mut().zip(t.iter()) {
            *a = a.max(*v);
        }
        acc
    });
    Ok(TorqueReport::from_maxima(model, catalog, &maxima, count))
}

/// Static torques at one configuration, compared with the actuator limits.
pub fn torque_report_at(model: &DynamicModel, catalog: &Catalog, q: &[f64], gravity: [f64; 3]) -> Result<TorqueReport> {
    let tau = model.static_torques(q, gravity)?.abs();
    Ok(TorqueReport::from_maxima(model, catalog, tau.as_slice(), 1))
}
