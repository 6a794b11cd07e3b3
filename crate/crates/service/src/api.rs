//! Response documents shared by the HTTP routes and the CLI's `--format json`.

use modkin::composition::{Payload, Pose};
use modkin::dh_convert::{convert, ConvertOptions, DhTable};
use modkin::dynamics::{feasibility_check, torque_report_at, DynamicModel, FeasibilityOptions};
use modkin::kinematics::{IkOptions, IkResult, KinematicChain};
use modkin::urdf::{generate_urdf, serialize_urdf};
use modkin::{Catalog, Composition, Error, Exec, Result, ValidationOptions};
use serde::Serialize;
use serde_json::{json, Value};

use crate::API_VERSION;

/// Largest workspace sample count accepted in one request.
pub const MAX_WORKSPACE_SAMPLES: usize = 200_000;

/// Serializes `body` and stamps the API version on it.
pub fn document<T: Serialize>(body: &T) -> Value {
    let mut v = serde_json::to_value(body).expect("response serializes");
    if let Value::Object(map) = &mut v {
        map.insert("version".into(), API_VERSION.into());
    }
    v
}

pub fn catalog(catalog: &Catalog) -> Value {
    document(catalog)
}

pub fn validate(catalog: &Catalog, comp: &Composition, opts: &ValidationOptions) -> Value {
    let report = comp.validate_with(catalog, opts);
    let mut v = document(&report);
    v["sequence"] = comp.unit_sequence_string().into();
    v
}

pub fn fk(catalog: &Catalog, comp: &Composition, q: &[f64]) -> Result<Value> {
    let poses = KinematicChain::new(comp, catalog).forward_kinematics(q)?;
    let mut v = document(&poses);
    v["end_effector_pose"] = serde_json::to_value(Pose::from_transform(&poses.end_effector)).expect("pose serializes");
    Ok(v)
}

/// A non-converged solve is still a successful response; `converged` tells them apart.
pub fn ik(
    catalog: &Catalog,
    comp: &Composition,
    target: &Pose,
    seed: Option<&[f64]>,
    opts: &IkOptions,
) -> Result<Value> {
    let chain = KinematicChain::new(comp, catalog);
    let zeros = vec![0.0; chain.dof()];
    let result: IkResult = match chain.inverse_kinematics(&target.to_transform(), seed.unwrap_or(&zeros), opts) {
        Ok(r) => r,
        Err(Error::NotConverged(best)) => *best,
        Err(e) => return Err(e),
    };
    let mut v = document(&result);
    if let Ok(pose) = chain.end_effector(&result.q) {
        v["achieved_pose"] = serde_json::to_value(Pose::from_transform(&pose)).expect("pose serializes");
    }
    Ok(v)
}

pub fn convert_table(catalog: &Catalog, table: &DhTable, opts: &ConvertOptions) -> Result<Value> {
    Ok(document(&convert(table, catalog, opts)?))
}

/// Static torques at `q` when given, otherwise the worst case over the joint-space grid.
pub fn torques(
    catalog: &Catalog,
    comp: &Composition,
    q: Option<&[f64]>,
    payload: Option<Payload>,
    opts: &FeasibilityOptions,
    exec: Exec,
) -> Result<Value> {
    let mut comp = comp.clone();
    if let Some(p) = payload {
        comp.payload = p;
    }
    let (report, mode) = match q {
        Some(q) => {
            let model = DynamicModel::new(&comp, catalog);
            (torque_report_at(&model, catalog, q, opts.gravity)?, "pose")
        }
        None => (feasibility_check(&comp, catalog, opts, exec)?, "grid"),
    };
    let mut v = document(&report);
    v["mode"] = mode.into();
    v["all_ok"] = report.all_ok().into();
    Ok(v)
}

pub fn workspace(catalog: &Catalog, comp: &Composition, samples: usize, seed: u64, exec: Exec) -> Result<Value> {
    if samples > MAX_WORKSPACE_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "samples must not exceed {MAX_WORKSPACE_SAMPLES}, got {samples}"
        )));
    }
    let points = KinematicChain::new(comp, catalog).sample_workspace(samples, seed, exec)?;
    let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
    Ok(document(&json!({ "samples": samples, "seed": seed, "points": points })))
}

pub fn urdf(catalog: &Catalog, comp: &Composition) -> Result<Value> {
    let doc = generate_urdf(comp, catalog)?;
    Ok(document(
        &json!({ "robot_name": doc.robot_name, "urdf_xml": serialize_urdf(&doc) }),
    ))
}
