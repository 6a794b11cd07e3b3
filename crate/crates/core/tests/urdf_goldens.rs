//! Emitted URDF text is compared byte for byte with files under
//! `tests/goldens/`. Run with `UPDATE_GOLDENS=1` to rewrite them.

mod common;

use std::path::PathBuf;

use common::{random_q, rng};
use modkin::catalog::get_catalog;
use modkin::dynamics::DynamicModel;
use modkin::kinematics::KinematicChain;
use modkin::presets;
use modkin::urdf::{generate_urdf, parse_urdf, serialize_urdf, urdf_fk_oracle, JointType};

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/goldens")
        .join(format!("{name}.urdf"))
}

#[test]
fn emitted_files_match_goldens() {
    let update = std::env::var_os("UPDATE_GOLDENS").is_some();
    for (name, comp) in presets::golden_compositions() {
        let xml = serialize_urdf(&generate_urdf(&comp, get_catalog()).unwrap());
        let path = golden_path(&name);
        if update {
            std::fs::write(&path, &xml).unwrap();
            continue;
        }
        let golden = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDENS=1)", path.display()));
        assert!(golden == xml, "{name}: emitted URDF differs from {}", path.display());
    }
}

#[test]
fn reparse_reproduces_text() {
    for (name, comp) in presets::golden_compositions() {
        let xml = serialize_urdf(&generate_urdf(&comp, get_catalog()).unwrap());
        let doc = parse_urdf(&xml).unwrap();
        assert_eq!(serialize_urdf(&doc), xml, "{name}");
    }
}

#[test]
fn oracle_agrees_with_kinematics() {
    let mut r = rng(11);
    for (name, comp) in presets::golden_compositions() {
        let doc = generate_urdf(&comp, get_catalog()).unwrap();
        let chain = KinematicChain::new(&comp, get_catalog());
        for _ in 0..100 {
            let q = random_q(&mut r, comp.dof(), std::f64::consts::PI);
            let (dp, dr) = urdf_fk_oracle(&doc, &q)
                .unwrap()
                .distance(&chain.end_effector(&q).unwrap());
            assert!(dp <= 1e-9 && dr <= 1e-9, "{name}: {dp:e} m, {dr:e} rad");
        }
    }
}

#[test]
fn parsed_documents_stay_close_to_the_chain() {
    // Nine printed digits keep the re-parsed model within a few nanometers.
    let mut r = rng(12);
    for (name, comp) in presets::golden_compositions() {
        let xml = serialize_urdf(&generate_urdf(&comp, get_catalog()).unwrap());
        let doc = parse_urdf(&xml).unwrap();
        let chain = KinematicChain::new(&comp, get_catalog());
        for _ in 0..20 {
            let q = random_q(&mut r, comp.dof(), std::f64::consts::PI);
            let (dp, dr) = urdf_fk_oracle(&doc, &q)
                .unwrap()
                .distance(&chain.end_effector(&q).unwrap());
            assert!(dp <= 1e-7 && dr <= 1e-7, "{name}: {dp:e} m, {dr:e} rad");
        }
    }
}

#[test]
fn documents_are_trees_with_catalog_limits() {
    let catalog = get_catalog();
    for (name, mut comp) in presets::golden_compositions() {
        comp.payload.mass_kg = 0.25;
        let doc = generate_urdf(&comp, catalog).unwrap();
        assert_eq!(doc.check_tree().unwrap(), "base_link", "{name}");
        assert_eq!(doc.revolute_count(), comp.dof());
        let model = DynamicModel::new(&comp, catalog);
        assert!((doc.total_mass() - model.total_mass()).abs() <= 1e-12, "{name}");
        let revolute = doc.joints.iter().filter(|j| j.joint_type == JointType::Revolute);
        for (joint, unit) in revolute.zip(&comp.units) {
            let act = catalog.actuator(unit.variant);
            let limit = joint.limit.unwrap();
            assert_eq!(joint.axis, Some([0.0, 0.0, 1.0]));
            assert_eq!(limit.effort, act.tau_max_nm);
            assert_eq!(limit.velocity, act.speed_rad_s());
        }
        let xml = serialize_urdf(&doc);
        assert_eq!(xml.matches(r#"type="revolute""#).count(), comp.dof());
        assert!(roxmltree::Document::parse(&xml).is_ok());
    }
}

#[test]
fn invalid_compositions_are_refused() {
    let mut comp = presets::vertical_farm_3dof();
    comp.units.swap(0, 2);
    let err = generate_urdf(&comp, get_catalog()).unwrap_err();
    assert_eq!(err.code(), "ValidationError");
}
