use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modkin::composition::{load_composition, save_composition};
use modkin::kinematics::{workspace_csv, KinematicChain};
use modkin::urdf::{generate_urdf, serialize_urdf};
use modkin::{get_catalog, presets, Exec};
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn modkin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modkin"))
        .args(args)
        .env_remove("MODKIN_CATALOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn farm() -> String {
    data("vertical_farm_3dof.toml").to_string_lossy().into_owned()
}

#[test]
fn convert_example_b_prints_published_sequence() {
    let o = modkin(&["convert", path(&data("example_b.csv"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("sequence: H1-H4-H4-L2-L2-L2"));
}

#[test]
fn convert_writes_composition_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.toml");
    let o = modkin(&["convert", path(&data("example_b.csv")), "-o", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let comp = load_composition(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(comp.unit_sequence_string(), "H1-H4-H4-L2-L2-L2");
    let report = std::fs::read_to_string(dir.path().join("b.report.toml")).unwrap();
    assert!(report.contains("per_row_notes"));
}

#[test]
fn convert_reads_degree_tables() {
    let o = modkin(&[
        "convert",
        path(&data("articulated_deg.csv")),
        "--degrees",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["version"], "modkin-api/1");
    assert_eq!(v["validation"]["ok"], true);
    assert!(v["fidelity"]["rotation_rad"].as_f64().unwrap() < 1e-9);
}

#[test]
fn continuous_twists_keep_the_exact_angle() {
    let o = modkin(&[
        "convert",
        path(&data("example_b.csv")),
        "--continuous-twists",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let t = v["composition"]["units"][1]["twist1_deg"].as_f64().unwrap();
    assert!((t - 2.36f64.to_degrees()).abs() < 1e-9, "{t}");
}

#[test]
fn fk_at_zero_is_orthonormal_and_matches_library() {
    let o = modkin(&["fk", &farm(), "--q", "0,0,0", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let r: [[f64; 3]; 3] = serde_json::from_value(v["end_effector"]["rotation"].clone()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((dot - expected).abs() < 1e-12);
        }
    }
    let t = KinematicChain::new(&presets::vertical_farm_3dof(), get_catalog())
        .end_effector(&[0.0; 3])
        .unwrap();
    let got: [f64; 3] = serde_json::from_value(v["end_effector"]["translation"].clone()).unwrap();
    assert_eq!(got, [t.translation.x, t.translation.y, t.translation.z]);
}

#[test]
fn fk_accepts_negative_angles() {
    let o = modkin(&["fk", &farm(), "--q", "-0.5,0.2,-1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("xyz_m:"));
}

#[test]
fn validate_light_base_exits_one_with_rule() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    let mut comp = presets::vertical_farm_3dof();
    comp.units[0].variant = modkin::Variant::L;
    std::fs::write(&file, save_composition(&comp)).unwrap();
    let o = modkin(&["validate", path(&file)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[ValidationError]"));
    let rule = comp.validate().violations[0].rule.to_string();
    assert!(err.contains(&rule), "{err} lacks {rule}");
}

#[test]
fn dimension_mismatch_is_a_domain_error() {
    let o = modkin(&["fk", &farm(), "--q", "0,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[DimensionMismatch]"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(modkin(&["fk", &farm(), "--bogus"]).status.code(), Some(2));
    assert_eq!(modkin(&["teleport"]).status.code(), Some(2));
    assert_eq!(modkin(&["workspace", &farm()]).status.code(), Some(2));
}

#[test]
fn missing_file_is_reported() {
    let o = modkin(&["validate", "/nonexistent/comp.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[IoError]"));
}

#[test]
fn urdf_file_equals_library_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("farm.urdf");
    let o = modkin(&["urdf", &farm(), "-o", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let expected = serialize_urdf(&generate_urdf(&presets::vertical_farm_3dof(), get_catalog()).unwrap());
    assert_eq!(std::fs::read_to_string(out).unwrap(), expected);
}

#[test]
fn workspace_is_seeded_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for f in [&a, &b] {
        let o = modkin(&["workspace", &farm(), "--samples", "200", "--seed", "4", "-o", path(f)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let points = KinematicChain::new(&presets::vertical_farm_3dof(), get_catalog())
        .sample_workspace(200, 4, Exec::Sequential)
        .unwrap();
    assert_eq!(text, workspace_csv(&points));
}

#[test]
fn torque_json_mirrors_service_document() {
    let o = modkin(&[
        "torque",
        &farm(),
        "--payload",
        "0.3",
        "--max-samples",
        "300",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let mut comp = presets::vertical_farm_3dof();
    comp.payload.mass_kg = 0.3;
    let opts = modkin::dynamics::FeasibilityOptions {
        max_samples: 300,
        ..Default::default()
    };
    let expected = modkin_service::api::torques(get_catalog(), &comp, None, None, &opts, Exec::default()).unwrap();
    assert_eq!(v, expected);
}

#[test]
fn ik_round_trips_a_reachable_pose() {
    let chain = KinematicChain::new(&presets::vertical_farm_3dof(), get_catalog());
    let pose = modkin::composition::Pose::from_transform(&chain.end_effector(&[0.3, -0.8, 1.2]).unwrap());
    let target = pose
        .xyz_m
        .iter()
        .chain(&pose.rpy_deg)
        .map(|x| format!("{x:.12}"))
        .collect::<Vec<_>>()
        .join(",");
    let o = modkin(&["ik", &farm(), "--target", &target, "--seed", "1", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["converged"], true);
    let again = modkin(&["ik", &farm(), "--target", &target, "--seed", "1", "--format", "json"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn ik_unreachable_target_exits_one() {
    let o = modkin(&["ik", &farm(), "--target", "3,0,0,0,0,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("converged: false"));
    assert!(stderr(&o).starts_with("error[NotConverged]"));
}

#[test]
fn catalog_override_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cat.toml");
    let mut cat = modkin::Catalog::default();
    cat.heavy.tau_nom_nm = 20.0;
    std::fs::write(&file, cat.to_toml()).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_modkin"))
        .args(["catalog", "--format", "json"])
        .env("MODKIN_CATALOG", &file)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["heavy"]["tau_nom_nm"], 20.0);
}
