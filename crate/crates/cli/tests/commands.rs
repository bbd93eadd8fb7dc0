use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fundform::fields::io::{read_field, write_field};
use fundform::fixtures::Fixture;
use fundform::immersion::RigidMotion;
use fundform::linalg::expm_skew;
use fundform::ImmersionField;
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

fn fundform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fundform"))
        .args(args)
        .env_remove("FF_THREADS")
        .output()
        .expect("spawn fundform")
}

fn code(args: &[&str]) -> i32 {
    fundform(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn fixture(dir: &Path, name: &str, n: usize) -> PathBuf {
    let out = dir.join(format!("{name}-{n}"));
    assert_eq!(code(&["fixture", "--fixture", name, "--resolution", &n.to_string(), "--output-dir", s(&out)]), 0);
    out.join("f.json")
}

fn forms(dir: &Path, f: &Path, tag: &str) -> PathBuf {
    let out = dir.join(format!("forms-{tag}"));
    assert_eq!(code(&["forms", "-i", s(f), "--output-dir", s(&out)]), 0);
    out
}

#[test]
fn flat_fixture_reconstructs_the_chart_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), "plane", 17);
    let fm = forms(dir.path(), &f, "plane");
    let (g_path, b_path) = (fm.join("g.json"), fm.join("B.json"));
    let rec = dir.path().join("rec");
    let args = ["reconstruct", "-i", s(&g_path), "-i", s(&b_path), "--output-dir", s(&rec)];
    assert_eq!(code(&args), 0);
    let (got, kind) = read_field(&rec.join("f.json")).unwrap();
    assert_eq!(kind.as_deref(), Some("immersion"));
    let (want, _) = read_field(&f).unwrap();
    // integration starts at the lower corner (0, 0) with f = 0 and A = I
    assert!(got.sub(&want).unwrap().max_abs() < 1e-14);
    let diag = json(&rec.join("diagnostics.json"));
    assert_eq!(diag["compatible"], Value::Bool(true));
    assert_eq!(diag["residuals_linf"]["p"], Value::String("inf".into()));
}

#[test]
fn forms_then_check_gcr_on_cylinder_is_second_order() {
    let dir = tempfile::tempdir().unwrap();
    for n in [17, 33] {
        let f = fixture(dir.path(), "cylinder", n);
        let fm = forms(dir.path(), &f, &n.to_string());
        let (g_path, b_path, ne_path) = (fm.join("g.json"), fm.join("B.json"), fm.join("ne.json"));
        let report = json(&fm.join("forms.json"));
        assert_eq!(report["codim"], 1);
        assert!(report["min_metric_eigenvalue"].as_f64().unwrap() > 0.99);
        let out = dir.path().join(format!("gcr-{n}"));
        let args = [
            "check-gcr",
            "-i",
            s(&g_path),
            "-i",
            s(&b_path),
            "-i",
            s(&ne_path),
            "--p",
            "2",
            "--output-dir",
            s(&out),
        ];
        assert_eq!(code(&args), 0);
        let rep = json(&out.join("residuals.json"));
        assert_eq!(rep["compatible"], Value::Bool(true));
        assert_eq!(rep["residuals"]["p"], 2.0);
        let h = 1.5 / (n - 1) as f64;
        let total = rep["residuals_linf"]["gauss"].as_f64().unwrap() + rep["residuals_linf"]["codazzi"].as_f64().unwrap();
        assert!(total <= h * h, "n = {n}: {total}");
    }
}

#[test]
fn align_recovers_a_rigid_motion() {
    let dir = tempfile::tempdir().unwrap();
    let f_ref = fixture(dir.path(), "saddle", 17);
    let (field, _) = read_field(&f_ref).unwrap();
    let fr = ImmersionField::new(field).unwrap();
    let q = expm_skew(&DMatrix::from_row_slice(3, 3, &[0.0, -0.7, 0.2, 0.7, 0.0, -1.1, -0.2, 1.1, 0.0]));
    let motion = RigidMotion::new(q, DVector::from_vec(vec![3.0, -1.0, 0.5])).unwrap();
    let moved = dir.path().join("moved.json");
    write_field(&moved, &motion.apply(&fr), Some("immersion")).unwrap();
    let out = dir.path().join("align");
    assert_eq!(code(&["align", "-i", s(&moved), "-i", s(&f_ref), "--output-dir", s(&out)]), 0);
    let rep = json(&out.join("alignment.json"));
    assert!(rep["residual"].as_f64().unwrap() < 1e-20);
    assert!(rep["quotient_distance_w2"].as_f64().unwrap() < 1e-9);
    let found: RigidMotion = serde_json::from_value(rep["motion"].clone()).unwrap();
    let back = found.compose(&motion);
    assert!((&back.rotation - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
    assert!(back.translation.norm() < 1e-12);
}

#[test]
fn initial_frame_and_position_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), "sphere-cap", 17);
    let fm = forms(dir.path(), &f, "cap");
    let (g_path, b_path) = (fm.join("g.json"), fm.join("B.json"));
    let init = dir.path().join("init.json");
    fs::write(&init, r#"{"a0": [[0, -1, 0], [1, 0, 0], [0, 0, 1]], "f0": [1, 2, 3], "x0": [8, 8]}"#).unwrap();
    let rec = dir.path().join("rec");
    let args = [
        "reconstruct",
        "-i",
        s(&g_path),
        "-i",
        s(&b_path),
        "-i",
        s(&init),
        "--output-dir",
        s(&rec),
    ];
    assert_eq!(code(&args), 0);
    let (got, _) = read_field(&rec.join("f.json")).unwrap();
    let centre = got.chart().index(&[8, 8]);
    assert_eq!(got.at(centre), &[1.0, 2.0, 3.0]);
    let (frame, kind) = read_field(&rec.join("A.json")).unwrap();
    assert_eq!(kind.as_deref(), Some("frame"));
    assert_eq!(frame.at(centre), &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn corrupted_second_form_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), "sphere-cap", 33);
    let fm = forms(dir.path(), &f, "cap");
    let (b, kind) = read_field(&fm.join("B.json")).unwrap();
    let bad = dir.path().join("B-bad.json");
    write_field(&bad, &b.scale(1.5), kind.as_deref()).unwrap();
    let g = fm.join("g.json");
    let out = dir.path().join("rec");
    let run = fundform(&["reconstruct", "-i", s(&g), "-i", s(&bad), "--output-dir", s(&out)]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("Gauss residual"));
    assert!(!out.join("f.json").exists());
    let diag = json(&out.join("diagnostics.json"));
    assert!(diag["residuals_linf"]["gauss"].as_f64().unwrap() > 0.5);
    assert_eq!(json(&out.join("manifest.json"))["exit_code"], 2);
    let forced = dir.path().join("forced");
    assert_eq!(code(&["reconstruct", "-i", s(&g), "-i", s(&bad), "--force", "--output-dir", s(&forced)]), 0);
    let diag = json(&forced.join("diagnostics.json"));
    assert_eq!(diag["compatible"], Value::Bool(false));
    assert_eq!(diag["forced"], Value::Bool(true));
    assert!(forced.join("f.json").exists());
}

#[test]
fn config_file_and_manifest_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nfamily = \"graph-amplitude\"\ns = [0.25, 0.125, 0.0625]\nresolution = [17]\np = 3\n").unwrap();
    let a = dir.path().join("a");
    assert_eq!(code(&["depend", "--config", s(&cfg), "--p", "5", "--output-dir", s(&a)]), 0);
    let study = json(&a.join("depend.json"));
    assert_eq!(study["p"], 5.0);
    assert_eq!(study["resolution"], 17);
    assert_eq!(study["rows"].as_array().unwrap().len(), 3);
    let manifest = a.join("manifest.json");
    let m = json(&manifest);
    assert_eq!(m["parameters"]["p"], 5.0);
    assert_eq!(m["inputs"], Value::Array(vec![]));
    let b = dir.path().join("b");
    assert_eq!(code(&["depend", "--config", s(&manifest), "--output-dir", s(&b)]), 0);
    assert_eq!(fs::read(a.join("depend.csv")).unwrap(), fs::read(b.join("depend.csv")).unwrap());
    assert_eq!(fs::read(&manifest).unwrap(), fs::read(b.join("manifest.json")).unwrap());
}

#[test]
fn rigidity_spec_file_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("family.json");
    fs::write(&spec, r#"{"t": [0.1, 0.05], "resolution": [17], "direction": [0.0, 0.0, 1.0], "random_rotations": 5}"#).unwrap();
    let out = dir.path().join("rig");
    assert_eq!(code(&["rigidity", "-i", s(&spec), "--seed", "42", "--output-dir", s(&out)]), 0);
    let csv = fs::read_to_string(out.join("rigidity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("t,defect,lhs,ratio,"));
    let summary = json(&out.join("rigidity.json"));
    assert_eq!(summary["random_rotations"], 5);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 42);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(m["inputs"][0].get("payload_sha256").is_none());
}

#[test]
fn unperturbed_rigidity_member_has_empty_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rig");
    assert_eq!(code(&["rigidity", "--t", "0", "--resolution", "9", "--output-dir", s(&out)]), 0);
    let csv = fs::read_to_string(out.join("rigidity.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], &["0", "0", "0", ""]);
}

#[test]
fn converge_writes_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv");
    let args = [
        "converge",
        "--generator",
        "flat",
        "--eps",
        "0.5,0.25,0.125",
        "--resolution",
        "17,17",
        "--output-dir",
        s(&out),
    ];
    assert_eq!(code(&args), 0);
    let csv = fs::read_to_string(out.join("converge.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "eps,metric_error,metric_error_analytic,second_form_norm,j1,j2,j3,j4,j5,j6,j7,j8,j_sum,j_combined,remainder,pairing_delta"
    );
    assert_eq!(csv.lines().count(), 4);
    let summary = json(&out.join("converge.json"));
    assert_eq!(summary["generator"]["name"], "flat");
    assert_eq!(summary["weak_limit"]["constant_sequence"], Value::Bool(true));
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fundform"))
        .args(["depend", "--s", "0.1", "--resolution", "9", "--output-dir", s(dir.path())])
        .env("FF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["depend", "--p", "x"]), 2);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["forms", "-i", "/no/such/file.json", "--output-dir", s(dir.path())]), 2);
    assert_eq!(code(&["fixture", "--output-dir", s(dir.path())]), 2);
    assert_eq!(code(&["fixture", "--fixture", "torus", "--output-dir", s(dir.path())]), 2);
    assert_eq!(code(&["depend", "--family", "torus", "--output-dir", s(dir.path())]), 2);
}

#[test]
fn reconstruction_needs_p_above_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path(), "plane", 9);
    let fm = forms(dir.path(), &f, "plane");
    let (g_path, b_path) = (fm.join("g.json"), fm.join("B.json"));
    let args = ["reconstruct", "-i", s(&g_path), "-i", s(&b_path), "--p", "2"];
    let out = dir.path().join("rec");
    let mut full = args.to_vec();
    full.extend(["--output-dir", s(&out)]);
    assert_eq!(code(&full), 2);
    full[6] = "2.5";
    assert_eq!(code(&full), 0);
}

#[test]
fn degenerate_immersion_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let chart = Fixture::Plane.chart(9);
    let f = ImmersionField::from_fn(&chart, |x| vec![x[0], 0.0, 0.0]).unwrap();
    let path = dir.path().join("f.json");
    write_field(&path, &f, Some("immersion")).unwrap();
    assert_eq!(code(&["forms", "-i", s(&path), "--output-dir", s(&dir.path().join("out"))]), 3);
}
