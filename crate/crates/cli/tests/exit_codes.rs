//! The exit-code contract under corrupted inputs: 0 on success, 2 when an
//! input fails validation, 3 when the numerics break down.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use fundform::fields::io::{read_field, write_field};
use fundform::fixtures::Fixture;
use fundform::immersion::{induced_metric, second_form};
use fundform::Field;
use proptest::prelude::*;
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_fundform"))
        .args(args)
        .env_remove("FF_THREADS")
        .output()
        .expect("spawn fundform")
        .status
        .code()
        .unwrap()
}

/// Harvested sphere-cap forms at n = 17, written once.
fn clean() -> &'static (TempDir, Field, Field) {
    static CLEAN: OnceLock<(TempDir, Field, Field)> = OnceLock::new();
    CLEAN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture::SphereCap.immersion(17);
        let g = induced_metric(&f).unwrap();
        let (b, _) = second_form(&f).unwrap();
        (dir, g.into_field(), b.into_field())
    })
}

#[derive(Clone, Debug)]
enum Corruption {
    None,
    ScaleB(f64),
    NegateMetric,
    NanInMetric(usize),
    TruncatePayload(usize),
    SwapInputs,
    WrongKind,
    BadHeader,
}

fn corruption() -> impl Strategy<Value = Corruption> {
    prop_oneof![
        Just(Corruption::None),
        prop_oneof![0.3f64..2.0, -0.9f64..-0.3].prop_map(Corruption::ScaleB),
        Just(Corruption::NegateMetric),
        (0usize..289).prop_map(Corruption::NanInMetric),
        (1usize..64).prop_map(Corruption::TruncatePayload),
        Just(Corruption::SwapInputs),
        Just(Corruption::WrongKind),
        Just(Corruption::BadHeader),
    ]
}

fn write_case(dir: &Path, c: &Corruption) -> (String, String) {
    let (_, g, b) = clean();
    let (mut g, mut b) = (g.clone(), b.clone());
    let (mut g_kind, b_kind) = ("metric", "second_form");
    match c {
        Corruption::ScaleB(delta) => b = b.scale(1.0 + delta),
        Corruption::NegateMetric => g = g.scale(-1.0),
        Corruption::NanInMetric(p) => g.at_mut(*p)[0] = f64::NAN,
        Corruption::WrongKind => g_kind = "immersion",
        _ => {}
    }
    let gp = dir.join("g.json");
    let bp = dir.join("B.json");
    write_field(&gp, &g, Some(g_kind)).unwrap();
    write_field(&bp, &b, Some(b_kind)).unwrap();
    match c {
        Corruption::TruncatePayload(cut) => {
            let bin = dir.join("B.bin");
            let bytes = fs::read(&bin).unwrap();
            fs::write(&bin, &bytes[..bytes.len() - cut]).unwrap();
        }
        Corruption::BadHeader => {
            let text = fs::read_to_string(&gp).unwrap().replace("\"row-major\"", "\"column-major\"");
            fs::write(&gp, text).unwrap();
        }
        _ => {}
    }
    let (g, b) = (gp.to_str().unwrap().to_string(), bp.to_str().unwrap().to_string());
    match c {
        Corruption::SwapInputs => (b, g),
        _ => (g, b),
    }
}

fn expected(c: &Corruption, force: bool) -> i32 {
    match c {
        Corruption::None => 0,
        Corruption::ScaleB(_) if force => 0,
        _ => 2,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reconstruct_exit_codes(c in corruption(), force in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let (g, b) = write_case(dir.path(), &c);
        let out = dir.path().join("out");
        let mut args = vec!["reconstruct", "-i", &g, "-i", &b, "--output-dir", out.to_str().unwrap()];
        if force {
            args.push("--force");
        }
        let code = run(&args);
        prop_assert_eq!(code, expected(&c, force), "{:?} force={}", c, force);
        if code == 0 {
            let (f, _) = read_field(&out.join("f.json")).unwrap();
            prop_assert!(f.data().iter().all(|v| v.is_finite()));
        }
        let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap_or_default())
            .unwrap_or(serde_json::Value::Null);
        if !manifest.is_null() {
            prop_assert_eq!(manifest["exit_code"].as_i64(), Some(code as i64));
        }
    }

    #[test]
    fn check_gcr_reports_rather_than_fails(delta in 0.0f64..1.0) {
        let dir = tempfile::tempdir().unwrap();
        let (g, b) = write_case(dir.path(), &Corruption::ScaleB(delta));
        let out = dir.path().join("out");
        prop_assert_eq!(run(&["check-gcr", "-i", &g, "-i", &b, "--output-dir", out.to_str().unwrap()]), 0);
        let rep: serde_json::Value = serde_json::from_slice(&fs::read(out.join("residuals.json")).unwrap()).unwrap();
        let gauss = rep["residuals"]["gauss"].as_f64().unwrap();
        // B ↦ (1+δ)B moves B∧B by (2δ + δ²) on the unit sphere
        prop_assert!(gauss > (2.0 * delta + delta * delta) * 0.8 - 0.01);
    }
}
