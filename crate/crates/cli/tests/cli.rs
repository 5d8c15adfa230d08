use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use symabs::abstraction::parse_dump;
use symabs_cli::report::parse_summary;

const DESK: &str = include_str!("../../../specs/desk.json");

fn desk_with(run: &str) -> String {
    DESK.replace(r#""run": {"seed": 7}"#, &format!(r#""run": {run}"#))
}

fn symabs(spec: &str, out: &Path, threads: Option<usize>) -> Output {
    let spec_path = out.with_extension("json");
    fs::write(&spec_path, spec).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_symabs"));
    cmd.arg("run").arg(&spec_path).arg("--out").arg(out);
    if let Some(n) = threads {
        cmd.arg("--threads").arg(n.to_string());
    }
    cmd.output().expect("binary runs")
}

fn summary(out: &Path) -> std::collections::BTreeMap<String, String> {
    parse_summary(&fs::read_to_string(out.join("report.txt")).unwrap())
}

#[test]
fn desk_spec_passes_with_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("desk");
    let o = symabs(DESK, &out, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["status"], "pass");
    assert!(s["lmi_max_eigenvalue"].parse::<f64>().unwrap() <= 0.0);
    assert_eq!(s["trace_violations"], "0");
    assert_eq!(s["relation"], "pass");
    for i in 0..2 {
        let text = fs::read_to_string(out.join(format!("abstraction_{i}.txt"))).unwrap();
        let abs = parse_dump(&text).unwrap();
        assert_eq!(abs.num_states(), 19);
        assert_eq!(abs.original_grid().len(), 11);
    }
    for t in 0..5 {
        let csv = fs::read_to_string(out.join(format!("trace_{t}.csv"))).unwrap();
        assert!(csv.starts_with("k,x1,x2,xhat1,xhat2,V,bound,out_err\n"));
        assert_eq!(csv.lines().count(), 102);
    }
    assert!(!out.join("trace_5.csv").exists());
}

#[test]
fn report_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    symabs(DESK, &out, None);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    for line in [
        "seed = 7",
        "passivity_samples = 10000",
        "psi = Linear(0.5)",
        "delta = 0.05",
        "gamma_domain = Certified",
        "lmi_tolerance = 1e-9",
        "relation_interior_points = 1",
    ] {
        assert!(report.contains(line), "missing `{line}`");
    }
}

#[test]
fn runs_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = desk_with(r#"{"seed": 3, "traces": 20, "horizon": 30, "storage_samples": 200}"#);
    let a = dir.path().join("one");
    let b = dir.path().join("four");
    assert_eq!(symabs(&spec, &a, Some(1)).status.code(), Some(0));
    assert_eq!(symabs(&spec, &b, Some(4)).status.code(), Some(0));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 8);
    for name in names {
        let x = fs::read(a.join(&name)).unwrap();
        let y = fs::read(b.join(&name)).unwrap();
        assert!(x == y, "{name:?} differs between thread counts");
    }
}

#[test]
fn feedback_gain_outside_range_is_rejected_in_passivity_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gain");
    let o = symabs(&DESK.replace(r#""lambda_fb": 0.5"#, r#""lambda_fb": 0.9"#), &out, None);
    assert_eq!(o.status.code(), Some(2));
    let s = summary(&out);
    assert_eq!(s["failed_stage"], "passivity");
    assert!(s["error"].contains("(0, 0.5]"));
}

#[test]
fn corrupted_abstract_coupling_fails_the_match() {
    let spec = r#"{
        "subsystems": [{
            "dynamics": "integrator",
            "state_box": {"lower": [0.0], "upper": [1.0]},
            "input_box": {"lower": [0.0], "upper": [0.1]},
            "eta": 0.1, "mu1": 0.1, "lambda_fb": 0.5, "repeat": 2
        }],
        "coupling": {"matrix": {
            "m": [[-0.375, 0.375], [0.375, -0.375]],
            "m_hat": [[-0.376, 0.375], [0.375, -0.375]]
        }},
        "run": {"traces": 0, "relation_check": false, "storage_samples": 10}
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mhat");
    let o = symabs(spec, &out, None);
    assert_eq!(o.status.code(), Some(1));
    let s = summary(&out);
    assert_eq!(s["status"], "fail");
    assert_eq!(s["failed_stage"], "composition");
    assert!((s["coupling_deviation"].parse::<f64>().unwrap() - 1e-3).abs() < 1e-12);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("refused = coupling match"));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = r#"{"subsystems": []}"#;
    let o = symabs(missing, &dir.path().join("missing"), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("coupling"));

    let wide = DESK.replace(r#""eta": 0.1"#, r#""eta": 1.5"#);
    let o = symabs(&wide, &dir.path().join("wide"), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("span"));
}

#[test]
fn triple_cap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cap");
    let o = symabs(&desk_with(r#"{"max_triples": 100}"#), &out, None);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(summary(&out)["failed_stage"], "abstraction");
}

#[test]
fn shipped_specs_pass() {
    let dir = tempfile::tempdir().unwrap();
    let specs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut ran = 0;
    for entry in fs::read_dir(specs).unwrap() {
        let path = entry.unwrap().path();
        let out = dir.path().join(path.file_stem().unwrap());
        let o = Command::new(env!("CARGO_BIN_EXE_symabs"))
            .arg("run")
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&o.stderr)
        );
        assert_eq!(summary(&out)["status"], "pass");
        ran += 1;
    }
    assert_eq!(ran, 3);
}
