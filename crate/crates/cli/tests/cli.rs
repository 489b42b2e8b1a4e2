use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BUNDLED: [&str; 8] = [
    "free_packet_qt",
    "coherent_state_qt",
    "quartic_ehrenfest",
    "burgers_focusing_qa",
    "gaussian_qa_cwe",
    "free_shear_pm",
    "harmonic_qa_2d",
    "vortex_qt_2d",
];

fn qcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcl")).args(args).output().expect("spawn qcl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_bundled(name: &str) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = qcl(&["run", name, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{name}:\n{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["status"], "pass");
    let checks = report["checks"].as_array().unwrap();
    let requested = report["scenario"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), requested.len());
    for (c, r) in checks.iter().zip(requested) {
        assert_eq!(c["kind"], r["kind"]);
        assert!(!c["source"].as_str().unwrap().is_empty());
    }
}

macro_rules! bundled_tests {
    ($($name:ident),*) => {
        $(#[test] fn $name() { run_bundled(stringify!($name)); })*
    };
}

bundled_tests!(
    free_packet_qt,
    coherent_state_qt,
    quartic_ehrenfest,
    burgers_focusing_qa,
    gaussian_qa_cwe,
    free_shear_pm,
    harmonic_qa_2d,
    vortex_qt_2d
);

#[test]
fn list_scenarios_names_every_bundle() {
    let o = qcl(&["list-scenarios"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in BUNDLED {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    let o = qcl(&["list-scenarios", "--show", "vortex_qt_2d"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["initial"]["kind"], "vortex_2d");
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(
        dir.path(),
        "s.json",
        r#"{"name": "small", "tiers": ["qt", "qa", "cwe"], "grid": {"extent": 16, "points": 64},
            "numerics": {"dt": 0.01, "t_end": 0.3},
            "initial": {"kind": "gaussian_packet", "momentum": [0.5], "curvature": -0.2},
            "checks": [{"kind": "norm"}, {"kind": "caustic"}, {"kind": "cwe_qt_toggle"}]}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = qcl(&["run", &scenario, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn exit_codes_separate_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let invalid = write(
        dir.path(),
        "invalid.json",
        r#"{"name": "bad", "hamiltonian": {"potential": {"kind": "harmonic", "omega": -1}}}"#,
    );
    let o = qcl(&["run", &invalid, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hamiltonian.potential.omega"));

    let failing = write(
        dir.path(),
        "failing.json",
        r#"{"name": "strict", "tiers": ["qa"], "grid": {"extent": 8, "points": 64},
            "numerics": {"t_end": 0.5}, "initial": {"kind": "gaussian_packet", "curvature": -1},
            "checks": [{"kind": "caustic", "expected_t_star": 0.25}]}"#,
    );
    let o = qcl(&["run", &failing, "--out", out]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));

    let o = qcl(&["run", "no_such_scenario"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("free_packet_qt"));
}

#[test]
fn clebsch_table_rows() {
    let o = qcl(&["clebsch-table", "--n-max", "3"]);
    assert!(o.status.success());
    let rows: Vec<(u32, u32, u32)> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<u32> = l.split_whitespace().take(4).map(|x| x.parse().unwrap()).collect();
            (f[0], f[2], f[3])
        })
        .collect();
    assert_eq!(
        rows,
        vec![(1, 0, 1), (2, 1, 2), (2, 3, 1), (3, 0, 4), (3, 2, 3), (3, 4, 2), (3, 6, 1)]
    );
    assert!(stdout(&o).lines().nth(2).unwrap().contains("regular"));
}

#[test]
fn verify_list_and_selection() {
    let o = qcl(&["verify", "--list"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 13);

    let o = qcl(&["verify", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("1 passed, 0 failed"));

    let o = qcl(&["verify", "99"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn absurd_caustic_threshold_fails_verify() {
    let o = qcl(&["verify", "--eps-j", "10", "2"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}
