use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn coverplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coverplan"))
        .args(args)
        .output()
        .unwrap()
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
        .display()
        .to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_reports_binary_counts() {
    let o = coverplan(&["check", "--scenario", &scenario("one_cube.toml")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("binaries: 1152"), "{text}");
    assert!(
        text.contains("membership 960, aggregation 160, entry 16, reward 16, avoidance 0"),
        "{text}"
    );

    let o = coverplan(&["check", "--scenario", &scenario("two_cubes.toml")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("binaries: 1792"));
}

#[test]
fn check_writes_mps_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = coverplan(&[
        "check",
        "--scenario",
        &scenario("one_cube_small.toml"),
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    for name in ["assessment.mps", "search.mps"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with("NAME"));
        assert!(text.trim_end().ends_with("ENDATA"));
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(coverplan(&["run"]).status.code(), Some(2));
    assert_eq!(coverplan(&["frobnicate"]).status.code(), Some(2));
    let o = coverplan(&["search", "--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(coverplan(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_scenario_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[bounds]\nmin = [0.0, 0.0, 0.0]\nmax = [10.0, 10.0, 10.0]\n[agent]\nposition = [1.0, 1.0, 1.0]\n")
        .unwrap();
    let o = coverplan(&["check", "--scenario", &path.display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no objects of interest"));
}

#[test]
fn assess_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = coverplan(&[
        "assess",
        "--scenario",
        &scenario("one_cube_small.toml"),
        "--out",
        &out,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 21);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["termination"]["kind"], "assessment_only");
    assert!(dir.path().join("timing.csv").exists());
}

fn study_files(dir: &Path) -> (Vec<u8>, PathBuf) {
    let out = dir.display().to_string();
    let o = coverplan(&[
        "study", "--counts", "2,4,6", "--trials", "5", "--seed", "7", "--out", &out,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    (
        std::fs::read(dir.join("study.csv")).unwrap(),
        dir.join("study_timing.csv"),
    )
}

#[test]
fn study_is_reproducible_from_the_command_line() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, timing) = study_files(a.path());
    let (second, _) = study_files(b.path());
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(timing.exists());
}
