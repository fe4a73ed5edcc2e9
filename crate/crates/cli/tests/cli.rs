use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mixobs(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixobs"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FIG1: &str = include_str!("../../core/scenarios/fig1.scn");

#[test]
fn analyze_bundled_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixobs(&["analyze", "fig1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Observable: yes"));
    assert!(stdout(&o).contains("Redundancy level: 1"));

    let o = mixobs(&["analyze", "fig9", "--out-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let kv = fs::read_to_string(dir.path().join("out/analysis.txt")).unwrap();
    assert!(kv.contains("redundancy_level=2"));
}

#[test]
fn analyze_reports_uncovered_parent() {
    let dir = tempfile::tempdir().unwrap();
    let text = FIG1.replace("3 = 3.position", "3 =");
    fs::write(dir.path().join("broken.scn"), text).unwrap();
    let o = mixobs(&["analyze", "broken.scn"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("Observable: no"), "{out}");
    assert!(out.contains("{hdv3.position} UNCOVERED"), "{out}");
}

#[test]
fn parse_errors_exit_2_with_all_problems() {
    let dir = tempfile::tempdir().unwrap();
    let text = FIG1
        .replace("0 = 0.position", "0 = 9.position")
        .replace("horizon = 300", "horizon = -1");
    fs::write(dir.path().join("bad.scn"), text).unwrap();
    let o = mixobs(&["analyze", "bad.scn"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("sensors.0[0]"), "{err}");
    assert!(err.contains("scenario.horizon"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mixobs(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(mixobs(&["analyze", "no_such_file.scn"], dir.path()).status.code(), Some(2));
    assert_eq!(mixobs(&["design", "fig1", "--gain-method", "magic"], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_gain_file_has_hint() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixobs(&["simulate", "fig1", "--out-dir", "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hint: run `mixobs design"), "{}", stderr(&o));
}

#[test]
fn design_then_simulate_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixobs(&["design", "fig1", "--out-dir", "a"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("a/gain.txt").exists());
    fs::create_dir_all(dir.path().join("b")).unwrap();
    fs::copy(dir.path().join("a/gain.txt"), dir.path().join("b/gain.txt")).unwrap();

    for d in ["a", "b"] {
        let o = mixobs(&["simulate", "fig1", "--out-dir", d, "--horizon", "60", "--seed", "5"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["trace.csv", "truth.csv", "metrics.txt"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let trace = fs::read_to_string(dir.path().join("a/trace.csv")).unwrap();
    assert!(trace.starts_with("step,entity,role,hdv,position,velocity,sq_error\n"));
    // 61 steps, 4 HDVs, truth plus 5 CAVs
    assert_eq!(trace.lines().count(), 1 + 61 * 4 * 6);
}

#[test]
fn compare_writes_msee_table() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mixobs(&["design", "fig9", "--out-dir", "."], dir.path()).status.code(), Some(0));
    let o = mixobs(&["compare", "fig9", "--out-dir", "."], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let kv = stdout(&o);
    let get = |k: &str| -> f64 {
        kv.lines()
            .find_map(|l| l.strip_prefix(&format!("{k}=")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(get("centralized.position_msee") <= get("distributed.position_msee"));
    let table = fs::read_to_string(dir.path().join("msee.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 301);
    assert!(dir.path().join("central_trace.csv").exists());
}

#[test]
fn connectivity_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixobs(&["connectivity", "ring(8,3)"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("node_connectivity=6"));

    fs::write(dir.path().join("g.txt"), "nodes 3\n0 1\n1 2\n").unwrap();
    let o = mixobs(&["connectivity", "g.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("strongly_connected=false"));
    assert!(stdout(&o).contains("node_connectivity=0"));
}
