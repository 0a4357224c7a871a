use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sobolev-bvp"))
        .args(args)
        .env("SOBOLEV_BVP_THREADS", "2")
        .output()
        .unwrap()
}

fn run_fixture(cmd: &str, name: &str, extra: &[&str]) -> Output {
    let path = fixture(name);
    let mut args = vec![cmd, path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn o1_text() -> String {
    std::fs::read_to_string(fixture("o1.toml")).unwrap()
}

#[test]
fn solve_o1_reports_closed_form_norm() {
    let o = run_fixture("solve", "o1.toml", &["--eps", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("norm_y = ")).unwrap();
    let norm: f64 = line["norm_y = ".len()..].parse().unwrap();
    // e^{-t}: three unit sups at t = 0
    assert!((norm - 3.0).abs() <= 1e-6, "{norm}");
}

#[test]
fn solve_writes_node_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nodes.csv");
    let o = run_fixture("solve", "o1.toml", &["--eps", "0.5", "--grid-N", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,y1_d0_re,y1_d0_im,y1_d1_re,y1_d1_im,y1_d2_re,y1_d2_im"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    let last: Vec<f64> = rows[10].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - (-1.25f64).exp()).abs() < 1e-5);
    assert_eq!(last[2], 0.0);
}

#[test]
fn singular_solve_exits_2() {
    let o = run_fixture("solve", "periodic.toml", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("singular"));
}

#[test]
fn malformed_expression_exits_3_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "bad.toml", &o1_text().replace("\"1 + eps*t\"", "\"t +\""));
    let o = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("byte 3"), "{}", stderr(&o));
}

#[test]
fn odd_grid_and_missing_file_exit_3() {
    let o = run_fixture("solve", "o1.toml", &["--grid-N", "11"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["solve", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["solve"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn blow_up_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "blow.toml", &o1_text().replace("\"1 + eps*t\"", "\"-1000\""));
    let o = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn sweep_o1_has_ten_rows_and_passes() {
    let o = run_fixture("sweep", "o1.toml", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eps,error,discrepancy,ratio");
    let data: Vec<&&str> = lines[1..].iter().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 10);
    assert!(lines.last().unwrap().starts_with("# verdict=pass c0=pass cI=pass cII=pass bracket=pass"));
}

#[test]
fn sweep_condition_i_violator_exits_5() {
    let o = run_fixture("sweep", "violator_i.toml", &[]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("cI=fail"));
}

#[test]
fn sweep_bracket_violation_exits_5() {
    let o = run_fixture("sweep", "integral.toml", &["--rmax", "1.01"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("bracket=fail"));
}

#[test]
fn empty_schedule_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "empty.toml", &o1_text().replace("k_range = [3, 12]", "schedule = []"));
    let o = run(&["sweep", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sweep_schedule_override() {
    let o = run_fixture("sweep", "o1.toml", &["--schedule", "0.1,0.01,0.001"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| !l.starts_with(['#', 'e'])).count(), 3);
}

#[test]
fn sweep_output_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_sobolev-bvp"))
            .args(["sweep", fixture("o1.toml").to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("SOBOLEV_BVP_THREADS", threads)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        tables.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn check_exit_codes_and_flags() {
    let o = run_fixture("check", "o1.toml", &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).ends_with("c0=pass cI=pass cII=pass\n"));

    let o = run_fixture("check", "periodic.toml", &[]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("c0=fail"));

    let o = run_fixture("check", "violator_ii.toml", &[]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("cII=fail"));
}

#[test]
fn kernel_dimensions() {
    for (name, dim) in [("o1.toml", "0"), ("periodic.toml", "2"), ("rank1.toml", "1")] {
        let o = run_fixture("kernel", name, &[]);
        assert_eq!(o.status.code(), Some(0), "{name}");
        assert_eq!(stdout(&o).trim(), dim, "{name}");
    }
}

#[test]
fn every_fixture_honours_exit_contract() {
    for entry in std::fs::read_dir(fixture("")).unwrap() {
        let path = entry.unwrap().path();
        for cmd in ["solve", "check", "kernel"] {
            let o = run(&[cmd, path.to_str().unwrap()]);
            let code = o.status.code().unwrap();
            assert!([0, 2, 5].contains(&code), "{cmd} {}: exit {code}\n{}", path.display(), stderr(&o));
        }
    }
}

#[test]
fn snapping_warns_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "snap.toml", &o1_text().replace("node = 0.0", "node = 0.0001"));
    let o = run(&["kernel", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("snapped"));
}
