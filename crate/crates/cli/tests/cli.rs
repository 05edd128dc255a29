use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stiga(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stiga")).args(args).output().expect("spawn stiga")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let k = rows[0].iter().position(|c| c == name).unwrap();
    rows[1..].iter().map(|r| r[k].clone()).collect()
}

#[test]
fn uniform_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ex1");
    let o = stiga(&["run", "--example", "ex1", "--p", "2", "--marking", "uniform", "--nref", "4", "--quiet", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("report.csv"));
    assert_eq!(rows.len(), 5);
    for v in column(&rows, "ieff_eid") {
        let v: f64 = v.parse().unwrap();
        assert!((v - 1.0).abs() <= 0.01, "{v}");
    }
    for f in ["report.md", "summary.json", "config.txt", "mesh/level_1.patch", "mesh/level_4.knots"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["guaranteed"], true);
    assert_eq!(summary["levels"].as_array().unwrap().len(), 4);
}

#[test]
fn cubic_reproduces_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p3");
    let o = stiga(&["run", "--example", "ex1", "--p", "3", "--nref", "1", "--quiet", "--output", out.to_str().unwrap()]);
    assert!(o.status.success());
    let rows = csv_rows(&out.join("report.csv"));
    for name in ["err_grad", "err_final", "err_energy", "err_sh", "err_l"] {
        let v: f64 = column(&rows, name)[0].parse().unwrap();
        assert!(v <= 1e-10, "{name} = {v}");
    }
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(stiga(&["run"]).status.code(), Some(2));
    assert_eq!(stiga(&["run", "--example", "ex5"]).status.code(), Some(2));
    assert_eq!(stiga(&["run", "--example", "ex1", "--p", "9"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "p = 2\n").unwrap();
    assert_eq!(stiga(&["run", cfg.to_str().unwrap()]).status.code(), Some(2));
    fs::write(&cfg, "problem = ex1\nsigma = 3\n").unwrap();
    assert_eq!(stiga(&["run", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.cfg");
    let out = dir.path().join("o");
    fs::write(&cfg, format!("# small study\nproblem = ex1\nnref = 3\nmarking = uniform\noutput = {}\n", out.display())).unwrap();
    let o = stiga(&["run", cfg.to_str().unwrap(), "--nref", "2", "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out.join("report.csv")).len(), 3);
    let text = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(text.contains("nref = 2"));
}

fn strip_timings(rows: &[Vec<String>]) -> Vec<Vec<String>> {
    let keep: Vec<usize> = (0..rows[0].len()).filter(|&k| !rows[0][k].starts_with("t_")).collect();
    rows.iter().map(|r| keep.iter().map(|&k| r[k].clone()).collect()).collect()
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}"));
        let o = stiga(&["run", "--example", "ex3", "--nref0", "2", "--nref", "3", "--quiet", "--output", out.to_str().unwrap()]);
        assert!(o.status.success());
        tables.push(strip_timings(&csv_rows(&out.join("report.csv"))));
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn compare_joins_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = stiga(&[
        "compare", "--example", "ex3", "--nref0", "2", "--nref", "3", "--quiet", "--output", out.to_str().unwrap(),
        "--strategy", "uniform", "--strategy", "bulk:0.6", "--strategy", "bulk:0.6:residual",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let joined = csv_rows(&out.join("compare.csv"));
    assert_eq!(joined.len(), 1 + 3 * 3);
    for label in ["uniform", "bulk-0.6-majorant_dual", "bulk-0.6-residual"] {
        assert!(out.join(label).join("report.csv").exists(), "{label}");
    }

    // A single strategy reproduces `run`.
    let single = dir.path().join("one");
    let o = stiga(&["compare", "--example", "ex1", "--nref", "2", "--quiet", "--output", single.to_str().unwrap(), "--strategy", "uniform"]);
    assert!(o.status.success());
    let direct = dir.path().join("direct");
    stiga(&["run", "--example", "ex1", "--nref", "2", "--marking", "uniform", "--quiet", "--output", direct.to_str().unwrap()]);
    assert_eq!(
        strip_timings(&csv_rows(&single.join("uniform/report.csv"))),
        strip_timings(&csv_rows(&direct.join("report.csv")))
    );
    assert_eq!(stiga(&["compare", "--example", "ex1", "--strategy", "nope"]).status.code(), Some(2));
}

#[test]
fn dump_mesh_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mesh");
    let o = stiga(&["dump-mesh", "--example", "ex4", "--nref0", "1", "--output", out.to_str().unwrap()]);
    assert!(o.status.success());
    let patch = fs::read_to_string(out.join("patch.txt")).unwrap();
    assert!(patch.starts_with("stiga-patch"));
    assert_eq!(csv_rows(&out.join("elements.csv")).len(), 1 + 8);
    let o = stiga(&["check", "--samples", "200"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 9);
}
