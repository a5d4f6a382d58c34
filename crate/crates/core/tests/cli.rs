use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn trbundle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trbundle"))
        .args(args)
        .env_remove("TRBUNDLE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn generate(dir: &Path, family: &str, n: &str, m: &str) -> String {
    let path = dir.join(format!("{family}.txt"));
    let out = trbundle(&[
        "generate",
        "--family",
        family,
        "--n",
        n,
        "--m",
        m,
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path.to_str().unwrap().to_string()
}

#[test]
fn generate_writes_every_family() {
    let dir = TempDir::new().unwrap();
    for (family, n, m) in [
        ("max-quartic", "3", "4"),
        ("sum-abs-quartic", "3", "4"),
        ("max-eig", "2", "4"),
        ("sine-growth", "1", "2"),
        ("toy-quadratic", "2", "0"),
    ] {
        let path = generate(dir.path(), family, n, m);
        let text = fs::read_to_string(path).unwrap();
        assert!(text.contains(&format!("family {family}")));
    }
}

#[test]
fn run_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), "max-quartic", "3", "4");
    let out_dir = dir.path().join("out");
    let out = trbundle(&["run", "--instance", &inst, "--q", "1", "--out-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["iterates.csv", "handoff.txt", "manifest.json", "plot_iterates.gp"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let csv = fs::read_to_string(out_dir.join("iterates.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "j,i,f,decrease_ratio,gap,bundle_size,delta,dist_to_xstar,accepted"
    );
    assert_eq!(fs::read_to_string(out_dir.join("handoff.txt")).unwrap().lines().count(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["summary"]["status"], "ok");
}

#[test]
fn jmax_one_gives_single_handoff_line() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), "toy-quadratic", "2", "0");
    let out = trbundle(&["run", "--instance", &inst, "--jmax", "1", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let handoff = fs::read_to_string(dir.path().join("handoff.txt")).unwrap();
    assert_eq!(handoff.lines().count(), 1);
}

#[test]
fn manifest_replay_is_bit_identical() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), "sum-abs-quartic", "3", "5");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let out = trbundle(&[
        "run", "--instance", &inst, "--q", "2", "--jmax", "3", "--x0", "-0.5,1,2", "--out-dir",
        first.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = first.join("manifest.json");
    let out = trbundle(&["run", "--manifest", manifest.to_str().unwrap(), "--out-dir", second.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(first.join("iterates.csv")).unwrap(),
        fs::read(second.join("iterates.csv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), "max-quartic", "3", "4");
    let d = dir.path().to_str().unwrap();
    assert_eq!(trbundle(&["run", "--bogus"]).status.code(), Some(2));
    assert_eq!(trbundle(&["run", "--instance", &inst, "--q", "3", "--out-dir", d]).status.code(), Some(2));
    assert_eq!(
        trbundle(&["run", "--instance", &inst, "--x0", "1,2", "--out-dir", d]).status.code(),
        Some(2)
    );
    assert_eq!(
        trbundle(&["diagnose", "--instance", &inst, "--mode", "plotdata", "--out-dir", d]).status.code(),
        Some(2)
    );
    let missing = dir.path().join("none.txt");
    assert_eq!(
        trbundle(&["run", "--instance", missing.to_str().unwrap(), "--out-dir", d]).status.code(),
        Some(1)
    );
}

#[test]
fn diagnose_modes_write_csv() {
    let dir = TempDir::new().unwrap();
    let sine = generate(dir.path(), "sine-growth", "1", "2");
    let quartic = generate(dir.path(), "max-quartic", "2", "3");
    let d = dir.path().to_str().unwrap();
    let runs: [(&str, &[&str], &str); 3] = [
        (&sine, &["--mode", "plotdata", "--points", "101"], "plotdata.csv"),
        (&quartic, &["--mode", "lambda", "--x", "0.5,-0.5", "--delta", "0.1", "--p", "1"], "lambda.csv"),
        (&quartic, &["--mode", "remainder-order", "--samples", "50"], "remainder.csv"),
    ];
    for (inst, extra, file) in runs {
        let mut args = vec!["diagnose", "--instance", inst, "--out-dir", d];
        args.extend_from_slice(extra);
        let out = trbundle(&args);
        assert!(out.status.success(), "{file}: {}", String::from_utf8_lossy(&out.stderr));
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        assert!(text.lines().count() >= 2, "{file} has no rows");
    }
    assert_eq!(
        fs::read_to_string(dir.path().join("plotdata.csv")).unwrap().lines().count(),
        102
    );
}

#[test]
fn out_dir_comes_from_environment() {
    let dir = TempDir::new().unwrap();
    let inst = generate(dir.path(), "toy-quadratic", "1", "0");
    let target = dir.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_trbundle"))
        .args(["run", "--instance", &inst, "--jmax", "2"])
        .env("TRBUNDLE_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("iterates.csv").exists());
}
