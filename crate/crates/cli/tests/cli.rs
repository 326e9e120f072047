use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gpe2_core::io::read_field;
use gpe2_core::{integrate, SweepManifest};

fn gpe2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpe2"))
        .args(args)
        .output()
        .expect("spawn gpe2")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, format!("{body}\nout_dir = {}\n", dir.join("out").display())).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_ground_state_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "L = 8\nN = 257\nomega = 1\ng1 = 0\ng2 = 0\ng12 = 0\nseed = 1",
    );
    let o = gpe2(&["solve", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out");
    let m = SweepManifest::read(out.join("manifest.json")).unwrap();
    assert!((m.entries[0].energy.unwrap() - 2.0).abs() <= 1e-3);
    for f in ["u.gpe2", "v.gpe2", "diagnostics.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn negative_self_coupling_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "N = 65\ng1 = -1");
    let o = gpe2(&["solve", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("g1") && msg.contains("g1 >= 0 and g2 >= 0"), "{msg}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "N = 65\ntol_residul = 1e-6");
    let o = gpe2(&["solve", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tol_residul"));
    assert_eq!(gpe2(&["solve", "/nonexistent/run.cfg"]).status.code(), Some(1));
}

#[test]
fn forced_non_convergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "N = 65\ng12 = 1000\nmax_iters = 1");
    let o = gpe2(&["solve", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let m = SweepManifest::read(dir.path().join("out/manifest.json")).unwrap();
    assert!(!m.entries[0].converged);
    assert!(dir.path().join("out/u.gpe2").exists());
}

#[test]
fn sweep_empty_schedule_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "N = 65");
    assert_eq!(gpe2(&["sweep", &cfg]).status.code(), Some(1));
}

#[test]
fn sweep_records_each_entry_warm_and_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "N = 65\ng = 0 0 10\ng = 0 0 100");
    for extra in [&[][..], &["--parallel", "2"][..]] {
        let mut args = vec!["sweep", cfg.as_str()];
        args.extend_from_slice(extra);
        let o = gpe2(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let m = SweepManifest::read(dir.path().join("out/manifest.json")).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert!(m.entries[1].overlap.unwrap() < m.entries[0].overlap.unwrap());
        let csv = fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }
}

#[test]
fn lambda_h_single_row() {
    let o = gpe2(&["oracle", "lambda-h", "--from", "0", "--to", "0", "--step", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "a,lambda");
    assert_eq!(lines.len(), 2);
    let (a, lambda) = lines[1].split_once(',').unwrap();
    assert_eq!(a.parse::<f64>().unwrap(), 0.0);
    assert!((lambda.parse::<f64>().unwrap() - 1.0).abs() <= 1e-3);
}

#[test]
fn lambda_h_accepts_negative_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.csv");
    let o = gpe2(&[
        "oracle",
        "lambda-h",
        "--from",
        "-1",
        "--to",
        "1",
        "--step",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 21);
    assert!(values.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn eigen_then_frame_is_constant_one() {
    let dir = tempfile::tempdir().unwrap();
    let ground = dir.path().join("g.gpe2");
    let frame = dir.path().join("f.gpe2");
    let o = gpe2(&["oracle", "eigen", "--kind", "ground", "--out", ground.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = gpe2(&[
        "oracle",
        "frame",
        ground.to_str().unwrap(),
        "--out",
        frame.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let f = read_field(&frame).unwrap();
    let n = f.grid().points();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            assert!((f.at(i, j) - 1.0).abs() <= 1e-4);
        }
    }
    assert_eq!(f.grid().omega(), 0.5);
}

#[test]
fn dipole_eigenfunction_mass() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.gpe2");
    let o = gpe2(&[
        "oracle",
        "eigen",
        "--kind",
        "dipole",
        "--nu",
        "1",
        "0",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let w = read_field(&path).unwrap();
    assert!((integrate(&w.map(|x| x * x)) - 2.0).abs() <= 1e-6);
    let o = gpe2(&[
        "oracle",
        "eigen",
        "--kind",
        "dipole",
        "--nu",
        "-0.6",
        "0.8",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn diagnose_reports_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "N = 65\ng12 = 100");
    assert_eq!(gpe2(&["solve", &cfg]).status.code(), Some(0));
    let out = dir.path().join("out");
    let o = gpe2(&[
        "diagnose",
        out.join("u.gpe2").to_str().unwrap(),
        out.join("v.gpe2").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("overlap = ") && text.contains("l2_error_u = "));
}

#[test]
fn unknown_subcommands_exit_one() {
    assert_eq!(gpe2(&["oracle", "nonsense"]).status.code(), Some(1));
    assert_eq!(gpe2(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gpe2(&["--help"]).status.code(), Some(0));
}
