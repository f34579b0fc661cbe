use std::path::Path;
use std::process::{Command, Output};

use ltsefp::config::{RawConfig, OUT_DIR_ENV};
use ltsefp::snapshot::read_snapshot;

fn ltsefp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltsefp"))
        .args(args)
        .env_remove(OUT_DIR_ENV)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

const MINIMAL: &str = r#"
domain = [-16.0, 16.0]
N = 256
scheme = "LTSeFP"
tau = 1e-4
T = 1.0
beta = 1.0
potential = "square_well"
"#;

#[test]
fn run_with_zero_final_time_writes_initial_datum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = ltsefp(&["run", "--n", "128", "--T", "0", "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let snaps: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("snapshot_"))
        .collect();
    assert_eq!(snaps.len(), 1);
    let s = read_snapshot(&snaps[0].path()).unwrap();
    assert_eq!(s.t, 0.0);
    let g = s.field.grid();
    for (i, v) in s.field.node_values().iter().enumerate() {
        let x = g.point(i)[0];
        assert!((v.re - (-x * x / 2.0).exp()).abs() < 1e-14 && v.im.abs() < 1e-14);
    }
    assert!(out.join("norm_trace.csv").is_file());
    assert!(out.join("density_0000.csv").is_file());
}

#[test]
fn minimal_config_runs_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("o");
    let o = ltsefp(&["run", "--config", &cfg, "--tau", "5e-5", "--T", "1e-3", "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok steps=20 "), "{}", stdout(&o));
    let echo = std::fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    let raw = RawConfig::from_toml(&echo).unwrap();
    assert_eq!(raw.tau, Some(5e-5));
}

#[test]
fn resolved_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = ltsefp(&["run", "--n", "128", "--tau", "1e-3", "--T", "0.05", "--potential", "moving_barrier", "--output-dir", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b = dir.path().join("b");
    let echo = a.join("resolved_config.toml");
    let o = ltsefp(&["run", "--config", echo.to_str().unwrap(), "--output-dir", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fa = read_snapshot(&a.join("snapshot_0000.bin")).unwrap();
    let fb = read_snapshot(&b.join("snapshot_0000.bin")).unwrap();
    assert_eq!(fa.field.natural_coeffs(), fb.field.natural_coeffs());
    assert_eq!(
        std::fs::read(a.join("norm_trace.csv")).unwrap(),
        std::fs::read(b.join("norm_trace.csv")).unwrap()
    );
}

#[test]
fn errors_are_one_machine_parsable_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let o = ltsefp(&["run", "--config", &cfg, "--tau", "3e-4", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    let lines: Vec<_> = err.lines().filter(|l| l.starts_with("ltsefp: error")).collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with("ltsefp: error kind=config message="));
    assert!(lines[0].contains("0.0003") && lines[0].contains("T=1"));

    let bad = write_config(dir.path(), &format!("{MINIMAL}\nmystery = 1\n"));
    let o = ltsefp(&["run", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mystery"));

    let o = ltsefp(&["run", "--n", "64", "--potential", "nope", "--output-dir", dir.path().to_str().unwrap()]);
    assert!(stderr(&o).contains("kind=config"));
}

#[test]
fn divergence_gives_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = ltsefp(&[
        "run", "--n", "64", "--tau", "0.5", "--T", "100", "--beta", "1e9", "--cfl", "off",
        "--output-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stderr(&o).contains("kind=diverged"), "{}", stderr(&o));
}

#[test]
fn cfl_enforce_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let o = ltsefp(&["run", "--n", "256", "--tau", "1e-2", "--T", "0.1", "--cfl", "enforce", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kind=cfl-violation"));
}

#[test]
fn env_var_overrides_config_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let from_env = dir.path().join("env_out");
    let cfg = write_config(dir.path(), &format!("{MINIMAL}\noutput_dir = \"{}\"\n", dir.path().join("file_out").display()));
    let o = Command::new(env!("CARGO_BIN_EXE_ltsefp"))
        .args(["run", "--config", &cfg, "--T", "0"])
        .env(OUT_DIR_ENV, &from_env)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(from_env.join("resolved_config.toml").is_file());
    assert!(!dir.path().join("file_out").exists());
}

#[test]
fn ground_state_then_import() {
    let dir = tempfile::tempdir().unwrap();
    let gs = dir.path().join("gs");
    let o = ltsefp(&["ground-state", "--n", "256", "--potential", "trap", "--output-dir", gs.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("energy="));
    let record = std::fs::read_to_string(gs.join("ground_state.csv")).unwrap();
    assert!(record.starts_with("energy,mu,"));

    let run = dir.path().join("run");
    let state = gs.join("ground_state.bin");
    let o = ltsefp(&[
        "run", "--n", "256", "--potential", "trap", "--initial", state.to_str().unwrap(),
        "--tau", "1e-3", "--T", "0.01", "--output-dir", run.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = read_snapshot(&run.join("snapshot_0000.bin")).unwrap();
    assert!((first.field.l2_norm() - 1.0).abs() < 1e-6);
}

#[test]
fn sweeps_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = ltsefp(&[
        "converge-time", "--T", "0.02", "--sweep-h", "0.25", "--sweep-tau", "2e-3,1e-3,5e-4",
        "--reference-h", "0.125", "--reference-tau", "1e-4", "--no-timings", "--output-dir", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("sweep_time.csv")).unwrap();
    assert!(csv.starts_with("h,tau,e_l2,e_h1,cfl,seconds\n"));
    assert!(csv.lines().any(|l| l.starts_with("# fit vs_tau")));
    assert!(out.join("reference.bin").is_file());

    // the saved reference can stand in for a fresh one
    let out2 = dir.path().join("s2");
    let refp = out.join("reference.bin");
    let o = ltsefp(&[
        "converge-time", "--T", "0.02", "--sweep-h", "0.25", "--sweep-tau", "2e-3,1e-3,5e-4",
        "--reference-file", refp.to_str().unwrap(), "--no-timings", "--output-dir", out2.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv, std::fs::read_to_string(out2.join("sweep_time.csv")).unwrap());

    let out3 = dir.path().join("s3");
    let o = ltsefp(&[
        "converge-space", "--T", "0.01", "--tau", "1e-4", "--sweep-h", "0.5,0.25", "--reference-h", "0.125",
        "--reference-tau", "1e-4", "--output-dir", out3.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(out3.join("sweep_space.csv")).unwrap().contains("# fit vs_h"));
}
