use std::path::Path;
use std::process::{Command, Output};

const BULK: &str = "\
[domain]
lengths = 8.549879733383484 8.549879733383484 8.549879733383484
cutoff = 2.5
homogeneous = true

[species.LJ]
sigma = 1
epsilon = 1
mass = 1

[scenario]
kind = bulk
density = 0.8
temperature = 0.8

[schedule]
timestep = 0.002
steps = STEPS
seed = 3

[decomposition]
method = kd
workers = 2

[output]
sample_interval = 10
observables = obs.csv
";

fn ljmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ljmd")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.ini");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn run(dir: &Path, text: &str, extra: &[&str]) -> Output {
    let cfg = write_config(dir, text);
    let mut args = vec!["run", &cfg, "--output-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    ljmd(&args)
}

fn rows(dir: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("obs.csv")).unwrap();
    let mut lines = text.lines().map(str::to_owned);
    assert_eq!(lines.next().as_deref(), Some("step,time,T_inst,u_pot,e_kin,e_total,P,imbalance"));
    lines.collect()
}

#[test]
fn zero_steps_writes_initial_row_only() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &BULK.replace("STEPS", "0"), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(d.path());
    assert_eq!(r.len(), 1);
    assert!(r[0].starts_with("0,"));
}

#[test]
fn row_count_follows_schedule() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &BULK.replace("STEPS", "1000"), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(d.path());
    assert_eq!(r.len(), 1 + 1000 / 10);
    let steps: Vec<u64> = r.iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(steps, (0..=100).map(|k| 10 * k).collect::<Vec<_>>());
}

#[test]
fn unknown_key_exits_2_with_key_and_line() {
    let d = tempfile::tempdir().unwrap();
    let text = BULK.replace("STEPS", "10").replace("seed = 3", "seed = 3\nstpes = 9");
    let out = run(d.path(), &text, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stpes") && err.contains("line 20"), "{err}");
}

#[test]
fn missing_config_exits_2() {
    let out = ljmd(&["run", "/nonexistent/run.ini"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn too_small_box_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let text = BULK
        .replace("STEPS", "10")
        .replace("8.549879733383484 8.549879733383484 8.549879733383484", "6 6 6");
    assert_eq!(run(d.path(), &text, &[]).status.code(), Some(2));
}

#[test]
fn blow_up_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let text = BULK.replace("STEPS", "200").replace("timestep = 0.002", "timestep = 0.2");
    let out = run(d.path(), &text, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let text = BULK.replace("STEPS", "300");
    for d in [&a, &b] {
        assert!(run(d.path(), &text, &["--workers", "4"]).status.success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("obs.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn check_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &BULK.replace("STEPS", "5"));
    let first = ljmd(&["check-config", &cfg]);
    assert!(first.status.success());
    let canon = d.path().join("canon.ini");
    std::fs::write(&canon, &first.stdout).unwrap();
    let second = ljmd(&["check-config", canon.to_str().unwrap()]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn make_scenario_writes_fcc_lattice() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &BULK.replace("STEPS", "5"));
    let out = ljmd(&["make-scenario", &cfg, "--output-dir", d.path().to_str().unwrap(), "--output", "s.xyz"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(d.path().join("s.xyz")).unwrap();
    // 5^3 unit cells of 4 sites
    assert_eq!(text.lines().next().unwrap().trim(), "500");
    assert_eq!(text.lines().count(), 502);
}

#[test]
fn bench_writes_one_row_per_worker_count() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), &format!("{}bench = b.csv\n", BULK.replace("STEPS", "20")));
    let out = ljmd(&["bench", &cfg, "--workers", "1,2", "--output-dir", d.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(d.path().join("b.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("N,workers,"));
    assert!(lines[1].starts_with("500,1,"));
}
