use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/benchmark.toml")
}

fn etc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

const PLANT: &str = r#"
[plant]
kind = "linear"
a = [[0.0, 1.0], [-2.0, 3.0]]
b = [[0.0], [1.0]]
k = [[1.0, -4.0]]
p = [[1.0, 0.25], [0.25, 1.0]]
q = [[0.5, 0.25], [0.25, 1.5]]
kappa = 0.48
"#;

#[test]
fn simulate_writes_csvs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = etc(&["simulate", "--config", bundled().to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("generator: static_sigma0.001"));
    let mean: f64 = s
        .lines()
        .find_map(|l| l.strip_prefix("mean inter-execution time: "))
        .and_then(|l| l.trim_end_matches(" s").parse().ok())
        .unwrap();
    // same order of magnitude as the reference batch mean of 0.0031 s
    assert!(mean > 0.001 && mean < 0.01, "{mean}");

    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x1,x2,eta,V,W,trigger\n"));
    let ex = fs::read_to_string(dir.path().join("executions.csv")).unwrap();
    assert!(ex.starts_with("i,t_i\n0,"));
    let events: usize = s
        .lines()
        .find_map(|l| l.strip_prefix("events: "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(ex.lines().count(), events + 2);
}

#[test]
fn override_changes_generator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = bundled();
    let o = etc(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--out", out, "--override", "sigma=0.5",
        "--override", "horizon=2.0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("generator: static_sigma0.5"));
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let last_t: f64 = traj.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last_t - 2.0).abs() < 1e-9);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let no_plant = write_config(dir.path(), "[generator]\ntype = \"static\"\nsigma = 0.1\n");
    let o = etc(&["simulate", "--config", no_plant.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[plant]"), "{}", stderr(&o));

    let typo = write_config(dir.path(), &format!("{PLANT}\n[generator]\ntype = \"static\"\nsigma = 0.1\nsigmaa = 2\n"));
    let o = etc(&["simulate", "--config", typo.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 14"), "{err}");
    assert!(err.contains("sigmaa"), "{err}");

    let o = etc(&["simulate", "--config", bundled().to_str().unwrap(), "--out", out, "--override", "sigma=1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = etc(&["simulate", "--config", bundled().to_str().unwrap(), "--out", out, "--override", "dt=-1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = etc(&["table", "--config", "/does/not/exist.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // V overflows on the first step
    let cfg = bundled();
    let o = etc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out, "--override", "x0=[1e200, 1e200]"]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn single_cell_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{PLANT}\n[[grid]]\ntype = \"dynamic\"\nsigma = 0.1\ntheta = 1.0\n\n[initial]\ncircle = {{ radius = 10.0, count = 4 }}\n"
    );
    let cfg = write_config(dir.path(), &text);
    let o = etc(&["table", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("[1/1] dynamic_sigma0.1_theta1"));
    let csv = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "generator,sigma,theta,lambda,mean,sd,cv,min,count");
    let f: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(f[0], "dynamic");
    let lambda: f64 = f[3].parse().unwrap();
    assert!((lambda - 0.9 * 0.48).abs() < 1e-15);
    assert!(!dir.path().join("table.csv.partial").exists());
}

#[test]
fn interrupted_table_leaves_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let partial = dir.path().join("table.csv.partial");
    let mut child = Command::new(env!("CARGO_BIN_EXE_etc"))
        .args(["table", "--config", bundled().to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let start = Instant::now();
    loop {
        let rows = fs::read_to_string(&partial).map(|s| s.lines().count()).unwrap_or(0);
        if rows >= 2 {
            break;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "no row written");
        if let Some(status) = child.try_wait().unwrap() {
            panic!("table finished before it could be interrupted: {status}");
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let text = fs::read_to_string(&partial).unwrap();
    assert!(text.starts_with("generator,sigma"));
    assert!(text.lines().count() < 22);
    assert!(!dir.path().join("table.csv").exists());
}

#[test]
fn check_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = etc(&["check", "--config", bundled().to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "11"]);
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{s}{}", stderr(&o));
    for name in ["nonnegativity", "performance-bound", "w-monotone", "static-first", "theta-order"] {
        assert!(s.lines().any(|l| l.starts_with("PASS") && l.contains(name)), "{s}");
    }
    assert!(s.contains("seed 11"));
    assert!(!dir.path().join("check_failures.toml").exists());
}

#[test]
fn negated_trigger_fails_ordering_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let o = etc(&[
        "check", "--config", bundled().to_str().unwrap(), "--out", dir.path().to_str().unwrap(),
        "--override", "check.fault=\"negate-trigger\"",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.lines().any(|l| l.starts_with("FAIL") && l.contains("static-first")), "{s}");
    let failures: toml::Table =
        toml::from_str(&fs::read_to_string(dir.path().join("check_failures.toml")).unwrap()).unwrap();
    let list = failures["failure"].as_array().unwrap();
    let w = list
        .iter()
        .find(|w| w["check"].as_str() == Some("static-first"))
        .expect("ordering witness");
    assert_eq!(w["x0"].as_array().unwrap().len(), 2);
    assert!(w["detail"].as_str().unwrap().contains("static fires at"));
}

#[test]
fn extreme_corner_keeps_signs() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{PLANT}\n[check]\nsigma = [0.999]\ntheta = [100.0]\nordering_states = 10\nordering_eta_states = 5\ntheta_pairs = 5\n");
    let cfg = write_config(dir.path(), &text);
    let o = etc(&["check", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let s = stdout(&o);
    assert!(s.lines().any(|l| l.starts_with("PASS") && l.contains("nonnegativity")), "{s}{}", stderr(&o));
    assert_eq!(o.status.code(), Some(0), "{s}");
}

#[test]
fn figure_writes_one_csv_per_generator() {
    let dir = tempfile::tempdir().unwrap();
    let o = etc(&[
        "figure", "--config", bundled().to_str().unwrap(), "--out", dir.path().to_str().unwrap(),
        "--override", "horizon=1.0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for stem in [
        "static_sigma0.001",
        "dynamic_sigma0.001_theta0",
        "dynamic_sigma0.001_theta0.1",
        "dynamic_sigma0.001_theta1",
    ] {
        let p = dir.path().join(format!("figure_{stem}.csv"));
        assert!(p.exists(), "{}", p.display());
    }
}

#[test]
fn repeated_runs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = etc(&[
            "simulate", "--config", bundled().to_str().unwrap(), "--out", d.path().to_str().unwrap(),
            "--override", "type=\"dynamic\"", "--override", "theta=1.0",
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["trajectory.csv", "executions.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap()
        );
    }
}
