//! End-to-end tests of the `crowdctl` binary: artifact layout, CSV
//! schema, determinism and the exit-status contract (0 pass, 1 invariant
//! violation, 2 configuration error).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crowdctl"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crowdctl-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(output: &Output) {
    assert!(
        output.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// CSV sanity shared by the scale tests: named header, strictly ascending
/// time, every value finite.
fn check_csv_schema(path: &Path, expect_header: &str) {
    let text = read(path);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), expect_header, "{}", path.display());
    let mut prev_t = f64::NEG_INFINITY;
    for line in lines {
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>().expect("numeric field"))
            .collect();
        assert!(
            fields.iter().all(|v| v.is_finite()),
            "non-finite value in {line}"
        );
        assert!(fields[0] > prev_t, "t not ascending at {line}");
        prev_t = fields[0];
    }
}

#[test]
fn particle_sweep_writes_three_series_and_passes() {
    let dir = temp_dir("particle-sweep");
    let out = bin()
        .args(["particle", "--alpha", "1e-2,1e-3,1e-4", "--out"])
        .arg(&dir)
        .args(["--n-particles", "64"])
        .output()
        .unwrap();
    run_ok(&out);
    for tag in ["1e-2", "1e-3", "1e-4"] {
        check_csv_schema(&dir.join(format!("particle_alpha{tag}.csv")), "t,L,bound,r");
    }
    let script = read(&dir.join("particle_decay.py"));
    assert!(script.contains("semilogy"));
    assert!(
        script.contains("\"red\"") && script.contains("\"blue\"") && script.contains("\"black\"")
    );
    assert!(read(&dir.join("particle_summary.txt")).contains("[ok  ]"));
}

#[test]
fn identical_config_and_seed_give_byte_identical_csv() {
    let dir_a = temp_dir("determinism-a");
    let dir_b = temp_dir("determinism-b");
    let conf = dir_a.join("run.conf");
    std::fs::write(
        &conf,
        "alpha = 1e-3\nn_particles = 32\nseed = 9\nn_outputs = 20\n",
    )
    .unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = bin()
            .args(["particle", "--config"])
            .arg(&conf)
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        run_ok(&out);
    }
    let a = std::fs::read(dir_a.join("particle_alpha1e-3.csv")).unwrap();
    let b = std::fs::read(dir_b.join("particle_alpha1e-3.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_key_exits_with_config_status() {
    let dir = temp_dir("unknown-key");
    let conf = dir.join("bad.conf");
    std::fs::write(&conf, "# comment\nalhpa = 0.1\n").unwrap();
    let out = bin()
        .args(["particle", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("alhpa") && stderr.contains("line 2"),
        "{stderr}"
    );
}

#[test]
fn out_of_range_value_names_the_key() {
    let dir = temp_dir("bad-range");
    let conf = dir.join("bad.conf");
    std::fs::write(&conf, "alpha = -1\n").unwrap();
    let out = bin()
        .args(["particle", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn config_scale_mismatch_is_rejected() {
    let dir = temp_dir("scale-mismatch");
    let conf = dir.join("run.conf");
    std::fs::write(&conf, "scale = hydro\n").unwrap();
    let out = bin()
        .args(["particle", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn riccati_check_reports_structural_lemmas() {
    let dir = temp_dir("riccati");
    let conf = dir.join("run.conf");
    std::fs::write(
        &conf,
        "riccati_n = 3\nriccati_steps = 2000\nn_outputs = 20\n",
    )
    .unwrap();
    let out = bin()
        .args(["riccati-check", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    run_ok(&out);
    let summary = read(&dir.join("riccati_summary.txt"));
    assert!(summary.contains("N=3"));
    assert!(summary.contains("K22 = d(t) Id"));
    assert!(!summary.contains("FAIL"));
    check_csv_schema(&dir.join("riccati_gain_alpha1e-2.csv"), "t,y,d,r");
}

#[test]
fn hydro_grad_closure_skips_bound_with_note() {
    let dir = temp_dir("grad");
    let out = bin()
        .args([
            "hydro",
            "--closure",
            "grad",
            "--alpha",
            "1e-2",
            "--nx",
            "64",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    run_ok(&out);
    let summary = read(&dir.join("hydro_summary.txt"));
    assert!(summary.contains("skipped"), "{summary}");
    check_csv_schema(
        &dir.join("hydro_alpha1e-2.csv"),
        "t,L,bound,r,mass,momentum",
    );
}

#[test]
fn meanfield_accepts_measure_files() {
    let dir = temp_dir("measures");
    let mu = dir.join("mu.txt");
    let nu = dir.join("nu.txt");
    std::fs::write(&mu, "# two points\n0.0 1.0\n0.5 -0.5\n").unwrap();
    std::fs::write(&nu, "0.1 0.9 0.25\n0.4 -0.6 0.75\n").unwrap();
    let conf = dir.join("run.conf");
    std::fs::write(&conf, "n_outputs = 4\n").unwrap();
    let out = bin()
        .args(["meanfield", "--config"])
        .arg(&conf)
        .arg("--mu")
        .arg(&mu)
        .arg("--nu")
        .arg(&nu)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    run_ok(&out);
    check_csv_schema(
        &dir.join("meanfield_alpha1e-2.csv"),
        "t,W,dobrushin_bound,L,L_envelope",
    );
    // The final pushed measure round-trips through the text format.
    let text = read(&dir.join("mu_final_alpha1e-2.txt"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn env_var_sets_default_output_directory() {
    let dir = temp_dir("env-out");
    let out = bin()
        .args(["nonlinear", "--n-particles", "16"])
        .env("CROWDCTL_OUT", &dir)
        .output()
        .unwrap();
    run_ok(&out);
    assert!(dir.join("nonlinear.csv").exists());
    check_csv_schema(&dir.join("nonlinear.csv"), "t,cost,q");
}

#[test]
fn empty_config_runs_reference_defaults() {
    let dir = temp_dir("defaults");
    let conf = dir.join("empty.conf");
    std::fs::write(&conf, "").unwrap();
    let out = bin()
        .args(["particle", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    run_ok(&out);
    // Default alpha is 1e-2 with N = 250.
    assert!(dir.join("particle_alpha1e-2.csv").exists());
}
