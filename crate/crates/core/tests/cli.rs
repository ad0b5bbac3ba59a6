use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use arxid::design::{optimal_input, SignProfile};
use arxid::gaussian_sim::CirculantEmbedding;
use arxid::{mle_estimate, simulate_arx, ArxSpec, InnovationSystem, NoiseModel};
use serde_json::Value;

fn arxid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arxid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn single_step_fisher_is_zero() {
    let out = arxid(&["fisher", "--theta", "0.7", "--noise", "white", "--n", "1", "--input", "zero"]);
    let v = json_stdout(&out);
    assert_eq!(v["fisher"].as_f64(), Some(0.0));
    assert_eq!(v["n"].as_u64(), Some(1));
}

#[test]
fn fisher_reports_limit() {
    let v = json_stdout(&arxid(&["fisher", "--theta", "0.7", "--n", "2000", "--input", "optimal"]));
    let per_step = v["fisher_per_step"].as_f64().unwrap();
    let limit = v["asymptotic_fisher"].as_f64().unwrap();
    assert!((limit - 13.071_895_424_836_6).abs() < 1e-9);
    assert!(per_step < limit && per_step > 0.99 * limit);
}

#[test]
fn domain_error_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.csv");
    let out = arxid(&["estimate", "--input", traj.to_str().unwrap(), "--hurst", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hurst must lie in (0,1)"));
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(arxid(&["fisher", "--theta", "0.5", "--n", "4", "--nope"]).status.code(), Some(2));
    assert_eq!(arxid(&["simulate-noise", "--n", "8"]).status.code(), Some(2));
    assert_eq!(arxid(&["laplace-check", "--theta", "0.5", "--n", "8"]).status.code(), Some(2));
    assert_eq!(arxid(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(arxid(&["fisher", "--theta", "0.5", "--n", "4", "--input", "ones"]).status.code(), Some(2));
}

#[test]
fn simulate_then_estimate_matches_in_process_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let out = arxid(&[
        "simulate", "--theta", "-0.4", "--hurst", "0.7", "--n", "300", "--seed", "99", "--out",
        traj.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let est = json_stdout(&arxid(&[
        "estimate", "--input", traj.to_str().unwrap(), "--hurst", "0.7", "--true-theta", "-0.4",
    ]));

    let model = NoiseModel::Fgn { hurst: 0.7 };
    let system = InnovationSystem::build(model, 300).unwrap();
    let design = optimal_input(&system, 300, SignProfile::Alternating).unwrap();
    let xi = CirculantEmbedding::build(model, 300)
        .unwrap()
        .sample_path(&mut arxid::rng::stream(99, 0))
        .unwrap();
    let spec = ArxSpec::new(-0.4, model, design.u).unwrap();
    let traj_mem = simulate_arx(&spec, &xi, &system).unwrap();
    let expected = mle_estimate(&traj_mem, system.coefficients(), Some(-0.4)).unwrap();

    let theta_hat = est["theta_hat"].as_f64().unwrap();
    assert_eq!(theta_hat.to_bits(), expected.theta_hat.to_bits());
    assert_eq!(est["observed_info"].as_f64().unwrap().to_bits(), expected.observed_info.to_bits());
    assert_eq!(est["phi"].as_f64().unwrap().to_bits(), expected.phi.unwrap().to_bits());
}

#[test]
fn estimate_requires_transformed_input_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    fs::write(&path, "n,x\n1,0.5\n2,0.25\n").unwrap();
    let out = arxid(&["estimate", "--input", path.to_str().unwrap(), "--noise", "white"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column `v`"));
}

#[test]
fn csv_subcommands() {
    let out = arxid(&["innovations", "--noise", "ar1", "--phi", "0.6", "--n", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,beta_n,sigma_n"));
    assert_eq!(text.lines().count(), 5);

    let out = arxid(&["simulate-noise", "--noise", "ma1", "--psi", "0.5", "--n", "16", "--seed", "1"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 17);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let v = json_stdout(&arxid(&[
        "design-input", "--n", "50", "--theta", "-0.5", "--out", path.to_str().unwrap(),
    ]));
    assert!((v["energy"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["sign_profile"].as_str(), Some("alternating"));

    let arg = format!("file:{}", path.display());
    let f = json_stdout(&arxid(&["fisher", "--theta", "-0.5", "--n", "50", "--input", &arg]));
    let g = json_stdout(&arxid(&["fisher", "--theta", "-0.5", "--n", "50", "--input", "optimal"]));
    let (a, b) = (f["fisher"].as_f64().unwrap(), g["fisher"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-9 * b);
}

#[test]
fn laplace_and_spectral_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let v = json_stdout(&arxid(&[
        "laplace-check", "--theta", "0.5", "--mu", "1", "--n", "100", "--reps", "2000", "--seed", "4",
        "--out", trace.to_str().unwrap(),
    ]));
    let exact = v["exact"].as_f64().unwrap();
    let mc = v["monte_carlo"].as_f64().unwrap();
    let se = v["monte_carlo_std_error"].as_f64().unwrap();
    assert!((exact - mc).abs() < 4.0 * se);
    assert!(fs::read_to_string(&trace).unwrap().starts_with("n,gamma11"));

    let v = json_stdout(&arxid(&["spectral-gap", "--theta", "0.5", "--n", "50", "--a", "0.5", "--pretty"]));
    assert!(v["nu1"].as_f64().unwrap() < v["bound"].as_f64().unwrap());
    let closed = v["chain"]["closed"].as_f64().unwrap();
    let eigen = v["chain"]["eigen"].as_f64().unwrap();
    assert!((closed - eigen).abs() < 1e-10);
    assert_eq!(arxid(&["spectral-gap", "--theta", "0.5", "--n", "401"]).status.code(), Some(1));
}

fn write_config(dir: &Path, out: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "thetas": [0.4, -0.7],
        "n": 120,
        "replications": 150,
        "noise": {"kind": "fgn", "hurst": 0.6},
        "input": "optimal",
        "seed": 2024,
        "output_dir": out,
        "bins": 12,
    });
    let path = dir.join("cfg.json");
    fs::write(&path, config.to_string()).unwrap();
    path
}

#[test]
fn experiment_is_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg_a = write_config(dir.path(), &out_a);
    let first = arxid(&["experiment", "--config", cfg_a.to_str().unwrap(), "--jobs", "1"]);
    assert!(first.status.success());
    let cfg_b = write_config(dir.path(), &out_b);
    let second = arxid(&["experiment", "--config", cfg_b.to_str().unwrap(), "--jobs", "4"]);
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(
        fs::read(out_a.join("report.csv")).unwrap(),
        fs::read(out_b.join("report.csv")).unwrap()
    );
    let report: Value = serde_json::from_slice(&first.stdout).unwrap();
    for cell in report["cells"].as_array().unwrap() {
        let counts: u64 = cell["histogram"]["counts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_u64().unwrap())
            .sum();
        assert_eq!(counts, 150);
    }
    assert!(out_a.join("histogram_0.csv").exists());
}
