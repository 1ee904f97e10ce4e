use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use replicator_cli::config::ExperimentConfig;
use replicator_core::rng::{Domain, StreamKey};
use replicator_core::stats::sample_beta;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_replicator"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(format!("{name}.toml"))
}

fn key_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

const SMALL: &str = r#"
schema_version = 1

[model]
preset = "ps1"

[run]
n = 300
t = 4.0
init_law = "uic"
seed = 11
snapshot_stride = 50

[[analyses]]
kind = "mean_tracking"
t_min = 1.0
tolerance = 0.5

[[analyses]]
kind = "ad_test"
t_min = 1.0
b = 200
min_fraction = 0.0

[[analyses]]
kind = "persistence"
eps = [0.01, 0.1]
t_min = 1.0
window = 2
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn fixed_point_matches_presets() {
    for (preset, s) in [("ps1", 0.5263), ("ps2", 0.5814)] {
        let o = run(&["fixed-point", "--preset", preset]);
        assert!(o.status.success());
        let v = key_value(&stdout(&o), "s");
        assert_eq!(format!("{v:.4}"), format!("{s:.4}"));
    }
    let o = run(&["fixed-point", "--preset", "ps1", "--format", "json"]);
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(j["converged"], true);
    let a = j["alpha_star"][0].as_f64().unwrap();
    assert!((a - 0.05 / 0.095).abs() < 1e-12);
}

#[test]
fn perturb_shifts_by_delta_over_sigma_squared() {
    let o = run(&[
        "perturb",
        "--preset",
        "ps1",
        "--delta-eff",
        "0.05",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let hat: Vec<f64> = serde_json::from_value(j["alpha_hat"].clone()).unwrap();
    assert!((hat[0] - 0.55).abs() < 1e-12 && (hat[1] - 0.45).abs() < 1e-12);
}

#[test]
fn test_fit_reports_the_null_quantile() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("sample.csv");
    let mut s = StreamKey::new(99, Domain::Sampling).stream();
    let mut text = String::from("x1\n");
    for _ in 0..1000 {
        text.push_str(&format!("{}\n", sample_beta(0.5263, 0.4737, &mut s)));
    }
    std::fs::write(&input, text).unwrap();
    let o = run(&[
        "test-fit",
        "--null-beta",
        "0.5263",
        "0.4737",
        "--input",
        input.to_str().unwrap(),
        "--B",
        "5000",
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(j["method"], "TnL2");
    assert_eq!(j["B"], 5000);
    assert_eq!(j["n"], 1000);
    let q = j["quantiles"]["0.90"].as_f64().unwrap();
    // Null quantile of the fully specified statistic is about 0.113 here.
    assert!((0.095..0.13).contains(&q), "q90 = {q}");
    assert!(j["reject"]["0.90"].is_boolean());

    let o = run(&[
        "test-fit",
        "--null-beta",
        "0.5263",
        "0.4737",
        "--input",
        input.to_str().unwrap(),
        "--method",
        "ad",
        "--B",
        "500",
    ]);
    assert!(stdout(&o).starts_with("method,statistic,n,level,quantile,reject,p_value\n"));
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn bad_input_rows_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "x\n0.5\nnope\n").unwrap();
    let o = run(&[
        "test-fit",
        "--null-beta",
        "1",
        "1",
        "--input",
        input.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.csv:3"));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("artifacts");
    for name in ["ps1_uic", "ps1_lic", "ps2_uic", "ps2_lic"] {
        let o = run(&[
            "run",
            bundled(name).to_str().unwrap(),
            "--dry-run",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{name}");
        let text = stdout(&o);
        assert!(
            text.contains("N = 10000, T = 100, h = 0.01, 10000 steps"),
            "{text}"
        );
        let s = if name.starts_with("ps1") {
            "0.5263"
        } else {
            "0.5814"
        };
        assert!(text.contains(&format!("theoretical s = {s}")), "{text}");
    }
    assert!(!out.exists());
}

#[test]
fn presets_echo_their_numbers() {
    for (name, payoff, sigma, delta) in [
        ("ps1_uic", [[0.5, 1.0], [1.0, 0.5]], 1.0, 0.05),
        ("ps2_lic", [[0.6, 0.9], [1.0, 0.4]], 0.9487, 0.04),
    ] {
        let cfg = ExperimentConfig::load(&bundled(name)).unwrap();
        let echo = cfg.resolve().unwrap().config.to_toml();
        let back = ExperimentConfig::from_toml(&echo).unwrap();
        let rows: Vec<Vec<f64>> = payoff.iter().map(|r| r.to_vec()).collect();
        assert_eq!(back.model.payoff, Some(rows));
        assert_eq!(back.model.sigma, Some(sigma));
        assert_eq!(back.model.delta, Some(delta));
    }
}

#[test]
fn run_writes_the_artifact_tree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL.replace("n = 300", "n = 300\nkeep_samples = true"),
    );
    let out = dir.path().join("o");
    let o = run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((key_value(&stdout(&o), "theoretical_s") - 0.5263157894736842).abs() < 1e-15);

    let echo = ExperimentConfig::load(&out.join("config.echo")).unwrap();
    assert_eq!(echo.model.sigma, Some(1.0));

    let means = std::fs::read_to_string(out.join("snapshots/means.csv")).unwrap();
    let lines: Vec<&str> = means.lines().collect();
    assert_eq!(lines[0], "t,mean_1,mean_2");
    // t = 0, 0.5, ..., 4
    assert_eq!(lines.len(), 1 + 9);
    for label in ["0", "0.5", "4"] {
        let hist =
            std::fs::read_to_string(out.join(format!("snapshots/hist_t{label}.csv"))).unwrap();
        assert!(hist.starts_with("bin_lo,bin_hi,count\n"));
        let total: u64 = hist
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, 300);
        let sample =
            std::fs::read_to_string(out.join(format!("snapshots/sample_t{label}.csv"))).unwrap();
        assert_eq!(sample.lines().count(), 301);
    }

    for report in ["mean_tracking", "ad_test", "persistence"] {
        let text = std::fs::read_to_string(out.join(format!("reports/{report}.json"))).unwrap();
        let j: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(j["passed"], true, "{report}");
    }
    let occ = std::fs::read_to_string(out.join("reports/occupation.csv")).unwrap();
    assert!(occ.starts_with("eps,fraction\n0.01,"));

    let j: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("reports/persistence.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(j["certificate"]["rho"], 1.5);
    assert_eq!(j["certificate"]["equilibria"][0]["support"][0], 1);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["final_time"], 4.0);
    assert_eq!(summary["tests"].as_array().unwrap().len(), 3);
    let m = summary["final_mean"][0].as_f64().unwrap();
    let err = summary["relative_error"].as_f64().unwrap();
    assert!((err - (m - 0.05 / 0.095).abs() / (0.05 / 0.095)).abs() < 1e-15);
}

#[test]
fn summary_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("o{threads}"));
        let o = bin()
            .env("RAYON_NUM_THREADS", threads)
            .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success());
        outputs.push((
            std::fs::read(out.join("summary.json")).unwrap(),
            std::fs::read(out.join("snapshots/means.csv")).unwrap(),
            std::fs::read(out.join("reports/ad_test.json")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut means = Vec::new();
    for seed in ["11", "12"] {
        let out = dir.path().join(format!("s{seed}"));
        let o = run(&[
            "run",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        means.push(std::fs::read_to_string(out.join("snapshots/means.csv")).unwrap());
        let echo = ExperimentConfig::load(&out.join("config.echo")).unwrap();
        assert_eq!(echo.run.seed.to_string(), seed);
    }
    // Seed 11 is the config's own seed; 12 must differ.
    assert_ne!(means[0], means[1]);
}

#[test]
fn check_failure_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL.replace("tolerance = 0.5", "tolerance = 1e-9"),
    );
    let out = dir.path().join("o");
    let args = ["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(run(&args).status.code(), Some(0));
    let mut with_check = args.to_vec();
    with_check.push("--check");
    let o = run(&with_check);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("mean_tracking,fail"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL.replace("seed = 11", "seed = 11\nthreads = 4"),
    );
    let o = run(&["run", cfg.to_str().unwrap(), "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("threads") && err.contains("line"), "{err}");

    let o = run(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    // Usage errors come from the argument parser, also status 2.
    assert_eq!(run(&["perturb", "--preset", "ps1"]).status.code(), Some(2));
    assert_eq!(run(&["fixed-point"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_three() {
    let o = run(&[
        "simulate",
        "--preset",
        "ps1",
        "--frozen-mean",
        "0.2,0.3,0.5",
        "--t",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("runtime error in sde_engine"), "{err}");
}

#[test]
fn simulate_exports_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = run(&[
        "simulate",
        "--preset",
        "ps2",
        "--x0",
        "0.3,0.7",
        "--t",
        "1",
        "--stride",
        "10",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,x2");
    assert_eq!(lines.len(), 1 + 11);
    assert!(lines[1].starts_with("0.0000000000000000e0,2.9999999999999999e-1,"));
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[1] + v[2] - 1.0).abs() < 1e-12);
    }

    let o = run(&[
        "simulate",
        "--preset",
        "ps1",
        "--particles",
        "50",
        "--t",
        "0.1",
        "--format",
        "json",
    ]);
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(j["t"].as_array().unwrap().len(), 11);
    assert_eq!(j["mean"][0].as_array().unwrap().len(), 2);
}

#[test]
fn persistence_certificate_for_ps1() {
    let o = run(&["persistence", "--preset", "ps1"]);
    assert_eq!(stdout(&o), "p_1,p_2,rho\n1,1,1.5\n");
    // A dominated first type: no certificate.
    let o = run(&[
        "persistence",
        "--payoff",
        "0,0;2,2",
        "--sigma",
        "1",
        "--format",
        "json",
    ]);
    let j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(j["certificate"].is_null());
}

#[test]
fn poc_reports_rows() {
    let o = run(&[
        "poc",
        "--preset",
        "ps1",
        "--n-list",
        "20,40",
        "--m",
        "4",
        "--t",
        "0.5",
        "--n-ref",
        "400",
        "--bootstrap",
        "50",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("n,replications,mean,std_error\n20,4,"));
    assert_eq!(text.lines().count(), 3);
}
