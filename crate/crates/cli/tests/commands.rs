use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;
use tempfile::TempDir;
use traffic_dfa::validate::{self, Hooks};
use traffic_dfa::ExitCode;
use traffic_dfa_core::dfa::fluctuation;

const SMALL: &[&str] = &["--nodes", "120", "--steps", "1300", "--warmup", "100"];

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_traffic-dfa"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = bin(args, cwd);
    assert_eq!(
        code(&out),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_series(path: &Path, values: &[f64]) {
    let mut text = String::from("t,avg_packets\n");
    for (t, v) in values.iter().enumerate() {
        text.push_str(&format!("{t},{v}\n"));
    }
    fs::write(path, text).unwrap();
}

fn column(path: &Path, idx: usize) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(idx).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn simulate_is_byte_reproducible_and_has_a_manifest() {
    let tmp = TempDir::new().unwrap();
    let run = |out: &str| {
        let mut args = vec![
            "simulate",
            "--strategy",
            "zhang",
            "--beta",
            "0.05",
            "--out",
            out,
        ];
        args.extend_from_slice(SMALL);
        ok(&args, tmp.path());
        fs::read(tmp.path().join(out).join("series.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("t,avg_packets\n101,"));
    assert_eq!(text.lines().count(), 1 + 1200);

    let m = json(tmp.path().join("a/manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 1);
    assert_eq!(m["config"]["strategy"], "zhang");
    assert_eq!(m["config"]["nodes"], 120);
    assert!(m["version"].is_string());

    // Re-running the manifest's config reproduces the artifact.
    fs::write(
        tmp.path().join("replay.conf"),
        m["config"]["config_text"].as_str().unwrap(),
    )
    .unwrap();
    ok(
        &["simulate", "--config", "replay.conf", "--out", "c"],
        tmp.path(),
    );
    assert_eq!(
        fs::read(tmp.path().join("a/series.csv")).unwrap(),
        fs::read(tmp.path().join("c/series.csv")).unwrap()
    );
}

#[test]
fn zero_lambda_gives_an_all_zero_series() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["simulate", "--lambda", "0", "--out", "z"];
    args.extend_from_slice(SMALL);
    ok(&args, tmp.path());
    let values = column(&tmp.path().join("z/series.csv"), 1);
    assert_eq!(values.len(), 1200);
    assert!(values.iter().all(|v| *v == 0.0));
}

#[test]
fn outputs_are_write_once() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["simulate", "--out", "o"];
    args.extend_from_slice(SMALL);
    ok(&args, tmp.path());
    let before = fs::read(tmp.path().join("o/series.csv")).unwrap();
    let mut again = vec!["simulate", "--lambda", "0.02", "--out", "o"];
    again.extend_from_slice(SMALL);
    assert_eq!(code(&bin(&again, tmp.path())), 2);
    assert_eq!(fs::read(tmp.path().join("o/series.csv")).unwrap(), before);
}

#[test]
fn saved_networks_can_be_replayed() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["simulate", "--save-network", "--out", "a"];
    args.extend_from_slice(SMALL);
    ok(&args, tmp.path());
    let net = fs::read_to_string(tmp.path().join("a/network.txt")).unwrap();
    assert!(net.starts_with("# nodes=120 seed=1\n"));
    ok(
        &[
            "simulate",
            "--network",
            "a/network.txt",
            "--steps",
            "1300",
            "--warmup",
            "100",
            "--out",
            "b",
        ],
        tmp.path(),
    );
    assert_eq!(
        fs::read(tmp.path().join("a/series.csv")).unwrap(),
        fs::read(tmp.path().join("b/series.csv")).unwrap()
    );
    fs::write(tmp.path().join("broken.txt"), "# nodes=3 seed=1\n0 1\n").unwrap();
    let out = bin(
        &["simulate", "--network", "broken.txt", "--out", "c"],
        tmp.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn config_errors_exit_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("bad.conf"),
        "lambda = 0.01\ncolour = blue\n",
    )
    .unwrap();
    fs::write(tmp.path().join("typo.conf"), "nodes = many\n").unwrap();
    for args in [
        &["simulate", "--config", "bad.conf", "--out", "x"][..],
        &["simulate", "--config", "typo.conf", "--out", "x"],
        &["simulate", "--beta", "-0.5", "--out", "x"],
        &["simulate", "--strategy", "fastest", "--out", "x"],
        &["simulate", "--links", "0", "--out", "x"],
        &["sweep", "--betas", "0.2:0.1:5", "--out", "x"],
    ] {
        assert_eq!(code(&bin(args, tmp.path())), 2, "{args:?}");
    }
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn config_file_values_yield_to_flags() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("run.conf"),
        "# small run\nstrategy = echenique\nnodes = 120\nsteps = 1300\nwarmup = 100\nbeta = 0.3\n",
    )
    .unwrap();
    ok(
        &[
            "simulate", "--config", "run.conf", "--beta", "0.07", "--out", "o",
        ],
        tmp.path(),
    );
    let m = json(tmp.path().join("o/manifest.json"));
    assert_eq!(m["config"]["strategy"], "echenique");
    assert_eq!(m["config"]["beta"], 0.07);
    assert_eq!(m["config"]["nodes"], 120);
}

#[test]
fn dfa_of_white_noise_is_one_half() {
    let tmp = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let noise: Vec<f64> = (0..1 << 14)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    write_series(&tmp.path().join("noise.csv"), &noise);
    ok(&["dfa", "noise.csv", "--out", "d"], tmp.path());
    let summary = json(tmp.path().join("d/dfa.json"));
    let alpha = summary["alpha"].as_f64().unwrap();
    assert!((0.45..=0.55).contains(&alpha), "alpha = {alpha}");
    assert_eq!(summary["degenerate"], false);
    let table = fs::read_to_string(tmp.path().join("d/dfa.csv")).unwrap();
    assert!(table.starts_with("m,F\n4,"));
    assert_eq!(
        table.lines().count() - 1,
        summary["n_points"].as_u64().unwrap() as usize
    );
}

#[test]
fn dfa_of_a_ramp_is_degenerate() {
    let tmp = TempDir::new().unwrap();
    let ramp: Vec<f64> = (0..2000).map(|j| 0.5 + 0.01 * j as f64).collect();
    write_series(&tmp.path().join("ramp.csv"), &ramp);
    ok(&["dfa", "ramp.csv", "--out", "d"], tmp.path());
    let summary = json(tmp.path().join("d/dfa.json"));
    assert_eq!(summary["degenerate"], true);
    assert!(summary["alpha"].is_null());
    assert!(column(&tmp.path().join("d/dfa.csv"), 1)
        .iter()
        .all(|f| *f < 1e-9));
}

#[test]
fn dfa_rejects_malformed_series() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("header.csv", "time,value\n0,1\n"),
        ("number.csv", "t,avg_packets\n0,1.0\n1,abc\n"),
        ("fields.csv", "t,avg_packets\n0,1.0,2.0\n"),
        ("nan.csv", "t,avg_packets\n0,NaN\n"),
        ("short.csv", "t,avg_packets\n0,1.0\n1,2.0\n"),
        ("empty.csv", ""),
    ];
    for (name, text) in cases {
        fs::write(tmp.path().join(name), text).unwrap();
        let out = bin(&["dfa", name, "--out", name], tmp.path());
        assert_eq!(
            code(&out),
            2,
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(
        code(&bin(&["dfa", "missing.csv", "--out", "m"], tmp.path())),
        3
    );
}

#[test]
fn dfa_of_a_simulated_series_is_finite() {
    let tmp = TempDir::new().unwrap();
    ok(
        &[
            "simulate",
            "--strategy",
            "liu",
            "--beta",
            "0.06",
            "--out",
            "s",
        ],
        tmp.path(),
    );
    ok(&["dfa", "s/series.csv", "--out", "d"], tmp.path());
    let summary = json(tmp.path().join("d/dfa.json"));
    assert!(summary["alpha"].as_f64().unwrap().is_finite());
    assert!(summary["crossover"].is_null() || summary["crossover"].is_u64());
}

fn sweep_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["sweep", "--out", out];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    args
}

#[test]
fn sweep_writes_one_curve_per_strategy_on_the_default_grid() {
    let tmp = TempDir::new().unwrap();
    ok(
        &sweep_args("s", &["--ensemble", "1", "--workers", "2"]),
        tmp.path(),
    );
    for strategy in ["liu", "echenique", "zhang"] {
        let text = fs::read_to_string(
            tmp.path()
                .join("s")
                .join(strategy)
                .join("alpha_vs_beta.csv"),
        )
        .unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("beta,alpha,alpha_stderr,growth_slope,phase")
        );
        assert_eq!(lines.count(), 25, "{strategy}");
    }
    let betas = column(&tmp.path().join("s/liu/alpha_vs_beta.csv"), 0);
    assert!((betas[0] - 0.02).abs() < 1e-15 && (betas[24] - 0.2).abs() < 1e-15);
    let m = json(tmp.path().join("s/manifest.json"));
    assert_eq!(m["command"], "sweep");
    assert_eq!(m["config"]["strategies"].as_array().unwrap().len(), 3);
}

#[test]
fn interrupted_sweeps_resume_to_the_clean_result() {
    let tmp = TempDir::new().unwrap();
    let grid = [
        "--strategy",
        "echenique",
        "--betas",
        "0.02:0.2:6",
        "--ensemble",
        "2",
    ];
    ok(&sweep_args("clean", &grid), tmp.path());

    let mut partial = grid.to_vec();
    partial.extend_from_slice(&["--max-cells", "5", "--workers", "3"]);
    ok(&sweep_args("resumed", &partial), tmp.path());
    let curve = tmp.path().join("resumed/echenique/alpha_vs_beta.csv");
    assert!(!curve.exists());
    ok(&sweep_args("resumed", &partial), tmp.path());
    // A torn final journal line, as left by a kill mid-write, is tolerated.
    let journal = tmp.path().join("resumed/echenique/cells.csv");
    let mut text = fs::read_to_string(&journal).unwrap();
    text.push_str("3,1,0.0920000");
    fs::write(&journal, text).unwrap();
    let mut rest = grid.to_vec();
    rest.extend_from_slice(&["--workers", "2"]);
    ok(&sweep_args("resumed", &rest), tmp.path());

    assert_eq!(
        fs::read(tmp.path().join("clean/echenique/alpha_vs_beta.csv")).unwrap(),
        fs::read(&curve).unwrap()
    );
    // A different configuration is not mixed into an existing sweep.
    let other = sweep_args(
        "resumed",
        &[
            "--strategy",
            "echenique",
            "--betas",
            "0.02:0.2:7",
            "--ensemble",
            "2",
        ],
    );
    assert_eq!(code(&bin(&other, tmp.path())), 2);
}

#[test]
fn sweep_with_every_cell_failing_exits_four() {
    let tmp = TempDir::new().unwrap();
    // 200 retained steps cannot hold a single 64-sample box.
    let args = [
        "sweep",
        "--strategy",
        "liu",
        "--betas",
        "0.05:0.1:2",
        "--ensemble",
        "2",
        "--nodes",
        "60",
        "--steps",
        "300",
        "--warmup",
        "100",
        "--out",
        "f",
    ];
    assert_eq!(code(&bin(&args, tmp.path())), 4);
    assert!(!tmp.path().join("f/liu/alpha_vs_beta.csv").exists());
    assert_eq!(
        fs::read_to_string(tmp.path().join("f/liu/cells.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}

fn write_curve(dir: &Path, rows: &[(f64, f64, f64)]) {
    fs::create_dir_all(dir).unwrap();
    let mut text = String::from("beta,alpha,alpha_stderr,growth_slope,phase\n");
    for (beta, alpha, slope) in rows {
        text.push_str(&format!("{beta},{alpha},0.01,{slope},\n"));
    }
    fs::write(dir.join("alpha_vs_beta.csv"), text).unwrap();
}

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.02 + 0.0075 * i as f64).collect()
}

#[test]
fn phases_of_a_flat_curve_put_beta1_at_beta_c() {
    let tmp = TempDir::new().unwrap();
    let rows: Vec<_> = grid(25).into_iter().map(|b| (b, 0.5, 0.0)).collect();
    write_curve(&tmp.path().join("zhang"), &rows);
    ok(&["phases", "zhang/alpha_vs_beta.csv"], tmp.path());
    let r = json(tmp.path().join("zhang/phase_report.json"));
    assert_eq!(r["strategy"], "zhang");
    assert_eq!(r["beta_1"], r["beta_c"]);
    assert_eq!(r["labels"].as_array().unwrap().len(), 25);
    assert!(tmp.path().join("zhang/manifest.json").exists());
}

#[test]
fn phases_recover_a_constructed_knee() {
    let tmp = TempDir::new().unwrap();
    // Congested below 0.035, alpha decaying from 1.2 to the 0.5 plateau by 0.0725.
    let rows: Vec<_> = grid(25)
        .into_iter()
        .map(|b| {
            let slope = if b < 0.035 { 1e-3 } else { 0.0 };
            let alpha = if b <= 0.0725 {
                1.2 - 0.7 * (b - 0.035) / 0.0375
            } else {
                0.5
            };
            (
                b,
                alpha.max(0.5) + if b <= 0.0725 { 0.05 } else { 0.0 },
                slope,
            )
        })
        .collect();
    write_curve(&tmp.path().join("echenique"), &rows);
    ok(
        &[
            "phases",
            "echenique/alpha_vs_beta.csv",
            "--out",
            "r",
            "--ensemble",
            "10",
        ],
        tmp.path(),
    );
    let r = json(tmp.path().join("r/phase_report.json"));
    let beta_c = r["beta_c"].as_f64().unwrap();
    let beta_1 = r["beta_1"].as_f64().unwrap();
    assert!((beta_c - 0.03125).abs() < 1e-12, "beta_c = {beta_c}");
    assert!(
        (beta_1 - 0.0725).abs() <= 0.0075 + 1e-12,
        "beta_1 = {beta_1}"
    );
    assert_eq!(r["ensemble"], 10);
    let labels = r["labels"].as_array().unwrap();
    assert_eq!(labels[0]["phase"], "congestion");
    assert_eq!(labels[4]["phase"], "buffer");
    assert_eq!(labels[24]["phase"], "free");
}

#[test]
fn phases_reject_bad_curves() {
    let tmp = TempDir::new().unwrap();
    fs::create_dir_all(tmp.path().join("liu")).unwrap();
    fs::write(tmp.path().join("liu/bad.csv"), "beta,alpha\n0.1,0.5\n").unwrap();
    fs::write(
        tmp.path().join("liu/unsorted.csv"),
        "beta,alpha,alpha_stderr,growth_slope,phase\n0.2,0.5,0,0,\n0.1,0.5,0,0,\n",
    )
    .unwrap();
    fs::write(
        tmp.path().join("liu/short.csv"),
        "beta,alpha,alpha_stderr,growth_slope,phase\n0.1,0.5,0,0,\n0.2,0.5,0,0,\n",
    )
    .unwrap();
    for name in ["liu/bad.csv", "liu/unsorted.csv", "liu/short.csv"] {
        assert_eq!(code(&bin(&["phases", name], tmp.path())), 2, "{name}");
    }
    let rows: Vec<_> = grid(8).into_iter().map(|b| (b, 0.5, 0.0)).collect();
    write_curve(&tmp.path().join("curves"), &rows);
    assert_eq!(
        code(&bin(&["phases", "curves/alpha_vs_beta.csv"], tmp.path())),
        2
    );
    ok(
        &["phases", "curves/alpha_vs_beta.csv", "--strategy", "liu"],
        tmp.path(),
    );
}

#[test]
fn validate_passes_on_a_clean_build() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&["validate"], tmp.path());
    let table = String::from_utf8(out.stdout).unwrap();
    let rows = table
        .lines()
        .filter(|l| l.contains(" PASS ") || l.contains(" FAIL "))
        .count();
    assert!(rows >= 6, "{table}");
    assert!(!table.contains(" FAIL "), "{table}");
}

fn shifted_box(profile: &[f64], m: usize) -> traffic_dfa_core::Result<f64> {
    fluctuation(profile, m + 1)
}

#[test]
fn validate_catches_an_off_by_one_box() {
    let checks = validate::run(&Hooks {
        fluctuation: shifted_box,
    });
    assert_eq!(validate::exit_code(&checks), ExitCode::ChecksFailed);
    let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    assert!(failed.contains(&"dfa.reference"), "{failed:?}");
}
