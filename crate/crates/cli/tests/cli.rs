use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_phaseglm"));
    cmd.env_remove("PHASEGLM_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn out_dir(tmp: &TempDir, name: &str) -> String {
    tmp.path().join(name).to_str().unwrap().to_string()
}

const SMALL_SWEEP: &[&str] = &[
    "--set",
    "radial.family=gamma",
    "--set",
    "radial.shape=1",
    "--set",
    "sweep.n=60",
    "--set",
    "sweep.replicates=4",
    "--set",
    "sweep.gamma0=1,4",
    "--set",
    "sweep.kappa=0.1,0.3,0.5",
];

#[test]
fn desk_sweep_writes_four_files() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "desk");
    let out = run(&["sweep", "--set", "radial.family=gamma", "--set", "radial.shape=1", "--out-dir", &dir]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut files: Vec<String> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    files.sort();
    assert_eq!(files, ["grid.csv", "heatmap.ppm", "manifest.json", "summary.csv"]);
    let grid = fs::read_to_string(Path::new(&dir).join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 64);
    let m = manifest(Path::new(&dir));
    assert_eq!(m["command"], "sweep");
    assert_eq!(m["profile"], "desk");
    for name in m["outputs"].as_array().unwrap() {
        assert!(Path::new(&dir).join(name.as_str().unwrap()).is_file());
    }
    assert!(stdout(&out).contains("MIW"));
}

#[test]
fn missing_radial_family_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    for cmd in ["sweep", "hmle", "check", "moments"] {
        let out = run(&[cmd, "--out-dir", &out_dir(&tmp, cmd)]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(stderr(&out).contains("radial.family"), "{cmd}: {}", stderr(&out));
    }
}

#[test]
fn unknown_and_malformed_keys_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "radial.family = chi\nsweep.bogus = 3\n").unwrap();
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sweep.bogus"));

    let out = run(&["moments", "--set", "radial.family=chi", "--set", "moments.p=ten"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("moments.p"));

    let out = run(&["moments", "--set", "radial.family=gamma"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("radial.shape"));

    let out = run(&["sweep", "--set", "radial.family=chi", "--set", "sweep.kappa=0.5,0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sweep.kappa"));

    assert_eq!(run(&["sweep", "--profile", "huge"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = run(&["moments", "--set", "radial.family=chi", "--out-dir", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn separate_reports_quasi_complete_fixture() {
    let out = run(&["separate", fixture("quasi_complete.csv").to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("kind: QuasiComplete"), "{text}");
    assert!(text.contains("certificate:"));
    assert!(text.contains("lp_objective:"));
}

#[test]
fn zero_one_labels_match_signed_labels() {
    let signed = run(&["separate", fixture("quasi_complete.csv").to_str().unwrap()]);
    let binary = run(&["separate", fixture("quasi_complete_01.csv").to_str().unwrap()]);
    assert!(signed.status.success() && binary.status.success());
    assert_eq!(stdout(&signed), stdout(&binary));
}

#[test]
fn malformed_datasets_exit_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let bad_label = tmp.path().join("label.csv");
    fs::write(&bad_label, "y,x1\n2,0.5\n").unwrap();
    let text_cell = tmp.path().join("text.csv");
    fs::write(&text_cell, "y,x1\n1,abc\n").unwrap();
    for path in [empty, bad_label, text_cell, fixture("wrong_arity.csv"), tmp.path().join("missing.csv")] {
        let out = run(&["separate", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{}: {}", path.display(), stderr(&out));
    }
}

fn files_of(dir: &str, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|n| fs::read(Path::new(dir).join(n)).unwrap()).collect()
}

#[test]
fn equal_seeds_give_identical_csvs() {
    let tmp = TempDir::new().unwrap();
    let sweep = |name: &str, seed: &str, threads: &str| {
        let dir = out_dir(&tmp, name);
        let mut args = vec!["sweep", "--seed", seed, "--threads", threads, "--out-dir", &dir];
        args.extend_from_slice(SMALL_SWEEP);
        let out = run(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        files_of(&dir, &["grid.csv", "summary.csv", "heatmap.ppm"])
    };
    let a = sweep("a", "11", "1");
    assert_eq!(a, sweep("b", "11", "1"));
    assert_eq!(a, sweep("c", "11", "3"));

    let check = |name: &str| {
        let dir = out_dir(&tmp, name);
        let out = run(&[
            "check",
            "--seed",
            "5",
            "--set",
            "radial.family=half-normal",
            "--set",
            "check.mc_samples=5000",
            "--set",
            "check.sim_trials=500",
            "--out-dir",
            &dir,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        files_of(&dir, &["g_functions.csv", "pg_table.csv", "carleman.csv", "separation_probability.csv"])
    };
    assert_eq!(check("c1"), check("c2"));

    let hmle = |name: &str| {
        let dir = out_dir(&tmp, name);
        let out = run(&["hmle", "--seed", "9", "--set", "radial.family=chi", "--set", "hmle.n=200", "--out-dir", &dir]);
        assert!(out.status.success(), "{}", stderr(&out));
        files_of(&dir, &["hmle.csv", "hmle_plateau.csv"])
    };
    assert_eq!(hmle("h1"), hmle("h2"));
}

/// Runs `moments` with an optional config-file value and an optional `--set`
/// value for `key`, returning the manifest entry.
fn resolved(key: &str, file_value: Option<&str>, flag_value: Option<&str>) -> (Value, Value) {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    let mut text = String::from("# precedence probe\nradial.family = chi\n");
    if let Some(v) = file_value {
        text.push_str(&format!("{key} = {v}\n"));
    }
    fs::write(&cfg, text).unwrap();
    let dir = out_dir(&tmp, "out");
    let setting = flag_value.map(|v| format!("{key}={v}"));
    let mut args = vec!["moments", "--config", cfg.to_str().unwrap(), "--out-dir", &dir];
    if let Some(s) = &setting {
        args.extend(["--set", s.as_str()]);
    }
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let m = manifest(Path::new(&dir));
    (m["config"][key]["value"].clone(), m["config"][key]["source"].clone())
}

#[test]
fn precedence_is_flag_then_file_then_profile_for_each_key() {
    let cases = [
        ("model.alpha0", "1", "2", "3"),
        ("model.beta0", "0", "0.5", "-0.5"),
        ("model.link", "logit", "probit", "cloglog"),
        ("moments.p", "100", "40", "60"),
        ("moments.max_order", "8", "6", "7"),
        ("sweep.n", "200", "300", "400"),
        ("sweep.gamma0", "0.5,1,2,3,4,6,8,10", "1,2", "3"),
        ("hmle.n", "1000", "500", "700"),
        ("check.p", "20", "10", "30"),
        ("lp.zero_tol", "1e-6", "1e-5", "1e-4"),
    ];
    for (key, default, file, flag) in cases {
        assert_eq!(resolved(key, None, None), (Value::from(default), Value::from("profile")), "{key}");
        assert_eq!(resolved(key, Some(file), None), (Value::from(file), Value::from("file")), "{key}");
        assert_eq!(resolved(key, Some(file), Some(flag)), (Value::from(flag), Value::from("flag")), "{key}");
        assert_eq!(resolved(key, None, Some(flag)), (Value::from(flag), Value::from("flag")), "{key}");
    }
}

#[test]
fn full_profile_changes_defaults() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "full");
    let out = run(&["moments", "--profile", "paper", "--set", "radial.family=chi", "--out-dir", &dir]);
    assert!(out.status.success());
    let m = manifest(Path::new(&dir));
    assert_eq!(m["config"]["sweep.n"]["value"], "1000");
    assert_eq!(m["config"]["hmle.n"]["value"], "4000");
    assert_eq!(m["config"]["moments.p"]["value"], "1000");
}

#[test]
fn seed_and_thread_flags_win() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "radial.family = chi\nrun.seed = 12\nrun.threads = 2\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let probe = |name: &str, extra: &[&str], env_threads: Option<&str>| {
        let dir = out_dir(&tmp, name);
        let mut cmd = bin();
        cmd.args(["moments", "--config", cfg, "--out-dir", &dir]).args(extra);
        if let Some(t) = env_threads {
            cmd.env("PHASEGLM_THREADS", t);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        let m = manifest(Path::new(&dir));
        (m["master_seed"].as_u64().unwrap(), m["threads"].as_u64().unwrap())
    };
    assert_eq!(probe("file", &[], None), (12, 2));
    assert_eq!(probe("env", &[], Some("3")), (12, 3));
    assert_eq!(probe("flags", &["--seed", "4", "--threads", "1"], Some("3")), (4, 1));
    let bad = bin().args(["moments", "--config", cfg]).env("PHASEGLM_THREADS", "many").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn check_verdicts_for_reference_cases() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "lognormal");
    let out = run(&["check", "--set", "radial.family=log-normal", "--set", "check.n_list=30", "--out-dir", &dir]);
    assert!(out.status.success(), "{}", stderr(&out));
    let verdicts = fs::read_to_string(Path::new(&dir).join("verdicts.txt")).unwrap();
    assert!(verdicts.contains("carleman: converges-likely"), "{verdicts}");
    let table = fs::read_to_string(Path::new(&dir).join("pg_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2, "{table}");

    let dir = out_dir(&tmp, "gaussian");
    let out = run(&["check", "--set", "radial.family=chi", "--set", "model.link=logit", "--out-dir", &dir]);
    assert!(out.status.success(), "{}", stderr(&out));
    let verdicts = fs::read_to_string(Path::new(&dir).join("verdicts.txt")).unwrap();
    assert!(verdicts.contains("pgsuff: holds"), "{verdicts}");
    assert!(verdicts.contains("carleman: diverges-likely"), "{verdicts}");
    let m = manifest(Path::new(&dir));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 7);
}

#[test]
fn hmle_single_point_gives_one_row() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "one");
    let out = run(&[
        "hmle",
        "--set",
        "radial.family=gamma",
        "--set",
        "radial.shape=0.5",
        "--set",
        "hmle.gamma0=2",
        "--set",
        "hmle.p=40",
        "--out-dir",
        &dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(Path::new(&dir).join("hmle.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "gamma0,kappa,p,n,replicates,h_mle,spread,unconverged");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2,0.04,40,1000,20,"));
}

#[test]
fn hmle_full_profile_grid_layout() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "grid");
    let out = run(&[
        "hmle",
        "--profile",
        "paper",
        "--set",
        "radial.family=gamma",
        "--set",
        "radial.shape=0.5",
        "--set",
        "hmle.n=100",
        "--set",
        "hmle.replicates=2",
        "--out-dir",
        &dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(Path::new(&dir).join("hmle.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 20 * 30);
    let mut gammas: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    gammas.dedup();
    assert_eq!(gammas, (1..=20).map(|i| i as f64 * 0.5).collect::<Vec<_>>());
    for (i, r) in rows[..30].iter().enumerate() {
        assert!((r[1] - 0.02 * (i + 1) as f64).abs() < 1e-12, "{r:?}");
        assert_eq!(r[2], 2.0 * (i + 1) as f64);
    }
    assert!(rows.iter().all(|r| r[6] >= 0.0));
    let plateau = fs::read_to_string(Path::new(&dir).join("hmle_plateau.csv")).unwrap();
    assert_eq!(plateau.lines().count(), 21);
}

#[test]
fn sweep_with_theory_overlay() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "overlay");
    let mut args = vec!["sweep", "--set", "sweep.theory=true", "--set", "hmle.n=200", "--set", "hmle.replicates=2", "--out-dir", &dir];
    args.extend_from_slice(SMALL_SWEEP);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let theory = fs::read_to_string(Path::new(&dir).join("theory.csv")).unwrap();
    assert_eq!(theory.lines().count(), 3);
    let summary = fs::read_to_string(Path::new(&dir).join("summary.csv")).unwrap();
    for line in summary.lines().skip(1) {
        let h: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(h > 0.0 && h < 1.0, "{line}");
    }
    assert!(stdout(&out).contains("MD "));
    assert_eq!(manifest(Path::new(&dir))["outputs"].as_array().unwrap().len(), 5);
}
