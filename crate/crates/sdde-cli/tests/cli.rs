//! End-to-end tests of the `sdde` binary: exit codes, artifact layout,
//! determinism, the analytic linear baseline, and resume semantics.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sdde(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdde"))
        .args(args)
        .current_dir(dir)
        .env_remove("SDDE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Heat flow on four modes with every nonlinear term switched off.
fn linear_config(t_final: f64) -> String {
    format!(
        r#"{{
          "model": {{
            "spectrum": {{"m": 4, "L": 3.141592653589793}},
            "eta": {{"kind": "constant", "value": 0.25, "r": 0.5}},
            "fmap": {{
              "b": {{"kind": "linear", "slope": 0.0}},
              "B": {{"kind": "identity"}}
            }}
          }},
          "integrator": {{
            "dt": 0.01, "scheme": "etd_rk2", "T_final": {t_final}, "record_every": 10
          }},
          "experiment": {{
            "kind": "simulate",
            "initial": {{"kind": "modes", "coeffs": [1.0]}}
          }}
        }}"#
    )
}

/// Nicholson instance with a state-dependent lag, for resume tests.
fn blowflies_config(t_final: f64) -> String {
    format!(
        r#"{{
          "model": {{
            "spectrum": {{"m": 8, "L": 3.141592653589793}},
            "eta": {{"kind": "norm_sigmoid", "rate": 1.0, "r": 0.5}},
            "fmap": {{
              "b": {{"kind": "nicholson", "c1": 2.0, "c2": 1.0}},
              "B": {{"kind": "lowpass", "cutoff": 4}}
            }},
            "h": [0.1]
          }},
          "integrator": {{
            "dt": 0.01, "scheme": "etd_rk2", "T_final": {t_final}, "record_every": 10
          }},
          "experiment": {{
            "kind": "simulate",
            "initial": {{"kind": "modes", "coeffs": [1.0, 0.25]}}
          }}
        }}"#
    )
}

#[test]
fn non_divisible_dt_exits_2_and_names_dt() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        &linear_config(1.0).replace("\"dt\": 0.01", "\"dt\": 0.03"),
    );
    let out = sdde(&["simulate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("integrator.dt"), "{}", stderr_of(&out));
}

#[test]
fn subcommand_and_config_kind_must_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.json", &linear_config(1.0));
    let out = sdde(&["pair", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("experiment.kind"), "{}", stderr_of(&out));
}

#[test]
fn same_config_and_seed_give_byte_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let text = blowflies_config(1.0).replace(
        r#""initial": {"kind": "modes", "coeffs": [1.0, 0.25]}"#,
        r#""initial": {"kind": "random", "amplitude": 1.0}, "seed": 11"#,
    );
    assert!(serde_json::from_str::<serde_json::Value>(&text).is_ok());
    let cfg = write_config(tmp.path(), "run.json", &text);
    for name in ["a", "b"] {
        let out = sdde(
            &[
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                name,
            ],
            tmp.path(),
        );
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    let a = fs::read(tmp.path().join("a/trajectory.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/trajectory.csv")).unwrap();
    assert_eq!(a, b, "trajectory.csv differs between identical runs");
    let a = fs::read(tmp.path().join("a/checkpoint.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/checkpoint.csv")).unwrap();
    assert_eq!(a, b, "checkpoint.csv differs between identical runs");
}

#[test]
fn pure_linear_run_matches_analytic_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "lin.json", &linear_config(1.0));
    let out = sdde(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let csv = fs::read_to_string(tmp.path().join("o/trajectory.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let (t, norm_h) = (cols[0], cols[1]);
        // L = pi puts lambda_1 = 1, so mode 1 decays like e^(-t).
        let expected = (-t).exp();
        assert!(
            (norm_h - expected).abs() <= 1e-12 * expected,
            "norm_H({t}) = {norm_h}, expected {expected}"
        );
        rows += 1;
    }
    assert_eq!(rows, 11);
}

#[test]
fn split_run_reproduces_the_uninterrupted_one() {
    let tmp = tempfile::tempdir().unwrap();
    let short = write_config(tmp.path(), "short.json", &blowflies_config(2.0));
    let long = write_config(tmp.path(), "long.json", &blowflies_config(4.0));
    for (cfg, out_dir) in [(&short, "half"), (&long, "full")] {
        let out = sdde(
            &["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir],
            tmp.path(),
        );
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    let out = sdde(
        &["resume", "--from", "half", "--additional-t", "2", "--out", "second"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));

    let read_lines = |dir: &str| -> Vec<String> {
        fs::read_to_string(tmp.path().join(dir).join("trajectory.csv"))
            .unwrap()
            .lines()
            .map(str::to_owned)
            .collect()
    };
    let full = read_lines("full");
    let mut stitched = read_lines("half");
    stitched.extend(read_lines("second").into_iter().skip(1));
    assert_eq!(full, stitched, "stitched trajectory differs from the uninterrupted run");

    let full_ckpt = fs::read(tmp.path().join("full/checkpoint.csv")).unwrap();
    let second_ckpt = fs::read(tmp.path().join("second/checkpoint.csv")).unwrap();
    assert_eq!(full_ckpt, second_ckpt, "final checkpoints differ");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("second/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "resume");
    assert_eq!(manifest["resumed_from"], "half");
    assert_eq!(manifest["additional_T"], 2.0);
}

#[test]
fn dump_shorter_than_the_horizon_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.json", &blowflies_config(1.0));
    let out = sdde(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));

    // r = 0.5 at dt = 0.01 means 51 rows; keeping the last 26 leaves half
    // the horizon.
    let ckpt = tmp.path().join("o/checkpoint.csv");
    let text = fs::read_to_string(&ckpt).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut kept = vec![lines[0]];
    kept.extend(lines[lines.len() - 26..].iter().copied());
    fs::write(&ckpt, kept.join("\n") + "\n").unwrap();

    let out = sdde(&["resume", "--from", "o", "--additional-t", "1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("delay horizon"), "{}", stderr_of(&out));
}

#[test]
fn resume_of_zero_additional_time_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.json", &blowflies_config(1.0));
    let out = sdde(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let out = sdde(&["resume", "--from", "o", "--additional-t", "0"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(
        !tmp.path().join("o-resumed").exists(),
        "no-op resume must not create artifacts"
    );
}

#[test]
fn seed_flag_overrides_the_config_and_lands_in_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let text = blowflies_config(1.0).replace(
        r#""initial": {"kind": "modes", "coeffs": [1.0, 0.25]}"#,
        r#""initial": {"kind": "random", "amplitude": 1.0}, "seed": 1"#,
    );
    let cfg = write_config(tmp.path(), "run.json", &text);
    for (seed, dir) in [("1", "a"), ("7", "b")] {
        let out = sdde(
            &[
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                seed,
                "--out",
                dir,
            ],
            tmp.path(),
        );
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("b/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["experiment"]["seed"], 7);
    let a = fs::read(tmp.path().join("a/trajectory.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/trajectory.csv")).unwrap();
    assert_ne!(a, b, "different seeds should give different trajectories");
}

#[test]
fn out_dir_precedence_is_flag_config_env_default() {
    let tmp = tempfile::tempdir().unwrap();
    let with_dir = linear_config(1.0).replace(
        r#""experiment": {"#,
        r#""output": {"directory": "from-config"}, "experiment": {"#,
    );
    let cfg = write_config(tmp.path(), "run.json", &with_dir);

    // Config directory wins over the environment.
    let out = Command::new(env!("CARGO_BIN_EXE_sdde"))
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .current_dir(tmp.path())
        .env("SDDE_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(tmp.path().join("from-config/trajectory.csv").exists());
    assert!(!tmp.path().join("from-env").exists());

    // The environment fills in when the config names no directory.
    let bare = write_config(tmp.path(), "bare.json", &linear_config(1.0));
    let out = Command::new(env!("CARGO_BIN_EXE_sdde"))
        .args(["simulate", "--config", bare.to_str().unwrap()])
        .current_dir(tmp.path())
        .env("SDDE_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(tmp.path().join("from-env/trajectory.csv").exists());

    // The flag wins over both.
    let out = Command::new(env!("CARGO_BIN_EXE_sdde"))
        .args([
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "from-flag",
        ])
        .current_dir(tmp.path())
        .env("SDDE_OUT_DIR", "from-env2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(tmp.path().join("from-flag/trajectory.csv").exists());
    assert!(!tmp.path().join("from-env2").exists());
}

#[test]
fn every_bundled_config_runs_clean() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let kind: String = serde_json::from_str::<serde_json::Value>(
            &fs::read_to_string(&path).unwrap(),
        )
        .unwrap()["experiment"]["kind"]
            .as_str()
            .unwrap()
            .to_owned();
        let out_dir = tmp.path().join(path.file_stem().unwrap());
        let out = sdde(
            &[
                &kind,
                "--config",
                path.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ],
            tmp.path(),
        );
        assert!(
            out.status.success(),
            "{} failed: {}",
            path.display(),
            stderr_of(&out)
        );
        assert!(out_dir.join("manifest.json").exists(), "{}", path.display());
        seen += 1;
    }
    assert_eq!(seen, 5, "expected one bundled config per experiment kind");
}

#[test]
fn runtime_blowup_exits_1_with_a_diagnostics_file() {
    let tmp = tempfile::tempdir().unwrap();
    // Strong positive linear feedback with a long horizon: the iteration
    // overflows well before T_final.
    let text = blowflies_config(2000.0).replace(
        r#""b": {"kind": "nicholson", "c1": 2.0, "c2": 1.0}"#,
        r#""b": {"kind": "linear", "slope": -200.0}"#,
    );
    let cfg = write_config(tmp.path(), "run.json", &text);
    let out = sdde(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr_of(&out));
    let failure = tmp.path().join("o/failure.json");
    assert!(failure.exists());
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(failure).unwrap()).unwrap();
    assert!(
        diag["error"].as_str().unwrap().contains("blew up"),
        "{diag}"
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["status"], "failed");
}
