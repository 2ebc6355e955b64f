//! End-to-end checks of the command-line surface: exit codes, emitted
//! files, and the documented subcommands.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simbo"))
}

#[test]
fn run_emits_trace_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        r#"
            name = "cli_demo"
            seed = 1
            horizon = 60

            [problem]
            kind = "quadratic"
            n = 4
            lambda_min = 1.0
            lambda_max = 5.0
            ts = 0.1

            [problem.signal]
            kind = "sine"
        "#,
    )
    .unwrap();
    let out = dir.path().join("traces");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "stderr: {}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(out.join("cli_demo.csv")).unwrap();
    assert!(csv.starts_with("k,algorithm,tracking_error,residual,phase,event\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 60);
    assert!(out.join("cli_demo.toml").exists());

    // seed override changes the trace
    let status2 = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "2"])
        .output()
        .unwrap();
    assert!(status2.status.success());
    let csv2 = std::fs::read_to_string(out.join("cli_demo.csv")).unwrap();
    assert_ne!(csv, csv2);
}

#[test]
fn missing_config_fails_with_diagnostic() {
    let out = bin().args(["run", "--config", "/nonexistent/x.toml"]).output().unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_config_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "name = \"x\"\nhorizon = 0\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error"), "stderr: {stderr}");
}

#[test]
fn synth_reports_gain_and_margin() {
    let out = bin()
        .args([
            "synth",
            "--coeffs",
            "1,-1.99000833",
            "--lambda-min",
            "1",
            "--lambda-max",
            "5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gain row K"));
    assert!(stdout.contains("max spectral radius"));

    // a violently unstable model is infeasible: dedicated exit code 2
    let out = bin()
        .args([
            "synth",
            "--coeffs",
            "16,0",
            "--lambda-min",
            "1",
            "--lambda-max",
            "5",
            "--stability-margin",
            "0.3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("infeasible"));
}

#[test]
fn identify_prints_estimate_trajectory() {
    let out = bin()
        .args(["identify", "--signal", "sine", "--steps", "40"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("true d"));
    // the estimate converges toward [1, -2cos(0.1)]
    let last = stdout.lines().last().unwrap();
    assert!(last.contains("[") && last.contains("]"), "unexpected tail: {last}");

    let bad = bin().args(["identify", "--signal", "wiggle"]).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn help_documents_subcommands() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    for sub in ["run", "suite", "identify", "synth"] {
        assert!(stdout.contains(sub), "help missing {sub}");
    }
}
