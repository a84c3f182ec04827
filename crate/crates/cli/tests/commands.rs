use std::process::{Command, Output};

fn prefkg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefkg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let runs_s = runs.to_str().unwrap();
    for method in ["random", "eubo"] {
        let out = prefkg(&[
            "run",
            "--function",
            "quadratic2",
            "--method",
            method,
            "--noise",
            "low",
            "--seeds",
            "0..=1",
            "--iters",
            "2",
            "--out",
            runs_s,
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let n_logs = std::fs::read_dir(&runs)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "jsonl")
        })
        .count();
    assert_eq!(n_logs, 4);

    let csv = dir.path().join("all.csv");
    let out = prefkg(&["summarize", "--in", runs_s, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("function,method,noise,iteration"));
    // Two configurations × three iterations, one header.
    assert_eq!(lines.len(), 7);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(4) == Some("2")));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec![
            "run",
            "--function",
            "nope",
            "--method",
            "kg",
            "--noise",
            "low",
            "--out",
            d,
        ],
        vec![
            "run",
            "--function",
            "quadratic2",
            "--method",
            "ucb",
            "--noise",
            "low",
            "--out",
            d,
        ],
        vec![
            "run",
            "--function",
            "quadratic2",
            "--method",
            "kg",
            "--noise",
            "low",
            "--iters",
            "0",
            "--out",
            d,
        ],
        vec![
            "run",
            "--function",
            "quadratic2",
            "--method",
            "kg",
            "--noise",
            "low",
            "--seeds",
            "3..3",
            "--out",
            d,
        ],
        vec!["calibrate", "--function", "branin2", "--target", "0.7"],
        vec![
            "case-study",
            "--function",
            "levy6",
            "--method",
            "kg",
            "--out",
            d,
        ],
        vec!["summarize", "--in", d, "--out", "x.csv"],
    ] {
        let out = prefkg(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn calibrate_prints_sigma() {
    let out = prefkg(&[
        "calibrate",
        "--function",
        "levy2",
        "--target",
        "0.3",
        "--seed",
        "1",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["sigma"].as_f64().unwrap() > 0.0);
    assert!((v["achieved"].as_f64().unwrap() - 0.3).abs() <= 0.002);
    assert!((v["fresh_error_rate"].as_f64().unwrap() - 0.3).abs() < 0.02);
}

#[test]
fn case_study_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cs.json");
    let out = prefkg(&[
        "case-study",
        "--method",
        "random",
        "--iters",
        "3",
        "--resolution",
        "4",
        "--out",
        file.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    assert_eq!(v["function"], "levy2");
    assert_eq!(v["pairs"].as_array().unwrap().len(), 11);
    assert_eq!(v["mean"].as_array().unwrap().len(), 4);
}
