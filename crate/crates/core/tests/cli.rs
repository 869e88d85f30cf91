use std::path::Path;
use std::process::{Command, Output};

fn tabmia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabmia")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_grid(path: &Path, n: usize, offset: f64, label: Option<&dyn Fn(usize) -> &'static str>) {
    let mut text = String::from("x,y,colour");
    if label.is_some() {
        text.push_str(",member");
    }
    text.push('\n');
    for i in 0..n {
        let x = (i as f64 * 0.731 + offset) % 10.0;
        let y = (i as f64 * 1.913 + offset) % 7.0;
        let c = ["red", "green", "blue"][i % 3];
        text.push_str(&format!("{x},{y},{c}"));
        if let Some(f) = label {
            text.push_str(&format!(",{}", f(i)));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&tabmia(&[])), 1);
    assert_eq!(code(&tabmia(&["frobnicate"])), 1);
    assert_eq!(code(&tabmia(&["bench"])), 1);
    assert_eq!(code(&tabmia(&["--help"])), 0);
}

#[test]
fn missing_or_malformed_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&tabmia(&["bench", "--config", missing.to_str().unwrap()])), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&tabmia(&["bench", "--config", bad.to_str().unwrap()])), 2);
}

#[test]
fn invalid_config_values_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"datasets":[],"generators":[{"kind":"memorizer"}]}"#).unwrap();
    assert_eq!(code(&tabmia(&["bench", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn audit_runs_on_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn.csv");
    let reference = dir.path().join("ref.csv");
    let test = dir.path().join("test.csv");
    write_grid(&syn, 60, 0.0, None);
    write_grid(&reference, 40, 0.37, None);
    let label = |i: usize| if i.is_multiple_of(2) { "true" } else { "0" };
    write_grid(&test, 50, 0.0, Some(&label));
    let out = dir.path().join("out");
    let o = tabmia(&[
        "audit",
        "--synthetic",
        syn.to_str().unwrap(),
        "--reference",
        reference.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
        "--label-column",
        "member",
        "--attacks",
        "dcr,DPI,mc,dcr-diff",
        "--ensembles",
        "mean,majority-vote",
        "--normalization",
        "rank",
        "--out",
        out.to_str().unwrap(),
        "--keep-scores",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("DCR") && stdout.contains("MajorityVote"), "{stdout}");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("audit.json")).unwrap()).unwrap();
    assert_eq!(json["attacks"].as_array().unwrap().len(), 4);
    assert_eq!(json["ensembles"].as_array().unwrap().len(), 2);
    assert_eq!(json["labels"].as_array().unwrap().len(), 50);
}

#[test]
fn audit_rejects_bad_labels_and_unknown_attacks() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn.csv");
    let test = dir.path().join("test.csv");
    write_grid(&syn, 30, 0.0, None);
    let label = |i: usize| if i == 3 { "maybe" } else { "1" };
    write_grid(&test, 20, 0.0, Some(&label));
    let base =
        ["audit", "--synthetic", syn.to_str().unwrap(), "--reference", syn.to_str().unwrap(), "--test", test.to_str().unwrap()];
    let mut args = base.to_vec();
    args.extend(["--label-column", "member"]);
    assert_eq!(code(&tabmia(&args)), 2);
    let mut args = base.to_vec();
    args.extend(["--label-column", "absent"]);
    assert_eq!(code(&tabmia(&args)), 2);
    let mut args = base.to_vec();
    args.extend(["--label-column", "member", "--attacks", "DCR,ouija"]);
    assert_eq!(code(&tabmia(&args)), 1);
}

#[test]
fn bench_contrib_and_report_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"datasets":[{"name":"toy","population":"two-d-mixture","n":120}],
            "generators":[{"kind":"memorizer"},{"kind":"marginal-sampler"}],
            "seeds":[0,1],
            "attacks":[{"kind":"DCR"},{"kind":"DCR-Diff"},{"kind":"MC"}],
            "keep_scores":true,
            "advantage_trials":100,
            "output_dir":"out"}"#,
    )
    .unwrap();
    let o = tabmia(&["bench", "--config", cfg.to_str().unwrap(), "--parallelism", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    assert!(out.join("report.json").is_file());

    let o = tabmia(&["contrib", "--report", out.to_str().unwrap(), "--metric", "tpr10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("contributions.csv").is_file());
    assert!(out.join("contribution_ranks.csv").is_file());

    let csv_dir = dir.path().join("csv");
    let o = tabmia(&["report", "--in", out.to_str().unwrap(), "--format", "csv", "--out", csv_dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(csv_dir.join("ranks.csv").is_file());
    assert!(!csv_dir.join("report.json").exists());
    assert_eq!(code(&tabmia(&["report", "--in", out.to_str().unwrap(), "--format", "xml"])), 1);
}

#[test]
fn contrib_without_kept_scores_is_an_analysis_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"datasets":[{"name":"toy","population":"two-d-mixture","n":100}],
            "generators":[{"kind":"memorizer"}], "seeds":[0],
            "attacks":[{"kind":"DCR"},{"kind":"MC"}], "advantage_trials":10}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&tabmia(&["bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let o = tabmia(&["contrib", "--report", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("keep_scores"));
}
