use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets/demo")
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden").join(name)).unwrap()
}

fn streamvr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamvr"))
        .args(args)
        .env_remove("STREAMVR_BASE_URL")
        .env_remove("STREAMVR_API_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn script_flags(script: &Path) -> Vec<String> {
    let spec = format!("script:{}", script.display());
    vec!["--backend-gen".into(), spec.clone(), "--backend-ver".into(), spec.clone(), "--backend-ref".into(), spec]
}

fn run_demo(out: &Path, jobs: &str, modes: &[&str]) -> Output {
    let corpus = demo().join("corpus.jsonl");
    let mut args: Vec<String> = vec!["run".into(), "--corpus".into(), corpus.display().to_string()];
    args.extend(script_flags(&demo().join("script.json")));
    for m in modes {
        args.extend(["--mode".to_string(), m.to_string()]);
    }
    args.extend(["--out".into(), out.display().to_string(), "--jobs".into(), jobs.into()]);
    streamvr(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn demo_run_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    for jobs in ["1", "4"] {
        let out = dir.path().join(jobs);
        let o = run_demo(&out, jobs, &["none", "compare"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(fs::read_to_string(out.join("answers.jsonl")).unwrap(), golden("demo_answers.jsonl"));
        assert_eq!(fs::read_to_string(out.join("report.json")).unwrap(), golden("demo_report.json"));
        let csv = fs::read_to_string(out.join("answers.csv")).unwrap();
        assert_eq!(csv.lines().count(), 9);
        assert!(stdout(&o).contains("efficiency 69.3%"));
    }
}

#[test]
fn none_mode_reports_generation_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_demo(dir.path(), "2", &["none"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["none"]["mean_t_gen"].as_f64().unwrap() > 0.0);
    assert_eq!(report["none"]["mean_t_ver"], 0.0);
    assert_eq!(report["none"]["mean_t_ref"], 0.0);
    assert!(report.get("streaming").is_none() && report.get("full").is_none());
    assert_eq!(report["efficiency"], "n/a");
}

#[test]
fn missing_corpus_is_a_usage_error_naming_the_path() {
    let o = streamvr(&["run", "--corpus", "/no/such/corpus.jsonl", "--backend-gen", "http://127.0.0.1:1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/corpus.jsonl"));
}

#[test]
fn unknown_flags_exit_with_usage_code() {
    assert_eq!(streamvr(&["run", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(streamvr(&["--help"]).status.code(), Some(0));
}

#[test]
fn strict_mode_fails_on_unscored_answers() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    fs::write(&corpus, "{\"id\":\"a\",\"question\":\"Q1?\"}\n{\"id\":\"b\",\"question\":\"Q2?\"}\n").unwrap();
    let script = dir.path().join("s.json");
    fs::write(
        &script,
        r#"{"rules": [
            {"role": "generate", "match": "Q1?", "text": "Ann ran. Bob hid."},
            {"role": "generate", "match": "Q2?", "text": "Cal sat."},
            {"role": "verify", "match": "Bob hid.", "text": "I cannot tell."}
        ]}"#,
    )
    .unwrap();
    let mut args: Vec<String> = vec!["run".into(), "--corpus".into(), corpus.display().to_string()];
    args.extend(script_flags(&script));
    args.extend(["--out".into(), dir.path().join("out").display().to_string()]);
    let lenient = streamvr(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(lenient.status.success(), "{}", stderr(&lenient));
    assert!(stderr(&lenient).contains("answer a failed"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["unscored"], 1);

    args.push("--strict".into());
    let strict = streamvr(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(strict.status.code(), Some(3));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "corpus = \"{}\"\nmodes = [\"compare\"]\nout = \"from-config\"\n[backends]\nall = \"script:{}\"\n",
            demo().join("corpus.jsonl").display(),
            demo().join("script.json").display()
        ),
    )
    .unwrap();
    let o = streamvr(&["run", "--config", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-config/report.json").is_file());

    let flagged = dir.path().join("from-flag");
    let o = streamvr(&["run", "--config", config.to_str().unwrap(), "--out", flagged.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(flagged.join("report.json").is_file());
}

#[test]
fn environment_url_overrides_config_backends() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "corpus = \"{}\"\nout = \"o\"\n[backends]\nall = \"script:{}\"\n",
            demo().join("corpus.jsonl").display(),
            demo().join("script.json").display()
        ),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_streamvr"))
        .args(["run", "--config", config.to_str().unwrap(), "--mode", "none"])
        .env("STREAMVR_BASE_URL", "http://127.0.0.1:1")
        .output()
        .unwrap();
    // Every generation goes to the unreachable endpoint and fails.
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(report["errored"], 8);
}

#[test]
fn simulate_single_point_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = streamvr(&["simulate", "--point", "0.1,0.05,4,60,100", "--out", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rows = csv::Reader::from_path(&csv).unwrap();
    let headers = rows.headers().unwrap().clone();
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 1);
    let field = |name: &str| records[0][headers.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
    assert!((field("t_full") - 5.1).abs() < 1e-12);
    assert!((field("t_streaming") - 3.4).abs() < 1e-12);
    assert!((field("t_streaming_real") - 0.75).abs() < 1e-12);
}

#[test]
fn simulate_flags_boundary_rows() {
    let o = streamvr(&["simulate", "--point", "0.1,0.05,1,50,50"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(row.ends_with(",true"), "{row}");
    assert!(stderr(&o).contains("1 on the boundary"));
}

#[test]
fn default_sweep_satisfies_the_ordering_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let o = streamvr(&["simulate", "--out", dir.path().join("s.csv").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("ordering holds on 10000 (100.00%)"), "{}", stdout(&o));
}

#[test]
fn datagen_demo_passes_self_check_and_counts_match() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verifier.jsonl");
    let backend = format!("script:{}", demo().join("datagen_script.json").display());
    let o = streamvr(&[
        "datagen",
        "--source",
        demo().join("datagen_sources.jsonl").to_str().unwrap(),
        "--backend",
        &backend,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let labels: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["label"].clone())
        .collect();
    let trues = labels.iter().filter(|l| *l == "True").count();
    let falses = labels.iter().filter(|l| *l == "False").count();
    assert_eq!(trues + falses, labels.len());
    assert!(stdout(&o).starts_with(&format!("{} examples: {trues} true, {falses} false", labels.len())), "{}", stdout(&o));
}

#[test]
fn datagen_rejects_empty_source() {
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("empty.jsonl");
    fs::write(&source, "").unwrap();
    let backend = format!("script:{}", demo().join("datagen_script.json").display());
    let o = streamvr(&["datagen", "--source", source.to_str().unwrap(), "--backend", &backend, "--out", "/dev/null/x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no records"));
}

#[test]
fn convert_asqa_release_layout() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("asqa.json");
    fs::write(
        &input,
        r#"{"dev": {
            "s1": {"ambiguous_question": "When did the bridge open?", "annotations": [{"long_answer": "It opened in 1932."}]},
            "s2": {"ambiguous_question": "Who built the bridge?", "annotations": [{"long_answer": "Engineers built it."}]}
        }, "train": {}}"#,
    )
    .unwrap();
    let out = dir.path().join("corpus.jsonl");
    let o = streamvr(&["convert", "--format", "asqa", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(), "--shots", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["examples"][0]["question"], "Who built the bridge?");
}
