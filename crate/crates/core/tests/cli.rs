use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const FAST: [&str; 6] = ["--iters", "120", "--burnin", "60", "--sample-lag", "5"];

fn crowdtopics(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdtopics"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(dir: &Path, separation: &str, seed: &str) -> PathBuf {
    let out = crowdtopics(&["synth", "--class-separation", separation, "--seed", seed, "--out-dir", s(dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("campaigns.jsonl")
}

fn run_ok(args: &[&str]) -> String {
    let out = crowdtopics(args);
    assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn with_fast<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(FAST);
    v
}

#[test]
fn synth_writes_requested_counts_deterministically() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(&["synth", "--n", "410", "--success-frac", "0.512", "--seed", "7", "--out-dir", s(dir)]);
    }
    let text = fs::read_to_string(a.join("campaigns.jsonl")).unwrap();
    let set = crowdtopics::corpus::parse_corpus(&text, "a").unwrap();
    assert_eq!(set.len(), 410);
    assert_eq!(set.count_label(1), 210);
    for f in ["campaigns.jsonl", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let truth = json(&a.join("truth.json"));
    assert!(truth["campaign"].is_object() && truth["incentive"].is_object());
}

#[test]
fn synth_rejects_single_campaign() {
    let tmp = TempDir::new().unwrap();
    let out = crowdtopics(&["synth", "--n", "1", "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("at least 2"));
}

#[test]
fn oversized_train_count_fails_before_any_work() {
    let tmp = TempDir::new().unwrap();
    let input = fixture(&tmp.path().join("data"), "3", "1");
    let out_dir = tmp.path().join("run");
    let out = crowdtopics(&["pipeline", "--input", s(&input), "--train-count", "500", "--out-dir", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("train count 500"), "{}", stderr(&out));
    assert!(!out_dir.exists());
}

#[test]
fn missing_input_is_a_runtime_failure_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nowhere.jsonl");
    let out = crowdtopics(&["topics", "--input", s(&missing), "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.jsonl"));
}

#[test]
fn malformed_input_is_a_validation_failure() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("bad.jsonl");
    fs::write(&input, "{\"id\": \"x\"\n").unwrap();
    let out = crowdtopics(&["topics", "--input", s(&input), "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
}

#[test]
fn unknown_flags_and_bad_values_exit_one() {
    assert_eq!(crowdtopics(&["pipeline", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(crowdtopics(&["topics", "--k-candidates", "1,x"]).status.code(), Some(1));
    assert_eq!(crowdtopics(&["train", "--features-per-split", "0"]).status.code(), Some(1));
    assert_eq!(crowdtopics(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_without_training_is_a_runtime_failure() {
    let tmp = TempDir::new().unwrap();
    let out = crowdtopics(&["eval", "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("forest.json"));
}

#[test]
fn staged_run_matches_pipeline_and_report_follows_schema() {
    let tmp = TempDir::new().unwrap();
    let input = fixture(&tmp.path().join("data"), "3", "5");
    let (staged, whole) = (tmp.path().join("staged"), tmp.path().join("whole"));
    for stage in ["topics", "train", "eval"] {
        run_ok(&with_fast(&[stage, "--input", s(&input), "--seed", "5", "--out-dir", s(&staged)]));
    }
    let text = run_ok(&with_fast(&["pipeline", "--input", s(&input), "--seed", "5", "--out-dir", s(&whole)]));
    for f in [
        "split.json",
        "campaign.vocab.txt",
        "campaign.model.json",
        "incentive.model.json",
        "topics.json",
        "top_words.txt",
        "features_train.csv",
        "features_test.csv",
        "standardizer.json",
        "forest.json",
        "train_summary.json",
        "report.json",
        "report.txt",
        "config.json",
    ] {
        assert_eq!(fs::read(staged.join(f)).unwrap(), fs::read(whole.join(f)).unwrap(), "{f}");
    }
    for m in ["accuracy", "precision", "recall", "f1", "majority baseline"] {
        assert!(text.contains(m), "{m}");
    }

    let report = json(&whole.join("report.json"));
    let schema: Value = serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    assert_eq!(report["n_test"], 160);
    assert_eq!(report["config"]["seed"], 5);

    let summary = json(&whole.join("train_summary.json"));
    assert!(summary["training_accuracy"].as_f64().unwrap() >= 0.95);
    let split = json(&whole.join("split.json"));
    assert_eq!(split["train_ids"].as_array().unwrap().len(), 250);
    assert_eq!(split["test_ids"].as_array().unwrap().len(), 160);
}

#[test]
fn config_file_values_yield_to_flags() {
    let tmp = TempDir::new().unwrap();
    let input = fixture(&tmp.path().join("data"), "3", "2");
    let conf = tmp.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "# test run\ninput = {}\nseed = 2\ntrees = 5\nmax-depth = 3\nk-incentive = 0\niters = 80\nburnin = 40\n",
            s(&input)
        ),
    )
    .unwrap();
    let out_dir = tmp.path().join("run");
    run_ok(&["pipeline", "--config", s(&conf), "--trees", "7", "--out-dir", s(&out_dir)]);
    let cfg = json(&out_dir.join("config.json"));
    assert_eq!(cfg["trees"], 7);
    assert_eq!(cfg["max_depth"], 3);
    assert_eq!(cfg["seed"], 2);
    let forest = json(&out_dir.join("forest.json"));
    assert_eq!(forest["trees"].as_array().unwrap().len(), 7);
    assert!(!out_dir.join("incentive.model.json").exists());
    let summary = json(&out_dir.join("train_summary.json"));
    assert!(summary["slots"].as_array().unwrap().iter().all(|v| !v.as_str().unwrap().starts_with("incentive")));

    let bad = tmp.path().join("bad.conf");
    fs::write(&bad, "trees = 5\nno-such-key = 1\n").unwrap();
    let out = crowdtopics(&["pipeline", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn k_candidates_report_a_perplexity_table() {
    let tmp = TempDir::new().unwrap();
    let input = fixture(&tmp.path().join("data"), "3", "3");
    let out_dir = tmp.path().join("run");
    let text = run_ok(&with_fast(&["topics", "--input", s(&input), "--k-candidates", "1,2", "--out-dir", s(&out_dir)]));
    assert!(text.contains("held-out perplexity"));
    let topics = json(&out_dir.join("topics.json"));
    for ch in topics["channels"].as_array().unwrap() {
        let table = ch["selection"]["table"].as_array().unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(ch["k"], ch["selection"]["chosen"]);
    }
}

#[test]
fn single_tree_mode_and_vocabulary_mismatch() {
    let tmp = TempDir::new().unwrap();
    let input = fixture(&tmp.path().join("data"), "3", "4");
    let out_dir = tmp.path().join("run");
    run_ok(&with_fast(&["topics", "--input", s(&input), "--out-dir", s(&out_dir)]));
    run_ok(&with_fast(&["train", "--input", s(&input), "--trees", "1", "--no-bootstrap", "--out-dir", s(&out_dir)]));
    let forest = json(&out_dir.join("forest.json"));
    assert_eq!(forest["trees"].as_array().unwrap().len(), 1);
    assert_eq!(forest["params"]["bootstrap"], false);

    let vocab = out_dir.join("campaign.vocab.txt");
    let mut text = fs::read_to_string(&vocab).unwrap();
    text.push_str("zzzextra\n");
    fs::write(&vocab, text).unwrap();
    let out = crowdtopics(&with_fast(&["train", "--input", s(&input), "--out-dir", s(&out_dir)]));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("fingerprint"), "{}", stderr(&out));
}
