//! End-to-end tests for the `ptd` binary: exit codes, file outputs and
//! determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ptd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: TempDir::new().unwrap(),
        }
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        fs::write(&path, content).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write_config(&self, name: &str, value: serde_json::Value) -> PathBuf {
        self.write(name, &serde_json::to_string_pretty(&value).unwrap())
    }
}

fn arg(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two-language training fixture with keyword-separable labels.
fn training_fixture(fx: &Fixture, epochs: u32, lr: f64) -> PathBuf {
    fx.write("vocab.txt", "A\nB\n");
    fx.write(
        "en.tsv",
        "e1\t0\tzebra zebra zebra runs\ne1\t1\tplain words only\ne2\t0\tzebra zebra zebra again\ne2\t1\tnothing special here\n",
    );
    fx.write("en-gold.tsv", "e1\t0\tA\ne1\t1\t\ne2\t0\tA\ne2\t1\t\n");
    fx.write(
        "fr.tsv",
        "f1\t0\tquokka quokka quokka va\nf1\t1\tmots simples ici\nf2\t0\tquokka quokka quokka encore\nf2\t1\trien de plus\n",
    );
    fx.write("fr-gold.tsv", "f1\t0\tB\nf1\t1\t\nf2\t0\tB\nf2\t1\t\n");
    fx.write_config(
        "config.json",
        serde_json::json!({
            "vocabulary": fx.path("vocab.txt"),
            "languages": [
                {"code": "en", "template": fx.path("en.tsv"), "gold": fx.path("en-gold.tsv")},
                {"code": "fr", "template": fx.path("fr.tsv"), "gold": fx.path("fr-gold.tsv")},
            ],
            "featurizer": {"ngram_min": 2, "ngram_max": 3, "hash_dim": 1024, "max_chars": 200},
            "trainer": {"epochs": epochs, "learning_rate": lr, "batch_size": 4},
            "grid": {"start": 0.05, "stop": 0.95, "step": 0.05},
            "seed": 11,
        }),
    )
}

#[test]
fn eda_writes_distribution_csv() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 1, 0.1);
    let out = fx.path("dist.csv");
    let result = ptd(&["--config", arg(&config), "eda", "--out", arg(&out)]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "language,A,B,total");
    assert_eq!(lines[1], "en,2,0,2");
    assert_eq!(lines[2], "fr,0,2,2");
    assert_eq!(lines[3], "total,2,2,4");
}

#[test]
fn eda_missing_gold_file_is_a_data_error() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 1, 0.1);
    fs::remove_file(fx.path("fr-gold.tsv")).unwrap();
    let result = ptd(&["--config", arg(&config), "eda", "--out", arg(&fx.path("d.csv"))]);
    assert_eq!(code(&result), 3);
    assert!(stderr(&result).contains("fr-gold.tsv"), "{}", stderr(&result));
}

#[test]
fn eda_empty_language_list_is_a_config_error() {
    let fx = Fixture::new();
    fx.write("vocab.txt", "A\n");
    let config = fx.write_config(
        "config.json",
        serde_json::json!({"vocabulary": fx.path("vocab.txt"), "languages": []}),
    );
    let result = ptd(&["--config", arg(&config), "eda", "--out", arg(&fx.path("d.csv"))]);
    assert_eq!(code(&result), 2);
}

#[test]
fn train_is_deterministic_and_predict_round_trips() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 12, 0.5);
    let m1 = fx.path("m1.json");
    let m2 = fx.path("m2.json");
    for out in [&m1, &m2] {
        let result = ptd(&["--config", arg(&config), "train", "--out", arg(out)]);
        assert_eq!(code(&result), 0, "{}", stderr(&result));
    }
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap(), "model files differ");

    let out = fx.path("en-probs.jsonl");
    let result = ptd(&[
        "predict",
        "--model",
        arg(&m1),
        "--template",
        arg(&fx.path("en.tsv")),
        "--language",
        "en",
        "--vocabulary",
        arg(&fx.path("vocab.txt")),
        "--out",
        arg(&out),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let lines: Vec<String> = fs::read_to_string(&out).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    let row: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(row["language"], "en");
    assert_eq!(row["probs"].as_array().unwrap().len(), 2);
}

#[test]
fn train_divergence_exits_4() {
    let fx = Fixture::new();
    fx.write("vocab.txt", "A\n");
    fx.write("en.tsv", "a\t0\tidentical words\na\t1\tidentical words\na\t2\tidentical words\n");
    fx.write("en-gold.tsv", "a\t0\tA\na\t1\t\na\t2\tA\n");
    let config = fx.write_config(
        "config.json",
        serde_json::json!({
            "vocabulary": fx.path("vocab.txt"),
            "languages": [{"code": "en", "template": fx.path("en.tsv"), "gold": fx.path("en-gold.tsv")}],
            "featurizer": {"ngram_min": 2, "ngram_max": 3, "hash_dim": 256, "max_chars": 100},
            "trainer": {"epochs": 5, "learning_rate": 1e6, "batch_size": 16},
        }),
    );
    let result = ptd(&["--config", arg(&config), "train", "--out", arg(&fx.path("m.json"))]);
    assert_eq!(code(&result), 4, "{}", stderr(&result));
}

#[test]
fn zero_epoch_model_predicts_half_everywhere() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 0, 0.1);
    let model = fx.path("m.json");
    let result = ptd(&["--config", arg(&config), "train", "--out", arg(&model)]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let out = fx.path("probs.jsonl");
    let result = ptd(&[
        "predict",
        "--model",
        arg(&model),
        "--template",
        arg(&fx.path("en.tsv")),
        "--language",
        "en",
        "--out",
        arg(&out),
    ]);
    assert_eq!(code(&result), 0);
    for line in fs::read_to_string(&out).unwrap().lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        for p in row["probs"].as_array().unwrap() {
            assert_eq!(p.as_f64().unwrap(), 0.5);
        }
    }
}

#[test]
fn predict_missing_model_exits_3() {
    let fx = Fixture::new();
    fx.write("x.tsv", "a\t0\ttext\n");
    let result = ptd(&[
        "predict",
        "--model",
        arg(&fx.path("missing.json")),
        "--template",
        arg(&fx.path("x.tsv")),
        "--language",
        "en",
        "--out",
        arg(&fx.path("o.jsonl")),
    ]);
    assert_eq!(code(&result), 3);
}

#[test]
fn predict_vocabulary_mismatch_exits_5() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 1, 0.1);
    let model = fx.path("m.json");
    let result = ptd(&["--config", arg(&config), "train", "--out", arg(&model)]);
    assert_eq!(code(&result), 0);
    let other_vocab = fx.write("other-vocab.txt", "A\nB\nC\n");
    let result = ptd(&[
        "predict",
        "--model",
        arg(&model),
        "--template",
        arg(&fx.path("en.tsv")),
        "--language",
        "en",
        "--vocabulary",
        arg(&other_vocab),
        "--out",
        arg(&fx.path("o.jsonl")),
    ]);
    assert_eq!(code(&result), 5);
}

fn jsonl_row(article: &str, paragraph: u64, language: &str, probs: &[f64]) -> String {
    serde_json::to_string(&serde_json::json!({
        "article_id": article,
        "paragraph_id": paragraph,
        "language": language,
        "probs": probs,
    }))
    .unwrap()
        + "\n"
}

#[test]
fn calibrate_finds_the_toy_optimum() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 1, 0.1);
    let table = fx.write(
        "probs.jsonl",
        &(jsonl_row("s1", 0, "en", &[0.6, 0.3]) + &jsonl_row("s2", 0, "en", &[0.2, 0.5])),
    );
    let gold = fx.write("gold.tsv", "s1\t0\tA\ns2\t0\tB\n");
    let curve = fx.path("curve.csv");
    let summary = fx.path("summary.json");
    let result = ptd(&[
        "--config",
        arg(&config),
        "calibrate",
        "--table",
        arg(&table),
        "--gold",
        arg(&gold),
        "--out-curve",
        arg(&curve),
        "--out-summary",
        arg(&summary),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let value = stdout_json(&result);
    assert_eq!(value["best_threshold"].as_f64().unwrap(), 0.50);
    assert_eq!(value["best_f1_micro"].as_f64().unwrap(), 1.0);
    assert_eq!(value["adjusted_threshold"].as_f64().unwrap(), 0.51);
    let on_disk: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(on_disk, value);
    let csv = fs::read_to_string(&curve).unwrap();
    assert!(csv.starts_with("threshold,f1_micro,f1_macro\n"));
    assert!(csv.trim_end().ends_with("best,0.5,1"));
}

#[test]
fn calibrate_adjustment_nudges_the_best_threshold() {
    // Best threshold 0.29 plus the +0.01 nudge gives the submitted 0.30.
    let fx = Fixture::new();
    fx.write("vocab.txt", "A\n");
    let config = fx.write_config(
        "config.json",
        serde_json::json!({
            "vocabulary": fx.path("vocab.txt"),
            "grid": {"start": 0.05, "stop": 0.95, "step": 0.01},
            "threshold_adjust": 0.01,
        }),
    );
    let table = fx.write("probs.jsonl", &jsonl_row("s1", 0, "en", &[0.29]));
    let gold = fx.write("gold.tsv", "s1\t0\tA\n");
    let result = ptd(&[
        "--config",
        arg(&config),
        "calibrate",
        "--table",
        arg(&table),
        "--gold",
        arg(&gold),
        "--out-curve",
        arg(&fx.path("curve.csv")),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let value = stdout_json(&result);
    assert_eq!(value["best_threshold"].as_f64().unwrap(), 0.29);
    assert_eq!(value["adjusted_threshold"].as_f64().unwrap(), 0.30);
}

#[test]
fn calibrate_clamps_adjusted_threshold() {
    let fx = Fixture::new();
    fx.write("vocab.txt", "A\n");
    let config = fx.write_config(
        "config.json",
        serde_json::json!({
            "vocabulary": fx.path("vocab.txt"),
            "grid": {"start": 0.05, "stop": 0.95, "step": 0.05},
            "threshold_adjust": 0.2,
        }),
    );
    let table = fx.write("probs.jsonl", &jsonl_row("s1", 0, "en", &[0.97]));
    let gold = fx.write("gold.tsv", "s1\t0\tA\n");
    let result = ptd(&[
        "--config",
        arg(&config),
        "calibrate",
        "--table",
        arg(&table),
        "--gold",
        arg(&gold),
        "--out-curve",
        arg(&fx.path("curve.csv")),
    ]);
    assert_eq!(code(&result), 0);
    let value = stdout_json(&result);
    assert_eq!(value["best_threshold"].as_f64().unwrap(), 0.95);
    assert_eq!(value["adjusted_threshold"].as_f64().unwrap(), 1.0);
    assert!(stderr(&result).contains("clamped"), "{}", stderr(&result));
}

#[test]
fn calibrate_empty_table_exits_3() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 1, 0.1);
    let table = fx.write("empty.jsonl", "");
    let gold = fx.write("gold.tsv", "s1\t0\tA\n");
    let result = ptd(&[
        "--config",
        arg(&config),
        "calibrate",
        "--table",
        arg(&table),
        "--gold",
        arg(&gold),
        "--out-curve",
        arg(&fx.path("curve.csv")),
    ]);
    assert_eq!(code(&result), 3);
}

#[test]
fn calibrate_zero_shot_runs_within_grid() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 8, 0.5);
    let result = ptd(&[
        "--config",
        arg(&config),
        "calibrate",
        "--mode",
        "zero-shot",
        "--holdout",
        "fr",
        "--out-curve",
        arg(&fx.path("curve.csv")),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let value = stdout_json(&result);
    let best = value["best_threshold"].as_f64().unwrap();
    assert!((0.05..=0.95).contains(&best));
    let csv = fs::read_to_string(fx.path("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 19 + 1); // header + grid + summary
}

#[test]
fn calibrate_zero_shot_requires_holdout() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 1, 0.1);
    let result = ptd(&[
        "--config",
        arg(&config),
        "calibrate",
        "--mode",
        "zero-shot",
        "--out-curve",
        arg(&fx.path("curve.csv")),
    ]);
    assert_eq!(code(&result), 2);
}

fn submit_fixture(fx: &Fixture) -> PathBuf {
    fx.write("vocab.txt", "A\nB\n");
    fx.write_config(
        "config.json",
        serde_json::json!({
            "vocabulary": fx.path("vocab.txt"),
            "languages": [{"code": "en", "template": "unused.tsv"}],
            "seen_threshold": 0.30,
            "unseen_threshold": 0.28,
        }),
    )
}

#[test]
fn submit_routes_seen_and_unseen_thresholds() {
    let fx = Fixture::new();
    let config = submit_fixture(&fx);
    // A sits between the two thresholds, so only the unseen language keeps it.
    let en = fx.write("en.jsonl", &jsonl_row("e", 0, "en", &[0.29, 0.9]));
    let xx = fx.write("xx.jsonl", &jsonl_row("x", 0, "xx", &[0.29, 0.9]));
    let out_dir = fx.path("subs");
    let result = ptd(&[
        "--config",
        arg(&config),
        "submit",
        "--table",
        &format!("en={}", en.display()),
        "--table",
        &format!("xx={}", xx.display()),
        "--out-dir",
        arg(&out_dir),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    assert_eq!(fs::read_to_string(out_dir.join("en.tsv")).unwrap(), "e\t0\tB\n");
    assert_eq!(fs::read_to_string(out_dir.join("xx.tsv")).unwrap(), "x\t0\tA,B\n");
}

#[test]
fn submit_unions_two_tables_for_one_language() {
    let fx = Fixture::new();
    let config = submit_fixture(&fx);
    let t1 = fx.write("t1.jsonl", &jsonl_row("e", 0, "en", &[0.9, 0.1]));
    let t2 = fx.write("t2.jsonl", &jsonl_row("e", 0, "en", &[0.1, 0.9]));
    let out_dir = fx.path("subs");
    let result = ptd(&[
        "--config",
        arg(&config),
        "submit",
        "--table",
        &format!("en={}", t1.display()),
        "--table",
        &format!("en={}", t2.display()),
        "--out-dir",
        arg(&out_dir),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    assert_eq!(fs::read_to_string(out_dir.join("en.tsv")).unwrap(), "e\t0\tA,B\n");
}

#[test]
fn submit_rejects_mismatched_language_tag() {
    let fx = Fixture::new();
    let config = submit_fixture(&fx);
    let table = fx.write("t.jsonl", &jsonl_row("e", 0, "fr", &[0.9, 0.1]));
    let result = ptd(&[
        "--config",
        arg(&config),
        "submit",
        "--table",
        &format!("en={}", table.display()),
        "--out-dir",
        arg(&fx.path("subs")),
    ]);
    assert_eq!(code(&result), 2);
}

#[test]
fn score_perfect_prediction() {
    let fx = Fixture::new();
    fx.write("vocab.txt", "L\nA\nE\n");
    let gold = fx.write("gold.tsv", "s1\t0\tL,A\ns2\t0\tE\n");
    let result = ptd(&[
        "score",
        "--pred",
        arg(&gold),
        "--gold",
        arg(&gold),
        "--vocabulary",
        arg(&fx.path("vocab.txt")),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let value = stdout_json(&result);
    assert_eq!(value["global"]["f1_micro"].as_f64().unwrap(), 1.0);
    assert_eq!(value["global"]["f1_macro"].as_f64().unwrap(), 1.0);
}

#[test]
fn score_hand_counted_case() {
    let fx = Fixture::new();
    fx.write("vocab.txt", "L\nA\nE\n");
    let gold = fx.write("gold.tsv", "s1\t0\tL,A\ns2\t0\tE\n");
    let pred = fx.write("pred.tsv", "s1\t0\tL\ns2\t0\tA,E\n");
    fx.write("all.tsv", "s1\t0\tone\ns2\t0\ttwo\n");
    let out = fx.path("report.json");
    let result = ptd(&[
        "score",
        "--pred",
        arg(&pred),
        "--gold",
        arg(&gold),
        "--vocabulary",
        arg(&fx.path("vocab.txt")),
        "--template",
        &format!("en={}", fx.path("all.tsv").display()),
        "--out",
        arg(&out),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let value = stdout_json(&result);
    let micro = value["global"]["f1_micro"].as_f64().unwrap();
    let macro_ = value["global"]["f1_macro"].as_f64().unwrap();
    assert!((micro - 0.666667).abs() < 1e-5);
    assert!((macro_ - 0.666667).abs() < 1e-5);
    assert_eq!(value["global"]["tally"]["tp"].as_u64().unwrap(), 2);
    assert_eq!(value["per_language"]["en"]["f1_micro"], value["global"]["f1_micro"]);
    assert!(out.exists());
}

#[test]
fn score_malformed_pred_names_the_line() {
    let fx = Fixture::new();
    fx.write("vocab.txt", "A\n");
    let gold = fx.write("gold.tsv", "s1\t0\tA\n");
    let pred = fx.write("pred.tsv", "s1\t0\tA\nbroken-line\n");
    let result = ptd(&[
        "score",
        "--pred",
        arg(&pred),
        "--gold",
        arg(&gold),
        "--vocabulary",
        arg(&fx.path("vocab.txt")),
    ]);
    assert_eq!(code(&result), 3);
    assert!(stderr(&result).contains(":2:"), "{}", stderr(&result));
}

#[test]
fn quiet_silences_progress() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 2, 0.1);
    let result = ptd(&[
        "--config",
        arg(&config),
        "--quiet",
        "train",
        "--out",
        arg(&fx.path("m.json")),
    ]);
    assert_eq!(code(&result), 0);
    assert!(result.stderr.is_empty(), "{}", stderr(&result));
}

#[test]
fn preprocess_flag_is_recorded_in_the_model() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 1, 0.1);
    let model = fx.path("m.json");
    let result = ptd(&[
        "--config",
        arg(&config),
        "train",
        "--preprocess",
        "ws_punct,entities",
        "--out",
        arg(&model),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(value["preprocess"]["normalize_whitespace_punct"], true);
    assert_eq!(value["preprocess"]["replace_entities"], true);

    let result = ptd(&[
        "--config",
        arg(&config),
        "train",
        "--preprocess",
        "stemming",
        "--out",
        arg(&fx.path("m2.json")),
    ]);
    assert_eq!(code(&result), 2);
}

#[test]
fn seed_flag_overrides_config() {
    let fx = Fixture::new();
    let config = training_fixture(&fx, 3, 0.5);
    let a = fx.path("a.json");
    let b = fx.path("b.json");
    let c = fx.path("c.json");
    assert_eq!(code(&ptd(&["--config", arg(&config), "--seed", "5", "train", "--out", arg(&a)])), 0);
    assert_eq!(code(&ptd(&["--config", arg(&config), "--seed", "5", "train", "--out", arg(&b)])), 0);
    assert_eq!(code(&ptd(&["--config", arg(&config), "--seed", "6", "train", "--out", arg(&c)])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}
