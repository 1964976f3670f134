use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn drr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drr"))
        .current_dir(dir)
        .env_remove("DRR_API_KEY")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

const TOY: &str = r#"{"id":"a","question":"Capital of France?","choices":["Lyon","Paris","Nice"],"answer_index":1}
{"id":"b","question":"2+2?","choices":["3","4","5"],"answer_index":1}
{"id":"c","question":"Colour of the sky?","choices":["blue","green"],"answer_index":0}
"#;

/// a: right at turn 2; b: wrong four times; c: right at once. 7 records.
fn write_fixture(dir: &Path) {
    fs::write(dir.join("toy.jsonl"), TOY).unwrap();
    let entries = [
        ("a", 1, "Answer: 0\nRationale: Lyon is big."),
        ("a", 2, "Answer: 1\nRationale: Paris is the capital."),
        ("b", 1, "Answer: 0\nRationale: guess"),
        ("b", 2, "Answer: 2\nRationale: guess"),
        ("b", 3, "Answer: 0\nRationale: guess"),
        ("b", 4, "no idea"),
        ("c", 1, "Answer: 0\nRationale: Rayleigh scattering."),
    ];
    let text: String = entries
        .iter()
        .map(|(id, turn, text)| json!({"id": id, "turn": turn, "text": text}).to_string() + "\n")
        .collect();
    fs::write(dir.join("fixture.jsonl"), text).unwrap();
}

const DISTILL: &[&str] = &[
    "distill",
    "--dataset",
    "toy=toy.jsonl",
    "--backend",
    "scripted",
    "--fixture",
    "fixture.jsonl",
    "--out",
    "run",
];

#[test]
fn scripted_distill_writes_the_fixture_records() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let o = drr(dir.path(), DISTILL);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("new records 7"), "{}", stdout(&o));

    let traces = fs::read_to_string(dir.path().join("run/traces/toy.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 7);
    let summary = read_json(dir.path().join("run/distill_summary.json"));
    assert_eq!(summary["status"], "complete");
    assert_eq!(summary["datasets"]["toy"]["summary"]["n_records"], 7);
    assert_eq!(summary["datasets"]["toy"]["summary"]["n_accepted"], 2);
    assert_eq!(summary["datasets"]["toy"]["summary"]["n_exhausted"], 1);
    assert!(dir.path().join("run/distill.manifest.toml").exists());
}

#[test]
fn rerun_skips_finished_questions() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    assert!(drr(dir.path(), DISTILL).status.success());
    let before = fs::read(dir.path().join("run/traces/toy.jsonl")).unwrap();
    let o = drr(dir.path(), DISTILL);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("skipped: 3"), "{out}");
    assert!(out.contains("new records 0"), "{out}");
    assert_eq!(
        fs::read(dir.path().join("run/traces/toy.jsonl")).unwrap(),
        before
    );
}

#[test]
fn missing_fixture_turn_is_a_partial_run() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    // drop b's last turn
    let fixture = fs::read_to_string(dir.path().join("fixture.jsonl")).unwrap();
    let kept: String = fixture
        .lines()
        .filter(|l| !l.contains("no idea"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(dir.path().join("fixture.jsonl"), kept).unwrap();
    let o = drr(dir.path(), DISTILL);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rerun"), "{}", stderr(&o));
    let summary = read_json(dir.path().join("run/distill_summary.json"));
    assert_eq!(summary["status"], "partial");
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = drr(
        dir.path(),
        &[
            "distill",
            "--dataset",
            "data/absent.jsonl",
            "--backend",
            "sim",
            "--out",
            "run",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("data/absent.jsonl"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.jsonl"), TOY).unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["simulate", "--critic", "psychic"],
        vec!["simulate", "--p", "1.5"],
        vec!["distill", "--dataset", "toy.jsonl", "--backend", "remote"],
        vec!["distill", "--dataset", "toy.jsonl", "--backend", "scripted"],
        vec![
            "distill",
            "--dataset",
            "toy.jsonl",
            "--max-turns",
            "0",
            "--backend",
            "sim",
        ],
        vec!["distill", "--backend", "sim"],
    ] {
        let o = drr(dir.path(), &args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn api_key_is_not_accepted_from_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.jsonl"), TOY).unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "[reasoner]\nbackend = \"remote\"\nurl = \"http://127.0.0.1:9\"\nmodel = \"m\"\napi_key = \"sk-secret\"\n",
    )
    .unwrap();
    let o = drr(
        dir.path(),
        &["distill", "--config", "run.toml", "--dataset", "toy.jsonl"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("api_key"), "{}", stderr(&o));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.jsonl"), TOY).unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 9\nmax_turns_generation = 2\nout_dir = \"from-file\"\n[reasoner]\nbackend = \"sim\"\np_correct = 0.25\n",
    )
    .unwrap();
    let o = drr(
        dir.path(),
        &[
            "distill",
            "--config",
            "run.toml",
            "--dataset",
            "toy.jsonl",
            "--max-turns",
            "3",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.path().join("from-file/distill.manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 9"), "{manifest}");
    assert!(manifest.contains("max_turns_generation = 3"), "{manifest}");
    assert!(manifest.contains("p_correct = 0.25"), "{manifest}");
    assert!(manifest.contains("max_turns_inference = 5"), "{manifest}");
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data: String = (0..60)
        .map(|i| {
            json!({"id": format!("q{i}"), "question": format!("Q{i}?"), "choices": ["a", "b", "c", "d"], "answer_index": i % 4})
                .to_string()
                + "\n"
        })
        .collect();
    fs::write(dir.path().join("qa.jsonl"), data).unwrap();
    let o = drr(
        dir.path(),
        &[
            "distill",
            "--dataset",
            "qa.jsonl",
            "--backend",
            "sim",
            "--p",
            "0.4",
            "--seed",
            "17",
            "--workers",
            "3",
            "--out",
            "one",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = drr(
        dir.path(),
        &[
            "distill",
            "--config",
            "one/distill.manifest.toml",
            "--out",
            "two",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("one/traces/qa.jsonl")).unwrap(),
        fs::read(dir.path().join("two/traces/qa.jsonl")).unwrap()
    );
}

fn turn(t: usize, answer: usize, accept: bool) -> Value {
    json!({
        "turn": t,
        "answer": answer,
        "rationale": "r",
        "p_accept": if accept { 0.9 } else { 0.1 },
        "verdict": if accept { "accept" } else { "reject" },
    })
}

#[test]
fn eval_reports_the_metrics_of_an_outcome_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let data: String = (0..10)
        .map(|i| json!({"id": format!("q{i}"), "question": "?", "choices": ["x", "y"], "answer_index": 0}).to_string() + "\n")
        .collect();
    fs::write(dir.path().join("ten.jsonl"), data).unwrap();
    // 6 accepted right, 2 accepted wrong, 1 abstained on a wrong last turn,
    // 1 abstained on a right last turn
    let mut lines = Vec::new();
    for i in 0..10 {
        let id = format!("q{i}");
        let line = match i {
            0..=5 => {
                json!({"id": id, "final": "answered", "answer": 0, "turns": [turn(1, 1, false), turn(2, 0, true)]})
            }
            6 | 7 => {
                json!({"id": id, "final": "answered", "answer": 1, "turns": [turn(1, 1, true)]})
            }
            8 => json!({"id": id, "final": "abstained", "answer": null,
                        "turns": (1..=5).map(|t| turn(t, 1, false)).collect::<Vec<_>>()}),
            _ => json!({"id": id, "final": "abstained", "answer": null,
                        "turns": (1..=5).map(|t| turn(t, 0, false)).collect::<Vec<_>>()}),
        };
        lines.push(line.to_string());
    }
    fs::write(dir.path().join("outcomes.jsonl"), lines.join("\n") + "\n").unwrap();

    let o = drr(
        dir.path(),
        &[
            "eval",
            "--dataset",
            "ten.jsonl",
            "--outcomes",
            "outcomes.jsonl",
            "--k",
            "1",
            "--k",
            "3",
            "--json",
            "--out",
            "run",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let r = &v["datasets"]["ten"];
    // recomputed by hand from the fixture
    let (c, i, a, n) = (6.0, 2.0, 2.0, 10.0);
    assert_eq!(
        r["counts"],
        json!({"correct": 6, "incorrect": 2, "abstain": 2})
    );
    assert_eq!(r["acc"], 100.0 * c / n);
    assert_eq!(r["fs"]["1"], 100.0 * (c - i) / n);
    assert_eq!(r["fs"]["3"], 100.0 * (c - 3.0 * i) / n);
    assert_eq!(r["acc_d"], 100.0 * (c + 1.0) / n);
    assert_eq!(a, 2.0);
    assert_eq!(
        read_json(dir.path().join("run/eval.json"))["datasets"],
        v["datasets"]
    );
}

#[test]
fn simulate_with_oracle_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = drr(
        dir.path(),
        &[
            "simulate", "--p", "0.5", "--critic", "oracle", "--turns", "5", "--n", "10000",
            "--json", "--out", "run",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let acc = v["datasets"]["sim"]["acc"].as_f64().unwrap();
    assert!((acc - 96.875).abs() <= 1.5, "acc {acc}");
    assert_eq!(v["datasets"]["sim"]["counts"]["incorrect"], 0);
    let lines = fs::read_to_string(dir.path().join("run/simulate/outcomes.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 10_000);
}

#[test]
fn train_critic_on_a_separable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = |range: std::ops::Range<usize>| -> String {
        range
            .map(|i| {
                let accept = i % 2 == 0;
                let cue = if accept { "sound grounded reasoning" } else { "contradicts the question" };
                json!({"id": format!("s{i}"), "turn": 1, "input": format!("item {i}\nRationale: {cue}"), "label": u8::from(accept)})
                    .to_string()
                    + "\n"
            })
            .collect()
    };
    fs::write(dir.path().join("train.jsonl"), corpus(0..160)).unwrap();
    fs::write(dir.path().join("dev.jsonl"), corpus(160..200)).unwrap();
    let o = drr(
        dir.path(),
        &[
            "train-critic",
            "--train",
            "train.jsonl",
            "--dev",
            "dev.jsonl",
            "--out",
            "run",
            "--hash-dim",
            "4096",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(dir.path().join("run/train_report.json"));
    let acc = report["report"]["dev_accuracy"].as_f64().unwrap();
    assert!(acc >= 0.95, "dev_accuracy {acc}");
    assert!(dir.path().join("run/critic.bin").exists());
}

#[test]
fn whole_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let data: String = (0..200)
        .map(|i| {
            json!({"id": format!("q{i}"), "question": format!("Q{i}?"), "choices": ["a", "b", "c"], "answer_index": i % 3})
                .to_string()
                + "\n"
        })
        .collect();
    fs::write(dir.path().join("qa.jsonl"), data).unwrap();
    let steps: &[&[&str]] = &[
        &[
            "distill",
            "--dataset",
            "qa.jsonl",
            "--backend",
            "sim",
            "--p",
            "0.5",
            "--out",
            "run",
        ],
        &["prepare", "--dataset", "qa.jsonl", "--out", "run"],
        &["train-critic", "--out", "run", "--hash-dim", "4096"],
        &[
            "infer",
            "--dataset",
            "qa.jsonl",
            "--backend",
            "sim",
            "--critic",
            "linear:run/critic.bin",
            "--out",
            "run",
        ],
        &["eval", "--dataset", "qa.jsonl", "--out", "run"],
    ];
    for args in steps {
        let o = drr(dir.path(), args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let eval = read_json(dir.path().join("run/eval.json"));
    assert_eq!(eval["datasets"]["qa"]["n"], 200);
    for m in ["distill", "prepare", "train-critic", "infer", "eval"] {
        assert!(
            dir.path().join(format!("run/{m}.manifest.toml")).exists(),
            "{m}"
        );
    }
}
