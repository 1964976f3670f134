//! End-to-end runs over the file formats: distill, prepare, train, infer, score.

use std::fs;
use std::hash::Hasher;

use approx::assert_relative_eq;
use drr_core::critic::{
    featurize, load_model, save_model, train_examples, train_linear, ClassWeights, Critic,
    LinearCriticModel, OracleCritic, TrainHyper,
};
use drr_core::distill::{distill_dataset, read_traces, Terminal};
use drr_core::inference::{infer_dataset, read_outcomes, FinalDecision, InferenceOutcome};
use drr_core::metrics::score_outcomes;
use drr_core::qa_data::{load_dataset, parse_dataset, synthetic_dataset, Dataset};
use drr_core::reasoner::{
    PromptStrategy, RecordingReasoner, ScriptedReasoner, StochasticSimReasoner, StrategyKind,
};
use drr_core::trainprep::{
    export_training_file, prepare_dataset, read_training_file, DmExample, DmInputRenderer,
    PrepConfig, DEFAULT_DM_INSTRUCTION,
};
use drr_core::Verdict;

const TOY: &str = r#"{"id":"a","question":"Capital of France?","choices":["Lyon","Paris","Nice"],"answer_index":1}
{"id":"b","question":"2+2?","choices":["3","4","5","22"],"answer_index":1}
{"id":"c","question":"Colour of the sky?","choices":["blue","green"],"answer_index":0}
"#;

fn toy() -> Dataset {
    parse_dataset(TOY, "toy").unwrap()
}

/// Every question answered correctly on the first try.
fn first_try() -> ScriptedReasoner {
    ScriptedReasoner::new()
        .with("a", 1, "Answer: 1\nRationale: Paris is the capital.")
        .with("b", 1, "Answer: 1\nRationale: Arithmetic.")
        .with("c", 1, "Answer: 0\nRationale: Rayleigh scattering.")
}

#[test]
fn distill_writes_one_record_per_turn() {
    let dir = tempfile::tempdir().unwrap();
    let ds = toy();

    let out = dir.path().join("first.jsonl");
    let s = distill_dataset(&ds, &first_try(), &PromptStrategy::direct(), 4, &out, 2).unwrap();
    assert_eq!((s.n_items, s.n_accepted, s.n_records), (3, 3, 3));

    // a: 2 turns, b: 4 turns incl. unparseable and out-of-range, c: 1 turn
    let reasoner = ScriptedReasoner::new()
        .with("a", 1, "Answer: 0\nRationale: Lyon is large.")
        .with("a", 2, "Answer: 1\nRationale: Paris.")
        .with("b", 1, "I think it is three")
        .with("b", 2, "Answer: 3\nRationale: 22 by concatenation.")
        .with("b", 3, "Answer: 7\nRationale: out of range")
        .with("b", 4, "Answer: 2\nRationale: five.")
        .with("c", 1, "Answer: 0\nRationale: blue.");
    let out = dir.path().join("mixed.jsonl");
    let s = distill_dataset(&ds, &reasoner, &PromptStrategy::direct(), 4, &out, 3).unwrap();
    assert_eq!(s.n_records, 7);
    assert_eq!((s.n_accepted, s.n_exhausted, s.n_failed), (2, 1, 0));

    let traces = read_traces(&out).unwrap();
    let ids: Vec<&str> = traces.iter().map(|t| t.question_id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(traces[0].terminal, Terminal::AcceptedAtTurn(2));
    assert_eq!(traces[1].terminal, Terminal::Exhausted);
    for (t, item) in traces.iter().zip(&ds.items) {
        t.validate(item, 4).unwrap();
    }
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 7);
}

#[test]
fn two_turn_budget_caps_records() {
    let dir = tempfile::tempdir().unwrap();
    let ds = toy();
    let wrong = ScriptedReasoner::new()
        .with("a", 1, "Answer: 0")
        .with("a", 2, "Answer: 2")
        .with("b", 1, "Answer: 0")
        .with("b", 2, "Answer: 3")
        .with("c", 1, "Answer: 1")
        .with("c", 2, "Answer: 1");
    let s = distill_dataset(
        &ds,
        &wrong,
        &PromptStrategy::gradual(),
        2,
        dir.path().join("t.jsonl"),
        1,
    )
    .unwrap();
    assert_eq!((s.n_records, s.n_exhausted), (6, 3));
}

#[test]
fn missing_fixture_fails_the_trace_and_resume_retries_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let ds = toy();
    let partial = ScriptedReasoner::new()
        .with("a", 1, "Answer: 1")
        .with("b", 1, "Answer: 0")
        .with("c", 1, "Answer: 0");
    let s = distill_dataset(&ds, &partial, &PromptStrategy::direct(), 4, &out, 2).unwrap();
    assert_eq!((s.n_accepted, s.n_failed), (2, 1));
    let traces = read_traces(&out).unwrap();
    assert!(matches!(traces[1].terminal, Terminal::Failed(_)));
    assert_eq!(traces[1].records.len(), 1);

    let full = partial.with("b", 2, "Answer: 1");
    let s = distill_dataset(&ds, &full, &PromptStrategy::direct(), 4, &out, 2).unwrap();
    assert_eq!(
        (s.n_skipped, s.n_accepted, s.n_failed, s.n_records),
        (2, 1, 0, 2)
    );
    let traces = read_traces(&out).unwrap();
    assert_eq!(traces.len(), 3);
    assert!(traces.iter().all(|t| t.terminal.is_complete()));
}

#[test]
fn rerun_is_a_no_op_and_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic_dataset("det", 200, 4, 5).unwrap();
    let sim = StochasticSimReasoner::new(0.4, 6).unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    distill_dataset(&ds, &sim, &PromptStrategy::direct(), 4, &a, 1).unwrap();
    distill_dataset(&ds, &sim, &PromptStrategy::direct(), 4, &b, 8).unwrap();
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());

    let again = distill_dataset(&ds, &sim, &PromptStrategy::direct(), 4, &a, 4).unwrap();
    assert_eq!((again.n_skipped, again.n_records), (200, 0));
    assert_eq!(bytes, fs::read(&a).unwrap());
}

#[test]
fn recorded_sampling_schedule_per_strategy() {
    let ds = toy();
    let wrong = ScriptedReasoner::new()
        .with("c", 1, "Answer: 1")
        .with("c", 2, "Answer: 1")
        .with("c", 3, "Answer: 0");
    let one = Dataset::new("one", vec![ds.items[2].clone()]).unwrap();
    for (strategy, schedule) in [
        (
            PromptStrategy::direct(),
            [(0.1, 0.9), (0.6, 0.7), (0.6, 0.7)],
        ),
        (
            PromptStrategy::gradual(),
            [(0.6, 0.9), (0.6, 0.9), (0.6, 0.9)],
        ),
    ] {
        let rec = RecordingReasoner::new(wrong.clone());
        let dir = tempfile::tempdir().unwrap();
        distill_dataset(&one, &rec, &strategy, 4, dir.path().join("t.jsonl"), 1).unwrap();
        let calls = rec.calls();
        assert_eq!(calls.len(), 3);
        for (call, (t, p)) in calls.iter().zip(schedule) {
            assert_eq!((call.params.temperature, call.params.top_p), (t, p));
        }
        assert_eq!(
            calls[0].messages[1].content,
            "Question: Colour of the sky?\nChoices: [0: 'blue', 1: 'green']."
        );
        assert_eq!(
            calls[2].messages[0].content,
            strategy.system_prompt(3),
            "{:?}",
            strategy.kind
        );
    }
}

#[test]
fn featurize_matches_an_independent_fnv() {
    let dim = 1 << 18;
    let x = featurize::<f64>("a a b", dim);
    let bucket = |s: &str| {
        let mut h = fnv::FnvHasher::default();
        h.write(s.as_bytes());
        (h.finish() % dim as u64) as usize
    };
    let (ia, ib) = (bucket("a"), bucket("b"));
    let scale = 1.0 / 3f64.sqrt();
    let dense = x.to_dense(dim);
    assert_relative_eq!(dense[ia], 2.0 * scale, epsilon = 1e-12);
    assert_relative_eq!(dense[ib], scale, epsilon = 1e-12);
    assert_eq!(x.nnz(), 2);
    assert_relative_eq!(x.mass(), 3.0 / 3f64.sqrt(), epsilon = 1e-12);

    // case and punctuation fold into the same tokens
    assert_eq!(featurize::<f64>("A, a; B!", dim), x);
    assert!(featurize::<f64>(" ,;", dim).is_zero());
}

fn separable(n: usize) -> Vec<DmExample> {
    (0..n)
        .map(|i| {
            let accept = i % 2 == 0;
            let cue = if accept {
                "correct grounded"
            } else {
                "contradicts itself"
            };
            DmExample {
                question_id: format!("s{i}"),
                turn: 1,
                input_text: format!("Question: item {i} filler words\nRationale: this {cue}"),
                label: u8::from(accept),
            }
        })
        .collect()
}

#[test]
fn linear_critic_learns_a_separable_corpus() {
    let corpus = separable(200);
    let (train, dev) = corpus.split_at(160);
    let hyper = TrainHyper::<f64> {
        class_weights: ClassWeights::uniform(),
        ..TrainHyper::default()
    };
    let (model, report) = train_examples(train, dev, &hyper).unwrap();
    assert!(report.dev_accuracy >= 0.95, "{report:?}");
    assert_eq!(
        (report.n_train, report.n_dev, report.epochs_run),
        (160, 40, 5)
    );
    let p: drr_core::CriticScore = model.assess(&dev[0].input_text).unwrap();
    assert_eq!(p.verdict, Verdict::Accept);

    // same seed, same model
    let (again, _) = train_examples(train, dev, &hyper).unwrap();
    assert_eq!(again, model);

    // f32 reaches the same decision quality
    let hyper32 = TrainHyper::<f32> {
        class_weights: ClassWeights::uniform(),
        ..TrainHyper::default()
    };
    let (_, r32) = train_examples(train, dev, &hyper32).unwrap();
    assert!(r32.dev_accuracy >= 0.95);
}

#[test]
fn model_files_round_trip_and_keep_their_width() {
    let dir = tempfile::tempdir().unwrap();
    let train_path = dir.path().join("train.jsonl");
    let dev_path = dir.path().join("dev.jsonl");
    let corpus = separable(100);
    export_training_file(&corpus[..80], &train_path).unwrap();
    export_training_file(&corpus[80..], &dev_path).unwrap();
    assert_eq!(
        read_training_file(&train_path).unwrap(),
        corpus[..80].to_vec()
    );

    let hyper = TrainHyper::<f64> {
        hash_dim: 1 << 12,
        ..TrainHyper::default()
    };
    let (model, _) = train_linear(&train_path, &dev_path, &hyper).unwrap();
    let path = dir.path().join("critic.bin");
    save_model(&model, &path).unwrap();
    let back: LinearCriticModel<f64> = load_model(&path).unwrap();
    assert_eq!(back, model);
    assert!(load_model::<f32>(&path).is_err());
}

#[test]
fn full_pipeline_on_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic_dataset("sim", 300, 4, 71).unwrap();
    let data_path = dir.path().join("sim.jsonl");
    fs::write(&data_path, ds.to_jsonl()).unwrap();
    let ds = load_dataset(&data_path, "sim").unwrap();

    let sim = StochasticSimReasoner::new(0.5, 72).unwrap();
    let strategy = PromptStrategy::direct();
    let traces_path = dir.path().join("traces.jsonl");
    distill_dataset(&ds, &sim, &strategy, 4, &traces_path, 4).unwrap();
    let traces = read_traces(&traces_path).unwrap();

    let config = PrepConfig::default();
    let (corpus, summary) = prepare_dataset(&ds, &traces, &config).unwrap();
    assert_eq!(
        summary.n_reject_kept,
        summary.n_accept.min(summary.n_reject_before)
    );
    assert_eq!(
        summary.n_train + summary.n_dev,
        summary.n_accept + summary.n_reject_kept
    );

    let hyper = TrainHyper::<f64> {
        hash_dim: 1 << 14,
        ..TrainHyper::default()
    };
    let (model, report) = train_examples(&corpus.train, &corpus.dev, &hyper).unwrap();
    assert!(report.final_train_loss.is_finite());

    let renderer = DmInputRenderer::new(DEFAULT_DM_INSTRUCTION, StrategyKind::Direct);
    let out = dir.path().join("outcomes.jsonl");
    let s = infer_dataset(&ds, &sim, &model, &strategy, &renderer, 5, &out, 4).unwrap();
    assert_eq!(s.n_answered + s.n_abstained, 300);
    let outcomes: Vec<InferenceOutcome<f64>> = read_outcomes(&out).unwrap();
    let r = score_outcomes(&outcomes, &ds, &[1.0, 3.0]).unwrap();
    assert_eq!(r.n_correct + r.n_incorrect + r.n_abstain, 300);
    for o in &outcomes {
        let last = o.turns.last().unwrap();
        match &o.final_decision {
            FinalDecision::Answered(a) => {
                assert_eq!(last.verdict, Verdict::Accept);
                assert_eq!(&last.answer, a);
            }
            FinalDecision::Abstained => {
                assert_eq!(o.turns.len(), 5);
                assert!(o.turns.iter().all(|t| t.verdict == Verdict::Reject));
            }
        }
    }

    // resume
    let again = infer_dataset(&ds, &sim, &model, &strategy, &renderer, 5, &out, 4).unwrap();
    assert_eq!(again.n_skipped, 300);

    // the oracle never answers wrongly
    let oracle_out = dir.path().join("oracle.jsonl");
    infer_dataset::<f64, _, _>(
        &ds,
        &sim,
        &OracleCritic::from_dataset(&ds),
        &strategy,
        &renderer,
        5,
        &oracle_out,
        4,
    )
    .unwrap();
    let r = score_outcomes(&read_outcomes::<f64>(&oracle_out).unwrap(), &ds, &[1.0]).unwrap();
    assert_eq!(r.n_incorrect, 0);
    assert_eq!(r.acc_d, 100.0);
}
