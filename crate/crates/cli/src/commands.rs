use anyhow::{bail, Context, Result};
use drr_core::config::{BackendKind, CriticSpec, RunConfig};
use drr_core::critic::{
    load_model, train_linear, AlwaysAccept, AlwaysReject, ClassWeights, Critic, LinearCriticModel,
    OracleCritic, RemoteCritic, RemoteCriticConfig, TrainHyper,
};
use drr_core::distill::{distill_dataset, read_traces};
use drr_core::inference::{
    infer_dataset, infer_item, outcome_to_line, read_outcomes, InferenceOutcome,
};
use drr_core::jsonl::write_atomic;
use drr_core::metrics::{score_outcomes, EvalResult, MetricsError};
use drr_core::pool::run_ordered;
use drr_core::qa_data::{load_dataset, synthetic_dataset, Dataset};
use drr_core::reasoner::{
    Reasoner, RemoteChatConfig, RemoteChatReasoner, ScriptedReasoner, StochasticSimReasoner,
};
use drr_core::trainprep::{
    export_training_file, prepare_dataset, DmInputRenderer, PrepConfig, SplitCorpus,
};
use log::{info, warn};
use serde_json::{json, Map, Value};

use crate::args::{DistillArgs, EvalArgs, InferArgs, PrepareArgs, SimulateArgs, TrainArgs};
use crate::output::{
    dev_corpus_path, ensure_dir, model_path, outcomes_path, traces_path, train_corpus_path,
    write_json, write_manifest,
};
use crate::UsageError;

fn load_datasets(config: &RunConfig) -> Result<Vec<Dataset>> {
    if config.datasets.is_empty() {
        return Err(UsageError(
            "no datasets given; pass --dataset or list them in the config".into(),
        )
        .into());
    }
    config
        .datasets
        .iter()
        .map(|spec| {
            load_dataset(&spec.path, &spec.name).with_context(|| {
                format!(
                    "loading dataset {:?} from {}",
                    spec.name,
                    spec.path.display()
                )
            })
        })
        .collect()
}

fn build_reasoner(config: &RunConfig) -> Result<Box<dyn Reasoner>> {
    let r = &config.reasoner;
    Ok(match r.backend {
        BackendKind::Remote => {
            let (Some(url), Some(model)) = (&r.url, &r.model) else {
                return Err(UsageError("the remote backend needs --url and --model".into()).into());
            };
            let mut remote = RemoteChatConfig::from_env(url.clone(), model.clone());
            if remote.api_key.is_none() {
                warn!(
                    "{} is not set; sending requests without credentials",
                    drr_core::reasoner::API_KEY_ENV
                );
            }
            remote.max_in_flight = r.max_in_flight;
            Box::new(RemoteChatReasoner::new(remote))
        }
        BackendKind::Scripted => {
            let Some(path) = &r.fixture else {
                return Err(UsageError("the scripted backend needs --fixture".into()).into());
            };
            Box::new(ScriptedReasoner::load(path)?)
        }
        BackendKind::Sim => Box::new(StochasticSimReasoner::new(r.p_correct, config.seed)?),
    })
}

fn build_critic(config: &RunConfig, datasets: &[Dataset]) -> Result<Box<dyn Critic<f64>>> {
    let spec = config
        .critic_spec()
        .map_err(|e| UsageError(e.to_string()))?;
    Ok(match spec {
        CriticSpec::Oracle => {
            let mut oracle = OracleCritic::default();
            for ds in datasets {
                oracle.extend_from(ds);
            }
            Box::new(oracle)
        }
        CriticSpec::AlwaysAccept => Box::new(AlwaysAccept),
        CriticSpec::AlwaysReject => Box::new(AlwaysReject),
        CriticSpec::Linear(path) => {
            let mut model: LinearCriticModel<f64> = load_model(&path)?;
            model.threshold = config.critic_threshold;
            Box::new(model)
        }
        CriticSpec::Remote(url) => {
            let mut remote = RemoteCriticConfig::new(url);
            remote.threshold = config.critic_threshold;
            Box::new(RemoteCritic::new(remote))
        }
    })
}

fn renderer(config: &RunConfig) -> DmInputRenderer {
    DmInputRenderer::new(config.prep.instruction.clone(), config.strategy.kind)
}

pub fn distill(args: DistillArgs) -> Result<()> {
    let config = args.config()?;
    let datasets = load_datasets(&config)?;
    let reasoner = build_reasoner(&config)?;
    let strategy = config.prompt_strategy()?;
    ensure_dir(&config.out_dir.join("traces"))?;

    let mut per_dataset = Map::new();
    let mut failed = 0;
    for ds in &datasets {
        let path = traces_path(&config, &ds.name);
        let s = distill_dataset(
            ds,
            &reasoner,
            &strategy,
            config.max_turns_generation,
            &path,
            config.workers,
        )?;
        println!(
            "{}: items {}, skipped: {}, new records {}, accepted {}, exhausted {}, failed {}",
            ds.name, s.n_items, s.n_skipped, s.n_records, s.n_accepted, s.n_exhausted, s.n_failed
        );
        failed += s.n_failed;
        per_dataset.insert(ds.name.clone(), json!({ "traces": path, "summary": s }));
    }
    let status = if failed == 0 { "complete" } else { "partial" };
    write_json(
        &config.out_dir.join("distill_summary.json"),
        &json!({
            "status": status,
            "seed": config.seed,
            "max_turns": config.max_turns_generation,
            "strategy": config.strategy.kind,
            "datasets": per_dataset,
        }),
    )?;
    write_manifest(&config, "distill", &[])?;
    if failed > 0 {
        bail!("{failed} traces failed and are marked in the trace files; rerun to retry them");
    }
    Ok(())
}

pub fn prepare(args: PrepareArgs) -> Result<()> {
    let config = args.config()?;
    let datasets = load_datasets(&config)?;
    let prep = PrepConfig {
        reject_per_accept: config.prep.reject_per_accept,
        train_fraction: config.prep.train_fraction,
        seed: config.seed,
        renderer: renderer(&config),
    };
    let pooled = datasets.len() > 1;
    let mut corpus = SplitCorpus::default();
    let mut per_dataset = Map::new();
    for ds in &datasets {
        let path = traces_path(&config, &ds.name);
        let traces = read_traces(&path)
            .with_context(|| format!("no usable traces at {}", path.display()))?;
        let (mut part, summary) = prepare_dataset(ds, &traces, &prep)?;
        for w in &summary.warnings {
            warn!("{}: {w}", ds.name);
        }
        if pooled {
            // keep ids unique across datasets
            for e in part.train.iter_mut().chain(part.dev.iter_mut()) {
                e.question_id = format!("{}:{}", ds.name, e.question_id);
            }
        }
        println!(
            "{}: accept {}, reject {} of {} kept, train {}, dev {}",
            ds.name,
            summary.n_accept,
            summary.n_reject_kept,
            summary.n_reject_before,
            summary.n_train,
            summary.n_dev
        );
        per_dataset.insert(ds.name.clone(), serde_json::to_value(&summary)?);
        corpus.extend(part);
    }
    if corpus.train.is_empty() {
        bail!("the prepared training corpus is empty");
    }
    let train_path = train_corpus_path(&config);
    let dev_path = dev_corpus_path(&config);
    export_training_file(&corpus.train, &train_path)?;
    export_training_file(&corpus.dev, &dev_path)?;
    info!("wrote {} and {}", train_path.display(), dev_path.display());
    write_json(
        &config.out_dir.join("prepare_summary.json"),
        &json!({
            "seed": config.seed,
            "reject_per_accept": config.prep.reject_per_accept,
            "train_fraction": config.prep.train_fraction,
            "train": train_path,
            "dev": dev_path,
            "n_train": corpus.train.len(),
            "n_dev": corpus.dev.len(),
            "datasets": per_dataset,
        }),
    )?;
    write_manifest(&config, "prepare", &[])?;
    Ok(())
}

pub fn train_critic(args: TrainArgs) -> Result<()> {
    let config = args.config()?;
    let train_path = args
        .train
        .clone()
        .unwrap_or_else(|| train_corpus_path(&config));
    let dev_path = args.dev.clone().unwrap_or_else(|| dev_corpus_path(&config));
    let t = &config.train;
    let hyper = TrainHyper::<f64> {
        lr: t.lr,
        epochs: t.epochs,
        class_weights: ClassWeights::new(t.w_reject, t.w_accept)
            .map_err(|e| UsageError(e.to_string()))?,
        hash_dim: t.hash_dim,
        threshold: config.critic_threshold,
        seed: config.seed,
    };
    let (model, report) = train_linear(&train_path, &dev_path, &hyper)?;
    ensure_dir(&config.out_dir)?;
    let path = model_path(&config);
    drr_core::critic::save_model(&model, &path)?;
    println!(
        "trained on {} examples: final loss {:.4}, dev_accuracy {:.4}, dev false positives {}",
        report.n_train,
        report.final_train_loss,
        report.dev_accuracy,
        report.dev_false_positive_count
    );
    println!("model written to {}", path.display());
    write_json(
        &config.out_dir.join("train_report.json"),
        &json!({
            "seed": config.seed,
            "train": train_path,
            "dev": dev_path,
            "model": path,
            "report": report,
        }),
    )?;
    write_manifest(
        &config,
        "train-critic",
        &[
            format!("train: {}", train_path.display()),
            format!("dev: {}", dev_path.display()),
        ],
    )?;
    Ok(())
}

pub fn infer(args: InferArgs) -> Result<()> {
    let config = args.config()?;
    let datasets = load_datasets(&config)?;
    let reasoner = build_reasoner(&config)?;
    let critic = build_critic(&config, &datasets)?;
    let strategy = config.prompt_strategy()?;
    let renderer = renderer(&config);
    ensure_dir(&config.out_dir.join("outcomes"))?;

    let mut per_dataset = Map::new();
    let mut failed = 0;
    for ds in &datasets {
        let path = outcomes_path(&config, &ds.name);
        let s = infer_dataset::<f64, _, _>(
            ds,
            &reasoner,
            &critic,
            &strategy,
            &renderer,
            config.max_turns_inference,
            &path,
            config.workers,
        )?;
        println!(
            "{}: items {}, skipped: {}, answered {}, abstained {}, failed {}",
            ds.name, s.n, s.n_skipped, s.n_answered, s.n_abstained, s.n_failed
        );
        failed += s.n_failed;
        per_dataset.insert(ds.name.clone(), json!({ "outcomes": path, "summary": s }));
    }
    write_json(
        &config.out_dir.join("infer_summary.json"),
        &json!({
            "status": if failed == 0 { "complete" } else { "partial" },
            "seed": config.seed,
            "critic": config.critic,
            "max_turns": config.max_turns_inference,
            "datasets": per_dataset,
        }),
    )?;
    write_manifest(&config, "infer", &[])?;
    if failed > 0 {
        bail!("{failed} questions failed and were not written; rerun to retry them");
    }
    Ok(())
}

/// Pools per-dataset results; Acc(D) is weighted by dataset size.
fn combine(results: &[EvalResult<f64>], ks: &[f64]) -> EvalResult<f64> {
    let (c, i, a) = results.iter().fold((0, 0, 0), |(c, i, a), r| {
        (c + r.n_correct, i + r.n_incorrect, a + r.n_abstain)
    });
    let n: usize = results.iter().map(|r| r.n).sum();
    let right: f64 = results.iter().map(|r| r.acc_d * r.n as f64).sum();
    EvalResult::from_counts(c, i, a, ks, if n == 0 { 0.0 } else { right / n as f64 })
}

fn report(results: &[(String, EvalResult<f64>)], ks: &[f64], as_json: bool) -> Value {
    let mut per = Map::new();
    let mut table = String::new();
    for (name, r) in results {
        per.insert(name.clone(), r.to_json());
        table.push_str(&r.table(name));
    }
    let mut value = json!({ "datasets": per });
    if results.len() > 1 {
        let all: Vec<_> = results.iter().map(|(_, r)| r.clone()).collect();
        let combined = combine(&all, ks);
        table.push_str(&combined.table("combined"));
        value["combined"] = combined.to_json();
    }
    if as_json {
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("JSON value serializes")
        );
    } else {
        print!("{table}");
    }
    value
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let config = args.config()?;
    let datasets = load_datasets(&config)?;
    if args.outcomes.is_some() && datasets.len() != 1 {
        return Err(UsageError("--outcomes needs exactly one --dataset".into()).into());
    }
    let mut results = Vec::new();
    for ds in &datasets {
        let path = args
            .outcomes
            .clone()
            .unwrap_or_else(|| outcomes_path(&config, &ds.name));
        let outcomes: Vec<InferenceOutcome<f64>> =
            read_outcomes(&path).with_context(|| format!("reading outcomes for {}", ds.name))?;
        if outcomes.len() < ds.len() {
            warn!(
                "{}: only {} of {} questions have outcomes",
                ds.name,
                outcomes.len(),
                ds.len()
            );
        }
        let r = score_outcomes(&outcomes, ds, &config.ks).map_err(|e| match e {
            MetricsError::Empty => anyhow::anyhow!("{} holds no outcomes", path.display()),
            other => anyhow::anyhow!("{}: {other}", path.display()),
        })?;
        results.push((ds.name.clone(), r));
    }
    let mut value = report(&results, &config.ks, args.json);
    value["seed"] = json!(config.seed);
    write_json(&config.out_dir.join("eval.json"), &value)?;
    let notes: Vec<String> = args
        .outcomes
        .iter()
        .map(|p| format!("outcomes: {}", p.display()))
        .collect();
    write_manifest(&config, "eval", &notes)?;
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let config = args.config()?;
    let ds = synthetic_dataset(
        "sim",
        config.simulate.n,
        config.simulate.n_choices,
        config.seed,
    )?;
    let reasoner = StochasticSimReasoner::new(config.reasoner.p_correct, config.seed)?;
    let critic = build_critic(&config, std::slice::from_ref(&ds))?;
    let strategy = config.prompt_strategy()?;
    let renderer = renderer(&config);

    let mut outcomes = Vec::with_capacity(ds.len());
    run_ordered(
        &ds.items,
        config.workers,
        |item| {
            infer_item::<f64, _, _>(
                item,
                &reasoner,
                &critic,
                &strategy,
                &renderer,
                config.max_turns_inference,
            )
        },
        |_, result| {
            outcomes.push(result?);
            Ok::<(), anyhow::Error>(())
        },
    )?;

    let out = config.out_dir.join("simulate");
    ensure_dir(&out)?;
    let lines: String = outcomes.iter().map(|o| outcome_to_line(o) + "\n").collect();
    let outcomes_file = out.join("outcomes.jsonl");
    write_atomic(&outcomes_file, lines.as_bytes())?;

    let r = score_outcomes(&outcomes, &ds, &config.ks)?;
    let mut value = report(&[("sim".to_string(), r)], &config.ks, args.json);
    value["seed"] = json!(config.seed);
    value["p_correct"] = json!(config.reasoner.p_correct);
    value["critic"] = json!(config.critic);
    value["max_turns"] = json!(config.max_turns_inference);
    value["outcomes"] = json!(outcomes_file);
    write_json(&out.join("simulate.json"), &value)?;
    write_manifest(&config, "simulate", &[])?;
    Ok(())
}
