use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clauseopt::corpus::{
    sample_correctness_set, sample_holdout_set, sample_score_set, ClauseBatch, Corpus, Split,
};
use clauseopt::gateway::Gateway;
use clauseopt::gradient::{EngineOptions, GradientEngine};
use clauseopt::metrics::MetricReport;
use clauseopt::proxy::{
    build_correctness_dataset, sample_prompts_by_depth, train_proxy, BuildOptions, CorrectnessDataset, ProxyModel,
    ProxyScorer,
};
use clauseopt::search::{
    run_strategy, LlmScorer, PromptScorer, RandomScorer, RewardKind, SearchConfig, SearchResult, Strategy,
};
use serde::Serialize;

use crate::config::{invalid, ConfigError, RunConfig};
use crate::report::{self, Evaluation, EvaluationRow, LedgerFile, RunArtifacts};
use crate::setup;

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn echo_config(dir: &Path, config: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.toml"), toml::to_string_pretty(config)?)
        .with_context(|| format!("writing {}/config.toml", dir.display()))
}

/// Every mock run must leave the remote counter at zero.
fn audit(gateway: &Gateway) -> anyhow::Result<LedgerFile> {
    let totals = gateway.ledger().snapshot();
    let remote_backend = gateway.backend().is_remote();
    if !remote_backend && totals.remote > 0 {
        bail!("mock backend recorded {} remote calls", totals.remote);
    }
    Ok(LedgerFile {
        backend: gateway.backend().id(),
        remote_backend,
        totals,
    })
}

pub fn default_run_dir(config: &RunConfig, command: &str) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    config
        .output_dir
        .join(format!("{stamp}-{command}-s{}", config.effective_seed()))
}

fn load_proxy(config: &RunConfig, embedder: &clauseopt::embed::Embedder) -> anyhow::Result<Arc<ProxyModel>> {
    let path = config.proxy_model_path()?;
    if !path.is_file() {
        return invalid(format!("proxy model {} does not exist; run train-proxy first", path.display()));
    }
    let model = ProxyModel::load(path)?;
    model
        .ensure_compatible(embedder.layout(), &embedder.provider_id())
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    Ok(Arc::new(model))
}

fn scorer(
    config: &RunConfig,
    search: &SearchConfig,
    corpus: &Corpus,
    gateway: &Arc<Gateway>,
) -> anyhow::Result<Box<dyn PromptScorer>> {
    let score_set = || sample_score_set(corpus, search.sampling_seed, search.score_set_size);
    Ok(match search.reward_kind {
        RewardKind::MacroF1 | RewardKind::Accuracy => Box::new(LlmScorer::new(
            Arc::clone(gateway),
            setup::meta(config)?,
            score_set()?,
            search.reward_kind,
        )?),
        RewardKind::Random => Box::new(RandomScorer::new(search.rng_seed, search.score_set_size as u64)),
        RewardKind::Proxy => {
            let embedder = setup::embedder(config)?;
            let model = load_proxy(config, &embedder)?;
            Box::new(ProxyScorer::new(model, embedder, score_set()?, config.proxy.threshold)?)
        }
    })
}

/// Run one search; a failed run still leaves its partial artifacts in `dir`.
fn search(
    config: &RunConfig,
    search: &SearchConfig,
    strategy: Strategy,
    corpus: &Corpus,
    gateway: &Arc<Gateway>,
    dir: &Path,
) -> anyhow::Result<SearchResult> {
    let scorer = scorer(config, search, corpus, gateway)?;
    let engine = GradientEngine::new(Arc::clone(gateway), setup::meta(config)?, EngineOptions::default());
    let outcome = run_strategy(strategy, search, corpus, &engine, scorer.as_ref());
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("ledger.json"), &audit(gateway)?)?;
    match outcome {
        Ok(result) => {
            result.persist(dir)?;
            Ok(result)
        }
        Err(abort) => {
            if let Some(partial) = &abort.partial {
                partial.persist(dir)?;
            }
            Err(anyhow::Error::new(abort.error).context(format!("search aborted; partial run kept in {}", dir.display())))
        }
    }
}

fn evaluate_prompts(
    config: &RunConfig,
    corpus: &Corpus,
    rows: &[(&str, &str)],
) -> anyhow::Result<Evaluation> {
    let gateway = setup::gateway(config, setup::backend(config, corpus)?);
    let split = config.evaluation.split;
    let scorer = LlmScorer::new(
        Arc::clone(&gateway),
        setup::meta(config)?,
        ClauseBatch::from_split(corpus, split),
        RewardKind::MacroF1,
    )?;
    let mut out = Vec::new();
    for (method, prompt) in rows {
        out.push(EvaluationRow {
            method: method.to_string(),
            prompt: prompt.to_string(),
            report: scorer.report(prompt)?,
        });
    }
    Ok(Evaluation {
        split: split.as_str().to_string(),
        rows: out,
        ledger: audit(&gateway)?.totals,
    })
}

pub fn optimize(config: &RunConfig, dir: &Path) -> anyhow::Result<String> {
    let corpus = setup::corpus(config)?;
    let gateway = setup::gateway(config, setup::backend(config, &corpus)?);
    echo_config(dir, config)?;
    let result = search(config, &config.search, config.strategy, &corpus, &gateway, dir)?;
    if config.evaluation.enabled {
        let label = report::method_label(&result);
        let evaluation = evaluate_prompts(
            config,
            &corpus,
            &[("Initial prompt", &config.search.initial_prompt), (&label, &result.best_prompt)],
        )?;
        write_json(&dir.join("evaluation.json"), &evaluation)?;
    }
    let text = report::render(&[RunArtifacts::load(dir)?]);
    std::fs::write(dir.join("report.txt"), &text)?;
    Ok(text)
}

fn collect_prompts(config: &RunConfig, corpus: &Corpus, gateway: &Arc<Gateway>, out: &Path) -> anyhow::Result<Vec<String>> {
    let d = &config.dataset;
    let result = match &d.source_run {
        Some(run) => RunArtifacts::load(run)?.result,
        None => {
            // Collection always scores with the backend itself.
            let mut search_config = config.search.clone();
            if !matches!(search_config.reward_kind, RewardKind::MacroF1 | RewardKind::Accuracy) {
                search_config.reward_kind = RewardKind::MacroF1;
            }
            search(config, &search_config, Strategy::Mcts, corpus, gateway, &out.join("collection"))?
        }
    };
    let prompts = sample_prompts_by_depth(&result.tree, d.prompts, d.seed);
    if prompts.len() < d.prompts {
        log::warn!("search tree held only {} distinct prompts, wanted {}", prompts.len(), d.prompts);
    }
    Ok(prompts)
}

pub fn build_dataset(config: &RunConfig, out: &Path) -> anyhow::Result<String> {
    let d = &config.dataset;
    let corpus = setup::corpus(config)?;
    let gateway = setup::gateway(config, setup::backend(config, &corpus)?);
    let meta = setup::meta(config)?;
    echo_config(out, config)?;
    let prompts = collect_prompts(config, &corpus, &gateway, out)?;
    let options = BuildOptions {
        seed: d.seed,
        built_at: None,
    };
    let clauses = sample_correctness_set(&corpus, d.seed, d.clauses)?;
    let train = build_correctness_dataset(&prompts, &clauses, &gateway, &meta, &options)?;
    train.save(&out.join("train"))?;
    let mut summary = format!(
        "{} prompts x {} clauses -> {} records ({:.3} correct, {} excluded)\n",
        prompts.len(),
        clauses.len(),
        train.len(),
        train.correct_fraction(),
        train.provenance.excluded
    );
    if d.validation_clauses > 0 {
        let held = sample_holdout_set(&corpus, Split::Val, d.seed, d.validation_clauses, &Default::default())?;
        let val = build_correctness_dataset(&prompts, &held, &gateway, &meta, &options)?;
        val.save(&out.join("validation"))?;
        summary += &format!("validation: {} records\n", val.len());
    }
    write_json(&out.join("ledger.json"), &audit(&gateway)?)?;
    Ok(summary)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    model: &'a Path,
    provider_id: &'a str,
    dataset: &'a Path,
    dataset_backend: &'a str,
    report: &'a clauseopt::proxy::TrainingReport,
}

pub fn train(config: &RunConfig) -> anyhow::Result<String> {
    let model_path = config
        .proxy
        .model
        .as_deref()
        .ok_or_else(|| ConfigError("train-proxy needs proxy.model as the output path".into()))?;
    let train_dir = config.dataset.dir.join("train");
    if !train_dir.is_dir() {
        return invalid(format!("no dataset at {}; run build-dataset first", train_dir.display()));
    }
    let dataset = CorrectnessDataset::load(&train_dir)?;
    let val_dir = config.dataset.dir.join("validation");
    let validation = if val_dir.is_dir() {
        let v = CorrectnessDataset::load(&val_dir)?;
        if v.provenance.backend != dataset.provenance.backend {
            return invalid(format!(
                "validation set came from {} but training set from {}",
                v.provenance.backend, dataset.provenance.backend
            ));
        }
        Some(v)
    } else {
        None
    };
    let embedder = setup::embedder(config)?;
    let model = train_proxy(&dataset, &config.proxy.train, &embedder, validation.as_ref())?;
    if let Some(parent) = model_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    model.save(model_path)?;
    let summary = TrainSummary {
        model: model_path,
        provider_id: &model.provider_id,
        dataset: &train_dir,
        dataset_backend: &dataset.provenance.backend,
        report: &model.report,
    };
    let mut report_path = model_path.as_os_str().to_owned();
    report_path.push(".report.json");
    write_json(Path::new(&report_path), &summary)?;
    let r = &model.report;
    Ok(format!(
        "{} proxy: train accuracy {}, validation accuracy {} over {} records\n",
        r.variant,
        r.train_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
        r.val_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
        r.val_records
    ))
}

/// Which clauses `evaluate` scores against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalSet {
    /// The seeded score set a search would use.
    Score,
    Train,
    Val,
    Test,
}

pub fn evaluate(config: &RunConfig, prompt: &str, set: EvalSet, use_proxy: bool) -> anyhow::Result<MetricReport> {
    let corpus = setup::corpus(config)?;
    let s = &config.search;
    let batch = match set {
        EvalSet::Score => sample_score_set(&corpus, s.sampling_seed, s.score_set_size)?,
        EvalSet::Train => ClauseBatch::from_split(&corpus, Split::Train),
        EvalSet::Val => ClauseBatch::from_split(&corpus, Split::Val),
        EvalSet::Test => ClauseBatch::from_split(&corpus, Split::Test),
    };
    if use_proxy {
        let embedder = setup::embedder(config)?;
        let model = load_proxy(config, &embedder)?;
        return Ok(ProxyScorer::new(model, embedder, batch, config.proxy.threshold)?.report(prompt)?);
    }
    let gateway = setup::gateway(config, setup::backend(config, &corpus)?);
    let scorer = LlmScorer::new(Arc::clone(&gateway), setup::meta(config)?, batch, RewardKind::MacroF1)?;
    let report = scorer.report(prompt)?;
    audit(&gateway)?;
    Ok(report)
}

pub fn report(dirs: &[PathBuf]) -> anyhow::Result<String> {
    let runs = dirs
        .iter()
        .map(|d| RunArtifacts::load(d))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let text = report::render(&runs);
    if let [single] = dirs {
        std::fs::write(single.join("report.txt"), &text)?;
    }
    Ok(text)
}
