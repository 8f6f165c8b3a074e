use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

const SMALL: &str = r#"
seed = 3
output_dir = "runs"

[corpus.synthetic]
train = 400
val = 120
test = 100

[embedding]
dim = 32
cache = "emb.bin"

[search]
iterations = 2
depth_limit = 3
score_set_size = 60

[dataset]
dir = "dataset"
prompts = 6
clauses = 80
validation_clauses = 40

[proxy]
model = "proxy.bin"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clauseopt"))
}

fn workspace(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("{SMALL}\n{extra}")).unwrap();
    (dir, cfg)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_train_optimize_chain_with_mock_backend() {
    let started = Instant::now();
    let (dir, cfg) = workspace("");
    let c = s(&cfg);
    ok(&["build-dataset", "--config", c]);
    let records = std::fs::read_to_string(dir.path().join("dataset/train/records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 6 * 80);
    ok(&["train-proxy", "--config", c]);
    assert!(dir.path().join("proxy.bin").is_file());
    assert!(dir.path().join("proxy.bin.report.json").is_file());

    let std_run = dir.path().join("std");
    let text = ok(&["optimize", "--config", c, "--run-dir", s(&std_run)]);
    assert!(text.contains("Macro F1"));

    let proxy_cfg = dir.path().join("proxy.toml");
    std::fs::write(&proxy_cfg, std::fs::read_to_string(&cfg).unwrap().replace(
        "score_set_size = 60",
        "score_set_size = 60\nreward_kind = \"proxy\"",
    ))
    .unwrap();
    let proxy_run = dir.path().join("proxy");
    ok(&["optimize", "--config", s(&proxy_cfg), "--run-dir", s(&proxy_run)]);

    for run in [&std_run, &proxy_run] {
        for f in ["config.toml", "trace.jsonl", "result.json", "ledger.json", "report.txt", "evaluation.json"] {
            assert!(run.join(f).is_file(), "{} missing {f}", run.display());
        }
        let result = json(&run.join("result.json"));
        let root_reward = result["tree"][0]["last_reward"].as_f64().unwrap();
        assert!(result["best_reward"].as_f64().unwrap() >= root_reward);
        let ledger = json(&run.join("ledger.json"));
        assert_eq!(ledger["remote_backend"], Value::Bool(false));
        assert_eq!(ledger["totals"]["remote"], 0);
    }

    // Proxy-scored search never asks the backend to score prompts.
    let proxy_ledger = json(&proxy_run.join("ledger.json"));
    assert_eq!(proxy_ledger["totals"]["actual"]["score-eval"], 0);
    let proxy_result = json(&proxy_run.join("result.json"));
    let expansions = proxy_result["expansions"].as_u64().unwrap();
    assert_eq!(proxy_result["ledger"]["model"]["score-eval"], 0);
    assert_eq!(
        proxy_ledger["totals"]["model"]["gradient-eval"].as_u64().unwrap(),
        expansions * 20 * 4
    );

    let both = ok(&["report", s(&std_run), s(&proxy_run)]);
    assert!(both.contains("MCTS (macro-f1)") && both.contains("MCTS (proxy)"));
    assert!(started.elapsed().as_secs() < 60, "chain took {:?}", started.elapsed());
}

#[test]
fn proxy_reward_without_model_is_a_config_error() {
    let (dir, cfg) = workspace("");
    let text = std::fs::read_to_string(&cfg).unwrap()
        .replace("model = \"proxy.bin\"", "")
        .replace("score_set_size = 60", "score_set_size = 60\nreward_kind = \"proxy\"");
    std::fs::write(&cfg, text).unwrap();
    let run_dir = dir.path().join("r");
    let out = run(&["optimize", "--config", s(&cfg), "--run-dir", s(&run_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("proxy.model"));
    assert!(!run_dir.exists(), "nothing may run before validation passes");
}

#[test]
fn missing_model_file_is_refused() {
    let (dir, cfg) = workspace("");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("score_set_size = 60", "score_set_size = 60\nreward_kind = \"proxy\"");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["optimize", "--config", s(&cfg), "--run-dir", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn proxy_trained_on_other_embeddings_is_refused() {
    let (dir, cfg) = workspace("");
    let c = s(&cfg);
    ok(&["build-dataset", "--config", c]);
    ok(&["train-proxy", "--config", c]);
    let other = dir.path().join("other.toml");
    std::fs::write(&other, std::fs::read_to_string(&cfg).unwrap().replace("dim = 32", "dim = 48")).unwrap();
    let out = run(&["evaluate", "--config", s(&other), "--prompt", "x", "--proxy"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("proxy.bin"));
}

#[test]
fn unknown_config_key_fails_fast() {
    let (_dir, cfg) = workspace("[search.typo]\nx = 1");
    let out = run(&["evaluate", "--config", s(&cfg), "--prompt", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn runtime_errors_exit_one_with_json() {
    let (_dir, cfg) = workspace("");
    let out = run(&["report", s(&cfg.with_file_name("nope"))]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "runtime");
}

#[test]
fn reruns_reproduce_identical_files() {
    let (dir, cfg) = workspace("");
    let c = s(&cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["optimize", "--config", c, "--run-dir", s(&a)]);
    ok(&["optimize", "--config", c, "--run-dir", s(&b)]);
    for f in ["config.toml", "trace.jsonl", "result.json", "ledger.json", "evaluation.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let report = |d: &Path| std::fs::read_to_string(d.join("report.txt")).unwrap().replace(s(d), "");
    assert_eq!(report(&a), report(&b));

    let (d1, d2) = (dir.path().join("d1"), dir.path().join("d2"));
    ok(&["build-dataset", "--config", c, "--out", s(&d1)]);
    ok(&["build-dataset", "--config", c, "--out", s(&d2)]);
    for f in ["train/records.jsonl", "validation/records.jsonl", "ledger.json"] {
        assert_eq!(std::fs::read(d1.join(f)).unwrap(), std::fs::read(d2.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn evaluate_matches_direct_computation() {
    use clauseopt::corpus::sample_score_set;
    use clauseopt::corpus::synthetic::{generate, SyntheticSpec};
    use clauseopt::gateway::mock::{ByPhase, GoldOracle, LegalHeuristic};
    use clauseopt::gateway::{Gateway, MetaPromptSet, MockBackend};
    use clauseopt::metrics::compute_metrics;
    use clauseopt::search::DEFAULT_INITIAL_PROMPT;

    let (_dir, cfg) = workspace("[backend]\nrulebook = \"gold\"\nerror_rate = 0.2");
    let printed = ok(&["evaluate", "--config", s(&cfg), "--prompt", DEFAULT_INITIAL_PROMPT]);
    let report: Value = serde_json::from_str(&printed).unwrap();

    let corpus = generate(&SyntheticSpec {
        train: 400,
        val: 120,
        test: 100,
        ..SyntheticSpec::default()
    });
    let oracle = GoldOracle::from_corpus(&corpus).with_error_rate(0.2);
    let gateway = Gateway::mock(MockBackend::new("gold", ByPhase::new(LegalHeuristic).on_classify(oracle), 3));
    let batch = sample_score_set(&corpus, 3, 60).unwrap();
    let predictions: Vec<_> = gateway
        .classify_all(&MetaPromptSet::default(), DEFAULT_INITIAL_PROMPT, &batch.clauses, clauseopt::ledger::Phase::ScoreEval)
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
    let direct = compute_metrics(&predictions, &batch.golds()).unwrap();
    assert_eq!(report["accuracy"].as_f64().unwrap(), direct.accuracy);
    assert_eq!(report["macro_f1"].as_f64().unwrap(), direct.macro_f1);
    assert_eq!(report["n"].as_u64().unwrap(), 60);
    assert!(direct.accuracy < 1.0, "the error rate should show up");
}

#[test]
fn strategies_produce_comparable_results() {
    let (dir, cfg) = workspace("[evaluation]\nenabled = false");
    let c = s(&cfg);
    let (m, g) = (dir.path().join("m"), dir.path().join("g"));
    ok(&["optimize", "--config", c, "--run-dir", s(&m), "--strategy", "mcts"]);
    ok(&["optimize", "--config", c, "--run-dir", s(&g), "--strategy", "greedy"]);
    let (rm, rg) = (json(&m.join("result.json")), json(&g.join("result.json")));
    assert_eq!(rm["strategy"], "mcts");
    assert_eq!(rg["strategy"], "greedy");
    assert_eq!(rm["tree"][0]["prompt"], rg["tree"][0]["prompt"]);
    assert_eq!(rm["tree"][0]["last_reward"], rg["tree"][0]["last_reward"]);
    let table = ok(&["report", s(&m), s(&g)]);
    assert!(table.contains("MCTS (macro-f1)") && table.contains("Greedy (macro-f1)"));
    assert!(!table.contains("Accuracy"), "no evaluation table without evaluation.json");
}

#[test]
fn default_run_dir_is_named_by_time_and_seed() {
    let (dir, cfg) = workspace("[evaluation]\nenabled = false");
    ok(&["optimize", "--config", s(&cfg), "--seed", "11"]);
    let runs: Vec<_> = std::fs::read_dir(dir.path().join("runs")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(runs.len(), 1);
    let name = runs[0].to_string_lossy().into_owned();
    assert!(name.ends_with("-optimize-s11"), "{name}");
    assert!(name.starts_with("20"), "{name}");
}
