mod common;

use std::sync::Arc;

use clauseopt::corpus::synthetic::{generate, SyntheticSpec};
use clauseopt::corpus::{sample_correctness_set, sample_holdout_set, sample_score_set, BatchKind, ClauseBatch, Split};
use clauseopt::embed::{EmbeddingCache, Embedder, FeatureLayout, FeatureVector, HashProjection};
use clauseopt::gateway::mock::{GoldOracle, LegalHeuristic};
use clauseopt::gateway::{Gateway, MetaPromptSet, MockBackend};
use clauseopt::gradient::{EngineOptions, GradientEngine};
use clauseopt::ledger::Phase;
use clauseopt::proxy::*;
use clauseopt::rng::SampleRng;
use clauseopt::search::{PromptNode, RewardKind, SearchConfig, SearchTree, Searcher, Strategy};
use common::*;

use proptest::prelude::*;

fn embedder(dim: usize) -> Embedder {
    Embedder::new(Arc::new(HashProjection::new(dim, 0)), Arc::new(EmbeddingCache::in_memory()))
}

#[test]
fn linear_gradient_matches_finite_differences() {
    let mut rng = SampleRng::new(1);
    let (x, y) = separable(30, 5, 0.0, 2);
    for _ in 0..100 {
        let params: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let c = 0.5 + rng.unit() * 2.0;
        let (_, analytic) = linear_loss_and_grad(&params, x.view(), y.view(), c);
        let numeric = numeric_grad(|p| linear_loss_and_grad(p, x.view(), y.view(), c).0, &params, 1e-5);
        assert!(relative_error(&analytic, &numeric) < 1e-4);
    }
}

#[test]
fn multilayer_gradient_matches_finite_differences() {
    let mut rng = SampleRng::new(3);
    let (x, y) = separable(12, 4, 0.0, 4);
    for point in 0..100 {
        let mut m = Mlp::new(4, &[6, 5, 3], 0.3, point);
        let params: Vec<f64> = m.params().iter().map(|p| p + 0.1 * rng.normal()).collect();
        m.set_params(&params);
        let (_, analytic) = m.loss_and_grad(x.view(), y.view());
        let mut probe = m.clone();
        let numeric = numeric_grad(
            |p| {
                probe.set_params(p);
                probe.mean_loss(x.view(), y.view())
            },
            &params,
            1e-6,
        );
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "point {point}: {err}");
    }
}

#[test]
fn linear_separates_separable_data() {
    let (x, y) = separable(600, 10, 0.05, 5);
    let (tx, ty) = (x.slice(ndarray::s![..500, ..]), y.slice(ndarray::s![..500]));
    let (vx, vy) = (x.slice(ndarray::s![500.., ..]), y.slice(ndarray::s![500..]).to_owned());
    let (m, report) = train_linear(tx, ty, 1.0, 1000, 1e-6).unwrap();
    let p: Vec<f64> = vx.rows().into_iter().map(|r| m.predict(&r.to_vec())).collect();
    assert!(accuracy(&p, &vy) >= 0.99);
    assert!(report.loss_curve.last() < report.loss_curve.first());
}

#[test]
fn xor_needs_hidden_layers() {
    let (x, y) = xor(100, 4, 6);
    let (vx, vy) = xor(50, 4, 7);
    assert!(best_linear_accuracy_2d(&vx, &vy) <= 0.75);
    let (lin, _) = train_linear(x.view(), y.view(), 1.0, 1000, 1e-6).unwrap();
    let lp: Vec<f64> = vx.rows().into_iter().map(|r| lin.predict(&r.to_vec())).collect();
    assert!(accuracy(&lp, &vy) <= 0.6, "linear {}", accuracy(&lp, &vy));
    let config = MlpConfig {
        hidden: vec![64, 32, 16],
        seed: 1,
        ..MlpConfig::default()
    };
    let (m, report) = train_mlp(x.view(), y.view(), (vx.view(), vy.view()), &config).unwrap();
    assert!(report.val_accuracy.unwrap() >= 0.95, "{report:?}");
    let p = m.predict_batch(vx.view());
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn gradient_descent_never_increases_linear_loss() {
    let (x, y) = separable(80, 6, 0.0, 8);
    let mut params = vec![0.0; 7];
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let (loss, grad) = linear_loss_and_grad(&params, x.view(), y.view(), 1.0);
        assert!(loss <= last + 1e-12);
        last = loss;
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= 1e-3 * g;
        }
    }
}

#[test]
fn perfect_oracle_dataset() {
    let corpus = generate(&SyntheticSpec::default());
    let gw = Gateway::mock(MockBackend::new("gold", GoldOracle::from_corpus(&corpus), 0));
    let clauses = ClauseBatch::new(corpus.split(Split::Train)[..3].to_vec(), 0, BatchKind::ScoreSet).unwrap();
    let prompts = vec!["a".to_string(), "b".to_string()];
    let ds = build_correctness_dataset(&prompts, &clauses, &gw, &MetaPromptSet::default(), &BuildOptions::default()).unwrap();
    assert_eq!(ds.len(), 6);
    assert!(ds.records.iter().all(|r| r.correct));
    assert_eq!(gw.ledger().snapshot().actual_for(Phase::CorrectnessBuild), 6);
}

#[test]
fn full_size_build_and_round_trip() {
    let corpus = generate(&SyntheticSpec::default());
    let gw = Gateway::mock(MockBackend::new("gold", GoldOracle::from_corpus(&corpus).with_error_rate(0.2), 0));
    let clauses = sample_correctness_set(&corpus, 1, 500).unwrap();
    assert_eq!(clauses.count(clauseopt::Label::Fair), 250);
    let prompts: Vec<String> = (0..30).map(|i| format!("prompt variant {i}")).collect();
    let options = BuildOptions {
        seed: 1,
        built_at: Some("2026-01-01T00:00:00Z".into()),
    };
    let ds = build_correctness_dataset(&prompts, &clauses, &gw, &MetaPromptSet::default(), &options).unwrap();
    assert_eq!(ds.len(), 15_000);
    assert_eq!(gw.ledger().snapshot().actual_for(Phase::CorrectnessBuild), 15_000);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    assert_eq!(CorrectnessDataset::load(dir.path()).unwrap(), ds);

    let seen = clauses.ids().into_iter().map(String::from).collect();
    let val = sample_holdout_set(&corpus, Split::Val, 2, 200, &seen).unwrap();
    assert_eq!(val.kind, BatchKind::CorrectnessValidation);
    assert!(val.clauses.iter().all(|c| !seen.contains(&c.id)));
    let vds = build_correctness_dataset(&prompts[..2], &val, &gw, &MetaPromptSet::default(), &options).unwrap();
    assert_eq!(vds.len(), 400);
}

#[test]
fn model_file_round_trip_is_bitwise() {
    let corpus = generate(&SyntheticSpec::default());
    let gw = Gateway::mock(MockBackend::new("legal", LegalHeuristic, 0));
    let clauses = sample_correctness_set(&corpus, 3, 60).unwrap();
    let prompts: Vec<String> = [
        "Is this clause fair (0) or unfair (1) to the consumer?",
        "Clauses about arbitration are unfair.",
        "Clauses about liability and termination are unfair.",
        "Clauses about jurisdiction, governing law and privacy are unfair.",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let ds = build_correctness_dataset(&prompts, &clauses, &gw, &MetaPromptSet::default(), &BuildOptions::default()).unwrap();
    let e = embedder(16);
    for variant in [Variant::Linear, Variant::Multilayer] {
        let config = TrainConfig {
            variant,
            mlp: MlpConfig {
                hidden: vec![16, 8, 4],
                max_epochs: 20,
                ..MlpConfig::default()
            },
            ..TrainConfig::default()
        };
        let model = train_proxy(&ds, &config, &e, None).unwrap();
        assert_eq!(model.layout, FeatureLayout::new(16, 16));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proxy.bin");
        model.save(&path).unwrap();
        let back = ProxyModel::load(&path).unwrap();
        assert_eq!(back, model);
        let (x, _) = ds.features(&e).unwrap();
        let a = model.predict_rows(x.view()).unwrap();
        let b = back.predict_rows(x.view()).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(back.ensure_compatible(FeatureLayout::new(32, 32), &e.provider_id()).is_err());
        assert!(back.ensure_compatible(e.layout(), "other-provider").is_err());
        let wrong = FeatureVector::assemble(&[0.0; 8], &[0.0; 8], clauseopt::Label::Fair);
        assert!(back.predict_correctness(&wrong).is_err());
    }
}

#[test]
fn corrupted_model_files_are_rejected() {
    let e = embedder(4);
    let model = ProxyModel {
        net: ProxyNet::Linear(LinearModel::zeros(10, 1.0)),
        layout: e.layout(),
        provider_id: e.provider_id(),
        report: TrainingReport::new("linear"),
    };
    let bytes = model.to_bytes().unwrap();
    assert!(ProxyModel::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    assert!(ProxyModel::from_bytes(b"PROXYMDX").is_err());
    let z = FeatureVector::assemble(&[1.0; 4], &[2.0; 4], clauseopt::Label::Unfair);
    assert_eq!(model.predict_correctness(&z).unwrap(), 0.5);
}

#[test]
fn true_correctness_bits_reproduce_backend_metrics() {
    let corpus = generate(&SyntheticSpec::default());
    let gw = Gateway::mock(MockBackend::new("legal", LegalHeuristic, 0));
    let meta = MetaPromptSet::default();
    let prompts = ["Is this clause fair?", "Clauses about arbitration and privacy are unfair."];
    for (i, prompt) in prompts.iter().enumerate() {
        let batch = sample_score_set(&corpus, i as u64, 40).unwrap();
        let preds: Vec<_> = gw
            .classify_all(&meta, prompt, &batch.clauses, Phase::ScoreEval)
            .into_iter()
            .map(|r| r.unwrap())
            .collect();
        let golds = batch.golds();
        let bits: Vec<f64> = preds.iter().zip(&golds).map(|(p, g)| if p == g { 1.0 } else { 0.0 }).collect();
        let via_flip = flip_rule_score(&golds, &bits, 0.5).unwrap();
        let direct = clauseopt::metrics::compute_metrics(&preds, &golds).unwrap();
        assert_eq!(via_flip, direct);
    }
}

#[test]
fn proxy_scored_search_makes_no_score_calls() {
    let corpus = generate(&SyntheticSpec::default());
    let gw = Arc::new(Gateway::mock(MockBackend::new("legal", LegalHeuristic, 0)));
    let meta = Arc::new(MetaPromptSet::default());
    let clauses = sample_correctness_set(&corpus, 3, 40).unwrap();
    let prompts = vec!["Is it fair?".to_string(), "Clauses about arbitration are unfair.".to_string()];
    let ds = build_correctness_dataset(&prompts, &clauses, &gw, &meta, &BuildOptions::default()).unwrap();
    let e = embedder(16);
    let model = Arc::new(train_proxy(&ds, &TrainConfig::default(), &e, None).unwrap());
    let batch = ClauseBatch::from_split(&corpus, Split::Val);
    let scorer = ProxyScorer::new(model, e, batch, DEFAULT_THRESHOLD).unwrap();
    let engine = GradientEngine::new(Arc::clone(&gw), meta, EngineOptions::default());
    let config = SearchConfig {
        reward_kind: RewardKind::Proxy,
        ..SearchConfig::default()
    };
    let mut s = Searcher::new(&config, &corpus, &engine, &scorer, Strategy::Mcts).unwrap();
    let before = gw.ledger().snapshot();
    s.expand(0).unwrap();
    let delta = gw.ledger().snapshot().since(&before);
    assert_eq!(delta.model_total(), 88);
    assert_eq!(delta.actual_for(Phase::ScoreEval), 0);
}

#[test]
fn depth_banded_prompt_sampling() {
    let mut tree = SearchTree::new("root", 0.1);
    let mut frontier = vec![0];
    for depth in 1..=8 {
        let mut next = Vec::new();
        for &p in &frontier {
            for k in 0..2 {
                next.push(tree.add_child(p, format!("d{depth}-{p}-{k}"), 0.1));
            }
        }
        frontier = vec![next[0], next[1]];
    }
    let nodes: Vec<PromptNode> = tree.nodes().to_vec();
    let picks = sample_prompts_by_depth(&nodes, 9, 4);
    assert_eq!(picks.len(), 9);
    let unique: std::collections::HashSet<_> = picks.iter().collect();
    assert_eq!(unique.len(), 9);
    let depths: std::collections::BTreeSet<u32> = picks
        .iter()
        .map(|p| nodes.iter().find(|n| &n.prompt == p).unwrap().depth)
        .collect();
    assert_eq!(depths.len(), 9);
    assert_eq!(sample_prompts_by_depth(&nodes[..3], 10, 0).len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_stay_inside_unit_interval(
        weights in prop::collection::vec(-50.0f64..50.0, 6),
        input in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let m = LinearModel { weights: weights[..5].to_vec(), bias: weights[5], c: 1.0 };
        let p = m.predict(&input[..5]);
        prop_assert!((0.0..=1.0).contains(&p));
        let mut mlp = Mlp::new(6, &[4, 3], 0.3, 0);
        let params: Vec<f64> = mlp.params().iter().zip(weights.iter().cycle()).map(|(a, b)| a + b / 50.0).collect();
        mlp.set_params(&params);
        let q = mlp.predict(&input);
        prop_assert!(q > 0.0 && q < 1.0);
        prop_assert_eq!(q, mlp.predict(&input));
    }

    #[test]
    fn flip_rule_matches_direct_metrics(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        use clauseopt::Label;
        let golds: Vec<Label> = bits.iter().map(|(g, _)| if *g { Label::Unfair } else { Label::Fair }).collect();
        let preds: Vec<Label> = bits.iter().map(|(_, p)| if *p { Label::Unfair } else { Label::Fair }).collect();
        let correct: Vec<f64> = golds.iter().zip(&preds).map(|(g, p)| (g == p) as u8 as f64).collect();
        prop_assert_eq!(
            flip_rule_score(&golds, &correct, 0.5).unwrap(),
            clauseopt::metrics::compute_metrics(&preds, &golds).unwrap()
        );
    }
}

