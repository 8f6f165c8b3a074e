//! Stratified batch samplers.
//!
//! Gradient and score sets keep a 55:45 fair:unfair ratio (`fair = round(0.55 n)`,
//! halves rounded up). The unfair share is filled one slot at a time, slot `i`
//! taking a clause tagged with category `i mod 9` of the corpus scheme, so a
//! 20-clause batch holds one clause per category. A slot whose category has no
//! remaining clauses falls back to any unused unfair clause.
//!
//! Draw order for a given seed: fair indices (partial Fisher-Yates over the
//! fair pool in corpus order), then the category slots, then the fallback
//! slots, then one shuffle of the assembled batch.

use std::collections::HashSet;

use super::{BatchKind, Clause, ClauseBatch, Corpus, CorpusError, Split};
use crate::label::Label;
use crate::rng::SampleRng;

pub const GRADIENT_SET_SIZE: usize = 20;
pub const SCORE_SET_SIZE: usize = 200;

/// `(fair, unfair)` counts for an `n`-clause 55:45 batch.
pub fn stratified_counts(n: usize) -> (usize, usize) {
    let fair = (n * 11 + 10) / 20;
    (fair, n - fair)
}

fn insufficient(stratum: &str, needed: usize, available: usize) -> CorpusError {
    CorpusError::Sampling {
        stratum: stratum.to_string(),
        needed,
        available,
    }
}

fn stratified(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<Clause>, CorpusError> {
    let train = corpus.split(Split::Train);
    let (fair_n, unfair_n) = stratified_counts(n);
    let fair: Vec<&Clause> = train.iter().filter(|c| c.fairness == Label::Fair).collect();
    let unfair: Vec<&Clause> = train.iter().filter(|c| c.fairness == Label::Unfair).collect();
    if fair.len() < fair_n {
        return Err(insufficient("fair", fair_n, fair.len()));
    }
    if unfair.len() < unfair_n {
        return Err(insufficient("unfair", unfair_n, unfair.len()));
    }

    let mut rng = SampleRng::new(seed);
    let mut batch: Vec<Clause> = rng
        .choose_indices(fair.len(), fair_n)
        .into_iter()
        .map(|i| fair[i].clone())
        .collect();

    let tags = &corpus.scheme().tags;
    let mut used = vec![false; unfair.len()];
    let mut fallback_slots = 0;
    for slot in 0..unfair_n {
        let candidates: Vec<usize> = if tags.is_empty() {
            Vec::new()
        } else {
            let tag = &tags[slot % tags.len()];
            (0..unfair.len())
                .filter(|&i| !used[i] && unfair[i].categories.contains(tag))
                .collect()
        };
        if candidates.is_empty() {
            fallback_slots += 1;
            continue;
        }
        let pick = candidates[rng.below(candidates.len())];
        used[pick] = true;
        batch.push(unfair[pick].clone());
    }
    for _ in 0..fallback_slots {
        let free: Vec<usize> = (0..unfair.len()).filter(|&i| !used[i]).collect();
        let pick = free[rng.below(free.len())];
        used[pick] = true;
        batch.push(unfair[pick].clone());
    }
    rng.shuffle(&mut batch);
    Ok(batch)
}

/// The 20-clause gradient set for one expansion.
pub fn sample_gradient_set(corpus: &Corpus, seed: u64) -> Result<ClauseBatch, CorpusError> {
    sample_gradient_set_sized(corpus, seed, GRADIENT_SET_SIZE)
}

pub fn sample_gradient_set_sized(corpus: &Corpus, seed: u64, n: usize) -> Result<ClauseBatch, CorpusError> {
    Ok(ClauseBatch {
        clauses: stratified(corpus, n, seed)?,
        seed,
        kind: BatchKind::GradientSet,
    })
}

/// The fixed score set, drawn once per run with the gradient-set ratio.
pub fn sample_score_set(corpus: &Corpus, seed: u64, n: usize) -> Result<ClauseBatch, CorpusError> {
    Ok(ClauseBatch {
        clauses: stratified(corpus, n, seed)?,
        seed,
        kind: BatchKind::ScoreSet,
    })
}

/// Balanced 50:50 training clauses for correctness-dataset construction.
pub fn sample_correctness_set(corpus: &Corpus, seed: u64, n: usize) -> Result<ClauseBatch, CorpusError> {
    let train = corpus.split(Split::Train);
    let fair: Vec<&Clause> = train.iter().filter(|c| c.fairness == Label::Fair).collect();
    let unfair: Vec<&Clause> = train.iter().filter(|c| c.fairness == Label::Unfair).collect();
    let fair_n = n / 2;
    let unfair_n = n - fair_n;
    if fair.len() < fair_n {
        return Err(insufficient("fair", fair_n, fair.len()));
    }
    if unfair.len() < unfair_n {
        return Err(insufficient("unfair", unfair_n, unfair.len()));
    }
    let mut rng = SampleRng::new(seed);
    let mut clauses: Vec<Clause> = rng
        .choose_indices(fair.len(), fair_n)
        .into_iter()
        .map(|i| fair[i].clone())
        .collect();
    clauses.extend(
        rng.choose_indices(unfair.len(), unfair_n)
            .into_iter()
            .map(|i| unfair[i].clone()),
    );
    rng.shuffle(&mut clauses);
    Ok(ClauseBatch {
        clauses,
        seed,
        kind: BatchKind::CorrectnessSet,
    })
}

/// Uniform draw without label balancing from `split`, skipping `exclude`d ids.
pub fn sample_holdout_set(
    corpus: &Corpus,
    split: Split,
    seed: u64,
    n: usize,
    exclude: &HashSet<String>,
) -> Result<ClauseBatch, CorpusError> {
    let pool: Vec<&Clause> = corpus
        .split(split)
        .iter()
        .filter(|c| !exclude.contains(&c.id))
        .collect();
    if pool.len() < n {
        return Err(insufficient(&format!("unseen {split}"), n, pool.len()));
    }
    let mut rng = SampleRng::new(seed);
    let clauses = rng
        .choose_indices(pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    Ok(ClauseBatch {
        clauses,
        seed,
        kind: BatchKind::CorrectnessValidation,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::corpus::synthetic;

    fn corpus() -> Corpus {
        synthetic::generate(&synthetic::SyntheticSpec::default())
    }

    #[test]
    fn counts() {
        assert_eq!(stratified_counts(20), (11, 9));
        assert_eq!(stratified_counts(200), (110, 90));
    }

    #[test]
    fn gradient_set_is_11_9_with_one_clause_per_category() {
        let c = corpus();
        let batch = sample_gradient_set(&c, 7).unwrap();
        assert_eq!(batch.len(), 20);
        assert_eq!(batch.count(Label::Fair), 11);
        assert_eq!(batch.count(Label::Unfair), 9);
        assert_eq!(batch.ids().len(), 20);
        for tag in &c.scheme().tags {
            assert!(
                batch.clauses.iter().any(|cl| cl.categories.contains(tag)),
                "no clause for {tag}"
            );
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = corpus();
        assert_eq!(sample_gradient_set(&c, 7).unwrap(), sample_gradient_set(&c, 7).unwrap());
        assert_ne!(sample_gradient_set(&c, 7).unwrap(), sample_gradient_set(&c, 8).unwrap());
        assert_eq!(sample_score_set(&c, 3, 200).unwrap(), sample_score_set(&c, 3, 200).unwrap());
    }

    #[test]
    fn score_set_200() {
        let batch = sample_score_set(&corpus(), 1, 200).unwrap();
        assert_eq!(batch.count(Label::Fair), 110);
        assert_eq!(batch.count(Label::Unfair), 90);
        assert_eq!(batch.kind, BatchKind::ScoreSet);
    }

    #[test]
    fn no_unfair_clauses_is_a_sampling_error() {
        let mut splits = BTreeMap::new();
        splits.insert(
            Split::Train,
            (0..30)
                .map(|i| Clause::new(format!("f{i}"), "fair text", Label::Fair))
                .collect(),
        );
        let c = Corpus::new(splits).unwrap();
        match sample_gradient_set(&c, 1) {
            Err(CorpusError::Sampling { stratum, .. }) => assert_eq!(stratum, "unfair"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_categories_fall_back() {
        let mut splits = BTreeMap::new();
        let mut clauses: Vec<Clause> = (0..11)
            .map(|i| Clause::new(format!("f{i}"), "fair text", Label::Fair))
            .collect();
        clauses.extend((0..9).map(|i| Clause::new(format!("u{i}"), "unfair text", Label::Unfair)));
        splits.insert(Split::Train, clauses);
        let c = Corpus::new(splits).unwrap();
        let batch = sample_gradient_set(&c, 5).unwrap();
        assert_eq!(batch.count(Label::Unfair), 9);
    }

    #[test]
    fn correctness_set_balanced() {
        let batch = sample_correctness_set(&corpus(), 9, 100).unwrap();
        assert_eq!(batch.count(Label::Fair), 50);
        assert_eq!(batch.count(Label::Unfair), 50);
    }

    #[test]
    fn holdout_excludes_seen() {
        let c = corpus();
        let seen = sample_correctness_set(&c, 9, 100).unwrap();
        let exclude: HashSet<String> = seen.clauses.iter().map(|c| c.id.clone()).collect();
        let holdout = sample_holdout_set(&c, Split::Train, 10, 50, &exclude).unwrap();
        assert!(holdout.clauses.iter().all(|c| !exclude.contains(&c.id)));
        assert_eq!(holdout.kind, BatchKind::CorrectnessValidation);
    }
}
