//! Clause corpora: data model, file formats and the stratified batch samplers.

mod io;
mod sampling;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::label::Label;
pub use io::{load_corpus, load_split_files, read_clauses, write_corpus, CorpusFormat};
pub use sampling::{
    sample_correctness_set, sample_gradient_set, sample_gradient_set_sized, sample_holdout_set,
    sample_score_set, stratified_counts, GRADIENT_SET_SIZE, SCORE_SET_SIZE,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("cannot sample {needed} {stratum} clauses: only {available} available")]
    Sampling {
        stratum: String,
        needed: usize,
        available: usize,
    },
    #[error("unknown corpus format: {0}")]
    UnknownFormat(String),
}

/// One terms-of-service sentence with its gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub id: String,
    pub text: String,
    pub fairness: Label,
    /// Unfairness categories. Empty for fair clauses.
    #[serde(default)]
    pub categories: BTreeSet<String>,
}

impl Clause {
    pub fn new(id: impl Into<String>, text: impl Into<String>, fairness: Label) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            fairness,
            categories: BTreeSet::new(),
        }
    }

    pub fn with_categories<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.categories = tags.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty clause id".into());
        }
        if self.text.trim().is_empty() {
            return Err(format!("clause {}: empty text", self.id));
        }
        if !self.categories.is_empty() && self.fairness == Label::Fair {
            return Err(format!("clause {}: categories on a fair clause", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// The nine unfairness categories, in the order the gradient-set sampler fills them.
pub const DEFAULT_CATEGORIES: [&str; 9] = [
    "arbitration",
    "content-removal",
    "jurisdiction",
    "unilateral-change",
    "choice-of-law",
    "limitation-of-liability",
    "unilateral-termination",
    "contract-by-using",
    "privacy-included",
];

/// Ordered list of category tags used to stratify the unfair share of a batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryScheme {
    pub tags: Vec<String>,
}

impl Default for CategoryScheme {
    fn default() -> Self {
        Self {
            tags: DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    splits: BTreeMap<Split, Vec<Clause>>,
    category_index: BTreeMap<String, Vec<String>>,
    scheme: CategoryScheme,
}

impl Corpus {
    /// Build a corpus, checking id uniqueness and per-clause invariants.
    pub fn new(splits: BTreeMap<Split, Vec<Clause>>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        let mut category_index: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for clauses in splits.values() {
            for clause in clauses {
                clause.validate().map_err(CorpusError::Integrity)?;
                if !seen.insert(clause.id.as_str()) {
                    return Err(CorpusError::Integrity(format!("duplicate clause id {:?}", clause.id)));
                }
                for tag in &clause.categories {
                    category_index.entry(tag.clone()).or_default().push(clause.id.clone());
                }
            }
        }
        Ok(Self {
            splits,
            category_index,
            scheme: CategoryScheme::default(),
        })
    }

    pub fn with_scheme(mut self, scheme: CategoryScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn scheme(&self) -> &CategoryScheme {
        &self.scheme
    }

    pub fn split(&self, split: Split) -> &[Clause] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn splits(&self) -> &BTreeMap<Split, Vec<Clause>> {
        &self.splits
    }

    pub fn category_index(&self) -> &BTreeMap<String, Vec<String>> {
        &self.category_index
    }

    pub fn len(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clauses(&self) -> impl Iterator<Item = (Split, &Clause)> {
        self.splits
            .iter()
            .flat_map(|(s, cs)| cs.iter().map(move |c| (*s, c)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchKind {
    GradientSet,
    ScoreSet,
    CorrectnessSet,
    /// Unbalanced held-out clauses for validating a correctness classifier.
    CorrectnessValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseBatch {
    pub clauses: Vec<Clause>,
    pub seed: u64,
    pub kind: BatchKind,
}

impl ClauseBatch {
    /// Wrap an explicit clause list, rejecting duplicate ids.
    pub fn new(clauses: Vec<Clause>, seed: u64, kind: BatchKind) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for c in &clauses {
            if !seen.insert(c.id.as_str()) {
                return Err(CorpusError::Integrity(format!("duplicate clause id {:?} in batch", c.id)));
            }
        }
        Ok(Self { clauses, seed, kind })
    }

    /// A whole split as a score set (used when a proxy scores the full validation split).
    pub fn from_split(corpus: &Corpus, split: Split) -> Self {
        Self {
            clauses: corpus.split(split).to_vec(),
            seed: 0,
            kind: BatchKind::ScoreSet,
        }
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn golds(&self) -> Vec<Label> {
        self.clauses.iter().map(|c| c.fairness).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.clauses.iter().filter(|c| c.fairness == label).count()
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.clauses.iter().map(|c| c.id.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> BTreeMap<Split, Vec<Clause>> {
        let mut m = BTreeMap::new();
        m.insert(
            Split::Train,
            vec![
                Clause::new("a", "You can leave any time.", Label::Fair),
                Clause::new("b", "We answer support tickets.", Label::Fair),
                Clause::new("c", "Disputes go to binding arbitration.", Label::Unfair)
                    .with_categories(["arbitration"]),
            ],
        );
        m
    }

    #[test]
    fn builds_category_index() {
        let corpus = Corpus::new(three()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.category_index().len(), 1);
        assert_eq!(corpus.category_index()["arbitration"], vec!["c".to_string()]);
    }

    #[test]
    fn rejects_duplicate_ids_across_splits() {
        let mut m = three();
        m.insert(Split::Test, vec![Clause::new("a", "dup", Label::Fair)]);
        assert!(matches!(Corpus::new(m), Err(CorpusError::Integrity(_))));
    }

    #[test]
    fn rejects_categorized_fair_clause() {
        let mut m = BTreeMap::new();
        m.insert(
            Split::Train,
            vec![Clause::new("x", "text", Label::Fair).with_categories(["arbitration"])],
        );
        assert!(Corpus::new(m).is_err());
    }

    #[test]
    fn batch_rejects_duplicates() {
        let c = Clause::new("a", "t", Label::Fair);
        assert!(ClauseBatch::new(vec![c.clone(), c], 0, BatchKind::ScoreSet).is_err());
    }
}
