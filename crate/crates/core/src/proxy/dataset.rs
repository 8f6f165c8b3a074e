//! Correctness records: whether the backend classified a clause correctly
//! under a given prompt.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::BlockDesign;
use super::ProxyError;
use crate::corpus::{BatchKind, Clause, ClauseBatch};
use crate::embed::{one_hot, Embedder, FeatureVector};
use crate::gateway::{Gateway, MetaPromptSet};
use crate::ledger::Phase;
use crate::rng::SampleRng;
use crate::search::PromptNode;
use crate::Label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessRecord {
    pub prompt_id: String,
    pub clause_id: String,
    pub gold: Label,
    pub predicted: Label,
    pub correct: bool,
}

impl CorrectnessRecord {
    pub fn new(prompt_id: &str, clause_id: &str, gold: Label, predicted: Label) -> Self {
        Self {
            prompt_id: prompt_id.to_string(),
            clause_id: clause_id.to_string(),
            gold,
            predicted,
            correct: gold == predicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    pub seed: u64,
    pub built_at: String,
    pub batch_kind: BatchKind,
    /// Pairs dropped because the backend call or its parse failed.
    pub excluded: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseEntry {
    pub text: String,
    pub gold: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tables {
    prompts: BTreeMap<String, String>,
    clauses: BTreeMap<String, ClauseEntry>,
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessDataset {
    pub records: Vec<CorrectnessRecord>,
    pub prompts: BTreeMap<String, String>,
    pub clauses: BTreeMap<String, ClauseEntry>,
    pub provenance: Provenance,
}

pub fn prompt_id(index: usize) -> String {
    format!("p{index:04}")
}

impl CorrectnessDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<(), ProxyError> {
        let mut pairs = HashSet::new();
        for r in &self.records {
            if r.correct != (r.gold == r.predicted) {
                return Err(ProxyError::Integrity(format!(
                    "record ({}, {}) has inconsistent correctness bit",
                    r.prompt_id, r.clause_id
                )));
            }
            if !pairs.insert((r.prompt_id.as_str(), r.clause_id.as_str())) {
                return Err(ProxyError::Integrity(format!(
                    "duplicate record ({}, {})",
                    r.prompt_id, r.clause_id
                )));
            }
            if !self.prompts.contains_key(&r.prompt_id) {
                return Err(ProxyError::Integrity(format!("unknown prompt id {}", r.prompt_id)));
            }
            match self.clauses.get(&r.clause_id) {
                Some(c) if c.gold == r.gold => {}
                Some(_) => return Err(ProxyError::Integrity(format!("gold mismatch for {}", r.clause_id))),
                None => return Err(ProxyError::Integrity(format!("unknown clause id {}", r.clause_id))),
            }
        }
        Ok(())
    }

    pub fn correct_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.correct).count() as f64 / self.records.len() as f64
    }

    /// Writes `records.jsonl` and `tables.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ProxyError> {
        std::fs::create_dir_all(dir).map_err(|e| ProxyError::io(dir, e))?;
        let path = dir.join("records.jsonl");
        let mut out = BufWriter::new(File::create(&path).map_err(|e| ProxyError::io(&path, e))?);
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| ProxyError::Format(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| ProxyError::io(&path, e))?;
        }
        out.flush().map_err(|e| ProxyError::io(&path, e))?;
        let tables = Tables {
            prompts: self.prompts.clone(),
            clauses: self.clauses.clone(),
            provenance: self.provenance.clone(),
        };
        let path = dir.join("tables.json");
        let json = serde_json::to_string_pretty(&tables).map_err(|e| ProxyError::Format(e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| ProxyError::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self, ProxyError> {
        let path = dir.join("tables.json");
        let text = std::fs::read_to_string(&path).map_err(|e| ProxyError::io(&path, e))?;
        let tables: Tables = serde_json::from_str(&text).map_err(|e| ProxyError::Format(format!("{}: {e}", path.display())))?;
        let path = dir.join("records.jsonl");
        let reader = BufReader::new(File::open(&path).map_err(|e| ProxyError::io(&path, e))?);
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| ProxyError::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| ProxyError::Format(format!("{} line {}: {e}", path.display(), i + 1)))?,
            );
        }
        let ds = Self {
            records,
            prompts: tables.prompts,
            clauses: tables.clauses,
            provenance: tables.provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Feature matrix `[e(prompt) ‖ e(clause) ‖ onehot(gold)]` and correctness targets.
    pub fn features(&self, embedder: &Embedder) -> Result<(Array2<f64>, Array1<f64>), ProxyError> {
        let mut texts: Vec<&str> = self.prompts.values().map(String::as_str).collect();
        texts.extend(self.clauses.values().map(|c| c.text.as_str()));
        embedder.embed_many(&texts)?;
        let rows: Vec<FeatureVector> = self
            .records
            .par_iter()
            .map(|r| {
                let p = embedder.embed(&self.prompts[&r.prompt_id])?;
                let c = embedder.embed(&self.clauses[&r.clause_id].text)?;
                Ok(FeatureVector::assemble(&p.values, &c.values, r.gold))
            })
            .collect::<Result<_, ProxyError>>()?;
        let width = embedder.layout().len();
        let mut x = Array2::zeros((rows.len(), width));
        for (mut row, f) in x.rows_mut().into_iter().zip(&rows) {
            if f.values.len() != width {
                return Err(ProxyError::Integrity(format!(
                    "feature width {} differs from layout {width}",
                    f.values.len()
                )));
            }
            row.assign(&ndarray::ArrayView1::from(&f.values));
        }
        let y = self.records.iter().map(|r| if r.correct { 1.0 } else { 0.0 }).collect();
        Ok((x, y))
    }

    /// The same rows as [`features`](Self::features), factored into prompt,
    /// clause and label blocks so each distinct embedding is stored once.
    pub fn block_features(&self, embedder: &Embedder) -> Result<(BlockDesign, Array1<f64>), ProxyError> {
        let mut texts: Vec<&str> = self.prompts.values().map(String::as_str).collect();
        texts.extend(self.clauses.values().map(|c| c.text.as_str()));
        embedder.embed_many(&texts)?;
        let layout = embedder.layout();
        let table = |ids: Vec<(&String, &str)>, width: usize| -> Result<(BTreeMap<String, usize>, Array2<f64>), ProxyError> {
            let mut block = Array2::zeros((ids.len(), width));
            let mut rows = BTreeMap::new();
            for (i, (id, text)) in ids.into_iter().enumerate() {
                let e = embedder.embed(text)?;
                if e.values.len() != width {
                    return Err(ProxyError::Integrity(format!("embedding width {} differs from layout {width}", e.values.len())));
                }
                block.row_mut(i).assign(&e.values.iter().map(|&v| v as f64).collect::<Array1<f64>>());
                rows.insert(id.clone(), i);
            }
            Ok((rows, block))
        };
        let (prompt_rows, prompts) = table(self.prompts.iter().map(|(k, v)| (k, v.as_str())).collect(), layout.prompt_dim)?;
        let (clause_rows, clauses) = table(self.clauses.iter().map(|(k, c)| (k, c.text.as_str())).collect(), layout.clause_dim)?;
        let labels = Array2::from(vec![one_hot(Label::Fair), one_hot(Label::Unfair)]);
        let mut index: Vec<Vec<usize>> = (0..3).map(|_| Vec::with_capacity(self.records.len())).collect();
        for r in &self.records {
            index[0].push(prompt_rows[&r.prompt_id]);
            index[1].push(clause_rows[&r.clause_id]);
            index[2].push(if r.gold == Label::Fair { 0 } else { 1 });
        }
        let design = BlockDesign::new(vec![prompts, clauses, labels], index)?;
        let y = self.records.iter().map(|r| if r.correct { 1.0 } else { 0.0 }).collect();
        Ok((design, y))
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub seed: u64,
    /// Overrides the build timestamp (useful for reproducible files).
    pub built_at: Option<String>,
}

/// Classify every clause under every prompt once; failed calls are excluded.
pub fn build_correctness_dataset(
    prompts: &[String],
    clauses: &ClauseBatch,
    gateway: &Gateway,
    meta: &MetaPromptSet,
    options: &BuildOptions,
) -> Result<CorrectnessDataset, ProxyError> {
    if prompts.is_empty() || clauses.is_empty() {
        return Err(ProxyError::Config("need at least one prompt and one clause".into()));
    }
    let unique: HashSet<&String> = prompts.iter().collect();
    if unique.len() != prompts.len() {
        return Err(ProxyError::Config("prompts must be unique".into()));
    }
    if clauses.kind == BatchKind::CorrectnessSet {
        let (fair, unfair) = (clauses.count(Label::Fair), clauses.count(Label::Unfair));
        if fair.abs_diff(unfair) > 1 {
            return Err(ProxyError::Config(format!(
                "correctness set must be balanced, got {fair} fair / {unfair} unfair"
            )));
        }
    }
    let mut records = Vec::with_capacity(prompts.len() * clauses.len());
    let mut excluded = 0;
    let mut table = BTreeMap::new();
    for (i, prompt) in prompts.iter().enumerate() {
        let id = prompt_id(i);
        table.insert(id.clone(), prompt.clone());
        let predictions = gateway.classify_all(meta, prompt, &clauses.clauses, Phase::CorrectnessBuild);
        for (clause, prediction) in clauses.clauses.iter().zip(predictions) {
            match prediction {
                Ok(label) => records.push(CorrectnessRecord::new(&id, &clause.id, clause.fairness, label)),
                Err(e) => {
                    log::warn!("excluding ({id}, {}): {e}", clause.id);
                    excluded += 1;
                }
            }
        }
    }
    let clause_table = clauses
        .clauses
        .iter()
        .map(|c: &Clause| {
            (
                c.id.clone(),
                ClauseEntry {
                    text: c.text.clone(),
                    gold: c.fairness,
                },
            )
        })
        .collect();
    let ds = CorrectnessDataset {
        records,
        prompts: table,
        clauses: clause_table,
        provenance: Provenance {
            backend: gateway.backend().id(),
            seed: options.seed,
            built_at: options
                .built_at
                .clone()
                .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
            batch_kind: clauses.kind,
            excluded,
        },
    };
    ds.validate()?;
    Ok(ds)
}

/// Draw up to `n` distinct prompts from a search tree, spreading picks over
/// equal-width depth bands. Returns fewer when the tree holds fewer prompts.
pub fn sample_prompts_by_depth(nodes: &[PromptNode], n: usize, seed: u64) -> Vec<String> {
    let mut seen = HashSet::new();
    let pool: Vec<&PromptNode> = nodes.iter().filter(|node| seen.insert(node.prompt.as_str())).collect();
    if pool.len() <= n {
        return pool.iter().map(|node| node.prompt.clone()).collect();
    }
    let max_depth = pool.iter().map(|node| node.depth).max().unwrap_or(0) as usize;
    let band_count = n.min(max_depth + 1).max(1);
    let width = (max_depth + 1) as f64 / band_count as f64;
    let mut bands: Vec<Vec<&PromptNode>> = vec![Vec::new(); band_count];
    for node in &pool {
        let b = ((node.depth as f64 / width) as usize).min(band_count - 1);
        bands[b].push(node);
    }
    let mut rng = SampleRng::new(seed);
    for band in &mut bands {
        rng.shuffle(band);
    }
    let mut chosen = Vec::with_capacity(n);
    let mut round = 0;
    while chosen.len() < n {
        let mut progressed = false;
        for band in &bands {
            if chosen.len() == n {
                break;
            }
            if let Some(node) = band.get(round) {
                chosen.push(node.prompt.clone());
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
        round += 1;
    }
    chosen
}
