//! Plain-text tables over finished run directories.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clauseopt::ledger::{expansion_cost, LedgerSnapshot, META_CALLS_PER_CANDIDATE};
use clauseopt::metrics::MetricReport;
use clauseopt::search::SearchResult;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub method: String,
    pub prompt: String,
    pub report: MetricReport,
}

/// Held-out scoring of the initial and best prompts, billed to its own ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub split: String,
    pub rows: Vec<EvaluationRow>,
    pub ledger: LedgerSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerFile {
    pub backend: String,
    pub remote_backend: bool,
    pub totals: LedgerSnapshot,
}

pub struct RunArtifacts {
    pub dir: PathBuf,
    pub result: SearchResult,
    pub evaluation: Option<Evaluation>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl RunArtifacts {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let result = read_json(&dir.join("result.json"))?;
        let eval_path = dir.join("evaluation.json");
        let evaluation = if eval_path.exists() {
            Some(read_json(&eval_path)?)
        } else {
            None
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            result,
            evaluation,
        })
    }
}

pub fn method_label(result: &SearchResult) -> String {
    let name = match result.strategy.as_str() {
        "mcts" => "MCTS",
        "greedy" => "Greedy",
        _ => "Beam",
    };
    format!("{name} ({})", result.config.reward_kind.as_str())
}

/// Left-aligned first column, right-aligned rest.
fn table(title: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut out = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                out += &format!("{cell:<w$}");
            } else {
                out += &format!("  {cell:>w$}");
            }
        }
        out.trim_end().to_string() + "\n"
    };
    let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1));
    let mut out = format!("{title}\n{rule}\n");
    out += &line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    out += &format!("{rule}\n");
    for row in rows {
        out += &line(row);
    }
    out += &format!("{rule}\n");
    out
}

pub fn render(runs: &[RunArtifacts]) -> String {
    let mut out = String::new();

    let mut eval_rows: Vec<Vec<String>> = Vec::new();
    let mut seen_prompts: Vec<&str> = Vec::new();
    let mut split = None;
    for run in runs {
        let Some(eval) = &run.evaluation else { continue };
        split.get_or_insert(eval.split.clone());
        for row in &eval.rows {
            let initial = row.method == "Initial prompt";
            if initial && seen_prompts.contains(&row.prompt.as_str()) {
                continue;
            }
            if initial {
                seen_prompts.push(&row.prompt);
            }
            eval_rows.push(vec![
                row.method.clone(),
                format!("{:.4}", row.report.accuracy),
                format!("{:.4}", row.report.macro_f1),
            ]);
        }
    }
    if let Some(split) = split {
        out += &table(
            &format!("Classification on the {split} split"),
            &["Method", "Accuracy", "Macro F1"],
            &eval_rows,
        );
        out += "\n";
    }

    let search_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let s = &r.result;
            vec![
                method_label(s),
                format!("{:.4}", s.best_reward),
                s.best_depth.to_string(),
                s.iterations_run.to_string(),
                s.tree.len().to_string(),
                s.stop_reason.as_str().to_string(),
            ]
        })
        .collect();
    out += &table(
        "Search",
        &["Method", "Best reward", "Depth", "Iterations", "Nodes", "Stop"],
        &search_rows,
    );
    out += "\n";

    let cost_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let s = &r.result;
            let c = &s.config;
            let proxy = c.reward_kind.is_call_free();
            let per_expansion = expansion_cost(
                c.gradient_set_size as u64,
                META_CALLS_PER_CANDIDATE,
                c.score_set_size as u64,
                c.candidates_per_expansion as u64,
                proxy,
            );
            vec![
                method_label(s),
                if proxy { "-".to_string() } else { c.score_set_size.to_string() },
                per_expansion.to_string(),
                s.ledger.expansions.to_string(),
                s.ledger.model_total().to_string(),
                s.ledger.actual_total().to_string(),
            ]
        })
        .collect();
    out += &table(
        "LLM calls",
        &["Method", "Score set", "Calls/expansion", "Expansions", "Model calls", "Actual calls"],
        &cost_rows,
    );

    for r in runs {
        out += &format!("\n{}: {}\n  best prompt: {}\n", method_label(&r.result), r.dir.display(), r.result.best_prompt);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_line_up() {
        let t = table("T", &["Method", "Accuracy"], &[vec!["a".into(), "0.5000".into()], vec!["longer".into(), "1.0000".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[2], "Method  Accuracy");
        assert_eq!(lines[4], "a         0.5000");
        assert_eq!(lines[5], "longer    1.0000");
    }
}
