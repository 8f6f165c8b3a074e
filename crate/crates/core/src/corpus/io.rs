//! TSV and JSONL corpus files.
//!
//! TSV: a header line naming the columns `id`, `split`, `label`, `categories`,
//! `text` (any order; `split` and `categories` optional), one clause per line.
//! Categories are joined with `;`. Inside `text`, tab, newline, carriage
//! return and backslash are written as `\t`, `\n`, `\r` and `\\`.
//!
//! JSONL: one object per line with the same field names; `categories` is an
//! array of strings. Blank lines are skipped in both formats.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Clause, Corpus, CorpusError, Split};
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => Ok(CorpusFormat::Tsv),
            Some("jsonl") => Ok(CorpusFormat::Jsonl),
            other => Err(CorpusError::UnknownFormat(format!("{other:?}"))),
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// A parsed record; the split may be missing in per-split files.
type Record = (Option<Split>, Clause);

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    label: i64,
    #[serde(default)]
    categories: Vec<String>,
    text: String,
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_label(raw: &str, line: usize) -> Result<Label, CorpusError> {
    let v: i64 = raw.trim().parse().map_err(|_| CorpusError::Parse {
        line,
        message: format!("label {raw:?} is not an integer"),
    })?;
    Label::from_int(v).ok_or_else(|| CorpusError::Parse {
        line,
        message: format!("label out of range: {v}"),
    })
}

fn parse_split(raw: &str, line: usize) -> Result<Split, CorpusError> {
    raw.parse().map_err(|message| CorpusError::Parse { line, message })
}

fn checked(clause: Clause, line: usize) -> Result<Clause, CorpusError> {
    clause
        .validate()
        .map_err(|message| CorpusError::Parse { line, message })?;
    Ok(clause)
}

fn unescape(field: &str, line: usize) -> Result<String, CorpusError> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            other => {
                return Err(CorpusError::Parse {
                    line,
                    message: format!("bad escape sequence \\{}", other.map(String::from).unwrap_or_default()),
                })
            }
        }
    }
    Ok(out)
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out
}

fn parse_tsv(content: &str) -> Result<Vec<Record>, CorpusError> {
    let mut lines = content.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(CorpusError::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let col = |name: &str| columns.iter().position(|c| *c == name);
    let required = |name: &str| {
        col(name).ok_or_else(|| CorpusError::Parse {
            line: 1,
            message: format!("header lacks column {name:?}"),
        })
    };
    let (id_col, label_col, text_col) = (required("id")?, required("label")?, required("text")?);
    let (split_col, cat_col) = (col("split"), col("categories"));

    let mut records = Vec::new();
    for (line, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(CorpusError::Parse {
                line,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        let split = split_col
            .map(|i| fields[i])
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_split(s, line))
            .transpose()?;
        let categories: BTreeSet<String> = cat_col
            .map(|i| {
                fields[i]
                    .split(';')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        let clause = Clause {
            id: fields[id_col].trim().to_string(),
            text: unescape(fields[text_col], line)?,
            fairness: parse_label(fields[label_col], line)?,
            categories,
        };
        records.push((split, checked(clause, line)?));
    }
    Ok(records)
}

fn parse_jsonl(content: &str) -> Result<Vec<Record>, CorpusError> {
    let mut records = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        let split = rec.split.as_deref().map(|s| parse_split(s, line)).transpose()?;
        let clause = Clause {
            id: rec.id,
            text: rec.text,
            fairness: Label::from_int(rec.label).ok_or_else(|| CorpusError::Parse {
                line,
                message: format!("label out of range: {}", rec.label),
            })?,
            categories: rec.categories.into_iter().collect(),
        };
        records.push((split, checked(clause, line)?));
    }
    Ok(records)
}

/// Parse every record of a corpus file, with the split column if present.
pub fn read_clauses(path: &Path, format: CorpusFormat) -> Result<Vec<(Option<Split>, Clause)>, CorpusError> {
    let content = read_file(path)?;
    match format {
        CorpusFormat::Tsv => parse_tsv(&content),
        CorpusFormat::Jsonl => parse_jsonl(&content),
    }
}

/// Load a single corpus file whose records carry their split.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let mut splits: BTreeMap<Split, Vec<Clause>> = BTreeMap::new();
    for (idx, (split, clause)) in read_clauses(path, format)?.into_iter().enumerate() {
        let split = split.ok_or_else(|| {
            CorpusError::Integrity(format!("record {} ({}) has no split", idx + 1, clause.id))
        })?;
        splits.entry(split).or_default().push(clause);
    }
    Corpus::new(splits)
}

/// Load one file per split. A split column, when present, must agree with the file.
pub fn load_split_files(files: &[(Split, &Path)], format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let mut splits: BTreeMap<Split, Vec<Clause>> = BTreeMap::new();
    for (split, path) in files {
        for (declared, clause) in read_clauses(path, format)? {
            if let Some(declared) = declared {
                if declared != *split {
                    return Err(CorpusError::Integrity(format!(
                        "{}: clause {} declares split {declared} but the file is the {split} split",
                        path.display(),
                        clause.id
                    )));
                }
            }
            splits.entry(*split).or_default().push(clause);
        }
    }
    Corpus::new(splits)
}

pub fn write_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    match format {
        CorpusFormat::Tsv => {
            writeln!(out, "id\tsplit\tlabel\tcategories\ttext").map_err(io_err)?;
            for (split, c) in corpus.clauses() {
                let cats: Vec<&str> = c.categories.iter().map(String::as_str).collect();
                writeln!(out, "{}\t{}\t{}\t{}\t{}", c.id, split, c.fairness, cats.join(";"), escape(&c.text))
                    .map_err(io_err)?;
            }
        }
        CorpusFormat::Jsonl => {
            for (split, c) in corpus.clauses() {
                let rec = JsonRecord {
                    id: c.id.clone(),
                    split: Some(split.to_string()),
                    label: c.fairness as i64,
                    categories: c.categories.iter().cloned().collect(),
                    text: c.text.clone(),
                };
                let line = serde_json::to_string(&rec).expect("record serializes");
                writeln!(out, "{line}").map_err(io_err)?;
            }
        }
    }
    fs::write(path, out).map_err(io_err)
}
