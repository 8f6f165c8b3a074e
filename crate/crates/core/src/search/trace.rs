//! Ordered search event log, JSONL persistence and tree replay.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tree::{NodeId, SearchTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildRecord {
    pub id: NodeId,
    pub prompt: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceKind {
    Start {
        strategy: String,
        sampling_seed: u64,
        rng_seed: u64,
        reward_kind: String,
        backend: String,
    },
    Root {
        prompt: String,
        reward: f64,
    },
    Select {
        path: Vec<NodeId>,
    },
    Expand {
        node: NodeId,
        expansion: u64,
        gradient_seed: u64,
        gradient: Option<String>,
        children: Vec<ChildRecord>,
        terminal: bool,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    Simulate {
        start: NodeId,
        rollout: Vec<NodeId>,
        reward: f64,
    },
    Backprop {
        path: Vec<NodeId>,
        reward: f64,
        global_best: f64,
        stale: u32,
    },
    Beam {
        round: u32,
        members: Vec<NodeId>,
        global_best: f64,
        stale: u32,
    },
    Stop {
        reason: String,
        iterations: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: u64,
    #[serde(flatten)]
    pub kind: TraceKind,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot replay: {0}")]
    Replay(String),
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, kind: TraceKind) {
        let index = self.events.len() as u64;
        self.events.push(TraceEvent { index, kind });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), TraceError> {
        let mut out = BufWriter::new(File::create(path)?);
        for e in &self.events {
            serde_json::to_writer(&mut out, e).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, TraceError> {
        let reader = BufReader::new(File::open(path)?);
        let mut events = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event: TraceEvent = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if event.index != events.len() as u64 {
                return Err(TraceError::Parse {
                    line: i + 1,
                    message: format!("expected index {}, found {}", events.len(), event.index),
                });
            }
            events.push(event);
        }
        Ok(Self { events })
    }

    /// Rebuild the search tree by re-applying root, expand and backprop events.
    pub fn replay(&self) -> Result<SearchTree, TraceError> {
        let mut tree: Option<SearchTree> = None;
        for e in &self.events {
            match &e.kind {
                TraceKind::Root { prompt, reward } => {
                    if tree.is_some() {
                        return Err(TraceError::Replay("second root event".into()));
                    }
                    tree = Some(SearchTree::new(prompt.clone(), *reward));
                }
                TraceKind::Expand {
                    node,
                    children,
                    terminal,
                    ..
                } => {
                    let t = tree.as_mut().ok_or(TraceError::Replay("expand before root".into()))?;
                    if *node >= t.len() {
                        return Err(TraceError::Replay(format!("unknown node {node}")));
                    }
                    for c in children {
                        let id = t.add_child(*node, c.prompt.clone(), c.reward);
                        if id != c.id {
                            return Err(TraceError::Replay(format!("child id {} replayed as {id}", c.id)));
                        }
                    }
                    if *terminal {
                        t.mark_terminal(*node);
                    }
                }
                TraceKind::Backprop { path, reward, .. } => {
                    let t = tree.as_mut().ok_or(TraceError::Replay("backprop before root".into()))?;
                    if path.iter().any(|&id| id >= t.len()) {
                        return Err(TraceError::Replay("backprop path references unknown node".into()));
                    }
                    t.backpropagate(path, *reward);
                }
                _ => {}
            }
        }
        tree.ok_or(TraceError::Replay("no root event".into()))
    }
}

impl From<Vec<TraceEvent>> for Trace {
    fn from(events: Vec<TraceEvent>) -> Self {
        Self { events }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_replay() {
        let mut t = Trace::new();
        t.push(TraceKind::Root {
            prompt: "r".into(),
            reward: 0.25,
        });
        t.push(TraceKind::Expand {
            node: 0,
            expansion: 0,
            gradient_seed: 7,
            gradient: Some("g".into()),
            children: vec![
                ChildRecord { id: 1, prompt: "a".into(), reward: 0.5 },
                ChildRecord { id: 2, prompt: "b".into(), reward: 0.1 },
            ],
            terminal: false,
            warnings: vec![],
        });
        t.push(TraceKind::Backprop {
            path: vec![0, 1],
            reward: 0.5,
            global_best: 0.5,
            stale: 0,
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        t.write_jsonl(&path).unwrap();
        let back = Trace::read_jsonl(&path).unwrap();
        assert_eq!(back, t);
        let tree = back.replay().unwrap();
        assert_eq!(tree.len(), 3);
        assert_eq!(tree.root().visits, 2);
        assert!((tree.node(1).q_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn replay_needs_root() {
        let mut t = Trace::new();
        t.push(TraceKind::Select { path: vec![0] });
        assert!(t.replay().is_err());
    }
}
