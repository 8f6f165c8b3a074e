//! Arena-backed search tree with UCT selection and mean-reward backpropagation.

use serde::{Deserialize, Serialize};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptNode {
    pub id: NodeId,
    pub prompt: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub visits: u64,
    pub reward_sum: f64,
    pub q_value: f64,
    pub depth: u32,
    /// Score-set reward from this node's own evaluation.
    pub last_reward: f64,
    /// Expansion found nothing to improve; the node will not be expanded again.
    #[serde(default)]
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    nodes: Vec<PromptNode>,
}

/// UCT value of `child` under a parent with `parent_visits` visits.
/// Unvisited children are infinitely attractive.
pub fn uct(child: &PromptNode, parent_visits: u64, exploration_weight: f64) -> f64 {
    if child.visits == 0 {
        return f64::INFINITY;
    }
    let n = parent_visits.max(1) as f64;
    child.q_value + exploration_weight * (n.ln() / child.visits as f64).sqrt()
}

impl SearchTree {
    /// A tree holding only the evaluated root prompt (visits 1).
    pub fn new(prompt: impl Into<String>, reward: f64) -> Self {
        Self {
            nodes: vec![PromptNode {
                id: 0,
                prompt: prompt.into(),
                parent: None,
                children: Vec::new(),
                visits: 1,
                reward_sum: reward,
                q_value: reward,
                depth: 0,
                last_reward: reward,
                terminal: false,
            }],
        }
    }

    pub fn root(&self) -> &PromptNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &PromptNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[PromptNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn into_nodes(self) -> Vec<PromptNode> {
        self.nodes
    }

    pub fn mark_terminal(&mut self, id: NodeId) {
        self.nodes[id].terminal = true;
    }

    /// Attach an evaluated child (visits 1, reward_sum = reward).
    pub fn add_child(&mut self, parent: NodeId, prompt: impl Into<String>, reward: f64) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(PromptNode {
            id,
            prompt: prompt.into(),
            parent: Some(parent),
            children: Vec::new(),
            visits: 1,
            reward_sum: reward,
            q_value: reward,
            depth,
            last_reward: reward,
            terminal: false,
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Child with the highest own reward; ties go to the lower id.
    pub fn best_child(&self, id: NodeId) -> Option<NodeId> {
        let mut best: Option<&PromptNode> = None;
        for &c in &self.nodes[id].children {
            let node = &self.nodes[c];
            if best.is_none_or(|b| node.last_reward > b.last_reward) {
                best = Some(node);
            }
        }
        best.map(|n| n.id)
    }

    /// Walk from the root by UCT until a childless node or the depth limit.
    pub fn select(&self, exploration_weight: f64, depth_limit: u32) -> Vec<NodeId> {
        let mut path = vec![0];
        let mut current = &self.nodes[0];
        while !current.children.is_empty() && current.depth < depth_limit {
            let mut chosen = current.children[0];
            let mut chosen_value = f64::NEG_INFINITY;
            for &c in &current.children {
                let v = uct(&self.nodes[c], current.visits, exploration_weight);
                if v > chosen_value {
                    chosen = c;
                    chosen_value = v;
                }
            }
            path.push(chosen);
            current = &self.nodes[chosen];
        }
        path
    }

    pub fn backpropagate(&mut self, path: &[NodeId], reward: f64) {
        for &id in path {
            let node = &mut self.nodes[id];
            node.visits += 1;
            node.reward_sum += reward;
            node.q_value = node.reward_sum / node.visits as f64;
        }
    }

    /// Highest evaluated reward; ties prefer shallower, then lower id.
    pub fn best_node(&self) -> &PromptNode {
        let mut best = &self.nodes[0];
        for node in &self.nodes[1..] {
            let better = node.last_reward > best.last_reward
                || (node.last_reward == best.last_reward && node.depth < best.depth);
            if better {
                best = node;
            }
        }
        best
    }

    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Check structural invariants; returns the first violation found.
    pub fn check_integrity(&self, depth_limit: u32) -> Result<(), String> {
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(format!("node at {i} has id {}", node.id));
            }
            match node.parent {
                None if i != 0 => return Err(format!("non-root node {i} has no parent")),
                None => {
                    if node.depth != 0 {
                        return Err("root depth is not 0".into());
                    }
                }
                Some(p) => {
                    let parent = self.nodes.get(p).ok_or(format!("node {i}: dangling parent {p}"))?;
                    if !parent.children.contains(&i) {
                        return Err(format!("node {i} missing from children of {p}"));
                    }
                    if node.depth != parent.depth + 1 {
                        return Err(format!("node {i}: depth {} under parent depth {}", node.depth, parent.depth));
                    }
                }
            }
            if node.depth > depth_limit {
                return Err(format!("node {i} exceeds depth limit"));
            }
            for &c in &node.children {
                if self.nodes.get(c).and_then(|n| n.parent) != Some(i) {
                    return Err(format!("child {c} of {i} does not point back"));
                }
            }
            if node.visits > 0 && (node.q_value - node.reward_sum / node.visits as f64).abs() > 1e-12 {
                return Err(format!("node {i}: q_value out of sync"));
            }
            let child_visits: u64 = node.children.iter().map(|&c| self.nodes[c].visits).sum();
            // each child starts at 1 visit without passing through its parent
            let child_backprops = child_visits.saturating_sub(node.children.len() as u64);
            if node.visits < child_backprops {
                return Err(format!("node {i}: fewer visits than backprops through children"));
            }
        }
        Ok(())
    }
}

/// Consecutive non-improving checks of the global best reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: u32,
    pub best: f64,
    pub stale: u32,
}

impl EarlyStop {
    pub fn new(patience: u32, initial_best: f64) -> Self {
        Self {
            patience,
            best: initial_best,
            stale: 0,
        }
    }

    /// Record the current global best; true once `patience` checks in a row
    /// brought no strict improvement.
    pub fn observe(&mut self, global_best: f64) -> bool {
        if global_best > self.best {
            self.best = global_best;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}
