use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{TuningAction, TuningConfig};

/// UCB1: unvisited nodes score `+∞`, otherwise mean value plus
/// `c·sqrt(ln(parent_visits) / visits)`.
pub fn ucb_score(value_sum: f64, visits: u64, parent_visits: u64, c: f64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    let n = visits as f64;
    value_sum / n + c * ((parent_visits.max(1) as f64).ln() / n).sqrt()
}

/// One entry of a node's path history: the action that produced the node
/// and the performance it measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub action: Option<TuningAction>,
    pub gflops: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub config: TuningConfig,
    pub digest: String,
    /// Action from the parent; `None` at the root.
    pub action: Option<TuningAction>,
    pub parent: Option<usize>,
    pub value_sum: f64,
    pub visits: u64,
    /// Keyed by action; keys are a subset of `proposed`.
    pub children: IndexMap<TuningAction, usize>,
    /// `None` until the action space is generated.
    pub proposed: Option<Vec<TuningAction>>,
    /// Proposed actions not yet expanded or rejected, in proposal order.
    pub untried: Vec<TuningAction>,
    /// No expansion possible anywhere below; selection skips it.
    pub exhausted: bool,
    /// Measured GFLOPS, 0 until simulated or when inadmissible.
    pub gflops: f64,
    pub simulated: bool,
}

impl SearchNode {
    fn new(config: TuningConfig, action: Option<TuningAction>, parent: Option<usize>) -> Self {
        SearchNode {
            digest: config.digest(),
            config,
            action,
            parent,
            value_sum: 0.0,
            visits: 0,
            children: IndexMap::new(),
            proposed: None,
            untried: Vec::new(),
            exhausted: false,
            gflops: 0.0,
            simulated: false,
        }
    }

    pub fn has_untried(&self) -> bool {
        self.proposed.is_none() || !self.untried.is_empty()
    }

    /// Install a freshly generated action space.
    pub fn set_proposals(&mut self, actions: Vec<TuningAction>) {
        self.untried = actions.clone();
        self.proposed = Some(actions);
    }
}

/// Arena-allocated search tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub const ROOT: usize = 0;

    pub fn new(root: TuningConfig) -> Self {
        SearchTree {
            nodes: vec![SearchNode::new(root, None, None)],
        }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[Self::ROOT]
    }

    pub fn add_child(
        &mut self,
        parent: usize,
        action: TuningAction,
        config: TuningConfig,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes
            .push(SearchNode::new(config, Some(action), Some(parent)));
        self.nodes[parent].children.insert(action, id);
        id
    }

    /// Node ids from the root down to `id`.
    pub fn path(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    pub fn path_history(&self, id: usize) -> Vec<PathRecord> {
        self.path(id)
            .into_iter()
            .map(|n| PathRecord {
                action: self.nodes[n].action,
                gflops: self.nodes[n].gflops,
            })
            .collect()
    }

    /// Child of `id` with the highest UCB score among non-exhausted
    /// children, scanning in proposal order so ties go to the earliest.
    fn best_child(&self, id: usize, c: f64) -> Option<usize> {
        let node = &self.nodes[id];
        let order = node
            .proposed
            .iter()
            .flatten()
            .filter_map(|a| node.children.get(a));
        let mut best: Option<(usize, f64)> = None;
        for &child in order {
            let ch = &self.nodes[child];
            if ch.exhausted {
                continue;
            }
            let score = ucb_score(ch.value_sum, ch.visits, node.visits, c);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((child, score));
            }
        }
        best.map(|(id, _)| id)
    }

    /// Descend by UCB until a node with untried actions. Nodes with nothing
    /// left to expand below are marked exhausted on the way; `None` means
    /// the whole tree is exhausted.
    pub fn select(&mut self, c: f64) -> Option<usize> {
        loop {
            if self.nodes[Self::ROOT].exhausted {
                return None;
            }
            let mut id = Self::ROOT;
            loop {
                if self.nodes[id].has_untried() {
                    return Some(id);
                }
                match self.best_child(id, c) {
                    Some(child) => id = child,
                    None => {
                        self.nodes[id].exhausted = true;
                        break;
                    }
                }
            }
        }
    }

    /// Add one visit and `value` to `id` and every ancestor.
    pub fn backprop(&mut self, id: usize, value: f64) {
        let mut cur = Some(id);
        while let Some(n) = cur {
            let node = &mut self.nodes[n];
            node.visits += 1;
            node.value_sum += value;
            cur = node.parent;
        }
    }
}
