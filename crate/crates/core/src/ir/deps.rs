//! Intra-block dependences and the adjacent swaps they permit.

use serde::{Deserialize, Serialize};

use super::{Block, Reg, VInstr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepKind {
    Flow,
    Anti,
    Output,
    Memory,
}

/// Edges run from the earlier to the later instruction and name VInstr ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DepEdge {
    pub from: u32,
    pub to: u32,
    pub kind: DepKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependenceGraph {
    pub nodes: Vec<u32>,
    pub edges: Vec<DepEdge>,
}

impl DependenceGraph {
    pub fn has_edge_between(&self, a: u32, b: u32) -> bool {
        self.edges
            .iter()
            .any(|e| (e.from == a && e.to == b) || (e.from == b && e.to == a))
    }

    /// Register flow edges as `(producer, consumer, register)`. Legal swaps
    /// keep this set unchanged.
    pub fn value_flow(block: &Block) -> Vec<(u32, u32, Reg)> {
        let mut out = Vec::new();
        for (j, c) in block.instrs.iter().enumerate() {
            for &r in c.reads() {
                if let Some(p) = block.instrs[..j]
                    .iter()
                    .rev()
                    .find(|p| p.writes() == Some(r))
                {
                    out.push((p.id, c.id, r));
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

fn conflict_kinds(a: &VInstr, b: &VInstr) -> Vec<DepKind> {
    let mut kinds = Vec::new();
    if let Some(w) = a.writes() {
        if b.reads().contains(&w) {
            kinds.push(DepKind::Flow);
        }
        if b.writes() == Some(w) {
            kinds.push(DepKind::Output);
        }
    }
    if let Some(w) = b.writes() {
        if a.reads().contains(&w) {
            kinds.push(DepKind::Anti);
        }
    }
    if let (Some(ma), Some(mb)) = (a.mem, b.mem) {
        if (a.op.is_store() || b.op.is_store()) && ma.may_alias(&mb) {
            kinds.push(DepKind::Memory);
        }
    }
    kinds
}

/// Register edges: flow from the reaching definition of each source,
/// output from the previous writer of the destination, and anti from every
/// read since that writer. Memory edges join every aliasing pair involving
/// a store.
pub fn dependence_graph(block: &Block) -> DependenceGraph {
    let ins = &block.instrs;
    let mut edges = Vec::new();
    let mut push = |from: &VInstr, to: &VInstr, kind| {
        edges.push(DepEdge {
            from: from.id,
            to: to.id,
            kind,
        })
    };
    for j in 0..ins.len() {
        let later = &ins[j];
        for &r in later.reads() {
            if let Some(p) = ins[..j].iter().rev().find(|p| p.writes() == Some(r)) {
                push(p, later, DepKind::Flow);
            }
        }
        if let Some(w) = later.writes() {
            let prev_writer = ins[..j].iter().rposition(|p| p.writes() == Some(w));
            if let Some(pw) = prev_writer {
                push(&ins[pw], later, DepKind::Output);
            }
            let from = prev_writer.map_or(0, |pw| pw + 1);
            for reader in &ins[from..j] {
                if reader.reads().contains(&w) {
                    push(reader, later, DepKind::Anti);
                }
            }
        }
        for earlier in &ins[..j] {
            if let (Some(ma), Some(mb)) = (earlier.mem, later.mem) {
                if (earlier.op.is_store() || later.op.is_store()) && ma.may_alias(&mb) {
                    push(earlier, later, DepKind::Memory);
                }
            }
        }
    }
    edges.sort();
    edges.dedup();
    DependenceGraph {
        nodes: ins.iter().map(|i| i.id).collect(),
        edges,
    }
}

/// Adjacent index pairs `(i, i + 1)` whose instructions are independent.
pub fn legal_swaps(block: &Block) -> Vec<(usize, usize)> {
    block
        .instrs
        .windows(2)
        .enumerate()
        .filter(|(_, w)| conflict_kinds(&w[0], &w[1]).is_empty())
        .map(|(i, _)| (i, i + 1))
        .collect()
}

/// Swap instructions `i` and `i + 1` of `block`.
pub fn apply_swap(block: &mut Block, i: usize) -> bool {
    if i + 1 >= block.instrs.len()
        || !conflict_kinds(&block.instrs[i], &block.instrs[i + 1]).is_empty()
    {
        return false;
    }
    block.instrs.swap(i, i + 1);
    true
}
