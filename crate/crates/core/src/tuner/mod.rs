//! Monte Carlo tree search over sketch parameters and kernel instruction
//! order.
//!
//! Each iteration selects a node by UCB1, expands one advisor-chosen
//! action, evaluates the new configuration once (no rollout) and
//! backpropagates a value normalized by the best performance seen so far.
//! The tree is owned and mutated by [`tune`] alone.

mod action;
mod advisor;
mod eval;
mod llm;
mod tree;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use action::{apply_action, ActionKey, Param, TuningAction, TuningConfig};
pub use advisor::{
    global_statistics, path_statistics, step_granularity, Advisor, BlockGrid, GlobalRecord,
    HeuristicAdvisor, ProposalContext, RandomAdvisor, TuningSpace, DEFAULT_STEP, DEFAULT_WIDTH_CAP,
    EPSILON,
};
pub use eval::{CostModelEvaluator, Evaluation, Evaluator, RealRunEvaluator};
pub use llm::{LlmAdvisor, LLM_ENDPOINT_ENV, LLM_KEY_ENV};
pub use tree::{ucb_score, PathRecord, SearchNode, SearchTree};

use crate::bench::PerfMeasurement;
use crate::cost::CostBreakdown;
use crate::error::TuneError;
use crate::hw::HardwareDescriptor;
use crate::ir::{default_sketch, GemmSpec};

/// Upper clamp of a node value.
pub const MAX_VALUE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    pub budget: usize,
    pub seed: u64,
    /// UCB1 exploration constant.
    pub exploration: f64,
    pub space: TuningSpace,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            budget: 100,
            seed: 0,
            exploration: std::f64::consts::SQRT_2,
            space: TuningSpace::default(),
        }
    }
}

/// Append-only record of the search.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchHistory {
    pub global_records: Vec<GlobalRecord>,
    /// Best admissible configuration and its measurement.
    pub best: Option<(TuningConfig, PerfMeasurement)>,
    /// Best GFLOPS after each iteration.
    pub best_trace: Vec<f64>,
}

impl SearchHistory {
    pub fn best_gflops(&self) -> f64 {
        self.best.as_ref().map_or(0.0, |(_, m)| m.gflops)
    }
}

/// One line of the tuning log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub action: Option<TuningAction>,
    pub digest: String,
    pub value: f64,
    pub gflops: f64,
    pub best_so_far: f64,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostBreakdown>,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best: TuningConfig,
    pub best_measurement: PerfMeasurement,
    pub initial: TuningConfig,
    pub initial_measurement: PerfMeasurement,
    pub history: SearchHistory,
    pub log: Vec<LogRecord>,
    pub tree: SearchTree,
}

impl TuneResult {
    /// Every configuration that was evaluated, in tree order.
    pub fn simulated_configs(&self) -> impl Iterator<Item = &TuningConfig> {
        self.tree
            .nodes
            .iter()
            .filter(|n| n.simulated)
            .map(|n| &n.config)
    }
}

/// Value of a measurement relative to the best so far: 1 for the first
/// admissible one, 0 for an inadmissible one, clamped to `[0, 2]`.
pub fn normalized_value(m: &PerfMeasurement, best_before: Option<f64>) -> f64 {
    if !m.admissible() {
        return 0.0;
    }
    match best_before {
        Some(b) if b > 0.0 => (m.gflops / b).clamp(0.0, MAX_VALUE),
        _ => 1.0,
    }
}

struct Search<'a> {
    spec: &'a GemmSpec,
    hw: &'a HardwareDescriptor,
    evaluator: &'a dyn Evaluator,
    opts: &'a TuneOptions,
    tree: SearchTree,
    history: SearchHistory,
    log: Vec<LogRecord>,
    seen: HashSet<String>,
    rng: ChaCha8Rng,
    last: Option<PerfMeasurement>,
}

impl Search<'_> {
    /// Evaluate node `id`, record it and return its value.
    fn simulate(&mut self, id: usize) -> f64 {
        let node = &self.tree.nodes[id];
        let eval = self.evaluator.evaluate(&node.config, self.spec, self.hw);
        let m = &eval.measurement;
        let best_before = self.history.best.as_ref().map(|(_, b)| b.gflops);
        let value = normalized_value(m, best_before);
        let gflops = if m.admissible() { m.gflops } else { 0.0 };
        if m.admissible() && best_before.is_none_or(|b| m.gflops > b) {
            self.history.best = Some((node.config.clone(), m.clone()));
        }
        if let (Some(action), Some(parent)) = (node.action, node.parent) {
            self.history.global_records.push(GlobalRecord {
                action,
                parent_gflops: self.tree.nodes[parent].gflops,
                child_gflops: gflops,
            });
        }
        let best = self.history.best_gflops();
        self.history.best_trace.push(best);
        self.log.push(LogRecord {
            iter: self.log.len() + 1,
            action: node.action,
            digest: node.digest.clone(),
            value,
            gflops,
            best_so_far: best,
            wall_ms: eval.wall_ms(),
            cost: eval.breakdown.clone(),
        });
        let node = &mut self.tree.nodes[id];
        node.gflops = gflops;
        node.simulated = true;
        self.last = Some(eval.measurement);
        value
    }

    /// Attach one new child under `id`; `None` once nothing is left to
    /// try there. Illegal, out-of-space and duplicate candidates are dropped.
    fn expand(&mut self, id: usize, advisor: &mut dyn Advisor) -> Option<usize> {
        let path = self.tree.path_history(id);
        let config = self.tree.nodes[id].config.clone();
        let ctx = ProposalContext {
            config: &config,
            spec: self.spec,
            hw: self.hw,
            path: &path,
            global: &self.history.global_records,
            space: &self.opts.space,
        };
        if self.tree.nodes[id].proposed.is_none() {
            let mut actions = advisor.propose_action_space(&ctx, &mut self.rng);
            actions.truncate(self.opts.space.width_cap);
            // Duplicates would break the children-keyed-by-action map.
            let mut unique = Vec::new();
            for a in actions {
                if !unique.contains(&a) {
                    unique.push(a);
                }
            }
            self.tree.nodes[id].set_proposals(unique);
        }
        while !self.tree.nodes[id].untried.is_empty() {
            let untried = &self.tree.nodes[id].untried;
            let pick = advisor
                .select_action(untried, &ctx, &mut self.rng)
                .min(untried.len() - 1);
            let action = self.tree.nodes[id].untried.remove(pick);
            let Ok(next) = apply_action(&config, &action, self.spec, self.hw) else {
                continue;
            };
            if !self.opts.space.admits(&action, &next.sketch) {
                continue;
            }
            if !self.seen.insert(next.digest()) {
                continue;
            }
            return Some(self.tree.add_child(id, action, next));
        }
        None
    }
}

/// Tune from the descriptor's default sketch (moved onto the space's grid).
pub fn tune(
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    evaluator: &dyn Evaluator,
    advisor: &mut dyn Advisor,
    opts: &TuneOptions,
) -> Result<TuneResult, TuneError> {
    let sketch = opts.space.snap(default_sketch(spec, hw)?);
    let initial = TuningConfig::build(sketch, spec, hw)?;
    Ok(tune_from(initial, spec, hw, evaluator, advisor, opts))
}

/// Run up to `opts.budget` iterations from `initial`. The first iteration
/// evaluates `initial` itself; the search stops early only if every
/// reachable configuration has been evaluated.
pub fn tune_from(
    initial: TuningConfig,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    evaluator: &dyn Evaluator,
    advisor: &mut dyn Advisor,
    opts: &TuneOptions,
) -> TuneResult {
    let mut search = Search {
        spec,
        hw,
        evaluator,
        opts,
        tree: SearchTree::new(initial.clone()),
        history: SearchHistory::default(),
        log: Vec::new(),
        seen: HashSet::new(),
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        last: None,
    };
    search.seen.insert(initial.digest());
    let value = search.simulate(SearchTree::ROOT);
    search.tree.backprop(SearchTree::ROOT, value);
    let initial_measurement = search.last.clone().expect("root was simulated");

    'iterations: for _ in 1..opts.budget.max(1) {
        loop {
            let Some(id) = search.tree.select(opts.exploration) else {
                break 'iterations;
            };
            if let Some(child) = search.expand(id, advisor) {
                let value = search.simulate(child);
                search.tree.backprop(child, value);
                break;
            }
        }
    }

    let (best, best_measurement) = search
        .history
        .best
        .clone()
        .unwrap_or_else(|| (initial.clone(), initial_measurement.clone()));
    TuneResult {
        best,
        best_measurement,
        initial,
        initial_measurement,
        history: search.history,
        log: search.log,
        tree: search.tree,
    }
}
