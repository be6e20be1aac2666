use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{apply_action, ActionKey, Param, PathRecord, TuningAction, TuningConfig};
use crate::codegen::native_mode;
use crate::hw::HardwareDescriptor;
use crate::ir::{
    kernel_mode, legal_swaps, pipelined_tile_fits, register_budget, GemmSpec, ScheduleSketch,
};

/// Block-size step used before history suggests another.
pub const DEFAULT_STEP: usize = 16;
/// Default cap on actions proposed per node.
pub const DEFAULT_WIDTH_CAP: usize = 8;
/// Probability of a uniformly random choice in the heuristic advisor.
pub const EPSILON: f64 = 0.1;

/// One simulated expansion: the action and the performance before and after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalRecord {
    pub action: TuningAction,
    pub parent_gflops: f64,
    pub child_gflops: f64,
}

impl GlobalRecord {
    pub fn improvement(&self) -> Option<f64> {
        (self.parent_gflops > 0.0).then(|| self.child_gflops / self.parent_gflops - 1.0)
    }
}

/// Inclusive range and step that block sizes must lie on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

impl BlockGrid {
    pub fn contains(&self, v: usize) -> bool {
        v >= self.min && v <= self.max && (v - self.min).is_multiple_of(self.step)
    }

    pub fn values(&self) -> impl Iterator<Item = usize> + '_ {
        (self.min..=self.max).step_by(self.step)
    }

    /// Nearest grid value, ties toward the smaller.
    pub fn snap(&self, v: usize) -> usize {
        self.values()
            .min_by_key(|&g| g.abs_diff(v))
            .unwrap_or(self.min)
    }
}

/// Which actions the search may take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSpace {
    pub params: Vec<Param>,
    /// When set, BM, BN and BK stay on this grid.
    pub block_grid: Option<BlockGrid>,
    pub reorder: bool,
    pub pipeline: bool,
    pub width_cap: usize,
}

impl Default for TuningSpace {
    fn default() -> Self {
        TuningSpace {
            params: Param::ALL.to_vec(),
            block_grid: None,
            reorder: true,
            pipeline: true,
            width_cap: DEFAULT_WIDTH_CAP,
        }
    }
}

impl TuningSpace {
    /// Block sizes only, on `grid`; everything else fixed.
    pub fn block_grid(grid: BlockGrid) -> Self {
        TuningSpace {
            params: vec![Param::Bm, Param::Bn, Param::Bk],
            block_grid: Some(grid),
            reorder: false,
            pipeline: false,
            width_cap: DEFAULT_WIDTH_CAP,
        }
    }

    /// Move block sizes onto the grid, if any.
    pub fn snap(&self, mut s: ScheduleSketch) -> ScheduleSketch {
        if let Some(g) = self.block_grid {
            s.bm = g.snap(s.bm);
            s.bn = g.snap(s.bn);
            s.bk = g.snap(s.bk);
        }
        s
    }

    /// Whether the space permits `action` leading to `result`.
    pub fn admits(&self, action: &TuningAction, result: &ScheduleSketch) -> bool {
        match *action {
            TuningAction::ParamDelta { param, .. } => {
                self.params.contains(&param)
                    && (!param.is_block()
                        || self
                            .block_grid
                            .is_none_or(|g| g.contains(param.get(result))))
            }
            TuningAction::ReorderSwap { .. } => self.reorder,
            TuningAction::TogglePipeline => self.pipeline,
        }
    }
}

/// Everything an advisor may consult at one node.
pub struct ProposalContext<'a> {
    pub config: &'a TuningConfig,
    pub spec: &'a GemmSpec,
    pub hw: &'a HardwareDescriptor,
    /// Root-to-node records, the node last.
    pub path: &'a [PathRecord],
    pub global: &'a [GlobalRecord],
    pub space: &'a TuningSpace,
}

impl ProposalContext<'_> {
    /// `action` is legal here and inside the tuning space.
    pub fn admissible(&self, action: &TuningAction) -> bool {
        apply_action(self.config, action, self.spec, self.hw)
            .is_ok_and(|next| self.space.admits(action, &next.sketch))
    }
}

/// Expansion policy: generates a node's action space and picks which
/// untried action to expand next.
pub trait Advisor {
    fn name(&self) -> &'static str;

    fn propose_action_space(
        &mut self,
        ctx: &ProposalContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Vec<TuningAction>;

    /// Index into `candidates`, which is non-empty.
    fn select_action(
        &mut self,
        candidates: &[TuningAction],
        ctx: &ProposalContext<'_>,
        rng: &mut dyn RngCore,
    ) -> usize;
}

/// Mean relative improvement per action key along a path.
pub fn path_statistics(path: &[PathRecord]) -> BTreeMap<ActionKey, f64> {
    mean_by_key(path.windows(2).filter_map(|w| {
        let action = w[1].action?;
        (w[0].gflops > 0.0).then(|| (action.key(), w[1].gflops / w[0].gflops - 1.0))
    }))
}

/// Mean relative improvement per action key over all expansions.
pub fn global_statistics(global: &[GlobalRecord]) -> BTreeMap<ActionKey, f64> {
    mean_by_key(
        global
            .iter()
            .filter_map(|r| Some((r.action.key(), r.improvement()?))),
    )
}

fn mean_by_key(items: impl Iterator<Item = (ActionKey, f64)>) -> BTreeMap<ActionKey, f64> {
    let mut acc: BTreeMap<ActionKey, (f64, usize)> = BTreeMap::new();
    for (k, v) in items {
        let e = acc.entry(k).or_default();
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

/// Block-size step at which improvements cluster: the most frequent
/// `|delta|` among improving block-size records, if it occurs at least
/// twice; ties go to the larger step.
pub fn step_granularity(global: &[GlobalRecord]) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in global {
        if let TuningAction::ParamDelta { param, delta } = r.action {
            if param.is_block() && r.improvement().is_some_and(|g| g > 0.0) {
                *counts.entry(delta.unsigned_abs() as usize).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n >= 2)
        .max_by_key(|&(s, n)| (n, s))
        .map_or(DEFAULT_STEP, |(s, _)| s)
}

/// Admissible candidates: `leading`, then `±step` on each block size, the
/// neighbouring register tiles and `±1` prefetch distance, then (reserved
/// past the cap) one pipeline toggle if none is on the path and one random
/// legal swap. `order` ranks the parameter deltas before truncation; equal
/// scores keep the listing order.
pub(crate) fn candidate_space(
    ctx: &ProposalContext<'_>,
    leading: Vec<TuningAction>,
    step: usize,
    rng: &mut dyn RngCore,
    order: impl Fn(&TuningAction) -> f64,
) -> Vec<TuningAction> {
    let lanes = native_mode(ctx.hw, ctx.spec.dtype).lanes() as i64;
    let step = step as i64;
    let mut deltas = leading;
    for param in Param::ALL {
        if !ctx.space.params.contains(&param) {
            continue;
        }
        let unit = match param {
            Param::Bm | Param::Bn | Param::Bk => step,
            Param::Mr | Param::PrefetchDist => 1,
            Param::Nr => lanes,
        };
        for delta in [unit, -unit] {
            let a = TuningAction::ParamDelta { param, delta };
            if !deltas.contains(&a) {
                deltas.push(a);
            }
        }
    }
    deltas.retain(|a| ctx.admissible(a));
    // Stable sort: equal scores keep the listing order.
    let mut scored: Vec<(f64, TuningAction)> = deltas.into_iter().map(|a| (order(&a), a)).collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0));

    let mut reserved = Vec::new();
    let toggled = ctx
        .path
        .iter()
        .any(|r| r.action == Some(TuningAction::TogglePipeline));
    if !toggled && ctx.admissible(&TuningAction::TogglePipeline) {
        reserved.push(TuningAction::TogglePipeline);
    }
    if ctx.space.reorder {
        let swaps: Vec<TuningAction> = ctx
            .config
            .kernel
            .stage_blocks
            .iter()
            .enumerate()
            .flat_map(|(block, b)| {
                legal_swaps(b)
                    .into_iter()
                    .map(move |(index, _)| TuningAction::ReorderSwap { block, index })
            })
            .collect();
        if !swaps.is_empty() {
            reserved.push(swaps[rng.random_range(0..swaps.len())]);
        }
    }
    let cap = ctx.space.width_cap.max(reserved.len());
    let mut out: Vec<TuningAction> = scored
        .into_iter()
        .map(|(_, a)| a)
        .take(cap - reserved.len())
        .collect();
    out.extend(reserved);
    out
}

/// When double buffering does not fit the register file, the largest MR
/// shrink that makes it fit: the next feasible tile for pipelining, which
/// single MR steps would take many levels to reach.
fn pipeline_enabling_shrink(ctx: &ProposalContext<'_>) -> Vec<TuningAction> {
    let s = &ctx.config.sketch;
    if !ctx.space.pipeline || s.pipeline || !ctx.space.params.contains(&Param::Mr) {
        return Vec::new();
    }
    let Some(mode) = kernel_mode(ctx.hw, ctx.spec.dtype, s.nr, ctx.spec.n) else {
        return Vec::new();
    };
    let budget = register_budget(ctx.hw, mode);
    let fits = |mr| pipelined_tile_fits(mr, s.nr, mode.lanes(), budget);
    if fits(s.mr) {
        return Vec::new();
    }
    (1..s.mr)
        .rev()
        .find(|&mr| fits(mr))
        .map(|mr| TuningAction::ParamDelta {
            param: Param::Mr,
            delta: mr as i64 - s.mr as i64,
        })
        .into_iter()
        .collect()
}

/// History-driven advisor. Picks the candidate whose parameter and
/// direction improved most along the current path (falling back to global
/// statistics, then neutral), exploring uniformly with probability
/// [`EPSILON`]. Action spaces lead with the MR shrink that enables double
/// buffering, if one is needed, and use the step where global improvements
/// cluster.
#[derive(Debug, Clone, Default)]
pub struct HeuristicAdvisor;

impl HeuristicAdvisor {
    fn score(
        path: &BTreeMap<ActionKey, f64>,
        global: &BTreeMap<ActionKey, f64>,
        a: &TuningAction,
    ) -> f64 {
        let k = a.key();
        path.get(&k)
            .or_else(|| global.get(&k))
            .copied()
            .unwrap_or(0.0)
    }
}

impl Advisor for HeuristicAdvisor {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn propose_action_space(
        &mut self,
        ctx: &ProposalContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Vec<TuningAction> {
        let global = global_statistics(ctx.global);
        let step = step_granularity(ctx.global);
        candidate_space(ctx, pipeline_enabling_shrink(ctx), step, rng, |a| {
            global.get(&a.key()).copied().unwrap_or(0.0)
        })
    }

    fn select_action(
        &mut self,
        candidates: &[TuningAction],
        ctx: &ProposalContext<'_>,
        rng: &mut dyn RngCore,
    ) -> usize {
        if rng.random_bool(EPSILON) {
            return rng.random_range(0..candidates.len());
        }
        let path = path_statistics(ctx.path);
        let global = global_statistics(ctx.global);
        let mut best = 0;
        for (i, a) in candidates.iter().enumerate() {
            if Self::score(&path, &global, a) > Self::score(&path, &global, &candidates[best]) {
                best = i;
            }
        }
        best
    }
}

/// Ablation baseline: the cold-start action space and uniform choice.
#[derive(Debug, Clone, Default)]
pub struct RandomAdvisor;

impl Advisor for RandomAdvisor {
    fn name(&self) -> &'static str {
        "random"
    }

    fn propose_action_space(
        &mut self,
        ctx: &ProposalContext<'_>,
        rng: &mut dyn RngCore,
    ) -> Vec<TuningAction> {
        candidate_space(ctx, Vec::new(), DEFAULT_STEP, rng, |_| 0.0)
    }

    fn select_action(
        &mut self,
        candidates: &[TuningAction],
        _: &ProposalContext<'_>,
        rng: &mut dyn RngCore,
    ) -> usize {
        rng.random_range(0..candidates.len())
    }
}
