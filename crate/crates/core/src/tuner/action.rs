use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codegen::build_kernel_ir;
use crate::error::TuneError;
use crate::hw::HardwareDescriptor;
use crate::ir::{
    apply_swap, check_sketch_legality, legal_swaps, validate_kernel, GemmSpec, KernelIR,
    ScheduleSketch, MAX_PREFETCH_DISTANCE,
};

/// Sketch parameter adjustable by a [`TuningAction::ParamDelta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "BM")]
    Bm,
    #[serde(rename = "BN")]
    Bn,
    #[serde(rename = "BK")]
    Bk,
    #[serde(rename = "MR")]
    Mr,
    #[serde(rename = "NR")]
    Nr,
    #[serde(rename = "PrefetchDist")]
    PrefetchDist,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::Bm,
        Param::Bn,
        Param::Bk,
        Param::Mr,
        Param::Nr,
        Param::PrefetchDist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Bm => "BM",
            Param::Bn => "BN",
            Param::Bk => "BK",
            Param::Mr => "MR",
            Param::Nr => "NR",
            Param::PrefetchDist => "PrefetchDist",
        }
    }

    /// Cache-block parameters, whose step size adapts to history.
    pub fn is_block(self) -> bool {
        matches!(self, Param::Bm | Param::Bn | Param::Bk)
    }

    pub fn get(self, s: &ScheduleSketch) -> usize {
        match self {
            Param::Bm => s.bm,
            Param::Bn => s.bn,
            Param::Bk => s.bk,
            Param::Mr => s.mr,
            Param::Nr => s.nr,
            Param::PrefetchDist => s.prefetch_distance,
        }
    }

    fn slot(self, s: &mut ScheduleSketch) -> &mut usize {
        match self {
            Param::Bm => &mut s.bm,
            Param::Bn => &mut s.bn,
            Param::Bk => &mut s.bk,
            Param::Mr => &mut s.mr,
            Param::Nr => &mut s.nr,
            Param::PrefetchDist => &mut s.prefetch_distance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningAction {
    ParamDelta {
        param: Param,
        delta: i64,
    },
    /// Swap instructions `index` and `index + 1` of stage block `block`.
    ReorderSwap {
        block: usize,
        index: usize,
    },
    TogglePipeline,
}

impl fmt::Display for TuningAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TuningAction::ParamDelta { param, delta } => write!(f, "{}{delta:+}", param.name()),
            TuningAction::ReorderSwap { block, index } => {
                write!(f, "swap(b{block}:{index},{})", index + 1)
            }
            TuningAction::TogglePipeline => f.write_str("toggle_pipeline"),
        }
    }
}

/// Grouping used for improvement statistics: parameter and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKey {
    Param(Param, bool),
    Reorder,
    Pipeline,
}

impl TuningAction {
    pub fn key(&self) -> ActionKey {
        match *self {
            TuningAction::ParamDelta { param, delta } => ActionKey::Param(param, delta > 0),
            TuningAction::ReorderSwap { .. } => ActionKey::Reorder,
            TuningAction::TogglePipeline => ActionKey::Pipeline,
        }
    }
}

/// A point of the search: sketch plus the kernel it runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub sketch: ScheduleSketch,
    pub kernel: KernelIR,
}

impl TuningConfig {
    /// Strict build: a pipelined sketch whose tile cannot be double-buffered
    /// is rejected rather than silently downgraded.
    pub fn build(
        sketch: ScheduleSketch,
        spec: &GemmSpec,
        hw: &HardwareDescriptor,
    ) -> Result<Self, TuneError> {
        let diags = check_sketch_legality(&sketch, spec, hw);
        if !diags.is_empty() {
            return Err(TuneError::Ir(crate::error::IrError::IllegalSketch(diags)));
        }
        let kernel = build_kernel_ir(&sketch, spec, hw, true)?;
        Ok(TuningConfig { sketch, kernel })
    }

    /// SHA-256 over the canonical JSON of sketch and kernel.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Apply `action` and re-validate. Tile and pipeline changes rebuild the
/// kernel (dropping earlier reorders); block-size and prefetch changes keep
/// it.
pub fn apply_action(
    config: &TuningConfig,
    action: &TuningAction,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
) -> Result<TuningConfig, TuneError> {
    let illegal = |why: String| TuneError::IllegalAction(format!("{action}: {why}"));
    let mut next = config.clone();
    match *action {
        TuningAction::ParamDelta { param, delta } => {
            let value = param.get(&config.sketch) as i64 + delta;
            let min = if param == Param::PrefetchDist { 0 } else { 1 };
            if value < min {
                return Err(illegal(format!("{} would become {value}", param.name())));
            }
            if param == Param::PrefetchDist && value > MAX_PREFETCH_DISTANCE as i64 {
                return Err(illegal(format!(
                    "prefetch distance above {MAX_PREFETCH_DISTANCE}"
                )));
            }
            *param.slot(&mut next.sketch) = value as usize;
            let diags = check_sketch_legality(&next.sketch, spec, hw);
            if !diags.is_empty() {
                return Err(illegal(
                    diags
                        .iter()
                        .map(|d| d.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                ));
            }
            if matches!(param, Param::Mr | Param::Nr) {
                next.kernel = build_kernel_ir(&next.sketch, spec, hw, true)
                    .map_err(|e| illegal(e.to_string()))?;
            }
        }
        TuningAction::ReorderSwap { block, index } => {
            let b = next
                .kernel
                .stage_blocks
                .get_mut(block)
                .ok_or_else(|| illegal(format!("no block {block}")))?;
            if !legal_swaps(b).contains(&(index, index + 1)) || !apply_swap(b, index) {
                return Err(illegal("instructions are dependent".into()));
            }
        }
        TuningAction::TogglePipeline => {
            next.sketch.pipeline = !next.sketch.pipeline;
            let diags = check_sketch_legality(&next.sketch, spec, hw);
            if !diags.is_empty() {
                return Err(illegal(
                    diags
                        .iter()
                        .map(|d| d.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                ));
            }
            next.kernel = build_kernel_ir(&next.sketch, spec, hw, true)
                .map_err(|e| illegal(e.to_string()))?;
        }
    }
    let diags = validate_kernel(&next.kernel, hw);
    if !diags.is_empty() {
        return Err(illegal(
            diags
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    Ok(next)
}
