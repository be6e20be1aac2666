use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DType, GemmSpec};
use crate::codegen::choose_register_tile;
use crate::error::IrError;
use crate::hw::{Diagnostic, Family, HardwareDescriptor};

/// Upper bound on the software prefetch distance, in k-steps.
pub const MAX_PREFETCH_DISTANCE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LoopDim {
    #[serde(rename = "N_outer")]
    N,
    #[serde(rename = "K_outer")]
    K,
    #[serde(rename = "M_outer")]
    M,
}

impl LoopDim {
    pub const DEFAULT_ORDER: [LoopDim; 3] = [LoopDim::N, LoopDim::K, LoopDim::M];

    pub const ALL_ORDERS: [[LoopDim; 3]; 6] = [
        [LoopDim::N, LoopDim::K, LoopDim::M],
        [LoopDim::N, LoopDim::M, LoopDim::K],
        [LoopDim::K, LoopDim::N, LoopDim::M],
        [LoopDim::K, LoopDim::M, LoopDim::N],
        [LoopDim::M, LoopDim::N, LoopDim::K],
        [LoopDim::M, LoopDim::K, LoopDim::N],
    ];

    pub fn is_permutation(order: &[LoopDim; 3]) -> bool {
        order[0] != order[1] && order[1] != order[2] && order[0] != order[2]
    }
}

impl fmt::Display for LoopDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LoopDim::N => "N_outer",
            LoopDim::K => "K_outer",
            LoopDim::M => "M_outer",
        })
    }
}

/// Blocked loop-nest plan. Tile sizes are in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleSketch {
    pub bm: usize,
    pub bn: usize,
    pub bk: usize,
    pub mr: usize,
    pub nr: usize,
    pub loop_order: [LoopDim; 3],
    pub pack_a: bool,
    pub pack_b: bool,
    pub pipeline: bool,
    pub prefetch_distance: usize,
}

/// Register class the micro-kernel computes in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    Vector { lanes: usize },
    Scalar,
}

impl KernelMode {
    pub fn lanes(self) -> usize {
        match self {
            KernelMode::Vector { lanes } => lanes,
            KernelMode::Scalar => 1,
        }
    }

    pub fn is_vector(self) -> bool {
        matches!(self, KernelMode::Vector { .. })
    }
}

/// Mode for an `nr`-wide register tile, or `None` if `nr` breaks the lane
/// rule. Problems narrower than one vector fall back to scalar mode.
pub fn kernel_mode(
    hw: &HardwareDescriptor,
    dtype: DType,
    nr: usize,
    n: usize,
) -> Option<KernelMode> {
    if !hw.registers.has_vector_unit() {
        return Some(KernelMode::Scalar);
    }
    let lanes = hw.lanes(dtype.bits());
    if nr.is_multiple_of(lanes) {
        Some(KernelMode::Vector { lanes })
    } else if n < lanes {
        Some(KernelMode::Scalar)
    } else {
        None
    }
}

/// Data registers available to the micro-kernel. Scalar mode keeps four
/// integer registers for addressing.
pub fn register_budget(hw: &HardwareDescriptor, mode: KernelMode) -> usize {
    match mode {
        KernelMode::Vector { .. } => hw.registers.vector_count as usize,
        KernelMode::Scalar => (hw.registers.scalar_count as usize).saturating_sub(4),
    }
}

/// Accumulators, one B row and one A broadcast.
pub fn tile_fits(mr: usize, nr: usize, lanes: usize, budget: usize) -> bool {
    if mr == 0 || nr == 0 || !nr.is_multiple_of(lanes) {
        return false;
    }
    let v = nr / lanes;
    mr * v + v < budget
}

/// Accumulators plus two full sets of A and B registers.
pub fn pipelined_tile_fits(mr: usize, nr: usize, lanes: usize, budget: usize) -> bool {
    if !tile_fits(mr, nr, lanes, budget) {
        return false;
    }
    let v = nr / lanes;
    mr * v + 2 * (v + mr) <= budget
}

fn round_down(x: usize, q: usize) -> usize {
    (x / q) * q
}

/// Cache-capacity initial sketch.
pub fn default_sketch(spec: &GemmSpec, hw: &HardwareDescriptor) -> Result<ScheduleSketch, IrError> {
    spec.validate()?;
    if hw.family != Family::Cpu {
        return Err(IrError::UnsupportedFamily(
            format!("{:?}", hw.family).to_lowercase(),
        ));
    }
    let (mr0, nr0) = choose_register_tile(hw, spec.dtype)?;
    let b = spec.dtype.bytes();

    let lanes = hw.lanes(spec.dtype.bits());
    let widest = if spec.n >= nr0 {
        nr0
    } else if hw.registers.has_vector_unit() && spec.n >= lanes {
        round_down(spec.n, lanes)
    } else {
        spec.n
    };
    let mode = kernel_mode(hw, spec.dtype, widest, spec.n)
        .ok_or_else(|| IrError::NoFeasibleTile(format!("nr={widest} is not a lane multiple")))?;
    let budget = register_budget(hw, mode);
    // A narrow n can still be too wide for the scalar register file.
    let (mr, nr) = (1..=widest / mode.lanes())
        .rev()
        .map(|v| v * mode.lanes())
        .find_map(|nr| {
            (1..=mr0.min(spec.m).max(1))
                .rev()
                .find(|&mr| tile_fits(mr, nr, mode.lanes(), budget))
                .map(|mr| (mr, nr))
        })
        .ok_or_else(|| {
            IrError::NoFeasibleTile(format!("no tile up to nr={widest} fits {budget} registers"))
        })?;

    let caches = hw.caches();
    let half = |i: usize| caches.get(i).map(|c| (c.size_bytes / 2) as usize);
    let l1 = half(0).unwrap_or(usize::MAX);
    let l2 = if caches.len() >= 2 {
        half(1).unwrap()
    } else {
        l1
    };
    let llc = half(caches.len().saturating_sub(1)).unwrap_or(usize::MAX);

    let bk = (l1 / (nr * b)).clamp(1, spec.k);
    let bm = round_down(l2 / (bk * b), mr).max(mr).min(spec.m);
    let bn = round_down(llc / (bk * b), nr).max(nr).min(spec.n);

    Ok(ScheduleSketch {
        bm,
        bn,
        bk,
        mr,
        nr,
        loop_order: LoopDim::DEFAULT_ORDER,
        pack_a: true,
        pack_b: true,
        pipeline: pipelined_tile_fits(mr, nr, mode.lanes(), budget),
        prefetch_distance: 0,
    })
}

/// Every violated sketch invariant for `(spec, hw)`.
pub fn check_sketch_legality(
    sketch: &ScheduleSketch,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |field: &str, rule: String| out.push(Diagnostic::new(field, rule));
    if let Err(e) = spec.validate() {
        diag("spec", e.to_string());
        return out;
    }
    if hw.family != Family::Cpu {
        diag(
            "hw.family",
            "kernel generation requires a cpu descriptor".into(),
        );
    }
    let s = sketch;
    if s.mr < 1 {
        diag("mr", "mr must be >= 1".into());
    }
    if s.nr < 1 {
        diag("nr", "nr must be >= 1".into());
    }
    if s.bk < 1 {
        diag("bk", "bk must be >= 1".into());
    }
    if s.bk > spec.k {
        diag("bk", format!("bk={} exceeds k={}", s.bk, spec.k));
    }
    if s.bm < s.mr {
        diag("bm", format!("bm={} is smaller than mr={}", s.bm, s.mr));
    }
    if s.bm > spec.m {
        diag("bm", format!("bm={} exceeds m={}", s.bm, spec.m));
    }
    if s.bn < s.nr {
        diag("bn", format!("bn={} is smaller than nr={}", s.bn, s.nr));
    }
    if s.bn > spec.n {
        diag("bn", format!("bn={} exceeds n={}", s.bn, spec.n));
    }
    if !LoopDim::is_permutation(&s.loop_order) {
        diag(
            "loop_order",
            "loop_order must be a permutation of N_outer, K_outer, M_outer".into(),
        );
    }
    if s.prefetch_distance > MAX_PREFETCH_DISTANCE {
        diag(
            "prefetch_distance",
            format!("prefetch_distance must be <= {MAX_PREFETCH_DISTANCE}"),
        );
    }
    if s.mr >= 1 && s.nr >= 1 {
        match kernel_mode(hw, spec.dtype, s.nr, spec.n) {
            None => diag(
                "nr",
                format!(
                    "nr not lane-multiple (nr={}, lanes={})",
                    s.nr,
                    hw.lanes(spec.dtype.bits())
                ),
            ),
            Some(mode) => {
                let budget = register_budget(hw, mode);
                if !tile_fits(s.mr, s.nr, mode.lanes(), budget) {
                    diag(
                        "mr",
                        format!(
                            "register tile {}x{} exceeds the budget of {budget} registers",
                            s.mr, s.nr
                        ),
                    );
                } else if s.pipeline && !pipelined_tile_fits(s.mr, s.nr, mode.lanes(), budget) {
                    diag(
                        "pipeline",
                        format!(
                            "double-buffering a {}x{} tile exceeds the budget of {budget} registers",
                            s.mr, s.nr
                        ),
                    );
                }
            }
        }
    }
    out
}

/// A uniformly drawn legal sketch for `spec` on `hw`: any feasible
/// register tile, block sizes between the tile and the problem, any loop
/// order, packing and (where it fits) pipeline setting. `None` when no
/// register tile fits.
pub fn sample_sketch(
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    rng: &mut impl Rng,
) -> Option<ScheduleSketch> {
    let lanes = hw.lanes(spec.dtype.bits());
    let vector = hw.registers.has_vector_unit() && spec.n >= lanes;
    let mut tiles = Vec::new();
    for nr in 1..=spec.n {
        if vector && nr % lanes != 0 {
            continue;
        }
        let mode = kernel_mode(hw, spec.dtype, nr, spec.n)?;
        let budget = register_budget(hw, mode);
        let fitting: Vec<usize> = (1..=spec.m)
            .take_while(|&mr| tile_fits(mr, nr, mode.lanes(), budget))
            .collect();
        if fitting.is_empty() {
            break;
        }
        tiles.extend(
            fitting
                .into_iter()
                .map(|mr| (mr, nr, pipelined_tile_fits(mr, nr, mode.lanes(), budget))),
        );
    }
    let &(mr, nr, can_pipeline) = tiles.choose(rng)?;
    let s = ScheduleSketch {
        bm: rng.random_range(mr..=spec.m),
        bn: rng.random_range(nr..=spec.n),
        bk: rng.random_range(1..=spec.k),
        mr,
        nr,
        loop_order: *LoopDim::ALL_ORDERS.choose(rng)?,
        pack_a: rng.random_bool(0.5),
        pack_b: rng.random_bool(0.5),
        pipeline: can_pipeline && rng.random_bool(0.5),
        prefetch_distance: rng.random_range(0..=4),
    };
    check_sketch_legality(&s, spec, hw).is_empty().then_some(s)
}
