//! The blocked iteration space of a sketch.
//!
//! The interpreter, the source emitter, the cost model and the coverage
//! tests all walk the same loop nest defined here. Packing happens directly
//! after the loops binding both of a panel's indices; when both panels land
//! at the same depth, B is packed first.

use super::{GemmSpec, LoopDim, ScheduleSketch};

/// One `mb × nb × kb` block of the iteration space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockTile {
    pub ic: usize,
    pub jc: usize,
    pub pc: usize,
    pub mb: usize,
    pub nb: usize,
    pub kb: usize,
}

/// A register tile within a block, in absolute row/column offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MicroTile {
    pub i: usize,
    pub j: usize,
    pub rows: usize,
    pub cols: usize,
    /// Both extents equal the register tile; fringes use the scalar epilogue.
    pub full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopEvent {
    /// Pack `A[ic..ic+mb, pc..pc+kb]`.
    PackA {
        ic: usize,
        pc: usize,
        mb: usize,
        kb: usize,
    },
    /// Pack `B[pc..pc+kb, jc..jc+nb]`.
    PackB {
        pc: usize,
        jc: usize,
        kb: usize,
        nb: usize,
    },
    Block(BlockTile),
}

/// Loop depth (0-based) after which each panel is packed: `(a, b)`.
pub fn pack_depths(order: &[LoopDim; 3]) -> (usize, usize) {
    let pos = |d: LoopDim| order.iter().position(|&o| o == d).unwrap_or(2);
    let a = pos(LoopDim::M).max(pos(LoopDim::K));
    let b = pos(LoopDim::N).max(pos(LoopDim::K));
    (a, b)
}

fn extent(dim: LoopDim, s: &ScheduleSketch, spec: &GemmSpec) -> (usize, usize) {
    match dim {
        LoopDim::M => (spec.m, s.bm.max(1)),
        LoopDim::N => (spec.n, s.bn.max(1)),
        LoopDim::K => (spec.k, s.bk.max(1)),
    }
}

/// Walk the outer loop nest in `sketch.loop_order`, reporting pack calls
/// (when the corresponding flag is set) and blocks in execution order.
pub fn walk_blocks(sketch: &ScheduleSketch, spec: &GemmSpec, mut f: impl FnMut(LoopEvent)) {
    let (pa, pb) = pack_depths(&sketch.loop_order);
    let mut origin = [0usize; 3];
    let mut size = [0usize; 3];
    walk_level(sketch, spec, 0, pa, pb, &mut origin, &mut size, &mut f);
}

fn slot(d: LoopDim) -> usize {
    match d {
        LoopDim::M => 0,
        LoopDim::N => 1,
        LoopDim::K => 2,
    }
}

#[allow(clippy::too_many_arguments)]
fn walk_level(
    s: &ScheduleSketch,
    spec: &GemmSpec,
    depth: usize,
    pa: usize,
    pb: usize,
    origin: &mut [usize; 3],
    size: &mut [usize; 3],
    f: &mut impl FnMut(LoopEvent),
) {
    if depth == 3 {
        f(LoopEvent::Block(BlockTile {
            ic: origin[0],
            jc: origin[1],
            pc: origin[2],
            mb: size[0],
            nb: size[1],
            kb: size[2],
        }));
        return;
    }
    let dim = s.loop_order[depth];
    let (total, step) = extent(dim, s, spec);
    let k = slot(dim);
    let mut start = 0;
    while start < total {
        origin[k] = start;
        size[k] = step.min(total - start);
        if s.pack_b && pb == depth {
            f(LoopEvent::PackB {
                pc: origin[2],
                jc: origin[1],
                kb: size[2],
                nb: size[1],
            });
        }
        if s.pack_a && pa == depth {
            f(LoopEvent::PackA {
                ic: origin[0],
                pc: origin[2],
                mb: size[0],
                kb: size[2],
            });
        }
        walk_level(s, spec, depth + 1, pa, pb, origin, size, f);
        start += step;
    }
}

/// Register tiles of a block: `jr` outer, `ir` inner.
pub fn micro_tiles(sketch: &ScheduleSketch, block: &BlockTile) -> impl Iterator<Item = MicroTile> {
    let (mr, nr) = (sketch.mr.max(1), sketch.nr.max(1));
    let b = *block;
    (0..b.nb).step_by(nr).flat_map(move |jr| {
        (0..b.mb).step_by(mr).map(move |ir| {
            let rows = mr.min(b.mb - ir);
            let cols = nr.min(b.nb - jr);
            MicroTile {
                i: b.ic + ir,
                j: b.jc + jr,
                rows,
                cols,
                full: rows == mr && cols == nr,
            }
        })
    })
}

/// Number of iterations of each loop: `(m, n, k)` block counts.
pub fn block_counts(sketch: &ScheduleSketch, spec: &GemmSpec) -> (usize, usize, usize) {
    (
        spec.m.div_ceil(sketch.bm.max(1)),
        spec.n.div_ceil(sketch.bn.max(1)),
        spec.k.div_ceil(sketch.bk.max(1)),
    )
}

/// How many times each pack routine runs: `(pack_a calls, pack_b calls)`.
pub fn pack_call_counts(sketch: &ScheduleSketch, spec: &GemmSpec) -> (usize, usize) {
    let (cm, cn, ck) = block_counts(sketch, spec);
    let count = |dim: LoopDim| match dim {
        LoopDim::M => cm,
        LoopDim::N => cn,
        LoopDim::K => ck,
    };
    let (pa, pb) = pack_depths(&sketch.loop_order);
    let calls = |depth: usize| -> usize {
        sketch.loop_order[..=depth]
            .iter()
            .map(|&d| count(d))
            .product()
    };
    (
        if sketch.pack_a { calls(pa) } else { 0 },
        if sketch.pack_b { calls(pb) } else { 0 },
    )
}
