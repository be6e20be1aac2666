//! Operator specifications, schedule sketches, the micro-kernel IR and its
//! legality machinery.

mod spec;

pub use spec::{ConvSpec, DType, GemmSpec};
mod deps;
mod kernel;
mod sketch;
mod tiles;

pub use deps::{apply_swap, dependence_graph, legal_swaps, DepEdge, DepKind, DependenceGraph};
pub use kernel::{
    validate_kernel, Block, Buffer, KernelIR, MemRef, Parity, Reg, RegClass, RegisterMap, Scope,
    Stage, VInstr,
};
pub use sketch::{
    check_sketch_legality, default_sketch, kernel_mode, pipelined_tile_fits, register_budget,
    sample_sketch, tile_fits, KernelMode, LoopDim, ScheduleSketch, MAX_PREFETCH_DISTANCE,
};
pub use tiles::{
    block_counts, micro_tiles, pack_call_counts, pack_depths, walk_blocks, BlockTile, LoopEvent,
    MicroTile,
};
