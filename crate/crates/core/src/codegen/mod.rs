//! Kernel construction and C emission.
//!
//! Kernel emission is table-driven: each abstract instruction renders
//! through the descriptor's mnemonic template, and the scalar-portable
//! flavor expands every instruction lane by lane as the always-available
//! fallback.

mod build;
mod emit;
mod im2col;
mod lower;
mod regtile;

pub use build::build_kernel_ir;
pub use emit::{
    emit_kernel_source, emit_operator, emit_sketch_source, gemm_symbol, kernel_symbol,
    naive_gemm_source, rendered_lines, KernelFlavor, SourceArtifact, SourceFile,
};
pub use im2col::{conv_to_gemm, emit_im2col_source, Gather, Im2colPlan};
pub use lower::{lower_instr, lower_scalar, ElemRef, Lane, ScalarStmt};
pub use regtile::{choose_register_tile, feasible_tiles, native_mode, next_smaller_tile};
