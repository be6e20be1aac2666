//! Lane-wise expansion of KernelIR, shared by the scalar-portable emitter
//! and the interpreter.

use serde::{Deserialize, Serialize};

use crate::hw::InstrKind;
use crate::ir::{Buffer, KernelIR, Reg, VInstr};

/// One lane of a register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lane {
    pub reg: Reg,
    pub lane: u32,
}

/// One element of a tile: A at `(row, p + step)`, B at `(p + step, col)`,
/// C at `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElemRef {
    pub buffer: Buffer,
    pub row: u32,
    pub col: u32,
    pub step: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarStmt {
    Load {
        dst: Lane,
        src: ElemRef,
    },
    /// `dst = acc + a * b`, unfused.
    Fma {
        dst: Lane,
        acc: Lane,
        a: Lane,
        b: Lane,
    },
    Store {
        dst: ElemRef,
        src: Lane,
    },
}

/// Lane statements of one instruction, in lane order.
pub fn lower_instr(ins: &VInstr, lanes: usize) -> Vec<ScalarStmt> {
    let n = if ins.op.is_vector() { lanes } else { 1 };
    let lane = |reg: Reg, l: usize| Lane {
        reg,
        lane: l as u32,
    };
    (0..n)
        .map(|l| match ins.op {
            InstrKind::VLoad | InstrKind::VBroadcast | InstrKind::SLoad => {
                let m = ins.mem.expect("load carries a memory operand");
                let col = if ins.op == InstrKind::VBroadcast {
                    m.col
                } else {
                    m.col + l as u32
                };
                ScalarStmt::Load {
                    dst: lane(ins.dst.expect("load has a destination"), l),
                    src: ElemRef {
                        buffer: m.buffer,
                        row: m.row,
                        col,
                        step: m.step,
                    },
                }
            }
            InstrKind::VFma | InstrKind::SFma => ScalarStmt::Fma {
                dst: lane(ins.dst.expect("fma has a destination"), l),
                acc: lane(ins.srcs[0], l),
                a: lane(ins.srcs[1], l),
                b: lane(ins.srcs[2], l),
            },
            InstrKind::VStore | InstrKind::SStore => {
                let m = ins.mem.expect("store carries a memory operand");
                ScalarStmt::Store {
                    dst: ElemRef {
                        buffer: m.buffer,
                        row: m.row,
                        col: m.col + l as u32,
                        step: m.step,
                    },
                    src: lane(ins.srcs[0], l),
                }
            }
        })
        .collect()
}

/// Lane statements per stage block, preserving instruction order.
pub fn lower_scalar(ir: &KernelIR) -> Vec<Vec<ScalarStmt>> {
    ir.stage_blocks
        .iter()
        .map(|b| {
            b.instrs
                .iter()
                .flat_map(|i| lower_instr(i, ir.lanes()))
                .collect()
        })
        .collect()
}
