use crate::error::IrError;
use crate::hw::{HardwareDescriptor, InstrKind};
use crate::ir::{
    check_sketch_legality, kernel_mode, pipelined_tile_fits, register_budget, tile_fits, Block,
    Buffer, GemmSpec, KernelIR, KernelMode, MemRef, Parity, Reg, RegisterMap, ScheduleSketch,
    Scope, Stage, VInstr,
};

struct Emitter {
    next_id: u32,
    vector: bool,
    lanes: u32,
}

impl Emitter {
    fn instr(
        &mut self,
        op: InstrKind,
        dst: Option<Reg>,
        srcs: Vec<Reg>,
        mem: Option<MemRef>,
    ) -> VInstr {
        let id = self.next_id;
        self.next_id += 1;
        VInstr {
            id,
            op,
            dst,
            srcs,
            mem,
        }
    }

    fn kinds(&self) -> (InstrKind, InstrKind, InstrKind, InstrKind) {
        if self.vector {
            (
                InstrKind::VLoad,
                InstrKind::VBroadcast,
                InstrKind::VFma,
                InstrKind::VStore,
            )
        } else {
            (
                InstrKind::SLoad,
                InstrKind::SLoad,
                InstrKind::SFma,
                InstrKind::SStore,
            )
        }
    }

    fn load_row(&mut self, dst: Reg, buffer: Buffer, row: usize, col: usize, step: u32) -> VInstr {
        let (vload, _, _, _) = self.kinds();
        let mem = MemRef {
            buffer,
            row: row as u32,
            col: col as u32,
            step,
            width: self.lanes,
        };
        self.instr(vload, Some(dst), vec![], Some(mem))
    }

    fn broadcast_a(&mut self, dst: Reg, row: usize, step: u32) -> VInstr {
        let (_, bcast, _, _) = self.kinds();
        let mem = MemRef {
            buffer: Buffer::A,
            row: row as u32,
            col: 0,
            step,
            width: 1,
        };
        self.instr(bcast, Some(dst), vec![], Some(mem))
    }

    fn fma(&mut self, acc: Reg, a: Reg, b: Reg) -> VInstr {
        let (_, _, fma, _) = self.kinds();
        self.instr(fma, Some(acc), vec![acc, a, b], None)
    }

    fn store(&mut self, src: Reg, row: usize, col: usize) -> VInstr {
        let (_, _, _, store) = self.kinds();
        let mem = MemRef {
            buffer: Buffer::C,
            row: row as u32,
            col: col as u32,
            step: 0,
            width: self.lanes,
        };
        self.instr(store, None, vec![src], Some(mem))
    }
}

/// Build the register-tiled micro-kernel for `sketch`.
///
/// Each k-step loads one B row and broadcasts A elements into a pool of
/// spare registers; when the pool is smaller than `mr` the step is split
/// into several Load/Compute pairs. With `sketch.pipeline`, full A and B
/// sets are double-buffered and the loads for step `p + 1` follow the FMAs
/// of step `p`. If double-buffering does not fit, `strict` makes that an
/// error; otherwise the kernel is built without it.
pub fn build_kernel_ir(
    sketch: &ScheduleSketch,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    strict: bool,
) -> Result<KernelIR, IrError> {
    let (mr, nr) = (sketch.mr, sketch.nr);
    let mode = kernel_mode(hw, spec.dtype, nr, spec.n)
        .ok_or_else(|| IrError::IllegalSketch(check_sketch_legality(sketch, spec, hw)))?;
    let lanes = mode.lanes();
    let budget = register_budget(hw, mode);
    if !tile_fits(mr, nr, lanes, budget) {
        return Err(IrError::RegisterOverflow(format!(
            "{mr}x{nr} tile needs more than {budget} registers"
        )));
    }
    let pipelined = if sketch.pipeline {
        if pipelined_tile_fits(mr, nr, lanes, budget) {
            true
        } else if strict {
            return Err(IrError::RegisterOverflow(format!(
                "cannot double-buffer a {mr}x{nr} tile in {budget} registers"
            )));
        } else {
            false
        }
    } else {
        false
    };

    let v = nr / lanes;
    let data = |i: usize| match mode {
        KernelMode::Vector { .. } => Reg::vector(i),
        KernelMode::Scalar => Reg::scalar(i),
    };
    let accumulators: Vec<Reg> = (0..mr * v).map(data).collect();
    let acc = |i: usize, c: usize| accumulators[i * v + c];
    let mut next = mr * v;
    let mut take = |count: usize| -> Vec<Reg> {
        let regs = (next..next + count).map(data).collect();
        next += count;
        regs
    };

    let sets = if pipelined { 2 } else { 1 };
    let pool = if pipelined {
        mr
    } else {
        mr.min(budget - mr * v - v)
    };
    let mut b_regs = Vec::new();
    let mut a_regs = Vec::new();
    for _ in 0..sets {
        b_regs.push(take(v));
        a_regs.push(take(pool));
    }
    let address_base = match mode {
        KernelMode::Vector { .. } => 0,
        KernelMode::Scalar => budget,
    };
    let address = (address_base..address_base + 4).map(Reg::scalar).collect();

    let mut e = Emitter {
        next_id: 0,
        vector: mode.is_vector(),
        lanes: lanes as u32,
    };
    let mut blocks = Vec::new();

    let init: Vec<VInstr> = (0..mr)
        .flat_map(|i| (0..v).map(move |c| (i, c)))
        .map(|(i, c)| e.load_row(acc(i, c), Buffer::C, i, c * lanes, 0))
        .collect();
    blocks.push(Block {
        stage: Stage::Load,
        scope: Scope::Prologue,
        instrs: init,
    });

    let every = Scope::Step {
        parity: Parity::Every,
        skip_last: false,
    };
    if pipelined {
        let load_set = |e: &mut Emitter, set: usize, step: u32| -> Vec<VInstr> {
            let mut out: Vec<VInstr> = (0..v)
                .map(|c| e.load_row(b_regs[set][c], Buffer::B, 0, c * lanes, step))
                .collect();
            out.extend((0..mr).map(|i| e.broadcast_a(a_regs[set][i], i, step)));
            out
        };
        let first = load_set(&mut e, 0, 0);
        blocks.push(Block {
            stage: Stage::Load,
            scope: Scope::Prologue,
            instrs: first,
        });
        for (parity, cur) in [(Parity::Even, 0), (Parity::Odd, 1)] {
            let compute: Vec<VInstr> = (0..mr)
                .flat_map(|i| (0..v).map(move |c| (i, c)))
                .map(|(i, c)| e.fma(acc(i, c), a_regs[cur][i], b_regs[cur][c]))
                .collect();
            blocks.push(Block {
                stage: Stage::Compute,
                scope: Scope::Step {
                    parity,
                    skip_last: false,
                },
                instrs: compute,
            });
            let prefetch = load_set(&mut e, 1 - cur, 1);
            blocks.push(Block {
                stage: Stage::Load,
                scope: Scope::Step {
                    parity,
                    skip_last: true,
                },
                instrs: prefetch,
            });
        }
    } else {
        let mut r0 = 0;
        while r0 < mr {
            let r1 = (r0 + pool).min(mr);
            let mut load = Vec::new();
            if r0 == 0 {
                load.extend((0..v).map(|c| e.load_row(b_regs[0][c], Buffer::B, 0, c * lanes, 0)));
            }
            load.extend((r0..r1).map(|i| e.broadcast_a(a_regs[0][i - r0], i, 0)));
            blocks.push(Block {
                stage: Stage::Load,
                scope: every,
                instrs: load,
            });
            let compute: Vec<VInstr> = (r0..r1)
                .flat_map(|i| (0..v).map(move |c| (i, c)))
                .map(|(i, c)| e.fma(acc(i, c), a_regs[0][i - r0], b_regs[0][c]))
                .collect();
            blocks.push(Block {
                stage: Stage::Compute,
                scope: every,
                instrs: compute,
            });
            r0 = r1;
        }
    }

    let stores: Vec<VInstr> = (0..mr)
        .flat_map(|i| (0..v).map(move |c| (i, c)))
        .map(|(i, c)| e.store(acc(i, c), i, c * lanes))
        .collect();
    blocks.push(Block {
        stage: Stage::Store,
        scope: Scope::Epilogue,
        instrs: stores,
    });

    Ok(KernelIR {
        mr,
        nr,
        dtype: spec.dtype,
        mode,
        pipeline_depth: if pipelined { 2 } else { 1 },
        register_map: RegisterMap {
            accumulators,
            a_regs,
            b_regs,
            address,
        },
        stage_blocks: blocks,
    })
}
