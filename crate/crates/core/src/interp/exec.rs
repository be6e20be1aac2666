use std::collections::BTreeMap;

use crate::codegen::{lower_instr, KernelFlavor, ScalarStmt};
use crate::error::InterpError;
use crate::ir::{
    micro_tiles, walk_blocks, Buffer, GemmSpec, KernelIR, LoopEvent, Reg, RegClass, ScheduleSketch,
    Scope,
};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy)]
struct Elem {
    buffer: Buffer,
    row: usize,
    col: usize,
    step: usize,
}

/// Register-file op on `n` consecutive slots.
#[derive(Debug, Clone, Copy)]
enum Op {
    Load {
        dst: usize,
        n: usize,
        src: Elem,
        broadcast: bool,
    },
    Fma {
        dst: usize,
        acc: usize,
        a: usize,
        b: usize,
        n: usize,
    },
    Store {
        src: usize,
        n: usize,
        dst: Elem,
    },
}

struct Compiled {
    blocks: Vec<(Scope, Vec<Op>)>,
    slots: usize,
    names: Vec<String>,
}

fn compile(ir: &KernelIR, flavor: KernelFlavor) -> Compiled {
    let lanes = ir.lanes();
    let width = |r: &Reg| {
        if r.class == RegClass::Vector {
            lanes
        } else {
            1
        }
    };
    let mut base: BTreeMap<Reg, usize> = BTreeMap::new();
    let mut names = Vec::new();
    for ins in ir.instrs() {
        for r in ins.dst.iter().chain(&ins.srcs) {
            if !base.contains_key(r) {
                base.insert(*r, names.len());
                for l in 0..width(r) {
                    names.push(format!("{r}[{l}]"));
                }
            }
        }
    }
    let elem = |buffer, row: u32, col: u32, step: u32| Elem {
        buffer,
        row: row as usize,
        col: col as usize,
        step: step as usize,
    };
    let blocks = ir
        .stage_blocks
        .iter()
        .map(|block| {
            let mut ops = Vec::new();
            for ins in &block.instrs {
                match flavor {
                    KernelFlavor::Templated => {
                        let n = if ins.op.is_vector() { lanes } else { 1 };
                        if ins.op.is_load() {
                            let m = ins.mem.unwrap();
                            ops.push(Op::Load {
                                dst: base[&ins.dst.unwrap()],
                                n,
                                src: elem(m.buffer, m.row, m.col, m.step),
                                broadcast: ins.op == crate::hw::InstrKind::VBroadcast,
                            });
                        } else if ins.op.is_fma() {
                            ops.push(Op::Fma {
                                dst: base[&ins.dst.unwrap()],
                                acc: base[&ins.srcs[0]],
                                a: base[&ins.srcs[1]],
                                b: base[&ins.srcs[2]],
                                n,
                            });
                        } else {
                            let m = ins.mem.unwrap();
                            ops.push(Op::Store {
                                src: base[&ins.srcs[0]],
                                n,
                                dst: elem(m.buffer, m.row, m.col, m.step),
                            });
                        }
                    }
                    KernelFlavor::ScalarPortable => {
                        let slot = |l: crate::codegen::Lane| base[&l.reg] + l.lane as usize;
                        for stmt in lower_instr(ins, lanes) {
                            ops.push(match stmt {
                                ScalarStmt::Load { dst, src } => Op::Load {
                                    dst: slot(dst),
                                    n: 1,
                                    src: elem(src.buffer, src.row, src.col, src.step),
                                    broadcast: false,
                                },
                                ScalarStmt::Fma { dst, acc, a, b } => Op::Fma {
                                    dst: slot(dst),
                                    acc: slot(acc),
                                    a: slot(a),
                                    b: slot(b),
                                    n: 1,
                                },
                                ScalarStmt::Store { dst, src } => Op::Store {
                                    src: slot(src),
                                    n: 1,
                                    dst: elem(dst.buffer, dst.row, dst.col, dst.step),
                                },
                            });
                        }
                    }
                }
            }
            (block.scope, ops)
        })
        .collect();
    Compiled {
        blocks,
        slots: names.len(),
        names,
    }
}

/// Tile operands of one micro-kernel call.
struct TileView<'a, T> {
    kc: usize,
    mr: usize,
    nr: usize,
    a: &'a [T],
    a_off: usize,
    a_rs: usize,
    a_cs: usize,
    b: &'a [T],
    b_off: usize,
    b_rs: usize,
    b_cs: usize,
    c_off: usize,
    ldc: usize,
}

impl<T: Element> TileView<'_, T> {
    fn read(&self, e: &Elem, p: usize, c: &[T]) -> Result<T, InterpError> {
        let k = p + e.step;
        let oob = || {
            InterpError::OutOfBounds(format!(
                "{:?}[{}][{}] at k-step {p}",
                e.buffer, e.row, e.col
            ))
        };
        let (buf, idx) = match e.buffer {
            Buffer::A if e.row < self.mr && k < self.kc => {
                (self.a, self.a_off + e.row * self.a_rs + k * self.a_cs)
            }
            Buffer::B if e.col < self.nr && k < self.kc => {
                (self.b, self.b_off + k * self.b_rs + e.col * self.b_cs)
            }
            Buffer::C if e.row < self.mr && e.col < self.nr => {
                (c, self.c_off + e.row * self.ldc + e.col)
            }
            _ => return Err(oob()),
        };
        buf.get(idx).copied().ok_or_else(oob)
    }

    fn c_index(&self, e: &Elem) -> Result<usize, InterpError> {
        if e.buffer != Buffer::C || e.row >= self.mr || e.col >= self.nr {
            return Err(InterpError::OutOfBounds(format!(
                "store to {:?}[{}][{}]",
                e.buffer, e.row, e.col
            )));
        }
        Ok(self.c_off + e.row * self.ldc + e.col)
    }
}

struct RegFile<T> {
    vals: Vec<T>,
    init: Vec<bool>,
}

impl<T: Element> RegFile<T> {
    fn get(&self, slot: usize, prog: &Compiled) -> Result<T, InterpError> {
        if self.init[slot] {
            Ok(self.vals[slot])
        } else {
            Err(InterpError::UninitializedRegister(prog.names[slot].clone()))
        }
    }

    fn set(&mut self, slot: usize, v: T) {
        self.vals[slot] = v;
        self.init[slot] = true;
    }
}

fn run_ops<T: Element>(
    ops: &[Op],
    p: usize,
    view: &TileView<'_, T>,
    c: &mut [T],
    regs: &mut RegFile<T>,
    prog: &Compiled,
) -> Result<(), InterpError> {
    for op in ops {
        match *op {
            Op::Load {
                dst,
                n,
                src,
                broadcast,
            } => {
                for l in 0..n {
                    let e = if broadcast {
                        src
                    } else {
                        Elem {
                            col: src.col + l,
                            ..src
                        }
                    };
                    let v = view.read(&e, p, c)?;
                    regs.set(dst + l, v);
                }
            }
            Op::Fma { dst, acc, a, b, n } => {
                for l in 0..n {
                    let v = regs.get(acc + l, prog)?
                        + regs.get(a + l, prog)? * regs.get(b + l, prog)?;
                    regs.set(dst + l, v);
                }
            }
            Op::Store { src, n, dst } => {
                for l in 0..n {
                    let idx = view.c_index(&Elem {
                        col: dst.col + l,
                        ..dst
                    })?;
                    let v = regs.get(src + l, prog)?;
                    *c.get_mut(idx)
                        .ok_or_else(|| InterpError::OutOfBounds(format!("C index {idx}")))? = v;
                }
            }
        }
    }
    Ok(())
}

fn run_kernel<T: Element>(
    prog: &Compiled,
    view: &TileView<'_, T>,
    c: &mut [T],
    regs: &mut RegFile<T>,
) -> Result<(), InterpError> {
    regs.init.iter_mut().for_each(|b| *b = false);
    for (scope, ops) in &prog.blocks {
        if *scope == Scope::Prologue {
            run_ops(ops, 0, view, c, regs, prog)?;
        }
    }
    for p in 0..view.kc {
        for (scope, ops) in &prog.blocks {
            if scope.runs_at(p, view.kc) {
                run_ops(ops, p, view, c, regs, prog)?;
            }
        }
    }
    for (scope, ops) in &prog.blocks {
        if *scope == Scope::Epilogue {
            run_ops(ops, view.kc, view, c, regs, prog)?;
        }
    }
    Ok(())
}

/// Execute the blocked operator on concrete inputs, simulating the packing
/// layout, the loop nest and the kernel instructions in order. C starts at
/// zero. The templated flavor runs whole-vector instructions; the
/// scalar-portable flavor runs the lane-wise expansion.
pub fn interpret_program<T: Element>(
    sketch: &ScheduleSketch,
    ir: &KernelIR,
    spec: &GemmSpec,
    a: &Tensor<T>,
    b: &Tensor<T>,
    flavor: KernelFlavor,
) -> Result<Tensor<T>, InterpError> {
    let (m, k, n) = (spec.m, spec.k, spec.n);
    if a.shape != [m, k] || b.shape != [k, n] {
        return Err(InterpError::ShapeMismatch(format!(
            "operands {:?} x {:?} do not match {m}x{k}x{n}",
            a.shape, b.shape
        )));
    }
    if ir.mr != sketch.mr || ir.nr != sketch.nr {
        return Err(InterpError::Malformed(format!(
            "kernel tile {}x{} differs from sketch tile {}x{}",
            ir.mr, ir.nr, sketch.mr, sketch.nr
        )));
    }
    let (mr, nr) = (sketch.mr, sketch.nr);
    let prog = compile(ir, flavor);
    let mut regs = RegFile {
        vals: vec![T::default(); prog.slots],
        init: vec![false; prog.slots],
    };
    let mut c = vec![T::default(); m * n];
    let mut pa = vec![
        T::default();
        if sketch.pack_a {
            sketch.bm * sketch.bk
        } else {
            0
        }
    ];
    let mut pb = vec![
        T::default();
        if sketch.pack_b {
            sketch.bk * sketch.bn
        } else {
            0
        }
    ];
    let mut result = Ok(());

    walk_blocks(sketch, spec, |event| {
        if result.is_err() {
            return;
        }
        match event {
            LoopEvent::PackA { ic, pc, mb, kb } => {
                let mut ir0 = 0;
                while ir0 + mr <= mb {
                    for p in 0..kb {
                        for i in 0..mr {
                            pa[ir0 * kb + p * mr + i] = a.data[(ic + ir0 + i) * k + pc + p];
                        }
                    }
                    ir0 += mr;
                }
            }
            LoopEvent::PackB { pc, jc, kb, nb } => {
                let mut jr = 0;
                while jr + nr <= nb {
                    for p in 0..kb {
                        for j in 0..nr {
                            pb[jr * kb + p * nr + j] = b.data[(pc + p) * n + jc + jr + j];
                        }
                    }
                    jr += nr;
                }
            }
            LoopEvent::Block(blk) => {
                for t in micro_tiles(sketch, &blk) {
                    let (ir0, jr0) = (t.i - blk.ic, t.j - blk.jc);
                    if t.full {
                        let (a_buf, a_off, a_rs, a_cs) = if sketch.pack_a {
                            (&pa[..], ir0 * blk.kb, 1, mr)
                        } else {
                            (&a.data[..], t.i * k + blk.pc, k, 1)
                        };
                        let (b_buf, b_off, b_rs, b_cs) = if sketch.pack_b {
                            (&pb[..], jr0 * blk.kb, nr, 1)
                        } else {
                            (&b.data[..], blk.pc * n + t.j, n, 1)
                        };
                        let view = TileView {
                            kc: blk.kb,
                            mr,
                            nr,
                            a: a_buf,
                            a_off,
                            a_rs,
                            a_cs,
                            b: b_buf,
                            b_off,
                            b_rs,
                            b_cs,
                            c_off: t.i * n + t.j,
                            ldc: n,
                        };
                        if let Err(e) = run_kernel(&prog, &view, &mut c, &mut regs) {
                            result = Err(e);
                            return;
                        }
                    } else {
                        for i in 0..t.rows {
                            for j in 0..t.cols {
                                let ci = (t.i + i) * n + t.j + j;
                                let mut acc = c[ci];
                                for p in 0..blk.kb {
                                    acc = acc
                                        + a.data[(t.i + i) * k + blk.pc + p]
                                            * b.data[(blk.pc + p) * n + t.j + j];
                                }
                                c[ci] = acc;
                            }
                        }
                    }
                }
            }
        }
    });
    result?;
    Tensor::new(vec![m, n], c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::build_kernel_ir;
    use crate::hw::{parse_descriptor, HardwareDescriptor};
    use crate::interp::{diff_test, naive_gemm, random_inputs};
    use crate::ir::{apply_swap, default_sketch, legal_swaps, DType, LoopDim, Stage};

    fn c910() -> HardwareDescriptor {
        parse_descriptor(include_str!("../../../../descriptors/c910-like.toml")).unwrap()
    }

    fn sketch(bm: usize, bn: usize, bk: usize, mr: usize, nr: usize) -> ScheduleSketch {
        ScheduleSketch {
            bm,
            bn,
            bk,
            mr,
            nr,
            loop_order: LoopDim::DEFAULT_ORDER,
            pack_a: true,
            pack_b: true,
            pipeline: false,
            prefetch_distance: 0,
        }
    }

    fn run(
        s: &ScheduleSketch,
        spec: &GemmSpec,
        flavor: KernelFlavor,
    ) -> (Tensor<f64>, Tensor<f64>) {
        let ir = build_kernel_ir(s, spec, &c910(), true).unwrap();
        let (a, b) = random_inputs::<f64>(spec, 7);
        (
            interpret_program(s, &ir, spec, &a, &b, flavor).unwrap(),
            naive_gemm(&a, &b).unwrap(),
        )
    }

    #[test]
    fn default_sketch_is_bit_exact() {
        let spec = GemmSpec::new(8, 8, 8, DType::F64).unwrap();
        let s = default_sketch(&spec, &c910()).unwrap();
        for flavor in [KernelFlavor::Templated, KernelFlavor::ScalarPortable] {
            let (c, r) = run(&s, &spec, flavor);
            assert_eq!(c, r);
        }
    }

    #[test]
    fn fringes_and_every_order_are_bit_exact() {
        let spec = GemmSpec::new(13, 11, 9, DType::F64).unwrap();
        for order in LoopDim::ALL_ORDERS {
            for (pa, pb) in [(true, true), (false, true), (true, false), (false, false)] {
                let mut s = sketch(8, 4, 5, 4, 2);
                s.loop_order = order;
                s.pack_a = pa;
                s.pack_b = pb;
                let (c, r) = run(&s, &spec, KernelFlavor::Templated);
                assert_eq!(c, r, "{order:?} pack_a={pa} pack_b={pb}");
            }
        }
    }

    #[test]
    fn pipeline_does_not_change_results() {
        let spec = GemmSpec::new(16, 7, 16, DType::F64).unwrap();
        let mut s = sketch(8, 8, 7, 4, 4);
        let (off, r) = run(&s, &spec, KernelFlavor::Templated);
        s.pipeline = true;
        let (on, _) = run(&s, &spec, KernelFlavor::Templated);
        assert_eq!(off, r);
        assert_eq!(on, off);
    }

    #[test]
    fn legal_swaps_preserve_results() {
        let spec = GemmSpec::new(8, 6, 8, DType::F64).unwrap();
        let s = sketch(8, 8, 6, 4, 4);
        let mut ir = build_kernel_ir(&s, &spec, &c910(), true).unwrap();
        let (a, b) = random_inputs::<f64>(&spec, 3);
        let reference = interpret_program(&s, &ir, &spec, &a, &b, KernelFlavor::Templated).unwrap();
        for block in &mut ir.stage_blocks {
            for (i, _) in legal_swaps(block) {
                assert!(apply_swap(block, i));
            }
        }
        let swapped = interpret_program(&s, &ir, &spec, &a, &b, KernelFlavor::Templated).unwrap();
        assert_eq!(swapped, reference);
    }

    #[test]
    fn dropped_store_fails_the_diff() {
        let spec = GemmSpec::new(8, 8, 8, DType::F64).unwrap();
        let s = sketch(8, 8, 8, 4, 4);
        let mut ir = build_kernel_ir(&s, &spec, &c910(), true).unwrap();
        assert!(diff_test(&spec, &s, &ir, 1).pass);
        let store = ir
            .stage_blocks
            .iter_mut()
            .find(|b| b.stage == Stage::Store)
            .unwrap();
        store.instrs.pop();
        assert!(!diff_test(&spec, &s, &ir, 1).pass);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let spec = GemmSpec::new(8, 8, 8, DType::F64).unwrap();
        let s = sketch(8, 8, 8, 4, 4);
        let ir = build_kernel_ir(&s, &spec, &c910(), true).unwrap();
        let a = Tensor::<f64>::zeros(vec![8, 7]);
        let b = Tensor::<f64>::zeros(vec![8, 8]);
        let e = interpret_program(&s, &ir, &spec, &a, &b, KernelFlavor::Templated).unwrap_err();
        assert!(matches!(e, InterpError::ShapeMismatch(_)));
    }

    #[test]
    fn uninitialized_register_is_reported() {
        let spec = GemmSpec::new(4, 4, 4, DType::F64).unwrap();
        let s = sketch(4, 4, 4, 4, 4);
        let mut ir = build_kernel_ir(&s, &spec, &c910(), true).unwrap();
        ir.stage_blocks.retain(|b| b.scope != Scope::Prologue);
        let (a, b) = random_inputs::<f64>(&spec, 3);
        let e =
            interpret_program(&s, &ir, &spec, &a, &b, KernelFlavor::ScalarPortable).unwrap_err();
        assert!(matches!(e, InterpError::UninitializedRegister(_)));
    }
}
