//! C source emission for sketches and micro-kernels.
//!
//! One operator is one translation unit: `<name>.c` holds the blocked loop
//! nest, the packing routines and the scalar fringe, and includes
//! `<name>_kernel.inc` with the micro-kernel. The kernel ABI is
//! `(kc, a, a_rs, a_cs, b, b_rs, b_cs, c, ldc)`; element `(i, p)` of the A
//! tile is `a[i * a_rs + p * a_cs]`, element `(p, j)` of the B tile is
//! `b[p * b_rs + j * b_cs]` and C is row-major with leading dimension `ldc`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::lower::{lower_instr, ElemRef, Lane, ScalarStmt};
use crate::error::IrError;
use crate::hw::{HardwareDescriptor, InstrKind, IsaStyle};
use crate::ir::{
    pack_depths, Buffer, GemmSpec, KernelIR, LoopDim, Parity, Reg, RegClass, ScheduleSketch, Scope,
    VInstr,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFlavor {
    /// Lane-wise scalar statements in base C.
    ScalarPortable,
    /// Descriptor templates inside delimited asm or intrinsic blocks.
    Templated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceArtifact {
    pub files: Vec<SourceFile>,
    pub entry_symbol: String,
}

impl SourceArtifact {
    pub fn file(&self, path: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.path == path)
            .map(|f| f.text.as_str())
    }

    /// All file texts, concatenated in order.
    pub fn all_text(&self) -> String {
        self.files
            .iter()
            .map(|f| f.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// The translation unit to hand to the compiler.
    pub fn main_file(&self) -> &SourceFile {
        self.files
            .iter()
            .find(|f| f.path.ends_with(".c"))
            .unwrap_or(&self.files[0])
    }

    pub fn merge(mut self, other: SourceArtifact) -> SourceArtifact {
        self.files.extend(other.files);
        self
    }
}

pub fn kernel_symbol(name: &str) -> String {
    format!("forge_ukernel_{name}")
}

pub fn gemm_symbol(name: &str) -> String {
    format!("forge_gemm_{name}")
}

fn block_comment(index: usize, block: &crate::ir::Block) -> String {
    let scope = match block.scope {
        Scope::Prologue => "prologue".to_string(),
        Scope::Epilogue => "epilogue".to_string(),
        Scope::Step { parity, skip_last } => {
            let mut s = match parity {
                Parity::Every => "every step".to_string(),
                Parity::Even => "even steps".to_string(),
                Parity::Odd => "odd steps".to_string(),
            };
            if skip_last {
                s.push_str(", not last");
            }
            s
        }
    };
    format!("block {index}: {:?}, {scope}", block.stage).to_lowercase()
}

fn step_guard(scope: Scope) -> Option<String> {
    let Scope::Step { parity, skip_last } = scope else {
        return None;
    };
    let mut conds = Vec::new();
    match parity {
        Parity::Every => {}
        Parity::Even => conds.push("p % 2 == 0".to_string()),
        Parity::Odd => conds.push("p % 2 == 1".to_string()),
    }
    if skip_last {
        conds.push("p + 1 < kc".to_string());
    }
    (!conds.is_empty()).then(|| conds.join(" && "))
}

fn elem_expr(e: &ElemRef) -> String {
    match e.buffer {
        Buffer::A => format!("a[{} * a_rs + (p + {}) * a_cs]", e.row, e.step),
        Buffer::B => format!("b[(p + {}) * b_rs + {} * b_cs]", e.step, e.col),
        Buffer::C => format!("c[{} * ldc + {}]", e.row, e.col),
    }
}

fn addr_expr(ins: &VInstr) -> String {
    let m = ins.mem.expect("memory instruction");
    match m.buffer {
        Buffer::A => format!("(a + {} * a_rs + (p + {}) * a_cs)", m.row, m.step),
        Buffer::B => format!("(b + (p + {}) * b_rs + {} * b_cs)", m.step, m.col),
        Buffer::C => format!("(c + {} * ldc + {})", m.row, m.col),
    }
}

fn lane_expr(l: &Lane) -> String {
    format!("{}[{}]", l.reg, l.lane)
}

fn data_regs(ir: &KernelIR) -> BTreeSet<Reg> {
    ir.instrs()
        .flat_map(|i| i.dst.into_iter().chain(i.srcs.iter().copied()))
        .collect()
}

fn kernel_signature(ir: &KernelIR, name: &str) -> String {
    let t = ir.dtype.c_type();
    format!(
        "static void {}(long kc, const {t} *restrict a, long a_rs, long a_cs,\n    const {t} *restrict b, long b_rs, long b_cs, {t} *restrict c, long ldc)",
        kernel_symbol(name)
    )
}

/// Emit the micro-kernel. Both flavors keep the IR instruction order.
pub fn emit_kernel_source(
    ir: &KernelIR,
    hw: &HardwareDescriptor,
    flavor: KernelFlavor,
    name: &str,
) -> Result<SourceArtifact, IrError> {
    let text = match flavor {
        KernelFlavor::ScalarPortable => scalar_kernel(ir, name),
        KernelFlavor::Templated => templated_kernel(ir, hw, name)?,
    };
    Ok(SourceArtifact {
        files: vec![SourceFile {
            path: format!("{name}_kernel.inc"),
            text,
        }],
        entry_symbol: kernel_symbol(name),
    })
}

fn kernel_header(ir: &KernelIR, flavor: &str) -> String {
    format!(
        "/* {}x{} {} micro-kernel, {} lanes, pipeline depth {}, {flavor} flavor. */\n",
        ir.mr,
        ir.nr,
        ir.dtype,
        ir.lanes(),
        ir.pipeline_depth
    )
}

/// Emit blocks in order; `body` renders one instruction into lines.
fn emit_blocks(
    out: &mut String,
    ir: &KernelIR,
    mut body: impl FnMut(&mut String, &VInstr, &str),
    mut open: impl FnMut(&mut String, usize, &str),
    mut close: impl FnMut(&mut String, usize, &str),
) {
    let render = |out: &mut String,
                  idx: usize,
                  indent: &str,
                  body: &mut dyn FnMut(&mut String, &VInstr, &str),
                  open: &mut dyn FnMut(&mut String, usize, &str),
                  close: &mut dyn FnMut(&mut String, usize, &str)| {
        let block = &ir.stage_blocks[idx];
        let _ = writeln!(out, "{indent}/* {} */", block_comment(idx, block));
        let (inner, guarded) = match step_guard(block.scope) {
            Some(g) => {
                let _ = writeln!(out, "{indent}if ({g}) {{");
                (format!("{indent}    "), true)
            }
            None => (indent.to_string(), false),
        };
        open(out, idx, &inner);
        for ins in &block.instrs {
            body(out, ins, &inner);
        }
        close(out, idx, &inner);
        if guarded {
            let _ = writeln!(out, "{indent}}}");
        }
    };
    let phases: [(&dyn Fn(Scope) -> bool, bool); 3] = [
        (&|s| s == Scope::Prologue, false),
        (&|s| matches!(s, Scope::Step { .. }), true),
        (&|s| s == Scope::Epilogue, false),
    ];
    for (pick, in_loop) in phases {
        let idxs: Vec<usize> = (0..ir.stage_blocks.len())
            .filter(|&i| pick(ir.stage_blocks[i].scope))
            .collect();
        if idxs.is_empty() {
            continue;
        }
        if in_loop {
            out.push_str("    for (p = 0; p < kc; ++p) {\n");
            for i in idxs {
                render(out, i, "        ", &mut body, &mut open, &mut close);
            }
            out.push_str("    }\n");
        } else {
            for i in idxs {
                render(out, i, "    ", &mut body, &mut open, &mut close);
            }
        }
    }
}

fn scalar_kernel(ir: &KernelIR, name: &str) -> String {
    let t = ir.dtype.c_type();
    let mut out = kernel_header(ir, "scalar-portable");
    let _ = writeln!(out, "{}\n{{", kernel_signature(ir, name));
    let lanes = |r: &Reg| {
        if r.class == RegClass::Vector {
            ir.lanes()
        } else {
            1
        }
    };
    for r in data_regs(ir) {
        let _ = writeln!(out, "    {t} {r}[{}] = {{0}};", lanes(&r));
    }
    out.push_str("    long p = 0;\n");
    emit_blocks(
        &mut out,
        ir,
        |out, ins, indent| {
            for stmt in lower_instr(ins, ir.lanes()) {
                let line = match stmt {
                    ScalarStmt::Load { dst, src } => {
                        format!("{} = {};", lane_expr(&dst), elem_expr(&src))
                    }
                    ScalarStmt::Fma { dst, acc, a, b } => format!(
                        "{} = {} + {} * {};",
                        lane_expr(&dst),
                        lane_expr(&acc),
                        lane_expr(&a),
                        lane_expr(&b)
                    ),
                    ScalarStmt::Store { dst, src } => {
                        format!("{} = {};", elem_expr(&dst), lane_expr(&src))
                    }
                };
                let _ = writeln!(out, "{indent}{line}");
            }
        },
        |_, _, _| {},
        |_, _, _| {},
    );
    out.push_str("    (void)p;\n}\n");
    out
}

fn template_for(
    hw: &HardwareDescriptor,
    kind: InstrKind,
) -> Result<&crate::hw::InstructionTemplate, IrError> {
    hw.isa.template(kind).ok_or(IrError::MissingTemplate(kind))
}

fn render_instr(
    ins: &VInstr,
    hw: &HardwareDescriptor,
    reg_name: &dyn Fn(Reg) -> String,
    addr: &str,
) -> Result<String, IrError> {
    let tpl = template_for(hw, ins.op)?;
    let dst = ins.dst.map(reg_name).unwrap_or_default();
    let (src1, src2) = if ins.op.is_fma() {
        (reg_name(ins.srcs[1]), reg_name(ins.srcs[2]))
    } else if ins.op.is_store() {
        (reg_name(ins.srcs[0]), String::new())
    } else {
        (String::new(), String::new())
    };
    Ok(tpl.render(&dst, &src1, &src2, addr))
}

fn c_string(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn templated_kernel(ir: &KernelIR, hw: &HardwareDescriptor, name: &str) -> Result<String, IrError> {
    let kinds: BTreeSet<InstrKind> = ir.instrs().map(|i| i.op).collect();
    for &k in &kinds {
        template_for(hw, k)?;
    }
    let t = ir.dtype.c_type();
    let style = hw.isa.style;
    let mut out = kernel_header(ir, "templated");
    if style == IsaStyle::Intrinsic {
        write_vector_helpers(&mut out, ir);
    }
    let _ = writeln!(out, "{}\n{{", kernel_signature(ir, name));
    if style == IsaStyle::Intrinsic {
        for r in data_regs(ir) {
            match r.class {
                RegClass::Vector => {
                    let _ = writeln!(out, "    forge_v {r} = {{0}};");
                }
                RegClass::Scalar => {
                    let _ = writeln!(out, "    {t} {r} = 0;");
                }
            }
        }
    }
    out.push_str("    long p = 0;\n");

    let prefix = |r: Reg| match r.class {
        RegClass::Vector => format!("{}{}", hw.isa.vector_prefix, r.index),
        RegClass::Scalar => format!("{}{}", hw.isa.scalar_prefix, r.index),
    };
    let c_var = |r: Reg| r.to_string();
    let mut err = None;
    emit_blocks(
        &mut out,
        ir,
        |out, ins, indent| {
            let line = match style {
                IsaStyle::Asm => {
                    let addr = if ins.mem.is_some() { "%0" } else { "" };
                    match render_instr(ins, hw, &prefix, addr) {
                        Ok(text) if ins.mem.is_some() => format!(
                            "__asm__ volatile(\"{}\" : : \"r\"({}) : \"memory\");",
                            c_string(&text),
                            addr_expr(ins)
                        ),
                        Ok(text) => format!("__asm__ volatile(\"{}\");", c_string(&text)),
                        Err(e) => {
                            err.get_or_insert(e);
                            String::new()
                        }
                    }
                }
                IsaStyle::Intrinsic => {
                    let addr = if ins.mem.is_some() {
                        addr_expr(ins)
                    } else {
                        String::new()
                    };
                    match render_instr(ins, hw, &c_var, &addr) {
                        Ok(text) => text,
                        Err(e) => {
                            err.get_or_insert(e);
                            String::new()
                        }
                    }
                }
            };
            let _ = writeln!(out, "{indent}{line}");
        },
        |out, idx, indent| {
            let _ = writeln!(out, "{indent}/* forge:{} begin {idx} */", style_tag(style));
        },
        |out, idx, indent| {
            let _ = writeln!(out, "{indent}/* forge:{} end {idx} */", style_tag(style));
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    out.push_str("    (void)p;\n");
    if style == IsaStyle::Asm {
        out.push_str("    (void)kc; (void)a; (void)a_rs; (void)a_cs; (void)b; (void)b_rs; (void)b_cs; (void)c; (void)ldc;\n");
    }
    out.push_str("}\n");
    Ok(out)
}

fn style_tag(style: IsaStyle) -> &'static str {
    match style {
        IsaStyle::Asm => "asm",
        IsaStyle::Intrinsic => "intrinsic",
    }
}

fn write_vector_helpers(out: &mut String, ir: &KernelIR) {
    let t = ir.dtype.c_type();
    let lanes = ir.lanes();
    let bytes = lanes * ir.dtype.bytes();
    let _ = write!(
        out,
        "#include <string.h>\n\
         typedef {t} forge_v __attribute__((vector_size({bytes})));\n\
         static inline forge_v forge_vload(const {t} *p)\n{{\n    forge_v r;\n    memcpy(&r, p, sizeof r);\n    return r;\n}}\n\
         static inline forge_v forge_vbroadcast(const {t} *p)\n{{\n    forge_v r;\n    for (int l = 0; l < {lanes}; ++l)\n        r[l] = *p;\n    return r;\n}}\n\
         static inline void forge_vstore({t} *p, forge_v v)\n{{\n    memcpy(p, &v, sizeof v);\n}}\n"
    );
}

/// Emit the blocked loop nest calling the micro-kernel for full tiles and
/// the scalar fringe otherwise.
pub fn emit_sketch_source(sketch: &ScheduleSketch, spec: &GemmSpec, name: &str) -> SourceArtifact {
    let t = spec.dtype.c_type();
    let s = sketch;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "/* Blocked {} GEMM: bm={} bn={} bk={}, register tile {}x{}, loops {} > {} > {}. */",
        spec.dtype, s.bm, s.bn, s.bk, s.mr, s.nr, s.loop_order[0], s.loop_order[1], s.loop_order[2]
    );
    out.push_str("#include <stdlib.h>\n\n");
    let _ = writeln!(out, "#include \"{name}_kernel.inc\"\n");
    let _ = writeln!(out, "#define FORGE_MR {}\n#define FORGE_NR {}", s.mr, s.nr);
    let _ = writeln!(
        out,
        "#define FORGE_BM {}\n#define FORGE_BN {}\n#define FORGE_BK {}",
        s.bm, s.bn, s.bk
    );
    out.push_str("#define FORGE_MIN(x, y) ((x) < (y) ? (x) : (y))\n\n");

    if s.pack_a {
        let _ = write!(
            out,
            "/* Full FORGE_MR-row panels, k-major: element (i, p) of panel ir at pa[ir * kb + p * FORGE_MR + i]. */\n\
             static void forge_pack_a_{name}(const {t} *a, long lda, long mb, long kb, {t} *pa)\n{{\n\
             \x20   long ir, p, i;\n\
             \x20   for (ir = 0; ir + FORGE_MR <= mb; ir += FORGE_MR)\n\
             \x20       for (p = 0; p < kb; ++p)\n\
             \x20           for (i = 0; i < FORGE_MR; ++i)\n\
             \x20               pa[ir * kb + p * FORGE_MR + i] = a[(ir + i) * lda + p];\n}}\n\n"
        );
    }
    if s.pack_b {
        let _ = write!(
            out,
            "/* Full FORGE_NR-column panels, k-major: element (p, j) of panel jr at pb[jr * kb + p * FORGE_NR + j]. */\n\
             static void forge_pack_b_{name}(const {t} *b, long ldb, long kb, long nb, {t} *pb)\n{{\n\
             \x20   long jr, p, j;\n\
             \x20   for (jr = 0; jr + FORGE_NR <= nb; jr += FORGE_NR)\n\
             \x20       for (p = 0; p < kb; ++p)\n\
             \x20           for (j = 0; j < FORGE_NR; ++j)\n\
             \x20               pb[jr * kb + p * FORGE_NR + j] = b[p * ldb + jr + j];\n}}\n\n"
        );
    }
    let _ = write!(
        out,
        "/* Scalar epilogue for partial register tiles, reading unpacked A and B. */\n\
         static void forge_fringe_{name}(long rows, long cols, long kb, const {t} *a, long lda,\n\
         \x20   const {t} *b, long ldb, {t} *c, long ldc)\n{{\n\
         \x20   long i, j, p;\n\
         \x20   for (i = 0; i < rows; ++i)\n\
         \x20       for (j = 0; j < cols; ++j) {{\n\
         \x20           {t} acc = c[i * ldc + j];\n\
         \x20           for (p = 0; p < kb; ++p)\n\
         \x20               acc = acc + a[i * lda + p] * b[p * ldb + j];\n\
         \x20           c[i * ldc + j] = acc;\n\
         \x20       }}\n}}\n\n"
    );
    if s.pack_a || s.pack_b {
        let _ = write!(
            out,
            "static {t} *forge_alloc_{name}(long elems)\n{{\n\
             \x20   size_t bytes = ((size_t)elems * sizeof({t}) + 63) / 64 * 64;\n\
             \x20   return ({t} *)aligned_alloc(64, bytes);\n}}\n\n"
        );
    }

    let _ = writeln!(
        out,
        "void {}(const {t} *a, const {t} *b, {t} *c, long m, long n, long k)\n{{",
        gemm_symbol(name)
    );
    out.push_str("    long ic, jc, pc, ir, jr;\n");
    if s.pack_a {
        let _ = writeln!(
            out,
            "    {t} *pa = forge_alloc_{name}((long)FORGE_BM * FORGE_BK);"
        );
    }
    if s.pack_b {
        let _ = writeln!(
            out,
            "    {t} *pb = forge_alloc_{name}((long)FORGE_BK * FORGE_BN);"
        );
    }
    if s.pack_a || s.pack_b {
        let cond = match (s.pack_a, s.pack_b) {
            (true, true) => "!pa || !pb",
            (true, false) => "!pa",
            _ => "!pb",
        };
        let _ = writeln!(out, "    if ({cond}) {{");
        if s.pack_a {
            out.push_str("        free(pa);\n");
        }
        if s.pack_b {
            out.push_str("        free(pb);\n");
        }
        out.push_str("        return;\n    }\n");
    }

    let (pa_depth, pb_depth) = pack_depths(&s.loop_order);
    let mut indent = String::from("    ");
    for (depth, dim) in s.loop_order.iter().enumerate() {
        let (var, ext, total, tile) = match dim {
            LoopDim::M => ("ic", "mb", "m", "FORGE_BM"),
            LoopDim::N => ("jc", "nb", "n", "FORGE_BN"),
            LoopDim::K => ("pc", "kb", "k", "FORGE_BK"),
        };
        let _ = writeln!(
            out,
            "{indent}for ({var} = 0; {var} < {total}; {var} += {tile}) {{"
        );
        indent.push_str("    ");
        let _ = writeln!(
            out,
            "{indent}const long {ext} = FORGE_MIN({tile}, {total} - {var});"
        );
        if s.pack_b && depth == pb_depth {
            let _ = writeln!(
                out,
                "{indent}forge_pack_b_{name}(b + pc * n + jc, n, kb, nb, pb);"
            );
        }
        if s.pack_a && depth == pa_depth {
            let _ = writeln!(
                out,
                "{indent}forge_pack_a_{name}(a + ic * k + pc, k, mb, kb, pa);"
            );
        }
    }
    let _ = writeln!(out, "{indent}for (jr = 0; jr < nb; jr += FORGE_NR) {{");
    let _ = writeln!(out, "{indent}    for (ir = 0; ir < mb; ir += FORGE_MR) {{");
    let i2 = format!("{indent}        ");
    let _ = writeln!(out, "{i2}const long rows = FORGE_MIN(FORGE_MR, mb - ir);");
    let _ = writeln!(out, "{i2}const long cols = FORGE_MIN(FORGE_NR, nb - jr);");
    let _ = writeln!(out, "{i2}{t} *ct = c + (ic + ir) * n + jc + jr;");
    if s.prefetch_distance > 0 && s.pack_a {
        let _ = writeln!(
            out,
            "#if defined(__GNUC__)\n{i2}if (ir + {d} * FORGE_MR + FORGE_MR <= mb)\n{i2}    __builtin_prefetch(pa + (ir + {d} * FORGE_MR) * kb);\n#endif",
            d = s.prefetch_distance
        );
    }
    let _ = writeln!(out, "{i2}if (rows == FORGE_MR && cols == FORGE_NR)");
    let a_arg = if s.pack_a {
        "pa + ir * kb, 1, FORGE_MR".to_string()
    } else {
        "a + (ic + ir) * k + pc, k, 1".to_string()
    };
    let b_arg = if s.pack_b {
        "pb + jr * kb, FORGE_NR, 1".to_string()
    } else {
        "b + pc * n + jc + jr, n, 1".to_string()
    };
    let _ = writeln!(
        out,
        "{i2}    {}(kb, {a_arg}, {b_arg}, ct, n);",
        kernel_symbol(name)
    );
    let _ = writeln!(out, "{i2}else");
    let _ = writeln!(
        out,
        "{i2}    forge_fringe_{name}(rows, cols, kb, a + (ic + ir) * k + pc, k, b + pc * n + jc + jr, n, ct, n);"
    );
    let _ = writeln!(out, "{indent}    }}");
    let _ = writeln!(out, "{indent}}}");
    for _ in 0..3 {
        indent.truncate(indent.len() - 4);
        let _ = writeln!(out, "{indent}}}");
    }
    if s.pack_a {
        out.push_str("    free(pa);\n");
    }
    if s.pack_b {
        out.push_str("    free(pb);\n");
    }
    out.push_str("}\n");

    SourceArtifact {
        files: vec![SourceFile {
            path: format!("{name}.c"),
            text: out,
        }],
        entry_symbol: gemm_symbol(name),
    }
}

/// Kernel and sketch as one translation unit.
pub fn emit_operator(
    sketch: &ScheduleSketch,
    ir: &KernelIR,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    flavor: KernelFlavor,
    name: &str,
) -> Result<SourceArtifact, IrError> {
    let kernel = emit_kernel_source(ir, hw, flavor, name)?;
    let mut op = emit_sketch_source(sketch, spec, name);
    op.files.extend(kernel.files);
    Ok(op)
}

/// Unoptimized triple loop with the operator ABI, used as the timing baseline.
pub fn naive_gemm_source(spec: &GemmSpec, name: &str) -> SourceArtifact {
    let t = spec.dtype.c_type();
    let text = format!(
        "/* Naive {} GEMM baseline. */\n\
         void {sym}(const {t} *a, const {t} *b, {t} *c, long m, long n, long k)\n{{\n\
         \x20   long i, j, q;\n\
         \x20   for (i = 0; i < m; ++i)\n\
         \x20       for (j = 0; j < n; ++j) {{\n\
         \x20           {t} acc = c[i * n + j];\n\
         \x20           for (q = 0; q < k; ++q)\n\
         \x20               acc = acc + a[i * k + q] * b[q * n + j];\n\
         \x20           c[i * n + j] = acc;\n\
         \x20       }}\n}}\n",
        spec.dtype,
        sym = gemm_symbol(name)
    );
    SourceArtifact {
        files: vec![SourceFile {
            path: format!("{name}.c"),
            text,
        }],
        entry_symbol: gemm_symbol(name),
    }
}

/// Rendered template lines of the templated flavor, in emission order.
pub fn rendered_lines(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut inside = false;
    for line in text.lines() {
        let l = line.trim();
        if l.starts_with("/* forge:") && l.contains(" begin ") {
            inside = true;
        } else if l.starts_with("/* forge:") && l.contains(" end ") {
            inside = false;
        } else if inside {
            out.push(l.to_string());
        }
    }
    out
}
