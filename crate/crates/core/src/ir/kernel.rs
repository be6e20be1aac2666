use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DType, KernelMode};
use crate::hw::{Diagnostic, HardwareDescriptor, InstrKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegClass {
    Vector,
    Scalar,
}

/// A physical register. Serialized as `v<index>` or `s<index>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Reg {
    pub class: RegClass,
    pub index: u16,
}

impl Reg {
    pub fn vector(index: usize) -> Reg {
        Reg {
            class: RegClass::Vector,
            index: index as u16,
        }
    }

    pub fn scalar(index: usize) -> Reg {
        Reg {
            class: RegClass::Scalar,
            index: index as u16,
        }
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.class {
            RegClass::Vector => 'v',
            RegClass::Scalar => 's',
        };
        write!(f, "{c}{}", self.index)
    }
}

impl From<Reg> for String {
    fn from(r: Reg) -> String {
        r.to_string()
    }
}

impl FromStr for Reg {
    type Err = String;

    fn from_str(s: &str) -> Result<Reg, String> {
        let class = match s.chars().next() {
            Some('v') => RegClass::Vector,
            Some('s') => RegClass::Scalar,
            _ => return Err(format!("bad register `{s}`")),
        };
        let index = s[1..].parse().map_err(|_| format!("bad register `{s}`"))?;
        Ok(Reg { class, index })
    }
}

impl TryFrom<String> for Reg {
    type Error = String;

    fn try_from(s: String) -> Result<Reg, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Buffer {
    A,
    B,
    C,
}

/// A tile-relative memory reference at the current k-step `p`:
/// A is addressed as `(row, p + step)`, B as `(p + step, col)` and C as
/// `(row, col)`. `width` consecutive columns are touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemRef {
    pub buffer: Buffer,
    pub row: u32,
    pub col: u32,
    pub step: u32,
    pub width: u32,
}

impl MemRef {
    /// Conservative overlap: same buffer, same step, intersecting columns.
    /// All references are affine in `p` with the buffer's strides, so the
    /// tuple comparison is exact.
    pub fn may_alias(&self, other: &MemRef) -> bool {
        self.buffer == other.buffer
            && self.row == other.row
            && self.step == other.step
            && self.col < other.col + other.width
            && other.col < self.col + self.width
    }
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.buffer {
            Buffer::A => write!(f, "A[{}][p+{}]", self.row, self.step),
            Buffer::B => write!(f, "B[p+{}][{}]", self.step, self.col),
            Buffer::C => write!(f, "C[{}][{}]", self.row, self.col),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VInstr {
    pub id: u32,
    pub op: InstrKind,
    pub dst: Option<Reg>,
    pub srcs: Vec<Reg>,
    pub mem: Option<MemRef>,
}

impl VInstr {
    pub fn reads(&self) -> &[Reg] {
        &self.srcs
    }

    pub fn writes(&self) -> Option<Reg> {
        self.dst
    }
}

impl fmt::Display for VInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{} {}", self.id, self.op)?;
        if let Some(d) = self.dst {
            write!(f, " {d}")?;
            if !self.srcs.is_empty() || self.mem.is_some() {
                f.write_str(" <-")?;
            }
        }
        for s in &self.srcs {
            write!(f, " {s}")?;
        }
        if let Some(m) = self.mem {
            write!(f, " {m}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Load,
    Compute,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Every,
    Even,
    Odd,
}

impl Parity {
    pub fn matches(self, p: usize) -> bool {
        match self {
            Parity::Every => true,
            Parity::Even => p.is_multiple_of(2),
            Parity::Odd => p % 2 == 1,
        }
    }
}

/// Where a block runs relative to the k loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Once, before the first k-step.
    Prologue,
    /// Every k-step `p` with matching parity, skipped on the last step when
    /// `skip_last` is set.
    Step { parity: Parity, skip_last: bool },
    /// Once, after the last k-step.
    Epilogue,
}

impl Scope {
    pub fn runs_at(self, p: usize, kc: usize) -> bool {
        match self {
            Scope::Step { parity, skip_last } => parity.matches(p) && !(skip_last && p + 1 == kc),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub stage: Stage,
    pub scope: Scope,
    pub instrs: Vec<VInstr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterMap {
    /// Row-major `mr × (nr / lanes)`.
    pub accumulators: Vec<Reg>,
    /// One A broadcast pool per buffer set.
    pub a_regs: Vec<Vec<Reg>>,
    /// One B row per buffer set.
    pub b_regs: Vec<Vec<Reg>>,
    /// Integer registers holding the A, B and C tile pointers and the k counter.
    pub address: Vec<Reg>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelIR {
    pub mr: usize,
    pub nr: usize,
    pub dtype: DType,
    pub mode: KernelMode,
    pub pipeline_depth: u8,
    pub register_map: RegisterMap,
    pub stage_blocks: Vec<Block>,
}

impl KernelIR {
    pub fn lanes(&self) -> usize {
        self.mode.lanes()
    }

    pub fn instrs(&self) -> impl Iterator<Item = &VInstr> {
        self.stage_blocks.iter().flat_map(|b| b.instrs.iter())
    }

    pub fn count(&self, kind: InstrKind) -> usize {
        self.instrs().filter(|i| i.op == kind).count()
    }

    /// Instructions of `kind` executed in one steady-state k-step.
    pub fn per_step_count(&self, kind: InstrKind) -> usize {
        self.stage_blocks
            .iter()
            .filter(|b| match b.scope {
                Scope::Step { parity, .. } => parity != Parity::Odd,
                _ => false,
            })
            .flat_map(|b| b.instrs.iter())
            .filter(|i| i.op == kind)
            .count()
    }
}

/// Symbolic register content used by [`validate_kernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    A { row: u32, k: usize },
    B { k: usize, col: u32 },
    Acc { row: u32, col: u32, next_k: usize },
}

/// Every violated KernelIR invariant, checked by symbolically executing the
/// kernel for one, two and three k-steps.
pub fn validate_kernel(ir: &KernelIR, hw: &HardwareDescriptor) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    structural_checks(ir, hw, &mut out);
    if !out.is_empty() {
        return out;
    }
    for kc in 1..=3 {
        if let Err(d) = symbolic_run(ir, kc) {
            out.push(d);
            break;
        }
    }
    out
}

fn structural_checks(ir: &KernelIR, hw: &HardwareDescriptor, out: &mut Vec<Diagnostic>) {
    if ir.pipeline_depth != 1 && ir.pipeline_depth != 2 {
        out.push(Diagnostic::new(
            "pipeline_depth",
            "pipeline_depth must be 1 or 2",
        ));
    }
    let lanes = ir.lanes() as u32;
    let data_class = if ir.mode.is_vector() {
        RegClass::Vector
    } else {
        RegClass::Scalar
    };
    let mut ids = BTreeSet::new();
    for (bi, block) in ir.stage_blocks.iter().enumerate() {
        for ins in &block.instrs {
            let field = format!("stage_blocks[{bi}].i{}", ins.id);
            let mut bad = |rule: String| out.push(Diagnostic::new(field.clone(), rule));
            if !ids.insert(ins.id) {
                bad("duplicate instruction id".into());
            }
            if ins.op.is_vector() != ir.mode.is_vector() {
                bad(format!("{} does not match the kernel mode", ins.op));
            }
            for r in ins.dst.iter().chain(&ins.srcs) {
                let limit = match r.class {
                    RegClass::Vector => hw.registers.vector_count,
                    RegClass::Scalar => hw.registers.scalar_count,
                };
                if u32::from(r.index) >= limit {
                    bad(format!("register {r} outside the register file"));
                }
                if r.class != data_class {
                    bad(format!("register {r} has the wrong class"));
                }
            }
            let stage_ok = match block.stage {
                Stage::Load => ins.op.is_load(),
                Stage::Compute => ins.op.is_fma(),
                Stage::Store => ins.op.is_store(),
            };
            if !stage_ok {
                bad(format!(
                    "{} not allowed in a {:?} block",
                    ins.op, block.stage
                ));
            }
            if ins.op.is_fma() {
                match ins.dst {
                    Some(dst) if ins.srcs.len() == 3 && ins.mem.is_none() => {
                        if ins.srcs[0] != dst {
                            bad("fma must accumulate into its first source".into());
                        }
                    }
                    _ => {
                        bad("fma takes dst, three sources (acc, a, b) and no memory operand".into())
                    }
                }
            } else if ins.op.is_load() {
                if ins.dst.is_none() || !ins.srcs.is_empty() || ins.mem.is_none() {
                    bad("load takes dst and a memory operand".into());
                }
            } else if ins.dst.is_some() || ins.srcs.len() != 1 || ins.mem.is_none() {
                bad("store takes one source and a memory operand".into());
            }
            if let Some(m) = ins.mem {
                let want = match ins.op {
                    InstrKind::VBroadcast | InstrKind::SLoad | InstrKind::SStore => 1,
                    _ => lanes,
                };
                if m.width != want {
                    bad(format!("memory width {} should be {want}", m.width));
                }
                let row_ok = m.buffer == Buffer::B || (m.row as usize) < ir.mr;
                let col_ok = m.buffer == Buffer::A || (m.col + m.width) as usize <= ir.nr;
                let step_ok = m.step < u32::from(ir.pipeline_depth.max(1))
                    && (m.buffer != Buffer::C || m.step == 0);
                if !(row_ok && col_ok && step_ok) {
                    bad(format!(
                        "memory reference {m} outside the {}x{} tile",
                        ir.mr, ir.nr
                    ));
                }
            }
        }
    }
}

fn symbolic_run(ir: &KernelIR, kc: usize) -> Result<(), Diagnostic> {
    let fail = |ins: &VInstr, rule: String| {
        Diagnostic::new(format!("i{}", ins.id), format!("{rule} (k-steps={kc})"))
    };
    let mut regs: HashMap<Reg, (Value, bool)> = HashMap::new();
    let mut stored: BTreeMap<(u32, u32), usize> = BTreeMap::new();

    let mut exec = |ins: &VInstr,
                    p: usize,
                    regs: &mut HashMap<Reg, (Value, bool)>|
     -> Result<(), Diagnostic> {
        let read = |r: Reg, regs: &mut HashMap<Reg, (Value, bool)>| -> Result<Value, Diagnostic> {
            match regs.get_mut(&r) {
                Some(slot) => {
                    slot.1 = true;
                    Ok(slot.0)
                }
                None => Err(fail(
                    ins,
                    format!("register {r} read before initialization"),
                )),
            }
        };
        let write =
            |r: Reg, v: Value, regs: &mut HashMap<Reg, (Value, bool)>| -> Result<(), Diagnostic> {
                if let Some((old, was_read)) = regs.get(&r) {
                    let is_acc = matches!(old, Value::Acc { .. });
                    if !was_read && !is_acc {
                        return Err(fail(
                            ins,
                            format!("register {r} overwritten before its value was used"),
                        ));
                    }
                }
                regs.insert(r, (v, false));
                Ok(())
            };
        if ins.op.is_load() {
            let m = ins.mem.unwrap();
            let k = p + m.step as usize;
            let v = match m.buffer {
                Buffer::A => Value::A { row: m.row, k },
                Buffer::B => Value::B { k, col: m.col },
                Buffer::C => Value::Acc {
                    row: m.row,
                    col: m.col,
                    next_k: 0,
                },
            };
            if m.buffer != Buffer::C && k >= kc {
                return Err(fail(ins, format!("load of k-step {k} past the end")));
            }
            write(ins.dst.unwrap(), v, regs)
        } else if ins.op.is_fma() {
            let acc = read(ins.srcs[0], regs)?;
            let a = read(ins.srcs[1], regs)?;
            let b = read(ins.srcs[2], regs)?;
            match (acc, a, b) {
                (
                    Value::Acc { row, col, next_k },
                    Value::A { row: ar, k: ak },
                    Value::B { k: bk, col: bc },
                ) if row == ar && col == bc && ak == bk && ak == next_k => {
                    regs.insert(
                        ins.dst.unwrap(),
                        (
                            Value::Acc {
                                row,
                                col,
                                next_k: next_k + 1,
                            },
                            false,
                        ),
                    );
                    Ok(())
                }
                other => Err(fail(
                    ins,
                    format!("fma operands do not form the next product: {other:?}"),
                )),
            }
        } else {
            let m = ins.mem.unwrap();
            match read(ins.srcs[0], regs)? {
                Value::Acc { row, col, next_k } if row == m.row && col == m.col && next_k == kc => {
                    *stored.entry((row, col)).or_default() += 1;
                    Ok(())
                }
                other => Err(fail(ins, format!("store of {other:?} to {m}"))),
            }
        }
    };

    for block in ir
        .stage_blocks
        .iter()
        .filter(|b| b.scope == Scope::Prologue)
    {
        for ins in &block.instrs {
            exec(ins, 0, &mut regs)?;
        }
    }
    for p in 0..kc {
        for block in ir.stage_blocks.iter().filter(|b| b.scope.runs_at(p, kc)) {
            for ins in &block.instrs {
                exec(ins, p, &mut regs)?;
            }
        }
    }
    for block in ir
        .stage_blocks
        .iter()
        .filter(|b| b.scope == Scope::Epilogue)
    {
        for ins in &block.instrs {
            exec(ins, kc, &mut regs)?;
        }
    }

    let lanes = ir.lanes() as u32;
    for row in 0..ir.mr as u32 {
        for col in (0..ir.nr as u32).step_by(lanes as usize) {
            match stored.get(&(row, col)) {
                Some(1) => {}
                Some(n) => {
                    return Err(Diagnostic::new(
                        format!("C[{row}][{col}]"),
                        format!("accumulator stored {n} times"),
                    ))
                }
                None => {
                    return Err(Diagnostic::new(
                        format!("C[{row}][{col}]"),
                        "accumulator is never stored in a Store block",
                    ))
                }
            }
        }
    }
    Ok(())
}
