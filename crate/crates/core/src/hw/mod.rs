//! Hardware descriptors: memory hierarchy, instruction templates, register
//! files and (for GPUs) streaming-multiprocessor info.
//!
//! Descriptors are immutable values. [`parse_descriptor`] is the only way to
//! build one from text and never returns a value that fails
//! [`validate_descriptor`].

mod extract;
mod format;
mod hints;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use extract::{extract_factors_with_advisor, FactorAdvisor, KeywordScanner};
pub use format::{parse_descriptor, serialize_descriptor};
pub use hints::{optimization_hints, Factor, Hint, HintSet, Technique};

use crate::error::HwError;

/// Size assigned to the implicit main-memory level.
pub const MAIN_MEMORY_BYTES: u64 = 1 << 62;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheLevel {
    pub name: String,
    pub size_bytes: u64,
    pub line_bytes: u64,
    pub latency_cycles: u32,
    pub bytes_per_cycle: f64,
}

impl CacheLevel {
    pub fn is_main_memory(&self) -> bool {
        self.size_bytes == MAIN_MEMORY_BYTES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InstrKind {
    VLoad,
    VStore,
    VBroadcast,
    VFma,
    SLoad,
    SStore,
    SFma,
}

impl InstrKind {
    pub const ALL: [InstrKind; 7] = [
        InstrKind::VLoad,
        InstrKind::VStore,
        InstrKind::VBroadcast,
        InstrKind::VFma,
        InstrKind::SLoad,
        InstrKind::SStore,
        InstrKind::SFma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstrKind::VLoad => "vload",
            InstrKind::VStore => "vstore",
            InstrKind::VBroadcast => "vbroadcast",
            InstrKind::VFma => "vfma",
            InstrKind::SLoad => "sload",
            InstrKind::SStore => "sstore",
            InstrKind::SFma => "sfma",
        }
    }

    pub fn from_name(s: &str) -> Option<InstrKind> {
        InstrKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Placeholders a template of this kind must contain (and no others).
    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            InstrKind::VLoad | InstrKind::VBroadcast | InstrKind::SLoad => &["addr", "dst"],
            InstrKind::VStore | InstrKind::SStore => &["addr", "src1"],
            InstrKind::VFma | InstrKind::SFma => &["dst", "src1", "src2"],
        }
    }

    pub fn is_vector(self) -> bool {
        matches!(
            self,
            InstrKind::VLoad | InstrKind::VStore | InstrKind::VBroadcast | InstrKind::VFma
        )
    }

    pub fn is_load(self) -> bool {
        matches!(
            self,
            InstrKind::VLoad | InstrKind::VBroadcast | InstrKind::SLoad
        )
    }

    pub fn is_store(self) -> bool {
        matches!(self, InstrKind::VStore | InstrKind::SStore)
    }

    pub fn is_fma(self) -> bool {
        matches!(self, InstrKind::VFma | InstrKind::SFma)
    }
}

impl fmt::Display for InstrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub kind: InstrKind,
    pub mnemonic_template: String,
    pub latency_cycles: u32,
    pub throughput_per_cycle: f64,
}

impl InstructionTemplate {
    /// Placeholder names (`{name}`) appearing in the template.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut rest = self.mnemonic_template.as_str();
        while let Some(open) = rest.find('{') {
            let tail = &rest[open + 1..];
            match tail.find('}') {
                Some(close) => {
                    out.insert(tail[..close].to_string());
                    rest = &tail[close + 1..];
                }
                None => break,
            }
        }
        out
    }

    pub fn render(&self, dst: &str, src1: &str, src2: &str, addr: &str) -> String {
        self.mnemonic_template
            .replace("{dst}", dst)
            .replace("{src1}", src1)
            .replace("{src2}", src2)
            .replace("{addr}", addr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterFile {
    pub vector_count: u32,
    pub vector_width_bits: u32,
    pub scalar_count: u32,
}

pub const VECTOR_WIDTHS: [u32; 6] = [0, 64, 128, 256, 512, 1024];

impl RegisterFile {
    pub fn has_vector_unit(&self) -> bool {
        self.vector_width_bits > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmInfo {
    pub sm_count: u32,
    pub cuda_cores_per_sm: u32,
    pub tensor_cores_per_sm: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cpu,
    Gpu,
}

/// How templated kernels wrap rendered mnemonics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IsaStyle {
    /// Mnemonics go inside an inline-assembly block.
    #[default]
    Asm,
    /// Mnemonics are C statements (intrinsics or vector extensions).
    Intrinsic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isa {
    pub name: String,
    pub fma_available: bool,
    pub style: IsaStyle,
    pub vector_prefix: String,
    pub scalar_prefix: String,
    pub instrs: Vec<InstructionTemplate>,
}

impl Isa {
    pub fn template(&self, kind: InstrKind) -> Option<&InstructionTemplate> {
        self.instrs.iter().find(|t| t.kind == kind)
    }

    /// Summed issue throughput over all templates of `kind`.
    pub fn throughput(&self, kind: InstrKind) -> f64 {
        self.instrs
            .iter()
            .filter(|t| t.kind == kind)
            .map(|t| t.throughput_per_cycle)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareDescriptor {
    pub name: String,
    pub family: Family,
    pub frequency_ghz: f64,
    /// Innermost first; the last entry is main memory.
    pub memory: Vec<CacheLevel>,
    pub isa: Isa,
    pub registers: RegisterFile,
    pub sm: Option<SmInfo>,
}

impl HardwareDescriptor {
    /// Cache levels excluding main memory.
    pub fn caches(&self) -> &[CacheLevel] {
        match self.memory.last() {
            Some(last) if last.is_main_memory() => &self.memory[..self.memory.len() - 1],
            _ => &self.memory,
        }
    }

    pub fn l1(&self) -> Option<&CacheLevel> {
        self.caches().first()
    }

    pub fn last_level_cache(&self) -> Option<&CacheLevel> {
        self.caches().last()
    }

    /// Vector lanes for elements of `dtype_bits` bits; 1 without a vector unit.
    pub fn lanes(&self, dtype_bits: u32) -> usize {
        if self.registers.vector_width_bits == 0 {
            1
        } else {
            (self.registers.vector_width_bits / dtype_bits).max(1) as usize
        }
    }
}

/// One violated rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub rule: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Diagnostic {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

pub fn validate_descriptor(d: &HardwareDescriptor) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if d.name.trim().is_empty() {
        out.push(Diagnostic::new("hardware.name", "name must be non-empty"));
    }
    if !(d.frequency_ghz > 0.0 && d.frequency_ghz.is_finite()) {
        out.push(Diagnostic::new(
            "hardware.frequency_ghz",
            "frequency must be positive",
        ));
    }

    if d.memory.is_empty() {
        out.push(Diagnostic::new("memory", "memory list must be non-empty"));
    }
    for (i, level) in d.memory.iter().enumerate() {
        let field = format!("memory.{}", level.name);
        if level.size_bytes == 0 {
            out.push(Diagnostic::new(
                format!("{field}.size_kib"),
                "size must be positive",
            ));
        }
        if level.line_bytes == 0 {
            out.push(Diagnostic::new(
                format!("{field}.line_bytes"),
                "line size must be positive",
            ));
        } else if level.size_bytes % level.line_bytes != 0 {
            out.push(Diagnostic::new(
                format!("{field}.line_bytes"),
                "line size must divide level size",
            ));
        }
        if level.latency_cycles < 1 {
            out.push(Diagnostic::new(
                format!("{field}.latency_cycles"),
                "latency must be >= 1",
            ));
        }
        if !(level.bytes_per_cycle > 0.0 && level.bytes_per_cycle.is_finite()) {
            out.push(Diagnostic::new(
                format!("{field}.bytes_per_cycle"),
                "bandwidth must be positive",
            ));
        }
        if i > 0 && level.size_bytes <= d.memory[i - 1].size_bytes {
            out.push(Diagnostic::new(
                field,
                "memory levels must increase in size",
            ));
        }
    }

    for (i, t) in d.isa.instrs.iter().enumerate() {
        let field = format!("isa.instr[{i}]");
        let required: BTreeSet<String> = t
            .kind
            .required_placeholders()
            .iter()
            .map(|s| s.to_string())
            .collect();
        if t.placeholders() != required {
            out.push(Diagnostic::new(
                format!("{field}.template"),
                format!(
                    "template for {} must use exactly the placeholders {}",
                    t.kind,
                    required
                        .iter()
                        .map(|p| format!("{{{p}}}"))
                        .collect::<Vec<_>>()
                        .join(",")
                ),
            ));
        }
        if t.latency_cycles < 1 {
            out.push(Diagnostic::new(
                format!("{field}.latency"),
                "latency must be >= 1",
            ));
        }
        if !(t.throughput_per_cycle > 0.0 && t.throughput_per_cycle.is_finite()) {
            out.push(Diagnostic::new(
                format!("{field}.throughput"),
                "throughput must be positive",
            ));
        }
    }
    if d.family == Family::Cpu
        && d.isa.template(InstrKind::VFma).is_none()
        && d.isa.template(InstrKind::SFma).is_none()
    {
        out.push(Diagnostic::new(
            "isa.instr",
            "cpu descriptors must define a vfma or sfma template",
        ));
    }

    let r = &d.registers;
    if r.vector_count < 2 {
        out.push(Diagnostic::new(
            "registers.vector_count",
            "vector_count must be >= 2",
        ));
    }
    if !VECTOR_WIDTHS.contains(&r.vector_width_bits) {
        out.push(Diagnostic::new(
            "registers.vector_width_bits",
            "vector width must be one of 0, 64, 128, 256, 512, 1024",
        ));
    }
    if r.scalar_count < 4 {
        out.push(Diagnostic::new(
            "registers.scalar_count",
            "scalar_count must be >= 4",
        ));
    }

    match (d.family, d.sm.is_some()) {
        (Family::Gpu, false) => out.push(Diagnostic::new(
            "sm",
            "gpu descriptors require an [sm] section",
        )),
        (Family::Cpu, true) => out.push(Diagnostic::new(
            "sm",
            "[sm] is only allowed for gpu descriptors",
        )),
        _ => {}
    }
    out
}

/// Every `*.toml` descriptor in `dir`, sorted by name.
pub fn load_descriptor_dir(dir: &Path) -> Result<Vec<HardwareDescriptor>, HwError> {
    let entries = std::fs::read_dir(dir).map_err(|source| HwError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "toml"))
        .collect();
    paths.sort();
    let mut out: Vec<HardwareDescriptor> = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(|source| HwError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let d = parse_descriptor(&text).map_err(|e| HwError::InFile {
            path: path.display().to_string(),
            source: Box::new(e),
        })?;
        if out.iter().any(|o| o.name == d.name) {
            return Err(HwError::DuplicateName(d.name));
        }
        out.push(d);
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}
