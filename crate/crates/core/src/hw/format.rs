//! Text format for hardware descriptors.
//!
//! ```toml
//! [hardware]
//! name = "c910-like"
//! family = "cpu"
//! frequency_ghz = 2.0
//!
//! [memory.L1]
//! size_kib = 64
//! line_bytes = 64
//!
//! [memory.DRAM]          # no size_kib: main memory, must come last
//! latency_cycles = 120
//!
//! [registers]
//! vector_count = 32
//! vector_width_bits = 128
//! scalar_count = 32
//!
//! [isa]
//! name = "rvv"
//! fma = true
//!
//! [[isa.instr]]
//! kind = "vfma"
//! template = "vfmacc.vv {dst}, {src1}, {src2}"
//! latency = 4
//! throughput = 1.0
//! ```

use std::fmt::Write as _;
use std::ops::Range;

use indexmap::IndexMap;
use serde::Deserialize;
use toml::Spanned;

use super::{
    validate_descriptor, CacheLevel, Family, HardwareDescriptor, InstrKind, InstructionTemplate,
    Isa, IsaStyle, RegisterFile, SmInfo, MAIN_MEMORY_BYTES,
};
use crate::error::HwError;

const DEFAULT_LINE_BYTES: u64 = 64;
const DEFAULT_FREQUENCY_GHZ: f64 = 1.0;
const DEFAULT_MAIN_MEMORY: &str = "DRAM";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    hardware: RawHardware,
    #[serde(default)]
    memory: IndexMap<String, Spanned<RawLevel>>,
    registers: RawRegisters,
    isa: RawIsa,
    sm: Option<RawSm>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHardware {
    name: String,
    family: Spanned<String>,
    frequency_ghz: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevel {
    size_kib: Option<u64>,
    line_bytes: Option<u64>,
    latency_cycles: Option<u32>,
    bytes_per_cycle: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegisters {
    vector_count: u32,
    vector_width_bits: u32,
    scalar_count: u32,
    vector_prefix: Option<String>,
    scalar_prefix: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIsa {
    name: String,
    fma: bool,
    style: Option<Spanned<String>>,
    #[serde(default)]
    instr: Vec<RawInstr>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstr {
    kind: Spanned<String>,
    template: String,
    latency: u32,
    throughput: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSm {
    sm_count: u32,
    cuda_cores_per_sm: u32,
    tensor_cores_per_sm: u32,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before
        .rfind('\n')
        .map_or(before.len(), |nl| before.len() - nl - 1)
        + 1;
    (line, col)
}

fn syntax_at(text: &str, span: Option<Range<usize>>, message: impl Into<String>) -> HwError {
    let (line, column) = line_col(text, span.map_or(0, |s| s.start));
    HwError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Parse descriptor text. Omitted optional fields take their defaults:
/// `latency_cycles = 4·(index+1)`, `bytes_per_cycle = 16 / 2^index`,
/// `line_bytes = 64`, `frequency_ghz = 1.0`; a main-memory level is appended
/// when none is declared.
pub fn parse_descriptor(text: &str) -> Result<HardwareDescriptor, HwError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| syntax_at(text, e.span(), e.message()))?;

    let family = match raw.hardware.family.get_ref().as_str() {
        "cpu" => Family::Cpu,
        "gpu" => Family::Gpu,
        other => {
            return Err(syntax_at(
                text,
                Some(raw.hardware.family.span()),
                format!("unknown family `{other}` (expected cpu or gpu)"),
            ))
        }
    };

    let mut memory = Vec::new();
    let level_count = raw.memory.len();
    let mut saw_main = false;
    for (idx, (name, level)) in raw.memory.iter().enumerate() {
        let span = level.span();
        let level = level.get_ref();
        let size_bytes = match level.size_kib {
            Some(kib) => kib.checked_mul(1024).ok_or_else(|| {
                syntax_at(
                    text,
                    Some(span.clone()),
                    format!("memory.{name}.size_kib overflows"),
                )
            })?,
            None => {
                if idx + 1 != level_count {
                    return Err(syntax_at(
                        text,
                        Some(span),
                        format!(
                            "memory.{name} has no size_kib; only the last level may be main memory"
                        ),
                    ));
                }
                saw_main = true;
                MAIN_MEMORY_BYTES
            }
        };
        memory.push(CacheLevel {
            name: name.clone(),
            size_bytes,
            line_bytes: level.line_bytes.unwrap_or(DEFAULT_LINE_BYTES),
            latency_cycles: level.latency_cycles.unwrap_or(default_latency(idx)),
            bytes_per_cycle: level.bytes_per_cycle.unwrap_or(default_bandwidth(idx)),
        });
    }
    if !saw_main {
        let idx = memory.len();
        memory.push(CacheLevel {
            name: DEFAULT_MAIN_MEMORY.to_string(),
            size_bytes: MAIN_MEMORY_BYTES,
            line_bytes: DEFAULT_LINE_BYTES,
            latency_cycles: default_latency(idx),
            bytes_per_cycle: default_bandwidth(idx),
        });
    }

    let mut instrs = Vec::with_capacity(raw.isa.instr.len());
    for ri in &raw.isa.instr {
        let kind =
            InstrKind::from_name(ri.kind.get_ref()).ok_or_else(|| HwError::UnknownInstrKind {
                kind: ri.kind.get_ref().clone(),
                line: line_col(text, ri.kind.span().start).0,
            })?;
        instrs.push(InstructionTemplate {
            kind,
            mnemonic_template: ri.template.clone(),
            latency_cycles: ri.latency,
            throughput_per_cycle: ri.throughput,
        });
    }

    let style = match raw
        .isa
        .style
        .as_ref()
        .map(|s| (s.get_ref().as_str(), s.span()))
    {
        None | Some(("asm", _)) => IsaStyle::Asm,
        Some(("intrinsic", _)) => IsaStyle::Intrinsic,
        Some((other, span)) => {
            return Err(syntax_at(
                text,
                Some(span),
                format!("unknown isa style `{other}` (expected asm or intrinsic)"),
            ))
        }
    };

    let d = HardwareDescriptor {
        name: raw.hardware.name,
        family,
        frequency_ghz: raw.hardware.frequency_ghz.unwrap_or(DEFAULT_FREQUENCY_GHZ),
        memory,
        isa: Isa {
            name: raw.isa.name,
            fma_available: raw.isa.fma,
            style,
            vector_prefix: raw.registers.vector_prefix.unwrap_or_else(|| "v".into()),
            scalar_prefix: raw.registers.scalar_prefix.unwrap_or_else(|| "f".into()),
            instrs,
        },
        registers: RegisterFile {
            vector_count: raw.registers.vector_count,
            vector_width_bits: raw.registers.vector_width_bits,
            scalar_count: raw.registers.scalar_count,
        },
        sm: raw.sm.map(|s| SmInfo {
            sm_count: s.sm_count,
            cuda_cores_per_sm: s.cuda_cores_per_sm,
            tensor_cores_per_sm: s.tensor_cores_per_sm,
        }),
    };

    let diags = validate_descriptor(&d);
    if diags.is_empty() {
        Ok(d)
    } else {
        Err(HwError::Invariant(diags))
    }
}

fn default_latency(idx: usize) -> u32 {
    4 * (idx as u32 + 1)
}

fn default_bandwidth(idx: usize) -> f64 {
    16.0 / f64::from(1u32 << idx.min(30))
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn toml_key(s: &str) -> String {
    if !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        s.to_string()
    } else {
        toml_str(s)
    }
}

fn toml_float(x: f64) -> String {
    // Debug formatting is the shortest representation that round-trips.
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// Canonical text for `d`; `parse_descriptor` of the result equals `d`.
pub fn serialize_descriptor(d: &HardwareDescriptor) -> String {
    let mut out = String::new();
    let family = match d.family {
        Family::Cpu => "cpu",
        Family::Gpu => "gpu",
    };
    let _ = writeln!(out, "[hardware]");
    let _ = writeln!(out, "name = {}", toml_str(&d.name));
    let _ = writeln!(out, "family = \"{family}\"");
    let _ = writeln!(out, "frequency_ghz = {}", toml_float(d.frequency_ghz));

    for level in &d.memory {
        let _ = writeln!(out, "\n[memory.{}]", toml_key(&level.name));
        if !level.is_main_memory() {
            let _ = writeln!(out, "size_kib = {}", level.size_bytes / 1024);
        }
        let _ = writeln!(out, "line_bytes = {}", level.line_bytes);
        let _ = writeln!(out, "latency_cycles = {}", level.latency_cycles);
        let _ = writeln!(
            out,
            "bytes_per_cycle = {}",
            toml_float(level.bytes_per_cycle)
        );
    }

    let r = &d.registers;
    let _ = writeln!(out, "\n[registers]");
    let _ = writeln!(out, "vector_count = {}", r.vector_count);
    let _ = writeln!(out, "vector_width_bits = {}", r.vector_width_bits);
    let _ = writeln!(out, "scalar_count = {}", r.scalar_count);
    let _ = writeln!(out, "vector_prefix = {}", toml_str(&d.isa.vector_prefix));
    let _ = writeln!(out, "scalar_prefix = {}", toml_str(&d.isa.scalar_prefix));

    let _ = writeln!(out, "\n[isa]");
    let _ = writeln!(out, "name = {}", toml_str(&d.isa.name));
    let _ = writeln!(out, "fma = {}", d.isa.fma_available);
    let style = match d.isa.style {
        IsaStyle::Asm => "asm",
        IsaStyle::Intrinsic => "intrinsic",
    };
    let _ = writeln!(out, "style = \"{style}\"");
    for t in &d.isa.instrs {
        let _ = writeln!(out, "\n[[isa.instr]]");
        let _ = writeln!(out, "kind = \"{}\"", t.kind.name());
        let _ = writeln!(out, "template = {}", toml_str(&t.mnemonic_template));
        let _ = writeln!(out, "latency = {}", t.latency_cycles);
        let _ = writeln!(out, "throughput = {}", toml_float(t.throughput_per_cycle));
    }

    if let Some(sm) = &d.sm {
        let _ = writeln!(out, "\n[sm]");
        let _ = writeln!(out, "sm_count = {}", sm.sm_count);
        let _ = writeln!(out, "cuda_cores_per_sm = {}", sm.cuda_cores_per_sm);
        let _ = writeln!(out, "tensor_cores_per_sm = {}", sm.tensor_cores_per_sm);
    }
    out
}
