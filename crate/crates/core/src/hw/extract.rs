//! Hardware-factor extraction from manual prose.
//!
//! An advisor turns free text into descriptor-format text, which then goes
//! through [`parse_descriptor`]; there is no partially-valid result.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;

use super::{parse_descriptor, HardwareDescriptor};
use crate::error::HwError;

pub trait FactorAdvisor {
    /// Produce descriptor-format text for the hardware described in `manual_text`.
    fn extract_descriptor_text(&self, manual_text: &str) -> Result<String, HwError>;
}

pub fn extract_factors_with_advisor(
    manual_text: &str,
    advisor: &dyn FactorAdvisor,
) -> Result<HardwareDescriptor, HwError> {
    let text = advisor.extract_descriptor_text(manual_text)?;
    parse_descriptor(&text).map_err(|source| HwError::AdvisorOutput {
        text,
        source: Box::new(source),
    })
}

/// Deterministic regex-based extractor.
#[derive(Debug, Clone)]
pub struct KeywordScanner {
    pub name: String,
}

impl Default for KeywordScanner {
    fn default() -> Self {
        KeywordScanner {
            name: "extracted".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IsaFamily {
    Rvv,
    Neon,
    Avx,
}

struct Patterns {
    cache_size_first: Regex,
    cache_level_first: Regex,
    vregs: Regex,
    vregs_x: Regex,
    vlen: Regex,
    vcount: Regex,
    sregs: Regex,
    ghz: Regex,
    rvv: Regex,
    neon: Regex,
    avx: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        cache_size_first: Regex::new(
            r"(?i)(\d+)\s*(kib|kb|k|mib|mb|m)\b[\s-]*(?:of\s+)?(?:private\s+|shared\s+|unified\s+)?l([1-3])\b(\s*(?:instruction|icache|i-cache))?",
        )
        .unwrap(),
        cache_level_first: Regex::new(
            r"(?i)\bl([1-3])\s*(instruction\s+|data\s+|unified\s+)?(?:cache)?\s*(?:size)?\s*(?:of|:|=|is)?\s*(\d+)\s*(kib|kb|mib|mb)\b",
        )
        .unwrap(),
        vregs: Regex::new(r"(?i)(\d+)\s+vector\s+registers?\s*(?:of|with|,|each)?\s*(\d+)[\s-]*bits?").unwrap(),
        vregs_x: Regex::new(r"(?i)(\d+)\s*[x×]\s*(\d+)[\s-]*bits?\s+vector\s+registers?").unwrap(),
        vlen: Regex::new(r"(?i)\bvlen\s*(?:=|of|is|:)?\s*(\d+)").unwrap(),
        vcount: Regex::new(r"(?i)(\d+)\s+vector\s+registers?").unwrap(),
        sregs: Regex::new(
            r"(?i)(\d+)\s+(?:scalar|general[- ]purpose|integer|floating[- ]point)\s+registers?",
        )
        .unwrap(),
        ghz: Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*ghz").unwrap(),
        rvv: Regex::new(r"(?i)\brvv\b|risc-v\s+vector|\bvfmacc\b").unwrap(),
        neon: Regex::new(r"(?i)\bneon\b|\basimd\b|\bfmla\b").unwrap(),
        avx: Regex::new(r"(?i)\bavx(?:2|-?512)?\b|\bvfmadd").unwrap(),
    })
}

fn kib(value: u64, unit: &str) -> u64 {
    match unit.to_ascii_lowercase().as_str() {
        "mib" | "mb" | "m" => value * 1024,
        _ => value,
    }
}

impl KeywordScanner {
    fn scan_caches(text: &str) -> BTreeMap<u32, u64> {
        let p = patterns();
        let mut levels = BTreeMap::new();
        for c in p.cache_size_first.captures_iter(text) {
            if c.get(4).is_some() {
                continue;
            }
            let (Ok(v), Ok(level)) = (c[1].parse::<u64>(), c[3].parse::<u32>()) else {
                continue;
            };
            levels.entry(level).or_insert(kib(v, &c[2]));
        }
        for c in p.cache_level_first.captures_iter(text) {
            if c.get(2)
                .is_some_and(|m| m.as_str().to_ascii_lowercase().starts_with("instr"))
            {
                continue;
            }
            let (Ok(level), Ok(v)) = (c[1].parse::<u32>(), c[3].parse::<u64>()) else {
                continue;
            };
            levels.entry(level).or_insert(kib(v, &c[4]));
        }
        levels
    }

    fn scan_isa(text: &str) -> Option<IsaFamily> {
        let p = patterns();
        if p.rvv.is_match(text) {
            Some(IsaFamily::Rvv)
        } else if p.neon.is_match(text) {
            Some(IsaFamily::Neon)
        } else if p.avx.is_match(text) {
            Some(IsaFamily::Avx)
        } else {
            None
        }
    }

    fn scan_vector_registers(text: &str) -> Option<(u32, u32)> {
        let p = patterns();
        if let Some(c) = p.vregs.captures(text).or_else(|| p.vregs_x.captures(text)) {
            return Some((c[1].parse().ok()?, c[2].parse().ok()?));
        }
        let width: u32 = p.vlen.captures(text)?[1].parse().ok()?;
        let count = p
            .vcount
            .captures(text)
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(32);
        Some((count, width))
    }
}

impl FactorAdvisor for KeywordScanner {
    fn extract_descriptor_text(&self, manual_text: &str) -> Result<String, HwError> {
        let caches = Self::scan_caches(manual_text);
        let isa = Self::scan_isa(manual_text);
        let vregs = Self::scan_vector_registers(manual_text);
        if caches.is_empty() && isa.is_none() && vregs.is_none() {
            return Err(HwError::NoFactors);
        }
        if caches.is_empty() {
            return Err(HwError::MissingFactor("MH (cache hierarchy)"));
        }
        let Some(isa) = isa else {
            return Err(HwError::MissingFactor("INST (instruction set)"));
        };
        let Some((vector_count, vector_width_bits)) = vregs else {
            return Err(HwError::MissingFactor("VR (vector registers)"));
        };
        let p = patterns();
        let scalar_count: u32 = p
            .sregs
            .captures(manual_text)
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(if isa == IsaFamily::Avx { 16 } else { 32 });
        let frequency: Option<f64> = p.ghz.captures(manual_text).and_then(|c| c[1].parse().ok());

        let mut out = String::new();
        let _ = writeln!(
            out,
            "[hardware]\nname = \"{}\"\nfamily = \"cpu\"",
            self.name
        );
        if let Some(f) = frequency {
            let _ = writeln!(out, "frequency_ghz = {f:?}");
        }
        for (level, size) in &caches {
            let _ = writeln!(out, "\n[memory.L{level}]\nsize_kib = {size}");
        }
        let _ = writeln!(
            out,
            "\n[registers]\nvector_count = {vector_count}\nvector_width_bits = {vector_width_bits}\nscalar_count = {scalar_count}"
        );
        out.push_str(isa_section(isa));
        Ok(out)
    }
}

fn isa_section(isa: IsaFamily) -> &'static str {
    match isa {
        IsaFamily::Rvv => {
            r#"
[isa]
name = "rvv"
fma = true

[[isa.instr]]
kind = "vload"
template = "vle32.v {dst}, ({addr})"
latency = 4
throughput = 1.0

[[isa.instr]]
kind = "vbroadcast"
template = "vlse32.v {dst}, ({addr}), zero"
latency = 4
throughput = 1.0

[[isa.instr]]
kind = "vstore"
template = "vse32.v {src1}, ({addr})"
latency = 4
throughput = 1.0

[[isa.instr]]
kind = "vfma"
template = "vfmacc.vv {dst}, {src1}, {src2}"
latency = 4
throughput = 1.0
"#
        }
        IsaFamily::Neon => {
            r#"
[isa]
name = "neon"
fma = true

[[isa.instr]]
kind = "vload"
template = "ldr {dst}, [{addr}]"
latency = 4
throughput = 2.0

[[isa.instr]]
kind = "vbroadcast"
template = "ld1r {dst}.4s, [{addr}]"
latency = 4
throughput = 1.0

[[isa.instr]]
kind = "vstore"
template = "str {src1}, [{addr}]"
latency = 2
throughput = 1.0

[[isa.instr]]
kind = "vfma"
template = "fmla {dst}.4s, {src1}.4s, {src2}.4s"
latency = 4
throughput = 2.0
"#
        }
        IsaFamily::Avx => {
            r#"
[isa]
name = "avx2"
fma = true

[[isa.instr]]
kind = "vload"
template = "vmovups {addr}, {dst}"
latency = 5
throughput = 2.0

[[isa.instr]]
kind = "vbroadcast"
template = "vbroadcastss {addr}, {dst}"
latency = 5
throughput = 1.0

[[isa.instr]]
kind = "vstore"
template = "vmovups {src1}, {addr}"
latency = 4
throughput = 1.0

[[isa.instr]]
kind = "vfma"
template = "vfmadd231ps {src2}, {src1}, {dst}"
latency = 4
throughput = 2.0
"#
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(text: &str) -> Result<HardwareDescriptor, HwError> {
        extract_factors_with_advisor(text, &KeywordScanner::default())
    }

    #[test]
    fn cache_and_register_prose() {
        let d = scan(
            "The core implements RVV. It has a 64 KiB L1 data cache, 32 vector registers of 128 bits \
             and a shared 1 MiB L2 cache.",
        )
        .unwrap();
        assert_eq!(d.memory[0].name, "L1");
        assert_eq!(d.memory[0].size_bytes, 64 * 1024);
        assert_eq!(d.memory[1].size_bytes, 1024 * 1024);
        assert_eq!(d.registers.vector_count, 32);
        assert_eq!(d.registers.vector_width_bits, 128);
        assert_eq!(d.isa.name, "rvv");
    }

    #[test]
    fn empty_text_finds_nothing() {
        assert!(matches!(scan(""), Err(HwError::NoFactors)));
        assert!(matches!(scan("   \n"), Err(HwError::NoFactors)));
    }

    #[test]
    fn missing_isa_is_named() {
        let err = scan("64 KiB L1 data cache, 32 vector registers of 128 bits").unwrap_err();
        match err {
            HwError::MissingFactor(f) => assert!(f.starts_with("INST")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn instruction_cache_is_ignored() {
        let d =
            scan("NEON core: 32 KiB L1 instruction cache, 64 KiB L1 data cache, VLEN 128").unwrap();
        assert_eq!(d.memory[0].size_bytes, 64 * 1024);
        assert_eq!(d.registers.vector_count, 32);
    }

    #[test]
    fn unparseable_advisor_output_keeps_text() {
        struct Bad;
        impl FactorAdvisor for Bad {
            fn extract_descriptor_text(&self, _: &str) -> Result<String, HwError> {
                Ok("not a descriptor".into())
            }
        }
        match extract_factors_with_advisor("x", &Bad).unwrap_err() {
            HwError::AdvisorOutput { text, .. } => assert_eq!(text, "not a descriptor"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
