//! Static registry linking optimization techniques to hardware factors.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technique {
    Tiling,
    Reordering,
    Vectorization,
    Layout,
    Pipeline,
}

impl Technique {
    pub const ALL: [Technique; 5] = [
        Technique::Tiling,
        Technique::Reordering,
        Technique::Vectorization,
        Technique::Layout,
        Technique::Pipeline,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factor {
    MH,
    INST,
    VR,
    SMs,
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hint {
    pub technique: Technique,
    pub factor: Factor,
    pub hint_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintSet {
    pub entries: Vec<Hint>,
}

impl HintSet {
    pub fn lookup(&self, technique: Technique, factor: Factor) -> Option<&Hint> {
        self.entries
            .iter()
            .find(|h| h.technique == technique && h.factor == factor)
    }

    pub fn for_technique(&self, technique: Technique) -> impl Iterator<Item = &Hint> {
        self.entries
            .iter()
            .filter(move |h| h.technique == technique)
    }
}

const ENTRIES: &[(Technique, Factor, &str)] = &[
    (
        Technique::Tiling,
        Factor::MH,
        "Cache capacity at each level bounds the tile sizes: pick BK so a packed \
         BK x NR panel of B stays resident in L1, BM so the BM x BK block of A \
         fits in L2, and BN so the BK x BN panel of B fits in the last-level cache, \
         keeping reused inputs local.",
    ),
    (
        Technique::Tiling,
        Factor::SMs,
        "On GPUs the number of SMs and cores per SM fixes how the output is split \
         into grid and block dimensions so that every SM receives work.",
    ),
    (
        Technique::Reordering,
        Factor::MH,
        "Order the blocked loops so the operand reused by the inner loops is the \
         one kept in the closest cache level; the outer-N, middle-K, inner-M order \
         keeps a packed B panel hot while A blocks stream through.",
    ),
    (
        Technique::Vectorization,
        Factor::INST,
        "Vector load, broadcast and fused multiply-add instructions are the \
         primitives of the micro-kernel; the register tile's N extent must be a \
         whole number of vector lanes.",
    ),
    (
        Technique::Vectorization,
        Factor::VR,
        "Register width sets the lane count per vector and register count bounds \
         the accumulator tile: MR * (NR / lanes) accumulators plus one B row and \
         one A broadcast must fit in the register file.",
    ),
    (
        Technique::Layout,
        Factor::MH,
        "Packing A and B into contiguous micro-panels turns strided accesses into \
         unit-stride streams that match cache lines and the hardware prefetcher.",
    ),
    (
        Technique::Pipeline,
        Factor::VR,
        "Spare registers allow double buffering: loads for the next k-step fill a \
         second register set while the current FMAs execute.",
    ),
    (
        Technique::Pipeline,
        Factor::INST,
        "Instruction latency and throughput determine how many independent FMAs \
         must be in flight to hide load latency inside one instruction block.",
    ),
];

/// The registry; the same value on every call.
pub fn optimization_hints() -> &'static HintSet {
    static HINTS: OnceLock<HintSet> = OnceLock::new();
    HINTS.get_or_init(|| HintSet {
        entries: ENTRIES
            .iter()
            .map(|&(technique, factor, text)| Hint {
                technique,
                factor,
                hint_text: text.split_whitespace().collect::<Vec<_>>().join(" "),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling_hint_mentions_cache_capacity() {
        let h = optimization_hints()
            .lookup(Technique::Tiling, Factor::MH)
            .unwrap();
        assert!(h.hint_text.contains("Cache capacity"));
        assert!(h.hint_text.contains("tile sizes"));
    }

    #[test]
    fn sm_hint_covers_grid_and_block() {
        let h = optimization_hints()
            .lookup(Technique::Tiling, Factor::SMs)
            .unwrap();
        assert!(h.hint_text.contains("grid and block"));
    }

    #[test]
    fn vectorization_inst_hint_exists() {
        let h = optimization_hints()
            .lookup(Technique::Vectorization, Factor::INST)
            .unwrap();
        assert!(!h.hint_text.is_empty());
    }

    #[test]
    fn every_technique_is_covered() {
        let hints = optimization_hints();
        for t in Technique::ALL {
            assert!(hints.for_technique(t).count() >= 1, "{t} missing");
        }
        assert!(hints.entries.iter().all(|h| !h.hint_text.is_empty()));
    }

    #[test]
    fn registry_is_stable() {
        assert_eq!(optimization_hints(), optimization_hints());
        assert!(std::ptr::eq(optimization_hints(), optimization_hints()));
    }
}
