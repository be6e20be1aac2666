//! Analytic cost model: per-level memory traffic under a blocked reuse
//! model, and a cycle estimate that overlaps compute and memory when the
//! kernel is pipelined.
//!
//! Every function here is pure; identical inputs give identical outputs.

use serde::{Deserialize, Serialize};

use crate::error::CostError;
use crate::hw::{HardwareDescriptor, InstrKind};
use crate::ir::{block_counts, pack_call_counts, GemmSpec, KernelIR, ScheduleSketch};

/// Bytes moved into one memory level, split by operand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTraffic {
    pub level: String,
    pub a_bytes: u64,
    pub b_bytes: u64,
    pub c_bytes: u64,
    /// Extra read and write of packed panels staged at this level.
    pub pack_bytes: u64,
}

impl LevelTraffic {
    pub fn total(&self) -> u64 {
        self.a_bytes + self.b_bytes + self.c_bytes + self.pack_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub compute_cycles: u64,
    pub traffic_bytes_per_level: Vec<LevelTraffic>,
    pub mem_cycles: f64,
    pub total_cycles: f64,
    pub est_gflops: f64,
}

/// A block is resident at a level when it occupies at most half the
/// capacity; the other half absorbs conflict misses.
fn fits(bytes: u64, capacity: u64) -> bool {
    bytes <= capacity / 2
}

/// Each operand is reloaded once per outer block of the other dimension
/// unless its working set stays resident:
///
/// * A block `bm×bk` with one B micro-panel `bk×nr` and the C register tile.
/// * B block `bk×bn` with one A micro-panel `mr×bk` and the C register tile.
/// * C block `bm×bn`, read and written once per k block otherwise.
///
/// Packed A is staged in L2 (L1 on single-level hierarchies) and packed B in
/// the last-level cache; each packed element costs one extra read and write
/// there.
pub fn estimate_traffic(
    sketch: &ScheduleSketch,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
) -> Vec<LevelTraffic> {
    let b = spec.dtype.bytes() as u64;
    let (m, n, k) = (spec.m as u64, spec.n as u64, spec.k as u64);
    let (bm, bn, bk) = (sketch.bm as u64, sketch.bn as u64, sketch.bk as u64);
    let (mr, nr) = (sketch.mr as u64, sketch.nr as u64);
    let (cm, cn, ck) = block_counts(sketch, spec);
    let (calls_a, calls_b) = pack_call_counts(sketch, spec);
    // Each packing pass covers the whole operand; repeats come from outer
    // loops that do not index it.
    let pack_a = m * k * (calls_a / (cm * ck)) as u64 * b * 2;
    let pack_b = k * n * (calls_b / (ck * cn)) as u64 * b * 2;

    let caches = hw.caches();
    let a_stage = caches.get(1).or(caches.first()).map(|c| c.name.as_str());
    let b_stage = caches.last().map(|c| c.name.as_str());

    let ws_a = (bm * bk + bk * nr + mr * nr) * b;
    let ws_b = (bk * bn + mr * bk + mr * nr) * b;
    let ws_c = bm * bn * b;

    hw.memory
        .iter()
        .map(|level| {
            let cap = level.size_bytes;
            let name = level.name.as_str();
            let reload = |resident: bool, times: usize| if resident { 1 } else { times as u64 };
            let mut pack_bytes = 0;
            if Some(name) == a_stage {
                pack_bytes += pack_a;
            }
            if Some(name) == b_stage {
                pack_bytes += pack_b;
            }
            LevelTraffic {
                level: level.name.clone(),
                a_bytes: m * k * reload(fits(ws_a, cap), cn) * b,
                b_bytes: k * n * reload(fits(ws_b, cap), cm) * b,
                c_bytes: 2 * m * n * reload(fits(ws_c, cap), ck) * b,
                pack_bytes,
            }
        })
        .collect()
}

/// Sum of FMA throughputs for the kernel's execution mode.
pub fn fma_throughput(hw: &HardwareDescriptor, ir: &KernelIR) -> f64 {
    let kind = if ir.mode.is_vector() {
        InstrKind::VFma
    } else {
        InstrKind::SFma
    };
    hw.isa
        .instrs
        .iter()
        .filter(|t| t.kind == kind)
        .map(|t| t.throughput_per_cycle)
        .sum()
}

/// FLOPs per second bound, in GFLOPS: `lanes · fma throughput · 2 · GHz`.
pub fn peak_gflops(hw: &HardwareDescriptor, ir: &KernelIR) -> f64 {
    ir.lanes() as f64 * fma_throughput(hw, ir) * 2.0 * hw.frequency_ghz
}

/// Compute cycles count FMAs at full issue rate; memory cycles charge each
/// level's traffic at its bandwidth. A pipelined kernel overlaps the two
/// and pays a startup of `depth ×` the deepest level's latency, but never
/// costs more than running them back to back.
pub fn estimate_cycles(
    sketch: &ScheduleSketch,
    ir: &KernelIR,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
) -> CostBreakdown {
    let throughput = fma_throughput(hw, ir);
    let fmas = (spec.m * spec.n * spec.k) as f64;
    let compute_cycles = (fmas / (ir.lanes() as f64 * throughput)).ceil() as u64;
    let traffic = estimate_traffic(sketch, spec, hw);
    let mem_cycles: f64 = traffic
        .iter()
        .zip(&hw.memory)
        .map(|(t, level)| t.total() as f64 / level.bytes_per_cycle)
        .sum();
    let compute = compute_cycles as f64;
    let serial = compute + mem_cycles;
    let total_cycles = if sketch.pipeline {
        let deepest = hw.memory.last().map_or(0, |l| l.latency_cycles) as f64;
        let startup = ir.pipeline_depth as f64 * deepest;
        (compute.max(mem_cycles) + startup).min(serial)
    } else {
        serial
    };
    let mut breakdown = CostBreakdown {
        compute_cycles,
        traffic_bytes_per_level: traffic,
        mem_cycles,
        total_cycles,
        est_gflops: 0.0,
    };
    breakdown.est_gflops = estimate_gflops(&breakdown, spec, hw).unwrap_or(0.0);
    breakdown
}

/// `2·m·n·k` FLOPs over `total_cycles / frequency`, in GFLOPS.
pub fn estimate_gflops(
    breakdown: &CostBreakdown,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
) -> Result<f64, CostError> {
    let cycles = breakdown.total_cycles;
    if cycles.is_nan() || cycles <= 0.0 {
        return Err(CostError::NonPositiveCycles(cycles));
    }
    Ok(spec.flops() * hw.frequency_ghz / cycles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::build_kernel_ir;
    use crate::hw::parse_descriptor;
    use crate::ir::{DType, LoopDim};

    fn c910() -> HardwareDescriptor {
        parse_descriptor(include_str!("../../../descriptors/c910-like.toml")).unwrap()
    }

    fn sketch(bm: usize, bn: usize, bk: usize, mr: usize, nr: usize) -> ScheduleSketch {
        ScheduleSketch {
            bm,
            bn,
            bk,
            mr,
            nr,
            loop_order: LoopDim::DEFAULT_ORDER,
            pack_a: false,
            pack_b: false,
            pipeline: false,
            prefetch_distance: 0,
        }
    }

    #[test]
    fn single_tile_has_full_reuse() {
        let spec = GemmSpec::new(4, 4, 4, DType::F32).unwrap();
        for t in estimate_traffic(&sketch(4, 4, 4, 2, 4), &spec, &c910()) {
            assert_eq!(
                (t.a_bytes, t.b_bytes, t.c_bytes, t.pack_bytes),
                (64, 64, 128, 0),
                "{}",
                t.level
            );
        }
    }

    #[test]
    fn halving_bn_doubles_excluded_a_traffic() {
        let spec = GemmSpec::new(256, 256, 256, DType::F32).unwrap();
        let hw = c910();
        let wide = estimate_traffic(&sketch(128, 128, 256, 2, 4), &spec, &hw);
        let narrow = estimate_traffic(&sketch(128, 64, 256, 2, 4), &spec, &hw);
        // The A block (128 KiB) misses half of L1 in both configs.
        assert_eq!(wide[0].a_bytes, 256 * 256 * 2 * 4);
        assert_eq!(narrow[0].a_bytes, 2 * wide[0].a_bytes);
    }

    #[test]
    fn gflops_unit_conversion() {
        let spec = GemmSpec::new(4, 4, 4, DType::F32).unwrap();
        let mut hw = c910();
        hw.frequency_ghz = 1.0;
        let bd = CostBreakdown {
            compute_cycles: 0,
            traffic_bytes_per_level: vec![],
            mem_cycles: 0.0,
            total_cycles: 128.0,
            est_gflops: 0.0,
        };
        assert_eq!(estimate_gflops(&bd, &spec, &hw).unwrap(), 1.0);
        hw.frequency_ghz = 2.0;
        assert_eq!(estimate_gflops(&bd, &spec, &hw).unwrap(), 2.0);
        let zero = CostBreakdown {
            total_cycles: 0.0,
            ..bd
        };
        assert!(estimate_gflops(&zero, &spec, &hw).is_err());
    }

    #[test]
    fn pipeline_never_costs_more() {
        let spec = GemmSpec::new(64, 64, 64, DType::F32).unwrap();
        let hw = c910();
        let mut s = sketch(32, 32, 32, 4, 8);
        let off = estimate_cycles(
            &s,
            &build_kernel_ir(&s, &spec, &hw, false).unwrap(),
            &spec,
            &hw,
        );
        s.pipeline = true;
        let on = estimate_cycles(
            &s,
            &build_kernel_ir(&s, &spec, &hw, false).unwrap(),
            &spec,
            &hw,
        );
        assert!(on.total_cycles <= off.total_cycles);
        assert_eq!(on.compute_cycles, off.compute_cycles);
    }
}
