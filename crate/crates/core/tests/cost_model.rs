use forge_core::codegen::build_kernel_ir;
use forge_core::cost::{estimate_cycles, estimate_traffic, peak_gflops};
use forge_core::hw::{parse_descriptor, HardwareDescriptor};
use forge_core::ir::{default_sketch, DType, GemmSpec, LoopDim, ScheduleSketch};
use proptest::prelude::*;

fn c910() -> HardwareDescriptor {
    parse_descriptor(include_str!("../../../descriptors/c910-like.toml")).unwrap()
}

/// Scalar-only core: one FMA per cycle, 1 GHz, one-cycle memory latency.
fn unit_core() -> HardwareDescriptor {
    parse_descriptor(
        r#"
[hardware]
name = "unit-core"
family = "cpu"
frequency_ghz = 1.0

[memory.L1]
size_kib = 32
line_bytes = 64
latency_cycles = 1
bytes_per_cycle = 64.0

[memory.DRAM]
line_bytes = 64
latency_cycles = 1
bytes_per_cycle = 64.0

[registers]
vector_count = 2
vector_width_bits = 0
scalar_count = 32

[isa]
name = "unit"
fma = true

[[isa.instr]]
kind = "sload"
template = "ld {dst}, {addr}"
latency = 1
throughput = 1.0

[[isa.instr]]
kind = "sstore"
template = "st {src1}, {addr}"
latency = 1
throughput = 1.0

[[isa.instr]]
kind = "sfma"
template = "fma {dst}, {src1}, {src2}"
latency = 1
throughput = 1.0
"#,
    )
    .unwrap()
}

fn small_sketch(pipeline: bool) -> ScheduleSketch {
    ScheduleSketch {
        bm: 4,
        bn: 4,
        bk: 4,
        mr: 4,
        nr: 1,
        loop_order: LoopDim::DEFAULT_ORDER,
        pack_a: false,
        pack_b: false,
        pipeline,
        prefetch_distance: 0,
    }
}

#[test]
fn unit_core_counts_fmas() {
    let hw = unit_core();
    let spec = GemmSpec::new(4, 4, 4, DType::F32).unwrap();
    let s = small_sketch(false);
    let ir = build_kernel_ir(&s, &spec, &hw, true).unwrap();
    let bd = estimate_cycles(&s, &ir, &spec, &hw);
    assert_eq!(bd.compute_cycles, 64);
    // 256 bytes at each of two 64 B/cycle levels.
    assert_eq!(bd.mem_cycles, 8.0);
    assert_eq!(bd.total_cycles, 72.0);
}

#[test]
fn pipelined_total_is_compute_plus_startup() {
    let hw = unit_core();
    let spec = GemmSpec::new(4, 4, 4, DType::F32).unwrap();
    let s = small_sketch(true);
    let ir = build_kernel_ir(&s, &spec, &hw, true).unwrap();
    assert_eq!(ir.pipeline_depth, 2);
    let bd = estimate_cycles(&s, &ir, &spec, &hw);
    assert_eq!(bd.total_cycles, 64.0 + 2.0);
}

#[test]
fn doubling_bandwidth_never_slows_down() {
    let spec = GemmSpec::new(128, 96, 64, DType::F32).unwrap();
    let hw = c910();
    let s = default_sketch(&spec, &hw).unwrap();
    let ir = build_kernel_ir(&s, &spec, &hw, false).unwrap();
    let mut fast = hw.clone();
    fast.memory
        .iter_mut()
        .for_each(|l| l.bytes_per_cycle *= 2.0);
    assert!(
        estimate_cycles(&s, &ir, &spec, &fast).total_cycles
            <= estimate_cycles(&s, &ir, &spec, &hw).total_cycles
    );
}

/// Default 512³ f32 sketch on c910-like, evaluated by hand:
/// bm=240, bn=256, bk=512, mr=30, nr=4, 4 lanes, one VFma per cycle.
#[test]
fn c910_default_512_fixture() {
    let hw = c910();
    let spec = GemmSpec::new(512, 512, 512, DType::F32).unwrap();
    let s = default_sketch(&spec, &hw).unwrap();
    assert_eq!((s.bm, s.bn, s.bk, s.mr, s.nr), (240, 256, 512, 30, 4));
    let ir = build_kernel_ir(&s, &spec, &hw, false).unwrap();
    let bd = estimate_cycles(&s, &ir, &spec, &hw);

    let mib = 1u64 << 20;
    // A block working set 500192 B: misses half of L1 (reloaded for both
    // column blocks), resident in L2. B block working set 586208 B misses
    // both caches (reloaded for 3 row blocks). C block misses L1 but k has
    // a single block. Both packed panels stage in L2: A packed once per
    // column block, B once.
    let expected = [
        ("L1", 2 * mib, 3 * mib, 2 * mib, 0),
        ("L2", mib, 3 * mib, 2 * mib, 4 * mib + 2 * mib),
        ("DRAM", mib, mib, 2 * mib, 0),
    ];
    for (t, (name, a, b, c, p)) in bd.traffic_bytes_per_level.iter().zip(expected) {
        assert_eq!(
            (
                t.level.as_str(),
                t.a_bytes,
                t.b_bytes,
                t.c_bytes,
                t.pack_bytes
            ),
            (name, a, b, c, p)
        );
    }
    let mem = (7 * mib) as f64 / 16.0 + (12 * mib) as f64 / 8.0 + (4 * mib) as f64 / 4.0;
    assert_eq!(bd.compute_cycles, 512 * 512 * 512 / 4);
    assert_eq!(bd.mem_cycles, mem);
    assert_eq!(bd.total_cycles, 33_554_432.0 + 3_080_192.0);
    assert_eq!(bd.est_gflops.to_bits(), 13.555635062611808f64.to_bits());
    assert!(bd.est_gflops <= peak_gflops(&hw, &ir));
}

fn arb_config() -> impl Strategy<Value = (GemmSpec, ScheduleSketch)> {
    (
        1usize..=256,
        1usize..=256,
        1usize..=256,
        any::<bool>(),
        any::<bool>(),
        0usize..6,
    )
        .prop_flat_map(|(m, k, n, pa, pb, order)| {
            let spec = GemmSpec::new(m, k, n, DType::F32).unwrap();
            (
                1usize..=4,
                1usize..=2,
                1usize..=k,
                Just((spec, pa, pb, order)),
            )
                .prop_flat_map(move |(mr, nrv, bk, (spec, pa, pb, order))| {
                    let nr = 4 * nrv;
                    (
                        Just(mr),
                        Just(nr),
                        mr.min(spec.m)..=spec.m,
                        nr.min(spec.n)..=spec.n.max(nr),
                        Just(bk),
                    )
                        .prop_map(move |(mr, nr, bm, bn, bk)| {
                            (
                                spec,
                                ScheduleSketch {
                                    bm,
                                    bn,
                                    bk,
                                    mr,
                                    nr,
                                    loop_order: LoopDim::ALL_ORDERS[order],
                                    pack_a: pa,
                                    pack_b: pb,
                                    pipeline: false,
                                    prefetch_distance: 0,
                                },
                            )
                        })
                })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bigger_caches_never_add_traffic((spec, s) in arb_config(), scale in 2u64..8) {
        let hw = c910();
        let mut big = hw.clone();
        for l in big.memory.iter_mut().filter(|l| !l.is_main_memory()) {
            l.size_bytes *= scale;
        }
        for (t0, t1) in estimate_traffic(&s, &spec, &hw).iter().zip(estimate_traffic(&s, &spec, &big).iter()) {
            prop_assert!(t1.total() <= t0.total());
        }
    }
}
