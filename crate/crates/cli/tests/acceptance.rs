//! Acceptance checks, one pass/fail line per criterion.
//!
//! Runs without the libtest harness so each criterion reports its own
//! outcome and timing. Exits non-zero iff a gating criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use forge_core::bench::{
    build_with_repair, compile_artifact, run_benchmark, BuildConfig, Toolchain,
};
use forge_core::codegen::{build_kernel_ir, conv_to_gemm, naive_gemm_source, KernelFlavor};
use forge_core::cost::{estimate_cycles, peak_gflops};
use forge_core::error::HwError;
use forge_core::hw::{parse_descriptor, serialize_descriptor, HardwareDescriptor};
use forge_core::interp::{diff_test_flavors, interpret_program, naive_conv, random_inputs};
use forge_core::ir::{
    apply_swap, check_sketch_legality, default_sketch, kernel_mode, legal_swaps, micro_tiles,
    pipelined_tile_fits, register_budget, sample_sketch, validate_kernel, walk_blocks, ConvSpec,
    DType, GemmSpec, LoopDim, LoopEvent, ScheduleSketch,
};
use forge_core::tensor::{Element, Tensor};
use forge_core::tuner::{
    tune, tune_from, BlockGrid, CostModelEvaluator, HeuristicAdvisor, RandomAdvisor,
    RealRunEvaluator, TuneOptions, TuneResult, TuningConfig, TuningSpace,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CPU_DESCRIPTORS: [&str; 4] = ["c910-like", "k1-like", "a76-like", "generic-host"];
const FLAVORS: [KernelFlavor; 2] = [KernelFlavor::Templated, KernelFlavor::ScalarPortable];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn descriptor_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../descriptors")
}

fn descriptor(name: &str) -> HardwareDescriptor {
    let path = descriptor_dir().join(format!("{name}.toml"));
    parse_descriptor(&fs::read_to_string(&path).expect("descriptor readable"))
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn cpu_descriptors() -> Vec<HardwareDescriptor> {
    CPU_DESCRIPTORS.iter().map(|n| descriptor(n)).collect()
}

fn dims(rng: &mut impl Rng, max: usize) -> (usize, usize, usize) {
    (
        rng.random_range(1..=max),
        rng.random_range(1..=max),
        rng.random_range(1..=max),
    )
}

fn oracle_gemm() -> Outcome {
    let start = Instant::now();
    let hws = cpu_descriptors();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut failures = Vec::new();
    for case in 0..200 {
        let hw = hws.choose(&mut rng).expect("non-empty");
        let (m, k, n) = dims(&mut rng, 96);
        let dtype = if rng.random_bool(0.5) {
            DType::F32
        } else {
            DType::F64
        };
        let spec = GemmSpec::new(m, k, n, dtype).expect("positive dims");
        let sketch = (0..100)
            .find_map(|_| sample_sketch(&spec, hw, &mut rng))
            .expect("some legal sketch");
        let ir = match build_kernel_ir(&sketch, &spec, hw, true) {
            Ok(ir) => ir,
            Err(e) => {
                failures.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let report = diff_test_flavors(&spec, &sketch, &ir, case, &FLAVORS);
        let (key, tol) = match dtype {
            DType::F32 => ("f32", 1e-4),
            DType::F64 => ("f64", 1e-10),
        };
        let w = worst.entry(key).or_insert(0.0);
        *w = w.max(report.max_rel_err);
        if report.error.is_some() || report.max_rel_err > tol {
            failures.push(format!(
                "case {case} {}x{}x{} on {}: err {:e} {:?}",
                m, k, n, hw.name, report.max_rel_err, report.error
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let seen: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.2e}")).collect();
    outcome(
        failures.is_empty() && secs < 120.0,
        format!(
            "200 configs, worst {}, {} failures{}",
            seen.join(", "),
            failures.len(),
            failures
                .first()
                .map(|f| format!(" first: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn random_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::random(shape, rng)
}

fn oracle_conv() -> Outcome {
    let hw = descriptor("c910-like");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut cases, mut mismatches) = (0usize, Vec::new());
    for h in 1..=6 {
        for w in 1..=6 {
            for kh in 1..=3 {
                for kw in 1..=3 {
                    for c_in in 1..=3 {
                        for c_out in 1..=3 {
                            for stride in 1..=2 {
                                for pad in 0..=1 {
                                    let spec = ConvSpec {
                                        h,
                                        w,
                                        c_in,
                                        c_out,
                                        kh,
                                        kw,
                                        stride,
                                        pad,
                                        dtype: DType::F64,
                                    };
                                    if spec.validate().is_err() {
                                        continue;
                                    }
                                    cases += 1;
                                    if let Err(e) = conv_case(&spec, &hw, cases, &mut rng) {
                                        mismatches.push(format!("{spec:?}: {e}"));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{cases} conv specs, {} mismatches{}",
            mismatches.len(),
            mismatches
                .first()
                .map(|f| format!(" first: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn conv_case(
    spec: &ConvSpec,
    hw: &HardwareDescriptor,
    case: usize,
    rng: &mut impl Rng,
) -> Result<(), String> {
    let x = random_tensor(vec![spec.c_in, spec.h, spec.w], rng);
    let k = random_tensor(vec![spec.c_out, spec.c_in, spec.kh, spec.kw], rng);
    let plan = conv_to_gemm(spec).map_err(|e| e.to_string())?;
    let sketch = default_sketch(&plan.gemm, hw).map_err(|e| e.to_string())?;
    let ir = build_kernel_ir(&sketch, &plan.gemm, hw, true).map_err(|e| e.to_string())?;
    let a = plan.filter_matrix(&k).map_err(|e| e.to_string())?;
    let b = plan.apply(&x).map_err(|e| e.to_string())?;
    let flavor = FLAVORS[case % 2];
    let c =
        interpret_program(&sketch, &ir, &plan.gemm, &a, &b, flavor).map_err(|e| e.to_string())?;
    let y = plan.output(c).map_err(|e| e.to_string())?;
    let reference = naive_conv(&x, &k, spec).map_err(|e| e.to_string())?;
    if y.shape != reference.shape || y.data != reference.data {
        return Err("im2col result differs from naive_conv".into());
    }
    Ok(())
}

fn tiling_coverage() -> Outcome {
    let mut walks = 0usize;
    let mut failures = Vec::new();
    let orders = LoopDim::ALL_ORDERS;
    for m in 1..=8 {
        for n in 1..=8 {
            for k in 1..=8 {
                let spec = GemmSpec::new(m, k, n, DType::F32).expect("positive dims");
                for bm in 1..=8 {
                    for bn in 1..=8 {
                        for bk in 1..=8 {
                            for order in orders {
                                walks += 1;
                                let sketch = ScheduleSketch {
                                    bm,
                                    bn,
                                    bk,
                                    mr: bm.div_ceil(2),
                                    nr: bn.div_ceil(2),
                                    loop_order: order,
                                    pack_a: true,
                                    pack_b: true,
                                    pipeline: false,
                                    prefetch_distance: 0,
                                };
                                if let Some(e) = coverage_error(&sketch, &spec) {
                                    failures.push(format!("{m}x{n}x{k} {sketch:?}: {e}"));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{walks} walks, {} failures{}",
            failures.len(),
            failures
                .first()
                .map(|f| format!(" first: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn coverage_error(sketch: &ScheduleSketch, spec: &GemmSpec) -> Option<String> {
    let (m, n, k) = (spec.m, spec.n, spec.k);
    let mut count = vec![0u32; m * n * k];
    walk_blocks(sketch, spec, |ev| {
        if let LoopEvent::Block(block) = ev {
            for t in micro_tiles(sketch, &block) {
                for i in t.i..t.i + t.rows {
                    for j in t.j..t.j + t.cols {
                        for p in block.pc..block.pc + block.kb {
                            if i < m && j < n && p < k {
                                count[(i * n + j) * k + p] += 1;
                            } else {
                                count[0] += 1000;
                            }
                        }
                    }
                }
            }
        }
    });
    count
        .iter()
        .position(|&c| c != 1)
        .map(|idx| format!("index {idx} visited {} times", count[idx]))
}

fn same_bits<T: Element>(x: &[T], y: &[T]) -> bool {
    x.len() == y.len()
        && x.iter()
            .zip(y)
            .all(|(a, b)| a.to_f64().to_bits() == b.to_f64().to_bits())
}

fn reorder_case<T: Element>(
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    case: u64,
    rng: &mut impl Rng,
) -> Result<usize, String> {
    let sketch = default_sketch(spec, hw).map_err(|e| e.to_string())?;
    let ir = build_kernel_ir(&sketch, spec, hw, true).map_err(|e| e.to_string())?;
    let mut reordered = ir.clone();
    let len = rng.random_range(1..=64);
    let mut applied = 0;
    for _ in 0..len {
        let candidates: Vec<(usize, Vec<(usize, usize)>)> = reordered
            .stage_blocks
            .iter()
            .enumerate()
            .map(|(b, block)| (b, legal_swaps(block)))
            .filter(|(_, s)| !s.is_empty())
            .collect();
        let Some((b, swaps)) = candidates.choose(rng) else {
            break;
        };
        let &(i, _) = swaps.choose(rng).expect("non-empty");
        if !apply_swap(&mut reordered.stage_blocks[*b], i) {
            return Err(format!("legal swap {i} in block {b} was refused"));
        }
        applied += 1;
    }
    let diags = validate_kernel(&reordered, hw);
    if !diags.is_empty() {
        return Err(format!("reordered kernel invalid: {diags:?}"));
    }
    let (a, b) = random_inputs::<T>(spec, case);
    for flavor in FLAVORS {
        let before =
            interpret_program(&sketch, &ir, spec, &a, &b, flavor).map_err(|e| e.to_string())?;
        let after = interpret_program(&sketch, &reordered, spec, &a, &b, flavor)
            .map_err(|e| e.to_string())?;
        if !same_bits(&before.data, &after.data) {
            return Err(format!("{flavor:?} output changed after {applied} swaps"));
        }
    }
    Ok(applied)
}

fn reorder_invariance() -> Outcome {
    let hws = cpu_descriptors();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut swaps, mut failures) = (0usize, Vec::new());
    for case in 0..1000u64 {
        let hw = hws.choose(&mut rng).expect("non-empty");
        let (m, k, n) = dims(&mut rng, 40);
        let dtype = if case % 2 == 0 {
            DType::F32
        } else {
            DType::F64
        };
        let spec = GemmSpec::new(m, k, n, dtype).expect("positive dims");
        let result = match dtype {
            DType::F32 => reorder_case::<f32>(&spec, hw, case, &mut rng),
            DType::F64 => reorder_case::<f64>(&spec, hw, case, &mut rng),
        };
        match result {
            Ok(n) => swaps += n,
            Err(e) => failures.push(format!("case {case} {m}x{k}x{n} on {}: {e}", hw.name)),
        }
    }
    outcome(
        failures.is_empty() && swaps > 0,
        format!(
            "1000 sequences, {swaps} swaps, {} failures{}",
            failures.len(),
            failures
                .first()
                .map(|f| format!(" first: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn mcts_vs_exhaustive() -> Outcome {
    let start = Instant::now();
    let hw = descriptor("c910-like");
    let spec = GemmSpec::new(512, 512, 512, DType::F32).expect("positive dims");
    let grid = BlockGrid {
        min: 16,
        max: 256,
        step: 16,
    };
    let space = TuningSpace::block_grid(grid);
    let initial = TuningConfig::build(
        space.snap(default_sketch(&spec, &hw).expect("cpu descriptor")),
        &spec,
        &hw,
    )
    .expect("snapped default builds");

    let mut best = 0.0f64;
    for bm in grid.values() {
        for bn in grid.values() {
            for bk in grid.values() {
                let sketch = ScheduleSketch {
                    bm,
                    bn,
                    bk,
                    ..initial.sketch
                };
                if check_sketch_legality(&sketch, &spec, &hw).is_empty() {
                    best =
                        best.max(estimate_cycles(&sketch, &initial.kernel, &spec, &hw).est_gflops);
                }
            }
        }
    }

    let ratios: Vec<f64> = (0..10)
        .map(|seed| {
            let opts = TuneOptions {
                budget: 200,
                seed,
                space: space.clone(),
                ..TuneOptions::default()
            };
            let r = tune_from(
                initial.clone(),
                &spec,
                &hw,
                &CostModelEvaluator,
                &mut HeuristicAdvisor,
                &opts,
            );
            r.best_measurement.gflops / best
        })
        .collect();
    let med = median(ratios.clone());
    let secs = start.elapsed().as_secs_f64();
    outcome(
        med >= 0.95 && secs < 60.0,
        format!(
            "exhaustive best {best:.4} GFLOPS, median ratio {med:.4}, min {:.4}",
            ratios.iter().copied().fold(f64::INFINITY, f64::min)
        ),
    )
}

fn structural_errors(
    r: &TuneResult,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    budget: usize,
) -> Vec<String> {
    let mut errs = Vec::new();
    if r.history.best_trace.windows(2).any(|w| w[1] < w[0]) {
        errs.push("best-so-far decreased".to_string());
    }
    if r.log
        .windows(2)
        .any(|w| w[1].best_so_far < w[0].best_so_far)
    {
        errs.push("logged best-so-far decreased".to_string());
    }
    if r.log.len() != budget || r.tree.root().visits != budget as u64 {
        errs.push(format!(
            "{} iterations, root visits {}",
            r.log.len(),
            r.tree.root().visits
        ));
    }
    for c in r.simulated_configs() {
        let mut diags = check_sketch_legality(&c.sketch, spec, hw);
        diags.extend(validate_kernel(&c.kernel, hw));
        if !diags.is_empty() {
            errs.push(format!("illegal simulated config: {diags:?}"));
            break;
        }
    }
    errs
}

fn mcts_invariants() -> Outcome {
    const BUDGET: usize = 1000;
    let hw = descriptor("c910-like");
    let spec = GemmSpec::new(512, 512, 512, DType::F32).expect("positive dims");
    let run = |seed: u64, heuristic: bool| {
        let opts = TuneOptions {
            budget: BUDGET,
            seed,
            ..TuneOptions::default()
        };
        if heuristic {
            tune(
                &spec,
                &hw,
                &CostModelEvaluator,
                &mut HeuristicAdvisor,
                &opts,
            )
        } else {
            tune(&spec, &hw, &CostModelEvaluator, &mut RandomAdvisor, &opts)
        }
        .expect("default sketch builds")
    };
    let mut errors = Vec::new();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..10u64 {
        let h = run(seed, true);
        let r = run(seed, false);
        if seed < 5 {
            for (label, res) in [("heuristic", &h), ("random", &r)] {
                for e in structural_errors(res, &spec, &hw, BUDGET) {
                    errors.push(format!("seed {seed} {label}: {e}"));
                }
            }
        }
        let (hb, rb) = (h.history.best_gflops(), r.history.best_gflops());
        if hb >= rb {
            wins += 1;
        }
        pairs.push(format!("{hb:.2}/{rb:.2}"));
    }
    outcome(
        errors.is_empty() && wins >= 7,
        format!(
            "invariants {} (5 seeds x {BUDGET} iterations), heuristic >= random in {wins}/10 [{}]",
            if errors.is_empty() {
                "hold".to_string()
            } else {
                format!("broken: {}", errors[0])
            },
            pairs.join(" ")
        ),
    )
}

fn cost_model_properties() -> Outcome {
    let hws = cpu_descriptors();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let mut pipeline_checks = 0;
    let mut checked = 0;
    while checked < 500 {
        let hw = hws.choose(&mut rng).expect("non-empty").clone();
        let (m, k, n) = dims(&mut rng, 512);
        let dtype = if rng.random_bool(0.5) {
            DType::F32
        } else {
            DType::F64
        };
        let spec = GemmSpec::new(m, k, n, dtype).expect("positive dims");
        let Some(sketch) = sample_sketch(&spec, &hw, &mut rng) else {
            continue;
        };
        let ir = build_kernel_ir(&sketch, &spec, &hw, true).expect("sampled sketch builds");
        checked += 1;
        let base = estimate_cycles(&sketch, &ir, &spec, &hw);
        let mut fail = |what: String| failures.push(format!("{m}x{k}x{n} on {}: {what}", hw.name));

        if estimate_cycles(&sketch, &ir, &spec, &hw.clone()) != base {
            fail("estimate not deterministic".into());
        }
        let peak = peak_gflops(&hw, &ir);
        if base.est_gflops > peak {
            fail(format!("estimate {} above peak {peak}", base.est_gflops));
        }

        let caches = hw.memory.len() - 1;
        let level = rng.random_range(0..caches);
        let mut bigger = hw.clone();
        bigger.memory[level].size_bytes *= rng.random_range(2..=8);
        let enlarged = estimate_cycles(&sketch, &ir, &spec, &bigger);
        if enlarged.total_cycles > base.total_cycles {
            fail(format!(
                "larger {} raised cycles {} -> {}",
                hw.memory[level].name, base.total_cycles, enlarged.total_cycles
            ));
        }

        let level = rng.random_range(0..hw.memory.len());
        let mut faster = hw.clone();
        faster.memory[level].bytes_per_cycle *= rng.random_range(2.0..8.0);
        let widened = estimate_cycles(&sketch, &ir, &spec, &faster);
        if widened.total_cycles > base.total_cycles {
            fail(format!(
                "faster {} raised cycles {} -> {}",
                hw.memory[level].name, base.total_cycles, widened.total_cycles
            ));
        }

        let lanes = ir.lanes();
        let budget = register_budget(&hw, kernel_mode(&hw, dtype, sketch.nr, n).expect("mode"));
        if pipelined_tile_fits(sketch.mr, sketch.nr, lanes, budget) {
            let off_sketch = ScheduleSketch {
                pipeline: false,
                ..sketch
            };
            let on_sketch = ScheduleSketch {
                pipeline: true,
                ..sketch
            };
            let off_ir = build_kernel_ir(&off_sketch, &spec, &hw, true).expect("off builds");
            let on_ir = build_kernel_ir(&on_sketch, &spec, &hw, true).expect("on builds");
            let off = estimate_cycles(&off_sketch, &off_ir, &spec, &hw);
            let on = estimate_cycles(&on_sketch, &on_ir, &spec, &hw);
            pipeline_checks += 1;
            if on.total_cycles > off.total_cycles {
                fail(format!(
                    "pipelining raised cycles {} -> {}",
                    off.total_cycles, on.total_cycles
                ));
            }
        }
    }
    outcome(
        failures.is_empty() && pipeline_checks > 0,
        format!(
            "500 configs, {pipeline_checks} pipeline comparisons, {} failures{}",
            failures.len(),
            failures
                .first()
                .map(|f| format!(" first: {f}"))
                .unwrap_or_default()
        ),
    )
}

/// Invalid descriptor text derived from a valid one, and the diagnostic
/// field and rule text it must produce.
struct InvalidCase {
    label: &'static str,
    text: String,
    expect: Expect,
}

enum Expect {
    Invariant {
        field: &'static str,
        rule: &'static str,
    },
    Syntax,
    UnknownKind(&'static str),
}

fn edit(base: &str, from: &str, to: &str) -> String {
    assert!(base.contains(from), "corpus edit target `{from}` missing");
    base.replacen(from, to, 1)
}

fn invalid_corpus(base: &str) -> Vec<InvalidCase> {
    let inv = |label, text, field, rule| InvalidCase {
        label,
        text,
        expect: Expect::Invariant { field, rule },
    };
    let without_fma = base
        .split("\n[[isa.instr]]")
        .filter(|chunk| !chunk.contains("fma\""))
        .collect::<Vec<_>>()
        .join("\n[[isa.instr]]");
    vec![
        inv(
            "shrinking L2",
            edit(base, "size_kib = 1024", "size_kib = 16"),
            "memory.L2",
            "memory levels must increase in size",
        ),
        inv(
            "single vector register",
            edit(base, "vector_count = 16", "vector_count = 1"),
            "registers.vector_count",
            "vector_count must be >= 2",
        ),
        inv(
            "odd vector width",
            edit(base, "vector_width_bits = 256", "vector_width_bits = 96"),
            "registers.vector_width_bits",
            "vector width must be one of",
        ),
        inv(
            "line size not dividing",
            edit(base, "line_bytes = 64", "line_bytes = 48"),
            "memory.L1.line_bytes",
            "line size must divide level size",
        ),
        inv(
            "template placeholder",
            edit(
                base,
                "{dst} = forge_vload({addr});",
                "{dst} = forge_vload(0);",
            ),
            "isa.instr[0].template",
            "must use exactly the placeholders",
        ),
        inv(
            "zero throughput",
            edit(base, "throughput = 2.0", "throughput = 0.0"),
            "isa.instr[0].throughput",
            "throughput must be positive",
        ),
        inv(
            "no fma template",
            without_fma,
            "isa.instr",
            "cpu descriptors must define a vfma or sfma template",
        ),
        inv(
            "gpu without sm",
            edit(base, "family = \"cpu\"", "family = \"gpu\""),
            "sm",
            "gpu descriptors require an [sm] section",
        ),
        InvalidCase {
            label: "unknown instruction kind",
            text: edit(base, "kind = \"vload\"", "kind = \"vgather\""),
            expect: Expect::UnknownKind("vgather"),
        },
        InvalidCase {
            label: "syntax error",
            text: edit(base, "frequency_ghz = 3.0", "frequency_ghz = = 3.0"),
            expect: Expect::Syntax,
        },
    ]
}

fn check_invalid(case: &InvalidCase) -> Result<(), String> {
    let err = match parse_descriptor(&case.text) {
        Ok(_) => return Err("accepted".into()),
        Err(e) => e,
    };
    let ok = match (&case.expect, &err) {
        (Expect::Invariant { field, rule }, HwError::Invariant(diags)) => diags
            .iter()
            .any(|d| d.field == *field && d.rule.contains(rule)),
        (Expect::Syntax, HwError::Syntax { line, .. }) => *line > 0,
        (Expect::UnknownKind(k), HwError::UnknownInstrKind { kind, .. }) => kind == k,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("wrong diagnostic: {err}"))
    }
}

fn descriptor_round_trip() -> Outcome {
    let mut failures = Vec::new();
    let mut shipped = 0;
    let mut entries: Vec<PathBuf> = fs::read_dir(descriptor_dir())
        .expect("descriptor dir")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    entries.sort();
    for path in &entries {
        shipped += 1;
        let name = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let text = fs::read_to_string(path).expect("readable");
        let result = parse_descriptor(&text).and_then(|d| {
            let again = parse_descriptor(&serialize_descriptor(&d))?;
            Ok((d, again))
        });
        match result {
            Ok((d, again)) if d == again => {}
            Ok(_) => failures.push(format!("{name}: round trip changed the descriptor")),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let base = fs::read_to_string(descriptor_dir().join("generic-host.toml")).expect("readable");
    let corpus = invalid_corpus(&base);
    for case in &corpus {
        if let Err(e) = check_invalid(case) {
            failures.push(format!("invalid case `{}`: {e}", case.label));
        }
    }
    outcome(
        failures.is_empty() && shipped > 0 && corpus.len() >= 6,
        format!(
            "{shipped} descriptors round-trip, {} invalid cases, {} failures{}",
            corpus.len(),
            failures.len(),
            failures
                .first()
                .map(|f| format!(" first: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn real_run_sanity() -> Outcome {
    let toolchain = match Toolchain::detect() {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("skipped: {e}")),
    };
    let hw = descriptor("generic-host");
    let spec = GemmSpec::new(512, 512, 512, DType::F32).expect("positive dims");
    let dir = tempfile::tempdir().expect("tempdir");
    let flavor = KernelFlavor::ScalarPortable;
    let start = default_sketch(&spec, &hw).expect("cpu descriptor");
    let repaired = build_with_repair(
        BuildConfig::new(start, flavor),
        &spec,
        &hw,
        &toolchain,
        &dir.path().join("initial"),
        3,
        9,
        None,
    );
    if repaired.measurement.is_none() {
        return outcome(
            false,
            format!("initial build failed: {}", repaired.diagnostics()),
        );
    }
    let initial = match TuningConfig::build(repaired.config.sketch, &spec, &hw) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("initial config: {e}")),
    };
    let evaluator = RealRunEvaluator::new(
        toolchain.clone(),
        dir.path().join("candidates"),
        repaired.config.flavor,
        3,
        9,
    );
    let opts = TuneOptions {
        budget: 12,
        seed: 9,
        ..TuneOptions::default()
    };
    let tuned = tune_from(
        initial,
        &spec,
        &hw,
        &evaluator,
        &mut HeuristicAdvisor,
        &opts,
    );
    let naive = match compile_artifact(
        &naive_gemm_source(&spec, "naive"),
        &spec,
        &toolchain,
        &dir.path().join("naive"),
    ) {
        Ok(op) => run_benchmark(&op, 3, 9, &toolchain),
        Err(e) => return outcome(false, format!("naive build failed: {e}")),
    };
    let (t, b) = (tuned.best_measurement.gflops, naive.gflops);
    let ratio = if b > 0.0 { t / b } else { 0.0 };
    outcome(
        ratio >= 2.0,
        format!("tuned {t:.2} GFLOPS vs naive {b:.2} GFLOPS, {ratio:.2}x"),
    )
}

const PROMPT: &str = "Please generate a high-performance GEMM operator on C910-like CPU";

fn prompt_run(out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_forge"))
        .arg("prompt")
        .arg(PROMPT)
        .args([
            "--evaluator",
            "cost",
            "--advisor",
            "heuristic",
            "--seed",
            "7",
        ])
        .arg("--descriptor-dir")
        .arg(descriptor_dir())
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| format!("cannot run forge: {e}"))?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(())
}

fn compared_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| {
                    n.ends_with(".c")
                        || n.ends_with(".inc")
                        || n.ends_with(".jsonl")
                        || n.ends_with(".tsv")
                        || n == "best_config.json"
                })
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let (a, b) = (tmp.path().join("first"), tmp.path().join("second"));
    for dir in [&a, &b] {
        if let Err(e) = prompt_run(dir) {
            return outcome(false, format!("prompt run failed: {e}"));
        }
    }
    let names = compared_files(&a);
    let mut differing = Vec::new();
    if names != compared_files(&b) {
        differing.push("file sets differ".to_string());
    }
    for n in &names {
        if fs::read(a.join(n)).ok() != fs::read(b.join(n)).ok() {
            differing.push(n.clone());
        }
    }
    let has_log = names.iter().any(|n| n.ends_with(".jsonl"));
    let has_source = names.iter().any(|n| n.ends_with(".c"));
    outcome(
        differing.is_empty() && has_log && has_source,
        format!(
            "{} files compared [{}]{}",
            names.len(),
            names.join(", "),
            if differing.is_empty() {
                String::new()
            } else {
                format!(", differing: {}", differing.join(", "))
            }
        ),
    )
}

struct Criterion {
    id: u32,
    name: &'static str,
    gating: bool,
    run: fn() -> Outcome,
}

const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        name: "oracle equivalence (gemm)",
        gating: true,
        run: oracle_gemm,
    },
    Criterion {
        id: 2,
        name: "oracle equivalence (conv)",
        gating: true,
        run: oracle_conv,
    },
    Criterion {
        id: 3,
        name: "tiling coverage",
        gating: true,
        run: tiling_coverage,
    },
    Criterion {
        id: 4,
        name: "reorder invariance",
        gating: true,
        run: reorder_invariance,
    },
    Criterion {
        id: 5,
        name: "mcts vs exhaustive grid",
        gating: true,
        run: mcts_vs_exhaustive,
    },
    Criterion {
        id: 6,
        name: "mcts structural invariants",
        gating: true,
        run: mcts_invariants,
    },
    Criterion {
        id: 7,
        name: "cost model properties",
        gating: true,
        run: cost_model_properties,
    },
    Criterion {
        id: 8,
        name: "descriptor round trip",
        gating: true,
        run: descriptor_round_trip,
    },
    Criterion {
        id: 9,
        name: "real-run sanity (informational)",
        gating: false,
        run: real_run_sanity,
    },
    Criterion {
        id: 10,
        name: "end-to-end determinism",
        gating: true,
        run: end_to_end_determinism,
    },
];

fn main() -> ExitCode {
    let only: Option<u32> = std::env::var("FORGE_ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut gating_failures = 0;
    for c in CRITERIA.iter().filter(|c| only.is_none_or(|o| o == c.id)) {
        let start = Instant::now();
        let result =
            catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| outcome(false, "panicked"));
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict}: {} ({}; {:.1}s)",
            c.id,
            c.name,
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.pass && c.gating {
            gating_failures += 1;
        }
    }
    if gating_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
