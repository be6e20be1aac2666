//! `forge`: generate and tune tensor operators from a one-line prompt.
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 correctness failure,
//! 4 toolchain or environment failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use forge_core::bench::{
    build_with_repair, compile_artifact, run_benchmark, BuildConfig, MeasurementSource,
    PerfMeasurement, Toolchain,
};
use forge_core::codegen::{choose_register_tile, naive_gemm_source, KernelFlavor};
use forge_core::cost::{estimate_cycles, peak_gflops};
use forge_core::error::{BenchError, HwError, PipelineError, PromptError};
use forge_core::hw::{load_descriptor_dir, optimization_hints, serialize_descriptor, Technique};
use forge_core::ir::DType;
use forge_core::pipeline::{
    descriptor_names, emit_to_dir, generate, parse_prompt, resolve_hardware, run_pipeline,
    AdvisorKind, Dims, EvaluatorKind, Operator, PipelineOptions, PromptRequest,
};

const EXIT_USAGE: u8 = 2;
const EXIT_CORRECTNESS: u8 = 3;
const EXIT_ENVIRONMENT: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "forge",
    version,
    about = "Tensor-operator generation and auto-tuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the whole pipeline from a one-line request.
    Prompt {
        sentence: String,
        /// GEMM sizes as MxKxN, used when the sentence gives none.
        #[arg(long)]
        dims: Option<Dims>,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tune: TuneArgs,
    },
    /// Generate the default sketch and kernel and check them against the oracle.
    Generate {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        common: Common,
    },
    /// Tune an operator and write the best sources and the tuning log.
    Tune {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tune: TuneArgs,
    },
    /// Compile and time the default operator on this host.
    Bench {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        common: Common,
        /// Also time the naive triple loop, compiled identically.
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value_t = forge_core::bench::DEFAULT_REPEATS)]
        repeats: usize,
    },
    /// Write the default operator's sources.
    Emit {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        common: Common,
    },
    /// Show a descriptor and what the generator derives from it, or list all.
    DescribeHw {
        #[arg(long)]
        hw: Option<String>,
        #[arg(long, env = "FORGE_DESCRIPTOR_DIR", default_value = "descriptors")]
        descriptor_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Target {
    #[arg(long)]
    hw: String,
    #[arg(long, default_value = "gemm")]
    op: Operator,
    /// GEMM sizes as MxKxN.
    #[arg(long)]
    dims: Option<Dims>,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, env = "FORGE_DESCRIPTOR_DIR", default_value = "descriptors")]
    descriptor_dir: PathBuf,
    #[arg(long, default_value = "forge-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
    dtype: DTypeArg,
    #[arg(long, value_enum, default_value_t = FlavorArg::Templated)]
    flavor: FlavorArg,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[arg(long, default_value_t = 100)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "cost")]
    evaluator: EvaluatorKind,
    #[arg(long, default_value = "heuristic")]
    advisor: AdvisorKind,
    /// Tuning log path; defaults to OUT/tuning_log.jsonl.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = forge_core::bench::DEFAULT_REPEATS)]
    repeats: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DTypeArg {
    F32,
    F64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FlavorArg {
    Templated,
    Scalar,
}

impl From<DTypeArg> for DType {
    fn from(d: DTypeArg) -> DType {
        match d {
            DTypeArg::F32 => DType::F32,
            DTypeArg::F64 => DType::F64,
        }
    }
}

impl From<FlavorArg> for KernelFlavor {
    fn from(f: FlavorArg) -> KernelFlavor {
        match f {
            FlavorArg::Templated => KernelFlavor::Templated,
            FlavorArg::Scalar => KernelFlavor::ScalarPortable,
        }
    }
}

fn options(common: &Common, tune: Option<&TuneArgs>) -> PipelineOptions {
    let mut o = PipelineOptions {
        descriptor_dir: common.descriptor_dir.clone(),
        out: common.out.clone(),
        dtype: common.dtype.into(),
        flavor: common.flavor.into(),
        ..PipelineOptions::default()
    };
    if let Some(t) = tune {
        o.log = t.log.clone();
        o.budget = t.budget;
        o.seed = t.seed;
        o.evaluator = t.evaluator;
        o.advisor = t.advisor;
        o.repeats = t.repeats;
    }
    o
}

fn request(target: &Target) -> PromptRequest {
    PromptRequest {
        operator: target.op,
        hardware_name: target.hw.clone(),
        dims: target.dims,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(p) = e.downcast_ref::<PipelineError>() {
        return match p {
            PipelineError::Hardware(_) | PipelineError::Generate(_) | PipelineError::Tune(_) => {
                EXIT_USAGE
            }
            PipelineError::Correctness { .. } => EXIT_CORRECTNESS,
            PipelineError::Toolchain(_)
            | PipelineError::Build(_)
            | PipelineError::AdvisorUnavailable(_)
            | PipelineError::Io { .. } => EXIT_ENVIRONMENT,
        };
    }
    if e.is::<PromptError>() || e.is::<HwError>() {
        return EXIT_USAGE;
    }
    if e.is::<BenchError>() || e.is::<std::io::Error>() {
        return EXIT_ENVIRONMENT;
    }
    if e.is::<Incorrect>() {
        return EXIT_CORRECTNESS;
    }
    1
}

/// A measured operator that failed its correctness check.
#[derive(Debug)]
struct Incorrect(String);

impl std::fmt::Display for Incorrect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "correctness check failed: {}", self.0)
    }
}

impl std::error::Error for Incorrect {}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prompt {
            sentence,
            dims,
            common,
            tune,
        } => {
            let names =
                descriptor_names(&common.descriptor_dir).map_err(PipelineError::Hardware)?;
            let mut req = parse_prompt(&sentence, &names)?;
            req.dims = req.dims.or(dims);
            print!("{}", run_pipeline(&req, &options(&common, Some(&tune)))?);
        }
        Command::Tune {
            target,
            common,
            tune,
        } => {
            let req = request(&target);
            print!("{}", run_pipeline(&req, &options(&common, Some(&tune)))?);
        }
        Command::Generate { target, common } => {
            let gen = generate(&request(&target), &options(&common, None))?;
            let s = &gen.spec;
            println!("{} {}x{}x{} on {}", target.op, s.m, s.k, s.n, gen.hw.name);
            let sk = &gen.config.sketch;
            println!(
                "sketch: BM {} BN {} BK {} MR {} NR {} order {:?} pack A {} pack B {} pipeline {}",
                sk.bm, sk.bn, sk.bk, sk.mr, sk.nr, sk.loop_order, sk.pack_a, sk.pack_b, sk.pipeline
            );
            let k = &gen.config.kernel;
            println!(
                "kernel: {}x{} tile, {} lanes, pipeline depth {}, {} blocks, {} instructions",
                k.mr,
                k.nr,
                k.lanes(),
                k.pipeline_depth,
                k.stage_blocks.len(),
                k.instrs().count()
            );
            let bd = estimate_cycles(&gen.config.sketch, k, s, &gen.hw);
            println!(
                "estimate: {:.3} GFLOPS (peak {:.3})",
                bd.est_gflops,
                peak_gflops(&gen.hw, k)
            );
            println!("diff test: {}", gen.diff.to_json());
        }
        Command::Emit { target, common } => {
            let opts = options(&common, None);
            let gen = generate(&request(&target), &opts)?;
            for p in emit_to_dir(&gen.config, &gen, opts.flavor, &opts.out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Bench {
            target,
            common,
            baseline,
            repeats,
        } => bench(&target, &common, baseline, repeats)?,
        Command::DescribeHw { hw, descriptor_dir } => describe(hw.as_deref(), &descriptor_dir)?,
    }
    Ok(())
}

fn print_measurement(label: &str, m: &PerfMeasurement) {
    let median = m
        .median_seconds()
        .map_or("-".to_string(), |s| format!("{:.6}s", s));
    println!(
        "{label}: {:.3} GFLOPS (median {median} over {} runs)",
        m.gflops,
        m.runs.len()
    );
}

fn bench(target: &Target, common: &Common, baseline: bool, repeats: usize) -> Result<()> {
    let opts = options(common, None);
    let gen = generate(&request(target), &opts)?;
    let toolchain = Toolchain::detect()?;
    let outcome = build_with_repair(
        BuildConfig::new(gen.config.sketch, opts.flavor),
        &gen.spec,
        &gen.hw,
        &toolchain,
        &opts.out.join("bench"),
        repeats,
        0,
        None,
    );
    let Some(m) = &outcome.measurement else {
        return Err(PipelineError::Build(outcome.diagnostics()).into());
    };
    if !outcome.config.applied.is_empty() {
        println!("repairs applied: {:?}", outcome.config.applied);
    }
    print_measurement("operator", m);
    if baseline {
        let src = naive_gemm_source(&gen.spec, "naive");
        let op = compile_artifact(&src, &gen.spec, &toolchain, &opts.out.join("naive"))?;
        let n = run_benchmark(&op, repeats, 0, &toolchain);
        if !n.admissible() {
            return Err(Incorrect(n.error.unwrap_or_default()).into());
        }
        debug_assert_eq!(n.source, MeasurementSource::RealRun);
        print_measurement("naive", &n);
        println!("speedup: {:.2}x", m.gflops / n.gflops);
    }
    Ok(())
}

fn describe(name: Option<&str>, dir: &Path) -> Result<()> {
    let Some(name) = name else {
        for d in load_descriptor_dir(dir)? {
            println!("{}\t{:?}\t{} GHz", d.name, d.family, d.frequency_ghz);
        }
        return Ok(());
    };
    let hw = resolve_hardware(dir, name)?;
    print!("{}", serialize_descriptor(&hw));
    println!();
    println!("# derived");
    for dtype in [DType::F32, DType::F64] {
        let tile = choose_register_tile(&hw, dtype)
            .map(|(mr, nr)| format!("{mr}x{nr}"))
            .unwrap_or_else(|e| e.to_string());
        println!(
            "# {}: {} lanes, register tile {tile}",
            dtype.c_type(),
            hw.lanes(dtype.bits())
        );
    }
    for t in Technique::ALL {
        for h in optimization_hints().for_technique(t) {
            println!("# hint {:?}/{:?}: {}", h.technique, h.factor, h.hint_text);
        }
    }
    Ok(())
}
