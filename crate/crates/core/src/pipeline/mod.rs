//! The prompt-to-operator pipeline: resolve the hardware descriptor,
//! generate and check the default operator, tune it, and write the final
//! sources, the tuning log and a summary.

mod log;
mod prompt;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use log::{curve_path, read_tuning_log, write_tuning_log};
pub use prompt::{parse_prompt, Dims, Operator, PromptRequest};

use crate::bench::{build_with_repair, BuildConfig, Toolchain, DEFAULT_REPEATS};
use crate::codegen::{
    conv_to_gemm, emit_im2col_source, emit_operator, Im2colPlan, KernelFlavor, SourceArtifact,
};
use crate::error::{HwError, IrError, PipelineError};
use crate::hw::{load_descriptor_dir, optimization_hints, HardwareDescriptor, Technique};
use crate::interp::{diff_test, DiffReport};
use crate::ir::{default_sketch, ConvSpec, DType, GemmSpec, ScheduleSketch};
use crate::tuner::{
    tune_from, Advisor, CostModelEvaluator, HeuristicAdvisor, LlmAdvisor, RandomAdvisor,
    RealRunEvaluator, TuneOptions, TuningConfig, LLM_ENDPOINT_ENV,
};

/// GEMM sizes used when a request names none.
pub const DEFAULT_GEMM_DIMS: Dims = Dims {
    m: 512,
    k: 512,
    n: 512,
};
/// Seed of the inputs used by the diff-test gates.
pub const GATE_SEED: u64 = 0x5eed;
/// Symbol prefix of emitted operators.
pub const OPERATOR_NAME: &str = "gemm";
pub const LOG_FILE: &str = "tuning_log.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "best_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    Cost,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvisorKind {
    Heuristic,
    Llm,
    Random,
}

macro_rules! keyword_enum {
    ($ty:ident { $($word:literal => $variant:ident),* }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($word => Ok($ty::$variant),)*
                    other => Err(format!("unknown value `{other}` (expected one of: {})", [$($word),*].join(", "))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $word,)* })
            }
        }
    };
}

keyword_enum!(EvaluatorKind { "cost" => Cost, "real" => Real });
keyword_enum!(AdvisorKind { "heuristic" => Heuristic, "llm" => Llm, "random" => Random });

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub descriptor_dir: PathBuf,
    pub out: PathBuf,
    /// Defaults to `out/tuning_log.jsonl`.
    pub log: Option<PathBuf>,
    pub budget: usize,
    pub seed: u64,
    pub evaluator: EvaluatorKind,
    pub advisor: AdvisorKind,
    pub dtype: DType,
    /// Flavor of the emitted sources.
    pub flavor: KernelFlavor,
    /// Timed runs per real-run candidate.
    pub repeats: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            descriptor_dir: PathBuf::from("descriptors"),
            out: PathBuf::from("forge-out"),
            log: None,
            budget: TuneOptions::default().budget,
            seed: 0,
            evaluator: EvaluatorKind::Cost,
            advisor: AdvisorKind::Heuristic,
            dtype: DType::F32,
            flavor: KernelFlavor::Templated,
            repeats: DEFAULT_REPEATS,
        }
    }
}

impl PipelineOptions {
    pub fn log_path(&self) -> PathBuf {
        self.log.clone().unwrap_or_else(|| self.out.join(LOG_FILE))
    }
}

/// The descriptor named `name` in `dir`.
pub fn resolve_hardware(dir: &Path, name: &str) -> Result<HardwareDescriptor, HwError> {
    let all = load_descriptor_dir(dir)?;
    let available = all.iter().map(|d| d.name.clone()).collect();
    all.into_iter()
        .find(|d| d.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| HwError::NotFound {
            name: name.to_string(),
            available,
        })
}

/// Names of the descriptors in `dir`.
pub fn descriptor_names(dir: &Path) -> Result<Vec<String>, HwError> {
    Ok(load_descriptor_dir(dir)?
        .into_iter()
        .map(|d| d.name)
        .collect())
}

/// The GEMM to generate. A conv request is lowered through im2col; its
/// shape is the default 3×3 case since `dims` only describe GEMMs.
pub fn operator_spec(
    operator: Operator,
    dims: Option<Dims>,
    dtype: DType,
) -> Result<(GemmSpec, Option<Im2colPlan>), IrError> {
    match operator {
        Operator::Gemm => {
            let d = dims.unwrap_or(DEFAULT_GEMM_DIMS);
            Ok((GemmSpec::new(d.m, d.k, d.n, dtype)?, None))
        }
        Operator::Conv => {
            let plan = conv_to_gemm(&ConvSpec::resnet_default(dtype))?;
            Ok((plan.gemm, Some(plan)))
        }
    }
}

/// Output of stages 1 and 2.
#[derive(Debug, Clone)]
pub struct Generated {
    pub hw: HardwareDescriptor,
    pub spec: GemmSpec,
    pub conv: Option<Im2colPlan>,
    pub config: TuningConfig,
    pub diff: DiffReport,
}

fn gate(
    spec: &GemmSpec,
    config: &TuningConfig,
    stage: &'static str,
) -> Result<DiffReport, PipelineError> {
    let report = diff_test(spec, &config.sketch, &config.kernel, GATE_SEED);
    if !report.pass {
        return Err(PipelineError::Correctness {
            stage,
            report: report.to_json(),
        });
    }
    Ok(report)
}

/// Stage 1 and 2: descriptor, default sketch and kernel, diff-test gate.
pub fn generate(req: &PromptRequest, opts: &PipelineOptions) -> Result<Generated, PipelineError> {
    let hw = resolve_hardware(&opts.descriptor_dir, &req.hardware_name)?;
    let (spec, conv) = operator_spec(req.operator, req.dims, opts.dtype)?;
    let sketch = default_sketch(&spec, &hw)?;
    let config = TuningConfig::build(sketch, &spec, &hw).map_err(|e| match e {
        crate::error::TuneError::Ir(e) => PipelineError::Generate(e),
        e => PipelineError::Tune(e),
    })?;
    let diff = gate(&spec, &config, "stage 2 (generate)")?;
    Ok(Generated {
        hw,
        spec,
        conv,
        config,
        diff,
    })
}

/// All sources of `config`: the GEMM operator and, for conv, the im2col
/// routine.
pub fn operator_sources(
    config: &TuningConfig,
    gen: &Generated,
    flavor: KernelFlavor,
) -> Result<SourceArtifact, PipelineError> {
    let mut art = emit_operator(
        &config.sketch,
        &config.kernel,
        &gen.spec,
        &gen.hw,
        flavor,
        OPERATOR_NAME,
    )?;
    if let Some(plan) = &gen.conv {
        art = art.merge(emit_im2col_source(plan, "conv"));
    }
    Ok(art)
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

/// Write `config`'s sources, the config itself and, for conv, the im2col
/// plan under `out`. Returns the written paths.
pub fn emit_to_dir(
    config: &TuningConfig,
    gen: &Generated,
    flavor: KernelFlavor,
    out: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let art = operator_sources(config, gen, flavor)?;
    let mut written = Vec::new();
    for f in &art.files {
        let p = out.join(&f.path);
        write_file(&p, &f.text)?;
        written.push(p);
    }
    let p = out.join(CONFIG_FILE);
    write_file(&p, &pretty_json(config))?;
    written.push(p);
    if let Some(plan) = &gen.conv {
        let p = out.join("im2col_plan.json");
        write_file(&p, &pretty_json(plan))?;
        written.push(p);
    }
    Ok(written)
}

fn pretty_json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

/// What a pipeline run did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub operator: Operator,
    pub hardware: String,
    pub spec: GemmSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conv: Option<ConvSpec>,
    pub evaluator: EvaluatorKind,
    pub advisor: AdvisorKind,
    pub seed: u64,
    pub budget: usize,
    pub iterations: usize,
    pub initial_gflops: f64,
    pub final_gflops: f64,
    pub initial_sketch: ScheduleSketch,
    pub best_sketch: ScheduleSketch,
    /// Flavor the tuner measured; may differ from the emitted one on the
    /// real-run evaluator when the target's code cannot run on the host.
    pub measured_flavor: KernelFlavor,
    pub emitted_flavor: KernelFlavor,
    /// Optimization techniques with hints available for this descriptor.
    pub hinted_techniques: Vec<Technique>,
    pub files: Vec<PathBuf>,
    pub log: PathBuf,
    pub curve: PathBuf,
    pub wall_seconds: f64,
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.spec;
        writeln!(
            f,
            "{} {}x{}x{} {} on {}",
            self.operator,
            s.m,
            s.k,
            s.n,
            s.dtype.c_type(),
            self.hardware
        )?;
        writeln!(
            f,
            "tuned {} iterations ({} evaluator, {} advisor, seed {}) in {:.2}s",
            self.iterations, self.evaluator, self.advisor, self.seed, self.wall_seconds
        )?;
        let gain = if self.initial_gflops > 0.0 {
            self.final_gflops / self.initial_gflops
        } else {
            f64::NAN
        };
        writeln!(
            f,
            "GFLOPS: initial {:.3}, final {:.3} ({gain:.2}x)",
            self.initial_gflops, self.final_gflops
        )?;
        let b = &self.best_sketch;
        writeln!(
            f,
            "best sketch: BM {} BN {} BK {} MR {} NR {} pipeline {} prefetch {}",
            b.bm, b.bn, b.bk, b.mr, b.nr, b.pipeline, b.prefetch_distance
        )?;
        writeln!(f, "log: {}", self.log.display())?;
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

fn make_advisor(kind: AdvisorKind) -> Result<Box<dyn Advisor>, PipelineError> {
    Ok(match kind {
        AdvisorKind::Heuristic => Box::new(HeuristicAdvisor),
        AdvisorKind::Random => Box::new(RandomAdvisor),
        AdvisorKind::Llm => Box::new(
            LlmAdvisor::from_env().ok_or(PipelineError::AdvisorUnavailable(LLM_ENDPOINT_ENV))?,
        ),
    })
}

/// Run every stage for `req` and write the results under `opts.out`.
///
/// With the real-run evaluator the initial operator is first built through
/// the repair ladder; tuning then starts from the configuration and flavor
/// that worked.
pub fn run_pipeline(
    req: &PromptRequest,
    opts: &PipelineOptions,
) -> Result<PipelineReport, PipelineError> {
    let start = Instant::now();
    let gen = generate(req, opts)?;
    let mut advisor = make_advisor(opts.advisor)?;
    let tune_opts = TuneOptions {
        budget: opts.budget,
        seed: opts.seed,
        ..TuneOptions::default()
    };

    let (result, measured_flavor) = match opts.evaluator {
        EvaluatorKind::Cost => {
            let evaluator = CostModelEvaluator;
            let r = tune_from(
                gen.config.clone(),
                &gen.spec,
                &gen.hw,
                &evaluator,
                advisor.as_mut(),
                &tune_opts,
            );
            (r, opts.flavor)
        }
        EvaluatorKind::Real => {
            let toolchain = Toolchain::detect()?;
            let first = build_with_repair(
                BuildConfig::new(gen.config.sketch, opts.flavor),
                &gen.spec,
                &gen.hw,
                &toolchain,
                &opts.out.join("build"),
                opts.repeats,
                opts.seed,
                None,
            );
            if first.measurement.is_none() {
                return Err(PipelineError::Build(first.diagnostics()));
            }
            let initial = TuningConfig::build(first.config.sketch, &gen.spec, &gen.hw)?;
            let flavor = first.config.flavor;
            let evaluator = RealRunEvaluator::new(
                toolchain,
                opts.out.join("candidates"),
                flavor,
                opts.repeats,
                opts.seed,
            );
            let r = tune_from(
                initial,
                &gen.spec,
                &gen.hw,
                &evaluator,
                advisor.as_mut(),
                &tune_opts,
            );
            (r, flavor)
        }
    };

    gate(&gen.spec, &result.best, "stage 4 (emit)")?;
    let files = emit_to_dir(&result.best, &gen, opts.flavor, &opts.out)?;
    let log_path = opts.log_path();
    let curve = write_tuning_log(&result.log, &log_path).map_err(|source| PipelineError::Io {
        path: log_path.display().to_string(),
        source,
    })?;

    let report = PipelineReport {
        operator: req.operator,
        hardware: gen.hw.name.clone(),
        spec: gen.spec,
        conv: gen.conv.map(|p| p.conv),
        evaluator: opts.evaluator,
        advisor: opts.advisor,
        seed: opts.seed,
        budget: opts.budget,
        iterations: result.log.len(),
        initial_gflops: result.initial_measurement.gflops,
        final_gflops: result.best_measurement.gflops,
        initial_sketch: result.initial.sketch,
        best_sketch: result.best.sketch,
        measured_flavor,
        emitted_flavor: opts.flavor,
        hinted_techniques: Technique::ALL
            .into_iter()
            .filter(|&t| optimization_hints().for_technique(t).next().is_some())
            .collect(),
        files,
        log: log_path,
        curve,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_file(&opts.out.join(SUMMARY_FILE), &pretty_json(&report))?;
    Ok(report)
}
