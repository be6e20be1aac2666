use thiserror::Error;

use crate::hw::Diagnostic;

fn join(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum HwError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid descriptor: {}", join(.0))]
    Invariant(Vec<Diagnostic>),
    #[error("unknown instruction kind `{kind}` at line {line}")]
    UnknownInstrKind { kind: String, line: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<HwError>,
    },
    #[error("duplicate descriptor name `{0}`")]
    DuplicateName(String),
    #[error("no descriptor named `{name}` (available: {})", .available.join(", "))]
    NotFound {
        name: String,
        available: Vec<String>,
    },
    #[error("advisor unavailable: {0}")]
    AdvisorUnavailable(String),
    #[error("advisor output is not a valid descriptor: {source}")]
    AdvisorOutput {
        text: String,
        #[source]
        source: Box<HwError>,
    },
    #[error("no factors found")]
    NoFactors,
    #[error("missing hardware factor: {0}")]
    MissingFactor(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrError {
    #[error("invalid operator spec: {0}")]
    InvalidSpec(String),
    #[error("no feasible register tile for this descriptor: {0}")]
    NoFeasibleTile(String),
    #[error("register overflow: {0}")]
    RegisterOverflow(String),
    #[error("illegal sketch: {}", join(.0))]
    IllegalSketch(Vec<Diagnostic>),
    #[error("invalid kernel: {}", join(.0))]
    InvalidKernel(Vec<Diagnostic>),
    #[error("descriptor family {0} is not supported for kernel generation")]
    UnsupportedFamily(String),
    #[error("descriptor has no template for {0}")]
    MissingTemplate(crate::hw::InstrKind),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("out-of-bounds access: {0}")]
    OutOfBounds(String),
    #[error("read of uninitialized register {0}")]
    UninitializedRegister(String),
    #[error("malformed kernel: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no C toolchain found ({0})")]
    ToolchainMissing(String),
    #[error("invalid toolchain template `{0}`: must contain {{src}} and {{out}}")]
    InvalidTemplate(String),
    #[error("compilation failed:\n{diagnostics}")]
    Compile { diagnostics: String },
    #[error("operator run failed: {0}")]
    Runtime(String),
    #[error("benchmark I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ir(#[from] IrError),
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error(transparent)]
    Ir(#[from] IrError),
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(
        "no operator keyword (expected gemm, matmul, matrix multiplication, conv or convolution)"
    )]
    NoOperator,
    #[error("prompt names both gemm and conv")]
    AmbiguousOperator,
    #[error("no hardware match (available: {})", .0.join(", "))]
    NoHardware(Vec<String>),
    #[error("ambiguous hardware match: {}", .0.join(", "))]
    AmbiguousHardware(Vec<String>),
    #[error("bad dimensions: {0}")]
    BadDims(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("total cycle count must be positive, got {0}")]
    NonPositiveCycles(f64),
}

/// A pipeline failure, labeled with the stage it happened in.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage 1 (hardware): {0}")]
    Hardware(#[from] HwError),
    #[error("stage 2 (generate): {0}")]
    Generate(#[from] IrError),
    #[error("{stage}: diff test failed: {report}")]
    Correctness { stage: &'static str, report: String },
    #[error("stage 3 (tune): {0}")]
    Tune(#[from] TuneError),
    #[error("stage 3 (tune): {0}")]
    Toolchain(#[from] BenchError),
    #[error("stage 3 (tune): real-run build failed:\n{0}")]
    Build(String),
    #[error("stage 3 (tune): llm advisor needs {0} to be set")]
    AdvisorUnavailable(&'static str),
    #[error("stage 4 (emit): {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
