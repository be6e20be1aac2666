//! Real-run evaluation: compile emitted operators with the host C
//! toolchain, check them against the reference oracle, time them, and
//! repair configurations that fail.
//!
//! Timed runs are serialized through one process-wide lock so that two
//! measurements never overlap.

mod driver;
mod repair;

use std::fs;
use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use repair::{
    build_with_repair, classify_failure, refine_on_failure, BuildConfig, Failure, FailureKind,
    Repair, RepairAdvisor, RepairOutcome, RepairStep, MAX_ADVISOR_ATTEMPTS, MAX_ATTEMPTS,
};

use crate::codegen::SourceArtifact;
use crate::error::BenchError;
use crate::interp::{naive_gemm, random_inputs};
use crate::ir::{DType, GemmSpec};
use crate::tensor::{max_rel_err, Element, Tensor};

/// Environment variable overriding the compiler command template.
pub const CC_TEMPLATE_ENV: &str = "FORGE_CC_TEMPLATE";

/// Compilers probed, in order, when no template is configured.
pub const PROBED_COMPILERS: [&str; 3] = ["cc", "gcc", "clang"];

/// Strict IEEE evaluation: no contraction, so compiled results track the
/// unfused reference.
const DEFAULT_FLAGS: &str = "-O2 -std=gnu11 -ffp-contract=off";

pub const DEFAULT_REPEATS: usize = 5;

/// Leading text of the diagnostic for a wrong result.
pub(crate) const INCORRECT_PREFIX: &str = "max relative error";

static MEASUREMENT_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementSource {
    CostModel,
    RealRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfMeasurement {
    pub gflops: f64,
    /// Seconds per timed run; estimated seconds for the cost model.
    pub runs: Vec<f64>,
    pub source: MeasurementSource,
    pub correctness_pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PerfMeasurement {
    pub fn failed(source: MeasurementSource, error: impl Into<String>) -> Self {
        PerfMeasurement {
            gflops: 0.0,
            runs: Vec::new(),
            source,
            correctness_pass: false,
            error: Some(error.into()),
        }
    }

    /// Only correct measurements may influence the search.
    pub fn admissible(&self) -> bool {
        self.correctness_pass
    }

    pub fn median_seconds(&self) -> Option<f64> {
        median(&self.runs)
    }
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Compiler command with `{src}` and `{out}` placeholders, split on
/// whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Toolchain {
    pub template: String,
    pub run_timeout: Duration,
}

impl Toolchain {
    pub fn new(template: impl Into<String>) -> Result<Self, BenchError> {
        let template = template.into();
        if !template.contains("{src}") || !template.contains("{out}") {
            return Err(BenchError::InvalidTemplate(template));
        }
        Ok(Toolchain {
            template,
            run_timeout: Duration::from_secs(120),
        })
    }

    /// `FORGE_CC_TEMPLATE` if set, else the first of [`PROBED_COMPILERS`]
    /// that answers `--version`.
    pub fn detect() -> Result<Self, BenchError> {
        if let Ok(t) = std::env::var(CC_TEMPLATE_ENV) {
            return Toolchain::new(t);
        }
        for cc in PROBED_COMPILERS {
            let ok = Command::new(cc)
                .arg("--version")
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status()
                .is_ok_and(|s| s.success());
            if ok {
                return Toolchain::new(format!("{cc} {DEFAULT_FLAGS} {{src}} -o {{out}}"));
            }
        }
        Err(BenchError::ToolchainMissing(format!(
            "none of {} on PATH and {CC_TEMPLATE_ENV} unset",
            PROBED_COMPILERS.join(", ")
        )))
    }

    fn command(&self, src: &Path, out: &Path) -> Result<Command, BenchError> {
        let mut words = self.template.split_whitespace().map(|w| {
            w.replace("{src}", &src.to_string_lossy())
                .replace("{out}", &out.to_string_lossy())
        });
        let program = words
            .next()
            .ok_or_else(|| BenchError::InvalidTemplate(self.template.clone()))?;
        let mut cmd = Command::new(program);
        cmd.args(words);
        Ok(cmd)
    }
}

/// A built operator binary wrapped in the check/time driver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledOperator {
    pub binary: PathBuf,
    pub dir: PathBuf,
    pub spec: GemmSpec,
}

/// Write `src` and a driver into `dir`, then compile. Compiler output is
/// returned verbatim on failure.
pub fn compile_artifact(
    src: &SourceArtifact,
    spec: &GemmSpec,
    toolchain: &Toolchain,
    dir: &Path,
) -> Result<CompiledOperator, BenchError> {
    fs::create_dir_all(dir)?;
    for f in &src.files {
        fs::write(dir.join(&f.path), &f.text)?;
    }
    let stem = src.main_file().path.trim_end_matches(".c").to_string();
    let driver = dir.join(format!("{stem}_driver.c"));
    fs::write(&driver, driver::driver_source(src, spec))?;
    let binary = dir.join(format!("{stem}_bench"));
    let output = toolchain.command(&driver, &binary)?.output().map_err(|e| {
        BenchError::ToolchainMissing(format!("cannot run `{}`: {e}", toolchain.template))
    })?;
    if !output.status.success() {
        let mut diagnostics = String::from_utf8_lossy(&output.stderr).into_owned();
        diagnostics.push_str(&String::from_utf8_lossy(&output.stdout));
        return Err(BenchError::Compile { diagnostics });
    }
    Ok(CompiledOperator {
        binary,
        dir: dir.to_path_buf(),
        spec: *spec,
    })
}

/// Run the binary, killing it after `timeout`; returns stdout.
fn run_binary(
    op: &CompiledOperator,
    args: &[&str],
    timeout: Duration,
) -> Result<String, BenchError> {
    let mut child = Command::new(&op.binary)
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| BenchError::Runtime(format!("cannot start {}: {e}", op.binary.display())))?;
    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() > timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(BenchError::Runtime(format!("timed out after {timeout:?}")));
        }
        std::thread::sleep(Duration::from_millis(2));
    };
    let mut stdout = String::new();
    let mut stderr = String::new();
    if let Some(mut s) = child.stdout.take() {
        s.read_to_string(&mut stdout)?;
    }
    if let Some(mut s) = child.stderr.take() {
        s.read_to_string(&mut stderr)?;
    }
    if !status.success() {
        return Err(BenchError::Runtime(format!(
            "exit status {status}: {}",
            stderr.trim()
        )));
    }
    Ok(stdout)
}

fn to_bytes<T: Element>(t: &Tensor<T>) -> Vec<u8> {
    t.data
        .iter()
        .flat_map(|&x| match T::DTYPE {
            DType::F32 => (x.to_f64() as f32).to_ne_bytes().to_vec(),
            DType::F64 => x.to_f64().to_ne_bytes().to_vec(),
        })
        .collect()
}

fn from_bytes<T: Element>(bytes: &[u8]) -> Vec<T> {
    match T::DTYPE {
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_ne_bytes(c.try_into().unwrap()) as f64))
            .collect(),
        DType::F64 => bytes
            .chunks_exact(8)
            .map(|c| T::from_f64(f64::from_ne_bytes(c.try_into().unwrap())))
            .collect(),
    }
}

fn check_typed<T: Element>(
    op: &CompiledOperator,
    seed: u64,
    timeout: Duration,
) -> Result<f64, BenchError> {
    let spec = &op.spec;
    let (a, b) = random_inputs::<T>(spec, seed);
    let reference = naive_gemm(&a, &b).map_err(|e| BenchError::Runtime(e.to_string()))?;
    let (pa, pb, pc) = (
        op.dir.join("check_a.bin"),
        op.dir.join("check_b.bin"),
        op.dir.join("check_c.bin"),
    );
    fs::write(&pa, to_bytes(&a))?;
    fs::write(&pb, to_bytes(&b))?;
    let _ = fs::remove_file(&pc);
    let path = |p: &PathBuf| p.to_string_lossy().into_owned();
    run_binary(op, &["check", &path(&pa), &path(&pb), &path(&pc)], timeout)?;
    let c: Vec<T> = from_bytes(&fs::read(&pc)?);
    if c.len() != reference.data.len() {
        return Err(BenchError::Runtime(format!(
            "operator wrote {} elements, expected {}",
            c.len(),
            reference.data.len()
        )));
    }
    Ok(max_rel_err(&c, &reference.data))
}

/// Max relative error of the compiled operator against the oracle on
/// seeded inputs.
pub fn check_correctness(
    op: &CompiledOperator,
    seed: u64,
    toolchain: &Toolchain,
) -> Result<f64, BenchError> {
    match op.spec.dtype {
        DType::F32 => check_typed::<f32>(op, seed, toolchain.run_timeout),
        DType::F64 => check_typed::<f64>(op, seed, toolchain.run_timeout),
    }
}

/// Correctness check first, then one warmup and `repeats` timed runs under
/// the measurement lock. GFLOPS come from the median run. Failures of any
/// kind produce a failed measurement rather than an error.
pub fn run_benchmark(
    op: &CompiledOperator,
    repeats: usize,
    seed: u64,
    toolchain: &Toolchain,
) -> PerfMeasurement {
    let spec = op.spec;
    match check_correctness(op, seed, toolchain) {
        Ok(err) if err <= spec.dtype.tolerance() => {}
        Ok(err) => {
            return PerfMeasurement::failed(
                MeasurementSource::RealRun,
                format!(
                    "{INCORRECT_PREFIX} {err:e} exceeds {:e}",
                    spec.dtype.tolerance()
                ),
            )
        }
        Err(e) => return PerfMeasurement::failed(MeasurementSource::RealRun, e.to_string()),
    }
    let stdout = {
        let _guard = MEASUREMENT_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        run_binary(op, &["time", &repeats.to_string()], toolchain.run_timeout)
    };
    let runs: Result<Vec<f64>, _> = match stdout {
        Ok(s) => s.lines().map(|l| l.trim().parse::<f64>()).collect(),
        Err(e) => return PerfMeasurement::failed(MeasurementSource::RealRun, e.to_string()),
    };
    let runs = match runs {
        Ok(r) if r.len() == repeats => r,
        _ => return PerfMeasurement::failed(MeasurementSource::RealRun, "malformed timing output"),
    };
    let gflops = match median(&runs) {
        Some(t) if t > 0.0 => spec.flops() / t / 1e9,
        // Below timer resolution: report the smallest measurable time.
        Some(_) => spec.flops() / 1e-9 / 1e9,
        None => 0.0,
    };
    PerfMeasurement {
        gflops,
        runs,
        source: MeasurementSource::RealRun,
        correctness_pass: true,
        error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn template_needs_both_placeholders() {
        assert!(Toolchain::new("cc {src}").is_err());
        assert!(Toolchain::new("cc {src} -o {out}").is_ok());
    }

    #[test]
    fn failed_measurement_is_inadmissible() {
        let m = PerfMeasurement::failed(MeasurementSource::RealRun, "boom");
        assert!(!m.admissible());
        assert_eq!(m.gflops, 0.0);
    }
}
