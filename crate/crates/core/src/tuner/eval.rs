use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::TuningConfig;
use crate::bench::{
    compile_artifact, run_benchmark, MeasurementSource, PerfMeasurement, Toolchain,
};
use crate::codegen::{emit_operator, KernelFlavor};
use crate::cost::{estimate_cycles, CostBreakdown};
use crate::hw::HardwareDescriptor;
use crate::ir::GemmSpec;

/// One simulation result.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub measurement: PerfMeasurement,
    pub breakdown: Option<CostBreakdown>,
}

impl Evaluation {
    /// Time the evaluator attributes to the run, in milliseconds. For the
    /// cost model this is the estimate, so logs stay deterministic.
    pub fn wall_ms(&self) -> f64 {
        self.measurement.median_seconds().unwrap_or(0.0) * 1e3
    }
}

pub trait Evaluator {
    fn source(&self) -> MeasurementSource;
    fn evaluate(
        &self,
        config: &TuningConfig,
        spec: &GemmSpec,
        hw: &HardwareDescriptor,
    ) -> Evaluation;
}

/// Analytic estimate; pure and deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct CostModelEvaluator;

impl Evaluator for CostModelEvaluator {
    fn source(&self) -> MeasurementSource {
        MeasurementSource::CostModel
    }

    fn evaluate(
        &self,
        config: &TuningConfig,
        spec: &GemmSpec,
        hw: &HardwareDescriptor,
    ) -> Evaluation {
        let bd = estimate_cycles(&config.sketch, &config.kernel, spec, hw);
        let seconds = bd.total_cycles / (hw.frequency_ghz * 1e9);
        Evaluation {
            measurement: PerfMeasurement {
                gflops: bd.est_gflops,
                runs: vec![seconds],
                source: MeasurementSource::CostModel,
                correctness_pass: bd.est_gflops > 0.0,
                error: None,
            },
            breakdown: Some(bd),
        }
    }
}

/// Compile, check and time each candidate on the host. Candidate `i` is
/// built in `dir/candNNNN`.
#[derive(Debug)]
pub struct RealRunEvaluator {
    pub toolchain: Toolchain,
    pub dir: PathBuf,
    pub flavor: KernelFlavor,
    pub repeats: usize,
    pub seed: u64,
    counter: AtomicUsize,
}

impl RealRunEvaluator {
    pub fn new(
        toolchain: Toolchain,
        dir: PathBuf,
        flavor: KernelFlavor,
        repeats: usize,
        seed: u64,
    ) -> Self {
        RealRunEvaluator {
            toolchain,
            dir,
            flavor,
            repeats,
            seed,
            counter: AtomicUsize::new(0),
        }
    }
}

impl Evaluator for RealRunEvaluator {
    fn source(&self) -> MeasurementSource {
        MeasurementSource::RealRun
    }

    fn evaluate(
        &self,
        config: &TuningConfig,
        spec: &GemmSpec,
        hw: &HardwareDescriptor,
    ) -> Evaluation {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let dir = self.dir.join(format!("cand{n:04}"));
        let measurement =
            emit_operator(&config.sketch, &config.kernel, spec, hw, self.flavor, "op")
                .map_err(|e| e.to_string())
                .and_then(|src| {
                    compile_artifact(&src, spec, &self.toolchain, &dir).map_err(|e| e.to_string())
                })
                .map(|op| run_benchmark(&op, self.repeats, self.seed, &self.toolchain))
                .unwrap_or_else(|e| PerfMeasurement::failed(MeasurementSource::RealRun, e));
        Evaluation {
            measurement,
            breakdown: None,
        }
    }
}
