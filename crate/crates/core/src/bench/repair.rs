use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compile_artifact, run_benchmark, PerfMeasurement, Toolchain, INCORRECT_PREFIX};
use crate::codegen::{build_kernel_ir, emit_operator, next_smaller_tile, KernelFlavor};
use crate::error::{BenchError, IrError};
use crate::hw::HardwareDescriptor;
use crate::ir::{check_sketch_legality, kernel_mode, GemmSpec, ScheduleSketch};

/// Advisor proposals allowed per repair sequence.
pub const MAX_ADVISOR_ATTEMPTS: usize = 2;
/// Initial attempt, three ladder steps, and the advisor's share.
pub const MAX_ATTEMPTS: usize = 4 + MAX_ADVISOR_ATTEMPTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStep {
    Advisor,
    DisablePipeline,
    ShrinkTile,
    ScalarFlavor,
}

/// Default ladder order.
const LADDER: [RepairStep; 3] = [
    RepairStep::DisablePipeline,
    RepairStep::ShrinkTile,
    RepairStep::ScalarFlavor,
];

/// What gets built, plus the repairs already applied to reach it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub sketch: ScheduleSketch,
    pub flavor: KernelFlavor,
    pub applied: Vec<RepairStep>,
}

impl BuildConfig {
    pub fn new(sketch: ScheduleSketch, flavor: KernelFlavor) -> Self {
        BuildConfig {
            sketch,
            flavor,
            applied: Vec::new(),
        }
    }

    fn advisor_attempts(&self) -> usize {
        self.applied
            .iter()
            .filter(|&&s| s == RepairStep::Advisor)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    RegisterOverflow,
    Compile,
    Runtime,
    Incorrect,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub diagnostics: String,
}

pub fn classify_failure(err: &BenchError) -> FailureKind {
    match err {
        BenchError::Ir(IrError::RegisterOverflow(_)) => FailureKind::RegisterOverflow,
        BenchError::Compile { .. } => FailureKind::Compile,
        BenchError::Runtime(_) => FailureKind::Runtime,
        _ => FailureKind::Other,
    }
}

/// Optional first responder before each ladder step.
pub trait RepairAdvisor {
    fn propose_repair(&self, config: &BuildConfig, failure: &Failure) -> Option<ScheduleSketch>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Repair {
    Retry {
        config: BuildConfig,
        step: RepairStep,
    },
    GiveUp {
        diagnostics: String,
    },
}

fn apply_step(
    config: &BuildConfig,
    step: RepairStep,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
) -> Option<BuildConfig> {
    if config.applied.contains(&step) {
        return None;
    }
    let mut next = config.clone();
    next.applied.push(step);
    match step {
        RepairStep::DisablePipeline if config.sketch.pipeline => next.sketch.pipeline = false,
        RepairStep::ShrinkTile => {
            let s = &config.sketch;
            let mode = kernel_mode(hw, spec.dtype, s.nr, spec.n)?;
            let (mr, nr) = next_smaller_tile(hw, mode, s.mr, s.nr)?;
            next.sketch.mr = mr;
            next.sketch.nr = nr;
            if !check_sketch_legality(&next.sketch, spec, hw).is_empty() {
                return None;
            }
        }
        RepairStep::ScalarFlavor if config.flavor == KernelFlavor::Templated => {
            next.flavor = KernelFlavor::ScalarPortable
        }
        _ => return None,
    }
    Some(next)
}

/// Next configuration to try after `failure`, or give up.
///
/// The advisor, when present, proposes first (at most
/// [`MAX_ADVISOR_ATTEMPTS`] times, and only legal, changed sketches are
/// taken). Otherwise the ladder step matching the failure fires first:
/// register overflow shrinks the tile, a compile error in templated code
/// falls back to scalar code. Each ladder step fires at most once.
pub fn refine_on_failure(
    config: &BuildConfig,
    failure: &Failure,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    advisor: Option<&dyn RepairAdvisor>,
) -> Repair {
    if let Some(advisor) = advisor {
        if config.advisor_attempts() < MAX_ADVISOR_ATTEMPTS {
            if let Some(sketch) = advisor.propose_repair(config, failure) {
                if sketch != config.sketch && check_sketch_legality(&sketch, spec, hw).is_empty() {
                    let mut next = config.clone();
                    next.sketch = sketch;
                    next.applied.push(RepairStep::Advisor);
                    return Repair::Retry {
                        config: next,
                        step: RepairStep::Advisor,
                    };
                }
            }
        }
    }
    let preferred = match failure.kind {
        FailureKind::RegisterOverflow => Some(RepairStep::ShrinkTile),
        FailureKind::Compile if config.flavor == KernelFlavor::Templated => {
            Some(RepairStep::ScalarFlavor)
        }
        _ => None,
    };
    for step in preferred.into_iter().chain(LADDER) {
        if let Some(next) = apply_step(config, step, spec, hw) {
            return Repair::Retry { config: next, step };
        }
    }
    Repair::GiveUp {
        diagnostics: failure.diagnostics.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    /// Last configuration tried (the working one on success).
    pub config: BuildConfig,
    /// Present iff some attempt produced a correct, timed operator.
    pub measurement: Option<PerfMeasurement>,
    /// Every failed attempt, in order.
    pub failures: Vec<(BuildConfig, Failure)>,
}

impl RepairOutcome {
    pub fn attempts(&self) -> usize {
        self.failures.len() + usize::from(self.measurement.is_some())
    }

    /// All failure diagnostics, one section per attempt.
    pub fn diagnostics(&self) -> String {
        self.failures
            .iter()
            .enumerate()
            .map(|(i, (_, f))| format!("attempt {} ({:?}): {}", i + 1, f.kind, f.diagnostics))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn attempt(
    config: &BuildConfig,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    toolchain: &Toolchain,
    dir: &Path,
    repeats: usize,
    seed: u64,
) -> Result<PerfMeasurement, Failure> {
    let fail = |e: BenchError| Failure {
        kind: classify_failure(&e),
        diagnostics: e.to_string(),
    };
    let ir = build_kernel_ir(&config.sketch, spec, hw, true).map_err(|e| fail(e.into()))?;
    let src = emit_operator(&config.sketch, &ir, spec, hw, config.flavor, "op")
        .map_err(|e| fail(e.into()))?;
    let op = compile_artifact(&src, spec, toolchain, dir).map_err(fail)?;
    let m = run_benchmark(&op, repeats, seed, toolchain);
    if m.correctness_pass {
        return Ok(m);
    }
    let diagnostics = m.error.unwrap_or_default();
    let kind = if diagnostics.starts_with(INCORRECT_PREFIX) {
        FailureKind::Incorrect
    } else {
        FailureKind::Runtime
    };
    Err(Failure { kind, diagnostics })
}

/// Build, compile, check and time `config`, repairing on failure until an
/// attempt succeeds, the ladder gives up, or [`MAX_ATTEMPTS`] is reached.
/// Each attempt's files go to `dir/attemptN`.
#[allow(clippy::too_many_arguments)]
pub fn build_with_repair(
    config: BuildConfig,
    spec: &GemmSpec,
    hw: &HardwareDescriptor,
    toolchain: &Toolchain,
    dir: &Path,
    repeats: usize,
    seed: u64,
    advisor: Option<&dyn RepairAdvisor>,
) -> RepairOutcome {
    let mut config = config;
    let mut failures = Vec::new();
    for n in 0..MAX_ATTEMPTS {
        match attempt(
            &config,
            spec,
            hw,
            toolchain,
            &dir.join(format!("attempt{n}")),
            repeats,
            seed,
        ) {
            Ok(m) => {
                return RepairOutcome {
                    config,
                    measurement: Some(m),
                    failures,
                }
            }
            Err(failure) => {
                let repair = refine_on_failure(&config, &failure, spec, hw, advisor);
                failures.push((config.clone(), failure));
                match repair {
                    Repair::Retry { config: next, .. } => config = next,
                    Repair::GiveUp { .. } => break,
                }
            }
        }
    }
    RepairOutcome {
        config,
        measurement: None,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::parse_descriptor;
    use crate::ir::{default_sketch, DType};

    fn c910() -> HardwareDescriptor {
        parse_descriptor(include_str!("../../../../descriptors/c910-like.toml")).unwrap()
    }

    fn failure(kind: FailureKind) -> Failure {
        Failure {
            kind,
            diagnostics: "x".into(),
        }
    }

    fn start() -> (BuildConfig, GemmSpec) {
        let spec = GemmSpec::new(64, 64, 64, DType::F32).unwrap();
        let mut s = default_sketch(&spec, &c910()).unwrap();
        s.mr = 4;
        s.nr = 8;
        s.pipeline = true;
        (BuildConfig::new(s, KernelFlavor::Templated), spec)
    }

    #[test]
    fn register_overflow_shrinks_the_tile() {
        let (c, spec) = start();
        match refine_on_failure(
            &c,
            &failure(FailureKind::RegisterOverflow),
            &spec,
            &c910(),
            None,
        ) {
            Repair::Retry { step, config } => {
                assert_eq!(step, RepairStep::ShrinkTile);
                assert!(config.sketch.mr * config.sketch.nr < 32);
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn templated_compile_error_falls_back_to_scalar() {
        let (c, spec) = start();
        match refine_on_failure(&c, &failure(FailureKind::Compile), &spec, &c910(), None) {
            Repair::Retry { step, config } => {
                assert_eq!(step, RepairStep::ScalarFlavor);
                assert_eq!(config.flavor, KernelFlavor::ScalarPortable);
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn ladder_is_bounded() {
        struct Stubborn;
        impl RepairAdvisor for Stubborn {
            fn propose_repair(&self, config: &BuildConfig, _: &Failure) -> Option<ScheduleSketch> {
                let mut s = config.sketch;
                s.prefetch_distance = (s.prefetch_distance + 1) % 4;
                Some(s)
            }
        }
        let (mut c, spec) = start();
        let hw = c910();
        let mut steps = Vec::new();
        for _ in 0..20 {
            match refine_on_failure(
                &c,
                &failure(FailureKind::Runtime),
                &spec,
                &hw,
                Some(&Stubborn),
            ) {
                Repair::Retry { config, step } => {
                    steps.push(step);
                    c = config;
                }
                Repair::GiveUp { .. } => break,
            }
        }
        assert_eq!(
            steps,
            [
                RepairStep::Advisor,
                RepairStep::Advisor,
                RepairStep::DisablePipeline,
                RepairStep::ShrinkTile,
                RepairStep::ScalarFlavor
            ]
        );
        assert!(steps.len() < MAX_ATTEMPTS);
    }
}
