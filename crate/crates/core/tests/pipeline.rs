use std::fs;
use std::path::{Path, PathBuf};

use forge_core::error::{PipelineError, PromptError};
use forge_core::ir::{DType, GemmSpec};
use forge_core::pipeline::{
    curve_path, descriptor_names, parse_prompt, read_tuning_log, run_pipeline, write_tuning_log,
    AdvisorKind, Dims, Operator, PipelineOptions, PromptRequest, CONFIG_FILE, LOG_FILE,
    SUMMARY_FILE,
};
use forge_core::tuner::{tune, CostModelEvaluator, HeuristicAdvisor, TuneOptions};

fn descriptor_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../descriptors")
}

fn names() -> Vec<String> {
    descriptor_names(&descriptor_dir()).unwrap()
}

fn options(out: &Path, budget: usize) -> PipelineOptions {
    PipelineOptions {
        descriptor_dir: descriptor_dir(),
        out: out.to_path_buf(),
        budget,
        seed: 1,
        ..PipelineOptions::default()
    }
}

fn gemm_on(hw: &str, dims: Dims) -> PromptRequest {
    PromptRequest {
        operator: Operator::Gemm,
        hardware_name: hw.into(),
        dims: Some(dims),
    }
}

#[test]
fn prompt_examples() {
    let n = names();
    let r = parse_prompt(
        "Please generate a high-performance GEMM operator on C910-like CPU",
        &n,
    )
    .unwrap();
    assert_eq!(r.operator, Operator::Gemm);
    assert_eq!(r.hardware_name, "c910-like");
    assert_eq!(r.dims, None);

    let r = parse_prompt("a 3x3 convolution for the k1-like board", &n).unwrap();
    assert_eq!(r.operator, Operator::Conv);
    assert_eq!(r.hardware_name, "k1-like");

    let r = parse_prompt("matmul m=64 n=32 k=16 on generic-host", &n).unwrap();
    assert_eq!(
        r.dims,
        Some(Dims {
            m: 64,
            k: 16,
            n: 32
        })
    );

    assert!(matches!(
        parse_prompt("optimize a sort kernel on c910-like", &n),
        Err(PromptError::NoOperator)
    ));
    assert!(matches!(
        parse_prompt("gemm on a pdp-11", &n),
        Err(PromptError::NoHardware(_))
    ));
}

#[test]
fn log_files_are_idempotent_and_monotone() {
    let hw = forge_core::pipeline::resolve_hardware(&descriptor_dir(), "c910-like").unwrap();
    let spec = GemmSpec::new(128, 128, 128, DType::F32).unwrap();
    let opts = TuneOptions {
        budget: 10,
        ..TuneOptions::default()
    };
    let r = tune(
        &spec,
        &hw,
        &CostModelEvaluator,
        &mut HeuristicAdvisor,
        &opts,
    )
    .unwrap();
    assert_eq!(r.log.len(), 10);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/run.jsonl");
    let curve = write_tuning_log(&r.log, &path).unwrap();
    assert_eq!(curve, curve_path(&path));
    let first = (fs::read(&path).unwrap(), fs::read(&curve).unwrap());
    write_tuning_log(&r.log, &path).unwrap();
    assert_eq!(first, (fs::read(&path).unwrap(), fs::read(&curve).unwrap()));
    assert_eq!(read_tuning_log(&path).unwrap(), r.log);

    let curve_text = fs::read_to_string(&curve).unwrap();
    let mut lines = curve_text.lines();
    assert_eq!(lines.next(), Some("iter\tbest_so_far"));
    let best: Vec<f64> = lines
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(best.len(), 10);
    assert!(best.windows(2).all(|w| w[0] <= w[1]));

    assert!(write_tuning_log(&[], &path).is_err());
}

#[test]
fn gemm_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let opts = options(dir.path(), 50);
    let report = run_pipeline(
        &gemm_on(
            "generic-host",
            Dims {
                m: 64,
                k: 64,
                n: 64,
            },
        ),
        &opts,
    )
    .unwrap();
    assert_eq!(report.iterations, 50);
    assert!(report.final_gflops >= report.initial_gflops);
    assert_eq!(
        read_tuning_log(&dir.path().join(LOG_FILE)).unwrap().len(),
        50
    );
    for f in ["gemm.c", CONFIG_FILE, SUMMARY_FILE, "tuning_log.curve.tsv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    assert!(report.files.iter().all(|f| f.is_file()));
}

#[test]
fn conv_pipeline_emits_the_im2col_plan() {
    let dir = tempfile::tempdir().unwrap();
    let opts = options(dir.path(), 3);
    let req = PromptRequest {
        operator: Operator::Conv,
        hardware_name: "c910-like".into(),
        dims: None,
    };
    let report = run_pipeline(&req, &opts).unwrap();
    assert!(report.conv.is_some());
    assert!(dir.path().join("im2col_plan.json").is_file());
    assert!(dir.path().join("conv_im2col.c").is_file());
}

#[test]
fn missing_descriptor_dir_fails_in_stage_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut opts = options(dir.path(), 5);
    opts.descriptor_dir = dir.path().join("no-such-dir");
    let err = run_pipeline(&gemm_on("c910-like", Dims { m: 8, k: 8, n: 8 }), &opts).unwrap_err();
    assert!(matches!(err, PipelineError::Hardware(_)), "{err}");
}

#[test]
fn gpu_targets_are_rejected_in_generation() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(
        &gemm_on("a100-like", Dims { m: 8, k: 8, n: 8 }),
        &options(dir.path(), 5),
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::Generate(_)), "{err}");
}

#[test]
fn llm_advisor_needs_an_endpoint() {
    if std::env::var_os(forge_core::tuner::LLM_ENDPOINT_ENV).is_some() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let mut opts = options(dir.path(), 5);
    opts.advisor = AdvisorKind::Llm;
    let err = run_pipeline(&gemm_on("c910-like", Dims { m: 8, k: 8, n: 8 }), &opts).unwrap_err();
    assert!(matches!(err, PipelineError::AdvisorUnavailable(_)), "{err}");
}
