//! Reference oracles and a hardware-free interpreter for generated operators.

mod exec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use exec::interpret_program;

use crate::codegen::KernelFlavor;
use crate::error::InterpError;
use crate::ir::{ConvSpec, DType, GemmSpec, KernelIR, ScheduleSketch};
use crate::tensor::{max_rel_err, Element, Tensor};

/// Triple loop in ascending `i`, `j`, `q`; each sum starts from zero.
pub fn naive_gemm<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, InterpError> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(InterpError::ShapeMismatch(format!(
            "inner dimensions differ: a is {m}x{k}, b is {k2}x{n}"
        )));
    }
    let mut c = vec![T::default(); m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::default();
            for q in 0..k {
                acc = acc + a.data[i * k + q] * b.data[q * n + j];
            }
            c[i * n + j] = acc;
        }
    }
    Tensor::new(vec![m, n], c)
}

/// Direct sliding-window convolution of `x[c_in, h, w]` with
/// `k[c_out, c_in, kh, kw]`, summing in ascending channel, `ky`, `kx`;
/// padded taps contribute nothing.
pub fn naive_conv<T: Element>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>, InterpError> {
    spec.validate()
        .map_err(|e| InterpError::ShapeMismatch(e.to_string()))?;
    let s = spec;
    if x.shape != [s.c_in, s.h, s.w] {
        return Err(InterpError::ShapeMismatch(format!(
            "input shape {:?}",
            x.shape
        )));
    }
    if k.shape != [s.c_out, s.c_in, s.kh, s.kw] {
        return Err(InterpError::ShapeMismatch(format!(
            "filter shape {:?}",
            k.shape
        )));
    }
    let (oh, ow) = (s.out_h(), s.out_w());
    let mut y = vec![T::default(); s.c_out * oh * ow];
    for co in 0..s.c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::default();
                for ci in 0..s.c_in {
                    for ky in 0..s.kh {
                        for kx in 0..s.kw {
                            let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                            let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                            if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                continue;
                            }
                            let xv = x.data[(ci * s.h + iy as usize) * s.w + ix as usize];
                            let kv = k.data[((co * s.c_in + ci) * s.kh + ky) * s.kw + kx];
                            acc = acc + xv * kv;
                        }
                    }
                }
                y[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Tensor::new(vec![s.c_out, oh, ow], y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub spec: GemmSpec,
    pub seed: u64,
    pub max_rel_err: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DiffReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Seeded inputs in `[-1, 1]` for `spec`.
pub fn random_inputs<T: Element>(spec: &GemmSpec, seed: u64) -> (Tensor<T>, Tensor<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Tensor::random(vec![spec.m, spec.k], &mut rng);
    let b = Tensor::random(vec![spec.k, spec.n], &mut rng);
    (a, b)
}

fn diff_typed<T: Element>(
    spec: &GemmSpec,
    sketch: &ScheduleSketch,
    ir: &KernelIR,
    seed: u64,
    flavors: &[KernelFlavor],
) -> Result<f64, InterpError> {
    let (a, b) = random_inputs::<T>(spec, seed);
    let reference = naive_gemm(&a, &b)?;
    let mut worst = 0.0f64;
    for &flavor in flavors {
        let c = interpret_program(sketch, ir, spec, &a, &b, flavor)?;
        worst = worst.max(max_rel_err(&c.data, &reference.data));
    }
    Ok(worst)
}

/// Compare the interpreted operator, in each of `flavors`, against
/// [`naive_gemm`] on seeded inputs.
pub fn diff_test_flavors(
    spec: &GemmSpec,
    sketch: &ScheduleSketch,
    ir: &KernelIR,
    seed: u64,
    flavors: &[KernelFlavor],
) -> DiffReport {
    let result = match spec.dtype {
        DType::F32 => diff_typed::<f32>(spec, sketch, ir, seed, flavors),
        DType::F64 => diff_typed::<f64>(spec, sketch, ir, seed, flavors),
    };
    match result {
        Ok(err) => DiffReport {
            spec: *spec,
            seed,
            max_rel_err: err,
            pass: err <= spec.dtype.tolerance(),
            error: None,
        },
        Err(e) => DiffReport {
            spec: *spec,
            seed,
            max_rel_err: f64::INFINITY,
            pass: false,
            error: Some(e.to_string()),
        },
    }
}

/// [`diff_test_flavors`] over both kernel flavors.
pub fn diff_test(spec: &GemmSpec, sketch: &ScheduleSketch, ir: &KernelIR, seed: u64) -> DiffReport {
    diff_test_flavors(
        spec,
        sketch,
        ir,
        seed,
        &[KernelFlavor::Templated, KernelFlavor::ScalarPortable],
    )
}
