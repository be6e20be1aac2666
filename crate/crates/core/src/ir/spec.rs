use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::IrError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn bits(self) -> u32 {
        match self {
            DType::F32 => 32,
            DType::F64 => 64,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    pub fn c_type(self) -> &'static str {
        match self {
            DType::F32 => "float",
            DType::F64 => "double",
        }
    }

    /// Relative tolerance for comparisons against the naive oracle.
    pub fn tolerance(self) -> f64 {
        match self {
            DType::F32 => 1e-4,
            DType::F64 => 1e-10,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        })
    }
}

/// `C[m×n] += A[m×k] · B[k×n]`, all row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmSpec {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub dtype: DType,
}

impl GemmSpec {
    pub fn new(m: usize, k: usize, n: usize, dtype: DType) -> Result<Self, IrError> {
        let s = GemmSpec { m, k, n, dtype };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), IrError> {
        if self.m == 0 || self.k == 0 || self.n == 0 {
            return Err(IrError::InvalidSpec(format!(
                "gemm dims must be >= 1, got m={} k={} n={}",
                self.m, self.k, self.n
            )));
        }
        Ok(())
    }

    pub fn flops(&self) -> f64 {
        2.0 * self.m as f64 * self.n as f64 * self.k as f64
    }
}

impl fmt::Display for GemmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{} {}", self.m, self.k, self.n, self.dtype)
    }
}

/// Multi-channel 2-D convolution over a `c_in × h × w` input with
/// `c_out × c_in × kh × kw` filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub h: usize,
    pub w: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub dtype: DType,
}

impl ConvSpec {
    pub fn validate(&self) -> Result<(), IrError> {
        let bad = |m: String| Err(IrError::InvalidSpec(m));
        if self.h == 0 || self.w == 0 || self.c_in == 0 || self.c_out == 0 {
            return bad("conv input dims and channels must be >= 1".into());
        }
        if self.kh == 0 || self.kw == 0 {
            return bad("filter dims must be >= 1".into());
        }
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        if self.kh > self.h + 2 * self.pad || self.kw > self.w + 2 * self.pad {
            return bad(format!(
                "filter {}x{} larger than padded input {}x{}",
                self.kh,
                self.kw,
                self.h + 2 * self.pad,
                self.w + 2 * self.pad
            ));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    /// 3×3, stride 1, pad 1 over a 56×56×64 feature map.
    pub fn resnet_default(dtype: DType) -> Self {
        ConvSpec {
            h: 56,
            w: 56,
            c_in: 64,
            c_out: 64,
            kh: 3,
            kw: 3,
            stride: 1,
            pad: 1,
            dtype,
        }
    }
}
