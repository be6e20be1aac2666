use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::emit::{SourceArtifact, SourceFile};
use crate::error::{InterpError, IrError};
use crate::ir::{ConvSpec, GemmSpec};
use crate::tensor::{Element, Tensor};

/// Convolution lowered to `W[c_out × (c_in·kh·kw)] · col[(c_in·kh·kw) × (out_h·out_w)]`.
///
/// Column-buffer row `r = (c·kh + ky)·kw + kx` and column `s = oy·out_w + ox`
/// gather input `(c, oy·stride + ky − pad, ox·stride + kx − pad)`, or zero
/// when that falls in the padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Im2colPlan {
    pub conv: ConvSpec,
    pub gemm: GemmSpec,
    pub col_rows: usize,
    pub col_cols: usize,
}

/// Source of one column-buffer element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gather {
    Input { channel: usize, y: usize, x: usize },
    Zero,
}

impl Im2colPlan {
    pub fn gather(&self, row: usize, col: usize) -> Gather {
        let s = &self.conv;
        let kx = row % s.kw;
        let ky = (row / s.kw) % s.kh;
        let channel = row / (s.kw * s.kh);
        let ox = col % s.out_w();
        let oy = col / s.out_w();
        let y = (oy * s.stride + ky) as isize - s.pad as isize;
        let x = (ox * s.stride + kx) as isize - s.pad as isize;
        if y < 0 || x < 0 || y >= s.h as isize || x >= s.w as isize {
            Gather::Zero
        } else {
            Gather::Input {
                channel,
                y: y as usize,
                x: x as usize,
            }
        }
    }

    /// Column buffer for an input of shape `[c_in, h, w]`.
    pub fn apply<T: Element>(&self, x: &Tensor<T>) -> Result<Tensor<T>, InterpError> {
        let s = &self.conv;
        if x.shape != [s.c_in, s.h, s.w] {
            return Err(InterpError::ShapeMismatch(format!(
                "input shape {:?}, expected [{}, {}, {}]",
                x.shape, s.c_in, s.h, s.w
            )));
        }
        let mut data = Vec::with_capacity(self.col_rows * self.col_cols);
        for r in 0..self.col_rows {
            for c in 0..self.col_cols {
                data.push(match self.gather(r, c) {
                    Gather::Input { channel, y, x: xx } => x.data[(channel * s.h + y) * s.w + xx],
                    Gather::Zero => T::default(),
                });
            }
        }
        Tensor::new(vec![self.col_rows, self.col_cols], data)
    }

    /// Filter `[c_out, c_in, kh, kw]` viewed as the GEMM A operand.
    pub fn filter_matrix<T: Element>(&self, k: &Tensor<T>) -> Result<Tensor<T>, InterpError> {
        let s = &self.conv;
        if k.shape != [s.c_out, s.c_in, s.kh, s.kw] {
            return Err(InterpError::ShapeMismatch(format!(
                "filter shape {:?}, expected [{}, {}, {}, {}]",
                k.shape, s.c_out, s.c_in, s.kh, s.kw
            )));
        }
        Tensor::new(vec![s.c_out, self.col_rows], k.data.clone())
    }

    /// GEMM output `[c_out, out_h·out_w]` reshaped to `[c_out, out_h, out_w]`.
    pub fn output<T: Element>(&self, y: Tensor<T>) -> Result<Tensor<T>, InterpError> {
        let s = &self.conv;
        Tensor::new(vec![s.c_out, s.out_h(), s.out_w()], y.data)
    }
}

pub fn conv_to_gemm(spec: &ConvSpec) -> Result<Im2colPlan, IrError> {
    spec.validate()?;
    let col_rows = spec.kh * spec.kw * spec.c_in;
    let col_cols = spec.out_h() * spec.out_w();
    Ok(Im2colPlan {
        conv: *spec,
        gemm: GemmSpec::new(spec.c_out, col_rows, col_cols, spec.dtype)?,
        col_rows,
        col_cols,
    })
}

/// C routine filling the column buffer from a `[c_in, h, w]` input.
pub fn emit_im2col_source(plan: &Im2colPlan, name: &str) -> SourceArtifact {
    let s = &plan.conv;
    let t = s.dtype.c_type();
    let mut text = String::new();
    let _ = write!(
        text,
        "/* im2col for a {c}x{h}x{w} input, {kh}x{kw} filter, stride {st}, pad {pad}:\n\
         \x20  col is {rows} x {cols}, row (ch * {kh} + ky) * {kw} + kx, column oy * {ow} + ox. */\n\
         void forge_im2col_{name}(const {t} *x, {t} *col)\n{{\n\
         \x20   long r, oy, ox;\n\
         \x20   for (r = 0; r < {rows}; ++r) {{\n\
         \x20       const long kx = r % {kw}, ky = (r / {kw}) % {kh}, ch = r / ({kw} * {kh});\n\
         \x20       for (oy = 0; oy < {oh}; ++oy)\n\
         \x20           for (ox = 0; ox < {ow}; ++ox) {{\n\
         \x20               const long y = oy * {st} + ky - {pad}, xx = ox * {st} + kx - {pad};\n\
         \x20               col[r * {cols} + oy * {ow} + ox] =\n\
         \x20                   (y < 0 || xx < 0 || y >= {h} || xx >= {w}) ? 0 : x[(ch * {h} + y) * {w} + xx];\n\
         \x20           }}\n\
         \x20   }}\n}}\n",
        c = s.c_in,
        h = s.h,
        w = s.w,
        kh = s.kh,
        kw = s.kw,
        st = s.stride,
        pad = s.pad,
        rows = plan.col_rows,
        cols = plan.col_cols,
        oh = s.out_h(),
        ow = s.out_w(),
    );
    SourceArtifact {
        files: vec![SourceFile {
            path: format!("{name}_im2col.c"),
            text,
        }],
        entry_symbol: format!("forge_im2col_{name}"),
    }
}
