use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Gemm,
    Conv,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Gemm => "gemm",
            Operator::Conv => "conv",
        })
    }
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gemm" | "matmul" => Ok(Operator::Gemm),
            "conv" | "convolution" => Ok(Operator::Conv),
            other => Err(format!(
                "unknown operator `{other}` (expected gemm or conv)"
            )),
        }
    }
}

/// GEMM sizes: `C[m×n] = A[m×k] · B[k×n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

impl Dims {
    fn checked(m: usize, k: usize, n: usize) -> Result<Self, PromptError> {
        if m == 0 || k == 0 || n == 0 {
            return Err(PromptError::BadDims(format!(
                "{m}x{k}x{n}: every size must be >= 1"
            )));
        }
        Ok(Dims { m, k, n })
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.m, self.k, self.n)
    }
}

/// `MxKxN`.
impl FromStr for Dims {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, PromptError> {
        let parts: Vec<_> = s.trim().split(['x', 'X']).map(str::trim).collect();
        let bad = || PromptError::BadDims(format!("`{s}` is not MxKxN"));
        let [m, k, n] = parts[..] else {
            return Err(bad());
        };
        let num = |p: &str| p.parse::<usize>().map_err(|_| bad());
        Dims::checked(num(m)?, num(k)?, num(n)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub operator: Operator,
    pub hardware_name: String,
    pub dims: Option<Dims>,
}

static GEMM_WORDS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(gemm|sgemm|dgemm|matmul|matrix[\s-]+multiplication)\b").unwrap()
});
static CONV_WORDS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(conv|conv2d|convolution)s?\b").unwrap());
static TRIPLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(\d+)\s*x\s*(\d+)\s*x\s*(\d+)\b").unwrap());
static NAMED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([mnk])\s*=\s*(\d+)").unwrap());

fn parse_dims(text: &str) -> Result<Option<Dims>, PromptError> {
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| PromptError::BadDims(format!("`{s}` is out of range")))
    };
    if let Some(c) = TRIPLE.captures(text) {
        return Dims::checked(num(&c[1])?, num(&c[2])?, num(&c[3])?).map(Some);
    }
    let mut named = [None; 3];
    for c in NAMED.captures_iter(text) {
        let slot = match &c[1] {
            "m" => 0,
            "k" => 1,
            _ => 2,
        };
        named[slot] = Some(num(&c[2])?);
    }
    match named {
        [None, None, None] => Ok(None),
        [Some(m), Some(k), Some(n)] => Dims::checked(m, k, n).map(Some),
        _ => Err(PromptError::BadDims(
            "m=, n= and k= must all be given".into(),
        )),
    }
}

/// Read a one-line request against the descriptor names in `available`.
///
/// Matching is case-insensitive. The operator comes from keywords, the
/// hardware from the longest descriptor name occurring in the text (a name
/// contained in a longer match does not count separately), and sizes from
/// `MxKxN` or `m=..,n=..,k=..`.
pub fn parse_prompt(text: &str, available: &[String]) -> Result<PromptRequest, PromptError> {
    let lower = text.to_lowercase();
    let operator = match (GEMM_WORDS.is_match(&lower), CONV_WORDS.is_match(&lower)) {
        (true, true) => return Err(PromptError::AmbiguousOperator),
        (true, false) => Operator::Gemm,
        (false, true) => Operator::Conv,
        (false, false) => return Err(PromptError::NoOperator),
    };
    let found: Vec<&String> = available
        .iter()
        .filter(|name| !name.is_empty() && lower.contains(&name.to_lowercase()))
        .collect();
    let maximal: Vec<&String> = found
        .iter()
        .filter(|a| {
            !found
                .iter()
                .any(|b| b.len() > a.len() && b.to_lowercase().contains(&a.to_lowercase()))
        })
        .copied()
        .collect();
    let hardware_name = match maximal.as_slice() {
        [] => return Err(PromptError::NoHardware(available.to_vec())),
        [one] => (*one).clone(),
        many => {
            return Err(PromptError::AmbiguousHardware(
                many.iter().map(|s| s.to_string()).collect(),
            ))
        }
    };
    Ok(PromptRequest {
        operator,
        hardware_name,
        dims: parse_dims(&lower)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        [
            "a100-like",
            "a76-like",
            "c910-like",
            "generic-host",
            "k1-like",
        ]
        .map(String::from)
        .to_vec()
    }

    #[test]
    fn sentence_style_request() {
        let r = parse_prompt(
            "Please generate a high-performance GEMM operator on C910-like CPU",
            &names(),
        )
        .unwrap();
        assert_eq!(
            r,
            PromptRequest {
                operator: Operator::Gemm,
                hardware_name: "c910-like".into(),
                dims: None
            }
        );
    }

    #[test]
    fn conv_with_filter_size_has_no_gemm_dims() {
        let r = parse_prompt("tune conv 3x3 on k1-like", &names()).unwrap();
        assert_eq!(
            (r.operator, r.hardware_name.as_str(), r.dims),
            (Operator::Conv, "k1-like", None)
        );
    }

    #[test]
    fn unknown_operator() {
        assert!(matches!(
            parse_prompt("optimize a sort kernel", &names()),
            Err(PromptError::NoOperator)
        ));
        assert!(matches!(
            parse_prompt("gemm then conv on k1-like", &names()),
            Err(PromptError::AmbiguousOperator)
        ));
    }

    #[test]
    fn hardware_matching() {
        let e = parse_prompt("matmul on a laptop", &names()).unwrap_err();
        assert_eq!(
            e.to_string(),
            "no hardware match (available: a100-like, a76-like, c910-like, generic-host, k1-like)"
        );
        assert!(matches!(
            parse_prompt("gemm on k1-like or a76-like", &names()),
            Err(PromptError::AmbiguousHardware(v)) if v == ["a76-like", "k1-like"]
        ));
        let nested = ["c910".to_string(), "c910-like".to_string()];
        assert_eq!(
            parse_prompt("gemm for c910-like", &nested)
                .unwrap()
                .hardware_name,
            "c910-like"
        );
    }

    #[test]
    fn dims_patterns() {
        let d = |t: &str| parse_prompt(t, &names()).unwrap().dims;
        assert_eq!(
            d("gemm 512x256x128 on k1-like"),
            Some(Dims {
                m: 512,
                k: 256,
                n: 128
            })
        );
        assert_eq!(
            d("Matrix Multiplication m=64, n=32, k=16 on k1-like"),
            Some(Dims {
                m: 64,
                k: 16,
                n: 32
            })
        );
        assert!(matches!(
            parse_prompt("gemm m=4 n=4 on k1-like", &names()),
            Err(PromptError::BadDims(_))
        ));
        assert!(matches!(
            parse_prompt("gemm 0x4x4 on k1-like", &names()),
            Err(PromptError::BadDims(_))
        ));
    }

    #[test]
    fn dims_from_flag_text() {
        assert_eq!("8x4X2".parse::<Dims>().unwrap(), Dims { m: 8, k: 4, n: 2 });
        assert!("8x4".parse::<Dims>().is_err());
        assert_eq!(Dims { m: 8, k: 4, n: 2 }.to_string(), "8x4x2");
    }
}
