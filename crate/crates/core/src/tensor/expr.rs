use std::fmt;

use crate::error::{EinconvError, Result};

/// Operands given as label lists; shared labels are hyperedges, summed once
/// across all operands that carry them unless they appear in the output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionExpr {
    operands: Vec<Vec<String>>,
    output: Vec<String>,
    dummy_nnz: Vec<Option<u64>>,
}

impl ContractionExpr {
    pub fn new<S: AsRef<str>>(operands: &[Vec<S>], output: &[S]) -> Result<Self> {
        let operands: Vec<Vec<String>> = operands
            .iter()
            .map(|op| op.iter().map(|s| s.as_ref().to_string()).collect())
            .collect();
        let output: Vec<String> = output.iter().map(|s| s.as_ref().to_string()).collect();
        for (k, op) in operands.iter().enumerate() {
            for (p, l) in op.iter().enumerate() {
                if op[..p].contains(l) {
                    return Err(EinconvError::SelfLoop {
                        operand: k,
                        label: l.clone(),
                    });
                }
            }
        }
        for (p, l) in output.iter().enumerate() {
            if output[..p].contains(l) {
                return Err(EinconvError::SelfLoop {
                    operand: operands.len(),
                    label: l.clone(),
                });
            }
            if !operands.iter().any(|op| op.contains(l)) {
                return Err(EinconvError::UnknownLabel(l.clone()));
            }
        }
        let n = operands.len();
        Ok(ContractionExpr {
            operands,
            output,
            dummy_nnz: vec![None; n],
        })
    }

    /// Parses `"i j, j k -> i k"`: whitespace separates labels, commas separate operands.
    pub fn parse(text: &str) -> Result<Self> {
        let (lhs, rhs) = text
            .split_once("->")
            .ok_or_else(|| EinconvError::Parse(format!("missing `->` in `{text}`")))?;
        let operands: Vec<Vec<&str>> = lhs
            .split(',')
            .map(|op| op.split_whitespace().collect())
            .collect();
        let output: Vec<&str> = rhs.split_whitespace().collect();
        Self::new(&operands, &output)
    }

    /// Declares operand `k` a binary coupling tensor with `nnz` nonzeros.
    pub fn with_dummy(mut self, k: usize, nnz: u64) -> Self {
        self.dummy_nnz[k] = Some(nnz);
        self
    }

    pub fn operands(&self) -> &[Vec<String>] {
        &self.operands
    }

    pub fn output(&self) -> &[String] {
        &self.output
    }

    pub fn dummy_nnz(&self) -> &[Option<u64>] {
        &self.dummy_nnz
    }

    pub fn n_operands(&self) -> usize {
        self.operands.len()
    }

    /// Every distinct label, in first-appearance order.
    pub fn all_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for op in &self.operands {
            for l in op {
                if !out.contains(l) {
                    out.push(l.clone());
                }
            }
        }
        out
    }
}

impl fmt::Display for ContractionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ops: Vec<String> = self.operands.iter().map(|op| op.join(" ")).collect();
        write!(f, "{} -> {}", ops.join(", "), self.output.join(" "))
    }
}
