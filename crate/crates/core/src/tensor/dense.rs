use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{EinconvError, Result};
use crate::scalar::Scalar;

/// A named axis with its extent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexLabel {
    pub name: String,
    pub dim: usize,
}

impl IndexLabel {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        IndexLabel {
            name: name.into(),
            dim,
        }
    }
}

/// Shorthand for building label lists in tests and constructors.
pub fn labels(spec: &[(&str, usize)]) -> Vec<IndexLabel> {
    spec.iter().map(|&(n, d)| IndexLabel::new(n, d)).collect()
}

/// Row-major dense array with named axes.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T> {
    labels: Vec<IndexLabel>,
    data: Vec<T>,
    binary_dummy: bool,
}

pub(crate) fn shape_len(labels: &[IndexLabel]) -> usize {
    labels.iter().map(|l| l.dim).product()
}

pub(crate) fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

fn check_labels(labels: &[IndexLabel]) -> Result<()> {
    for (k, l) in labels.iter().enumerate() {
        if l.dim == 0 {
            return Err(EinconvError::Geometry(format!("label `{}` has dim 0", l.name)));
        }
        if labels[..k].iter().any(|o| o.name == l.name) {
            return Err(EinconvError::SelfLoop {
                operand: 0,
                label: l.name.clone(),
            });
        }
    }
    Ok(())
}

impl<T: Scalar> DenseTensor<T> {
    pub fn new(labels: Vec<IndexLabel>, data: Vec<T>) -> Result<Self> {
        check_labels(&labels)?;
        let expected = shape_len(&labels);
        if expected != data.len() {
            return Err(EinconvError::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(DenseTensor {
            labels,
            data,
            binary_dummy: false,
        })
    }

    pub fn from_shape(spec: &[(&str, usize)], data: Vec<T>) -> Result<Self> {
        Self::new(labels(spec), data)
    }

    pub fn zeros(labels: Vec<IndexLabel>) -> Self {
        let n = shape_len(&labels);
        Self::new(labels, vec![T::zero(); n]).expect("valid labels")
    }

    pub fn filled(labels: Vec<IndexLabel>, v: T) -> Self {
        let n = shape_len(&labels);
        Self::new(labels, vec![v; n]).expect("valid labels")
    }

    pub fn scalar(v: T) -> Self {
        DenseTensor {
            labels: Vec::new(),
            data: vec![v],
            binary_dummy: false,
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(labels: Vec<IndexLabel>, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let dims: Vec<usize> = labels.iter().map(|l| l.dim).collect();
        let n = shape_len(&labels);
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..n {
            data.push(f(&idx));
            advance(&mut idx, &dims);
        }
        Self::new(labels, data).expect("valid labels")
    }

    pub fn labels(&self) -> &[IndexLabel] {
        &self.labels
    }

    pub fn names(&self) -> Vec<&str> {
        self.labels.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.dim).collect()
    }

    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.name == name)
    }

    pub fn dim_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().find(|l| l.name == name).map(|l| l.dim)
    }

    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.dims())
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.labels.len());
        let mut off = 0;
        for (k, l) in self.labels.iter().enumerate() {
            debug_assert!(idx[k] < l.dim);
            off = off * l.dim + idx[k];
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    pub fn is_binary_dummy(&self) -> bool {
        self.binary_dummy
    }

    /// Marks the tensor as a fixed 0/1 coupling tensor; the engine then
    /// contracts it with a gather over its nonzeros.
    pub fn into_binary_dummy(mut self) -> Self {
        self.binary_dummy = true;
        self
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| !v.is_zero()).count()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        DenseTensor {
            labels: self.labels.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            binary_dummy: false,
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// Renames one axis; dims stay.
    pub fn relabel(mut self, from: &str, to: &str) -> Self {
        if let Some(l) = self.labels.iter_mut().find(|l| l.name == from) {
            l.name = to.to_string();
        }
        self
    }

    pub fn with_labels(mut self, names: &[&str]) -> Result<Self> {
        if names.len() != self.labels.len() {
            return Err(EinconvError::InvalidGraph(format!(
                "relabel to {} names for rank {}",
                names.len(),
                self.labels.len()
            )));
        }
        for (l, n) in self.labels.iter_mut().zip(names) {
            l.name = n.to_string();
        }
        check_labels(&self.labels)?;
        Ok(self)
    }

    /// Reorders axes to `order` (a permutation of the current names).
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        if order.len() != self.labels.len() {
            return Err(EinconvError::OperandMismatch(0));
        }
        self.sum_to(order)
    }

    /// Sums out every axis not in `keep` and returns axes in `keep` order.
    pub fn sum_to(&self, keep: &[&str]) -> Result<Self> {
        let mut perm = Vec::with_capacity(self.labels.len());
        for name in keep {
            let p = self
                .position(name)
                .ok_or_else(|| EinconvError::UnknownLabel(name.to_string()))?;
            if perm.contains(&p) {
                return Err(EinconvError::SelfLoop {
                    operand: 0,
                    label: name.to_string(),
                });
            }
            perm.push(p);
        }
        let n_keep = perm.len();
        for p in 0..self.labels.len() {
            if !perm.contains(&p) {
                perm.push(p);
            }
        }
        let out_labels: Vec<IndexLabel> = perm[..n_keep]
            .iter()
            .map(|&p| self.labels[p].clone())
            .collect();
        let identity = perm.iter().enumerate().all(|(k, &p)| k == p);
        let moved = if identity {
            self.data.clone()
        } else {
            transpose(&self.data, &self.dims(), &perm)
        };
        let out_len = shape_len(&out_labels);
        let block = if out_len == 0 { 0 } else { moved.len() / out_len };
        let data = if block == 1 {
            moved
        } else {
            moved
                .chunks(block)
                .map(|c| c.iter().copied().sum())
                .collect()
        };
        Ok(DenseTensor {
            labels: out_labels,
            data,
            binary_dummy: false,
        })
    }

    /// Repeats the tensor along missing axes so its labels become `target`
    /// (which must contain every current label).
    pub fn broadcast_to(&self, target: &[IndexLabel]) -> Result<Self> {
        let src_strides = self.strides();
        let mut map = Vec::with_capacity(target.len());
        for l in target {
            match self.position(&l.name) {
                Some(p) => {
                    if self.labels[p].dim != l.dim {
                        return Err(EinconvError::DimMismatch {
                            label: l.name.clone(),
                            left: self.labels[p].dim,
                            right: l.dim,
                        });
                    }
                    map.push(src_strides[p]);
                }
                None => map.push(0),
            }
        }
        for l in &self.labels {
            if !target.iter().any(|t| t.name == l.name) {
                return Err(EinconvError::UnknownLabel(l.name.clone()));
            }
        }
        let dims: Vec<usize> = target.iter().map(|l| l.dim).collect();
        let data = gather_strided(&self.data, &dims, &map);
        DenseTensor::new(target.to_vec(), data)
    }

    /// Largest relative error against `other`, matching axes by name.
    pub fn rel_err(&self, other: &Self) -> Result<f64> {
        let other = other.permute(&self.names())?;
        if other.dims() != self.dims() {
            return Err(EinconvError::OperandMismatch(1));
        }
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
            num = num.max((a - b).abs());
            den = den.max(a.abs()).max(b.abs());
        }
        Ok(if den == 0.0 { num } else { num / den })
    }

    pub fn dims_map(&self) -> HashMap<String, usize> {
        self.labels.iter().map(|l| (l.name.clone(), l.dim)).collect()
    }

    pub fn cast<U: Scalar>(&self) -> DenseTensor<U> {
        DenseTensor {
            labels: self.labels.clone(),
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
            binary_dummy: self.binary_dummy,
        }
    }
}

/// Row-major odometer increment.
pub(crate) fn advance(idx: &mut [usize], dims: &[usize]) {
    for k in (0..dims.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Reads `src` at offsets given by per-axis strides over `dims` (row-major output).
pub(crate) fn gather_strided<T: Copy>(src: &[T], dims: &[usize], strides: &[usize]) -> Vec<T> {
    let n: usize = dims.iter().product();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    if dims.is_empty() {
        out.push(src[0]);
        return out;
    }
    let last = dims.len() - 1;
    let (ld, ls) = (dims[last], strides[last]);
    let mut idx = vec![0usize; last];
    let outer_dims = &dims[..last];
    let outer: usize = outer_dims.iter().product();
    let mut base = 0usize;
    for _ in 0..outer {
        if ls == 1 {
            out.extend_from_slice(&src[base..base + ld]);
        } else {
            for t in 0..ld {
                out.push(src[base + t * ls]);
            }
        }
        for k in (0..last).rev() {
            idx[k] += 1;
            base += strides[k];
            if idx[k] < outer_dims[k] {
                break;
            }
            base -= strides[k] * outer_dims[k];
            idx[k] = 0;
        }
    }
    out
}

/// Moves axes so that output axis k is input axis `perm[k]`.
pub(crate) fn transpose<T: Copy>(src: &[T], dims: &[usize], perm: &[usize]) -> Vec<T> {
    let in_strides = row_major_strides(dims);
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    gather_strided(src, &out_dims, &strides)
}
