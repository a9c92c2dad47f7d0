use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{vertex_labels, LayerInstance};
use crate::error::{EinconvError, Result};
use crate::graph::EinconvGraph;
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, IndexLabel};

fn blob_name(v: usize) -> String {
    format!("vertex_{v}.bin")
}

/// Tensor blob: u64 rank, u64 dims, then f64 entries, all little-endian.
pub fn write_tensor<T: Scalar>(path: &Path, t: &DenseTensor<T>) -> Result<()> {
    let dims = t.dims();
    let mut buf = Vec::with_capacity(8 * (1 + dims.len() + t.len()));
    buf.extend_from_slice(&(dims.len() as u64).to_le_bytes());
    for d in &dims {
        buf.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for x in t.data() {
        buf.extend_from_slice(&x.to_f64_lossy().to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads a blob written by [`write_tensor`] into a tensor with `labels`.
pub fn read_tensor<T: Scalar>(path: &Path, labels: Vec<IndexLabel>) -> Result<DenseTensor<T>> {
    let bytes = fs::read(path)?;
    let rank = read_u64(&bytes, 0)? as usize;
    if rank != labels.len() {
        return Err(EinconvError::OperandMismatch(rank));
    }
    for (k, l) in labels.iter().enumerate() {
        let d = read_u64(&bytes, 8 * (1 + k))? as usize;
        if d != l.dim {
            return Err(EinconvError::DimMismatch {
                label: l.name.clone(),
                left: d,
                right: l.dim,
            });
        }
    }
    let start = 8 * (1 + rank);
    let n: usize = labels.iter().map(|l| l.dim).product();
    if bytes.len() != start + 8 * n {
        return Err(EinconvError::Truncated);
    }
    let data = (0..n)
        .map(|k| T::of(f64::from_le_bytes(bytes[start + 8 * k..start + 8 * k + 8].try_into().unwrap())))
        .collect();
    DenseTensor::new(labels, data)
}

/// Writes `graph.json` and one `vertex_<k>.bin` blob per parameter vertex.
pub fn save_layer<T: Scalar>(layer: &LayerInstance<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("graph.json"), layer.graph.to_json())?;
    for (&v, t) in &layer.params {
        write_tensor(&dir.join(blob_name(v)), t)?;
    }
    Ok(())
}

fn read_u64(bytes: &[u8], at: usize) -> Result<u64> {
    let chunk = bytes.get(at..at + 8).ok_or(EinconvError::Truncated)?;
    Ok(u64::from_le_bytes(chunk.try_into().expect("8 bytes")))
}

pub fn load_layer<T: Scalar>(dir: &Path) -> Result<LayerInstance<T>> {
    let graph = EinconvGraph::from_json(&fs::read_to_string(dir.join("graph.json"))?)?;
    let mut params = BTreeMap::new();
    for v in graph.parameter_indices() {
        let t = read_tensor(&dir.join(blob_name(v)), vertex_labels(&graph, v))?;
        params.insert(v, t);
    }
    LayerInstance::with_params(graph, params)
}
