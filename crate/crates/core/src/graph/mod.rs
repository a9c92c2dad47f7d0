//! Hypergraph model of a convolutional layer.

mod builder;
mod canonical;
mod geometry;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{EinconvError, Result};
use crate::tensor::{DimMap, IndexLabel};

pub use builder::{make_named, GraphBuilder, NamedKind};
pub use canonical::{canonical_form, canonical_hash};
pub use geometry::{link_params, ConvGeometry};
pub use validate::{validate, Validation, Violation};

pub const SPATIAL_IN: [&str; 3] = ["h", "w", "d"];
pub const SPATIAL_OUT: [&str; 3] = ["h'", "w'", "d'"];
pub const FILTER: [&str; 3] = ["i", "j", "k"];
pub const CHANNEL_IN: &str = "c";
pub const CHANNEL_OUT: &str = "c'";
pub const BATCH: &str = "n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexKind {
    Parameter,
    Input,
    DummyVertical,
    DummyHorizontal,
    DummyDepth,
}

impl VertexKind {
    pub fn dummy_for_axis(axis: usize) -> VertexKind {
        match axis {
            0 => VertexKind::DummyVertical,
            1 => VertexKind::DummyHorizontal,
            _ => VertexKind::DummyDepth,
        }
    }

    pub fn dummy_axis(self) -> Option<usize> {
        match self {
            VertexKind::DummyVertical => Some(0),
            VertexKind::DummyHorizontal => Some(1),
            VertexKind::DummyDepth => Some(2),
            _ => None,
        }
    }

    pub fn is_dummy(self) -> bool {
        self.dummy_axis().is_some()
    }

    pub fn code(self) -> &'static str {
        match self {
            VertexKind::Parameter => "parameter",
            VertexKind::Input => "input",
            VertexKind::DummyVertical => "dummy-vertical",
            VertexKind::DummyHorizontal => "dummy-horizontal",
            VertexKind::DummyDepth => "dummy-depth",
        }
    }
}

/// A tensor in the network. Dummy vertices list `[source, target, filter]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub labels: Vec<String>,
    pub kind: VertexKind,
}

impl Vertex {
    pub fn new(kind: VertexKind, labels: &[&str]) -> Self {
        Vertex {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            kind,
        }
    }

    pub fn param(labels: &[&str]) -> Self {
        Self::new(VertexKind::Parameter, labels)
    }

    pub fn has(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn label_set(&self) -> BTreeSet<&str> {
        self.labels.iter().map(|s| s.as_str()).collect()
    }
}

/// Outer labels, inner labels with dims, vertices, and the staging used when
/// the layer is evaluated (activation flag `k` sits between stage `k` and `k+1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EinconvGraph {
    pub outer: Vec<IndexLabel>,
    pub inner: Vec<IndexLabel>,
    pub vertices: Vec<Vertex>,
    pub stages: Vec<Vec<usize>>,
    pub activations: Vec<bool>,
    pub geometry: ConvGeometry,
}

impl EinconvGraph {
    pub fn n_axes(&self) -> usize {
        self.geometry.n_axes()
    }

    pub fn dims(&self) -> DimMap {
        self.outer
            .iter()
            .chain(self.inner.iter())
            .map(|l| (l.name.clone(), l.dim))
            .collect()
    }

    pub fn dim(&self, name: &str) -> Option<usize> {
        self.outer
            .iter()
            .chain(self.inner.iter())
            .find(|l| l.name == name)
            .map(|l| l.dim)
    }

    pub fn set_dim(&mut self, name: &str, dim: usize) {
        if let Some(l) = self.inner.iter_mut().chain(self.outer.iter_mut()).find(|l| l.name == name) {
            l.dim = dim;
        }
    }

    pub fn is_outer(&self, name: &str) -> bool {
        self.outer.iter().any(|l| l.name == name)
    }

    pub fn parameter_indices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.vertices[v].kind == VertexKind::Parameter)
            .collect()
    }

    pub fn input_index(&self) -> Option<usize> {
        self.vertices.iter().position(|v| v.kind == VertexKind::Input)
    }

    /// Labels carried by the input or any dummy; never renamed or removed.
    pub fn fixed_labels(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self
            .vertices
            .iter()
            .filter(|v| v.kind != VertexKind::Parameter)
            .flat_map(|v| v.labels.iter().cloned())
            .collect();
        out.extend(self.outer.iter().map(|l| l.name.clone()));
        out
    }

    /// Inner labels carried only by parameter vertices.
    pub fn rank_labels(&self) -> Vec<String> {
        let fixed = self.fixed_labels();
        self.inner
            .iter()
            .filter(|l| !fixed.contains(&l.name))
            .map(|l| l.name.clone())
            .collect()
    }

    /// Filter labels of each axis, in chain order.
    pub fn filter_labels(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.n_axes()];
        for (axis, chain) in self.dummy_chains().into_iter().enumerate() {
            for v in chain {
                if let Some(f) = self.vertices[v].labels.get(2) {
                    out[axis].push(f.clone());
                }
            }
        }
        out
    }

    /// Dummy vertex indices per axis, ordered from input to output side.
    pub fn dummy_chains(&self) -> Vec<Vec<usize>> {
        let mut chains = vec![Vec::new(); self.n_axes()];
        for (axis, chain) in chains.iter_mut().enumerate() {
            let kind = VertexKind::dummy_for_axis(axis);
            let mut cur = SPATIAL_IN.get(axis).copied().unwrap_or("").to_string();
            let members: Vec<usize> = (0..self.vertices.len())
                .filter(|&v| self.vertices[v].kind == kind)
                .collect();
            while let Some(&v) = members
                .iter()
                .find(|&&v| self.vertices[v].labels.first() == Some(&cur) && !chain.contains(&v))
            {
                chain.push(v);
                match self.vertices[v].labels.get(1) {
                    Some(next) => cur = next.clone(),
                    None => break,
                }
            }
        }
        chains
    }

    /// e_r = {v : r ∈ v} for every label of the graph.
    pub fn hyperedges(&self) -> BTreeMap<String, BTreeSet<usize>> {
        let mut out: BTreeMap<String, BTreeSet<usize>> = self
            .outer
            .iter()
            .chain(self.inner.iter())
            .map(|l| (l.name.clone(), BTreeSet::new()))
            .collect();
        for (k, v) in self.vertices.iter().enumerate() {
            for l in &v.labels {
                out.entry(l.clone()).or_default().insert(k);
            }
        }
        out
    }

    /// Number of free parameters: Σ over parameter vertices of ∏ dims.
    pub fn param_count(&self) -> u64 {
        let dims = self.dims();
        self.vertices
            .iter()
            .filter(|v| v.kind == VertexKind::Parameter)
            .map(|v| v.labels.iter().map(|l| dims.get(l).copied().unwrap_or(0) as u64).product::<u64>())
            .sum()
    }

    pub fn stage_of(&self, vertex: usize) -> Option<usize> {
        self.stages.iter().position(|s| s.contains(&vertex))
    }

    /// Removes vertex `v`, reindexing stages. Empty stages are dropped
    /// together with the activation flag that followed them.
    pub fn remove_vertex(&mut self, v: usize) {
        self.vertices.remove(v);
        for stage in self.stages.iter_mut() {
            stage.retain(|&x| x != v);
            for x in stage.iter_mut() {
                if *x > v {
                    *x -= 1;
                }
            }
        }
        self.drop_empty_stages();
    }

    pub fn drop_empty_stages(&mut self) {
        let mut k = 0;
        while k < self.stages.len() {
            if self.stages[k].is_empty() && self.stages.len() > 1 {
                self.stages.remove(k);
                if k == 0 {
                    self.activations.remove(0);
                } else if k == self.activations.len() {
                    self.activations.remove(k - 1);
                } else {
                    // two boundaries fuse; an activation on either survives
                    let merged = self.activations[k - 1] || self.activations[k];
                    self.activations[k - 1] = merged;
                    self.activations.remove(k);
                }
            } else {
                k += 1;
            }
        }
    }

    /// Removes a label from every vertex and from the inner list.
    pub fn remove_label(&mut self, name: &str) {
        for v in self.vertices.iter_mut() {
            v.labels.retain(|l| l != name);
        }
        self.inner.retain(|l| l.name != name);
    }

    /// Connected through shared non-outer labels (outer labels are open edges).
    pub fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for u in 0..n {
                if !seen[u]
                    && self.vertices[v]
                        .labels
                        .iter()
                        .any(|l| !self.is_outer(l) && self.vertices[u].has(l))
                {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// A copy with a single stage holding every vertex.
    pub fn linear(&self) -> Self {
        let mut g = self.clone();
        g.stages = vec![(0..g.vertices.len()).collect()];
        g.activations.clear();
        g
    }

    /// Same structure at another geometry: spatial, filter and channel dims
    /// follow `geom`, rank dims stay. Filter chains must still compose to
    /// the new filter sizes.
    pub fn with_geometry(&self, geom: &ConvGeometry) -> Result<Self> {
        geom.check()?;
        if geom.n_axes() != self.n_axes() {
            return Err(EinconvError::Geometry("axis count differs".into()));
        }
        let mut g = self.clone();
        g.geometry = geom.clone();
        for (axis, chain) in self.dummy_chains().into_iter().enumerate() {
            let factors: Vec<usize> = chain
                .iter()
                .map(|&v| self.dim(&self.vertices[v].labels[2]).unwrap_or(1))
                .collect();
            let ext = geom.chain_extents(axis, &factors)?;
            for (k, &v) in chain.iter().enumerate() {
                let src = self.vertices[v].labels[0].clone();
                let dst = self.vertices[v].labels[1].clone();
                g.set_dim(&src, ext[k]);
                g.set_dim(&dst, ext[k + 1]);
            }
        }
        g.set_dim(CHANNEL_IN, geom.channels_in);
        g.set_dim(CHANNEL_OUT, geom.channels_out);
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
