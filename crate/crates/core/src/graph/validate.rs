use std::collections::BTreeSet;
use std::fmt;

use crate::graph::{EinconvGraph, VertexKind, CHANNEL_IN, CHANNEL_OUT, SPATIAL_IN, SPATIAL_OUT};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateLabel(String),
    ZeroDim(String),
    SelfLoop { vertex: usize, label: String },
    UnknownLabel { vertex: usize, label: String },
    UnusedLabel(String),
    InputVertex(String),
    Dummy { vertex: usize, reason: String },
    ParameterSpatial { vertex: usize, label: String },
    FilterComposition { axis: usize, effective: usize, expected: usize },
    EvenFilter { label: String, dim: usize },
    Geometry(String),
    DimMismatch { label: String, dim: usize, expected: usize },
    Stages(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateLabel(l) => write!(f, "duplicate label `{l}`"),
            Violation::ZeroDim(l) => write!(f, "label `{l}` has dim 0"),
            Violation::SelfLoop { vertex, label } => write!(f, "self-loop: vertex {vertex} repeats `{label}`"),
            Violation::UnknownLabel { vertex, label } => write!(f, "vertex {vertex} uses undeclared label `{label}`"),
            Violation::UnusedLabel(l) => write!(f, "label `{l}` is in no vertex"),
            Violation::InputVertex(r) => write!(f, "input vertex: {r}"),
            Violation::Dummy { vertex, reason } => write!(f, "dummy vertex {vertex}: {reason}"),
            Violation::ParameterSpatial { vertex, label } => {
                write!(f, "parameter vertex {vertex} carries spatial label `{label}`")
            }
            Violation::FilterComposition { axis, effective, expected } => write!(
                f,
                "axis {axis}: filter chain composes to {effective}, geometry has {expected}"
            ),
            Violation::EvenFilter { label, dim } => write!(f, "filter label `{label}` has even size {dim}"),
            Violation::Geometry(r) => write!(f, "geometry: {r}"),
            Violation::DimMismatch { label, dim, expected } => {
                write!(f, "label `{label}` has dim {dim}, geometry implies {expected}")
            }
            Violation::Stages(r) => write!(f, "stages: {r}"),
        }
    }
}

/// Outcome of [`validate`]; `effective_filter` is the composed filter size
/// per axis as read from the dummy chains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Validation {
    pub violations: Vec<Violation>,
    pub effective_filter: Vec<usize>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(g: &EinconvGraph) -> Validation {
    let mut bad = Vec::new();
    let n_axes = g.n_axes();
    let mut names: BTreeSet<&str> = BTreeSet::new();
    for l in g.outer.iter().chain(g.inner.iter()) {
        if !names.insert(l.name.as_str()) {
            bad.push(Violation::DuplicateLabel(l.name.clone()));
        }
        if l.dim == 0 {
            bad.push(Violation::ZeroDim(l.name.clone()));
        }
    }
    let spatial: BTreeSet<String> = SPATIAL_IN[..n_axes.min(3)]
        .iter()
        .chain(SPATIAL_OUT[..n_axes.min(3)].iter())
        .map(|s| s.to_string())
        .collect();
    for (k, v) in g.vertices.iter().enumerate() {
        for (p, l) in v.labels.iter().enumerate() {
            if v.labels[..p].contains(l) {
                bad.push(Violation::SelfLoop { vertex: k, label: l.clone() });
            }
            if !names.contains(l.as_str()) {
                bad.push(Violation::UnknownLabel { vertex: k, label: l.clone() });
            }
        }
    }
    for l in &names {
        if !g.vertices.iter().any(|v| v.has(l)) {
            bad.push(Violation::UnusedLabel(l.to_string()));
        }
    }
    if let Err(e) = g.geometry.check() {
        bad.push(Violation::Geometry(e.to_string()));
    }
    // input vertex
    let inputs: Vec<usize> = (0..g.vertices.len())
        .filter(|&k| g.vertices[k].kind == VertexKind::Input)
        .collect();
    if inputs.len() != 1 {
        bad.push(Violation::InputVertex(format!("{} input vertices", inputs.len())));
    } else {
        let mut want: BTreeSet<&str> = SPATIAL_IN[..n_axes.min(3)].iter().copied().collect();
        want.insert(CHANNEL_IN);
        if g.vertices[inputs[0]].label_set() != want {
            bad.push(Violation::InputVertex(format!(
                "carries {:?}, expected {:?}",
                g.vertices[inputs[0]].labels, want
            )));
        }
    }
    // parameter vertices stay off the spatial axes
    for (k, v) in g.vertices.iter().enumerate() {
        match v.kind {
            VertexKind::Parameter => {
                let chain_nodes: BTreeSet<String> = g
                    .vertices
                    .iter()
                    .filter(|u| u.kind.is_dummy())
                    .flat_map(|u| u.labels.iter().take(2).cloned())
                    .collect();
                for l in &v.labels {
                    if spatial.contains(l) || chain_nodes.contains(l) {
                        bad.push(Violation::ParameterSpatial { vertex: k, label: l.clone() });
                    }
                }
            }
            kind if kind.is_dummy() => {
                if v.labels.len() != 3 {
                    bad.push(Violation::Dummy {
                        vertex: k,
                        reason: format!("carries {} labels, expected a triple", v.labels.len()),
                    });
                }
                if kind.dummy_axis().unwrap() >= n_axes {
                    bad.push(Violation::Dummy {
                        vertex: k,
                        reason: "axis beyond the geometry".into(),
                    });
                }
            }
            _ => {}
        }
    }
    // dummy chains and the filter composition
    let chains = g.dummy_chains();
    let mut effective = Vec::new();
    for axis in 0..n_axes.min(3) {
        let kind = VertexKind::dummy_for_axis(axis);
        let members = g.vertices.iter().filter(|v| v.kind == kind).count();
        let chain = &chains[axis];
        let reaches = chain
            .last()
            .map_or(false, |&v| g.vertices[v].labels.get(1).map(|s| s.as_str()) == Some(SPATIAL_OUT[axis]));
        if chain.is_empty() || chain.len() != members || !reaches {
            bad.push(Violation::Dummy {
                vertex: chain.first().copied().unwrap_or(0),
                reason: format!("axis {axis} does not form a chain from {} to {}", SPATIAL_IN[axis], SPATIAL_OUT[axis]),
            });
            effective.push(0);
            continue;
        }
        let mut factors = Vec::new();
        for &v in chain {
            let f = &g.vertices[v].labels[2];
            let d = g.dim(f).unwrap_or(0);
            if d % 2 == 0 {
                bad.push(Violation::EvenFilter { label: f.clone(), dim: d });
            }
            factors.push(d);
        }
        let eff = 1 + factors.iter().map(|f| f.saturating_sub(1)).sum::<usize>();
        effective.push(eff);
        match g.geometry.filter.get(axis) {
            Some(&want) if want == eff => {
                if let Ok(ext) = g.geometry.chain_extents(axis, &factors) {
                    for (k, &v) in chain.iter().enumerate() {
                        for (label, expected) in [(&g.vertices[v].labels[0], ext[k]), (&g.vertices[v].labels[1], ext[k + 1])] {
                            let dim = g.dim(label).unwrap_or(0);
                            if dim != expected {
                                bad.push(Violation::DimMismatch {
                                    label: label.clone(),
                                    dim,
                                    expected,
                                });
                            }
                        }
                    }
                }
            }
            Some(&want) => bad.push(Violation::FilterComposition {
                axis,
                effective: eff,
                expected: want,
            }),
            None => {}
        }
    }
    for (label, expected) in [(CHANNEL_IN, g.geometry.channels_in), (CHANNEL_OUT, g.geometry.channels_out)] {
        let dim = g.dim(label).unwrap_or(0);
        if dim != expected {
            bad.push(Violation::DimMismatch {
                label: label.into(),
                dim,
                expected,
            });
        }
    }
    if !g.is_outer(CHANNEL_OUT) {
        bad.push(Violation::UnusedLabel(CHANNEL_OUT.into()));
    }
    // stages: an ordered partition with the input in stage 0
    let mut seen = vec![0usize; g.vertices.len()];
    for stage in &g.stages {
        for &v in stage {
            if v < seen.len() {
                seen[v] += 1;
            } else {
                bad.push(Violation::Stages(format!("vertex index {v} out of range")));
            }
        }
    }
    if seen.iter().any(|&c| c != 1) {
        bad.push(Violation::Stages("not a partition of the vertices".into()));
    }
    if g.stages.iter().any(|s| s.is_empty()) {
        bad.push(Violation::Stages("empty stage".into()));
    }
    if g.activations.len() + 1 != g.stages.len() {
        bad.push(Violation::Stages(format!(
            "{} activation flags for {} stages",
            g.activations.len(),
            g.stages.len()
        )));
    }
    if let (Some(x), Some(first)) = (g.input_index(), g.stages.first()) {
        if !first.contains(&x) {
            bad.push(Violation::Stages("input vertex is not in the first stage".into()));
        }
    }
    Validation {
        violations: bad,
        effective_filter: effective,
    }
}
