use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EinconvError, Result};
use crate::graph::{
    ConvGeometry, EinconvGraph, Vertex, VertexKind, CHANNEL_IN, CHANNEL_OUT, FILTER, SPATIAL_IN,
    SPATIAL_OUT,
};
use crate::tensor::IndexLabel;

/// Lays down the input vertex and the dummy chains for a geometry and a
/// filter factorization per axis; parameter vertices are added afterwards.
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    geometry: ConvGeometry,
    outer: Vec<IndexLabel>,
    inner: Vec<IndexLabel>,
    vertices: Vec<Vertex>,
    filter_labels: Vec<Vec<String>>,
}

impl GraphBuilder {
    pub fn new(geom: &ConvGeometry, factors: &[Vec<usize>]) -> Result<Self> {
        geom.check()?;
        let n = geom.n_axes();
        if n > 3 || factors.len() != n {
            return Err(EinconvError::Geometry(format!("{n} axes with {} factor lists", factors.len())));
        }
        let mut outer = Vec::new();
        let mut spatial = Vec::new();
        let mut between = Vec::new();
        let mut filters = Vec::new();
        let mut dummies = Vec::new();
        let mut filter_labels = Vec::new();
        for axis in 0..n {
            let f = &factors[axis];
            if f.is_empty() || f.iter().any(|x| x % 2 == 0) {
                return Err(EinconvError::EvenFilter(f.iter().copied().find(|x| x % 2 == 0).unwrap_or(0)));
            }
            let ext = geom.chain_extents(axis, f)?;
            let m = f.len();
            let node = |k: usize| -> String {
                if k == 0 {
                    SPATIAL_IN[axis].to_string()
                } else if k == m {
                    SPATIAL_OUT[axis].to_string()
                } else {
                    format!("{}{k}", SPATIAL_IN[axis])
                }
            };
            let flab = |k: usize| -> String {
                if m == 1 {
                    FILTER[axis].to_string()
                } else {
                    format!("{}{}", FILTER[axis], k + 1)
                }
            };
            spatial.push(IndexLabel::new(SPATIAL_IN[axis], ext[0]));
            outer.push(IndexLabel::new(SPATIAL_OUT[axis], ext[m]));
            let mut fl = Vec::new();
            for k in 0..m {
                if k > 0 {
                    between.push(IndexLabel::new(node(k), ext[k]));
                }
                filters.push(IndexLabel::new(flab(k), f[k]));
                fl.push(flab(k));
                dummies.push(Vertex {
                    labels: vec![node(k), node(k + 1), flab(k)],
                    kind: VertexKind::dummy_for_axis(axis),
                });
            }
            filter_labels.push(fl);
        }
        outer.push(IndexLabel::new(CHANNEL_OUT, geom.channels_out));
        let mut inner = spatial;
        inner.extend(between);
        inner.extend(filters);
        inner.push(IndexLabel::new(CHANNEL_IN, geom.channels_in));
        let mut x: Vec<&str> = SPATIAL_IN[..n].to_vec();
        x.push(CHANNEL_IN);
        let mut vertices = vec![Vertex::new(VertexKind::Input, &x)];
        vertices.extend(dummies);
        Ok(GraphBuilder {
            geometry: geom.clone(),
            outer,
            inner,
            vertices,
            filter_labels,
        })
    }

    /// Builder with one unfactored filter per axis.
    pub fn plain(geom: &ConvGeometry) -> Result<Self> {
        let f: Vec<Vec<usize>> = geom.filter.iter().map(|&x| vec![x]).collect();
        Self::new(geom, &f)
    }

    pub fn filter_labels(&self) -> &[Vec<String>] {
        &self.filter_labels
    }

    pub fn add_rank(&mut self, name: &str, dim: usize) -> &mut Self {
        self.inner.push(IndexLabel::new(name, dim));
        self
    }

    pub fn add_param(&mut self, labels: &[&str]) -> &mut Self {
        self.vertices.push(Vertex::param(labels));
        self
    }

    pub fn add_param_owned(&mut self, labels: Vec<String>) -> &mut Self {
        self.vertices.push(Vertex {
            labels,
            kind: VertexKind::Parameter,
        });
        self
    }

    pub fn build(&self) -> EinconvGraph {
        EinconvGraph {
            outer: self.outer.clone(),
            inner: self.inner.clone(),
            vertices: self.vertices.clone(),
            stages: vec![(0..self.vertices.len()).collect()],
            activations: Vec::new(),
            geometry: self.geometry.clone(),
        }
    }
}

/// The layers drawn as examples: eight 2D and three 3D.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedKind {
    Standard,
    DepthwiseSeparable,
    Bottleneck,
    InvertedBottleneck,
    Factoring,
    Flattened,
    Cp,
    LowRank,
    Standard3d,
    DepthwiseSeparable3d,
    TwoPlusOneD,
}

impl NamedKind {
    pub const ALL_2D: [NamedKind; 8] = [
        NamedKind::Standard,
        NamedKind::DepthwiseSeparable,
        NamedKind::Bottleneck,
        NamedKind::InvertedBottleneck,
        NamedKind::Factoring,
        NamedKind::Flattened,
        NamedKind::Cp,
        NamedKind::LowRank,
    ];
    pub const ALL_3D: [NamedKind; 3] = [
        NamedKind::Standard3d,
        NamedKind::DepthwiseSeparable3d,
        NamedKind::TwoPlusOneD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NamedKind::Standard => "standard",
            NamedKind::DepthwiseSeparable => "depthwise_separable",
            NamedKind::Bottleneck => "bottleneck",
            NamedKind::InvertedBottleneck => "inverted_bottleneck",
            NamedKind::Factoring => "factoring",
            NamedKind::Flattened => "flattened",
            NamedKind::Cp => "cp",
            NamedKind::LowRank => "low_rank",
            NamedKind::Standard3d => "standard3d",
            NamedKind::DepthwiseSeparable3d => "depthwise_separable3d",
            NamedKind::TwoPlusOneD => "two_plus_one_d",
        }
    }

    pub fn n_axes(self) -> usize {
        match self {
            NamedKind::Standard3d | NamedKind::DepthwiseSeparable3d | NamedKind::TwoPlusOneD => 3,
            _ => 2,
        }
    }

    /// Rank keys the constructor reads from its `ranks` map.
    pub fn rank_keys(self) -> &'static [&'static str] {
        match self {
            NamedKind::Bottleneck => &["A", "B"],
            NamedKind::Cp => &["Gamma"],
            NamedKind::InvertedBottleneck | NamedKind::Factoring | NamedKind::LowRank | NamedKind::TwoPlusOneD => &["R"],
            _ => &[],
        }
    }
}

impl fmt::Display for NamedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NamedKind {
    type Err = EinconvError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        NamedKind::ALL_2D
            .iter()
            .chain(NamedKind::ALL_3D.iter())
            .copied()
            .find(|k| k.name() == s)
            .or(match s.as_str() {
                "tucker2" | "tucker_2" => Some(NamedKind::Bottleneck),
                "separable" => Some(NamedKind::DepthwiseSeparable),
                "2+1d" | "r2plus1d" => Some(NamedKind::TwoPlusOneD),
                _ => None,
            })
            .ok_or_else(|| EinconvError::Parse(format!("unknown layer kind `{s}`")))
    }
}

fn rank(ranks: &BTreeMap<String, usize>, key: &str) -> Result<usize> {
    let alias = if key == "Gamma" { Some("Γ") } else { None };
    ranks
        .get(key)
        .or_else(|| alias.and_then(|a| ranks.get(a)))
        .copied()
        .filter(|&d| d >= 1)
        .ok_or_else(|| EinconvError::MissingRank(key.to_string()))
}

/// Builds one of the named layers as a hypergraph.
pub fn make_named(kind: NamedKind, geom: &ConvGeometry, ranks: &BTreeMap<String, usize>) -> Result<EinconvGraph> {
    if let Some(&f) = geom.filter.iter().find(|f| *f % 2 == 0) {
        return Err(EinconvError::EvenFilter(f));
    }
    if geom.n_axes() != kind.n_axes() {
        return Err(EinconvError::Geometry(format!(
            "{kind} needs {} spatial axes, geometry has {}",
            kind.n_axes(),
            geom.n_axes()
        )));
    }
    for key in kind.rank_keys() {
        rank(ranks, key)?;
    }
    let (c, co) = (CHANNEL_IN, CHANNEL_OUT);
    let mut b = if kind == NamedKind::Factoring {
        if geom.filter.iter().any(|&f| f < 5) {
            return Err(EinconvError::Geometry("factoring needs filters of size at least 5".into()));
        }
        let f: Vec<Vec<usize>> = geom.filter.iter().map(|&x| vec![3, x - 2]).collect();
        GraphBuilder::new(geom, &f)?
    } else {
        GraphBuilder::plain(geom)?
    };
    match kind {
        NamedKind::Standard => {
            b.add_param(&["i", "j", c, co]);
        }
        NamedKind::DepthwiseSeparable => {
            b.add_param(&["i", "j", c]).add_param(&[c, co]);
        }
        NamedKind::Bottleneck => {
            b.add_rank("alpha", rank(ranks, "A")?)
                .add_rank("beta", rank(ranks, "B")?)
                .add_param(&[c, "alpha"])
                .add_param(&["i", "j", "alpha", "beta"])
                .add_param(&["beta", co]);
        }
        NamedKind::InvertedBottleneck => {
            b.add_rank("r", rank(ranks, "R")?)
                .add_param(&[c, "r"])
                .add_param(&["i", "j", "r"])
                .add_param(&["r", co]);
        }
        NamedKind::Factoring => {
            b.add_rank("r", rank(ranks, "R")?)
                .add_param(&["i1", "j1", c, "r"])
                .add_param(&["i2", "j2", "r", co]);
        }
        NamedKind::Flattened => {
            b.add_param(&[c, co]).add_param(&["i", co]).add_param(&["j", co]);
        }
        NamedKind::Cp => {
            b.add_rank("gamma", rank(ranks, "Gamma")?)
                .add_param(&["i", "gamma"])
                .add_param(&["j", "gamma"])
                .add_param(&[c, "gamma"])
                .add_param(&[co, "gamma"]);
        }
        NamedKind::LowRank => {
            b.add_rank("r", rank(ranks, "R")?)
                .add_param(&["i", c, "r"])
                .add_param(&["j", "r", co]);
        }
        NamedKind::Standard3d => {
            b.add_param(&["i", "j", "k", c, co]);
        }
        NamedKind::DepthwiseSeparable3d => {
            b.add_param(&["i", "j", "k", c]).add_param(&[c, co]);
        }
        NamedKind::TwoPlusOneD => {
            b.add_rank("r", rank(ranks, "R")?)
                .add_param(&["i", "j", c, "r"])
                .add_param(&["k", "r", co]);
        }
    }
    Ok(b.build())
}
