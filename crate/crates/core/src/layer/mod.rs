//! Runnable layers: parameters, staged forward/backward and cost accounting.

mod checkpoint;
mod oracle;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EinconvError, Result};
use crate::graph::{link_params, validate, ConvGeometry, EinconvGraph, VertexKind, BATCH};
use crate::scalar::Scalar;
use crate::tensor::{
    contract, dims_of, grad_contract_selected, plan_optimal, ContractionExpr, DenseTensor, DimMap, IndexLabel,
};

pub use checkpoint::{load_layer, read_tensor, save_layer, write_tensor};
pub use oracle::{depthwise_oracle, direct_conv_oracle};

/// Fixed 0/1 coupling tensor for one link of a spatial chain:
/// entry `[src, dst, f]` is 1 iff `src = dst*stride + f - padding`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DummyDesc {
    pub source: IndexLabel,
    pub target: IndexLabel,
    pub filter: IndexLabel,
    pub stride: usize,
    pub padding: usize,
}

impl DummyDesc {
    pub fn is_set(&self, src: usize, dst: usize, f: usize) -> bool {
        (dst * self.stride + f) == src + self.padding
    }

    /// Nonzeros counted by the cost model: every (output, filter) pair,
    /// padded positions included.
    pub fn nominal_nnz(&self) -> u64 {
        (self.target.dim * self.filter.dim) as u64
    }

    pub fn tensor<T: Scalar>(&self) -> DenseTensor<T> {
        let labels = vec![self.source.clone(), self.target.clone(), self.filter.clone()];
        DenseTensor::from_fn(labels, |ix| if self.is_set(ix[0], ix[1], ix[2]) { T::one() } else { T::zero() })
            .into_binary_dummy()
    }
}

/// Descriptors for every dummy vertex of `g`, keyed by vertex index.
pub fn dummy_descriptors(g: &EinconvGraph) -> BTreeMap<usize, DummyDesc> {
    let dims = g.dims();
    let lab = |n: &String| IndexLabel::new(n.clone(), dims.get(n).copied().unwrap_or(1));
    let mut out = BTreeMap::new();
    for chain in g.dummy_chains() {
        let m = chain.len();
        for (k, &v) in chain.iter().enumerate() {
            let ls = &g.vertices[v].labels;
            let (padding, stride) = link_params(k, m, g.geometry.padding, g.geometry.stride);
            out.insert(
                v,
                DummyDesc {
                    source: lab(&ls[0]),
                    target: lab(&ls[1]),
                    filter: lab(&ls[2]),
                    stride,
                    padding,
                },
            );
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Operand {
    Running,
    Vertex(usize),
}

/// One contraction stage: the running intermediate (absent in stage 0, whose
/// input vertex plays that role) plus the stage's own vertices.
#[derive(Clone, Debug)]
struct Stage {
    operands: Vec<Operand>,
    expr: ContractionExpr,
    output: Vec<IndexLabel>,
}

fn build_stages(g: &EinconvGraph, dummies: &BTreeMap<usize, DummyDesc>) -> Result<Vec<Stage>> {
    let dims = g.dims();
    let batch = IndexLabel::new(BATCH, 1);
    let input = g
        .input_index()
        .ok_or_else(|| EinconvError::InvalidGraph("no input vertex".into()))?;
    let mut running: Vec<String> = Vec::new();
    let mut stages = Vec::new();
    for (s, members) in g.stages.iter().enumerate() {
        let mut operands = Vec::new();
        let mut ops: Vec<Vec<String>> = Vec::new();
        if s == 0 {
            if !members.contains(&input) {
                return Err(EinconvError::InvalidGraph("input vertex must be in stage 0".into()));
            }
            operands.push(Operand::Vertex(input));
            let mut l = vec![BATCH.to_string()];
            l.extend(g.vertices[input].labels.iter().cloned());
            ops.push(l);
        } else {
            operands.push(Operand::Running);
            ops.push(running.clone());
        }
        for &v in members {
            if v != input {
                operands.push(Operand::Vertex(v));
                ops.push(g.vertices[v].labels.clone());
            }
        }
        let later: Vec<&String> = g.stages[s + 1..]
            .iter()
            .flatten()
            .flat_map(|&v| g.vertices[v].labels.iter())
            .collect();
        let mut out: Vec<String> = vec![BATCH.to_string()];
        if s + 1 == g.stages.len() {
            for a in 0..g.n_axes() {
                out.push(crate::graph::SPATIAL_OUT[a].to_string());
            }
            out.push(crate::graph::CHANNEL_OUT.to_string());
        } else {
            for op in &ops {
                for l in op {
                    if !out.contains(l) && (later.contains(&l) || g.is_outer(l)) {
                        out.push(l.clone());
                    }
                }
            }
        }
        let mut expr = ContractionExpr::new(&ops, &out)?;
        for (k, op) in operands.iter().enumerate() {
            if let Operand::Vertex(v) = op {
                if let Some(d) = dummies.get(v) {
                    expr = expr.with_dummy(k, d.nominal_nnz());
                }
            }
        }
        let output: Vec<IndexLabel> = out
            .iter()
            .map(|l| {
                if l == BATCH {
                    batch.clone()
                } else {
                    IndexLabel::new(l.clone(), dims.get(l).copied().unwrap_or(1))
                }
            })
            .collect();
        running = out;
        stages.push(Stage {
            operands,
            expr,
            output,
        });
    }
    Ok(stages)
}

fn stage_dims(g: &EinconvGraph, batch: usize) -> DimMap {
    let mut d = g.dims();
    d.insert(BATCH.to_string(), batch);
    d
}

/// Parameter count and FLOPs of the planned forward pass at batch 1.
pub fn complexity(g: &EinconvGraph) -> Result<(u64, u64)> {
    let dummies = dummy_descriptors(g);
    let stages = build_stages(g, &dummies)?;
    let dims = stage_dims(g, 1);
    let mut flops = 0u64;
    for st in &stages {
        flops += plan_optimal(&st.expr, &dims)?.est_flops;
    }
    Ok((g.param_count(), flops))
}

/// Intermediate values kept by [`LayerInstance::forward_cached`].
#[derive(Clone, Debug)]
pub struct LayerCache<T> {
    inputs: Vec<DenseTensor<T>>,
    pre_activations: Vec<DenseTensor<T>>,
}

/// Gradients from [`LayerInstance::backward`].
#[derive(Clone, Debug)]
pub struct LayerGrads<T> {
    pub input: Option<DenseTensor<T>>,
    pub params: BTreeMap<usize, DenseTensor<T>>,
}

/// A graph with materialized parameter tensors.
#[derive(Clone, Debug)]
pub struct LayerInstance<T: Scalar> {
    pub graph: EinconvGraph,
    pub params: BTreeMap<usize, DenseTensor<T>>,
    dummies: BTreeMap<usize, DenseTensor<T>>,
    stages: Vec<Stage>,
}

/// Uniform bound sqrt(6 / fan_in), fan_in = product of the vertex's
/// summed (non-outer) label dims.
pub fn init_bound(g: &EinconvGraph, v: usize) -> f64 {
    let fan_in: usize = g.vertices[v]
        .labels
        .iter()
        .filter(|l| !g.is_outer(l))
        .map(|l| g.dim(l).unwrap_or(1))
        .product();
    (6.0 / fan_in.max(1) as f64).sqrt()
}

/// Draws every parameter tensor i.i.d. uniform on [-b, b], vertices in
/// index order, entries in row-major order.
pub fn init_params<T: Scalar>(graph: &EinconvGraph, geom: &ConvGeometry, seed: u64) -> Result<LayerInstance<T>> {
    let g = if *geom == graph.geometry {
        graph.clone()
    } else {
        graph.with_geometry(geom)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BTreeMap::new();
    for v in g.parameter_indices() {
        let b = init_bound(&g, v);
        let labels = vertex_labels(&g, v);
        let t = DenseTensor::from_fn(labels, |_| T::of(rng.gen_range(-b..=b)));
        params.insert(v, t);
    }
    LayerInstance::with_params(g, params)
}

pub(crate) fn vertex_labels(g: &EinconvGraph, v: usize) -> Vec<IndexLabel> {
    g.vertices[v]
        .labels
        .iter()
        .map(|l| IndexLabel::new(l.clone(), g.dim(l).unwrap_or(1)))
        .collect()
}

impl<T: Scalar> LayerInstance<T> {
    /// Wraps given parameter tensors; their labels must match the vertices.
    pub fn with_params(graph: EinconvGraph, params: BTreeMap<usize, DenseTensor<T>>) -> Result<Self> {
        let report = validate(&graph);
        if !report.is_ok() {
            return Err(EinconvError::InvalidGraph(
                report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
            ));
        }
        if graph.dim(BATCH).is_some() {
            return Err(EinconvError::InvalidGraph(format!("label `{BATCH}` is reserved for the batch")));
        }
        for v in graph.parameter_indices() {
            let want = vertex_labels(&graph, v);
            let t = params
                .get(&v)
                .ok_or_else(|| EinconvError::InvalidGraph(format!("no tensor for parameter vertex {v}")))?;
            if t.labels() != want.as_slice() {
                return Err(EinconvError::OperandMismatch(v));
            }
        }
        let descs = dummy_descriptors(&graph);
        let dummies = descs.iter().map(|(&v, d)| (v, d.tensor())).collect();
        let stages = build_stages(&graph, &descs)?;
        Ok(LayerInstance {
            graph,
            params,
            dummies,
            stages,
        })
    }

    pub fn geometry(&self) -> &ConvGeometry {
        &self.graph.geometry
    }

    pub fn complexity(&self) -> Result<(u64, u64)> {
        complexity(&self.graph)
    }

    pub fn param_count(&self) -> u64 {
        self.graph.param_count()
    }

    /// Input labels `[n, <input vertex labels>]`.
    pub fn input_labels(&self, batch: usize) -> Vec<IndexLabel> {
        let x = self.graph.input_index().expect("validated");
        let mut out = vec![IndexLabel::new(BATCH, batch)];
        out.extend(vertex_labels(&self.graph, x));
        out
    }

    /// Output labels `[n, h', w'(, d'), c']`.
    pub fn output_labels(&self, batch: usize) -> Vec<IndexLabel> {
        let mut out = self.stages.last().expect("at least one stage").output.clone();
        out[0].dim = batch;
        out
    }

    fn tensor_of<'a>(&'a self, op: Operand, running: &'a DenseTensor<T>) -> &'a DenseTensor<T> {
        match op {
            Operand::Running => running,
            Operand::Vertex(v) => match self.graph.vertices[v].kind {
                VertexKind::Parameter => &self.params[&v],
                VertexKind::Input => running,
                _ => &self.dummies[&v],
            },
        }
    }

    fn check_input(&self, x: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        let batch = x
            .dim_of(BATCH)
            .ok_or_else(|| EinconvError::UnknownLabel(BATCH.to_string()))?;
        let want = self.input_labels(batch);
        let names: Vec<&str> = want.iter().map(|l| l.name.as_str()).collect();
        if x.rank() != want.len() {
            return Err(EinconvError::OperandMismatch(0));
        }
        let x = x.permute(&names)?;
        for (a, b) in x.labels().iter().zip(&want) {
            if a.dim != b.dim {
                return Err(EinconvError::DimMismatch {
                    label: a.name.clone(),
                    left: a.dim,
                    right: b.dim,
                });
            }
        }
        Ok(x)
    }

    fn run_stage(&self, s: usize, running: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        let st = &self.stages[s];
        let ts: Vec<&DenseTensor<T>> = st
            .operands
            .iter()
            .map(|&op| self.tensor_of(op, running))
            .collect();
        let dims = dims_of(&st.expr, &ts)?;
        let plan = plan_optimal(&st.expr, &dims)?;
        contract(&st.expr, &ts, &plan)
    }

    /// Forward pass on `x` with labels `(n, h, w, c)` in any order.
    pub fn forward(&self, x: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &DenseTensor<T>) -> Result<(DenseTensor<T>, LayerCache<T>)> {
        let mut cur = self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.stages.len());
        let mut pre = Vec::with_capacity(self.stages.len());
        for s in 0..self.stages.len() {
            let z = self.run_stage(s, &cur)?;
            inputs.push(cur);
            let act = self.graph.activations.get(s).copied().unwrap_or(false);
            cur = if act { z.map(|v| if v > T::zero() { v } else { T::zero() }) } else { z.clone() };
            pre.push(z);
        }
        Ok((
            cur,
            LayerCache {
                inputs,
                pre_activations: pre,
            },
        ))
    }

    /// Gradients of `<forward(x), upstream>` for every parameter tensor and,
    /// when `want_input` is set, for the input.
    pub fn backward(&self, cache: &LayerCache<T>, upstream: &DenseTensor<T>, want_input: bool) -> Result<LayerGrads<T>> {
        let n_stages = self.stages.len();
        let last = &self.stages[n_stages - 1];
        let names: Vec<&str> = last.output.iter().map(|l| l.name.as_str()).collect();
        let mut g = upstream.permute(&names)?;
        let mut params = BTreeMap::new();
        let mut input = None;
        for s in (0..n_stages).rev() {
            if s + 1 < n_stages && self.graph.activations[s] {
                let z = &cache.pre_activations[s];
                for (gv, &zv) in g.data_mut().iter_mut().zip(z.data()) {
                    if zv <= T::zero() {
                        *gv = T::zero();
                    }
                }
            }
            let st = &self.stages[s];
            let running = &cache.inputs[s];
            let ts: Vec<&DenseTensor<T>> = st
                .operands
                .iter()
                .map(|&op| self.tensor_of(op, running))
                .collect();
            let wanted: Vec<bool> = st
                .operands
                .iter()
                .map(|op| match op {
                    Operand::Running => true,
                    Operand::Vertex(v) => match self.graph.vertices[*v].kind {
                        VertexKind::Parameter => true,
                        VertexKind::Input => want_input,
                        _ => false,
                    },
                })
                .collect();
            let grads = grad_contract_selected(&st.expr, &ts, &g, &wanted)?;
            let mut next = None;
            for (op, gr) in st.operands.iter().zip(grads) {
                let Some(gr) = gr else { continue };
                match op {
                    Operand::Running => next = Some(gr),
                    Operand::Vertex(v) if self.graph.vertices[*v].kind == VertexKind::Input => input = Some(gr),
                    Operand::Vertex(v) => {
                        params.insert(*v, gr);
                    }
                }
            }
            if s > 0 {
                g = next.expect("running operand gradient");
            }
        }
        Ok(LayerGrads { input, params })
    }

    /// Contraction of the parameter tensors alone, leaving the filter and
    /// channel labels open: the layer's kernel in factored-filter form.
    pub fn flattened_kernel(&self) -> Result<DenseTensor<T>> {
        let (expr, order) = kernel_expr(&self.graph)?;
        let ts: Vec<&DenseTensor<T>> = order.iter().map(|v| &self.params[v]).collect();
        crate::tensor::einsum(&expr, &ts)
    }
}

/// Einsum over the parameter vertices whose output is every fixed label
/// they carry (filter labels, c, c'), plus the vertex order used.
pub fn kernel_expr(g: &EinconvGraph) -> Result<(ContractionExpr, Vec<usize>)> {
    let params = g.parameter_indices();
    let fixed = g.fixed_labels();
    let ops: Vec<Vec<String>> = params.iter().map(|&v| g.vertices[v].labels.clone()).collect();
    let mut out: Vec<String> = Vec::new();
    for l in g.outer.iter().chain(g.inner.iter()) {
        if fixed.contains(&l.name) && ops.iter().any(|o| o.contains(&l.name)) {
            out.push(l.name.clone());
        }
    }
    Ok((ContractionExpr::new(&ops, &out)?, params))
}
