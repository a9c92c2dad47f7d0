use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{canonical_form, canonical_hash, validate, EinconvGraph, Vertex, VertexKind, CHANNEL_IN, CHANNEL_OUT};
use crate::reduction::{is_nonredundant, reduce};
use crate::tensor::IndexLabel;

/// Attempts per mutation before giving up and returning the input.
pub const MAX_RESAMPLES: usize = 20;

/// A searchable layer: the graph carries rank dims, stages and activation
/// flags; `order_hint` seeds stage reshuffles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub graph: EinconvGraph,
    pub order_hint: u64,
}

impl Genome {
    pub fn new(graph: EinconvGraph) -> Self {
        Genome { graph, order_hint: 0 }
    }

    /// Cache key: canonical form covers structure, dims, stages and flags.
    pub fn key(&self) -> String {
        canonical_form(&self.graph)
    }

    pub fn hash(&self) -> String {
        canonical_hash(&self.graph)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationOp {
    AddVertex,
    RemoveVertex,
    AddRank,
    RemoveRank,
    ResizeRank,
    ToggleActivation,
    ReshuffleOrder,
}

impl MutationOp {
    pub const ALL: [MutationOp; 7] = [
        MutationOp::AddVertex,
        MutationOp::RemoveVertex,
        MutationOp::AddRank,
        MutationOp::RemoveRank,
        MutationOp::ResizeRank,
        MutationOp::ToggleActivation,
        MutationOp::ReshuffleOrder,
    ];

    /// Whether the operator has anything to act on.
    pub fn applicable(self, g: &EinconvGraph) -> bool {
        let params = g.parameter_indices().len();
        let ranks = g.rank_labels().len();
        match self {
            MutationOp::AddVertex | MutationOp::ReshuffleOrder => params >= 1,
            MutationOp::RemoveVertex => params >= 2,
            MutationOp::AddRank => params >= 2,
            MutationOp::RemoveRank | MutationOp::ResizeRank => ranks >= 1,
            MutationOp::ToggleActivation => g.stages.len() >= 2,
        }
    }
}

fn fresh_rank_name(g: &EinconvGraph) -> String {
    (1..)
        .map(|k| format!("r{k}"))
        .find(|n| g.dim(n).is_none())
        .expect("unbounded")
}

/// Labels a parameter vertex may carry: filter labels, channels, ranks.
fn param_label_pool(g: &EinconvGraph) -> Vec<String> {
    let mut pool: Vec<String> = g.filter_labels().into_iter().flatten().collect();
    pool.push(CHANNEL_IN.to_string());
    pool.push(CHANNEL_OUT.to_string());
    pool.extend(g.rank_labels());
    pool
}

/// Puts every dummy in the earliest stage holding a parameter vertex with
/// its filter label (stage 0 if none) and drops empty stages.
pub fn normalize_stages(g: &mut EinconvGraph) {
    let dummies: Vec<usize> = (0..g.vertices.len()).filter(|&v| g.vertices[v].kind.is_dummy()).collect();
    for d in dummies {
        let filter = g.vertices[d].labels[2].clone();
        let target = (0..g.stages.len())
            .find(|&s| {
                g.stages[s]
                    .iter()
                    .any(|&v| g.vertices[v].kind == VertexKind::Parameter && g.vertices[v].has(&filter))
            })
            .unwrap_or(0);
        for st in g.stages.iter_mut() {
            st.retain(|&v| v != d);
        }
        g.stages[target].push(d);
    }
    for st in g.stages.iter_mut() {
        st.sort_unstable();
    }
    g.drop_empty_stages();
}

fn apply(op: MutationOp, genome: &Genome, rng: &mut impl Rng) -> Option<Genome> {
    let mut g = genome.graph.clone();
    let mut hint = genome.order_hint;
    let params = g.parameter_indices();
    match op {
        MutationOp::AddVertex => {
            let pool = param_label_pool(&g);
            let k = rng.gen_range(1..=pool.len().min(3));
            let labels: Vec<String> = pool.choose_multiple(rng, k).cloned().collect();
            let stage = g.stage_of(*params.choose(rng)?)?;
            g.vertices.push(Vertex {
                labels,
                kind: VertexKind::Parameter,
            });
            let v = g.vertices.len() - 1;
            g.stages[stage].push(v);
        }
        MutationOp::RemoveVertex => {
            let v = *params.choose(rng)?;
            let orphaned: Vec<String> = g.vertices[v]
                .labels
                .iter()
                .filter(|l| g.rank_labels().contains(l))
                .cloned()
                .collect();
            g.remove_vertex(v);
            for l in orphaned {
                if !g.vertices.iter().any(|u| u.has(&l)) {
                    g.remove_label(&l);
                }
            }
        }
        MutationOp::AddRank => {
            let name = fresh_rank_name(&g);
            let pair: Vec<usize> = params.choose_multiple(rng, 2).copied().collect();
            let dim = *[2usize, 4].choose(rng)?;
            g.inner.push(IndexLabel::new(name.clone(), dim));
            for v in pair {
                g.vertices[v].labels.push(name.clone());
            }
        }
        MutationOp::RemoveRank => {
            let r = g.rank_labels().choose(rng)?.clone();
            g.remove_label(&r);
        }
        MutationOp::ResizeRank => {
            let r = g.rank_labels().choose(rng)?.clone();
            let d = g.dim(&r)?;
            let nd = if d >= 4 && rng.gen_bool(0.5) { d / 2 } else { d * 2 };
            g.set_dim(&r, nd.max(2));
        }
        MutationOp::ToggleActivation => {
            if g.activations.is_empty() {
                return None;
            }
            let k = rng.gen_range(0..g.activations.len());
            g.activations[k] = !g.activations[k];
        }
        MutationOp::ReshuffleOrder => {
            hint = rng.gen();
            let v = *params.choose(rng)?;
            let from = g.stage_of(v)?;
            let to = rng.gen_range(0..=g.stages.len());
            if to == from {
                return None;
            }
            g.stages[from].retain(|&x| x != v);
            if to == g.stages.len() {
                g.stages.push(vec![v]);
                g.activations.push(hint & 1 == 1);
            } else {
                g.stages[to].push(v);
            }
        }
    }
    normalize_stages(&mut g);
    let g = reduce(&g).result;
    let mut g = g;
    normalize_stages(&mut g);
    let ok = validate(&g).is_ok() && is_nonredundant(&g) && g.is_connected();
    if !ok {
        return None;
    }
    let out = Genome {
        graph: g,
        order_hint: hint,
    };
    if out == *genome {
        return None;
    }
    Some(out)
}

/// Applies one operator drawn uniformly from the applicable ones, then
/// reduces; retries up to [`MAX_RESAMPLES`] times on invalid results and
/// otherwise returns the input unchanged.
pub fn mutate(genome: &Genome, rng: &mut impl Rng) -> (Genome, Option<MutationOp>) {
    let ops: Vec<MutationOp> = MutationOp::ALL
        .iter()
        .copied()
        .filter(|op| op.applicable(&genome.graph))
        .collect();
    if ops.is_empty() {
        return (genome.clone(), None);
    }
    for _ in 0..MAX_RESAMPLES {
        let op = *ops.choose(rng).expect("non-empty");
        if let Some(g) = apply(op, genome, rng) {
            return (g, Some(op));
        }
    }
    (genome.clone(), None)
}

/// [`mutate`] restricted to one operator.
pub fn mutate_with(op: MutationOp, genome: &Genome, rng: &mut impl Rng) -> Genome {
    for _ in 0..MAX_RESAMPLES {
        if let Some(g) = apply(op, genome, rng) {
            return g;
        }
    }
    genome.clone()
}
