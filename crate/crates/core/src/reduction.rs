//! Redundancy rewrites on graphs and the integer-partition machinery for
//! filter factorization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{EinconvError, Result};
use crate::graph::{canonical_form, validate, EinconvGraph, VertexKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Rank1,
    SubsetVertex,
    ParallelEdge,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Rank1 => "rank1",
            Rule::SubsetVertex => "subset_vertex",
            Rule::ParallelEdge => "parallel_edge",
        })
    }
}

/// One applicable rewrite.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rewrite {
    /// Drop a rank label of dim 1 or carried by at most one vertex.
    DropRank(String),
    /// Strip a dim-1 fixed label (filter or input channel) from parameter vertices.
    StripUnit(String),
    /// Remove parameter vertex `remove`, contained in `keep` (same stage).
    Subset { remove: usize, keep: usize },
    /// Fold rank label `remove` into `keep`, which takes the product dim.
    Merge { keep: String, remove: String },
}

impl Rewrite {
    pub fn rule(&self) -> Rule {
        match self {
            Rewrite::DropRank(_) | Rewrite::StripUnit(_) => Rule::Rank1,
            Rewrite::Subset { .. } => Rule::SubsetVertex,
            Rewrite::Merge { .. } => Rule::ParallelEdge,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub rule: Rule,
    pub labels: Vec<String>,
    pub vertices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionTrace {
    pub steps: Vec<TraceStep>,
    pub result: EinconvGraph,
}

fn rank1_instances(g: &EinconvGraph) -> Vec<Rewrite> {
    let mut out = Vec::new();
    let edges = g.hyperedges();
    for r in g.rank_labels() {
        if g.dim(&r) == Some(1) || edges.get(&r).map_or(0, |e| e.len()) <= 1 {
            out.push(Rewrite::DropRank(r));
        }
    }
    let fixed = g.fixed_labels();
    for l in &g.inner {
        if l.dim == 1
            && fixed.contains(&l.name)
            && !g.is_outer(&l.name)
            && g.vertices.iter().any(|v| v.kind == VertexKind::Parameter && v.has(&l.name))
        {
            out.push(Rewrite::StripUnit(l.name.clone()));
        }
    }
    out
}

fn parallel_instances(g: &EinconvGraph) -> Vec<Rewrite> {
    let edges = g.hyperedges();
    let ranks = g.rank_labels();
    let mut out = Vec::new();
    for a in &ranks {
        for b in &ranks {
            if a != b && !edges[a].is_empty() && edges[a] == edges[b] {
                out.push(Rewrite::Merge {
                    keep: a.clone(),
                    remove: b.clone(),
                });
            }
        }
    }
    out
}

fn subset_instances(g: &EinconvGraph) -> Vec<Rewrite> {
    let params = g.parameter_indices();
    let sets: BTreeMap<usize, BTreeSet<&str>> = params.iter().map(|&v| (v, g.vertices[v].label_set())).collect();
    let mut out = Vec::new();
    for &m in &params {
        for &n in &params {
            if m != n && g.stage_of(m) == g.stage_of(n) && sets[&m].is_subset(&sets[&n]) {
                out.push(Rewrite::Subset { remove: m, keep: n });
            }
        }
    }
    out
}

/// Every rewrite that applies to `g`, in rule order rank1, parallel, subset.
pub fn applicable_rewrites(g: &EinconvGraph) -> Vec<Rewrite> {
    let mut out = rank1_instances(g);
    out.extend(parallel_instances(g));
    out.extend(subset_instances(g));
    out
}

pub fn apply_rewrite(g: &EinconvGraph, rw: &Rewrite) -> (EinconvGraph, TraceStep) {
    let mut h = g.clone();
    let step = match rw {
        Rewrite::DropRank(r) => {
            let vs: Vec<usize> = g.hyperedges().get(r).map(|e| e.iter().copied().collect()).unwrap_or_default();
            h.remove_label(r);
            TraceStep {
                rule: Rule::Rank1,
                labels: vec![r.clone()],
                vertices: vs,
            }
        }
        Rewrite::StripUnit(l) => {
            let mut vs = Vec::new();
            for (k, v) in h.vertices.iter_mut().enumerate() {
                if v.kind == VertexKind::Parameter && v.has(l) {
                    v.labels.retain(|x| x != l);
                    vs.push(k);
                }
            }
            TraceStep {
                rule: Rule::Rank1,
                labels: vec![l.clone()],
                vertices: vs,
            }
        }
        Rewrite::Subset { remove, keep } => {
            h.remove_vertex(*remove);
            TraceStep {
                rule: Rule::SubsetVertex,
                labels: g.vertices[*remove].labels.clone(),
                vertices: vec![*remove, *keep],
            }
        }
        Rewrite::Merge { keep, remove } => {
            let d = g.dim(keep).unwrap_or(1) * g.dim(remove).unwrap_or(1);
            h.remove_label(remove);
            h.set_dim(keep, d);
            TraceStep {
                rule: Rule::ParallelEdge,
                labels: vec![keep.clone(), remove.clone()],
                vertices: g.hyperedges()[keep].iter().copied().collect(),
            }
        }
    };
    (h, step)
}

fn first_of(g: &EinconvGraph, instances: Vec<Rewrite>) -> EinconvGraph {
    match instances.first() {
        Some(rw) => apply_rewrite(g, rw).0,
        None => g.clone(),
    }
}

/// Applies the first rank-1 rewrite, if any.
pub fn reduce_rank1(g: &EinconvGraph) -> EinconvGraph {
    first_of(g, rank1_instances(g))
}

/// Removes the first parameter vertex contained in another of its stage.
pub fn reduce_subset_vertex(g: &EinconvGraph) -> EinconvGraph {
    first_of(g, subset_instances(g))
}

/// Merges the first pair of parallel rank labels.
pub fn merge_parallel_edges(g: &EinconvGraph) -> EinconvGraph {
    first_of(g, parallel_instances(g))
}

/// Applies rewrites in the fixed order rank1, parallel, subset until none applies.
pub fn reduce(g: &EinconvGraph) -> ReductionTrace {
    let mut cur = g.clone();
    let mut steps = Vec::new();
    loop {
        let next = rank1_instances(&cur)
            .into_iter()
            .next()
            .or_else(|| parallel_instances(&cur).into_iter().next())
            .or_else(|| subset_instances(&cur).into_iter().next());
        match next {
            Some(rw) => {
                let (h, step) = apply_rewrite(&cur, &rw);
                steps.push(step);
                cur = h;
            }
            None => break,
        }
    }
    ReductionTrace { steps, result: cur }
}

/// Termination measure: (|V|, |I|, total incidences), lexicographic.
pub fn measure(g: &EinconvGraph) -> (usize, usize, usize) {
    (
        g.vertices.len(),
        g.inner.len(),
        g.vertices.iter().map(|v| v.labels.len()).sum(),
    )
}

pub fn is_nonredundant(g: &EinconvGraph) -> bool {
    validate(g).is_ok() && applicable_rewrites(g).is_empty()
}

/// Canonical forms of every graph reachable by a maximal rewrite sequence.
pub fn normal_forms(g: &EinconvGraph) -> BTreeSet<String> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = BTreeSet::new();
    let mut stack = vec![g.clone()];
    while let Some(cur) = stack.pop() {
        if !seen.insert(canonical_form(&cur)) {
            continue;
        }
        let rws = applicable_rewrites(&cur);
        if rws.is_empty() {
            out.insert(canonical_form(&cur));
        }
        for rw in rws {
            stack.push(apply_rewrite(&cur, &rw).0);
        }
    }
    out
}

/// Number of integer partitions of `n`.
pub fn partition_count(n: u64) -> u64 {
    let n = n as usize;
    let mut p = vec![0u64; n + 1];
    p[0] = 1;
    for part in 1..=n {
        for m in part..=n {
            p[m] += p[m - part];
        }
    }
    p[n]
}

/// Partitions of `n` as nonincreasing part lists, largest first part first.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 0 {
            out.push(cur.clone());
            return;
        }
        for p in (1..=max.min(n)).rev() {
            cur.push(p);
            go(n - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, n, &mut Vec::new(), &mut out);
    out
}

/// Multisets of odd filter sizes whose chain composes to `filter_dim`.
pub fn filter_factorizations(filter_dim: usize) -> Result<Vec<Vec<usize>>> {
    if filter_dim % 2 == 0 {
        return Err(EinconvError::EvenFilter(filter_dim));
    }
    if filter_dim == 1 {
        return Ok(vec![vec![1]]);
    }
    Ok(partitions((filter_dim - 1) / 2)
        .into_iter()
        .map(|p| p.into_iter().map(|x| 2 * x + 1).collect())
        .collect())
}
