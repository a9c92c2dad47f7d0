//! Exhaustive enumeration of nonredundant graphs for a filter size and a
//! rank-label budget.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EinconvError, Result};
use crate::graph::{canonical_form, ConvGeometry, EinconvGraph, GraphBuilder, VertexKind, CHANNEL_IN, CHANNEL_OUT};
use crate::reduction::{filter_factorizations, is_nonredundant, reduce};

pub const DEFAULT_CAP: u64 = 10_000_000;

/// Interpretation switches for the candidate rules. The default is the
/// main rule set; the others feed the variant report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct RuleVariant {
    /// Also drop parameter vertices contained in the input or a dummy.
    pub fixed_subset: bool,
    /// Require the whole network to be connected through inner labels.
    pub require_connected: bool,
    /// Count the input channel against the rank budget (one fewer rank label).
    pub budget_includes_c: bool,
    /// Identify graphs that differ by a permutation of spatial axes.
    pub spatial_symmetry: bool,
    /// Identify graphs that differ by swapping c and c' on parameter vertices.
    pub channel_symmetry: bool,
}

impl Default for RuleVariant {
    fn default() -> Self {
        RuleVariant {
            fixed_subset: false,
            require_connected: true,
            budget_includes_c: false,
            spatial_symmetry: false,
            channel_symmetry: false,
        }
    }
}

impl RuleVariant {
    /// All 32 combinations of the switches.
    pub fn all() -> Vec<RuleVariant> {
        (0..32u32)
            .map(|m| RuleVariant {
                fixed_subset: m & 1 != 0,
                require_connected: m & 2 != 0,
                budget_includes_c: m & 4 != 0,
                spatial_symmetry: m & 8 != 0,
                channel_symmetry: m & 16 != 0,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnumerationConfig {
    pub n_axes: usize,
    pub filter: Vec<usize>,
    pub max_rank_indices: usize,
    pub rank_dim: usize,
    /// Spatial extent per axis of the geometry attached to every output graph.
    pub spatial: usize,
    pub channels_in: usize,
    pub channels_out: usize,
    pub cap: u64,
    pub variant: RuleVariant,
}

impl EnumerationConfig {
    pub fn new(n_axes: usize, filter: usize, max_rank_indices: usize, rank_dim: usize) -> Self {
        EnumerationConfig {
            n_axes,
            filter: vec![filter; n_axes],
            max_rank_indices,
            rank_dim,
            spatial: if n_axes == 3 { 8 } else { 16 },
            channels_in: 16,
            channels_out: 16,
            cap: DEFAULT_CAP,
            variant: RuleVariant::default(),
        }
    }

    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry::same(&vec![self.spatial; self.n_axes], &self.filter, self.channels_in, self.channels_out)
    }
}

/// Calls `visit` for every antichain of nonempty subsets of an `n`-element
/// universe whose union is the whole universe and that `allow` accepts
/// member by member. Returns the number of search nodes visited.
fn covering_antichains(
    n: usize,
    first: Option<u64>,
    allow: &(dyn Fn(&[u64], u64) -> bool + Sync),
    visit: &mut dyn FnMut(&[u64]),
    budget: &AtomicU64,
    cap: u64,
) -> Result<()> {
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let subsets: Vec<u64> = (1..=full).collect();
    fn rec(
        start: usize,
        subsets: &[u64],
        chosen: &mut Vec<u64>,
        union: u64,
        full: u64,
        allow: &(dyn Fn(&[u64], u64) -> bool + Sync),
        visit: &mut dyn FnMut(&[u64]),
        budget: &AtomicU64,
        cap: u64,
    ) -> Result<()> {
        if union == full {
            visit(chosen);
        }
        for s in start..subsets.len() {
            let v = subsets[s];
            if chosen.iter().any(|&w| v & w == v || v & w == w) || !allow(chosen, v) {
                continue;
            }
            let seen = budget.fetch_add(1, Ordering::Relaxed) + 1;
            if seen > cap {
                return Err(EinconvError::Overflow { cap, partial: seen });
            }
            chosen.push(v);
            rec(s + 1, subsets, chosen, union | v, full, allow, visit, budget, cap)?;
            chosen.pop();
        }
        Ok(())
    }
    let mut chosen = Vec::new();
    match first {
        Some(v) => {
            if !allow(&[], v) {
                return Ok(());
            }
            let seen = budget.fetch_add(1, Ordering::Relaxed) + 1;
            if seen > cap {
                return Err(EinconvError::Overflow { cap, partial: seen });
            }
            chosen.push(v);
            let idx = subsets.iter().position(|&s| s == v).unwrap_or(subsets.len());
            rec(idx + 1, &subsets, &mut chosen, v, full, allow, visit, budget, cap)
        }
        None => rec(0, &subsets, &mut chosen, 0, full, allow, visit, budget, cap),
    }
}

/// Antichains over `n_labels` labels that use every label, as bitmasks.
pub fn enumerate_vertex_sets(n_labels: usize, cap: u64) -> Result<Vec<Vec<u64>>> {
    if n_labels >= 20 {
        return Err(EinconvError::Overflow { cap, partial: 0 });
    }
    let mut out = Vec::new();
    let budget = AtomicU64::new(0);
    covering_antichains(n_labels, None, &|_, _| true, &mut |c| out.push(c.to_vec()), &budget, cap)?;
    Ok(out)
}

/// Label universe for one filter factorization and rank count: filter
/// labels (dim > 1), c, c', then rank labels r1..rk.
struct Universe {
    names: Vec<String>,
    filter_mask: u64,
    rank_bits: Vec<u64>,
    c_bit: u64,
    filter_bits: Vec<u64>,
}

impl Universe {
    fn new(filter_labels: &[Vec<String>], factors: &[Vec<usize>], k: usize) -> Self {
        let mut names = Vec::new();
        for (axis, fl) in filter_labels.iter().enumerate() {
            for (m, l) in fl.iter().enumerate() {
                if factors[axis][m] > 1 {
                    names.push(l.clone());
                }
            }
        }
        let n_filter = names.len();
        names.push(CHANNEL_IN.to_string());
        names.push(CHANNEL_OUT.to_string());
        for r in 0..k {
            names.push(format!("r{}", r + 1));
        }
        let filter_bits: Vec<u64> = (0..n_filter).map(|b| 1u64 << b).collect();
        Universe {
            filter_mask: filter_bits.iter().fold(0, |a, b| a | b),
            rank_bits: (0..k).map(|r| 1u64 << (n_filter + 2 + r)).collect(),
            c_bit: 1u64 << n_filter,
            filter_bits,
            names,
        }
    }

    fn labels_of(&self, mask: u64) -> Vec<String> {
        (0..self.names.len())
            .filter(|&b| mask & (1 << b) != 0)
            .map(|b| self.names[b].clone())
            .collect()
    }
}

fn rank_rules_ok(u: &Universe, family: &[u64]) -> bool {
    let mut edges: Vec<u64> = Vec::new();
    for &rb in &u.rank_bits {
        let mut e = 0u64;
        for (k, &v) in family.iter().enumerate() {
            if v & rb != 0 {
                e |= 1 << k;
            }
        }
        if e.count_ones() < 2 || edges.contains(&e) {
            return false;
        }
        edges.push(e);
    }
    true
}

/// Canonical key of `g`, minimised over the symmetries the variant allows.
pub fn dedup_key(g: &EinconvGraph, variant: &RuleVariant) -> String {
    let n = g.n_axes();
    let filters = g.filter_labels();
    let mut axis_perms: Vec<Vec<usize>> = vec![(0..n).collect()];
    if variant.spatial_symmetry {
        axis_perms = permutations(n);
    }
    let mut best: Option<String> = None;
    for perm in &axis_perms {
        // permuting axes only makes sense between equal filter chains
        let chain_ok = (0..n).all(|a| {
            let dims = |x: usize| filters[x].iter().map(|l| g.dim(l)).collect::<Vec<_>>();
            dims(a) == dims(perm[a])
        });
        if !chain_ok {
            continue;
        }
        for swap in [false, true] {
            if swap && !variant.channel_symmetry {
                continue;
            }
            let mut h = g.clone();
            for v in h.vertices.iter_mut().filter(|v| v.kind == VertexKind::Parameter) {
                for l in v.labels.iter_mut() {
                    let mut renamed = None;
                    for a in 0..n {
                        if let Some(m) = filters[a].iter().position(|x| x == l) {
                            renamed = Some(filters[perm[a]][m].clone());
                        }
                    }
                    if swap {
                        if l == CHANNEL_IN {
                            renamed = Some(CHANNEL_OUT.to_string());
                        } else if l == CHANNEL_OUT {
                            renamed = Some(CHANNEL_IN.to_string());
                        }
                    }
                    if let Some(r) = renamed {
                        *l = r;
                    }
                }
            }
            if swap {
                let (ci, co) = (g.dim(CHANNEL_IN), g.dim(CHANNEL_OUT));
                h.set_dim(CHANNEL_IN, co.unwrap_or(1));
                h.set_dim(CHANNEL_OUT, ci.unwrap_or(1));
            }
            let f = canonical_form(&h);
            if best.as_ref().map_or(true, |b| f < *b) {
                best = Some(f);
            }
        }
    }
    best.unwrap_or_else(|| canonical_form(g))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// All nonredundant graphs for the configuration, sorted by canonical form.
pub fn enumerate_graphs(cfg: &EnumerationConfig) -> Result<Vec<EinconvGraph>> {
    if cfg.n_axes == 0 || cfg.n_axes > 3 || cfg.filter.len() != cfg.n_axes {
        return Err(EinconvError::Geometry("enumeration supports 1 to 3 axes".into()));
    }
    if let Some(&f) = cfg.filter.iter().find(|f| *f % 2 == 0) {
        return Err(EinconvError::EvenFilter(f));
    }
    let geom = cfg.geometry();
    geom.check()?;
    let per_axis: Vec<Vec<Vec<usize>>> = cfg
        .filter
        .iter()
        .map(|&f| filter_factorizations(f))
        .collect::<Result<_>>()?;
    let mut combos: Vec<Vec<Vec<usize>>> = vec![vec![]];
    for options in &per_axis {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                options.iter().map(move |o| {
                    let mut c = c.clone();
                    c.push(o.clone());
                    c
                })
            })
            .collect();
    }
    let max_k = if cfg.variant.budget_includes_c {
        cfg.max_rank_indices.saturating_sub(1)
    } else {
        cfg.max_rank_indices
    };
    let budget = AtomicU64::new(0);
    let mut found: BTreeMap<String, EinconvGraph> = BTreeMap::new();
    for factors in &combos {
        let builder = GraphBuilder::new(&geom, factors)?;
        for k in 0..=max_k {
            let u = Universe::new(builder.filter_labels(), factors, k);
            let n = u.names.len();
            if n > 20 {
                return Err(EinconvError::Overflow {
                    cap: cfg.cap,
                    partial: budget.load(Ordering::Relaxed),
                });
            }
            let fixed_subset = cfg.variant.fixed_subset;
            let allow = |chosen: &[u64], v: u64| -> bool {
                if v & u.filter_mask != 0 && chosen.iter().any(|&w| w & v & u.filter_mask != 0) {
                    return false;
                }
                if fixed_subset && (v == u.c_bit || u.filter_bits.contains(&v)) {
                    return false;
                }
                true
            };
            let firsts: Vec<u64> = (1..(1u64 << n)).collect();
            let parts: Vec<Result<Vec<(String, EinconvGraph)>>> = firsts
                .par_iter()
                .map(|&first| {
                    let mut local = Vec::new();
                    let mut families = Vec::new();
                    covering_antichains(n, Some(first), &allow, &mut |c| families.push(c.to_vec()), &budget, cfg.cap)?;
                    for fam in families {
                        if !rank_rules_ok(&u, &fam) {
                            continue;
                        }
                        let mut b = builder.clone();
                        for r in 0..k {
                            b.add_rank(&format!("r{}", r + 1), cfg.rank_dim);
                        }
                        for &v in &fam {
                            b.add_param_owned(u.labels_of(v));
                        }
                        let g = b.build();
                        if cfg.variant.require_connected && !g.is_connected() {
                            continue;
                        }
                        let g = reduce(&g).result;
                        if !is_nonredundant(&g) {
                            continue;
                        }
                        local.push((dedup_key(&g, &cfg.variant), g));
                    }
                    Ok(local)
                })
                .collect();
            for part in parts {
                for (key, g) in part? {
                    found.entry(key).or_insert(g);
                }
            }
        }
    }
    Ok(found.into_values().collect())
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SummaryRow {
    pub n_vertices: usize,
    pub n_rank_indices: usize,
    pub params: u64,
    pub count: usize,
}

/// Counts grouped by (parameter vertices, rank labels, parameter count).
pub fn count_summary(graphs: &[EinconvGraph]) -> Vec<SummaryRow> {
    let mut m: BTreeMap<(usize, usize, u64), usize> = BTreeMap::new();
    for g in graphs {
        let key = (g.parameter_indices().len(), g.rank_labels().len(), g.param_count());
        *m.entry(key).or_default() += 1;
    }
    m.into_iter()
        .map(|((n_vertices, n_rank_indices, params), count)| SummaryRow {
            n_vertices,
            n_rank_indices,
            params,
            count,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantRow {
    pub variant: RuleVariant,
    pub count_2d: usize,
    pub count_3d: usize,
}

/// Counts for the 2D (3x3, two rank labels) and 3D (3x3x3, one rank label)
/// settings under every rule variant, with the per-budget breakdown implied
/// by monotonicity left to the caller.
pub fn variant_report(rank_dim: usize) -> Result<Vec<VariantRow>> {
    let mut rows = Vec::new();
    for variant in RuleVariant::all() {
        let mut c2 = EnumerationConfig::new(2, 3, 2, rank_dim);
        c2.variant = variant;
        let mut c3 = EnumerationConfig::new(3, 3, 1, rank_dim);
        c3.variant = variant;
        rows.push(VariantRow {
            variant,
            count_2d: enumerate_graphs(&c2)?.len(),
            count_3d: enumerate_graphs(&c3)?.len(),
        });
    }
    Ok(rows)
}

/// Distinct canonical forms in a collection.
pub fn distinct_forms(graphs: &[EinconvGraph]) -> BTreeSet<String> {
    graphs.iter().map(canonical_form).collect()
}
