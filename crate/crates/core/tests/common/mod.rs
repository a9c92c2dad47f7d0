#![allow(dead_code)]

pub mod als;

use std::collections::BTreeMap;

use einconv_core::tensor::{ContractionExpr, DenseTensor, IndexLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(labels: &[(&str, usize)], rng: &mut ChaCha8Rng) -> DenseTensor<f64> {
    let ls: Vec<IndexLabel> = labels.iter().map(|&(n, d)| IndexLabel::new(n, d)).collect();
    DenseTensor::from_fn(ls, |_| rng.gen_range(-1.0..1.0))
}

/// Full multi-sum over every label assignment; no planning, no pairing.
pub fn naive_einsum(expr: &ContractionExpr, tensors: &[&DenseTensor<f64>]) -> DenseTensor<f64> {
    let mut dims: BTreeMap<String, usize> = BTreeMap::new();
    for t in tensors {
        for l in t.labels() {
            dims.insert(l.name.clone(), l.dim);
        }
    }
    let names: Vec<String> = dims.keys().cloned().collect();
    let sizes: Vec<usize> = names.iter().map(|n| dims[n]).collect();
    let out_labels: Vec<IndexLabel> = expr
        .output()
        .iter()
        .map(|n| IndexLabel::new(n.clone(), dims[n]))
        .collect();
    let mut out = DenseTensor::zeros(out_labels);
    let total: usize = sizes.iter().product();
    let mut assign = vec![0usize; names.len()];
    let pos = |n: &str| names.iter().position(|x| x == n).unwrap();
    for _ in 0..total {
        let mut prod = 1.0;
        for t in tensors {
            let idx: Vec<usize> = t.names().iter().map(|n| assign[pos(n)]).collect();
            prod *= t.get(&idx);
        }
        let oidx: Vec<usize> = expr.output().iter().map(|n| assign[pos(n)]).collect();
        let cur = out.get(&oidx);
        out.set(&oidx, cur + prod);
        for k in (0..names.len()).rev() {
            assign[k] += 1;
            if assign[k] < sizes[k] {
                break;
            }
            assign[k] = 0;
        }
    }
    out
}

/// Sum the factored filter labels (i1, i2, ...) of an axis into one tap index.
pub fn compose_kernel(k: &DenseTensor<f64>, geom: &einconv_core::graph::ConvGeometry) -> DenseTensor<f64> {
    let n = geom.n_axes();
    let axes = ["i", "j", "k"];
    let mut out_labels: Vec<(&str, usize)> = (0..n).map(|a| (axes[a], geom.filter[a])).collect();
    out_labels.push(("c", geom.channels_in));
    out_labels.push(("c'", geom.channels_out));
    let mut out = DenseTensor::zeros(einconv_core::tensor::labels(&out_labels));
    let names = k.names().iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let dims = k.dims();
    let mut idx = vec![0usize; dims.len()];
    for flat in 0..k.len() {
        let mut target = vec![0usize; n + 2];
        for (p, name) in names.iter().enumerate() {
            match name.as_str() {
                "c" => target[n] = idx[p],
                "c'" => target[n + 1] = idx[p],
                other => {
                    let a = axes.iter().position(|x| other.starts_with(x)).unwrap();
                    target[a] += idx[p];
                }
            }
        }
        let cur = out.get(&target);
        out.set(&target, cur + k.data()[flat]);
        for p in (0..dims.len()).rev() {
            idx[p] += 1;
            if idx[p] < dims[p] {
                break;
            }
            idx[p] = 0;
        }
    }
    out
}

/// Max |a-b| / max(|a|,|b|,1e-300) across matching entries.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Random stage split of a graph: non-input vertices land in one of up to
/// `max_stages` stages (input stays in stage 0), random ReLU flags.
pub fn random_staging(g: &einconv_core::graph::EinconvGraph, max_stages: usize, rng: &mut ChaCha8Rng) -> einconv_core::graph::EinconvGraph {
    let mut g = g.clone();
    let x = g.input_index().unwrap();
    let s = rng.gen_range(1..=max_stages);
    let mut stages = vec![Vec::new(); s];
    for v in 0..g.vertices.len() {
        let k = if v == x { 0 } else { rng.gen_range(0..s) };
        stages[k].push(v);
    }
    stages.retain(|st| !st.is_empty());
    g.activations = (0..stages.len() - 1).map(|_| rng.gen_bool(0.5)).collect();
    g.stages = stages;
    g
}

/// Small random network: one or two Einconv blocks with staged graphs,
/// optional pooling and ReLU, then FC and softmax.
pub fn random_network(rng: &mut ChaCha8Rng) -> (einconv_core::train::NetworkSpec, usize) {
    use einconv_core::graph::{make_named, ConvGeometry, NamedKind};
    use einconv_core::train::{Block, LayerSpec, NetworkSpec};
    let h = rng.gen_range(3..=4);
    let w = rng.gen_range(3..=4);
    let c = rng.gen_range(1..=3);
    let mut blocks = Vec::new();
    let mut c_in = c;
    let n_conv = rng.gen_range(1..=2);
    for _ in 0..n_conv {
        let kind = NamedKind::ALL_2D[rng.gen_range(0..NamedKind::ALL_2D.len())];
        let kind = if kind == NamedKind::Factoring { NamedKind::LowRank } else { kind };
        let c_out = rng.gen_range(1..=3);
        let ranks: BTreeMap<String, usize> =
            [("A", 2), ("B", 2), ("Gamma", 3), ("R", 2)].iter().map(|&(k, v)| (k.to_string(), v)).collect();
        let g = make_named(kind, &ConvGeometry::same(&[h, w], &[3, 3], c_in, c_out), &ranks).unwrap();
        let g = random_staging(&g, 3, rng);
        blocks.push(Block::Einconv { layer: LayerSpec::Graph(g), channels: c_out });
        if rng.gen_bool(0.5) {
            blocks.push(Block::Relu);
        }
        c_in = c_out;
    }
    if rng.gen_bool(0.5) {
        blocks.push(Block::MaxPool(2));
    }
    if rng.gen_bool(0.3) {
        blocks.push(Block::GlobalAvgPool);
    }
    let classes = rng.gen_range(2..=4);
    blocks.push(Block::Fc(classes));
    blocks.push(Block::Softmax);
    (NetworkSpec { input: vec![h, w, c], blocks }, classes)
}

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||).
pub fn norm_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let den = na.max(nb);
    if den == 0.0 {
        0.0
    } else {
        d / den
    }
}

/// Central differences (step `eps`) of the mean cross-entropy for every
/// parameter entry of `net`.
pub fn fd_network_grads(
    net: &einconv_core::train::Network<f64>,
    x: &DenseTensor<f64>,
    labels: &[usize],
    eps: f64,
) -> Vec<Vec<f64>> {
    let loss = |n: &einconv_core::train::Network<f64>| -> f64 {
        let p = n.forward(x).unwrap();
        let c = p.dims()[1];
        -labels.iter().enumerate().map(|(b, &y)| p.data()[b * c + y].ln()).sum::<f64>() / labels.len() as f64
    };
    let sizes: Vec<usize> = net.params().iter().map(|t| t.len()).collect();
    let mut out = Vec::new();
    for (k, &len) in sizes.iter().enumerate() {
        let mut g = Vec::with_capacity(len);
        for j in 0..len {
            let mut plus = net.clone();
            plus.params_mut()[k].data_mut()[j] += eps;
            let mut minus = net.clone();
            minus.params_mut()[k].data_mut()[j] -= eps;
            g.push((loss(&plus) - loss(&minus)) / (2.0 * eps));
        }
        out.push(g);
    }
    out
}
