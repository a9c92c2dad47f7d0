use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EinconvError, Result};
use crate::graph::{make_named, ConvGeometry, EinconvGraph, NamedKind, BATCH, CHANNEL_IN, SPATIAL_IN};
use crate::layer::{init_params, read_tensor, write_tensor, LayerCache, LayerInstance};
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, IndexLabel};

/// How an Einconv block builds its graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Named {
        kind: NamedKind,
        filter: usize,
        #[serde(default)]
        ranks: BTreeMap<String, usize>,
    },
    /// Structure taken from a graph; spatial and channel dims are refitted,
    /// filter sizes and rank dims kept.
    Graph(EinconvGraph),
}

impl LayerSpec {
    pub fn named(kind: NamedKind, filter: usize, ranks: &[(&str, usize)]) -> Self {
        LayerSpec::Named {
            kind,
            filter,
            ranks: ranks.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn graph_at(&self, spatial: &[usize], c_in: usize, c_out: usize) -> Result<EinconvGraph> {
        match self {
            LayerSpec::Named { kind, filter, ranks } => {
                let geom = ConvGeometry::same(spatial, &vec![*filter; spatial.len()], c_in, c_out);
                make_named(*kind, &geom, ranks)
            }
            LayerSpec::Graph(g) => {
                let geom = ConvGeometry::same(spatial, &g.geometry.filter, c_in, c_out);
                g.with_geometry(&geom)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Einconv { layer: LayerSpec, channels: usize },
    MaxPool(usize),
    GlobalAvgPool,
    Fc(usize),
    Relu,
    Softmax,
}

/// Per-sample activation shape between blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    Spatial { extents: Vec<usize>, channels: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match self {
            Shape::Spatial { extents, channels } => extents.iter().product::<usize>() * channels,
            Shape::Flat(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dims(&self, batch: usize) -> Vec<usize> {
        let mut d = vec![batch];
        match self {
            Shape::Spatial { extents, channels } => {
                d.extend(extents);
                d.push(*channels);
            }
            Shape::Flat(n) => d.push(*n),
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Spatial extents then channels of one input sample.
    pub input: Vec<usize>,
    pub blocks: Vec<Block>,
}

impl NetworkSpec {
    /// Shapes before each block and after the last one.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input.len() < 2 {
            return Err(EinconvError::Network("input needs spatial extents and channels".into()));
        }
        let n = self.input.len() - 1;
        let mut cur = Shape::Spatial {
            extents: self.input[..n].to_vec(),
            channels: self.input[n],
        };
        let mut out = vec![cur.clone()];
        for (k, b) in self.blocks.iter().enumerate() {
            cur = match (b, &cur) {
                (Block::Einconv { channels, .. }, Shape::Spatial { extents, .. }) => Shape::Spatial {
                    extents: extents.clone(),
                    channels: *channels,
                },
                (Block::MaxPool(f), Shape::Spatial { extents, channels }) => {
                    if *f == 0 || extents.iter().any(|e| e < f) {
                        return Err(EinconvError::Network(format!("block {k}: pool factor {f} too large")));
                    }
                    Shape::Spatial {
                        extents: extents.iter().map(|e| e / f).collect(),
                        channels: *channels,
                    }
                }
                (Block::GlobalAvgPool, Shape::Spatial { channels, .. }) => Shape::Flat(*channels),
                (Block::Fc(units), _) => Shape::Flat(*units),
                (Block::Relu, s) => s.clone(),
                (Block::Softmax, Shape::Flat(n)) if k + 1 == self.blocks.len() => Shape::Flat(*n),
                (b, s) => return Err(EinconvError::Network(format!("block {k} ({b:?}) cannot follow {s:?}"))),
            };
            out.push(cur.clone());
        }
        if self.blocks.last() != Some(&Block::Softmax) {
            return Err(EinconvError::Network("final block must be softmax".into()));
        }
        Ok(out)
    }

    pub fn classes(&self) -> Result<usize> {
        Ok(self.shapes()?.last().expect("non-empty").len())
    }

    /// Einconv(8)-MaxPool(2)-Einconv(16)-MaxPool(2)-FC(10)-Softmax on 28x28x1.
    pub fn lenet_mini(layer: LayerSpec) -> Self {
        NetworkSpec {
            input: vec![28, 28, 1],
            blocks: vec![
                Block::Einconv {
                    layer: layer.clone(),
                    channels: 8,
                },
                Block::MaxPool(2),
                Block::Einconv { layer, channels: 16 },
                Block::MaxPool(2),
                Block::Fc(10),
                Block::Softmax,
            ],
        }
    }

    /// 1x1 Einconv(4)-GAP-FC(2)-Softmax on 8x8x1, for [`separable_synthetic`].
    pub fn separable_pointwise() -> Self {
        NetworkSpec {
            input: vec![8, 8, 1],
            blocks: vec![
                Block::Einconv {
                    layer: LayerSpec::named(NamedKind::Standard, 1, &[]),
                    channels: 4,
                },
                Block::GlobalAvgPool,
                Block::Fc(2),
                Block::Softmax,
            ],
        }
    }

    /// Einconv graphs of every Einconv block, at their network geometry.
    pub fn einconv_graphs(&self) -> Result<Vec<EinconvGraph>> {
        let shapes = self.shapes()?;
        let mut out = Vec::new();
        for (b, s) in self.blocks.iter().zip(&shapes) {
            if let (Block::Einconv { layer, channels }, Shape::Spatial { extents, channels: c }) = (b, s) {
                out.push(layer.graph_at(extents, *c, *channels)?);
            }
        }
        Ok(out)
    }
}

/// Two-class 8x8 images: class 1 brighter on average than class 0, with a
/// margin, so a pointwise map followed by averaging separates them.
pub fn separable_synthetic(n: usize, seed: u64) -> super::Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n {
        let class = k % 2;
        let base = if class == 1 { 0.65 } else { 0.35 };
        for _ in 0..64 {
            images.push((base + rng.gen_range(-0.3..0.3f64)).clamp(0.0, 1.0));
        }
        labels.push(class);
    }
    super::Dataset::new(images, labels, vec![8, 8, 1], 2).expect("consistent")
}

#[derive(Clone, Debug)]
pub enum BlockParams<T: Scalar> {
    None,
    Einconv(LayerInstance<T>),
    /// `weight` is `(in, out)`.
    Fc { weight: DenseTensor<T>, bias: DenseTensor<T> },
}

/// A network with parameters.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    pub spec: NetworkSpec,
    pub blocks: Vec<BlockParams<T>>,
    shapes: Vec<Shape>,
}

/// Per-sample batch of activations, row-major with the batch axis first.
#[derive(Clone, Debug)]
pub(crate) struct Act<T> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

enum Cache<T: Scalar> {
    None,
    Einconv(LayerCache<T>),
    MaxPool { argmax: Vec<usize>, in_len: usize },
    Gap { in_dims: Vec<usize> },
    Fc { input: Vec<T> },
    Relu { mask: Vec<bool> },
}

pub(crate) struct Trace<T: Scalar> {
    caches: Vec<Cache<T>>,
    pub probs: Act<T>,
}

fn spatial_labels(dims: &[usize]) -> Vec<IndexLabel> {
    let n_sp = dims.len() - 2;
    let mut l = vec![IndexLabel::new(BATCH, dims[0])];
    for a in 0..n_sp {
        l.push(IndexLabel::new(SPATIAL_IN[a], dims[a + 1]));
    }
    l.push(IndexLabel::new(CHANNEL_IN, dims[n_sp + 1]));
    l
}

fn step(idx: &mut [usize], dims: &[usize]) -> bool {
    for k in (0..dims.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

impl<T: Scalar> Network<T> {
    /// Fresh parameters: Einconv blocks via [`init_params`] with seeds derived
    /// from `seed` and the block index; FC weights uniform ±sqrt(6/in), zero bias.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for (k, b) in spec.blocks.iter().enumerate() {
            let p = match (b, &shapes[k]) {
                (Block::Einconv { layer, channels }, Shape::Spatial { extents, channels: c }) => {
                    let g = layer.graph_at(extents, *c, *channels)?;
                    let geom = g.geometry.clone();
                    BlockParams::Einconv(init_params(&g, &geom, rng.gen())?)
                }
                (Block::Fc(units), s) => {
                    let fan_in = s.len();
                    let b = (6.0 / fan_in as f64).sqrt();
                    let weight = DenseTensor::from_fn(
                        vec![IndexLabel::new("in", fan_in), IndexLabel::new("out", *units)],
                        |_| T::of(rng.gen_range(-b..=b)),
                    );
                    let bias = DenseTensor::zeros(vec![IndexLabel::new("out", *units)]);
                    BlockParams::Fc { weight, bias }
                }
                _ => BlockParams::None,
            };
            blocks.push(p);
        }
        Ok(Network {
            spec: spec.clone(),
            blocks,
            shapes,
        })
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().expect("non-empty").len()
    }

    pub fn input_shape(&self) -> &Shape {
        &self.shapes[0]
    }

    /// Every trainable tensor, in block order.
    pub fn params(&self) -> Vec<&DenseTensor<T>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            match b {
                BlockParams::Einconv(l) => out.extend(l.params.values()),
                BlockParams::Fc { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                BlockParams::None => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseTensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            match b {
                BlockParams::Einconv(l) => out.extend(l.params.values_mut()),
                BlockParams::Fc { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                BlockParams::None => {}
            }
        }
        out
    }

    /// Writes `network.json` (the spec) and `param_<k>.bin` per tensor of
    /// [`Network::params`].
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("network.json"), serde_json::to_string_pretty(&self.spec)?)?;
        for (k, t) in self.params().into_iter().enumerate() {
            write_tensor(&dir.join(format!("param_{k}.bin")), t)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let spec: NetworkSpec = serde_json::from_str(&fs::read_to_string(dir.join("network.json"))?)?;
        let mut net = Network::init(&spec, 0)?;
        for (k, t) in net.params_mut().into_iter().enumerate() {
            *t = read_tensor(&dir.join(format!("param_{k}.bin")), t.labels().to_vec())?;
        }
        Ok(net)
    }

    pub fn param_count(&self) -> u64 {
        self.params().iter().map(|t| t.len() as u64).sum()
    }

    /// Parameters of the Einconv blocks only.
    pub fn conv_param_count(&self) -> u64 {
        self.blocks
            .iter()
            .map(|b| match b {
                BlockParams::Einconv(l) => l.param_count(),
                _ => 0,
            })
            .sum()
    }

    pub(crate) fn forward_trace(&self, x: &DenseTensor<T>) -> Result<Trace<T>> {
        let batch = x.dim_of(BATCH).ok_or_else(|| EinconvError::UnknownLabel(BATCH.into()))?;
        let want = self.shapes[0].dims(batch);
        let names: Vec<IndexLabel> = spatial_labels(&want);
        let order: Vec<&str> = names.iter().map(|l| l.name.as_str()).collect();
        let x = x.permute(&order)?;
        if x.dims() != want {
            return Err(EinconvError::Network(format!("input dims {:?}, expected {want:?}", x.dims())));
        }
        let mut cur = Act {
            dims: want,
            data: x.into_data(),
        };
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (k, block) in self.spec.blocks.iter().enumerate() {
            let (next, cache) = self.forward_block(k, block, cur)?;
            cur = next;
            caches.push(cache);
        }
        Ok(Trace { caches, probs: cur })
    }

    fn forward_block(&self, k: usize, block: &Block, cur: Act<T>) -> Result<(Act<T>, Cache<T>)> {
        let batch = cur.dims[0];
        Ok(match block {
            Block::Einconv { .. } => {
                let BlockParams::Einconv(layer) = &self.blocks[k] else { unreachable!() };
                let x = DenseTensor::new(spatial_labels(&cur.dims), cur.data)?;
                let (y, cache) = layer.forward_cached(&x)?;
                (
                    Act {
                        dims: y.dims(),
                        data: y.into_data(),
                    },
                    Cache::Einconv(cache),
                )
            }
            Block::MaxPool(f) => {
                let f = *f;
                let n_sp = cur.dims.len() - 2;
                let mut od = cur.dims.clone();
                for a in 0..n_sp {
                    od[a + 1] /= f;
                }
                let ist = strides(&cur.dims);
                let total: usize = od.iter().product();
                let mut data = Vec::with_capacity(total);
                let mut argmax = Vec::with_capacity(total);
                let mut o = vec![0usize; od.len()];
                let win = vec![f; n_sp];
                for _ in 0..total {
                    let mut w = vec![0usize; n_sp];
                    let mut best = 0usize;
                    let mut best_v = T::neg_infinity();
                    loop {
                        let mut off = o[0] * ist[0] + o[n_sp + 1];
                        for a in 0..n_sp {
                            off += (o[a + 1] * f + w[a]) * ist[a + 1];
                        }
                        if cur.data[off] > best_v {
                            best_v = cur.data[off];
                            best = off;
                        }
                        if !step(&mut w, &win) {
                            break;
                        }
                    }
                    data.push(best_v);
                    argmax.push(best);
                    step(&mut o, &od);
                }
                (
                    Act { dims: od, data },
                    Cache::MaxPool {
                        argmax,
                        in_len: cur.data.len(),
                    },
                )
            }
            Block::GlobalAvgPool => {
                let c = *cur.dims.last().expect("rank");
                let per = cur.data.len() / batch / c;
                let scale = T::one() / T::of(per as f64);
                let mut data = vec![T::zero(); batch * c];
                for (i, v) in cur.data.iter().enumerate() {
                    let b = i / (per * c);
                    data[b * c + i % c] += *v * scale;
                }
                (
                    Act {
                        dims: vec![batch, c],
                        data,
                    },
                    Cache::Gap { in_dims: cur.dims },
                )
            }
            Block::Fc(units) => {
                let BlockParams::Fc { weight, bias } = &self.blocks[k] else { unreachable!() };
                let fan_in = cur.data.len() / batch;
                let w = weight.data();
                let mut data = Vec::with_capacity(batch * units);
                for b in 0..batch {
                    let row = &cur.data[b * fan_in..(b + 1) * fan_in];
                    let mut acc: Vec<T> = bias.data().to_vec();
                    for (i, &x) in row.iter().enumerate() {
                        if x != T::zero() {
                            for (a, &wv) in acc.iter_mut().zip(&w[i * units..(i + 1) * units]) {
                                *a += x * wv;
                            }
                        }
                    }
                    data.extend(acc);
                }
                (
                    Act {
                        dims: vec![batch, *units],
                        data,
                    },
                    Cache::Fc { input: cur.data },
                )
            }
            Block::Relu => {
                let mask: Vec<bool> = cur.data.iter().map(|&v| v > T::zero()).collect();
                let data = cur.data.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
                (Act { dims: cur.dims, data }, Cache::Relu { mask })
            }
            Block::Softmax => {
                let c = cur.dims[1];
                let mut data = cur.data;
                for row in data.chunks_mut(c) {
                    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let mut z = T::zero();
                    for v in row.iter_mut() {
                        *v = (*v - m).exp();
                        z += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= z;
                    }
                }
                (Act { dims: cur.dims, data }, Cache::None)
            }
        })
    }

    /// Class probabilities `(n, classes)` for an input `(n, h, w[, d], c)`.
    pub fn forward(&self, x: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        let p = self.forward_trace(x)?.probs;
        DenseTensor::new(
            vec![IndexLabel::new(BATCH, p.dims[0]), IndexLabel::new("class", p.dims[1])],
            p.data,
        )
    }

    pub fn predict(&self, x: &DenseTensor<T>) -> Result<Vec<usize>> {
        let p = self.forward_trace(x)?.probs;
        Ok(p.data.chunks(p.dims[1]).map(argmax).collect())
    }

    /// Mean cross-entropy of `labels` under the forward pass, and its
    /// gradient for every tensor of [`Network::params`].
    pub fn loss_and_grads(&self, x: &DenseTensor<T>, labels: &[usize]) -> Result<(f64, Vec<DenseTensor<T>>, Vec<usize>)> {
        let trace = self.forward_trace(x)?;
        let batch = trace.probs.dims[0];
        let classes = trace.probs.dims[1];
        if labels.len() != batch {
            return Err(EinconvError::Network(format!("{batch} samples but {} labels", labels.len())));
        }
        let mut loss = 0.0;
        let inv = T::one() / T::of(batch as f64);
        let mut g = trace.probs.data.clone();
        for (b, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(EinconvError::Network(format!("label {y} outside 0..{classes}")));
            }
            let p = trace.probs.data[b * classes + y].to_f64_lossy();
            // NaN must survive to the divergence check; f64::max would drop it
            loss -= if p.is_nan() { p } else { p.max(f64::MIN_POSITIVE).ln() };
            g[b * classes + y] -= T::one();
        }
        for v in g.iter_mut() {
            *v *= inv;
        }
        let preds = trace.probs.data.chunks(classes).map(argmax).collect();
        let grads = self.backward(trace, g)?;
        Ok((loss / batch as f64, grads, preds))
    }

    /// `g` is the gradient at the softmax input.
    fn backward(&self, trace: Trace<T>, g: Vec<T>) -> Result<Vec<DenseTensor<T>>> {
        let n_blocks = self.spec.blocks.len();
        let mut per_block: Vec<Vec<DenseTensor<T>>> = vec![Vec::new(); n_blocks];
        let mut g = g;
        let mut caches = trace.caches;
        for k in (0..n_blocks).rev() {
            let cache = std::mem::replace(&mut caches[k], Cache::None);
            let need_input = self.blocks[..k].iter().any(|b| !matches!(b, BlockParams::None));
            let in_dims = self.shapes[k].dims(trace.probs.dims[0]);
            match (&self.spec.blocks[k], cache) {
                (Block::Softmax, _) => {}
                (Block::Einconv { .. }, Cache::Einconv(cache)) => {
                    let BlockParams::Einconv(layer) = &self.blocks[k] else { unreachable!() };
                    let up = DenseTensor::new(layer.output_labels(in_dims[0]), g)?;
                    let grads = layer.backward(&cache, &up, need_input)?;
                    per_block[k] = grads.params.into_values().collect();
                    g = match grads.input {
                        Some(gx) => {
                            let labels = spatial_labels(&in_dims);
                            let order: Vec<&str> = labels.iter().map(|l| l.name.as_str()).collect();
                            gx.permute(&order)?.into_data()
                        }
                        None => Vec::new(),
                    };
                }
                (Block::MaxPool(_), Cache::MaxPool { argmax, in_len }) => {
                    let mut gi = vec![T::zero(); in_len];
                    for (&src, &v) in argmax.iter().zip(&g) {
                        gi[src] += v;
                    }
                    g = gi;
                }
                (Block::GlobalAvgPool, Cache::Gap { in_dims }) => {
                    let c = *in_dims.last().expect("rank");
                    let total: usize = in_dims.iter().product();
                    let per = total / in_dims[0] / c;
                    let scale = T::one() / T::of(per as f64);
                    g = (0..total).map(|i| g[(i / (per * c)) * c + i % c] * scale).collect();
                }
                (Block::Fc(units), Cache::Fc { input }) => {
                    let BlockParams::Fc { weight, bias } = &self.blocks[k] else { unreachable!() };
                    let units = *units;
                    let batch = in_dims[0];
                    let fan_in = input.len() / batch;
                    let mut gw = vec![T::zero(); fan_in * units];
                    let mut gb = vec![T::zero(); units];
                    let mut gi = if need_input { vec![T::zero(); input.len()] } else { Vec::new() };
                    let w = weight.data();
                    for b in 0..batch {
                        let gy = &g[b * units..(b + 1) * units];
                        for (a, &v) in gb.iter_mut().zip(gy) {
                            *a += v;
                        }
                        for i in 0..fan_in {
                            let x = input[b * fan_in + i];
                            let wrow = &w[i * units..(i + 1) * units];
                            let grow = &mut gw[i * units..(i + 1) * units];
                            let mut acc = T::zero();
                            for u in 0..units {
                                grow[u] += x * gy[u];
                                acc += wrow[u] * gy[u];
                            }
                            if need_input {
                                gi[b * fan_in + i] = acc;
                            }
                        }
                    }
                    per_block[k] = vec![
                        DenseTensor::new(weight.labels().to_vec(), gw)?,
                        DenseTensor::new(bias.labels().to_vec(), gb)?,
                    ];
                    g = gi;
                }
                (Block::Relu, Cache::Relu { mask }) => {
                    for (v, m) in g.iter_mut().zip(mask) {
                        if !m {
                            *v = T::zero();
                        }
                    }
                }
                _ => unreachable!("cache matches block"),
            }
            if !need_input {
                break;
            }
        }
        Ok(per_block.into_iter().flatten().collect())
    }
}

pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}
