//! Alternating least squares over the parameter vertices of a graph: fits
//! the flattened kernel (filter and channel labels) to a target tensor.

use std::collections::BTreeMap;

use einconv_core::graph::{EinconvGraph, VertexKind, CHANNEL_IN, CHANNEL_OUT};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Filter labels of every axis, then c, then c', with dims.
pub fn kernel_labels(g: &EinconvGraph) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = g
        .filter_labels()
        .into_iter()
        .flatten()
        .map(|l| {
            let d = g.dim(&l).unwrap();
            (l, d)
        })
        .collect();
    out.push((CHANNEL_IN.into(), g.dim(CHANNEL_IN).unwrap()));
    out.push((CHANNEL_OUT.into(), g.dim(CHANNEL_OUT).unwrap()));
    out
}

/// Precomputed index maps for every assignment of the labels involved.
pub struct Layout {
    /// Kernel offset per assignment.
    kernel_at: Vec<usize>,
    /// Per parameter vertex: offset into its tensor per assignment.
    vertex_at: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
    pub kernel_len: usize,
}

impl Layout {
    pub fn new(g: &EinconvGraph, kernel: &[(String, usize)]) -> Self {
        let params: Vec<Vec<String>> = g
            .vertices
            .iter()
            .filter(|v| v.kind == VertexKind::Parameter)
            .map(|v| v.labels.clone())
            .collect();
        let mut dims: BTreeMap<String, usize> = kernel.iter().cloned().collect();
        for p in &params {
            for l in p {
                dims.insert(l.clone(), g.dim(l).unwrap());
            }
        }
        let names: Vec<&String> = dims.keys().collect();
        let sizes: Vec<usize> = names.iter().map(|n| dims[*n]).collect();
        let total: usize = sizes.iter().product();
        let pos = |n: &str| names.iter().position(|x| x.as_str() == n).unwrap();
        let offsets = |labels: &[String]| -> (Vec<usize>, Vec<usize>) {
            let mut stride = vec![1; labels.len()];
            for k in (0..labels.len().saturating_sub(1)).rev() {
                stride[k] = stride[k + 1] * dims[&labels[k + 1]];
            }
            (labels.iter().map(|l| pos(l)).collect(), stride)
        };
        let klabels: Vec<String> = kernel.iter().map(|(n, _)| n.clone()).collect();
        let (kpos, kstride) = offsets(&klabels);
        let vmaps: Vec<(Vec<usize>, Vec<usize>)> = params.iter().map(|p| offsets(p)).collect();
        let mut kernel_at = Vec::with_capacity(total);
        let mut vertex_at = vec![Vec::with_capacity(total); params.len()];
        let mut a = vec![0usize; sizes.len()];
        for _ in 0..total {
            kernel_at.push(kpos.iter().zip(&kstride).map(|(&p, &s)| a[p] * s).sum());
            for (v, (vp, vs)) in vmaps.iter().enumerate() {
                vertex_at[v].push(vp.iter().zip(vs).map(|(&p, &s)| a[p] * s).sum());
            }
            for k in (0..a.len()).rev() {
                a[k] += 1;
                if a[k] < sizes[k] {
                    break;
                }
                a[k] = 0;
            }
        }
        Layout {
            kernel_at,
            sizes: params
                .iter()
                .map(|p| p.iter().map(|l| dims[l]).product())
                .collect(),
            vertex_at,
            kernel_len: kernel.iter().map(|(_, d)| d).product(),
        }
    }

    pub fn random_params(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        self.sizes
            .iter()
            .map(|&n| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    pub fn kernel(&self, params: &[Vec<f64>]) -> Vec<f64> {
        let mut k = vec![0.0; self.kernel_len];
        for (a, &ko) in self.kernel_at.iter().enumerate() {
            let mut p = 1.0;
            for (v, at) in self.vertex_at.iter().enumerate() {
                p *= params[v][at[a]];
            }
            k[ko] += p;
        }
        k
    }

    /// Least-squares update of vertex `v` with the others fixed.
    pub fn solve_vertex(&self, params: &mut [Vec<f64>], v: usize, target: &[f64], damping: f64) {
        let mut a = DMatrix::<f64>::zeros(self.kernel_len, self.sizes[v]);
        for (s, &ko) in self.kernel_at.iter().enumerate() {
            let mut p = 1.0;
            for (u, at) in self.vertex_at.iter().enumerate() {
                if u != v {
                    p *= params[u][at[s]];
                }
            }
            a[(ko, self.vertex_at[v][s])] += p;
        }
        if damping > 0.0 {
            // proximal step: argmin |Ax - b|^2 + damping |x - x0|^2
            let n = self.sizes[v];
            let x0 = DVector::from_column_slice(&params[v]);
            let lhs = a.transpose() * &a + DMatrix::<f64>::identity(n, n) * damping;
            let rhs = a.transpose() * DVector::from_column_slice(target) + x0 * damping;
            if let Some(ch) = lhs.cholesky() {
                params[v] = ch.solve(&rhs).iter().copied().collect();
                return;
            }
        }
        // minimum-norm solution x = A^T (A A^T)^+ b; A A^T is only kernel-sized.
        // nalgebra's SVD is unreliable on the rank-deficient systems that occur here
        let b = DVector::from_column_slice(target);
        let eig = (&a * a.transpose()).symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x));
        let mut y = DVector::<f64>::zeros(self.kernel_len);
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > 1e-13 * top {
                let q = eig.eigenvectors.column(k);
                y += q * (q.dot(&b) / lambda);
            }
        }
        let x = a.transpose() * y;
        params[v] = x.iter().copied().collect();
    }
}

/// ||K - T||^2 / ||T||^2, the least-squares objective ALS descends.
fn rel_residual(k: &[f64], t: &[f64]) -> f64 {
    let num: f64 = k.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let den: f64 = t.iter().map(|x| x * x).sum::<f64>();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Proximal weight relative to the current squared residual; shrinks to
/// zero as the fit converges.
const DAMPING: f64 = 0.1;

/// Smallest relative squared residual over `restarts` random
/// starts of `iters` sweeps each.
pub fn als_residual(layout: &Layout, target: &[f64], iters: usize, restarts: usize, rng: &mut ChaCha8Rng) -> f64 {
    let tnorm: f64 = target.iter().map(|x| x * x).sum();
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let mut params = layout.random_params(rng);
        let mut r = rel_residual(&layout.kernel(&params), target);
        for _ in 0..iters {
            if r < 1e-14 {
                break;
            }
            let damping = DAMPING * r * tnorm;
            for v in 0..params.len() {
                layout.solve_vertex(&mut params, v, target, damping);
            }
            let next = rel_residual(&layout.kernel(&params), target);
            let stalled = r - next <= 1e-12 * r;
            r = next;
            if stalled {
                break;
            }
        }
        best = best.min(r);
        if best < 1e-14 {
            break;
        }
    }
    best
}
