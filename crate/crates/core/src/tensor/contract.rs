use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::error::{EinconvError, Result};
use crate::scalar::Scalar;
use crate::tensor::dense::{row_major_strides, DenseTensor, IndexLabel};
use crate::tensor::expr::ContractionExpr;
use crate::tensor::plan::{plan_optimal, ContractionPlan, DimMap, Step};

/// Collects label dims from the operands, checking they agree with `expr`.
pub fn dims_of<T: Scalar>(expr: &ContractionExpr, tensors: &[&DenseTensor<T>]) -> Result<DimMap> {
    if tensors.len() != expr.n_operands() {
        return Err(EinconvError::OperandCount {
            expected: expr.n_operands(),
            got: tensors.len(),
        });
    }
    let mut dims: DimMap = BTreeMap::new();
    for (k, (op, t)) in expr.operands().iter().zip(tensors).enumerate() {
        if op.len() != t.rank() || op.iter().any(|l| t.position(l).is_none()) {
            return Err(EinconvError::OperandMismatch(k));
        }
        for l in t.labels() {
            if let Some(&d) = dims.get(&l.name) {
                if d != l.dim {
                    return Err(EinconvError::DimMismatch {
                        label: l.name.clone(),
                        left: d,
                        right: l.dim,
                    });
                }
            } else {
                dims.insert(l.name.clone(), l.dim);
            }
        }
    }
    Ok(dims)
}

/// Evaluates `expr` on `tensors` following `plan`.
pub fn contract<T: Scalar>(
    expr: &ContractionExpr,
    tensors: &[&DenseTensor<T>],
    plan: &ContractionPlan,
) -> Result<DenseTensor<T>> {
    dims_of(expr, tensors)?;
    if plan.n_operands != tensors.len() {
        return Err(EinconvError::InvalidPlan("operand count differs from plan".into()));
    }
    plan.check()?;
    let mut slots: Vec<Option<Cow<DenseTensor<T>>>> =
        tensors.iter().map(|t| Some(Cow::Borrowed(*t))).collect();
    for st in &plan.steps {
        let names: Vec<&str> = st.result.iter().map(|s| s.as_str()).collect();
        let out = match st.step {
            Step::Pair { lhs, rhs } => {
                let a = slots[lhs].take().unwrap();
                let b = slots[rhs].take().unwrap();
                pairwise(&a, &b, &names)?
            }
            Step::Reduce { operand } => {
                let a = slots[operand].take().unwrap();
                a.sum_to(&names)?
            }
        };
        slots.push(Some(Cow::Owned(out)));
    }
    let last = slots.into_iter().flatten().next().unwrap();
    let out: Vec<&str> = expr.output().iter().map(|s| s.as_str()).collect();
    if last.rank() != out.len() {
        return Err(EinconvError::InvalidPlan("plan result does not match output labels".into()));
    }
    let last = last.into_owned();
    if last.names() == out && !last.is_binary_dummy() {
        Ok(last)
    } else {
        last.permute(&out)
    }
}

/// Plans with [`plan_optimal`] and contracts.
pub fn einsum<T: Scalar>(expr: &ContractionExpr, tensors: &[&DenseTensor<T>]) -> Result<DenseTensor<T>> {
    let dims = dims_of(expr, tensors)?;
    let plan = plan_optimal(expr, &dims)?;
    contract(expr, tensors, &plan)
}

/// Contracts two tensors, keeping `result` labels in the given order.
pub fn pairwise<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>, result: &[&str]) -> Result<DenseTensor<T>> {
    match (a.is_binary_dummy(), b.is_binary_dummy()) {
        (true, false) => gather(a, b, result),
        (false, true) => gather(b, a, result),
        _ => dense_pair(a, b, result),
    }
}

fn dense_pair<T: Scalar>(a: &DenseTensor<T>, b: &DenseTensor<T>, result: &[&str]) -> Result<DenseTensor<T>> {
    let in_res = |l: &str| result.contains(&l);
    let mut batch = Vec::new();
    let mut contracted = Vec::new();
    let mut a_keep = Vec::new();
    for l in a.names() {
        match (b.position(l).is_some(), in_res(l)) {
            (true, true) => batch.push(l),
            (true, false) => contracted.push(l),
            (false, true) => a_keep.push(l),
            (false, false) => {}
        }
    }
    let b_keep: Vec<&str> = b
        .names()
        .into_iter()
        .filter(|l| a.position(l).is_none() && in_res(l))
        .collect();
    for l in result {
        if a.position(l).is_none() && b.position(l).is_none() {
            return Err(EinconvError::UnknownLabel(l.to_string()));
        }
    }
    let mut a_order = batch.clone();
    a_order.extend(&a_keep);
    a_order.extend(&contracted);
    let mut b_order = batch.clone();
    b_order.extend(&contracted);
    b_order.extend(&b_keep);
    let ap = arrange(a, &a_order)?;
    let bp = arrange(b, &b_order)?;
    let prod = |t: &DenseTensor<T>, ls: &[&str]| -> usize { ls.iter().map(|l| t.dim_of(l).unwrap()).product() };
    let nb = prod(a, &batch);
    let m = prod(a, &a_keep);
    let kk = prod(a, &contracted);
    let nn = prod(b, &b_keep);
    let mut out = vec![T::zero(); nb * m * nn];
    let (ad, bd) = (ap.data(), bp.data());
    for t in 0..nb {
        let ao = &ad[t * m * kk..(t + 1) * m * kk];
        let bo = &bd[t * kk * nn..(t + 1) * kk * nn];
        let co = &mut out[t * m * nn..(t + 1) * m * nn];
        gemm(ao, bo, co, m, kk, nn);
    }
    let mut labels: Vec<IndexLabel> = Vec::new();
    for l in batch.iter().chain(&a_keep) {
        labels.push(IndexLabel::new(*l, a.dim_of(l).unwrap()));
    }
    for l in &b_keep {
        labels.push(IndexLabel::new(*l, b.dim_of(l).unwrap()));
    }
    let t = DenseTensor::new(labels, out)?;
    if t.names() == result {
        Ok(t)
    } else {
        t.permute(result)
    }
}

fn arrange<'a, T: Scalar>(t: &'a DenseTensor<T>, order: &[&str]) -> Result<Cow<'a, DenseTensor<T>>> {
    if t.names() == order {
        Ok(Cow::Borrowed(t))
    } else {
        Ok(Cow::Owned(t.sum_to(order)?))
    }
}

/// c (m×n) += a (m×k) · b (k×n), all row-major.
fn gemm<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av.is_zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// Contraction of a binary coupling tensor `d` with a dense `x`, visiting
/// only the nonzeros of `d`.
fn gather<T: Scalar>(d: &DenseTensor<T>, x: &DenseTensor<T>, result: &[&str]) -> Result<DenseTensor<T>> {
    let mut labels = Vec::with_capacity(result.len());
    for l in result {
        let dim = d
            .dim_of(l)
            .or_else(|| x.dim_of(l))
            .ok_or_else(|| EinconvError::UnknownLabel(l.to_string()))?;
        labels.push(IndexLabel::new(*l, dim));
    }
    let rdims: Vec<usize> = labels.iter().map(|l| l.dim).collect();
    let rstr = row_major_strides(&rdims);
    let xstr = x.strides();
    let rstride = |l: &str| result.iter().position(|r| *r == l).map_or(0, |p| rstr[p]);
    // free axes of x: iterate them in full for every nonzero of d
    let free: Vec<usize> = (0..x.rank()).filter(|&p| d.position(&x.labels()[p].name).is_none()).collect();
    let fdims: Vec<usize> = free.iter().map(|&p| x.labels()[p].dim).collect();
    let fx: Vec<usize> = free.iter().map(|&p| xstr[p]).collect();
    let fr: Vec<usize> = free.iter().map(|&p| rstride(&x.labels()[p].name)).collect();
    let mut offsets = Vec::with_capacity(fdims.iter().product());
    {
        let mut idx = vec![0usize; free.len()];
        let (mut ox, mut or) = (0usize, 0usize);
        let total: usize = fdims.iter().product();
        for _ in 0..total {
            offsets.push((ox, or));
            for k in (0..free.len()).rev() {
                idx[k] += 1;
                ox += fx[k];
                or += fr[k];
                if idx[k] < fdims[k] {
                    break;
                }
                ox -= fx[k] * fdims[k];
                or -= fr[k] * fdims[k];
                idx[k] = 0;
            }
        }
    }
    let dx: Vec<usize> = d
        .labels()
        .iter()
        .map(|l| x.position(&l.name).map_or(0, |p| xstr[p]))
        .collect();
    let dr: Vec<usize> = d.labels().iter().map(|l| rstride(&l.name)).collect();
    let ddims = d.dims();
    let mut out = vec![T::zero(); rdims.iter().product()];
    let xd = x.data();
    let mut idx = vec![0usize; ddims.len()];
    for &v in d.data() {
        if !v.is_zero() {
            let mut bx = 0;
            let mut br = 0;
            for k in 0..idx.len() {
                bx += idx[k] * dx[k];
                br += idx[k] * dr[k];
            }
            if v == T::one() {
                for &(ox, or) in &offsets {
                    out[br + or] += xd[bx + ox];
                }
            } else {
                for &(ox, or) in &offsets {
                    out[br + or] += v * xd[bx + ox];
                }
            }
        }
        crate::tensor::dense::advance(&mut idx, &ddims);
    }
    DenseTensor::new(labels, out)
}

/// Gradients of `<contract(expr, tensors), upstream>` with respect to each operand.
pub fn grad_contract<T: Scalar>(
    expr: &ContractionExpr,
    tensors: &[&DenseTensor<T>],
    upstream: &DenseTensor<T>,
) -> Result<Vec<DenseTensor<T>>> {
    let wanted = vec![true; tensors.len()];
    Ok(grad_contract_selected(expr, tensors, upstream, &wanted)?
        .into_iter()
        .map(|g| g.unwrap())
        .collect())
}

/// Like [`grad_contract`] but only for operands flagged in `wanted`.
pub fn grad_contract_selected<T: Scalar>(
    expr: &ContractionExpr,
    tensors: &[&DenseTensor<T>],
    upstream: &DenseTensor<T>,
    wanted: &[bool],
) -> Result<Vec<Option<DenseTensor<T>>>> {
    dims_of(expr, tensors)?;
    let out: Vec<&str> = expr.output().iter().map(|s| s.as_str()).collect();
    if upstream.rank() != out.len() || out.iter().any(|l| upstream.position(l).is_none()) {
        return Err(EinconvError::OperandMismatch(tensors.len()));
    }
    let mut grads = Vec::with_capacity(tensors.len());
    for k in 0..tensors.len() {
        if !wanted[k] {
            grads.push(None);
            continue;
        }
        let mut ops: Vec<Vec<String>> = vec![upstream.names().iter().map(|s| s.to_string()).collect()];
        let mut ts: Vec<&DenseTensor<T>> = vec![upstream];
        let mut dummies = Vec::new();
        for j in 0..tensors.len() {
            if j != k {
                if let Some(nnz) = expr.dummy_nnz()[j] {
                    dummies.push((ops.len(), nnz));
                }
                ops.push(tensors[j].names().iter().map(|s| s.to_string()).collect());
                ts.push(tensors[j]);
            }
        }
        let present: Vec<String> = tensors[k]
            .names()
            .iter()
            .filter(|l| ops.iter().any(|op| op.iter().any(|x| x == *l)))
            .map(|s| s.to_string())
            .collect();
        let mut gexpr = ContractionExpr::new(&ops, &present)?;
        for (p, nnz) in dummies {
            gexpr = gexpr.with_dummy(p, nnz);
        }
        let g = einsum(&gexpr, &ts)?;
        let g = if present.len() == tensors[k].rank() {
            g.permute(&tensors[k].names())?
        } else {
            g.broadcast_to(tensors[k].labels())?
        };
        grads.push(Some(g));
    }
    Ok(grads)
}
