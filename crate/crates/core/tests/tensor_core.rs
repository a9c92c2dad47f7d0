mod common;

use common::{naive_einsum, random_tensor, rel_err, rng};
use einconv_core::tensor::{
    contract, dims_of, einsum, estimate_flops, grad_contract, labels, plan_greedy, plan_optimal,
    ContractionExpr, ContractionPlan, DenseTensor, Step,
};
use einconv_core::EinconvError;
use proptest::prelude::*;

fn t(spec: &[(&str, usize)], data: &[f64]) -> DenseTensor<f64> {
    DenseTensor::from_shape(spec, data.to_vec()).unwrap()
}

#[test]
fn matmul_example() {
    let a = t(&[("i", 2), ("j", 2)], &[1., 2., 3., 4.]);
    let b = t(&[("j", 2), ("k", 2)], &[5., 6., 7., 8.]);
    let e = ContractionExpr::parse("i j, j k -> i k").unwrap();
    let c = einsum(&e, &[&a, &b]).unwrap();
    assert_eq!(c.data(), &[19., 22., 43., 50.]);
    assert_eq!(c.names(), vec!["i", "k"]);
}

#[test]
fn identity_contraction_returns_other_operand() {
    let id = DenseTensor::from_fn(labels(&[("i", 3), ("j", 3)]), |x| if x[0] == x[1] { 1.0 } else { 0.0 });
    let mut r = rng(1);
    let b = random_tensor(&[("j", 3), ("k", 4)], &mut r);
    let e = ContractionExpr::parse("i j, j k -> i k").unwrap();
    let c = einsum(&e, &[&id, &b]).unwrap();
    assert_eq!(c.data(), b.data());
}

#[test]
fn hyperedge_example() {
    let a = t(&[("i", 2), ("j", 2)], &[1., 0., 0., 1.]);
    let b = t(&[("j", 2)], &[2., 3.]);
    let c = t(&[("j", 2), ("k", 2)], &[1., 1., 1., 1.]);
    let e = ContractionExpr::parse("i j, j, j k -> i k").unwrap();
    let out = einsum(&e, &[&a, &b, &c]).unwrap();
    assert_eq!(out.data(), &[2., 2., 3., 3.]);
    let naive = naive_einsum(&e, &[&a, &b, &c]);
    assert_eq!(naive.data(), out.data());
}

#[test]
fn dimension_mismatch_is_an_error() {
    let a = t(&[("i", 2), ("j", 2)], &[1., 2., 3., 4.]);
    let b = t(&[("j", 3)], &[1., 1., 1.]);
    let e = ContractionExpr::parse("i j, j -> i").unwrap();
    assert!(matches!(dims_of(&e, &[&a, &b]), Err(EinconvError::DimMismatch { .. })));
}

#[test]
fn output_label_absent_is_an_error() {
    assert!(matches!(
        ContractionExpr::parse("i j, j k -> i z"),
        Err(EinconvError::UnknownLabel(_))
    ));
    assert!(matches!(
        ContractionExpr::parse("i i -> i"),
        Err(EinconvError::SelfLoop { .. })
    ));
}

#[test]
fn greedy_matrix_chain_contracts_first_pair() {
    let e = ContractionExpr::parse("i j, j k, k l -> i l").unwrap();
    let dims = [("i", 2), ("j", 100), ("k", 2), ("l", 100)]
        .iter()
        .map(|&(n, d)| (n.to_string(), d))
        .collect();
    let p = plan_greedy(&e, &dims).unwrap();
    assert_eq!(p.steps[0].step, Step::Pair { lhs: 0, rhs: 1 });
    let mut res = p.steps[0].result.clone();
    res.sort();
    assert_eq!(res, vec!["i", "k"]);
    // every plan for three operands: pair (0,1), (1,2) or (0,2) first
    let d = |x: u64, y: u64, z: u64| 2 * x * y * z;
    let c01 = d(2, 100, 2) + d(2, 2, 100);
    let c12 = d(100, 2, 100) + d(2, 100, 100);
    let c02 = d(2, 100, 2 * 100) + d(2, 100 * 2, 100);
    assert!(c01 < c12 && c01 < c02);
    assert_eq!(p.est_flops, c01);
    assert_eq!(plan_optimal(&e, &dims).unwrap().est_flops, p.est_flops);
}

#[test]
fn single_operand_plans() {
    let e = ContractionExpr::parse("i j -> i j").unwrap();
    let dims = [("i".to_string(), 2), ("j".to_string(), 3)].into_iter().collect();
    let p = plan_greedy(&e, &dims).unwrap();
    assert!(p.steps.is_empty());
    assert_eq!(p.est_flops, 0);
    assert_eq!(estimate_flops(&p), 0);
    let e = ContractionExpr::parse("i j -> j").unwrap();
    let p = plan_greedy(&e, &dims).unwrap();
    assert_eq!(p.steps.len(), 1);
    let a = t(&[("i", 2), ("j", 3)], &[1., 2., 3., 4., 5., 6.]);
    let s = contract(&e, &[&a], &p).unwrap();
    assert_eq!(s.data(), &[5., 7., 9.]);
    let e = ContractionExpr::parse("i j -> j i").unwrap();
    let p = plan_greedy(&e, &dims).unwrap();
    assert!(p.steps.is_empty());
    let s = contract(&e, &[&a], &p).unwrap();
    assert_eq!(s.data(), &[1., 4., 2., 5., 3., 6.]);
}

#[test]
fn empty_plan_costs_nothing() {
    let p = ContractionPlan {
        n_operands: 1,
        steps: vec![],
        est_flops: 0,
    };
    assert_eq!(estimate_flops(&p), 0);
}

#[test]
fn invalid_plan_rejected() {
    let e = ContractionExpr::parse("i j, j k -> i k").unwrap();
    let a = t(&[("i", 2), ("j", 2)], &[1., 2., 3., 4.]);
    let p = ContractionPlan {
        n_operands: 2,
        steps: vec![],
        est_flops: 0,
    };
    assert!(matches!(contract(&e, &[&a, &a.clone().relabel("i", "k").relabel("j", "j")], &p), Err(_)));
}

#[test]
fn matmul_gradient_closed_form() {
    let mut r = rng(7);
    let a = random_tensor(&[("i", 2), ("j", 2)], &mut r);
    let b = random_tensor(&[("j", 2), ("k", 2)], &mut r);
    let g = random_tensor(&[("i", 2), ("k", 2)], &mut r);
    let e = ContractionExpr::parse("i j, j k -> i k").unwrap();
    let grads = grad_contract(&e, &[&a, &b], &g).unwrap();
    // G·Bᵀ and Aᵀ·G by hand
    for i in 0..2 {
        for j in 0..2 {
            let ga: f64 = (0..2).map(|k| g.get(&[i, k]) * b.get(&[j, k])).sum();
            assert!((grads[0].get(&[i, j]) - ga).abs() < 1e-14);
        }
    }
    for j in 0..2 {
        for k in 0..2 {
            let gb: f64 = (0..2).map(|i| a.get(&[i, j]) * g.get(&[i, k])).sum();
            assert!((grads[1].get(&[j, k]) - gb).abs() < 1e-14);
        }
    }
    check_fd(&e, &[a, b], &g, 1e-6);
}

#[test]
fn gradient_through_identity_and_scalar_network() {
    let id = DenseTensor::from_fn(labels(&[("i", 3), ("j", 3)]), |x| if x[0] == x[1] { 1.0 } else { 0.0 });
    let mut r = rng(3);
    let b = random_tensor(&[("j", 3), ("k", 2)], &mut r);
    let ones = DenseTensor::filled(labels(&[("i", 3), ("k", 2)]), 1.0);
    let e = ContractionExpr::parse("i j, j k -> i k").unwrap();
    let grads = grad_contract(&e, &[&id, &b], &ones).unwrap();
    assert!(grads[1].data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    check_fd(&e, &[id, b], &ones, 1e-6);

    let x = t(&[("a", 1)], &[2.0]);
    let y = t(&[("a", 1), ("b", 1)], &[3.0]);
    let z = t(&[("b", 1)], &[5.0]);
    let e = ContractionExpr::parse("a, a b, b ->").unwrap();
    let up = DenseTensor::scalar(1.0);
    let grads = grad_contract(&e, &[&x, &y, &z], &up).unwrap();
    assert_eq!(grads[0].data(), &[15.0]);
    assert_eq!(grads[1].data(), &[10.0]);
    assert_eq!(grads[2].data(), &[6.0]);
}

#[test]
fn gradient_broadcasts_private_summed_label() {
    let mut r = rng(11);
    let a = random_tensor(&[("i", 2), ("p", 3)], &mut r);
    let b = random_tensor(&[("i", 2), ("k", 2)], &mut r);
    let g = random_tensor(&[("k", 2)], &mut r);
    let e = ContractionExpr::parse("i p, i k -> k").unwrap();
    check_fd(&e, &[a, b], &g, 1e-6);
}

fn inner(a: &DenseTensor<f64>, b: &DenseTensor<f64>) -> f64 {
    let b = b.permute(&a.names()).unwrap();
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Central finite differences of <contract, upstream> against grad_contract.
fn check_fd(e: &ContractionExpr, ts: &[DenseTensor<f64>], up: &DenseTensor<f64>, tol: f64) {
    let refs: Vec<&DenseTensor<f64>> = ts.iter().collect();
    let grads = grad_contract(e, &refs, up).unwrap();
    let eps = 1e-6;
    for k in 0..ts.len() {
        for p in 0..ts[k].len() {
            let mut plus = ts.to_vec();
            plus[k].data_mut()[p] += eps;
            let mut minus = ts.to_vec();
            minus[k].data_mut()[p] -= eps;
            let f = |v: &[DenseTensor<f64>]| {
                let r: Vec<&DenseTensor<f64>> = v.iter().collect();
                inner(&einsum(e, &r).unwrap(), up)
            };
            let fd = (f(&plus) - f(&minus)) / (2.0 * eps);
            let an = grads[k].data()[p];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(err <= tol.max(1e-4) || (fd - an).abs() < 1e-9, "operand {k} entry {p}: fd {fd} vs {an}");
        }
    }
}

/// Random expression: up to 5 operands over up to 6 labels with dims ≤ 3.
fn random_expr(seed: u64, max_dim: usize) -> (ContractionExpr, Vec<DenseTensor<f64>>) {
    use rand::Rng;
    let mut r = rng(seed);
    let pool = ["a", "b", "c", "d", "e", "f"];
    let n_labels = r.gen_range(1..=6);
    let dims: Vec<usize> = (0..n_labels).map(|_| r.gen_range(1..=max_dim)).collect();
    let n_ops = r.gen_range(1..=5);
    let mut ops: Vec<Vec<&str>> = Vec::new();
    for _ in 0..n_ops {
        let mut op: Vec<&str> = (0..n_labels).filter(|_| r.gen_bool(0.45)).map(|k| pool[k]).collect();
        if op.is_empty() {
            op.push(pool[r.gen_range(0..n_labels)]);
        }
        ops.push(op);
    }
    let used: Vec<&str> = (0..n_labels).map(|k| pool[k]).filter(|l| ops.iter().any(|o| o.contains(l))).collect();
    let out: Vec<&str> = used.iter().copied().filter(|_| r.gen_bool(0.4)).collect();
    let e = ContractionExpr::new(&ops, &out).unwrap();
    let ts = ops
        .iter()
        .map(|op| {
            let spec: Vec<(&str, usize)> = op
                .iter()
                .map(|l| (*l, dims[pool.iter().position(|p| p == l).unwrap()]))
                .collect();
            random_tensor(&spec, &mut r)
        })
        .collect();
    (e, ts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn plans_agree_and_match_naive_oracle(seed in 0u64..1_000_000) {
        let (e, ts) = random_expr(seed, 3);
        let refs: Vec<&DenseTensor<f64>> = ts.iter().collect();
        let dims = dims_of(&e, &refs).unwrap();
        let pg = plan_greedy(&e, &dims).unwrap();
        let po = plan_optimal(&e, &dims).unwrap();
        prop_assert!(po.est_flops <= pg.est_flops);
        prop_assert_eq!(estimate_flops(&pg), pg.est_flops);
        let a = contract(&e, &refs, &pg).unwrap();
        let b = contract(&e, &refs, &po).unwrap();
        let n = naive_einsum(&e, &refs);
        prop_assert!(rel_err(a.data(), b.data()) <= 1e-12);
        prop_assert!(rel_err(a.data(), n.data()) <= 1e-12);
    }

    #[test]
    fn plan_independence_dims_to_four(seed in 0u64..1_000_000) {
        let (e, ts) = random_expr(seed, 4);
        let refs: Vec<&DenseTensor<f64>> = ts.iter().collect();
        let dims = dims_of(&e, &refs).unwrap();
        let a = contract(&e, &refs, &plan_greedy(&e, &dims).unwrap()).unwrap();
        let b = contract(&e, &refs, &plan_optimal(&e, &dims).unwrap()).unwrap();
        prop_assert!(rel_err(a.data(), b.data()) <= 1e-12);
    }

    #[test]
    fn linear_in_each_operand(seed in 0u64..1_000_000, alpha in -2.0f64..2.0) {
        let (e, ts) = random_expr(seed, 3);
        let mut r = rng(seed ^ 0x5555);
        let k = (seed as usize) % ts.len();
        let other = random_tensor(
            &ts[k].labels().iter().map(|l| (l.name.as_str(), l.dim)).collect::<Vec<_>>(),
            &mut r,
        );
        let mut mixed = ts.clone();
        for (m, (x, y)) in mixed[k].data_mut().iter_mut().zip(other.data()).enumerate() {
            let _ = m;
            *x = *x + alpha * y;
        }
        let eval = |v: &[DenseTensor<f64>]| {
            let r: Vec<&DenseTensor<f64>> = v.iter().collect();
            einsum(&e, &r).unwrap()
        };
        let mut swapped = ts.clone();
        swapped[k] = other;
        let lhs = eval(&mixed);
        let base = eval(&ts);
        let part = eval(&swapped);
        let rhs: Vec<f64> = base.data().iter().zip(part.data()).map(|(a, b)| a + alpha * b).collect();
        prop_assert!(rel_err(lhs.data(), &rhs) <= 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences(seed in 0u64..1_000_000) {
        let (e, ts) = random_expr(seed, 3);
        let refs: Vec<&DenseTensor<f64>> = ts.iter().collect();
        let out = einsum(&e, &refs).unwrap();
        let mut r = rng(seed ^ 0xabc);
        let up = random_tensor(
            &out.labels().iter().map(|l| (l.name.as_str(), l.dim)).collect::<Vec<_>>(),
            &mut r,
        );
        check_fd(&e, &ts, &up, 1e-4);
    }
}
