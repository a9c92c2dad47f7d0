mod common;

use std::collections::BTreeMap;

use einconv_core::graph::{canonical_form, make_named, ConvGeometry, EinconvGraph, GraphBuilder, NamedKind};
use einconv_core::reduction::{
    applicable_rewrites, apply_rewrite, filter_factorizations, is_nonredundant, measure,
    merge_parallel_edges, normal_forms, partition_count, partitions, reduce, reduce_rank1,
    reduce_subset_vertex, Rule,
};
use proptest::prelude::*;
use rand::Rng;

fn ranks(spec: &[(&str, usize)]) -> BTreeMap<String, usize> {
    spec.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn geom() -> ConvGeometry {
    ConvGeometry::same(&[5, 5], &[3, 3], 3, 3)
}

fn build(params: &[&[&str]], rank_dims: &[(&str, usize)]) -> EinconvGraph {
    let mut b = GraphBuilder::plain(&geom()).unwrap();
    for &(r, d) in rank_dims {
        b.add_rank(r, d);
    }
    for p in params {
        b.add_param(p);
    }
    b.build()
}

fn params_sorted(g: &EinconvGraph) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = g
        .parameter_indices()
        .iter()
        .map(|&v| {
            let mut l = g.vertices[v].labels.clone();
            l.sort();
            l
        })
        .collect();
    out.sort();
    out
}

#[test]
fn named_layers_are_nonredundant() {
    let r = ranks(&[("A", 2), ("B", 2), ("Gamma", 2), ("R", 2)]);
    for k in NamedKind::ALL_2D {
        let f = if k == NamedKind::Factoring { 5 } else { 3 };
        let g = make_named(k, &ConvGeometry::same(&[6, 6], &[f, f], 3, 3), &r).unwrap();
        assert!(is_nonredundant(&g), "{k}");
        assert!(reduce(&g).steps.is_empty());
    }
    for k in NamedKind::ALL_3D {
        let g = make_named(k, &ConvGeometry::same(&[4, 4, 4], &[3, 3, 3], 2, 2), &r).unwrap();
        assert!(is_nonredundant(&g), "{k}");
    }
}

#[test]
fn singleton_and_unit_rank_labels_drop() {
    let g = build(&[&["i", "j", "c", "c'", "r"]], &[("r", 2)]);
    assert!(!is_nonredundant(&g));
    let h = reduce_rank1(&g);
    assert!(h.rank_labels().is_empty());
    assert_eq!(params_sorted(&h), vec![vec!["c", "c'", "i", "j"]]);
    assert_eq!(reduce_rank1(&h), h);

    let cp = make_named(NamedKind::Cp, &geom(), &ranks(&[("Gamma", 1)])).unwrap();
    let t = reduce(&cp);
    let kept = params_sorted(&t.result);
    assert_eq!(kept, vec![vec!["c"], vec!["c'"], vec!["i"], vec!["j"]]);
    assert_eq!(t.steps[0].rule, Rule::Rank1);
}

#[test]
fn tucker_unit_rank_matches_low_rank_shape() {
    let g = make_named(NamedKind::Bottleneck, &geom(), &ranks(&[("A", 1), ("B", 2)])).unwrap();
    let t = reduce(&g);
    assert_eq!(
        params_sorted(&t.result),
        vec![vec!["beta", "c'"], vec!["beta", "i", "j"], vec!["c"]]
    );
}

#[test]
fn subset_vertex_examples() {
    let g = build(&[&["alpha", "c"], &["alpha", "beta", "c"], &["i", "j", "beta", "c'"]], &[("alpha", 2), ("beta", 2)]);
    let h = reduce_subset_vertex(&g);
    assert_eq!(h.vertices.len(), g.vertices.len() - 1);
    assert!(!h.vertices.iter().any(|v| v.labels == vec!["alpha", "c"]));

    let cp = make_named(NamedKind::Cp, &geom(), &ranks(&[("Gamma", 2)])).unwrap();
    let mut dup = cp.clone();
    dup.vertices.push(dup.vertices[5].clone());
    dup.stages[0].push(dup.vertices.len() - 1);
    assert!(!is_nonredundant(&dup));
    let h = reduce_subset_vertex(&dup);
    assert_eq!(canonical_form(&h), canonical_form(&cp));

    let ds = make_named(NamedKind::DepthwiseSeparable, &geom(), &BTreeMap::new()).unwrap();
    assert_eq!(reduce_subset_vertex(&ds), ds);
}

#[test]
fn parallel_edges_merge() {
    let g = build(&[&["i", "j", "c", "a", "b"], &["a", "b", "c'"]], &[("a", 2), ("b", 2)]);
    let h = merge_parallel_edges(&g);
    assert_eq!(h.rank_labels().len(), 1);
    assert_eq!(h.dim(&h.rank_labels()[0]), Some(4));

    let g = build(&[&["i", "j", "c", "a", "b"], &["a", "b", "c'"]], &[("a", 2), ("b", 1)]);
    let forms = normal_forms(&g);
    assert_eq!(forms.len(), 1);
    let direct = build(&[&["i", "j", "c", "a"], &["a", "c'"]], &[("a", 2)]);
    assert!(forms.contains(&canonical_form(&direct)));

    let tucker = make_named(NamedKind::Bottleneck, &geom(), &ranks(&[("A", 2), ("B", 2)])).unwrap();
    assert_eq!(merge_parallel_edges(&tucker), tucker);
}

#[test]
fn standard_plus_isolated_rank_is_redundant() {
    let mut g = make_named(NamedKind::Standard, &geom(), &BTreeMap::new()).unwrap();
    g.inner.push(einconv_core::tensor::IndexLabel::new("r", 2));
    g.vertices[3].labels.push("r".into());
    assert!(!is_nonredundant(&g));
}

#[test]
fn partition_numbers() {
    assert_eq!(partition_count(0), 1);
    assert_eq!(partition_count(1), 1);
    assert_eq!(partition_count(4), 5);
    assert_eq!(partitions(4).len(), 5);
    let known = [1u64, 1, 2, 3, 5, 7, 11, 15, 22, 30, 42];
    for (n, &p) in known.iter().enumerate() {
        assert_eq!(partition_count(n as u64), p);
    }
    assert_eq!(partition_count(2) * partition_count(2), 4);
}

#[test]
fn factorization_examples() {
    assert_eq!(filter_factorizations(3).unwrap(), vec![vec![3]]);
    assert_eq!(filter_factorizations(5).unwrap(), vec![vec![5], vec![3, 3]]);
    assert_eq!(filter_factorizations(7).unwrap(), vec![vec![7], vec![5, 3], vec![3, 3, 3]]);
    assert!(filter_factorizations(4).is_err());
    assert_eq!(filter_factorizations(1).unwrap(), vec![vec![1]]);
}

#[test]
fn trace_records_rule_and_decreases_measure() {
    let g = build(
        &[&["i", "j", "c", "a", "b", "s"], &["a", "b", "c'"], &["c"], &["c", "c'", "u"]],
        &[("a", 2), ("b", 2), ("s", 3), ("u", 1)],
    );
    let t = reduce(&g);
    assert!(t.steps.len() >= 3);
    let mut cur = g.clone();
    while let Some(rw) = applicable_rewrites(&cur).into_iter().next() {
        let (next, _) = apply_rewrite(&cur, &rw);
        assert!(measure(&next) < measure(&cur));
        cur = next;
    }
    assert!(is_nonredundant(&t.result));
}

/// Random parameter families over the kernel labels plus up to three rank labels.
fn random_graph(seed: u64) -> EinconvGraph {
    let mut r = common::rng(seed);
    let n_rank = r.gen_range(0..=3);
    let rank_names = ["a", "b", "e"];
    let mut universe: Vec<&str> = vec!["i", "j", "c", "c'"];
    universe.extend(&rank_names[..n_rank]);
    let dims: Vec<(&str, usize)> = (0..n_rank).map(|k| (rank_names[k], r.gen_range(1..=3))).collect();
    loop {
        let n_params = r.gen_range(1..=5);
        let mut params: Vec<Vec<&str>> = (0..n_params)
            .map(|_| universe.iter().copied().filter(|_| r.gen_bool(0.4)).collect())
            .collect();
        // each fixed kernel label must land somewhere
        for l in ["i", "j", "c'"] {
            if !params.iter().any(|p| p.contains(&l)) {
                let k = r.gen_range(0..params.len());
                params[k].push(l);
            }
        }
        let refs: Vec<&[&str]> = params.iter().map(|p| p.as_slice()).collect();
        let g = build(&refs, &dims);
        if einconv_core::graph::validate(&g).is_ok() {
            return g;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rewrites_terminate_and_are_confluent(seed in 0u64..1_000_000) {
        let g = random_graph(seed);
        let forms = normal_forms(&g);
        prop_assert_eq!(forms.len(), 1);
        let t = reduce(&g);
        prop_assert!(forms.contains(&canonical_form(&t.result)));
        prop_assert!(applicable_rewrites(&t.result).is_empty());
    }

    #[test]
    fn every_rewrite_decreases_measure(seed in 0u64..1_000_000) {
        let g = random_graph(seed);
        for rw in applicable_rewrites(&g) {
            let (h, _) = apply_rewrite(&g, &rw);
            prop_assert!(measure(&h) < measure(&g));
        }
    }

    #[test]
    fn factorization_count_is_partition_number(half in 0usize..12) {
        let f = 2 * half + 1;
        let fs = filter_factorizations(f).unwrap();
        prop_assert_eq!(fs.len() as u64, partition_count(half as u64));
        for m in fs {
            prop_assert_eq!(1 + m.iter().map(|x| x - 1).sum::<usize>(), f);
        }
    }
}
