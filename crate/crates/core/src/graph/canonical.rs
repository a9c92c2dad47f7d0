use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::graph::EinconvGraph;

/// Largest number of rank-label assignments tried before falling back to
/// the refined invariant order alone.
const MAX_ASSIGNMENTS: usize = 40_320;

/// String equal for two graphs iff they agree up to vertex order, label order
/// within vertices and renaming of rank labels. Dims, staging and activation
/// flags are part of the form.
pub fn canonical_form(g: &EinconvGraph) -> String {
    let ranks = g.rank_labels();
    let dims = g.dims();
    let stage_of: Vec<usize> = (0..g.vertices.len())
        .map(|v| g.stage_of(v).unwrap_or(usize::MAX))
        .collect();
    let is_rank = |l: &str| ranks.iter().any(|r| r == l);

    // color refinement on rank labels, anchored by the fixed labels
    let base: Vec<String> = g
        .vertices
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let mut fixed: Vec<&str> = v.labels.iter().map(|s| s.as_str()).filter(|l| !is_rank(l)).collect();
            fixed.sort();
            format!("{}:{}:{}", stage_of[k], v.kind.code(), fixed.join(","))
        })
        .collect();
    let mut color: BTreeMap<String, String> = ranks
        .iter()
        .map(|r| (r.clone(), format!("{}", dims.get(r).copied().unwrap_or(0))))
        .collect();
    for _ in 0..3 {
        let vcolor: Vec<String> = g
            .vertices
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let mut rc: Vec<&str> = v.labels.iter().filter_map(|l| color.get(l).map(|s| s.as_str())).collect();
                rc.sort();
                format!("{}[{}]", base[k], rc.join("|"))
            })
            .collect();
        let next: BTreeMap<String, String> = ranks
            .iter()
            .map(|r| {
                let mut vs: Vec<&str> = g
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.has(r))
                    .map(|(k, _)| vcolor[k].as_str())
                    .collect();
                vs.sort();
                (r.clone(), format!("{}({})", color[r], vs.join("/")))
            })
            .collect();
        color = next;
    }
    let mut order = ranks.clone();
    order.sort_by(|a, b| color[a].cmp(&color[b]).then(a.cmp(b)));
    let mut groups: Vec<Vec<String>> = Vec::new();
    for r in order {
        match groups.last_mut() {
            Some(gr) if color[&gr[0]] == color[&r] => gr.push(r),
            _ => groups.push(vec![r]),
        }
    }
    let total: usize = groups
        .iter()
        .map(|gr| (1..=gr.len()).product::<usize>())
        .fold(1usize, |a, b| a.saturating_mul(b));
    let exhaustive = total <= MAX_ASSIGNMENTS;

    let encode = |seq: &[String]| -> String {
        let name: BTreeMap<&str, String> = seq
            .iter()
            .enumerate()
            .map(|(k, r)| (r.as_str(), format!("r{}", k + 1)))
            .collect();
        let rename = |l: &str| name.get(l).cloned().unwrap_or_else(|| l.to_string());
        let mut vs: Vec<String> = g
            .vertices
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let mut ls: Vec<String> = v.labels.iter().map(|l| rename(l)).collect();
                ls.sort();
                format!("{}:{}:{}", stage_of[k], v.kind.code(), ls.join(","))
            })
            .collect();
        vs.sort();
        let mut inner: Vec<String> = g.inner.iter().map(|l| format!("{}={}", rename(&l.name), l.dim)).collect();
        inner.sort();
        let mut outer: Vec<String> = g.outer.iter().map(|l| format!("{}={}", l.name, l.dim)).collect();
        outer.sort();
        let acts: Vec<&str> = g.activations.iter().map(|&a| if a { "1" } else { "0" }).collect();
        format!(
            "O[{}]I[{}]V[{}]A[{}]G[p{},s{}]",
            outer.join(","),
            inner.join(","),
            vs.join(";"),
            acts.join(""),
            g.geometry.padding,
            g.geometry.stride
        )
    };

    if !exhaustive {
        let seq: Vec<String> = groups.concat();
        return encode(&seq);
    }
    let mut best: Option<String> = None;
    let mut perms: Vec<Vec<Vec<String>>> = groups.iter().map(|gr| permutations(gr)).collect();
    let mut pick = vec![0usize; perms.len()];
    loop {
        let seq: Vec<String> = pick
            .iter()
            .enumerate()
            .flat_map(|(k, &p)| perms[k][p].iter().cloned())
            .collect();
        let e = encode(&seq);
        if best.as_ref().map_or(true, |b| e < *b) {
            best = Some(e);
        }
        let mut k = 0;
        loop {
            if k == pick.len() {
                perms.clear();
                break;
            }
            pick[k] += 1;
            if pick[k] < perms[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
        if perms.is_empty() {
            break;
        }
    }
    best.unwrap_or_else(|| encode(&[]))
}

fn permutations(items: &[String]) -> Vec<Vec<String>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

/// First 16 hex digits of the SHA-256 of the canonical form.
pub fn canonical_hash(g: &EinconvGraph) -> String {
    let digest = Sha256::digest(canonical_form(g).as_bytes());
    hex::encode(&digest[..8])
}
