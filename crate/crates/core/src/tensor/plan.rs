use std::collections::BTreeMap;

use crate::error::{EinconvError, Result};
use crate::tensor::expr::ContractionExpr;

pub type DimMap = BTreeMap<String, usize>;

/// One step of a plan. Operand ids are SSA-style: the inputs are
/// `0..n_operands`, and step `s` produces id `n_operands + s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Pair { lhs: usize, rhs: usize },
    Reduce { operand: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanStep {
    pub step: Step,
    pub result: Vec<String>,
    pub cost: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionPlan {
    pub n_operands: usize,
    pub steps: Vec<PlanStep>,
    pub est_flops: u64,
}

impl ContractionPlan {
    /// Checks that every id is consumed exactly once and one tensor remains.
    pub fn check(&self) -> Result<()> {
        let total = self.n_operands + self.steps.len();
        let mut used = vec![false; total];
        let take = |id: usize, s: usize, used: &mut Vec<bool>| -> Result<()> {
            if id >= self.n_operands + s || used[id] {
                return Err(EinconvError::InvalidPlan(format!("step {s} reads id {id}")));
            }
            used[id] = true;
            Ok(())
        };
        for (s, st) in self.steps.iter().enumerate() {
            match st.step {
                Step::Pair { lhs, rhs } => {
                    if lhs == rhs {
                        return Err(EinconvError::InvalidPlan(format!("step {s} pairs id {lhs} with itself")));
                    }
                    take(lhs, s, &mut used)?;
                    take(rhs, s, &mut used)?;
                }
                Step::Reduce { operand } => take(operand, s, &mut used)?,
            }
        }
        let left = used.iter().filter(|u| !**u).count();
        if left != 1 {
            return Err(EinconvError::InvalidPlan(format!("{left} tensors remain after the plan")));
        }
        let sum: u64 = self.steps.iter().map(|s| s.cost).sum();
        if sum != self.est_flops {
            return Err(EinconvError::InvalidPlan("est_flops is not the sum of step costs".into()));
        }
        Ok(())
    }
}

pub fn estimate_flops(plan: &ContractionPlan) -> u64 {
    plan.steps.iter().map(|s| s.cost).sum()
}

/// Bitmask view of an expression used by both planners.
struct Space {
    names: Vec<String>,
    dims: Vec<u128>,
    masks: Vec<u64>,
    out: u64,
    dummy: Vec<Option<u64>>,
}

impl Space {
    fn new(expr: &ContractionExpr, dims: &DimMap) -> Result<Self> {
        let names = expr.all_labels();
        if names.len() > 64 {
            return Err(EinconvError::InvalidPlan("more than 64 distinct labels".into()));
        }
        let mut dv = Vec::with_capacity(names.len());
        for n in &names {
            let d = *dims.get(n).ok_or_else(|| EinconvError::UnknownLabel(n.clone()))?;
            dv.push(d as u128);
        }
        let bit = |l: &String| 1u64 << names.iter().position(|n| n == l).unwrap();
        let masks = expr
            .operands()
            .iter()
            .map(|op| op.iter().map(bit).fold(0, |a, b| a | b))
            .collect();
        let out = expr.output().iter().map(bit).fold(0, |a, b| a | b);
        Ok(Space {
            names,
            dims: dv,
            masks,
            out,
            dummy: expr.dummy_nnz().to_vec(),
        })
    }

    fn size(&self, mask: u64) -> u128 {
        let mut s = 1u128;
        let mut m = mask;
        while m != 0 {
            let b = m.trailing_zeros() as usize;
            s = s.saturating_mul(self.dims[b]);
            m &= m - 1;
        }
        s
    }

    /// Cost of contracting two tensors into `res`. `dummy` is set for an
    /// original operand that is a binary coupling tensor.
    fn pair_cost(&self, a: u64, da: Option<u64>, b: u64, db: Option<u64>, res: u64) -> u128 {
        let gather = |nnz: u64, other: u64, mine: u64| -> u128 {
            (nnz as u128)
                .saturating_mul(self.size(other & !mine))
                .saturating_sub(self.size(res))
        };
        match (da, db) {
            (Some(nnz), _) => gather(nnz, b, a),
            (None, Some(nnz)) => gather(nnz, a, b),
            _ => 2u128.saturating_mul(self.size(a | b)),
        }
    }

    fn reduce_cost(&self, mask: u64) -> u128 {
        self.size(mask) - self.size(mask & self.out)
    }

    fn ordered(&self, first: &[String], mask: u64, second: &[String]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for l in first.iter().chain(second.iter()) {
            let b = self.names.iter().position(|n| n == l).unwrap();
            if mask & (1 << b) != 0 && !out.contains(l) {
                out.push(l.clone());
            }
        }
        out
    }
}

fn clamp(c: u128) -> u64 {
    c.min(u64::MAX as u128) as u64
}

fn finish(n: usize, steps: Vec<PlanStep>) -> ContractionPlan {
    let est_flops = steps.iter().map(|s| s.cost).sum();
    ContractionPlan {
        n_operands: n,
        steps,
        est_flops,
    }
}

/// Greedy pairwise planner: always contracts the pair whose result is
/// smallest, ties going to the lexicographically first pair of live operands.
pub fn plan_greedy(expr: &ContractionExpr, dims: &DimMap) -> Result<ContractionPlan> {
    let sp = Space::new(expr, dims)?;
    let n = expr.n_operands();
    // (id, mask, labels, dummy nnz)
    let mut live: Vec<(usize, u64, Vec<String>, Option<u64>)> = (0..n)
        .map(|k| (k, sp.masks[k], expr.operands()[k].clone(), sp.dummy[k]))
        .collect();
    let mut steps = Vec::new();
    while live.len() > 1 {
        let mut best: Option<(u128, usize, usize, u64)> = None;
        for a in 0..live.len() {
            for b in a + 1..live.len() {
                let others = live
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != a && *k != b)
                    .fold(0u64, |m, (_, e)| m | e.1);
                let res = (live[a].1 | live[b].1) & (sp.out | others);
                let size = sp.size(res);
                if best.map_or(true, |(s, ..)| size < s) {
                    best = Some((size, a, b, res));
                }
            }
        }
        let (_, a, b, res) = best.unwrap();
        let cost = sp.pair_cost(live[a].1, live[a].3, live[b].1, live[b].3, res);
        let result = sp.ordered(&live[a].2, res, &live[b].2);
        steps.push(PlanStep {
            step: Step::Pair {
                lhs: live[a].0,
                rhs: live[b].0,
            },
            result: result.clone(),
            cost: clamp(cost),
        });
        let id = n + steps.len() - 1;
        live.remove(b);
        live.remove(a);
        live.push((id, res, result, None));
    }
    if let Some((id, mask, labels, _)) = live.pop() {
        if mask != sp.out {
            let result = sp.ordered(&labels, sp.out, &[]);
            steps.push(PlanStep {
                step: Step::Reduce { operand: id },
                result,
                cost: clamp(sp.reduce_cost(mask)),
            });
        }
    }
    Ok(finish(n, steps))
}

/// Largest operand count the exhaustive planner accepts.
pub const OPTIMAL_MAX_OPERANDS: usize = 12;

/// Minimum-cost pairwise plan by dynamic programming over operand subsets.
/// Falls back to [`plan_greedy`] above [`OPTIMAL_MAX_OPERANDS`] operands.
pub fn plan_optimal(expr: &ContractionExpr, dims: &DimMap) -> Result<ContractionPlan> {
    let n = expr.n_operands();
    if n > OPTIMAL_MAX_OPERANDS || n <= 1 {
        return plan_greedy(expr, dims);
    }
    let sp = Space::new(expr, dims)?;
    let full = (1usize << n) - 1;
    let mut union = vec![0u64; full + 1];
    for s in 1..=full {
        let low = s.trailing_zeros() as usize;
        union[s] = union[s & (s - 1)] | sp.masks[low];
    }
    // labels carried by the intermediate of subset s
    let carried = |s: usize| -> u64 {
        if s.count_ones() == 1 {
            sp.masks[s.trailing_zeros() as usize]
        } else {
            union[s] & (sp.out | union[full & !s])
        }
    };
    let dummy_of = |s: usize| -> Option<u64> {
        if s.count_ones() == 1 {
            sp.dummy[s.trailing_zeros() as usize]
        } else {
            None
        }
    };
    let mut cost = vec![u128::MAX; full + 1];
    let mut split = vec![0usize; full + 1];
    for k in 0..n {
        cost[1 << k] = 0;
    }
    for s in 1..=full {
        if s.count_ones() < 2 {
            continue;
        }
        let low = s & s.wrapping_neg();
        let res = carried(s);
        // a ranges over proper subsets of s containing the lowest member
        let rest = s & !low;
        let mut sub = rest;
        loop {
            let a = sub | low;
            if a != s {
                let b = s & !a;
                if cost[a] != u128::MAX && cost[b] != u128::MAX {
                    let c = sp.pair_cost(carried(a), dummy_of(a), carried(b), dummy_of(b), res);
                    let total = cost[a].saturating_add(cost[b]).saturating_add(c);
                    if total < cost[s] {
                        cost[s] = total;
                        split[s] = a;
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    let mut steps = Vec::new();
    let mut labels_of: Vec<Vec<String>> = expr.operands().to_vec();
    fn build(
        s: usize,
        n: usize,
        split: &[usize],
        sp: &Space,
        carried: &dyn Fn(usize) -> u64,
        dummy_of: &dyn Fn(usize) -> Option<u64>,
        steps: &mut Vec<PlanStep>,
        labels_of: &mut Vec<Vec<String>>,
    ) -> usize {
        if s.count_ones() == 1 {
            return s.trailing_zeros() as usize;
        }
        let a = split[s];
        let b = s & !a;
        let ia = build(a, n, split, sp, carried, dummy_of, steps, labels_of);
        let ib = build(b, n, split, sp, carried, dummy_of, steps, labels_of);
        let res = carried(s);
        let cost = sp.pair_cost(carried(a), dummy_of(a), carried(b), dummy_of(b), res);
        let result = sp.ordered(&labels_of[ia], res, &labels_of[ib]);
        steps.push(PlanStep {
            step: Step::Pair { lhs: ia, rhs: ib },
            result: result.clone(),
            cost: clamp(cost),
        });
        labels_of.push(result);
        n + steps.len() - 1
    }
    build(full, n, &split, &sp, &carried, &dummy_of, &mut steps, &mut labels_of);
    Ok(finish(n, steps))
}
