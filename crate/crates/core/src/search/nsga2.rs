use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{EinconvError, Result};

/// Accuracy is maximized, parameter count minimized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub accuracy: f64,
    pub params: u64,
}

impl Objectives {
    pub fn new(accuracy: f64, params: u64) -> Self {
        Objectives { accuracy, params }
    }

    /// At least as good in both objectives and strictly better in one.
    pub fn dominates(&self, other: &Objectives) -> bool {
        self.accuracy >= other.accuracy
            && self.params <= other.params
            && (self.accuracy > other.accuracy || self.params < other.params)
    }

    /// Sign-normalized values, both to be minimized.
    fn values(&self) -> [f64; 2] {
        [-self.accuracy, self.params as f64]
    }
}

/// Fronts of indices into `objs`; front 0 is nondominated. `None` entries
/// are unevaluated and rejected.
pub fn fast_nondominated_sort(objs: &[Option<Objectives>]) -> Result<Vec<Vec<usize>>> {
    let objs: Vec<Objectives> = objs
        .iter()
        .enumerate()
        .map(|(k, o)| o.ok_or(EinconvError::Unevaluated(k)))
        .collect::<Result<_>>()?;
    Ok(nondominated_fronts(&objs))
}

pub fn nondominated_fronts(objs: &[Objectives]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in 0..n {
        for q in 0..n {
            if objs[p].dominates(&objs[q]) {
                dominates[p].push(q);
            } else if objs[q].dominates(&objs[p]) {
                dominated_by[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&p| dominated_by[p] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominates[p] {
                dominated_by[q] -= 1;
                if dominated_by[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Front rank of every individual.
pub fn front_ranks(objs: &[Objectives]) -> Vec<usize> {
    let mut rank = vec![0; objs.len()];
    for (r, front) in nondominated_fronts(objs).into_iter().enumerate() {
        for p in front {
            rank[p] = r;
        }
    }
    rank
}

/// Indices of the nondominated members of `objs`.
pub fn pareto_front(objs: &[Objectives]) -> Vec<usize> {
    nondominated_fronts(objs).into_iter().next().unwrap_or_default()
}

/// Crowding distance of each member of `front` (same order). Extremes of
/// every objective get +inf; interior points add the normalized gap
/// between their neighbours. Sorting is stable, so ties keep front order.
pub fn crowding_distance(objs: &[Objectives], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for m in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            objs[front[a]].values()[m]
                .partial_cmp(&objs[front[b]].values()[m])
                .unwrap_or(Ordering::Equal)
        });
        let lo = objs[front[order[0]]].values()[m];
        let hi = objs[front[order[n - 1]]].values()[m];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..n - 1 {
                let gap = objs[front[order[k + 1]]].values()[m] - objs[front[order[k - 1]]].values()[m];
                dist[order[k]] += gap / (hi - lo);
            }
        }
    }
    dist
}

/// Rank and crowding distance of every individual.
pub fn rank_and_crowding(objs: &[Objectives]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = vec![0; objs.len()];
    let mut crowd = vec![0.0; objs.len()];
    for (r, front) in nondominated_fronts(objs).into_iter().enumerate() {
        let d = crowding_distance(objs, &front);
        for (k, &p) in front.iter().enumerate() {
            rank[p] = r;
            crowd[p] = d[k];
        }
    }
    (rank, crowd)
}

/// Crowded-comparison order: lower rank first, then larger distance.
pub fn crowded_better(rank: &[usize], crowd: &[f64], a: usize, b: usize) -> bool {
    rank[a] < rank[b] || (rank[a] == rank[b] && crowd[a] > crowd[b])
}

/// NSGA-II environmental selection of `n` survivors: whole fronts while
/// they fit, then the split front by decreasing crowding distance.
pub fn environmental_selection(objs: &[Objectives], n: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(n);
    for front in nondominated_fronts(objs) {
        if chosen.len() + front.len() <= n {
            chosen.extend(front);
            continue;
        }
        let d = crowding_distance(objs, &front);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap_or(Ordering::Equal));
        for k in order.into_iter().take(n - chosen.len()) {
            chosen.push(front[k]);
        }
        break;
    }
    chosen
}
