//! Two-objective Pareto machinery: dominance, non-dominated sorting,
//! crowding distance, promotion ordering and the area-based incumbent.
//!
//! Both objectives are minimized. `primary` is the accuracy-like cost
//! (e.g. `1 - DSC`), `runtime_hours` the training cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MooError {
    #[error("empty input")]
    EmptyInput,
    #[error("cost vector {0} is not finite")]
    NonFiniteCost(usize),
    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    pub primary: f64,
    pub runtime_hours: f64,
}

impl CostVector {
    pub fn new(primary: f64, runtime_hours: f64) -> Self {
        Self { primary, runtime_hours }
    }

    fn is_finite(&self) -> bool {
        self.primary.is_finite() && self.runtime_hours.is_finite()
    }

    fn get(&self, objective: usize) -> f64 {
        if objective == 0 {
            self.primary
        } else {
            self.runtime_hours
        }
    }

    /// `self` is no worse in both objectives and strictly better in one.
    pub fn dominates(&self, other: &CostVector) -> bool {
        self.primary <= other.primary
            && self.runtime_hours <= other.runtime_hours
            && (self.primary < other.primary || self.runtime_hours < other.runtime_hours)
    }
}

/// Fronts `F_1..F_m` as lists of input indices, each in ascending order.
pub type FrontPartition = Vec<Vec<usize>>;

fn check(points: &[CostVector]) -> Result<(), MooError> {
    if points.is_empty() {
        return Err(MooError::EmptyInput);
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(MooError::NonFiniteCost(i));
    }
    Ok(())
}

/// Fast non-dominated sorting (domination counts and dominated sets).
pub fn non_dominated_sort(points: &[CostVector]) -> Result<FrontPartition, MooError> {
    check(points)?;
    let n = points.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if points[i].dominates(&points[j]) {
                dominates[i].push(j);
                dominated_by_count[j] += 1;
            } else if points[j].dominates(&points[i]) {
                dominates[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

/// Crowding distance of every point of one front. Boundary points of each
/// objective get `+inf`; ties in an objective are ordered by input index.
pub fn crowding_distance(front: &[CostVector]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut dist = vec![0.0; n];
    for obj in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            front[a].get(obj).total_cmp(&front[b].get(obj)).then(a.cmp(&b))
        });
        let lo = front[order[0]].get(obj);
        let hi = front[order[n - 1]].get(obj);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if dist[i].is_finite() {
                dist[i] += (front[order[w + 1]].get(obj) - front[order[w - 1]].get(obj)) / range;
            }
        }
    }
    dist
}

/// Full promotion order: fronts in order, inside a front by crowding
/// distance descending, then primary cost ascending, then input index.
pub fn promotion_order(points: &[CostVector]) -> Result<Vec<usize>, MooError> {
    let fronts = non_dominated_sort(points)?;
    let mut order = Vec::with_capacity(points.len());
    for front in fronts {
        let costs: Vec<CostVector> = front.iter().map(|&i| points[i]).collect();
        let cd = crowding_distance(&costs);
        let mut local: Vec<usize> = (0..front.len()).collect();
        local.sort_by(|&a, &b| {
            cd[b]
                .total_cmp(&cd[a])
                .then(costs[a].primary.total_cmp(&costs[b].primary))
                .then(front[a].cmp(&front[b]))
        });
        order.extend(local.into_iter().map(|l| front[l]));
    }
    Ok(order)
}

/// Indices of the `k` points promoted to the next rung.
pub fn select_top_k(points: &[CostVector], k: usize) -> Result<Vec<usize>, MooError> {
    if k == 0 || k > points.len() {
        return Err(MooError::KOutOfRange { k, n: points.len() });
    }
    let mut order = promotion_order(points)?;
    order.truncate(k);
    Ok(order)
}

/// Picks the front member maximizing `(1 - p̂) * (1 - r̂)`, where both
/// objectives are min-max normalized over the front itself.
pub fn area_incumbent(front: &[CostVector]) -> Result<usize, MooError> {
    check(front)?;
    let bounds = |obj: usize| {
        front.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.get(obj)), hi.max(p.get(obj)))
        })
    };
    let norm = |v: f64, (lo, hi): (f64, f64)| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    let (bp, br) = (bounds(0), bounds(1));
    let score = |p: &CostVector| (1.0 - norm(p.primary, bp)) * (1.0 - norm(p.runtime_hours, br));
    let best = (0..front.len())
        .max_by(|&a, &b| {
            score(&front[a])
                .total_cmp(&score(&front[b]))
                .then(front[b].primary.total_cmp(&front[a].primary))
                .then(b.cmp(&a))
        })
        .expect("non-empty");
    Ok(best)
}

/// Index of the lexicographically smallest `(primary, runtime, index)`.
pub fn argmin_primary(points: &[CostVector]) -> Option<usize> {
    (0..points.len()).min_by(|&a, &b| {
        points[a]
            .primary
            .total_cmp(&points[b].primary)
            .then(points[a].runtime_hours.total_cmp(&points[b].runtime_hours))
            .then(a.cmp(&b))
    })
}

/// Indices of the first front, ascending.
pub fn pareto_front(points: &[CostVector]) -> Result<Vec<usize>, MooError> {
    Ok(non_dominated_sort(points)?.into_iter().next().unwrap_or_default())
}
