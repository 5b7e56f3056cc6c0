use std::cmp::Ordering;

use super::CostPoint;

fn by_cost(a: &CostPoint, b: &CostPoint) -> Ordering {
    a.comm.total_cmp(&b.comm).then(a.comp.total_cmp(&b.comp))
}

/// For each input point, whether no other point is at least as good in both
/// coordinates and strictly better in one.
pub fn pareto_flags(points: &[CostPoint]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| by_cost(&points[i], &points[j]));
    let mut flags = vec![false; points.len()];
    // Smallest comp among points with strictly smaller comm.
    let mut best_before = f64::INFINITY;
    let mut start = 0;
    while start < order.len() {
        let comm = points[order[start]].comm;
        let mut end = start;
        while end < order.len() && points[order[end]].comm == comm {
            end += 1;
        }
        // Sorted by comp within the group, so the first entry is the minimum.
        let group_min = points[order[start]].comp;
        if group_min < best_before {
            for &i in &order[start..end] {
                if points[i].comp == group_min {
                    flags[i] = true;
                }
            }
            best_before = group_min;
        }
        start = end;
    }
    flags
}

/// Non-dominated points, ties kept, sorted by communication cost.
pub fn pareto_frontier(points: &[CostPoint]) -> Vec<CostPoint> {
    let flags = pareto_flags(points);
    let mut front: Vec<CostPoint> = points
        .iter()
        .zip(flags)
        .filter_map(|(p, keep)| keep.then_some(*p))
        .collect();
    front.sort_by(by_cost);
    front
}
