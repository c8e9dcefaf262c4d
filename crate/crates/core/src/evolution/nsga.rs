//! Non-dominated sorting, crowding distance and elitist truncation.
//!
//! All objectives are minimized. Ties are resolved by input index so every
//! routine is a deterministic function of its input order.

use std::cmp::Ordering;

/// `a` dominates `b`: no worse on every objective, strictly better on one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Fast non-dominated sort. Front 0 is the non-dominated set; indices inside
/// each front are ascending.
pub fn non_dominated_sort<O: AsRef<[f64]>>(points: &[O]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (points[i].as_ref(), points[j].as_ref());
            if dominates(a, b) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if dominates(b, a) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front. Fronts of one or two
/// members are all boundary. Per objective, members are ordered by
/// (value, position); the first and last get infinity and interior members
/// add their normalized neighbour gap. Objectives with zero range contribute
/// nothing, so duplicated vectors get finite, equal distances.
pub fn crowding_distance<O: AsRef<[f64]>>(front: &[O]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].as_ref().len();
    let mut distance = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        let value = |i: usize| front[i].as_ref()[k];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        let lo = value(order[0]);
        let hi = value(order[n - 1]);
        let range = hi - lo;
        if !(range > 0.0) {
            continue;
        }
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        for w in 1..(n - 1) {
            let gap = (value(order[w + 1]) - value(order[w - 1])) / range;
            distance[order[w]] += gap;
        }
    }
    distance
}

/// Front rank and within-front crowding for every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub fronts: Vec<Vec<usize>>,
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
}

pub fn rank_and_crowd<O: AsRef<[f64]>>(points: &[O]) -> Ranking {
    let fronts = non_dominated_sort(points);
    let mut rank = vec![0; points.len()];
    let mut crowding = vec![0.0; points.len()];
    for (r, front) in fronts.iter().enumerate() {
        let members: Vec<&[f64]> = front.iter().map(|&i| points[i].as_ref()).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&members)) {
            rank[i] = r;
            crowding[i] = d;
        }
    }
    Ranking {
        fronts,
        rank,
        crowding,
    }
}

/// Crowded-comparison order: lower rank first, then larger crowding distance.
pub fn crowded_cmp(rank_a: usize, crowd_a: f64, rank_b: usize, crowd_b: f64) -> Ordering {
    rank_a.cmp(&rank_b).then(crowd_b.total_cmp(&crowd_a))
}

/// Elitist truncation to `mu` survivors. Whole fronts are taken in rank
/// order; the front that overflows is cut by descending crowding distance,
/// ties by input index. Returned indices are ascending.
pub fn cull_indices<O: AsRef<[f64]>>(points: &[O], mu: usize) -> (Vec<usize>, Ranking) {
    let ranking = rank_and_crowd(points);
    let mut selected = Vec::with_capacity(mu.min(points.len()));
    for front in &ranking.fronts {
        let room = mu - selected.len();
        if room == 0 {
            break;
        }
        if front.len() <= room {
            selected.extend_from_slice(front);
        } else {
            let mut last = front.clone();
            last.sort_by(|&a, &b| {
                ranking.crowding[b]
                    .total_cmp(&ranking.crowding[a])
                    .then(a.cmp(&b))
            });
            selected.extend_from_slice(&last[..room]);
        }
    }
    selected.sort_unstable();
    (selected, ranking)
}
