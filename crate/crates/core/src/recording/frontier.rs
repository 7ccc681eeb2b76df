use std::collections::BTreeSet;

use super::{GlobalView, RecorderConfig};
use crate::geometry::Pose2;
use crate::graph::SituationalGraph;
use crate::grid::{CellState, GridMap};

/// A free cell with at least one unknown 4-neighbour (off-grid counts as unknown).
pub fn is_frontier_cell(grid: &GridMap, i: i64, j: i64) -> bool {
    grid.get(i, j) == Some(CellState::Free)
        && [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|(di, dj)| grid.get(i + di, j + dj).unwrap_or(CellState::Unknown) == CellState::Unknown)
}

/// 8-connected clusters of frontier cells, each sorted by (j, i).
pub fn frontier_clusters(grid: &GridMap) -> Vec<Vec<(i64, i64)>> {
    let cells: BTreeSet<(i64, i64)> = grid
        .iter_cells()
        .filter(|&(i, j, _)| is_frontier_cell(grid, i, j))
        .map(|(i, j, _)| (j, i))
        .collect();
    let mut seen = BTreeSet::new();
    let mut clusters = Vec::new();
    for &start in &cells {
        if !seen.insert(start) {
            continue;
        }
        let mut cluster = vec![start];
        let mut stack = vec![start];
        while let Some((j, i)) = stack.pop() {
            for dj in -1..=1 {
                for di in -1..=1 {
                    let n = (j + dj, i + di);
                    if cells.contains(&n) && seen.insert(n) {
                        cluster.push(n);
                        stack.push(n);
                    }
                }
            }
        }
        cluster.sort();
        clusters.push(cluster.into_iter().map(|(j, i)| (i, j)).collect());
    }
    clusters
}

/// Frontier candidates: one per sufficiently large cluster, at the member
/// cell nearest the cluster centroid. Candidates closer than
/// `frontier_separation` to any graph node are dropped. Ordered by cluster
/// size (descending), then x, then y.
pub fn extract_frontiers(view: &GlobalView, graph: &SituationalGraph, config: &RecorderConfig) -> Vec<Pose2> {
    let grid = view.grid();
    let mut out: Vec<(usize, Pose2)> = Vec::new();
    for cluster in frontier_clusters(grid) {
        if cluster.len() < config.frontier_min_cluster {
            continue;
        }
        let centres: Vec<(f64, f64)> = cluster.iter().map(|&(i, j)| grid.cell_center(i, j)).collect();
        let n = centres.len() as f64;
        let cx = centres.iter().map(|c| c.0).sum::<f64>() / n;
        let cy = centres.iter().map(|c| c.1).sum::<f64>() / n;
        // members are in (j, i) order, so the first minimum is the lowest (y, x)
        let mut best = centres[0];
        let mut best_d = f64::INFINITY;
        for &c in &centres {
            let d = (c.0 - cx).hypot(c.1 - cy);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        let pose = Pose2::at(best.0, best.1);
        let crowded = graph
            .nodes()
            .any(|node| node.pose.distance(&pose) < config.frontier_separation);
        if !crowded {
            out.push((cluster.len(), pose));
        }
    }
    out.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(a.1.x.total_cmp(&b.1.x))
            .then(a.1.y.total_cmp(&b.1.y))
    });
    out.into_iter().map(|(_, p)| p).collect()
}
