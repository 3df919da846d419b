//! Shortest paths over mesh edges.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::mesh::topology::Csr;
use crate::mesh::Point;

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, u32);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct ShortestPaths {
    pub dist: Vec<f64>,
    pub pred: Vec<u32>,
}

impl ShortestPaths {
    /// Node sequence from a source to `target`, or `None` if unreachable.
    pub fn path_to(&self, target: u32) -> Option<Vec<u32>> {
        if !self.dist[target as usize].is_finite() {
            return None;
        }
        let mut p = vec![target];
        let mut cur = target;
        while self.pred[cur as usize] != u32::MAX {
            cur = self.pred[cur as usize];
            p.push(cur);
        }
        p.reverse();
        Some(p)
    }
}

/// Dijkstra with Euclidean edge lengths from sources carrying initial distances, over nodes
/// admitted by `allow`. Stops early once `stop` is settled.
pub fn dijkstra(
    nodes: &[Point],
    adj: &Csr,
    sources: &[(u32, f64)],
    allow: impl Fn(u32) -> bool,
    stop: Option<u32>,
) -> ShortestPaths {
    let n = nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![u32::MAX; n];
    let mut heap = BinaryHeap::new();
    for &(s, d) in sources {
        if allow(s) && d < dist[s as usize] {
            dist[s as usize] = d;
            heap.push(Item(d, s));
        }
    }
    let mut done = vec![false; n];
    while let Some(Item(d, u)) = heap.pop() {
        if done[u as usize] {
            continue;
        }
        done[u as usize] = true;
        if Some(u) == stop {
            break;
        }
        for &v in adj.row(u as usize) {
            if done[v as usize] || !allow(v) {
                continue;
            }
            let nd = d + (nodes[u as usize] - nodes[v as usize]).norm();
            if nd < dist[v as usize] {
                dist[v as usize] = nd;
                pred[v as usize] = u;
                heap.push(Item(nd, v));
            }
        }
    }
    ShortestPaths { dist, pred }
}

/// Length of a node polyline.
pub fn polyline_length(nodes: &[Point], path: &[u32]) -> f64 {
    path.windows(2).map(|w| (nodes[w[0] as usize] - nodes[w[1] as usize]).norm()).sum()
}
