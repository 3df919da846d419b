use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::dijkstra;
use crate::mesh::topology::Csr;
use crate::mesh::Point;

/// Normalized arc coordinate on a curve or cut surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParametrization {
    pub nodes: Vec<u32>,
    pub s: Vec<f64>,
    pub end0: Vec<u32>,
    pub end1: Vec<u32>,
}

impl BoundaryParametrization {
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.nodes.iter().copied().zip(self.s.iter().copied())
    }
}

/// Bi-eikonal coordinate `s = d0 / (d0 + d1)`, with `d0`, `d1` the shortest-path distances
/// along the curve's own edges to the two endpoint sets.
pub fn parametrize_boundary(
    points: &[Point],
    adj: &Csr,
    curve: &[u32],
    end0: &[u32],
    end1: &[u32],
) -> Result<BoundaryParametrization> {
    let members: BTreeSet<u32> = curve.iter().copied().collect();
    if end0.is_empty() || end1.is_empty() {
        return Err(Error::Topology("curve endpoint set is empty".into()));
    }
    for &e in end0.iter().chain(end1) {
        if !members.contains(&e) {
            return Err(Error::Topology(format!("endpoint {e} is not on the curve")));
        }
    }
    if end0.iter().any(|e| end1.contains(e)) {
        return Err(Error::Topology("curve endpoints overlap".into()));
    }
    let sp = |ends: &[u32]| {
        let src: Vec<(u32, f64)> = ends.iter().map(|&v| (v, 0.0)).collect();
        dijkstra(points, adj, &src, |v| members.contains(&v), None).dist
    };
    let (d0, d1) = (sp(end0), sp(end1));
    let nodes: Vec<u32> = members.iter().copied().collect();
    let mut s = Vec::with_capacity(nodes.len());
    for &v in &nodes {
        let (a, b) = (d0[v as usize], d1[v as usize]);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Topology(format!("curve is disconnected at node {v}")));
        }
        s.push(if a == 0.0 { 0.0 } else if b == 0.0 { 1.0 } else { a / (a + b) });
    }
    Ok(BoundaryParametrization { nodes, s, end0: end0.to_vec(), end1: end1.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn polyline(n: usize) -> (Vec<Point>, Csr) {
        let pts: Vec<Point> = (0..n).map(|i| Point::new(i as f64, (i as f64 * 0.7).sin(), 0.0)).collect();
        let pairs: Vec<(usize, u32)> = (0..n - 1).flat_map(|i| [(i, i as u32 + 1), (i + 1, i as u32)]).collect();
        let mut sorted = pairs.clone();
        sorted.sort_unstable();
        (pts, Csr::from_pairs(n, sorted.into_iter()))
    }

    #[test]
    fn endpoints_are_exact_and_s_increases() {
        let (pts, adj) = polyline(20);
        let curve: Vec<u32> = (0..20).collect();
        let p = parametrize_boundary(&pts, &adj, &curve, &[0], &[19]).unwrap();
        assert_eq!(p.s[0], 0.0);
        assert_eq!(p.s[19], 1.0);
        assert!(p.s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gap_is_a_topology_error() {
        let (pts, adj) = polyline(10);
        let curve: Vec<u32> = (0..10).filter(|&i| i != 4).collect();
        let err = parametrize_boundary(&pts, &adj, &curve, &[0], &[9]).unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }
}
