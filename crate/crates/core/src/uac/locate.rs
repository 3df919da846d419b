use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use super::coords::UacCoordinates;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UacPoint {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub side: u8,
}

/// Nearest-node lookup in coordinate space, one tree per atrium.
pub struct UacLocator {
    weights: [f64; 3],
    trees: [RTree<GeomWithData<[f64; 3], u32>>; 2],
}

pub const DEFAULT_WEIGHTS: [f64; 3] = [1.0, 1.0, 0.2];

impl UacLocator {
    pub fn new(uac: &UacCoordinates, weights: [f64; 3]) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config(format!("locate weights must be positive, got {weights:?}")));
        }
        let mut items = [Vec::new(), Vec::new()];
        for i in 0..uac.n_nodes() {
            let c = uac.get(i as u32);
            let w = [c[0] * weights[0], c[1] * weights[1], c[2] * weights[2]];
            items[uac.side[i].min(1) as usize].push(GeomWithData::new(w, i as u32));
        }
        let [a, b] = items;
        Ok(UacLocator { weights, trees: [RTree::bulk_load(a), RTree::bulk_load(b)] })
    }

    /// Node of `query.side` closest to the query; ties go to the lowest node index.
    pub fn locate(&self, q: &UacPoint) -> Result<u32> {
        for (name, v) in [("alpha", q.alpha), ("beta", q.beta), ("gamma", q.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if q.side > 1 {
            return Err(Error::Domain(format!("side must be 0 or 1, got {}", q.side)));
        }
        let w = [q.alpha * self.weights[0], q.beta * self.weights[1], q.gamma * self.weights[2]];
        let d2 = |p: &[f64; 3]| (0..3).map(|k| (p[k] - w[k]).powi(2)).sum::<f64>();
        let mut it = self.trees[q.side as usize].nearest_neighbor_iter(&w);
        let first = it.next().ok_or_else(|| Error::Domain(format!("no nodes on side {}", q.side)))?;
        let dmin = d2(first.geom());
        // Equidistant nodes come next in the iteration; keep the lowest index.
        let node = it.take_while(|n| d2(n.geom()) <= dmin).map(|n| n.data).fold(first.data, u32::min);
        Ok(node)
    }
}
