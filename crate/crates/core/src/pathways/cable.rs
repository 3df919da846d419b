//! Inter-atrial cables: sub-epicardial shortest paths bridged by a straight free-space span.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{dijkstra, polyline_length};
use crate::mesh::{Mesh, Topology};
use crate::uac::{UacCoordinates, UacLocator, UacPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cable {
    pub name: String,
    pub ra_anchor: UacPoint,
    pub la_anchor: UacPoint,
    /// RA anchor → RA exit, then LA entry → LA anchor.
    pub nodes: Vec<u32>,
    /// Index in `nodes` of the first LA node.
    pub la_start: usize,
    pub length_mm: f64,
    pub velocity: f64,
    pub delay_ms: f64,
}

impl Cable {
    pub fn ra_node(&self) -> u32 {
        self.nodes[0]
    }

    pub fn la_node(&self) -> u32 {
        *self.nodes.last().unwrap()
    }

    /// Same path at another conduction velocity (m/s = mm/ms).
    pub fn with_velocity(&self, v: f64) -> Result<Cable> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("cable velocity must be positive, got {v}")));
        }
        Ok(Cable { velocity: v, delay_ms: self.length_mm / v, ..self.clone() })
    }
}

/// Epicardial nodes (γ = 1) of one side.
fn surface(uac: &UacCoordinates, side: u8) -> Vec<u32> {
    (0..uac.n_nodes() as u32).filter(|&v| uac.side[v as usize] == side && uac.gamma[v as usize] >= 1.0 - 1e-9).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn build_cable(
    name: &str,
    mesh: &Mesh,
    topo: &Topology,
    uac: &UacCoordinates,
    locator: &UacLocator,
    ra_anchor: UacPoint,
    la_anchor: UacPoint,
    velocity: f64,
    gamma_min: f64,
) -> Result<Cable> {
    if ra_anchor.side != 0 || la_anchor.side != 1 {
        return Err(Error::Anchor(format!("{name}: anchors must lie on side 0 (RA) and side 1 (LA)")));
    }
    let ra = locator.locate(&ra_anchor).map_err(|e| Error::Anchor(format!("{name}: RA anchor: {e}")))?;
    let la = locator.locate(&la_anchor).map_err(|e| Error::Anchor(format!("{name}: LA anchor: {e}")))?;
    build_cable_between(name, mesh, topo, uac, ra, la, velocity, gamma_min)
        .map(|c| Cable { ra_anchor, la_anchor, ..c })
}

/// Cable between two resolved nodes.
#[allow(clippy::too_many_arguments)]
pub fn build_cable_between(
    name: &str,
    mesh: &Mesh,
    topo: &Topology,
    uac: &UacCoordinates,
    ra: u32,
    la: u32,
    velocity: f64,
    gamma_min: f64,
) -> Result<Cable> {
    if !(velocity > 0.0) || !velocity.is_finite() {
        return Err(Error::Config(format!("{name}: cable velocity must be positive, got {velocity}")));
    }
    for (what, v, side) in [("RA", ra, 0u8), ("LA", la, 1u8)] {
        if uac.side[v as usize] != side {
            return Err(Error::Anchor(format!("{name}: {what} anchor node {v} is on the wrong side")));
        }
        if uac.gamma[v as usize] < gamma_min {
            return Err(Error::Path(format!(
                "{name}: {what} anchor node {v} has γ = {:.3} below γ_min = {gamma_min}",
                uac.gamma[v as usize]
            )));
        }
    }
    let allow = |side: u8| move |v: u32| uac.side[v as usize] == side && uac.gamma[v as usize] >= gamma_min;
    let from_ra = dijkstra(&mesh.nodes, &topo.node_neighbors, &[(ra, 0.0)], allow(0), None);
    let exits: Vec<u32> = surface(uac, 0).into_iter().filter(|&v| from_ra.dist[v as usize].is_finite()).collect();
    let entries: Vec<u32> = surface(uac, 1).into_iter().filter(|&v| allow(1)(v)).collect();
    if exits.is_empty() || entries.is_empty() {
        return Err(Error::Path(format!("{name}: no admissible epicardial exit (γ_min = {gamma_min})")));
    }
    // Cheapest exit for every LA entry: RA path length plus the straight gap.
    let seeds: Vec<(u32, f64, u32)> = entries
        .par_iter()
        .map(|&y| {
            let py = mesh.nodes[y as usize];
            let mut best = (f64::INFINITY, u32::MAX);
            for &x in &exits {
                let d = from_ra.dist[x as usize] + (mesh.nodes[x as usize] - py).norm();
                if d < best.0 {
                    best = (d, x);
                }
            }
            (y, best.0, best.1)
        })
        .collect();
    let src: Vec<(u32, f64)> = seeds.iter().map(|&(y, d, _)| (y, d)).collect();
    let to_la = dijkstra(&mesh.nodes, &topo.node_neighbors, &src, allow(1), Some(la));
    let la_path = to_la.path_to(la).ok_or_else(|| Error::Path(format!("{name}: LA anchor unreachable above γ_min = {gamma_min}")))?;
    let entry = la_path[0];
    let exit = seeds.iter().find(|s| s.0 == entry).map(|s| s.2).unwrap();
    let ra_path = from_ra.path_to(exit).unwrap();
    let la_start = ra_path.len();
    let mut nodes = ra_path;
    nodes.extend(la_path);
    let length_mm = polyline_length(&mesh.nodes, &nodes) / 1000.0;
    Ok(Cable {
        name: name.to_string(),
        ra_anchor: UacPoint { alpha: uac.alpha[ra as usize], beta: uac.beta[ra as usize], gamma: uac.gamma[ra as usize], side: 0 },
        la_anchor: UacPoint { alpha: uac.alpha[la as usize], beta: uac.beta[la as usize], gamma: uac.gamma[la as usize], side: 1 },
        nodes,
        la_start,
        length_mm,
        velocity,
        delay_ms: length_mm / velocity,
    })
}
