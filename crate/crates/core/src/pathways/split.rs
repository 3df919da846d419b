//! Nodal splitting that decouples RA and LA except through preserved bridges.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Atrium, LabelCatalog, Mesh, Structure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub interface: Vec<u32>,
    /// Nodes of elements with these structures keep their connectivity.
    pub preserved: Vec<Structure>,
}

impl SplitSpec {
    /// Every node shared by RA and LA elements, preserving the FO rim.
    pub fn shared(mesh: &Mesh, catalog: &LabelCatalog) -> Result<Self> {
        let sides = node_sides(mesh, catalog)?;
        let interface = (0..mesh.n_nodes() as u32).filter(|&v| sides[v as usize] == 3).collect();
        Ok(SplitSpec { interface, preserved: vec![Structure::FoRim] })
    }
}

/// Bit 1: touched by an RA element, bit 2: by an LA element.
fn node_sides(mesh: &Mesh, catalog: &LabelCatalog) -> Result<Vec<u8>> {
    let mut s = vec![0u8; mesh.n_nodes()];
    for (e, t) in mesh.elements.iter().enumerate() {
        let en = catalog.entry(mesh.tags[e]).ok_or_else(|| Error::Catalog(format!("tag {} is not in the catalog", mesh.tags[e])))?;
        let bit = if en.atrium == Atrium::Ra { 1 } else { 2 };
        for &v in t {
            s[v as usize] |= bit;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub mesh: Mesh,
    /// Original index of each appended node.
    pub duplicated: Vec<u32>,
}

/// Gives LA elements private copies of the interface nodes that are not preserved.
pub fn split_atria(mesh: &Mesh, catalog: &LabelCatalog, spec: &SplitSpec) -> Result<SplitResult> {
    let mut keep = vec![false; mesh.n_nodes()];
    for (e, t) in mesh.elements.iter().enumerate() {
        let en = catalog.entry(mesh.tags[e]).ok_or_else(|| Error::Catalog(format!("tag {} is not in the catalog", mesh.tags[e])))?;
        if spec.preserved.contains(&en.structure) {
            for &v in t {
                keep[v as usize] = true;
            }
        }
    }
    let sides = node_sides(mesh, catalog)?;
    let targets: BTreeSet<u32> = spec.interface.iter().copied().filter(|&v| !keep[v as usize]).collect();
    for &v in &targets {
        if v as usize >= mesh.n_nodes() {
            return Err(Error::Topology(format!("interface node {v} is out of range")));
        }
        if sides[v as usize] != 3 {
            return Err(Error::Topology(format!("interface node {v} is not shared by both atria")));
        }
    }
    let mut remap = vec![u32::MAX; mesh.n_nodes()];
    let mut nodes = mesh.nodes.clone();
    let mut duplicated = Vec::with_capacity(targets.len());
    for &v in &targets {
        remap[v as usize] = nodes.len() as u32;
        nodes.push(mesh.nodes[v as usize]);
        duplicated.push(v);
    }
    let mut elements = mesh.elements.clone();
    for (e, t) in elements.iter_mut().enumerate() {
        if catalog.entry(mesh.tags[e]).map(|en| en.atrium) == Some(Atrium::La) {
            for v in t.iter_mut() {
                if remap[*v as usize] != u32::MAX {
                    *v = remap[*v as usize];
                }
            }
        }
    }
    let mut out = Mesh::new(nodes, elements, mesh.tags.clone())?;
    out.fibers = mesh.fibers.clone();
    Ok(SplitResult { mesh: out, duplicated })
}

/// Number of node-connected element components.
pub fn node_components(mesh: &Mesh) -> usize {
    let mut parent: Vec<u32> = (0..mesh.n_nodes() as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    for t in &mesh.elements {
        for &v in &t[1..] {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, v));
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    let used: BTreeSet<u32> = mesh.elements.iter().flatten().copied().collect();
    let roots: BTreeSet<u32> = used.into_iter().map(|v| find(&mut parent, v)).collect();
    roots.len()
}
