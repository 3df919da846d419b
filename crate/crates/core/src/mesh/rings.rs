//! Orifice rings: closed loops of surface nodes where the endocardial and epicardial layers of a
//! vein or valve sleeve meet at the hole rim.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Atrium, LabelCatalog, Layer, Mesh, Point, Structure, Topology};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrificeRing {
    pub structure: Structure,
    pub atrium: Atrium,
    /// Ordered closed loop, starting at the lowest node index.
    pub nodes: Vec<u32>,
    pub centroid: [f64; 3],
}

impl OrificeRing {
    pub fn centroid(&self) -> Point {
        Point::from(self.centroid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RingSet {
    pub rings: Vec<OrificeRing>,
}

impl RingSet {
    pub fn get(&self, s: Structure) -> Option<&OrificeRing> {
        self.rings.iter().find(|r| r.structure == s)
    }

    pub fn require(&self, s: Structure) -> Result<&OrificeRing> {
        self.get(s).ok_or_else(|| Error::Topology(format!("no `{}` ring", s.name())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rings serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct Cluster {
    nodes: Vec<u32>,
    centroid: Point,
}

fn clusters_for(
    mesh: &Mesh,
    topo: &Topology,
    catalog: &LabelCatalog,
    structure: Structure,
    on_boundary: &[bool],
) -> Result<Vec<Cluster>> {
    let n = mesh.n_nodes();
    let mut endo = vec![false; n];
    let mut epi = vec![false; n];
    for (e, t) in mesh.elements.iter().enumerate() {
        let Some(entry) = catalog.entry(mesh.tags[e]) else { continue };
        if entry.structure != structure {
            continue;
        }
        let flag = match entry.layer {
            Layer::Endo => &mut endo,
            Layer::Epi => &mut epi,
            Layer::Through => continue,
        };
        for &v in t {
            flag[v as usize] = true;
        }
    }
    let cand: Vec<bool> = (0..n).map(|v| endo[v] && epi[v] && on_boundary[v]).collect();
    let mut adj: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for f in &topo.boundary {
        for k in 0..3 {
            let (a, b) = (f.nodes[k], f.nodes[(k + 1) % 3]);
            if cand[a as usize] && cand[b as usize] {
                adj.entry(a).or_default().insert(b);
                adj.entry(b).or_default().insert(a);
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (&start, _) in adj.iter() {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = vec![start];
        seen.insert(start);
        let mut i = 0;
        while i < comp.len() {
            for &w in &adj[&comp[i]] {
                if seen.insert(w) {
                    comp.push(w);
                }
            }
            i += 1;
        }
        if let Some(&bad) = comp.iter().find(|v| adj[v].len() != 2) {
            return Err(Error::Topology(format!(
                "`{}` ring is not a simple closed cycle: node {bad} has {} ring neighbours",
                structure.name(),
                adj[&bad].len()
            )));
        }
        let first = *comp.iter().min().unwrap();
        let mut order = vec![first];
        let mut prev = first;
        let mut cur = *adj[&first].iter().next().unwrap();
        while cur != first {
            order.push(cur);
            let next = *adj[&cur].iter().find(|&&w| w != prev).unwrap();
            prev = cur;
            cur = next;
        }
        if order.len() != comp.len() || order.len() < 3 {
            return Err(Error::Topology(format!("`{}` ring is not a single closed cycle", structure.name())));
        }
        let centroid = order.iter().map(|&v| mesh.nodes[v as usize]).sum::<Point>() / order.len() as f64;
        out.push(Cluster { nodes: order, centroid });
    }
    Ok(out)
}

fn present(mesh: &Mesh, catalog: &LabelCatalog) -> BTreeSet<Structure> {
    let tags: BTreeSet<u16> = mesh.tags.iter().copied().collect();
    tags.iter().filter_map(|&t| catalog.entry(t).map(|e| e.structure)).collect()
}

/// Finds one ring per orifice. Undivided pulmonary-vein tags must yield exactly two loops, the
/// one nearer the SVC being superior.
pub fn detect_orifice_rings(mesh: &Mesh, topo: &Topology, catalog: &LabelCatalog) -> Result<RingSet> {
    let mut on_boundary = vec![false; mesh.n_nodes()];
    for f in &topo.boundary {
        for &v in &f.nodes {
            on_boundary[v as usize] = true;
        }
    }
    let have = present(mesh, catalog);
    let mut rings = Vec::new();
    let single = |s: Structure, atrium: Atrium, rings: &mut Vec<OrificeRing>| -> Result<()> {
        let cl = clusters_for(mesh, topo, catalog, s, &on_boundary)?;
        if cl.len() != 1 {
            return Err(Error::Topology(format!("`{}` produced {} rings, expected one", s.name(), cl.len())));
        }
        let c = cl.into_iter().next().unwrap();
        rings.push(OrificeRing { structure: s, atrium, nodes: c.nodes, centroid: c.centroid.into() });
        Ok(())
    };
    for (s, a) in [
        (Structure::Svc, Atrium::Ra),
        (Structure::Ivc, Atrium::Ra),
        (Structure::Tv, Atrium::Ra),
        (Structure::Cs, Atrium::Ra),
        (Structure::Mv, Atrium::La),
    ] {
        if !have.contains(&s) {
            return Err(Error::Catalog(format!("mesh carries no `{}` tags", s.name())));
        }
        single(s, a, &mut rings)?;
    }
    let svc = rings[0].centroid();
    for (generic, sup, inf) in [
        (Structure::Rpv, Structure::Rspv, Structure::Ripv),
        (Structure::Lpv, Structure::Lspv, Structure::Lipv),
    ] {
        if have.contains(&sup) && have.contains(&inf) {
            single(sup, Atrium::La, &mut rings)?;
            single(inf, Atrium::La, &mut rings)?;
            continue;
        }
        if !have.contains(&generic) {
            return Err(Error::Catalog(format!("mesh carries no `{}` tags", generic.name())));
        }
        let mut cl = clusters_for(mesh, topo, catalog, generic, &on_boundary)?;
        if cl.len() != 2 {
            return Err(Error::Topology(format!(
                "`{}` produced {} rings, expected two",
                generic.name(),
                cl.len()
            )));
        }
        let d0 = (cl[0].centroid - svc).norm();
        let d1 = (cl[1].centroid - svc).norm();
        if d1 < d0 {
            cl.swap(0, 1);
        }
        for (c, s) in cl.into_iter().zip([sup, inf]) {
            rings.push(OrificeRing { structure: s, atrium: Atrium::La, nodes: c.nodes, centroid: c.centroid.into() });
        }
    }
    let mut owner: BTreeMap<u32, Structure> = BTreeMap::new();
    for r in &rings {
        for &v in &r.nodes {
            if let Some(prev) = owner.insert(v, r.structure) {
                return Err(Error::Topology(format!(
                    "node {v} lies on both `{}` and `{}` rings",
                    prev.name(),
                    r.structure.name()
                )));
            }
        }
    }
    Ok(RingSet { rings })
}

/// Retags undivided pulmonary-vein elements as superior or inferior by the nearest ring centroid.
pub fn split_vein_tags(mesh: &Mesh, catalog: &LabelCatalog, rings: &RingSet) -> Result<Vec<u16>> {
    let mut tags = mesh.tags.clone();
    for (generic, sup, inf) in [
        (Structure::Rpv, Structure::Rspv, Structure::Ripv),
        (Structure::Lpv, Structure::Lspv, Structure::Lipv),
    ] {
        let cs = rings.require(sup)?.centroid();
        let ci = rings.require(inf)?.centroid();
        for (e, t) in tags.iter_mut().enumerate() {
            let Some(entry) = catalog.entry(*t) else { continue };
            if entry.structure != generic {
                continue;
            }
            let c = mesh.centroid(e);
            let s = if (c - cs).norm() <= (c - ci).norm() { sup } else { inf };
            *t = catalog.require(entry.atrium, s, entry.layer)?;
        }
    }
    Ok(tags)
}
