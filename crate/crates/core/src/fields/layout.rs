//! Per-atrium geometry shared by the field solves and the coordinate system: element sets,
//! transmural surfaces, the plane cut into septal/lateral (RA) or anterior/posterior (LA)
//! parts, the three cut interfaces and the two halves of each orifice ring.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Atrium, LabelCatalog, Layer, Mesh, Point, RingSet, Structure, SurfaceClass, Topology};

/// RA: septal (`A`) / lateral (`B`). LA: anterior (`A`) / posterior (`B`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    A,
    B,
}

/// Orifices in the roles they play for each atrium.
#[derive(Debug, Clone, Copy)]
pub struct Roles {
    /// α = 0 vein.
    pub vein_a: Structure,
    /// α = 1 vein.
    pub vein_b: Structure,
    pub valve: Structure,
    pub appendage: Structure,
    pub appendage_part: Part,
}

impl Roles {
    pub fn of(atrium: Atrium) -> Roles {
        match atrium {
            Atrium::Ra => Roles {
                vein_a: Structure::Ivc,
                vein_b: Structure::Svc,
                valve: Structure::Tv,
                appendage: Structure::Raa,
                appendage_part: Part::B,
            },
            Atrium::La => Roles {
                vein_a: Structure::Lspv,
                vein_b: Structure::Rspv,
                valve: Structure::Mv,
                appendage: Structure::Laa,
                appendage_part: Part::A,
            },
        }
    }
}

/// A cut interface between the two parts, with the ring nodes at each end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    pub nodes: Vec<u32>,
    pub end0: Vec<u32>,
    pub end1: Vec<u32>,
}

/// The part of a ring lying in one part, as an open path with its end sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingHalf {
    pub structure: Structure,
    pub part: Part,
    pub nodes: Vec<u32>,
    pub end0: Vec<u32>,
    pub end1: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtriumLayout {
    pub atrium: Atrium,
    pub elements: Vec<u32>,
    /// Part of each entry of `elements`.
    pub parts: Vec<Part>,
    pub endo: Vec<u32>,
    pub epi: Vec<u32>,
    pub center_of_mass: [f64; 3],
    pub plane_point: [f64; 3],
    /// Points into part `A`.
    pub plane_normal: [f64; 3],
    /// vein_a (s=0) to vein_b (s=1).
    pub roof: Interface,
    /// valve (s=0) to vein_a (s=1).
    pub valve_a: Interface,
    /// valve (s=0) to vein_b (s=1).
    pub valve_b: Interface,
    /// Vein halves run from the valve interface (s=0) to the roof (s=1); valve halves from the
    /// vein_a interface (s=0) to the vein_b interface (s=1).
    pub halves: Vec<RingHalf>,
    pub appendage_tip: Vec<u32>,
}

impl AtriumLayout {
    pub fn half(&self, s: Structure, part: Part) -> Result<&RingHalf> {
        self.halves
            .iter()
            .find(|h| h.structure == s && h.part == part)
            .ok_or_else(|| Error::Topology(format!("no {part:?} half of `{}`", s.name())))
    }

    pub fn part_elements(&self, part: Part) -> Vec<u32> {
        self.elements.iter().zip(&self.parts).filter(|(_, p)| **p == part).map(|(e, _)| *e).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiatrialLayout {
    pub ra: AtriumLayout,
    pub la: AtriumLayout,
}

impl BiatrialLayout {
    pub fn get(&self, a: Atrium) -> &AtriumLayout {
        match a {
            Atrium::Ra => &self.ra,
            Atrium::La => &self.la,
        }
    }

    pub fn build(mesh: &Mesh, topo: &Topology, catalog: &LabelCatalog, rings: &RingSet) -> Result<Self> {
        let classes = topo.classify_surface(mesh, catalog, 50.0);
        let la_com = mesh.center_of_mass(atrium_elements(mesh, catalog, Atrium::La).into_iter().map(|e| e as usize));
        let ra = build_atrium(mesh, topo, catalog, rings, &classes, Atrium::Ra, |n, p0| {
            n.dot(&(la_com - p0)) >= 0.0
        })?;
        let ipv = (rings.require(Structure::Lipv)?.centroid() + rings.require(Structure::Ripv)?.centroid()) / 2.0;
        let la = build_atrium(mesh, topo, catalog, rings, &classes, Atrium::La, |n, p0| n.dot(&(ipv - p0)) < 0.0)?;
        Ok(BiatrialLayout { ra, la })
    }
}

pub fn atrium_elements(mesh: &Mesh, catalog: &LabelCatalog, atrium: Atrium) -> Vec<u32> {
    (0..mesh.n_elements() as u32)
        .filter(|&e| catalog.entry(mesh.tags[e as usize]).map(|x| x.atrium) == Some(atrium))
        .collect()
}

fn components(topo: &Topology, set: &[bool]) -> Vec<Vec<u32>> {
    let mut seen = vec![false; set.len()];
    let mut out = Vec::new();
    for s in 0..set.len() {
        if !set[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s as u32];
        let mut i = 0;
        while i < comp.len() {
            for &w in topo.node_neighbors.row(comp[i] as usize) {
                if set[w as usize] && !seen[w as usize] {
                    seen[w as usize] = true;
                    comp.push(w);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn build_atrium(
    mesh: &Mesh,
    topo: &Topology,
    catalog: &LabelCatalog,
    rings: &RingSet,
    classes: &[SurfaceClass],
    atrium: Atrium,
    normal_points_to_a: impl Fn(&Point, &Point) -> bool,
) -> Result<AtriumLayout> {
    let roles = Roles::of(atrium);
    let elements = atrium_elements(mesh, catalog, atrium);
    if elements.is_empty() {
        return Err(Error::Catalog(format!("no {atrium:?} elements")));
    }
    let com = mesh.center_of_mass(elements.iter().map(|&e| e as usize));
    let ra = rings.require(roles.vein_a)?;
    let rb = rings.require(roles.vein_b)?;
    let rv = rings.require(roles.valve)?;
    let p0 = ra.centroid();
    let mut normal = (rb.centroid() - p0).cross(&(com - p0));
    if normal.norm() == 0.0 {
        return Err(Error::Topology(format!("{atrium:?} cut plane is degenerate")));
    }
    normal /= normal.norm();
    if !normal_points_to_a(&normal, &p0) {
        normal = -normal;
    }
    let parts: Vec<Part> = elements
        .iter()
        .map(|&e| {
            let entry = catalog.entry(mesh.tags[e as usize]).unwrap();
            if entry.structure == roles.appendage {
                roles.appendage_part
            } else if normal.dot(&(mesh.centroid(e as usize) - p0)) >= 0.0 {
                Part::A
            } else {
                Part::B
            }
        })
        .collect();
    let n = mesh.n_nodes();
    let mut in_a = vec![false; n];
    let mut in_b = vec![false; n];
    for (&e, &p) in elements.iter().zip(&parts) {
        let flag = if p == Part::A { &mut in_a } else { &mut in_b };
        for &v in &mesh.elements[e as usize] {
            flag[v as usize] = true;
        }
    }
    let iface: Vec<bool> = (0..n).map(|v| in_a[v] && in_b[v]).collect();
    let ring_set = |r: &crate::mesh::OrificeRing| r.nodes.iter().copied().collect::<BTreeSet<u32>>();
    let (sa, sb, sv) = (ring_set(ra), ring_set(rb), ring_set(rv));
    let mut roof = None;
    let mut valve_a = None;
    let mut valve_b = None;
    for comp in components(topo, &iface) {
        let touch = |s: &BTreeSet<u32>| comp.iter().filter(|v| s.contains(v)).copied().collect::<Vec<u32>>();
        let (ta, tb, tv) = (touch(&sa), touch(&sb), touch(&sv));
        let slot = match (!ta.is_empty(), !tb.is_empty(), !tv.is_empty()) {
            (true, true, false) => Some((&mut roof, ta, tb)),
            (true, false, true) => Some((&mut valve_a, tv, ta)),
            (false, true, true) => Some((&mut valve_b, tv, tb)),
            (false, false, false) => None,
            _ => {
                return Err(Error::Topology(format!(
                    "{atrium:?} cut interface touches an unexpected combination of orifices"
                )))
            }
        };
        if let Some((dst, end0, end1)) = slot {
            if dst.is_some() {
                return Err(Error::Topology(format!("{atrium:?} cut produced a duplicate interface")));
            }
            *dst = Some(Interface { nodes: comp, end0, end1 });
        }
    }
    let take = |x: Option<Interface>, what: &str| {
        x.ok_or_else(|| Error::Topology(format!("{atrium:?} cut interface `{what}` not found")))
    };
    let roof = take(roof, "roof")?;
    let valve_a = take(valve_a, "valve to first vein")?;
    let valve_b = take(valve_b, "valve to second vein")?;

    let member = |set: &Interface| set.nodes.iter().copied().collect::<BTreeSet<u32>>();
    let (m_roof, m_va, m_vb) = (member(&roof), member(&valve_a), member(&valve_b));
    let mut halves = Vec::new();
    for (s, start, end) in [
        (roles.vein_a, &m_va, &m_roof),
        (roles.vein_b, &m_vb, &m_roof),
        (roles.valve, &m_va, &m_vb),
    ] {
        let ring = rings.require(s)?;
        for part in [Part::A, Part::B] {
            let flag = if part == Part::A { &in_a } else { &in_b };
            let nodes: Vec<u32> = ring.nodes.iter().copied().filter(|&v| flag[v as usize]).collect();
            let end0: Vec<u32> = nodes.iter().copied().filter(|v| start.contains(v)).collect();
            let end1: Vec<u32> = nodes.iter().copied().filter(|v| end.contains(v)).collect();
            if end0.is_empty() || end1.is_empty() {
                return Err(Error::Topology(format!(
                    "{part:?} half of `{}` does not reach both cut interfaces",
                    s.name()
                )));
            }
            halves.push(RingHalf { structure: s, part, nodes, end0, end1 });
        }
    }

    let (endo_flag, epi_flag) = {
        let mut endo = vec![false; n];
        let mut epi = vec![false; n];
        let in_atrium: BTreeSet<u32> = elements.iter().copied().collect();
        for (f, c) in topo.boundary.iter().zip(classes) {
            if !in_atrium.contains(&f.element) {
                continue;
            }
            let dst = match c {
                SurfaceClass::Endo => &mut endo,
                SurfaceClass::Epi => &mut epi,
                SurfaceClass::Other => continue,
            };
            for &v in &f.nodes {
                dst[v as usize] = true;
            }
        }
        (endo, epi)
    };
    let endo: Vec<u32> = (0..n as u32).filter(|&v| endo_flag[v as usize] && !epi_flag[v as usize]).collect();
    let epi: Vec<u32> = (0..n as u32).filter(|&v| epi_flag[v as usize] && !endo_flag[v as usize]).collect();

    let mut app_nodes = BTreeSet::new();
    for &e in &elements {
        let entry = catalog.entry(mesh.tags[e as usize]).unwrap();
        if entry.structure == roles.appendage && entry.layer == Layer::Epi {
            app_nodes.extend(mesh.elements[e as usize].iter().copied());
        }
    }
    let appendage_tip = match app_nodes
        .iter()
        .copied()
        .filter(|&v| epi_flag[v as usize])
        .max_by(|&a, &b| {
            let da = (mesh.nodes[a as usize] - com).norm();
            let db = (mesh.nodes[b as usize] - com).norm();
            da.total_cmp(&db).then(b.cmp(&a))
        }) {
        Some(tip) => {
            let pt = mesh.nodes[tip as usize];
            app_nodes.iter().copied().filter(|&v| (mesh.nodes[v as usize] - pt).norm() <= 3000.0).collect()
        }
        None => Vec::new(),
    };

    Ok(AtriumLayout {
        atrium,
        elements,
        parts,
        endo,
        epi,
        center_of_mass: com.into(),
        plane_point: p0.into(),
        plane_normal: normal.into(),
        roof,
        valve_a,
        valve_b,
        halves,
        appendage_tip,
    })
}
