//! Threshold and geometry rules that turn the Laplace fields into structure tags.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::layout::{BiatrialLayout, Part};
use super::solves::FieldSet;
use crate::error::{Error, Result};
use crate::graph::dijkstra;
use crate::mesh::{Atrium, LabelCatalog, Layer, Mesh, Point, RingSet, Structure, Topology};

/// Closed interval on a named field, evaluated at element centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldInterval {
    pub field: String,
    pub min: f64,
    pub max: f64,
}

impl FieldInterval {
    pub fn new(field: &str, min: f64, max: f64) -> Self {
        FieldInterval { field: field.to_string(), min, max }
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructureRules {
    pub san_radius_mm: f64,
    /// SAN candidates lie within this distance of the SVC ring.
    pub san_svc_distance_mm: f64,
    pub fo_inner_radius_mm: f64,
    pub fo_thickness_mm: f64,
    /// Depth of the septal slab searched for the FO annulus.
    pub fo_depth_mm: f64,
    pub bb_width_mm: f64,
    pub ct: Vec<FieldInterval>,
    pub pm: Vec<FieldInterval>,
    /// Centres of the PM bands on `pm_axis`.
    pub pm_centers: Vec<f64>,
    pub pm_half_width: f64,
    pub pm_axis: String,
}

impl Default for StructureRules {
    fn default() -> Self {
        StructureRules {
            san_radius_mm: 2.5,
            san_svc_distance_mm: 4.0,
            fo_inner_radius_mm: 3.0,
            fo_thickness_mm: 2.0,
            fo_depth_mm: 3.0,
            bb_width_mm: 2.0,
            ct: vec![FieldInterval::new("ra.w2", -0.15, 0.15), FieldInterval::new("ra.v3", 0.1, 0.9)],
            pm: vec![FieldInterval::new("ra.r2", 0.15, 0.85)],
            pm_centers: vec![-0.75, -0.5, -0.25],
            pm_half_width: 0.04,
            pm_axis: "ra.w".to_string(),
        }
    }
}

impl StructureRules {
    pub fn validate(&self, fields: &FieldSet) -> Result<()> {
        for (name, v) in [
            ("san_radius_mm", self.san_radius_mm),
            ("san_svc_distance_mm", self.san_svc_distance_mm),
            ("fo_inner_radius_mm", self.fo_inner_radius_mm),
            ("fo_thickness_mm", self.fo_thickness_mm),
            ("fo_depth_mm", self.fo_depth_mm),
            ("bb_width_mm", self.bb_width_mm),
            ("pm_half_width", self.pm_half_width),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (band, ivs) in [("ct", &self.ct), ("pm", &self.pm)] {
            for iv in ivs.iter() {
                let (lo, hi) = field_range(fields, &iv.field)?;
                if !(iv.max > iv.min) {
                    return Err(Error::Rule(format!("{band}: empty interval [{}, {}] on `{}`", iv.min, iv.max, iv.field)));
                }
                let tol = 1e-6 * (hi - lo).abs().max(1.0);
                if iv.min < lo - tol || iv.max > hi + tol {
                    return Err(Error::Config(format!(
                        "{band}: interval [{}, {}] leaves the range [{lo}, {hi}] of `{}`",
                        iv.min, iv.max, iv.field
                    )));
                }
            }
        }
        let (lo, hi) = field_range(fields, &self.pm_axis)?;
        for &c in &self.pm_centers {
            if c < lo || c > hi {
                return Err(Error::Config(format!("pm centre {c} leaves the range of `{}`", self.pm_axis)));
            }
        }
        Ok(())
    }
}

fn field_range(fields: &FieldSet, name: &str) -> Result<(f64, f64)> {
    let f = fields.get(name)?;
    Ok(f.values.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))))
}

/// A labelled band together with the node path along its axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub structure: Structure,
    pub atrium: Atrium,
    pub path: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureLabels {
    pub tags: Vec<u16>,
    pub san_center: u32,
    pub fo_center: [f64; 3],
    pub bands: Vec<Band>,
}

impl StructureLabels {
    pub fn mesh(&self, mesh: &Mesh) -> Result<Mesh> {
        let mut m = mesh.clone();
        m.tags = self.tags.clone();
        Ok(m)
    }
}

fn elem_mean(mesh: &Mesh, e: usize, values: &[f64]) -> f64 {
    mesh.elements[e].iter().map(|&v| values[v as usize]).sum::<f64>() / 4.0
}

/// Extends the wall tags with SAN, FO rim, CT, PM and BB labels.
pub fn label_structures(
    mesh: &Mesh,
    topo: &Topology,
    catalog: &LabelCatalog,
    layout: &BiatrialLayout,
    rings: &RingSet,
    fields: &FieldSet,
    rules: &StructureRules,
) -> Result<StructureLabels> {
    rules.validate(fields)?;
    let mut tags = mesh.tags.clone();
    let entry = |t: u16| catalog.entry(t).ok_or_else(|| Error::Catalog(format!("tag {t} is not in the catalog")));
    let retag = |tags: &mut Vec<u16>, e: usize, s: Structure| -> Result<()> {
        let en = entry(tags[e])?;
        tags[e] = catalog.require(en.atrium, s, en.layer)?;
        Ok(())
    };
    let um = 1000.0;

    // FO rim: reuse an existing tissue bridge, otherwise cut an annulus in the septum.
    let ra_com = Point::from(layout.ra.center_of_mass);
    let la_com = Point::from(layout.la.center_of_mass);
    let axis = (la_com - ra_com).normalize();
    let fo_existing: Vec<usize> =
        (0..mesh.n_elements()).filter(|&e| entry(tags[e]).map(|en| en.structure == Structure::FoRim).unwrap_or(false)).collect();
    let fo_center = if fo_existing.is_empty() {
        let ra_elems = &layout.ra.elements;
        let depth = |e: usize| axis.dot(&(mesh.centroid(e) - ra_com));
        let top = ra_elems.iter().map(|&e| depth(e as usize)).fold(f64::NEG_INFINITY, f64::max);
        let septal: Vec<usize> = ra_elems
            .iter()
            .map(|&e| e as usize)
            .filter(|&e| depth(e) >= top - rules.fo_depth_mm * um && entry(tags[e]).map(|en| en.structure == Structure::Wall).unwrap_or(false))
            .collect();
        if septal.is_empty() {
            return Err(Error::Rule("fo_rim: no septal wall elements".into()));
        }
        let c = septal.iter().map(|&e| mesh.centroid(e)).sum::<Point>() / septal.len() as f64;
        let (r0, r1) = (rules.fo_inner_radius_mm * um, (rules.fo_inner_radius_mm + rules.fo_thickness_mm) * um);
        let mut n = 0;
        for &e in &septal {
            let d = mesh.centroid(e) - c;
            let rho = (d - axis * axis.dot(&d)).norm();
            if rho >= r0 && rho <= r1 {
                retag(&mut tags, e, Structure::FoRim)?;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Rule("fo_rim: annulus contains no elements".into()));
        }
        c
    } else {
        fo_existing.iter().map(|&e| mesh.centroid(e)).sum::<Point>() / fo_existing.len() as f64
    };

    let is_wall = |tags: &[u16], e: usize, allowed: &[Structure]| -> bool {
        entry(tags[e]).map(|en| allowed.contains(&en.structure)).unwrap_or(false)
    };

    // CT and PM on the RA endocardial wall.
    let ra_elems: Vec<usize> = layout.ra.elements.iter().map(|&e| e as usize).collect();
    let endo_wall = |tags: &[u16], e: usize| -> bool {
        entry(tags[e]).map(|en| en.layer == Layer::Endo && matches!(en.structure, Structure::Wall | Structure::Raa)).unwrap_or(false)
    };
    let ct_fields: Vec<&[f64]> = rules.ct.iter().map(|iv| fields.get(&iv.field).map(|f| f.values.as_slice())).collect::<Result<_>>()?;
    let ct: Vec<usize> = ra_elems
        .iter()
        .copied()
        .filter(|&e| endo_wall(&tags, e) && rules.ct.iter().zip(&ct_fields).all(|(iv, f)| iv.contains(elem_mean(mesh, e, f))))
        .collect();
    if ct.is_empty() {
        return Err(Error::Rule("ct: threshold intervals select no elements".into()));
    }
    for &e in &ct {
        retag(&mut tags, e, Structure::Ct)?;
    }
    let pm_fields: Vec<&[f64]> = rules.pm.iter().map(|iv| fields.get(&iv.field).map(|f| f.values.as_slice())).collect::<Result<_>>()?;
    let pm_axis = &fields.get(&rules.pm_axis)?.values;
    let mut pm_groups: Vec<Vec<usize>> = vec![Vec::new(); rules.pm_centers.len()];
    for &e in &ra_elems {
        if !endo_wall(&tags, e) || layout.ra.parts[layout.ra.elements.binary_search(&(e as u32)).unwrap()] != Part::B {
            continue;
        }
        if !rules.pm.iter().zip(&pm_fields).all(|(iv, f)| iv.contains(elem_mean(mesh, e, f))) {
            continue;
        }
        let w = elem_mean(mesh, e, pm_axis);
        if let Some(k) = rules.pm_centers.iter().position(|c| (w - c).abs() <= rules.pm_half_width) {
            pm_groups[k].push(e);
        }
    }
    if pm_groups.iter().all(|g| g.is_empty()) {
        return Err(Error::Rule("pm: threshold intervals select no elements".into()));
    }
    for g in &pm_groups {
        for &e in g {
            retag(&mut tags, e, Structure::Pm)?;
        }
    }

    let mut bands = Vec::new();
    let v3 = &fields.get("ra.v3")?.values;
    bands.push(Band { structure: Structure::Ct, atrium: Atrium::Ra, path: band_axis(mesh, topo, &ct, v3, "ct")? });
    let r2 = &fields.get("ra.r2")?.values;
    for g in pm_groups.iter().filter(|g| !g.is_empty()) {
        bands.push(Band { structure: Structure::Pm, atrium: Atrium::Ra, path: band_axis(mesh, topo, g, r2, "pm")? });
    }

    // BB: epicardial geodesic from the RA anterior roof to the LA anterior wall.
    let ra_epi: BTreeSet<u32> = layout.ra.epi.iter().copied().collect();
    let la_epi: BTreeSet<u32> = layout.la.epi.iter().copied().collect();
    let nearest = |set: &BTreeSet<u32>, p: &Point| -> u32 {
        *set.iter().min_by(|&&a, &&b| (mesh.nodes[a as usize] - p).norm().total_cmp(&(mesh.nodes[b as usize] - p).norm())).unwrap()
    };
    let tip_centroid = |nodes: &[u32]| nodes.iter().map(|&n| mesh.nodes[n as usize]).sum::<Point>() / nodes.len() as f64;
    let svc_c = rings.require(Structure::Svc)?.centroid();
    let rspv_c = rings.require(Structure::Rspv)?.centroid();
    let start = nearest(&ra_epi, &((svc_c + tip_centroid(&layout.ra.appendage_tip)) / 2.0));
    let end = nearest(&la_epi, &((rspv_c + tip_centroid(&layout.la.appendage_tip)) / 2.0));
    let inter = nearest(&la_epi, &mesh.nodes[start as usize]);
    let exit = nearest(&ra_epi, &mesh.nodes[inter as usize]);
    let geodesic = |set: &BTreeSet<u32>, a: u32, b: u32| -> Result<Vec<u32>> {
        dijkstra(&mesh.nodes, &topo.node_neighbors, &[(a, 0.0)], |v| set.contains(&v), Some(b))
            .path_to(b)
            .ok_or_else(|| Error::Rule("bb: epicardial geodesic is disconnected".into()))
    };
    let ra_path = geodesic(&ra_epi, start, exit)?;
    let la_path = geodesic(&la_epi, inter, end)?;
    let half = rules.bb_width_mm * um / 2.0;
    let bb_allowed = [Structure::Wall, Structure::Raa, Structure::Laa, Structure::Ct, Structure::Pm];
    for (atrium, path, elems) in [(Atrium::Ra, &ra_path, &layout.ra.elements), (Atrium::La, &la_path, &layout.la.elements)] {
        let pts: Vec<Point> = path.iter().map(|&n| mesh.nodes[n as usize]).collect();
        let mut n = 0;
        for &e in elems.iter() {
            let e = e as usize;
            if is_wall(&tags, e, &bb_allowed) && polyline_distance(&pts, &mesh.centroid(e)).0 <= half {
                retag(&mut tags, e, Structure::Bb)?;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Rule(format!("bb: empty band in {atrium:?}")));
        }
        bands.push(Band { structure: Structure::Bb, atrium, path: path.clone() });
    }

    // SAN last so it overrides the bands it overlaps.
    let svc_nodes: Vec<Point> = rings.require(Structure::Svc)?.nodes.iter().map(|&n| mesh.nodes[n as usize]).collect();
    let v2 = &fields.get("ra.v2")?.values;
    let svc_tag_nodes: BTreeSet<u32> = ra_elems
        .iter()
        .filter(|&&e| entry(tags[e]).map(|en| en.structure == Structure::Svc).unwrap_or(false))
        .flat_map(|&e| mesh.elements[e].iter().copied())
        .collect();
    let reach = rules.san_svc_distance_mm * um;
    let candidates: Vec<u32> = layout
        .ra
        .endo
        .iter()
        .chain(&layout.ra.epi)
        .copied()
        .filter(|n| !svc_tag_nodes.contains(n))
        .filter(|&n| svc_nodes.iter().any(|p| (mesh.nodes[n as usize] - p).norm() <= reach))
        .collect();
    let san_center = candidates
        .iter()
        .copied()
        .min_by(|&a, &b| v2[a as usize].total_cmp(&v2[b as usize]).then(a.cmp(&b)))
        .ok_or_else(|| Error::Rule("san: no wall nodes near the SVC".into()))?;
    let c = mesh.nodes[san_center as usize];
    let san_allowed = [Structure::Wall, Structure::Raa, Structure::Ct, Structure::Pm, Structure::Bb];
    let mut n = 0;
    for &e in &ra_elems {
        if is_wall(&tags, e, &san_allowed) && (mesh.centroid(e) - c).norm() <= rules.san_radius_mm * um {
            retag(&mut tags, e, Structure::San)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Rule("san: sphere contains no elements".into()));
    }

    Ok(StructureLabels { tags, san_center, fo_center: [fo_center.x, fo_center.y, fo_center.z], bands })
}

/// Geodesic through the band nodes from the minimum to the maximum of `along`.
fn band_axis(mesh: &Mesh, topo: &Topology, elems: &[usize], along: &[f64], name: &str) -> Result<Vec<u32>> {
    let nodes: BTreeSet<u32> = elems.iter().flat_map(|&e| mesh.elements[e].iter().copied()).collect();
    let key = |a: &&u32, b: &&u32| along[**a as usize].total_cmp(&along[**b as usize]).then(a.cmp(b));
    let lo = *nodes.iter().min_by(key).unwrap();
    let sp = dijkstra(&mesh.nodes, &topo.node_neighbors, &[(lo, 0.0)], |v| nodes.contains(&v), None);
    // Farthest reachable node in `along`, so a split band still yields its main branch.
    let hi = *nodes
        .iter()
        .filter(|&&n| sp.dist[n as usize].is_finite())
        .max_by(key)
        .ok_or_else(|| Error::Rule(format!("{name}: band axis is empty")))?;
    sp.path_to(hi).ok_or_else(|| Error::Rule(format!("{name}: band is disconnected")))
}

/// Distance from `p` to a polyline and the unit tangent of the closest segment.
pub fn polyline_distance(pts: &[Point], p: &Point) -> (f64, Vector3<f64>) {
    if pts.len() == 1 {
        return ((p - pts[0]).norm(), Vector3::zeros());
    }
    let mut best = (f64::INFINITY, Vector3::zeros());
    for w in pts.windows(2) {
        let d = w[1] - w[0];
        let l2 = d.norm_squared();
        if l2 == 0.0 {
            continue;
        }
        let t = ((p - w[0]).dot(&d) / l2).clamp(0.0, 1.0);
        let dist = (p - (w[0] + d * t)).norm();
        if dist < best.0 {
            best = (dist, d / l2.sqrt());
        }
    }
    best
}
