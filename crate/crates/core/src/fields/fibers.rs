//! Gradient-based fibre rule with band overrides.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fem::element_gradient;
use super::rules::{polyline_distance, Band};
use super::solves::FieldSet;
use crate::error::{Error, Result};
use crate::mesh::{Atrium, LabelCatalog, Mesh, Point, Structure};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberReport {
    pub from_gradient: usize,
    pub from_band: usize,
    /// Degenerate elements filled from their face neighbours.
    pub from_neighbors: usize,
    /// Degenerate elements with no usable neighbour, set to +x.
    pub defaulted: usize,
}

fn project(g: Vector3<f64>, t: Vector3<f64>) -> Option<Vector3<f64>> {
    let tn = t.norm();
    let p = if tn > 0.0 {
        let t = t / tn;
        g - t * t.dot(&g)
    } else {
        g
    };
    let n = p.norm();
    (n > 1e-12 * g.norm().max(1e-300) && n > 0.0).then(|| p / n)
}

/// Per-element unit fibres: the in-wall part of ∇φ_ab (RA) or ∇φ_v (LA), replaced by the
/// band axis tangent inside CT, PM and BB elements.
pub fn assign_fibers(
    mesh: &Mesh,
    catalog: &LabelCatalog,
    fields: &FieldSet,
    bands: &[Band],
) -> Result<(Vec<Vector3<f64>>, FiberReport)> {
    let ra = (&fields.get("ra.ab")?.values, &fields.get("ra.trans")?.values);
    let la = (&fields.get("la.v")?.values, &fields.get("la.trans")?.values);
    let band_pts: Vec<(Structure, Atrium, Vec<Point>)> =
        bands.iter().map(|b| (b.structure, b.atrium, b.path.iter().map(|&n| mesh.nodes[n as usize]).collect())).collect();
    let computed: Vec<(Option<Vector3<f64>>, bool)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let en = catalog.entry(mesh.tags[e]).ok_or_else(|| Error::Catalog(format!("tag {} is not in the catalog", mesh.tags[e])))?;
            if matches!(en.structure, Structure::Ct | Structure::Pm | Structure::Bb) {
                let c = mesh.centroid(e);
                let best = band_pts
                    .iter()
                    .filter(|(s, a, p)| *s == en.structure && *a == en.atrium && p.len() > 1)
                    .map(|(_, _, p)| polyline_distance(p, &c))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((_, t)) = best {
                    return Ok((Some(t), true));
                }
            }
            let (main, trans) = if en.atrium == Atrium::Ra { ra } else { la };
            let g = element_gradient(mesh, e, main);
            let t = element_gradient(mesh, e, trans);
            if !g.iter().chain(t.iter()).all(|x| x.is_finite()) {
                return Ok((None, false));
            }
            Ok((project(g, t), false))
        })
        .collect::<Result<_>>()?;
    let mut report = FiberReport::default();
    let mut fib: Vec<Option<Vector3<f64>>> = computed.iter().map(|c| c.0).collect();
    for (f, band) in &computed {
        match (f, band) {
            (Some(_), true) => report.from_band += 1,
            (Some(_), false) => report.from_gradient += 1,
            _ => {}
        }
    }
    // Fill degenerate elements from face neighbours until nothing changes.
    let topo_faces = face_neighbors(mesh);
    loop {
        let mut changed = false;
        let snapshot = fib.clone();
        for e in 0..mesh.n_elements() {
            if snapshot[e].is_some() {
                continue;
            }
            let sum: Vector3<f64> = topo_faces[e].iter().filter_map(|&n| snapshot[n as usize]).fold(Vector3::zeros(), |acc, f| {
                // Fibres are axial; align signs before averaging.
                if acc.dot(&f) < 0.0 { acc - f } else { acc + f }
            });
            let trans = if catalog.entry(mesh.tags[e]).map(|en| en.atrium) == Some(Atrium::Ra) { ra.1 } else { la.1 };
            let t = element_gradient(mesh, e, trans);
            let t = if t.iter().all(|x| x.is_finite()) { t } else { Vector3::zeros() };
            if let Some(f) = project(sum, t) {
                fib[e] = Some(f);
                report.from_neighbors += 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let out = fib
        .into_iter()
        .map(|f| {
            f.unwrap_or_else(|| {
                report.defaulted += 1;
                Vector3::x()
            })
        })
        .collect();
    Ok((out, report))
}

fn face_neighbors(mesh: &Mesh) -> Vec<Vec<u32>> {
    use std::collections::HashMap;
    let mut faces: HashMap<[u32; 3], Vec<u32>> = HashMap::new();
    for (e, t) in mesh.elements.iter().enumerate() {
        for f in crate::mesh::FACES {
            let mut k = [t[f[0]], t[f[1]], t[f[2]]];
            k.sort_unstable();
            faces.entry(k).or_default().push(e as u32);
        }
    }
    let mut nb = vec![Vec::new(); mesh.n_elements()];
    for v in faces.values() {
        if v.len() == 2 {
            nb[v[0] as usize].push(v[1]);
            nb[v[1] as usize].push(v[0]);
        }
    }
    for n in &mut nb {
        n.sort_unstable();
    }
    nb
}
