//! Deterministic idealized geometries: a biatrial pair of layered ellipsoidal shells joined
//! by a fossa-ovalis bridge, and structured slabs.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Atrium, LabelCatalog, Layer, Mesh, Point, Structure};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrificeSpec {
    pub atrium: Atrium,
    pub structure: Structure,
    /// Direction from the shell centre, in the shell's unit-sphere frame.
    pub direction: [f64; 3],
    /// Angular radius of the hole.
    pub radius_deg: f64,
    /// Angular width of the tagged sleeve around the hole.
    pub sleeve_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendageSpec {
    pub atrium: Atrium,
    pub structure: Structure,
    pub direction: [f64; 3],
    /// Angular support of the bulge.
    pub width_deg: f64,
    /// Peak radial bulge as a fraction of the shell radius.
    pub amplitude: f64,
    /// Angular radius of the tagged region.
    pub tag_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub target_edge_mm: f64,
    pub wall_mm: f64,
    /// Distance between the shells at the septal poles.
    pub gap_mm: f64,
    pub ra_semi_x_mm: f64,
    pub la_semi_x_mm: f64,
    pub semi_y_mm: f64,
    pub semi_z_mm: f64,
    pub fo_inner_radius_mm: f64,
    pub fo_thickness_mm: f64,
    pub orifices: Vec<OrificeSpec>,
    pub appendages: Vec<AppendageSpec>,
}

fn orifice(atrium: Atrium, structure: Structure, d: [f64; 3], r: f64, s: f64) -> OrificeSpec {
    OrificeSpec { atrium, structure, direction: d, radius_deg: r, sleeve_deg: s }
}

impl Default for GeneratorParams {
    fn default() -> Self {
        use Atrium::*;
        use Structure::*;
        GeneratorParams {
            target_edge_mm: 0.9,
            wall_mm: 2.0,
            gap_mm: 2.0,
            ra_semi_x_mm: 18.0,
            la_semi_x_mm: 17.0,
            semi_y_mm: 20.0,
            semi_z_mm: 22.0,
            fo_inner_radius_mm: 3.0,
            fo_thickness_mm: 2.0,
            orifices: vec![
                orifice(Ra, Svc, [0.0, -0.25, 1.0], 17.0, 7.0),
                orifice(Ra, Ivc, [0.0, -0.45, -1.0], 19.0, 7.0),
                orifice(Ra, Tv, [0.1, 1.0, -0.45], 32.0, 6.0),
                orifice(Ra, Cs, [0.6, 0.05, -0.8], 8.0, 5.0),
                orifice(La, Lpv, [0.55, -0.55, 0.6], 10.0, 6.0),
                orifice(La, Lpv, [0.6, -0.7, -0.15], 10.0, 6.0),
                orifice(La, Rpv, [-0.5, -0.6, 0.6], 10.0, 6.0),
                orifice(La, Rpv, [-0.55, -0.75, -0.15], 10.0, 6.0),
                orifice(La, Mv, [0.05, 0.85, -0.6], 30.0, 6.0),
            ],
            appendages: vec![
                AppendageSpec {
                    atrium: Ra,
                    structure: Raa,
                    direction: [-0.55, 0.6, 0.55],
                    width_deg: 32.0,
                    amplitude: 0.22,
                    tag_deg: 18.0,
                },
                AppendageSpec {
                    atrium: La,
                    structure: Laa,
                    direction: [0.7, 0.55, 0.35],
                    width_deg: 26.0,
                    amplitude: 0.2,
                    tag_deg: 14.0,
                },
            ],
        }
    }
}

fn unit(d: [f64; 3]) -> Point {
    let p = Point::new(d[0], d[1], d[2]);
    p / p.norm()
}

fn angle_deg(a: &Point, b: &Point) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Septal pole in each shell's unit-sphere frame.
fn septal_pole(atrium: Atrium) -> Point {
    match atrium {
        Atrium::Ra => Point::new(1.0, 0.0, 0.0),
        Atrium::La => Point::new(-1.0, 0.0, 0.0),
    }
}

impl GeneratorParams {
    pub fn n_layers(&self) -> usize {
        ((self.wall_mm / self.target_edge_mm).round() as usize).max(2)
    }

    pub fn bridge_layers(&self) -> usize {
        ((self.gap_mm / self.target_edge_mm).round() as usize).max(2)
    }

    /// Angular half-width of the septal patch reserved for the bridge.
    fn septal_patch_deg(&self) -> f64 {
        let r = self.fo_inner_radius_mm + self.fo_thickness_mm + 2.0 * self.target_edge_mm;
        (r / self.semi_y_mm.min(self.semi_z_mm)).asin().to_degrees()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        let positive = [
            ("target_edge_mm", self.target_edge_mm),
            ("wall_mm", self.wall_mm),
            ("gap_mm", self.gap_mm),
            ("ra_semi_x_mm", self.ra_semi_x_mm),
            ("la_semi_x_mm", self.la_semi_x_mm),
            ("semi_y_mm", self.semi_y_mm),
            ("semi_z_mm", self.semi_z_mm),
            ("fo_thickness_mm", self.fo_thickness_mm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.fo_inner_radius_mm < 0.0 {
            return fail("fo_inner_radius_mm must be non-negative".into());
        }
        if self.wall_mm < 2.0 * self.target_edge_mm - 1e-9 {
            return fail(format!(
                "wall width {} mm is below two target edge lengths ({} mm)",
                self.wall_mm,
                2.0 * self.target_edge_mm
            ));
        }
        let min_semi = self.ra_semi_x_mm.min(self.la_semi_x_mm).min(self.semi_y_mm).min(self.semi_z_mm);
        if self.wall_mm >= 0.5 * min_semi {
            return fail(format!("wall width {} mm is too thick for semi-axis {min_semi} mm", self.wall_mm));
        }
        let patch = self.septal_patch_deg();
        if !(patch < 60.0) {
            return fail("fossa ovalis bridge does not fit on the septal pole".into());
        }
        for (i, o) in self.orifices.iter().enumerate() {
            if !o.structure.is_orifice() {
                return fail(format!("orifice {i}: `{}` is not an orifice structure", o.structure.name()));
            }
            if !(o.radius_deg > 0.0 && o.sleeve_deg > 0.0 && o.radius_deg + o.sleeve_deg < 90.0) {
                return fail(format!("orifice {i}: radius and sleeve must be positive and sum below 90 degrees"));
            }
            let d = unit(o.direction);
            if !d.iter().all(|c| c.is_finite()) {
                return fail(format!("orifice {i}: direction must be non-zero"));
            }
            let reach = o.radius_deg + o.sleeve_deg;
            if angle_deg(&d, &septal_pole(o.atrium)) < reach + patch {
                return fail(format!("orifice {i} ({}) overlaps the septal bridge", o.structure.name()));
            }
            for (j, p) in self.orifices.iter().enumerate().skip(i + 1) {
                if p.atrium != o.atrium {
                    continue;
                }
                let a = angle_deg(&d, &unit(p.direction));
                if a < reach + p.radius_deg + p.sleeve_deg + 1e-9 {
                    return fail(format!(
                        "orifices {i} ({}) and {j} ({}) overlap: {a:.1} degrees apart",
                        o.structure.name(),
                        p.structure.name()
                    ));
                }
            }
        }
        for (i, a) in self.appendages.iter().enumerate() {
            if !matches!(a.structure, Structure::Raa | Structure::Laa) {
                return fail(format!("appendage {i}: `{}` is not an appendage", a.structure.name()));
            }
            if !(a.width_deg > 0.0 && a.width_deg < 90.0 && a.amplitude >= 0.0 && a.amplitude < 1.0 && a.tag_deg >= 0.0) {
                return fail(format!("appendage {i}: invalid width, amplitude or tag radius"));
            }
            let d = unit(a.direction);
            if angle_deg(&d, &septal_pole(a.atrium)) < a.width_deg + patch {
                return fail(format!("appendage {i} overlaps the septal bridge"));
            }
            for (j, o) in self.orifices.iter().enumerate() {
                if o.atrium == a.atrium && angle_deg(&d, &unit(o.direction)) < a.tag_deg + o.radius_deg + o.sleeve_deg {
                    return fail(format!("appendage {i} overlaps orifice {j} ({})", o.structure.name()));
                }
            }
        }
        Ok(())
    }
}

/// Unit cube-sphere with equiangular spacing; `n` cells per cube edge.
struct SphereMesh {
    verts: Vec<Point>,
    /// Index of the cube face each vertex was first created on, and its lattice key.
    keys: Vec<[u32; 3]>,
    tris: Vec<[u32; 3]>,
}

fn cube_sphere(n: u32) -> SphereMesh {
    let mut index: HashMap<[u32; 3], u32> = HashMap::new();
    let mut verts = Vec::new();
    let mut keys = Vec::new();
    let mut tris = Vec::new();
    let map = |i: u32| ((i as f64 / n as f64) * 2.0 - 1.0) * std::f64::consts::FRAC_PI_4;
    let mut vid = |k: [u32; 3], verts: &mut Vec<Point>, keys: &mut Vec<[u32; 3]>| -> u32 {
        *index.entry(k).or_insert_with(|| {
            let p = Point::new(map(k[0]).tan(), map(k[1]).tan(), map(k[2]).tan());
            let p = Point::new(
                if k[0] == 0 { -1.0 } else if k[0] == n { 1.0 } else { p.x },
                if k[1] == 0 { -1.0 } else if k[1] == n { 1.0 } else { p.y },
                if k[2] == 0 { -1.0 } else if k[2] == n { 1.0 } else { p.z },
            );
            verts.push(p / p.norm());
            keys.push(k);
            (verts.len() - 1) as u32
        })
    };
    for axis in 0..3 {
        for side in [0, n] {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for a in 0..n {
                for b in 0..n {
                    let corner = |da: u32, db: u32| {
                        let mut k = [0u32; 3];
                        k[axis] = side;
                        k[u] = a + da;
                        k[v] = b + db;
                        k
                    };
                    let q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)]
                        .map(|k| vid(k, &mut verts, &mut keys));
                    let p = q.map(|i| verts[i as usize]);
                    let pair = if (p[0] - p[2]).norm() <= (p[1] - p[3]).norm() {
                        [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
                    } else {
                        [[q[0], q[1], q[3]], [q[1], q[2], q[3]]]
                    };
                    for mut t in pair {
                        let w = t.map(|i| verts[i as usize]);
                        let nrm = (w[1] - w[0]).cross(&(w[2] - w[0]));
                        if nrm.dot(&(w[0] + w[1] + w[2])) < 0.0 {
                            t.swap(1, 2);
                        }
                        tris.push(t);
                    }
                }
            }
        }
    }
    SphereMesh { verts, keys, tris }
}

fn tri_edges(t: &[u32; 3]) -> [(u32, u32); 3] {
    let e = |a: u32, b: u32| (a.min(b), a.max(b));
    [e(t[0], t[1]), e(t[1], t[2]), e(t[2], t[0])]
}

/// Removes ears (triangles with two or more boundary edges) and triangles around pinch
/// vertices until the kept set is a manifold with disc-like holes, then keeps the largest
/// edge-connected component.
fn clean_holes(tris: &[[u32; 3]], keep: &mut [bool], n_verts: usize) {
    loop {
        let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
        for (t, k) in tris.iter().zip(keep.iter()) {
            if *k {
                for e in tri_edges(t) {
                    *edge_count.entry(e).or_default() += 1;
                }
            }
        }
        let mut changed = false;
        let mut boundary_deg = vec![0u32; n_verts];
        for (&(a, b), &c) in &edge_count {
            if c == 1 {
                boundary_deg[a as usize] += 1;
                boundary_deg[b as usize] += 1;
            }
        }
        for (t, k) in tris.iter().zip(keep.iter_mut()) {
            if !*k {
                continue;
            }
            let nb = tri_edges(t).iter().filter(|e| edge_count[e] == 1).count();
            let pinch = t.iter().any(|&v| boundary_deg[v as usize] > 2);
            if nb >= 2 || pinch {
                *k = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut edge_tris: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, t) in tris.iter().enumerate() {
        if keep[i] {
            for e in tri_edges(t) {
                edge_tris.entry(e).or_default().push(i);
            }
        }
    }
    let mut comp = vec![usize::MAX; tris.len()];
    let mut sizes = Vec::new();
    for s in 0..tris.len() {
        if !keep[s] || comp[s] != usize::MAX {
            continue;
        }
        let c = sizes.len();
        let mut stack = vec![s];
        comp[s] = c;
        let mut size = 0;
        while let Some(t) = stack.pop() {
            size += 1;
            for e in tri_edges(&tris[t]) {
                for &u in &edge_tris[&e] {
                    if comp[u] == usize::MAX {
                        comp[u] = c;
                        stack.push(u);
                    }
                }
            }
        }
        sizes.push(size);
    }
    if let Some(best) = (0..sizes.len()).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))) {
        for (i, k) in keep.iter_mut().enumerate() {
            if *k && comp[i] != best {
                *k = false;
            }
        }
    }
}

/// Splits a prism (bottom a,b,c; top d,e,f with a-d, b-e, c-f vertical) into three tetrahedra
/// so that every quadrilateral face is cut along the diagonal through its lowest-index vertex.
fn split_prism(v: [u32; 6]) -> [[u32; 4]; 3] {
    // Symmetries of the prism mapping the minimal vertex to position 0.
    const PERMS: [[usize; 6]; 6] = [
        [0, 1, 2, 3, 4, 5],
        [1, 2, 0, 4, 5, 3],
        [2, 0, 1, 5, 3, 4],
        [3, 5, 4, 0, 2, 1],
        [4, 3, 5, 1, 0, 2],
        [5, 4, 3, 2, 1, 0],
    ];
    let imin = (0..6).min_by_key(|&i| v[i]).unwrap();
    let p = PERMS[imin].map(|i| v[i]);
    let [v1, v2, v3, v4, v5, v6] = p;
    if v2.min(v6) < v3.min(v5) {
        [[v1, v2, v3, v6], [v1, v2, v6, v5], [v1, v5, v6, v4]]
    } else {
        [[v1, v2, v3, v5], [v1, v5, v3, v6], [v1, v5, v6, v4]]
    }
}

struct ShellSurface {
    /// Kept sphere triangles and their structure.
    tris: Vec<([u32; 3], Structure)>,
    /// Sphere vertex → compact index, for kept vertices.
    compact: Vec<u32>,
    used: Vec<u32>,
}

fn mirror(atrium: Atrium, u: &Point) -> Point {
    match atrium {
        Atrium::Ra => *u,
        Atrium::La => Point::new(-u.x, u.y, u.z),
    }
}

fn shell_surface(params: &GeneratorParams, sphere: &SphereMesh, atrium: Atrium) -> ShellSurface {
    let holes: Vec<(Point, f64, f64, Structure)> = params
        .orifices
        .iter()
        .filter(|o| o.atrium == atrium)
        .map(|o| (unit(o.direction), o.radius_deg, o.sleeve_deg, o.structure))
        .collect();
    let apps: Vec<(Point, f64, Structure)> = params
        .appendages
        .iter()
        .filter(|a| a.atrium == atrium)
        .map(|a| (unit(a.direction), a.tag_deg, a.structure))
        .collect();
    let dir = |t: &[u32; 3]| {
        let c: Point = t.iter().map(|&i| mirror(atrium, &sphere.verts[i as usize])).sum();
        c / c.norm()
    };
    let mut keep: Vec<bool> = sphere
        .tris
        .iter()
        .map(|t| {
            let d = dir(t);
            holes.iter().all(|(h, r, _, _)| angle_deg(&d, h) >= *r)
        })
        .collect();
    clean_holes(&sphere.tris, &mut keep, sphere.verts.len());
    let mut compact = vec![u32::MAX; sphere.verts.len()];
    let mut used = Vec::new();
    let mut tris = Vec::new();
    for (t, k) in sphere.tris.iter().zip(&keep) {
        if !*k {
            continue;
        }
        for &v in t {
            if compact[v as usize] == u32::MAX {
                compact[v as usize] = used.len() as u32;
                used.push(v);
            }
        }
        let d = dir(t);
        let mut s = Structure::Wall;
        for (h, r, sl, st) in &holes {
            if angle_deg(&d, h) < r + sl {
                s = *st;
            }
        }
        if s == Structure::Wall {
            for (a, r, st) in &apps {
                if angle_deg(&d, a) < *r {
                    s = *st;
                }
            }
        }
        tris.push((*t, s));
    }
    ShellSurface { tris, compact, used }
}

fn bulge(params: &GeneratorParams, atrium: Atrium, u: &Point) -> f64 {
    params
        .appendages
        .iter()
        .filter(|a| a.atrium == atrium)
        .map(|a| {
            let th = angle_deg(u, &unit(a.direction));
            if th < a.width_deg {
                let c = (std::f64::consts::FRAC_PI_2 * th / a.width_deg).cos();
                a.amplitude * c * c
            } else {
                0.0
            }
        })
        .sum()
}

/// Generates the idealized biatrial mesh. Coordinates are in micrometres with x pointing from
/// the right to the left atrium, y anterior and z superior.
pub fn generate_biatria(params: &GeneratorParams, catalog: &LabelCatalog) -> Result<Mesh> {
    params.validate()?;
    let h = params.target_edge_mm;
    let r_eff = (params.ra_semi_x_mm.max(params.la_semi_x_mm) + params.semi_y_mm + params.semi_z_mm) / 3.0;
    let n = (((std::f64::consts::FRAC_PI_2 * r_eff) / h).round() as u32).max(4);
    let sphere = cube_sphere(n);
    let layers = params.n_layers();
    let n_endo = layers / 2;

    let mut nodes: Vec<Point> = Vec::new();
    let mut elements: Vec<[u32; 4]> = Vec::new();
    let mut tags: Vec<u16> = Vec::new();
    let mut epi_node: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
    let mut surfaces = Vec::new();

    for (ai, atrium) in [Atrium::Ra, Atrium::La].into_iter().enumerate() {
        let surf = shell_surface(params, &sphere, atrium);
        let semi_x = if atrium == Atrium::Ra { params.ra_semi_x_mm } else { params.la_semi_x_mm };
        let cx = match atrium {
            Atrium::Ra => -(params.ra_semi_x_mm + 0.5 * params.gap_mm),
            Atrium::La => params.la_semi_x_mm + 0.5 * params.gap_mm,
        };
        let epi: Vec<Point> = surf
            .used
            .iter()
            .map(|&v| {
                let u = mirror(atrium, &sphere.verts[v as usize]);
                let s = 1.0 + bulge(params, atrium, &u);
                Point::new(cx + semi_x * u.x * s, params.semi_y_mm * u.y * s, params.semi_z_mm * u.z * s)
            })
            .collect();
        let mut normals = vec![Point::zeros(); epi.len()];
        for (t, _) in &surf.tris {
            let c = t.map(|v| surf.compact[v as usize] as usize);
            let mut nrm = (epi[c[1]] - epi[c[0]]).cross(&(epi[c[2]] - epi[c[0]]));
            if atrium == Atrium::La {
                nrm = -nrm;
            }
            for &i in &c {
                normals[i] += nrm;
            }
        }
        let base = nodes.len() as u32;
        let nv = epi.len() as u32;
        for k in 0..=layers {
            let off = (1.0 - k as f64 / layers as f64) * params.wall_mm;
            for (p, nrm) in epi.iter().zip(&normals) {
                nodes.push((p - nrm.normalize() * off) * 1000.0);
            }
        }
        epi_node[ai] = surf
            .compact
            .iter()
            .map(|&c| if c == u32::MAX { u32::MAX } else { base + layers as u32 * nv + c })
            .collect();
        for (t, s) in &surf.tris {
            let c = t.map(|v| surf.compact[v as usize]);
            for k in 0..layers {
                let layer = if k < n_endo { Layer::Endo } else { Layer::Epi };
                let tag = catalog.require(atrium, *s, layer)?;
                let lo = base + k as u32 * nv;
                let hi = lo + nv;
                for tet in split_prism([lo + c[0], lo + c[1], lo + c[2], hi + c[0], hi + c[1], hi + c[2]]) {
                    elements.push(tet);
                    tags.push(tag);
                }
            }
        }
        surfaces.push(surf);
    }

    // Fossa-ovalis bridge: straight columns between matching septal triangles.
    let k_bridge = params.bridge_layers();
    let r0 = params.fo_inner_radius_mm * 1000.0;
    let r1 = (params.fo_inner_radius_mm + params.fo_thickness_mm) * 1000.0;
    let mut columns: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut bridge = 0usize;
    let la_kept: std::collections::HashSet<[u32; 3]> = surfaces[1].tris.iter().map(|(t, _)| *t).collect();
    for (t, s) in &surfaces[0].tris {
        if *s != Structure::Wall || !t.iter().all(|&v| sphere.keys[v as usize][0] == n) {
            continue;
        }
        if !la_kept.contains(t) {
            continue;
        }
        let c: Point = t.iter().map(|&v| nodes[epi_node[0][v as usize] as usize]).sum::<Point>() / 3.0;
        let rho = (c.y * c.y + c.z * c.z).sqrt();
        if rho < r0 || rho > r1 {
            continue;
        }
        bridge += 1;
        for &v in t {
            if columns.contains_key(&v) {
                continue;
            }
            let a = epi_node[0][v as usize];
            let b = epi_node[1][v as usize];
            let (pa, pb) = (nodes[a as usize], nodes[b as usize]);
            let mut col = vec![a];
            for j in 1..k_bridge {
                nodes.push(pa + (pb - pa) * (j as f64 / k_bridge as f64));
                col.push((nodes.len() - 1) as u32);
            }
            col.push(b);
            columns.insert(v, col);
        }
        for j in 0..k_bridge {
            let atrium = if 2 * j < k_bridge { Atrium::Ra } else { Atrium::La };
            let tag = catalog.require(atrium, Structure::FoRim, Layer::Through)?;
            let lo = t.map(|v| columns[&v][j]);
            let hi = t.map(|v| columns[&v][j + 1]);
            for tet in split_prism([lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]]) {
                elements.push(tet);
                tags.push(tag);
            }
        }
    }
    if bridge == 0 {
        return Err(Error::Validation(
            "fossa ovalis annulus contains no surface triangles; increase its radius or thickness".into(),
        ));
    }
    Mesh::new(nodes, elements, tags)
}

/// Structured box of `nx × ny × nz` cubes of edge `h_um`, each split into six tetrahedra
/// around the main diagonal. All elements carry `tag`.
pub fn generate_slab(dims_um: [f64; 3], h_um: f64, tag: u16) -> Result<Mesh> {
    if !(h_um > 0.0) || dims_um.iter().any(|d| !(*d >= h_um * 0.999)) {
        return Err(Error::Validation(format!("slab {dims_um:?} incompatible with resolution {h_um}")));
    }
    let n = dims_um.map(|d| (d / h_um).round() as usize);
    let (nx, ny, nz) = (n[0], n[1], n[2]);
    let id = |i: usize, j: usize, k: usize| (i + (nx + 1) * (j + (ny + 1) * k)) as u32;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(Point::new(
                    dims_um[0] * i as f64 / nx as f64,
                    dims_um[1] * j as f64 / ny as f64,
                    dims_um[2] * k as f64 / nz as f64,
                ));
            }
        }
    }
    let mut elements = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = |a: usize, b: usize, c: usize| id(i + a, j + b, k + c);
                let (p0, p7) = (v(0, 0, 0), v(1, 1, 1));
                let path = [
                    [v(1, 0, 0), v(1, 1, 0)],
                    [v(1, 0, 0), v(1, 0, 1)],
                    [v(0, 1, 0), v(1, 1, 0)],
                    [v(0, 1, 0), v(0, 1, 1)],
                    [v(0, 0, 1), v(1, 0, 1)],
                    [v(0, 0, 1), v(0, 1, 1)],
                ];
                for [a, b] in path {
                    elements.push([p0, a, b, p7]);
                }
            }
        }
    }
    let tags = vec![tag; elements.len()];
    Mesh::new(nodes, elements, tags)
}
