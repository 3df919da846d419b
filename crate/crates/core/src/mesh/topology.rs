use std::collections::{BTreeMap, VecDeque};

use super::{LabelCatalog, Layer, Mesh, Point, EDGES, FACES};

/// Compressed adjacency lists.
#[derive(Debug, Clone, Default)]
pub struct Csr {
    pub offsets: Vec<usize>,
    pub items: Vec<u32>,
}

impl Csr {
    pub fn row(&self, i: usize) -> &[u32] {
        &self.items[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds rows from (row, item) pairs; items within a row keep insertion order.
    pub fn from_pairs(n_rows: usize, pairs: impl Iterator<Item = (usize, u32)> + Clone) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for (r, _) in pairs.clone() {
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; counts[n_rows]];
        for (r, it) in pairs {
            items[fill[r]] = it;
            fill[r] += 1;
        }
        Csr { offsets: counts, items }
    }
}

/// Boundary triangle, wound outward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub nodes: [u32; 3],
    pub element: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SurfaceClass {
    Endo,
    Epi,
    Other,
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub node_elements: Csr,
    pub node_neighbors: Csr,
    pub boundary: Vec<BoundaryFace>,
}

impl Topology {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.n_nodes();
        let node_elements = Csr::from_pairs(
            n,
            mesh.elements
                .iter()
                .enumerate()
                .flat_map(|(e, t)| t.iter().map(move |&v| (v as usize, e as u32))),
        );
        let mut edges: Vec<(u32, u32)> = Vec::with_capacity(mesh.n_elements() * 12);
        for t in &mesh.elements {
            for &(a, b) in &EDGES {
                edges.push((t[a], t[b]));
                edges.push((t[b], t[a]));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let node_neighbors = Csr::from_pairs(n, edges.iter().map(|&(a, b)| (a as usize, b)));
        drop(edges);

        let mut faces: Vec<([u32; 3], u32, u8)> = Vec::with_capacity(mesh.n_elements() * 4);
        for (e, t) in mesh.elements.iter().enumerate() {
            for (f, loc) in FACES.iter().enumerate() {
                let mut k = loc.map(|i| t[i]);
                k.sort_unstable();
                faces.push((k, e as u32, f as u8));
            }
        }
        faces.sort_unstable();
        let mut boundary = Vec::new();
        let mut i = 0;
        while i < faces.len() {
            let mut j = i + 1;
            while j < faces.len() && faces[j].0 == faces[i].0 {
                j += 1;
            }
            if j - i == 1 {
                let (_, e, f) = faces[i];
                let t = mesh.elements[e as usize];
                boundary.push(BoundaryFace { nodes: FACES[f as usize].map(|l| t[l]), element: e });
            }
            i = j;
        }
        boundary.sort_by_key(|b| (b.element, b.nodes));
        Topology { node_elements, node_neighbors, boundary }
    }

    pub fn face_normal(mesh: &Mesh, f: &BoundaryFace) -> Point {
        let p = f.nodes.map(|v| mesh.nodes[v as usize]);
        (p[1] - p[0]).cross(&(p[2] - p[0]))
    }

    /// Boundary edges shared by other than exactly two boundary faces.
    pub fn non_manifold_boundary_edges(&self) -> usize {
        let mut edges: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for f in &self.boundary {
            for k in 0..3 {
                let (a, b) = (f.nodes[k], f.nodes[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().filter(|&&c| c != 2).count()
    }

    /// Groups boundary faces into smooth patches and labels each patch by the layers of
    /// its elements. Patches meet where adjacent face normals differ by more than `max_angle_deg`.
    pub fn classify_surface(&self, mesh: &Mesh, catalog: &LabelCatalog, max_angle_deg: f64) -> Vec<SurfaceClass> {
        let nf = self.boundary.len();
        let normals: Vec<Point> = self
            .boundary
            .iter()
            .map(|f| {
                let n = Self::face_normal(mesh, f);
                n / n.norm().max(f64::MIN_POSITIVE)
            })
            .collect();
        let mut edge_faces: Vec<((u32, u32), u32)> = Vec::with_capacity(nf * 3);
        for (i, f) in self.boundary.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f.nodes[k], f.nodes[(k + 1) % 3]);
                edge_faces.push(((a.min(b), a.max(b)), i as u32));
            }
        }
        edge_faces.sort_unstable();
        let adj = {
            let mut pairs = Vec::new();
            let mut i = 0;
            while i < edge_faces.len() {
                let mut j = i + 1;
                while j < edge_faces.len() && edge_faces[j].0 == edge_faces[i].0 {
                    j += 1;
                }
                for a in i..j {
                    for b in i..j {
                        if a != b {
                            pairs.push((edge_faces[a].1 as usize, edge_faces[b].1));
                        }
                    }
                }
                i = j;
            }
            pairs.sort_unstable();
            Csr::from_pairs(nf, pairs.into_iter())
        };
        let cos_max = max_angle_deg.to_radians().cos();
        let mut patch = vec![u32::MAX; nf];
        let mut n_patch = 0u32;
        let mut queue = VecDeque::new();
        for s in 0..nf {
            if patch[s] != u32::MAX {
                continue;
            }
            patch[s] = n_patch;
            queue.push_back(s);
            while let Some(f) = queue.pop_front() {
                for &g in adj.row(f) {
                    let g = g as usize;
                    if patch[g] == u32::MAX && normals[f].dot(&normals[g]) >= cos_max {
                        patch[g] = n_patch;
                        queue.push_back(g);
                    }
                }
            }
            n_patch += 1;
        }
        // 0 unset, 1 endo, 2 epi, 3 mixed
        let mut state = vec![0u8; n_patch as usize];
        for (i, f) in self.boundary.iter().enumerate() {
            let layer = catalog.entry(mesh.tags[f.element as usize]).map(|e| e.layer);
            let code = match layer {
                Some(Layer::Endo) => 1,
                Some(Layer::Epi) => 2,
                _ => 3,
            };
            let s = &mut state[patch[i] as usize];
            *s = if *s == 0 || *s == code { code } else { 3 };
        }
        (0..nf)
            .map(|i| match state[patch[i] as usize] {
                1 => SurfaceClass::Endo,
                2 => SurfaceClass::Epi,
                _ => SurfaceClass::Other,
            })
            .collect()
    }

    /// Per-node flags: (on an endocardial face, on an epicardial face).
    pub fn surface_node_flags(&self, n_nodes: usize, classes: &[SurfaceClass]) -> (Vec<bool>, Vec<bool>) {
        let mut endo = vec![false; n_nodes];
        let mut epi = vec![false; n_nodes];
        for (f, c) in self.boundary.iter().zip(classes) {
            for &v in &f.nodes {
                match c {
                    SurfaceClass::Endo => endo[v as usize] = true,
                    SurfaceClass::Epi => epi[v as usize] = true,
                    SurfaceClass::Other => {}
                }
            }
        }
        (endo, epi)
    }
}

/// Connected components of the element graph (elements sharing a face).
pub fn element_components(mesh: &Mesh, keep: impl Fn(usize) -> bool) -> (usize, Vec<u32>) {
    let mut faces: Vec<([u32; 3], u32)> = Vec::new();
    for (e, t) in mesh.elements.iter().enumerate() {
        if !keep(e) {
            continue;
        }
        for loc in FACES.iter() {
            let mut k = loc.map(|i| t[i]);
            k.sort_unstable();
            faces.push((k, e as u32));
        }
    }
    faces.sort_unstable();
    let mut parent: Vec<u32> = (0..mesh.n_elements() as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    for w in faces.windows(2) {
        if w[0].0 == w[1].0 {
            let a = find(&mut parent, w[0].1);
            let b = find(&mut parent, w[1].1);
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    let mut label = vec![u32::MAX; mesh.n_elements()];
    let mut roots: BTreeMap<u32, u32> = BTreeMap::new();
    for e in 0..mesh.n_elements() {
        if !keep(e) {
            continue;
        }
        let r = find(&mut parent, e as u32);
        let next = roots.len() as u32;
        label[e] = *roots.entry(r).or_insert(next);
    }
    (roots.len(), label)
}
