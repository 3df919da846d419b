//! Linear tetrahedral elements.

use nalgebra::{Matrix3, Vector3};

use crate::linalg::CsrMatrix;
use crate::mesh::{Mesh, Point};

/// Gradients of the four barycentric basis functions and the element volume.
pub fn basis_gradients(p: &[Point; 4]) -> ([Vector3<f64>; 4], f64) {
    let j = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let det = j.determinant();
    let jinv_t = j.try_inverse().unwrap_or_else(Matrix3::zeros).transpose();
    let g1 = jinv_t.column(0).into_owned();
    let g2 = jinv_t.column(1).into_owned();
    let g3 = jinv_t.column(2).into_owned();
    ([-(g1 + g2 + g3), g1, g2, g3], det.abs() / 6.0)
}

/// Gradient of a P1 field on one element.
pub fn element_gradient(mesh: &Mesh, e: usize, values: &[f64]) -> Vector3<f64> {
    let (g, _) = basis_gradients(&mesh.element_points(e));
    let t = mesh.elements[e];
    (0..4).map(|i| g[i] * values[t[i] as usize]).sum()
}

/// Element subset with a compact node numbering.
#[derive(Debug, Clone)]
pub struct Region {
    pub elements: Vec<u32>,
    /// Global index of each local node, ascending.
    pub nodes: Vec<u32>,
    /// Global → local, `u32::MAX` outside the region.
    pub local: Vec<u32>,
}

impl Region {
    pub fn new(mesh: &Mesh, elements: Vec<u32>) -> Self {
        let mut local = vec![u32::MAX; mesh.n_nodes()];
        for &e in &elements {
            for &v in &mesh.elements[e as usize] {
                local[v as usize] = 0;
            }
        }
        let mut nodes = Vec::new();
        for (g, l) in local.iter_mut().enumerate() {
            if *l == 0 {
                *l = nodes.len() as u32;
                nodes.push(g as u32);
            }
        }
        Region { elements, nodes, local }
    }

    pub fn whole(mesh: &Mesh) -> Self {
        Self::new(mesh, (0..mesh.n_elements() as u32).collect())
    }

    pub fn contains_node(&self, g: u32) -> bool {
        self.local[g as usize] != u32::MAX
    }

    pub fn local_element(&self, mesh: &Mesh, e: u32) -> [u32; 4] {
        mesh.elements[e as usize].map(|v| self.local[v as usize])
    }
}

/// Stiffness matrix ∫ ∇φ_i · A ∇φ_j over the region, with `tensor(e)` the per-element
/// conductivity (identity for plain Laplace).
pub fn assemble_stiffness(mesh: &Mesh, region: &Region, tensor: impl Fn(usize) -> Matrix3<f64>) -> CsrMatrix {
    let mut k = CsrMatrix::pattern(region.nodes.len(), region.elements.iter().map(|&e| region.local_element(mesh, e)));
    for &e in &region.elements {
        let (g, vol) = basis_gradients(&mesh.element_points(e as usize));
        let a = tensor(e as usize);
        let loc = region.local_element(mesh, e);
        for i in 0..4 {
            let ag = a * g[i];
            for j in 0..4 {
                k.add(loc[j] as usize, loc[i], vol * ag.dot(&g[j]));
            }
        }
    }
    k
}

/// Lumped (row-sum) mass per local node.
pub fn lumped_mass(mesh: &Mesh, region: &Region) -> Vec<f64> {
    let mut m = vec![0.0; region.nodes.len()];
    for &e in &region.elements {
        let v = mesh.volume(e as usize) / 4.0;
        for l in region.local_element(mesh, e) {
            m[l as usize] += v;
        }
    }
    m
}
