//! Tetrahedral meshes in micrometres with integer element tags and optional fibres.

mod catalog;
pub mod generate;
pub mod io;
pub mod quality;
pub mod rings;
pub mod topology;

pub use catalog::{Atrium, LabelCatalog, LabelEntry, Layer, Structure};
pub use rings::{detect_orifice_rings, split_vein_tags, OrificeRing, RingSet};
pub use topology::{SurfaceClass, Topology};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Node indices of each tetrahedron, positively oriented.
    pub elements: Vec<[u32; 4]>,
    pub tags: Vec<u16>,
    /// Unit fibre direction per element.
    pub fibers: Option<Vec<Vector3<f64>>>,
}

/// Six times the signed volume of a tetrahedron.
pub fn signed_volume6(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a))
}

impl Mesh {
    /// Builds a mesh, reorienting inverted elements. Degenerate elements are an error
    /// reported with their zero-based index.
    pub fn new(nodes: Vec<Point>, mut elements: Vec<[u32; 4]>, tags: Vec<u16>) -> Result<Self> {
        if tags.len() != elements.len() {
            return Err(Error::Validation(format!(
                "{} tags for {} elements",
                tags.len(),
                elements.len()
            )));
        }
        let n = nodes.len();
        for (i, e) in elements.iter_mut().enumerate() {
            if let Some(bad) = e.iter().find(|&&v| v as usize >= n) {
                return Err(Error::Validation(format!(
                    "element {i} references node {bad} but the mesh has {n} nodes"
                )));
            }
            let p = e.map(|v| nodes[v as usize]);
            let v6 = signed_volume6(&p[0], &p[1], &p[2], &p[3]);
            let scale = (p[1] - p[0]).norm().max((p[2] - p[0]).norm()).max((p[3] - p[0]).norm());
            if !(v6.abs() > 1e-12 * scale * scale * scale) {
                return Err(Error::Validation(format!("element {i} has zero volume")));
            }
            if v6 < 0.0 {
                e.swap(2, 3);
            }
        }
        Ok(Mesh { nodes, elements, tags, fibers: None })
    }

    pub fn with_fibers(mut self, fibers: Vec<Vector3<f64>>) -> Result<Self> {
        if fibers.len() != self.elements.len() {
            return Err(Error::Validation(format!(
                "{} fibres for {} elements",
                fibers.len(),
                self.elements.len()
            )));
        }
        self.fibers = Some(fibers);
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_points(&self, e: usize) -> [Point; 4] {
        self.elements[e].map(|v| self.nodes[v as usize])
    }

    pub fn volume(&self, e: usize) -> f64 {
        let p = self.element_points(e);
        signed_volume6(&p[0], &p[1], &p[2], &p[3]) / 6.0
    }

    pub fn centroid(&self, e: usize) -> Point {
        let p = self.element_points(e);
        (p[0] + p[1] + p[2] + p[3]) / 4.0
    }

    /// Volume-weighted centroid of a set of elements.
    pub fn center_of_mass(&self, elems: impl IntoIterator<Item = usize>) -> Point {
        let mut acc = Point::zeros();
        let mut w = 0.0;
        for e in elems {
            let v = self.volume(e);
            acc += self.centroid(e) * v;
            w += v;
        }
        if w > 0.0 {
            acc / w
        } else {
            acc
        }
    }

    /// Mean edge length over all element edges.
    pub fn mean_edge_length(&self) -> f64 {
        if self.elements.is_empty() {
            return 0.0;
        }
        let s: f64 = self
            .elements
            .iter()
            .map(|e| {
                let p = e.map(|v| self.nodes[v as usize]);
                EDGES.iter().map(|&(a, b)| (p[a] - p[b]).norm()).sum::<f64>()
            })
            .sum();
        s / (6.0 * self.elements.len() as f64)
    }
}

/// Local vertex pairs of the six tetrahedron edges.
pub const EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Local vertex triples of the four faces; face `i` is opposite vertex `i`.
pub const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tet() -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ]
    }

    #[test]
    fn inverted_elements_are_reoriented() {
        let m = Mesh::new(unit_tet(), vec![[0, 1, 3, 2]], vec![1]).unwrap();
        assert!(m.volume(0) > 0.0);
        assert!((m.volume(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_element_is_rejected() {
        let mut p = unit_tet();
        p[3] = Point::new(1.0, 1.0, 0.0);
        let err = Mesh::new(p, vec![[0, 1, 2, 3]], vec![1]).unwrap_err();
        assert!(err.to_string().contains("element 0"));
    }
}
