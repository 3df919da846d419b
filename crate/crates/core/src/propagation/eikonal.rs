//! Fast iterative method on linear tetrahedra.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::velocity::VelocityField;
use crate::error::{Error, Result};
use crate::mesh::topology::Csr;
use crate::mesh::{Mesh, Point};
use crate::pathways::Cable;

/// Seed nodes activated at `onset_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub nodes: Vec<u32>,
    pub onset_ms: f64,
}

impl StimulusSpec {
    pub fn new(nodes: Vec<u32>, onset_ms: f64) -> Result<Self> {
        let s = StimulusSpec { nodes, onset_ms };
        s.validate(usize::MAX)?;
        Ok(s)
    }

    fn validate(&self, n_nodes: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Config("stimulus has no seed nodes".into()));
        }
        if !(self.onset_ms >= 0.0) || !self.onset_ms.is_finite() {
            return Err(Error::Config(format!("stimulus onset must be ≥ 0, got {}", self.onset_ms)));
        }
        if let Some(v) = self.nodes.iter().find(|&&v| v as usize >= n_nodes) {
            return Err(Error::Config(format!("stimulus node {v} out of range")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EikonalOptions {
    /// Convergence tolerance in ms at a maximum velocity of 1 m/s; scaled by 1/v_max.
    pub tol_ms: f64,
    /// Update budget in multiples of the node count.
    pub max_sweeps: usize,
    /// Radius (µm) around each seed inside which τ is set from the seed's own metric before
    /// iterating; `None` uses three mean edge lengths.
    pub source_radius_um: Option<f64>,
}

impl Default for EikonalOptions {
    fn default() -> Self {
        EikonalOptions { tol_ms: 1e-3, max_sweeps: 50, source_radius_um: None }
    }
}

/// Per-node activation time in ms, `+∞` where the wave never arrives.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub tau: Vec<f64>,
    pub onset_ms: f64,
    /// Node updates spent by the solver.
    pub updates: usize,
}

impl ActivationMap {
    pub fn n_nodes(&self) -> usize {
        self.tau.len()
    }

    /// Latest minus earliest finite activation over `nodes`; `None` if none is reached.
    pub fn total_time(&self, nodes: impl IntoIterator<Item = u32>) -> Option<f64> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in nodes {
            let t = self.tau[v as usize];
            if t.is_finite() {
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        hi.is_finite().then_some(hi - lo)
    }

    pub fn max_finite(&self) -> Option<f64> {
        self.tau.iter().copied().filter(|t| t.is_finite()).reduce(f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.tau.len() * 12);
        for t in &self.tau {
            if t.is_finite() {
                s.push_str(&format!("{t}\n"));
            } else {
                s.push_str("inf\n");
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tau = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let l = line.trim();
            if l.is_empty() {
                continue;
            }
            let v: f64 = l.parse().map_err(|_| Error::Parse { file: path.display().to_string(), line: ln + 1, msg: format!("expected a time in ms, found `{l}`") })?;
            if v.is_nan() {
                return Err(Error::Parse { file: path.display().to_string(), line: ln + 1, msg: "NaN activation time".into() });
            }
            tau.push(v);
        }
        let onset_ms = tau.iter().copied().filter(|t| t.is_finite()).fold(f64::INFINITY, f64::min);
        Ok(ActivationMap { tau, onset_ms: if onset_ms.is_finite() { onset_ms } else { 0.0 }, updates: 0 })
    }
}

/// Minimum arrival at `x` over the triangle (or edge, or vertex) spanned by known points.
fn local_update(x: &Point, p: &[Point; 3], t: &[f64; 3], a: &Matrix3<f64>) -> f64 {
    let mut best = f64::INFINITY;
    let known: Vec<usize> = (0..3).filter(|&i| t[i].is_finite()).collect();
    for &i in &known {
        let y = x - p[i];
        best = best.min(t[i] + y.dot(&(a * y)).max(0.0).sqrt());
    }
    for (k, &i) in known.iter().enumerate() {
        for &j in &known[k + 1..] {
            best = best.min(edge_update(x, &p[i], &p[j], t[i], t[j], a));
        }
    }
    if known.len() == 3 {
        best = best.min(face_update(x, p, t, a));
    }
    best
}

fn edge_update(x: &Point, pi: &Point, pj: &Point, ti: f64, tj: f64, a: &Matrix3<f64>) -> f64 {
    let e: Vector3<f64> = pj - pi;
    let y = x - pi;
    let ae = a * e;
    let g = e.dot(&ae);
    if !(g > 0.0) {
        return f64::INFINITY;
    }
    let b = y.dot(&ae);
    let c = y.dot(&(a * y));
    let d = tj - ti;
    let w = 1.0 - d * d / g;
    if !(w > 0.0) {
        return f64::INFINITY;
    }
    let s = ((c - b * b / g).max(0.0) / w).sqrt();
    let l = (b - s * d) / g;
    if !(0.0..=1.0).contains(&l) {
        return f64::INFINITY;
    }
    ti + l * d + s
}

fn face_update(x: &Point, p: &[Point; 3], t: &[f64; 3], a: &Matrix3<f64>) -> f64 {
    let e1: Vector3<f64> = p[1] - p[0];
    let e2: Vector3<f64> = p[2] - p[0];
    let y = x - p[0];
    let (ae1, ae2) = (a * e1, a * e2);
    let g = Matrix2::new(e1.dot(&ae1), e1.dot(&ae2), e2.dot(&ae1), e2.dot(&ae2));
    let Some(gi) = g.try_inverse() else { return f64::INFINITY };
    let b = Vector2::new(y.dot(&ae1), y.dot(&ae2));
    let c = y.dot(&(a * y));
    let d = Vector2::new(t[1] - t[0], t[2] - t[0]);
    let w = 1.0 - d.dot(&(gi * d));
    if !(w > 0.0) {
        return f64::INFINITY;
    }
    let s = ((c - b.dot(&(gi * b))).max(0.0) / w).sqrt();
    let l = gi * (b - d * s);
    if l[0] < 0.0 || l[1] < 0.0 || l[0] + l[1] > 1.0 {
        return f64::INFINITY;
    }
    t[0] + l.dot(&d) + s
}

/// Precomputed element metrics and conducting adjacency for repeated solves.
pub struct EikonalSolver<'a> {
    mesh: &'a Mesh,
    metrics: Vec<Option<Matrix3<f64>>>,
    node_elements: Csr,
    neighbors: Csr,
    conducting: Vec<bool>,
    source_radius: f64,
    tol: f64,
    max_updates: usize,
}

impl<'a> EikonalSolver<'a> {
    pub fn new(mesh: &'a Mesh, velocity: &VelocityField, options: EikonalOptions) -> Result<Self> {
        if velocity.conduction.len() != mesh.n_elements() || velocity.fibers.len() != mesh.n_elements() {
            return Err(Error::Input("velocity field does not match the mesh".into()));
        }
        if !(options.tol_ms > 0.0) || options.max_sweeps == 0 {
            return Err(Error::Config("eikonal tolerance and sweep cap must be positive".into()));
        }
        let metrics: Vec<Option<Matrix3<f64>>> = (0..mesh.n_elements()).map(|e| velocity.inverse_metric(e)).collect();
        let v_max = velocity.max_velocity();
        if !(v_max > 0.0) {
            return Err(Error::Validation("no propagation: every element is non-conducting".into()));
        }
        let n = mesh.n_nodes();
        let live = || metrics.iter().enumerate().filter(|(_, m)| m.is_some()).map(|(e, _)| e);
        let node_elements = Csr::from_pairs(n, live().flat_map(|e| mesh.elements[e].iter().map(move |&v| (v as usize, e as u32))));
        let mut conducting = vec![false; n];
        let mut pairs: Vec<(usize, u32)> = Vec::new();
        for e in live() {
            let t = mesh.elements[e];
            for &a in &t {
                conducting[a as usize] = true;
                for &b in &t {
                    if a != b {
                        pairs.push((a as usize, b));
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let neighbors = Csr::from_pairs(n, pairs.iter().copied());
        let source_radius = options.source_radius_um.unwrap_or_else(|| 3.0 * mesh.mean_edge_length());
        if !(source_radius >= 0.0) {
            return Err(Error::Config("source radius must be non-negative".into()));
        }
        Ok(EikonalSolver {
            mesh,
            metrics,
            node_elements,
            neighbors,
            conducting,
            source_radius,
            tol: options.tol_ms / v_max,
            max_updates: options.max_sweeps * n,
        })
    }

    pub fn is_conducting(&self, v: u32) -> bool {
        self.conducting[v as usize]
    }

    fn update(&self, v: usize, tau: &[f64]) -> f64 {
        let x = self.mesh.nodes[v];
        let mut best = f64::INFINITY;
        for &e in self.node_elements.row(v) {
            let el = self.mesh.elements[e as usize];
            let mut p = [Point::zeros(); 3];
            let mut t = [0.0; 3];
            let mut k = 0;
            for &u in &el {
                if u as usize != v {
                    p[k] = self.mesh.nodes[u as usize];
                    t[k] = tau[u as usize];
                    k += 1;
                }
            }
            if t.iter().all(|x| !x.is_finite()) {
                continue;
            }
            best = best.min(local_update(&x, &p, &t, self.metrics[e as usize].as_ref().unwrap()));
        }
        best
    }

    /// Lowers nodes near each seed to the straight-line arrival under the fastest metric of
    /// the seed's elements.
    fn near_field(&self, seeds: &[(u32, f64)]) -> Vec<(u32, f64)> {
        let mut out = Vec::new();
        let mut mark = vec![u32::MAX; self.mesh.n_nodes()];
        for (k, &(s, t0)) in seeds.iter().enumerate() {
            let si = s as usize;
            if !self.conducting[si] {
                continue;
            }
            let r = self.source_radius;
            let metrics: Vec<&Matrix3<f64>> = self.node_elements.row(si).iter().map(|&e| self.metrics[e as usize].as_ref().unwrap()).collect();
            let xs = self.mesh.nodes[si];
            let mut stack = vec![si];
            mark[si] = k as u32;
            while let Some(v) = stack.pop() {
                for &u in self.neighbors.row(v) {
                    let u = u as usize;
                    let y = self.mesh.nodes[u] - xs;
                    if mark[u] == k as u32 || y.norm() > r {
                        continue;
                    }
                    mark[u] = k as u32;
                    let t = metrics.iter().map(|a| y.dot(&(*a * y)).max(0.0).sqrt()).fold(f64::INFINITY, f64::min);
                    out.push((u as u32, t0 + t));
                    stack.push(u);
                }
            }
        }
        out
    }

    fn seed(&self, tau: &mut [f64], seeds: &[(u32, f64)]) -> Result<Vec<usize>> {
        let mut fresh = Vec::new();
        for &(v, t) in seeds {
            let i = v as usize;
            if i >= tau.len() {
                return Err(Error::Config(format!("seed node {v} out of range")));
            }
            if !self.conducting[i] {
                continue;
            }
            if t < tau[i] {
                tau[i] = t;
                fresh.push(i);
            }
        }
        Ok(fresh)
    }

    /// Continues a solve from `tau` after lowering the given nodes; τ only decreases.
    pub fn refine(&self, tau: &mut [f64], seeds: &[(u32, f64)], budget: &mut usize) -> Result<()> {
        let fresh = self.seed(tau, seeds)?;
        let n = tau.len();
        let mut in_list = vec![false; n];
        let mut queue = VecDeque::new();
        for &s in &fresh {
            for &u in self.neighbors.row(s) {
                if !in_list[u as usize] {
                    in_list[u as usize] = true;
                    queue.push_back(u as usize);
                }
            }
        }
        while let Some(v) = queue.pop_front() {
            in_list[v] = false;
            *budget += 1;
            if *budget > self.max_updates {
                return Err(Error::Solver { msg: format!("eikonal exceeded {} node updates", self.max_updates), residual: f64::NAN });
            }
            let old = tau[v];
            let new = self.update(v, tau).min(old);
            tau[v] = new;
            if old.is_finite() && old - new <= self.tol {
                for &u in self.neighbors.row(v) {
                    let u = u as usize;
                    if in_list[u] {
                        continue;
                    }
                    let q = self.update(u, tau);
                    if q < tau[u] {
                        tau[u] = q;
                        in_list[u] = true;
                        queue.push_back(u);
                    }
                }
            } else if !in_list[v] {
                in_list[v] = true;
                queue.push_back(v);
            }
        }
        Ok(())
    }

    pub fn solve(&self, stimuli: &[StimulusSpec]) -> Result<ActivationMap> {
        if stimuli.is_empty() {
            return Err(Error::Config("no stimulus given".into()));
        }
        let mut seeds = Vec::new();
        for s in stimuli {
            s.validate(self.mesh.n_nodes())?;
            seeds.extend(s.nodes.iter().map(|&v| (v, s.onset_ms)));
        }
        if !seeds.iter().any(|&(v, _)| self.conducting[v as usize]) {
            return Err(Error::Validation("no propagation: every seed lies in non-conducting tissue".into()));
        }
        let mut tau = vec![f64::INFINITY; self.mesh.n_nodes()];
        let mut updates = 0;
        if self.source_radius > 0.0 {
            seeds.extend(self.near_field(&seeds));
        }
        self.refine(&mut tau, &seeds, &mut updates)?;
        let onset_ms = stimuli.iter().map(|s| s.onset_ms).fold(f64::INFINITY, f64::min);
        Ok(ActivationMap { tau, onset_ms, updates })
    }

    /// Eikonal solve with cables as delayed point-to-point links, iterated to a fixed point.
    pub fn solve_coupled(&self, stimuli: &[StimulusSpec], cables: &[Cable]) -> Result<ActivationMap> {
        for c in cables {
            for v in [c.ra_node(), c.la_node()] {
                if v as usize >= self.mesh.n_nodes() {
                    return Err(Error::Config(format!("cable `{}` node {v} out of range", c.name)));
                }
            }
            if !(c.delay_ms >= 0.0) || !c.delay_ms.is_finite() {
                return Err(Error::Config(format!("cable `{}` has delay {}", c.name, c.delay_ms)));
            }
        }
        let mut map = self.solve(stimuli)?;
        loop {
            let mut seeds = Vec::new();
            for c in cables {
                for (near, far) in [(c.ra_node(), c.la_node()), (c.la_node(), c.ra_node())] {
                    let cand = map.tau[near as usize] + c.delay_ms;
                    if cand.is_finite() && cand < map.tau[far as usize] - self.tol {
                        seeds.push((far, cand));
                    }
                }
            }
            if seeds.is_empty() {
                return Ok(map);
            }
            if self.source_radius > 0.0 {
                let near = self.near_field(&seeds);
                seeds.extend(near);
            }
            self.refine(&mut map.tau, &seeds, &mut map.updates)?;
        }
    }
}

/// One-shot eikonal solve.
pub fn solve_eikonal(mesh: &Mesh, velocity: &VelocityField, stimuli: &[StimulusSpec]) -> Result<ActivationMap> {
    EikonalSolver::new(mesh, velocity, EikonalOptions::default())?.solve(stimuli)
}

/// One-shot cable-coupled solve.
pub fn couple_cables(mesh: &Mesh, velocity: &VelocityField, stimuli: &[StimulusSpec], cables: &[Cable]) -> Result<ActivationMap> {
    EikonalSolver::new(mesh, velocity, EikonalOptions::default())?.solve_coupled(stimuli, cables)
}
