use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::fem::{assemble_stiffness, Region};
use crate::error::{Error, Result};
use crate::linalg::{solve_dirichlet, CsrMatrix};
use crate::mesh::Mesh;

/// Prescribed nodal values; the rest of the boundary is insulated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirichletSpec {
    values: BTreeMap<u32, f64>,
}

impl DirichletSpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assigns `value` to `node`. Reassigning a different value is an error.
    pub fn point(&mut self, node: u32, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Config(format!("non-finite boundary value at node {node}")));
        }
        if let Some(&old) = self.values.get(&node) {
            if (old - value).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "node {node} assigned conflicting boundary values {old} and {value}"
                )));
            }
            return Ok(());
        }
        self.values.insert(node, value);
        Ok(())
    }

    pub fn set(&mut self, nodes: impl IntoIterator<Item = u32>, value: f64) -> Result<()> {
        for n in nodes {
            self.point(n, value)?;
        }
        Ok(())
    }

    pub fn values(&self) -> &BTreeMap<u32, f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        self.values.values().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }

    pub fn scaled(&self, k: f64) -> Self {
        DirichletSpec { values: self.values.iter().map(|(&n, &v)| (n, v * k)).collect() }
    }
}

/// Nodal field over the whole mesh; nodes outside the solved region are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSolution {
    pub name: String,
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Solved with the monotone operator.
    #[serde(default)]
    pub monotone: bool,
}

impl FieldSolution {
    pub fn get(&self, node: u32) -> f64 {
        self.values[node as usize]
    }

    /// Writes `node_index value` lines for the nodes inside the region.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for (i, v) in self.values.iter().enumerate() {
            if v.is_finite() {
                let _ = writeln!(s, "{i} {v}");
            }
        }
        if let Some(d) = path.parent() {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, name: &str, n_nodes: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut values = vec![f64::NAN; n_nodes];
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Parse { file: path.display().to_string(), line: ln + 1, msg: format!("expected `node value`, found `{line}`") };
            let mut it = line.split_whitespace();
            let i: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let v: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            if i >= n_nodes {
                return Err(bad());
            }
            values[i] = v;
        }
        Ok(FieldSolution { name: name.to_string(), values, residual: 0.0, iterations: 0, monotone: false })
    }
}

/// `Galerkin` is the plain P1 operator. `Monotone` lumps positive off-diagonal stiffness
/// entries onto the diagonal, which restores the discrete maximum principle on meshes with
/// obtuse dihedral angles at the price of consistency. `Auto` solves with `Galerkin` and
/// repeats the solve with `Monotone` when the result leaves the range of the boundary data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Galerkin,
    Monotone,
    #[default]
    Auto,
}

/// Assembled Laplace operator on a region, reusable across boundary conditions.
#[derive(Debug, Clone)]
pub struct LaplaceSolver {
    pub region: Region,
    pub scheme: Scheme,
    /// Off-diagonal entries changed by the monotone operator.
    pub adjusted_entries: usize,
    galerkin: Option<CsrMatrix>,
    monotone: Option<CsrMatrix>,
    n_global: usize,
}

impl LaplaceSolver {
    pub fn new(mesh: &Mesh, region: Region) -> Self {
        Self::with_scheme(mesh, region, Scheme::default())
    }

    pub fn with_scheme(mesh: &Mesh, region: Region, scheme: Scheme) -> Self {
        let k = assemble_stiffness(mesh, &region, |_| Matrix3::identity());
        let (galerkin, monotone, adjusted_entries) = match scheme {
            Scheme::Galerkin => (Some(k), None, 0),
            Scheme::Monotone | Scheme::Auto => {
                let mut m = k.clone();
                let n = m.enforce_monotone();
                (if scheme == Scheme::Auto { Some(k) } else { None }, Some(m), n)
            }
        };
        LaplaceSolver { region, scheme, adjusted_entries, galerkin, monotone, n_global: mesh.n_nodes() }
    }

    pub fn solve(&self, name: &str, spec: &DirichletSpec, tol: f64) -> Result<FieldSolution> {
        if !(tol > 0.0) {
            return Err(Error::Config(format!("solver tolerance must be positive, got {tol}")));
        }
        if spec.is_empty() {
            return Err(Error::Config(format!("`{name}`: no Dirichlet nodes, system is singular")));
        }
        let n = self.region.nodes.len();
        let mut fixed = vec![false; n];
        let mut x0 = vec![0.0; n];
        let mut mean = 0.0;
        for (&g, &v) in spec.values() {
            let l = self.region.local[g as usize];
            if l == u32::MAX {
                return Err(Error::Config(format!("`{name}`: boundary node {g} lies outside the region")));
            }
            fixed[l as usize] = true;
            x0[l as usize] = v;
            mean += v;
        }
        mean /= spec.len() as f64;
        for (xi, f) in x0.iter_mut().zip(&fixed) {
            if !*f {
                *xi = mean;
            }
        }
        let run = |matrix: &CsrMatrix| -> Result<(Vec<f64>, f64, usize)> {
            let mut x = x0.clone();
            let stats = solve_dirichlet(matrix, &mut x, &fixed, None, tol, 20 * n + 1000).map_err(|e| match e {
                Error::Solver { msg, residual } => Error::Solver { msg: format!("`{name}`: {msg}"), residual },
                other => other,
            })?;
            Ok((x, stats.relative_residual, stats.iterations))
        };
        let (lo, hi) = spec.range();
        let slack = 1e-8 * (hi - lo).abs().max(lo.abs().max(hi.abs())).max(1e-300);
        let mut monotone = false;
        let (mut x, mut residual, mut iterations) = match &self.galerkin {
            Some(k) => run(k)?,
            None => {
                monotone = true;
                run(self.monotone.as_ref().unwrap())?
            }
        };
        if !monotone && self.scheme == Scheme::Auto && x.iter().any(|&v| v < lo - slack || v > hi + slack) {
            (x, residual, iterations) = run(self.monotone.as_ref().unwrap())?;
            monotone = true;
        }
        let mut values = vec![f64::NAN; self.n_global];
        for (l, &g) in self.region.nodes.iter().enumerate() {
            values[g as usize] = x[l];
        }
        Ok(FieldSolution { name: name.to_string(), values, residual, iterations, monotone })
    }
}

pub fn solve_laplace(mesh: &Mesh, region: Region, name: &str, spec: &DirichletSpec, tol: f64) -> Result<FieldSolution> {
    LaplaceSolver::new(mesh, region).solve(name, spec, tol)
}
