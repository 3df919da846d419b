use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::coords::{assemble, PartSolution, UacBuild, UacCoordinates};
use crate::error::{Error, Result};
use crate::fields::fem::Region;
use crate::fields::layout::Part;
use crate::fields::{DirichletSpec, LaplaceSolver};
use crate::graph::polyline_length;
use crate::mesh::{Atrium, Mesh, RingSet, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxationSpec {
    pub big_r: f64,
    pub r: f64,
    pub alpha_cs: f64,
    pub beta_cs: f64,
    pub alpha_ipv: f64,
    pub beta_ipv: f64,
}

impl Default for RelaxationSpec {
    fn default() -> Self {
        RelaxationSpec { big_r: 0.1, r: 0.04, alpha_cs: 0.2, beta_cs: 0.8, alpha_ipv: 0.25, beta_ipv: 0.25 }
    }
}

/// Which arc of a split ring a node lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arc {
    /// Higher mean β: the TV side of the CS, the roof side of the IPVs.
    Upper,
    Lower,
}

impl RelaxationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !(self.big_r > 0.0) {
            return Err(Error::Config("relaxation radii must be positive".into()));
        }
        for (name, a, b) in [("cs", self.alpha_cs, self.beta_cs), ("lipv", self.alpha_ipv, self.beta_ipv), ("ripv", 1.0 - self.alpha_ipv, self.beta_ipv)] {
            let lo = 2.0 * self.r;
            let hi = 1.0 - 2.0 * self.r;
            if a < lo || a > hi || b < lo || b > hi {
                return Err(Error::Config(format!("{name} target circle leaves the unit square with margin {}", self.r)));
            }
        }
        Ok(())
    }

    pub fn center(&self, s: Structure) -> Option<(f64, f64)> {
        match s {
            Structure::Cs => Some((self.alpha_cs, self.beta_cs)),
            Structure::Lipv => Some((self.alpha_ipv, self.beta_ipv)),
            Structure::Ripv => Some((1.0 - self.alpha_ipv, self.beta_ipv)),
            _ => None,
        }
    }

    /// Target of a ring half at arc coordinate `s`; `s = 0` sits at the ring's largest α.
    pub fn target(&self, s: Structure, arc: Arc, t: f64) -> Result<(f64, f64)> {
        let (ac, bc) = self.center(s).ok_or_else(|| Error::Config(format!("`{}` has no target circle", s.name())))?;
        let theta = match arc {
            Arc::Upper => t * PI,
            Arc::Lower => (2.0 - t) * PI,
        };
        Ok((ac + self.r * theta.cos(), bc + self.r * theta.sin()))
    }
}

/// A ring split at its extreme-α nodes, each arc parametrized by arc length from the max-α node.
pub fn split_ring(mesh: &Mesh, ring: &[u32], alpha: &[f64], beta: &[f64]) -> Result<Vec<(u32, Arc, f64)>> {
    let n = ring.len();
    if n < 4 {
        return Err(Error::Topology("ring too short to split".into()));
    }
    let key = |i: &usize, j: &usize| alpha[ring[*i] as usize].total_cmp(&alpha[ring[*j] as usize]).then(ring[*j].cmp(&ring[*i]));
    let imax = (0..n).max_by(key).unwrap();
    let imin = (0..n).min_by(key).unwrap();
    if imax == imin {
        return Err(Error::Topology("ring has constant α".into()));
    }
    let walk = |step: usize| -> Vec<u32> {
        let mut v = vec![ring[imax]];
        let mut i = imax;
        while i != imin {
            i = (i + step) % n;
            v.push(ring[i]);
        }
        v
    };
    let arcs = [walk(1), walk(n - 1)];
    let mean_beta = |a: &[u32]| a.iter().map(|&v| beta[v as usize]).sum::<f64>() / a.len() as f64;
    let upper = if mean_beta(&arcs[0]) >= mean_beta(&arcs[1]) { 0 } else { 1 };
    let mut out = Vec::with_capacity(n + 2);
    for (k, a) in arcs.iter().enumerate() {
        let arc = if k == upper { Arc::Upper } else { Arc::Lower };
        let total = polyline_length(&mesh.nodes, a);
        let mut acc = 0.0;
        for (j, &v) in a.iter().enumerate() {
            if j > 0 {
                acc += (mesh.nodes[v as usize] - mesh.nodes[a[j - 1] as usize]).norm();
            }
            let t = if j + 1 == a.len() { 1.0 } else { acc / total };
            // Shared endpoints appear on both arcs with identical targets.
            if (j == 0 || j + 1 == a.len()) && k == 1 {
                continue;
            }
            out.push((v, arc, t));
        }
    }
    Ok(out)
}

/// Per-part harmonic displacement that moves the CS, LIPV and RIPV rings onto their circles
/// while holding every other α/β boundary node fixed.
pub fn relax_orifices(mesh: &Mesh, build: &UacBuild, rings: &RingSet, spec: &RelaxationSpec, tol: f64) -> Result<UacCoordinates> {
    spec.validate()?;
    let n = mesh.n_nodes();
    let mut parts: Vec<PartSolution> = build.parts.clone();
    for (atrium, part, structures) in
        [(Atrium::Ra, Part::A, vec![Structure::Cs]), (Atrium::La, Part::B, vec![Structure::Lipv, Structure::Ripv])]
    {
        let p = parts
            .iter_mut()
            .find(|p| p.problem.atrium == atrium && p.problem.part == part)
            .ok_or_else(|| Error::Config(format!("missing {atrium:?} {part:?} solution")))?;
        let mut da = DirichletSpec::new();
        let mut db = DirichletSpec::new();
        for s in &structures {
            let ring = rings.require(*s)?;
            if let Some(&v) = ring.nodes.iter().find(|&&v| !p.alpha[v as usize].is_finite()) {
                return Err(Error::Validation(format!("`{}` ring node {v} lies outside the {atrium:?} {part:?} part", s.name())));
            }
            for (v, arc, t) in split_ring(mesh, &ring.nodes, &p.alpha, &p.beta)? {
                let (ta, tb) = spec.target(*s, arc, t)?;
                da.point(v, ta - p.alpha[v as usize])?;
                db.point(v, tb - p.beta[v as usize])?;
            }
        }
        let fixed = |spec: &mut DirichletSpec, src: &DirichletSpec| -> Result<()> {
            for &v in src.values().keys() {
                spec.point(v, 0.0).map_err(|_| Error::Config(format!("orifice ring node {v} is also a coordinate boundary node")))?;
            }
            Ok(())
        };
        fixed(&mut da, &p.problem.alpha)?;
        fixed(&mut db, &p.problem.beta)?;
        let solver = LaplaceSolver::new(mesh, Region::new(mesh, p.problem.elements.clone()));
        let (ua, ub) = rayon::join(|| solver.solve("disp.alpha", &da, tol), || solver.solve("disp.beta", &db, tol));
        let (ua, ub) = (ua?, ub?);
        for i in 0..n {
            if p.alpha[i].is_finite() {
                p.alpha[i] += ua.values[i];
                p.beta[i] += ub.values[i];
            }
        }
    }
    let g = &build.coords.gamma;
    let u = assemble(n, &parts, [g, g])?;
    for (name, c) in [("alpha", &u.alpha), ("beta", &u.beta), ("gamma", &u.gamma)] {
        if let Some((i, v)) = c.iter().enumerate().find(|(_, v)| !(**v >= -1e-6 && **v <= 1.0 + 1e-6)) {
            return Err(Error::Validation(format!("{name} = {v} at node {i} after relaxation")));
        }
    }
    Ok(u)
}
