use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::param::{parametrize_boundary, BoundaryParametrization};
use crate::error::{Error, Result};
use crate::fields::fem::Region;
use crate::fields::layout::{AtriumLayout, BiatrialLayout, Interface, Part, Roles};
use crate::fields::{DirichletSpec, LaplaceSolver};
use crate::mesh::{Atrium, Mesh, Topology};

/// Per-node (α, β, γ, side); side 0 is RA and 1 is LA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UacCoordinates {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub side: Vec<u8>,
}

impl UacCoordinates {
    pub fn n_nodes(&self) -> usize {
        self.alpha.len()
    }

    pub fn get(&self, v: u32) -> [f64; 3] {
        let i = v as usize;
        [self.alpha[i], self.beta[i], self.gamma[i]]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.n_nodes() * 48);
        for i in 0..self.n_nodes() {
            let _ = writeln!(s, "{} {} {} {}", self.alpha[i], self.beta[i], self.gamma[i], self.side[i]);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut u = UacCoordinates { alpha: vec![], beta: vec![], gamma: vec![], side: vec![] };
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse { file: path.display().to_string(), line: ln + 1, msg: format!("expected `alpha beta gamma side`, found `{line}`") };
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 4 {
                return Err(bad());
            }
            let f = |k: usize| t[k].parse::<f64>().map_err(|_| bad());
            u.alpha.push(f(0)?);
            u.beta.push(f(1)?);
            u.gamma.push(f(2)?);
            u.side.push(match t[3] {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad()),
            });
        }
        Ok(u)
    }
}

/// Boundary data of the α and β solves on one part of one atrium.
#[derive(Debug, Clone)]
pub struct PartProblem {
    pub atrium: Atrium,
    pub part: Part,
    pub elements: Vec<u32>,
    pub alpha: DirichletSpec,
    pub beta: DirichletSpec,
}

pub const RING_R: f64 = 0.1;

fn param_interface(mesh: &Mesh, topo: &Topology, i: &Interface) -> Result<BoundaryParametrization> {
    parametrize_boundary(&mesh.nodes, &topo.node_neighbors, &i.nodes, &i.end0, &i.end1)
}

fn set_all(spec: &mut DirichletSpec, p: &BoundaryParametrization, f: impl Fn(f64) -> f64, what: &str) -> Result<()> {
    for (v, s) in p.iter() {
        let val = f(s);
        if !(-1e-12..=1.0 + 1e-12).contains(&val) {
            return Err(Error::Validation(format!("{what}: boundary value {val} at node {v} leaves [0, 1]")));
        }
        spec.point(v, val.clamp(0.0, 1.0)).map_err(|e| Error::Config(format!("{what}: {e}")))?;
    }
    Ok(())
}

/// α and β boundary conditions for both parts of one atrium.
pub fn part_problems(mesh: &Mesh, topo: &Topology, layout: &AtriumLayout) -> Result<[PartProblem; 2]> {
    let roles = Roles::of(layout.atrium);
    let r = RING_R;
    let roof = param_interface(mesh, topo, &layout.roof)?;
    let iva = param_interface(mesh, topo, &layout.valve_a)?;
    let ivb = param_interface(mesh, topo, &layout.valve_b)?;
    let build = |part: Part| -> Result<PartProblem> {
        let half = |s| -> Result<BoundaryParametrization> {
            let h = layout.half(s, part)?;
            parametrize_boundary(&mesh.nodes, &topo.node_neighbors, &h.nodes, &h.end0, &h.end1)
        };
        let va = half(roles.vein_a)?;
        let vb = half(roles.vein_b)?;
        let valve = layout.half(roles.valve, part)?;
        let mut a = DirichletSpec::new();
        let mut b = DirichletSpec::new();
        let vein_beta = move |s: f64| match part {
            Part::A => 0.5 + r * ((1.0 - s) * FRAC_PI_2).sin(),
            Part::B => 0.5 + r * ((3.0 + s) * FRAC_PI_2).sin(),
        };
        let iface_beta = move |s: f64| match part {
            Part::A => (0.5 + r) + (1.0 - s) * (0.5 - r),
            Part::B => s * (0.5 - r),
        };
        b.set(valve.nodes.iter().copied(), if part == Part::A { 1.0 } else { 0.0 })?;
        set_all(&mut a, &va, |s| r * ((1.0 - s) * FRAC_PI_2).cos(), "vein a ring")?;
        set_all(&mut b, &va, vein_beta, "vein a ring")?;
        set_all(&mut a, &vb, |s| 1.0 + r * ((1.0 + s) * FRAC_PI_2).cos(), "vein b ring")?;
        set_all(&mut b, &vb, vein_beta, "vein b ring")?;
        set_all(&mut a, &iva, |_| 0.0, "valve to vein a interface")?;
        set_all(&mut b, &iva, iface_beta, "valve to vein a interface")?;
        set_all(&mut a, &ivb, |_| 1.0, "valve to vein b interface")?;
        set_all(&mut b, &ivb, iface_beta, "valve to vein b interface")?;
        set_all(&mut a, &roof, |s| r + (1.0 - 2.0 * r) * s, "roof interface")?;
        set_all(&mut b, &roof, |_| 0.5, "roof interface")?;
        Ok(PartProblem { atrium: layout.atrium, part, elements: layout.part_elements(part), alpha: a, beta: b })
    };
    Ok([build(Part::A)?, build(Part::B)?])
}

/// Solved α, β on one part, NaN elsewhere.
#[derive(Debug, Clone)]
pub struct PartSolution {
    pub problem: PartProblem,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

pub(crate) fn solve_part(mesh: &Mesh, p: PartProblem, tol: f64) -> Result<PartSolution> {
    let solver = LaplaceSolver::new(mesh, Region::new(mesh, p.elements.clone()));
    let name = |c: &str| format!("{}.{c}.{:?}", if p.atrium == Atrium::Ra { "ra" } else { "la" }, p.part).to_lowercase();
    let (a, b) = rayon::join(|| solver.solve(&name("alpha"), &p.alpha, tol), || solver.solve(&name("beta"), &p.beta, tol));
    Ok(PartSolution { alpha: a?.values, beta: b?.values, problem: p })
}

/// Full coordinate build, keeping the per-part solutions for orifice relaxation.
#[derive(Debug, Clone)]
pub struct UacBuild {
    pub coords: UacCoordinates,
    pub parts: Vec<PartSolution>,
}

pub fn compute_uac(mesh: &Mesh, topo: &Topology, layout: &BiatrialLayout, tol: f64) -> Result<UacBuild> {
    let mut problems = Vec::new();
    for a in [&layout.ra, &layout.la] {
        problems.extend(part_problems(mesh, topo, a)?);
    }
    let gamma_jobs: Vec<&AtriumLayout> = vec![&layout.ra, &layout.la];
    let (parts, gammas) = rayon::join(
        || problems.into_par_iter().map(|p| solve_part(mesh, p, tol)).collect::<Result<Vec<_>>>(),
        || {
            gamma_jobs
                .par_iter()
                .map(|a| {
                    let mut spec = DirichletSpec::new();
                    spec.set(a.endo.iter().copied(), 0.0)?;
                    spec.set(a.epi.iter().copied(), 1.0)?;
                    let name = if a.atrium == Atrium::Ra { "ra.gamma" } else { "la.gamma" };
                    LaplaceSolver::new(mesh, Region::new(mesh, a.elements.clone())).solve(name, &spec, tol)
                })
                .collect::<Result<Vec<_>>>()
        },
    );
    let parts = parts?;
    let gammas = gammas?;
    let coords = assemble(mesh.n_nodes(), &parts, [&gammas[0].values, &gammas[1].values])?;
    Ok(UacBuild { coords, parts })
}

/// Merges part solutions: nodes on a part interface take the `A` value, nodes shared by both
/// atria take the LA value.
pub(crate) fn assemble(n: usize, parts: &[PartSolution], gamma: [&[f64]; 2]) -> Result<UacCoordinates> {
    let mut u = UacCoordinates { alpha: vec![f64::NAN; n], beta: vec![f64::NAN; n], gamma: vec![f64::NAN; n], side: vec![0; n] };
    let order = [(Atrium::Ra, Part::B), (Atrium::Ra, Part::A), (Atrium::La, Part::B), (Atrium::La, Part::A)];
    for (atrium, part) in order {
        let p = parts
            .iter()
            .find(|p| p.problem.atrium == atrium && p.problem.part == part)
            .ok_or_else(|| Error::Config(format!("missing {atrium:?} {part:?} solution")))?;
        let g = gamma[if atrium == Atrium::Ra { 0 } else { 1 }];
        for i in 0..n {
            if p.alpha[i].is_finite() {
                u.alpha[i] = p.alpha[i];
                u.beta[i] = p.beta[i];
                u.gamma[i] = g[i];
                u.side[i] = if atrium == Atrium::Ra { 0 } else { 1 };
            }
        }
    }
    if let Some(i) = u.alpha.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("node {i} received no coordinates")));
    }
    Ok(u)
}
