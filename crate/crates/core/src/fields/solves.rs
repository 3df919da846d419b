//! The fifteen per-atrium Laplace problems that drive labeling and fibres.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use super::fem::Region;
use super::laplace::{DirichletSpec, FieldSolution, LaplaceSolver};
use super::layout::{AtriumLayout, BiatrialLayout, Part};
use crate::error::{Error, Result};
use crate::mesh::{Atrium, Mesh, RingSet, Structure};

/// Named nodal fields, keyed `ra.trans`, `la.ab2` and so on.
#[derive(Debug, Clone, Default)]
pub struct FieldSet {
    pub fields: BTreeMap<String, FieldSolution>,
}

impl FieldSet {
    pub fn get(&self, name: &str) -> Result<&FieldSolution> {
        self.fields.get(name).ok_or_else(|| Error::Config(format!("field `{name}` is not available")))
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        for (k, f) in &self.fields {
            f.write(&dir.join(format!("{k}.dat")))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path, n_nodes: usize) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for name in FIELD_NAMES {
            fields.insert(name.to_string(), FieldSolution::read(&dir.join(format!("{name}.dat")), name, n_nodes)?);
        }
        Ok(FieldSet { fields })
    }
}

pub const FIELD_NAMES: [&str; 15] = [
    "ra.trans", "ra.ab", "ra.v", "ra.v2", "ra.v3", "ra.r", "ra.r2", "ra.w", "ra.w2", "la.trans", "la.ab", "la.ab2",
    "la.v", "la.r", "la.r2",
];

pub type Sets = Vec<(Vec<u32>, f64)>;

fn ring(rings: &RingSet, s: Structure) -> Result<Vec<u32>> {
    Ok(rings.require(s)?.nodes.clone())
}

fn union(parts: &[&[u32]]) -> Vec<u32> {
    let s: BTreeSet<u32> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    s.into_iter().collect()
}

/// Valve ring halves without the junction nodes they share.
fn valve_halves(layout: &AtriumLayout, valve: Structure) -> Result<(Vec<u32>, Vec<u32>)> {
    let a: BTreeSet<u32> = layout.half(valve, Part::A)?.nodes.iter().copied().collect();
    let b: BTreeSet<u32> = layout.half(valve, Part::B)?.nodes.iter().copied().collect();
    Ok((a.difference(&b).copied().collect(), b.difference(&a).copied().collect()))
}

/// Dirichlet node sets and values of every field, by name.
pub fn dirichlet_sets(layout: &BiatrialLayout, rings: &RingSet) -> Result<Vec<(&'static str, Atrium, Sets)>> {
    let ra = &layout.ra;
    let la = &layout.la;
    let svc = ring(rings, Structure::Svc)?;
    let ivc = ring(rings, Structure::Ivc)?;
    let tv = ring(rings, Structure::Tv)?;
    let mv = ring(rings, Structure::Mv)?;
    let lpv = union(&[&ring(rings, Structure::Lspv)?, &ring(rings, Structure::Lipv)?]);
    let rpv = union(&[&ring(rings, Structure::Rspv)?, &ring(rings, Structure::Ripv)?]);
    let raa = ra.appendage_tip.clone();
    let laa = la.appendage_tip.clone();
    if raa.is_empty() || laa.is_empty() {
        return Err(Error::Catalog("appendage tags are required for the field solves".into()));
    }
    let roof = ra.roof.nodes.clone();
    let (tv_s, tv_l) = valve_halves(ra, Structure::Tv)?;
    use Atrium::{La, Ra};
    Ok(vec![
        ("ra.trans", Ra, vec![(ra.endo.clone(), 0.0), (ra.epi.clone(), 1.0)]),
        ("ra.ab", Ra, vec![(raa.clone(), -1.0), (svc.clone(), 0.0), (tv.clone(), 1.0), (ivc.clone(), 2.0)]),
        ("ra.v", Ra, vec![(union(&[&svc, &raa]), 0.0), (ivc.clone(), 1.0)]),
        ("ra.v2", Ra, vec![(ivc.clone(), 0.0), (raa.clone(), 1.0)]),
        ("ra.v3", Ra, vec![(svc.clone(), 0.0), (ivc.clone(), 1.0)]),
        ("ra.r", Ra, vec![(roof.clone(), 0.0), (tv.clone(), 1.0)]),
        ("ra.r2", Ra, vec![(union(&[&svc, &roof, &ivc]), 0.0), (tv.clone(), 1.0)]),
        ("ra.w", Ra, vec![(tv_l.clone(), -1.0), (tv_s.clone(), 1.0)]),
        ("ra.w2", Ra, vec![(tv_l, -1.0), (roof, 0.0), (tv_s, 1.0)]),
        ("la.trans", La, vec![(la.endo.clone(), 0.0), (la.epi.clone(), 1.0)]),
        ("la.ab", La, vec![(laa.clone(), -1.0), (lpv.clone(), 0.0), (mv.clone(), 1.0), (rpv.clone(), 2.0)]),
        ("la.ab2", La, vec![(rpv.clone(), 0.0), (laa, 1.0)]),
        ("la.v", La, vec![(lpv.clone(), 0.0), (rpv.clone(), 1.0)]),
        ("la.r", La, vec![(union(&[&rpv, &lpv]), 0.0), (mv.clone(), 1.0)]),
        ("la.r2", La, vec![(union(&[&rpv, &lpv]), 0.0), (mv, 1.0)]),
    ])
}

pub fn compute_fields(mesh: &Mesh, layout: &BiatrialLayout, rings: &RingSet, tol: f64) -> Result<FieldSet> {
    let probs = dirichlet_sets(layout, rings)?;
    let (sra, sla) = rayon::join(
        || LaplaceSolver::new(mesh, Region::new(mesh, layout.ra.elements.clone())),
        || LaplaceSolver::new(mesh, Region::new(mesh, layout.la.elements.clone())),
    );
    let solved: Vec<Result<FieldSolution>> = probs
        .par_iter()
        .map(|(name, atrium, sets)| {
            let mut spec = DirichletSpec::new();
            for (nodes, v) in sets {
                spec.set(nodes.iter().copied(), *v).map_err(|e| Error::Config(format!("`{name}`: {e}")))?;
            }
            let solver = if *atrium == Atrium::Ra { &sra } else { &sla };
            solver.solve(name, &spec, tol)
        })
        .collect();
    let mut fields = BTreeMap::new();
    for r in solved {
        let f = r?;
        fields.insert(f.name.clone(), f);
    }
    Ok(FieldSet { fields })
}
