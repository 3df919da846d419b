//! RA/LA decoupling and the parametric inter-atrial connections.

pub mod cable;
pub mod split;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cable::{build_cable, build_cable_between, Cable};
pub use split::{node_components, split_atria, SplitResult, SplitSpec};

use crate::error::{Error, Result};
use crate::fields::Band;
use crate::graph::polyline_length;
use crate::mesh::{Atrium, LabelCatalog, Mesh, Point, RingSet, Structure, Topology};
use crate::uac::{UacCoordinates, UacLocator, UacPoint};

/// How the RA end of a cable is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RaAnchor {
    Uac { alpha: f64, beta: f64, gamma: f64 },
    /// Epicardial node superior to the CS ostium at a distance within the range.
    NearCs { min_mm: f64, max_mm: f64 },
    /// Epicardial node over the CT axis at this arc fraction from its SVC end.
    CtFraction { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableSpec {
    pub name: String,
    pub ra: RaAnchor,
    pub la: UacPoint,
    #[serde(default)]
    pub velocity: Option<f64>,
    #[serde(default)]
    pub posterior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcConfig {
    pub gamma_min: f64,
    /// m/s, used by cables without their own velocity.
    pub velocity: f64,
    pub include_posterior: bool,
    pub cables: Vec<CableSpec>,
}

fn la(alpha: f64, beta: f64) -> UacPoint {
    UacPoint { alpha, beta, gamma: 1.0, side: 1 }
}

impl Default for IcConfig {
    fn default() -> Self {
        let spec = |name: &str, ra, la, posterior| CableSpec { name: name.into(), ra, la, velocity: None, posterior };
        IcConfig {
            gamma_min: 0.8,
            velocity: 1.4,
            include_posterior: true,
            cables: vec![
                spec("bb", RaAnchor::Uac { alpha: 0.85, beta: 0.75, gamma: 1.0 }, la(0.7, 0.85), false),
                spec("cs", RaAnchor::NearCs { min_mm: 3.0, max_mm: 8.0 }, la(0.4, 0.04), false),
                spec("superior_posterior", RaAnchor::CtFraction { fraction: 0.9 }, la(0.84, 0.3), true),
                spec("middle_posterior", RaAnchor::CtFraction { fraction: 1.0 }, la(0.75, 0.16), true),
            ],
        }
    }
}

/// Arc fraction along a band path of the path point nearest to `p`.
pub fn band_fraction(mesh: &Mesh, band: &Band, p: &Point) -> f64 {
    let total = polyline_length(&mesh.nodes, &band.path);
    let mut acc = 0.0;
    let mut best = (f64::INFINITY, 0.0);
    for (i, &v) in band.path.iter().enumerate() {
        if i > 0 {
            acc += (mesh.nodes[v as usize] - mesh.nodes[band.path[i - 1] as usize]).norm();
        }
        let d = (mesh.nodes[v as usize] - p).norm();
        if d < best.0 {
            best = (d, acc);
        }
    }
    if total > 0.0 {
        best.1 / total
    } else {
        0.0
    }
}

/// Everything the default anchor rules need besides the coordinates.
pub struct AnchorContext<'a> {
    pub mesh: &'a Mesh,
    pub topo: &'a Topology,
    pub uac: &'a UacCoordinates,
    pub locator: &'a UacLocator,
    pub rings: &'a RingSet,
    pub ct: Option<&'a Band>,
}

impl AnchorContext<'_> {
    fn epi(&self, side: u8) -> impl Iterator<Item = u32> + '_ {
        (0..self.uac.n_nodes() as u32).filter(move |&v| self.uac.side[v as usize] == side && self.uac.gamma[v as usize] >= 1.0 - 1e-9)
    }

    fn nearest_epi(&self, side: u8, p: &Point) -> Option<u32> {
        self.epi(side).min_by(|&a, &b| {
            let da = (self.mesh.nodes[a as usize] - p).norm();
            let db = (self.mesh.nodes[b as usize] - p).norm();
            da.total_cmp(&db).then(a.cmp(&b))
        })
    }

    pub fn resolve_ra(&self, name: &str, a: &RaAnchor) -> Result<u32> {
        match a {
            RaAnchor::Uac { alpha, beta, gamma } => self
                .locator
                .locate(&UacPoint { alpha: *alpha, beta: *beta, gamma: *gamma, side: 0 })
                .map_err(|e| Error::Anchor(format!("{name}: {e}"))),
            RaAnchor::NearCs { min_mm, max_mm } => {
                if !(max_mm >= min_mm) || *min_mm < 0.0 {
                    return Err(Error::Config(format!("{name}: bad CS distance range [{min_mm}, {max_mm}]")));
                }
                let cs: Vec<Point> = self.rings.require(Structure::Cs)?.nodes.iter().map(|&v| self.mesh.nodes[v as usize]).collect();
                let c = self.rings.require(Structure::Cs)?.centroid();
                let up = (self.rings.require(Structure::Svc)?.centroid() - self.rings.require(Structure::Ivc)?.centroid()).normalize();
                let mid = 0.5 * (min_mm + max_mm);
                self.epi(0)
                    .filter_map(|v| {
                        let p = self.mesh.nodes[v as usize];
                        let d = cs.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min) / 1000.0;
                        (d >= *min_mm && d <= *max_mm && up.dot(&(p - c)) > 0.0).then_some((v, (d - mid).abs()))
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .map(|(v, _)| v)
                    .ok_or_else(|| Error::Anchor(format!("{name}: no epicardial node {min_mm}–{max_mm} mm superior to the CS")))
            }
            RaAnchor::CtFraction { fraction } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(Error::Config(format!("{name}: CT fraction {fraction} outside [0, 1]")));
                }
                let ct = self.ct.ok_or_else(|| Error::Anchor(format!("{name}: no CT band available")))?;
                let total = polyline_length(&self.mesh.nodes, &ct.path);
                let mut acc = 0.0;
                let mut target = self.mesh.nodes[*ct.path.last().unwrap() as usize];
                for w in ct.path.windows(2) {
                    let (a, b) = (self.mesh.nodes[w[0] as usize], self.mesh.nodes[w[1] as usize]);
                    let l = (b - a).norm();
                    if acc + l >= fraction * total && l > 0.0 {
                        target = a + (b - a) * ((fraction * total - acc) / l);
                        break;
                    }
                    acc += l;
                }
                self.nearest_epi(0, &target).ok_or_else(|| Error::Anchor(format!("{name}: RA has no epicardium")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSet {
    pub cables: Vec<Cable>,
    /// Elements of the FO rim tissue bridge.
    pub fo_bridge_elements: usize,
}

/// Checks that RA and LA fo_rim elements exist and share nodes.
pub fn fo_bridge(mesh: &Mesh, catalog: &LabelCatalog) -> Result<usize> {
    let mut side = vec![0u8; mesh.n_nodes()];
    let mut count = 0;
    for (e, t) in mesh.elements.iter().enumerate() {
        let en = catalog.entry(mesh.tags[e]).ok_or_else(|| Error::Catalog(format!("tag {} is not in the catalog", mesh.tags[e])))?;
        if en.structure == Structure::FoRim {
            count += 1;
            for &v in t {
                side[v as usize] |= if en.atrium == Atrium::Ra { 1 } else { 2 };
            }
        }
    }
    if !side.contains(&3) {
        return Err(Error::Topology("the FO rim does not bridge RA and LA".into()));
    }
    Ok(count)
}

pub fn default_ic_set(ctx: &AnchorContext, catalog: &LabelCatalog, config: &IcConfig) -> Result<IcSet> {
    if !(config.gamma_min >= 0.0 && config.gamma_min <= 1.0) {
        return Err(Error::Config(format!("gamma_min {} outside [0, 1]", config.gamma_min)));
    }
    let fo_bridge_elements = fo_bridge(ctx.mesh, catalog)?;
    let selected: Vec<&CableSpec> = config.cables.iter().filter(|c| config.include_posterior || !c.posterior).collect();
    let cables = selected
        .par_iter()
        .map(|c| {
            let ra = ctx.resolve_ra(&c.name, &c.ra)?;
            let la = ctx.locator.locate(&c.la).map_err(|e| Error::Anchor(format!("{}: LA anchor: {e}", c.name)))?;
            let v = c.velocity.unwrap_or(config.velocity);
            build_cable_between(&c.name, ctx.mesh, ctx.topo, ctx.uac, ra, la, v, config.gamma_min)
                .map_err(|e| match e {
                    Error::Path(m) if !m.starts_with(&c.name) => Error::Path(format!("{}: {m}", c.name)),
                    other => other,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IcSet { cables, fo_bridge_elements })
}
