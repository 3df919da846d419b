//! Assembly of a complete biatrial model from a generated or supplied mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{assign_fibers, compute_fields, label_structures, Band, BiatrialLayout, FiberReport, FieldSet, StructureLabels, StructureRules};
use crate::mesh::generate::{generate_biatria, GeneratorParams};
use crate::mesh::{detect_orifice_rings, split_vein_tags, LabelCatalog, Mesh, Point, RingSet, Structure, Topology};
use crate::pathways::{default_ic_set, split_atria, AnchorContext, IcConfig, IcSet, SplitSpec};
use crate::uac::{compute_uac, relax_orifices, RelaxationSpec, UacCoordinates, UacLocator, UacPoint, DEFAULT_WEIGHTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub generator: GeneratorParams,
    pub rules: StructureRules,
    pub relaxation: RelaxationSpec,
    pub ic: IcConfig,
    pub laplace_tol: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            generator: GeneratorParams::default(),
            rules: StructureRules::default(),
            relaxation: RelaxationSpec::default(),
            ic: IcConfig::default(),
            laplace_tol: 1e-8,
        }
    }
}

/// Geometry stage: mesh with split vein tags, its topology and orifice rings.
pub struct Geometry {
    pub mesh: Mesh,
    pub topo: Topology,
    pub rings: RingSet,
}

impl Geometry {
    pub fn generate(params: &GeneratorParams, catalog: &LabelCatalog) -> Result<Self> {
        Self::from_mesh(generate_biatria(params, catalog)?, catalog)
    }

    /// Detaches RA from LA outside the FO rim, then finds rings and splits vein tags.
    pub fn from_mesh(mesh: Mesh, catalog: &LabelCatalog) -> Result<Self> {
        let spec = SplitSpec::shared(&mesh, catalog)?;
        let mut mesh = if spec.interface.is_empty() { mesh } else { split_atria(&mesh, catalog, &spec)?.mesh };
        let topo = Topology::new(&mesh);
        let rings = detect_orifice_rings(&mesh, &topo, catalog)?;
        mesh.tags = split_vein_tags(&mesh, catalog, &rings)?;
        Ok(Geometry { mesh, topo, rings })
    }
}

/// Field stage: layout, Laplace fields, structure labels and fibres.
pub struct Anatomy {
    pub layout: BiatrialLayout,
    pub fields: FieldSet,
    pub labels: StructureLabels,
    pub fiber_report: FiberReport,
    /// Labelled mesh with fibres.
    pub mesh: Mesh,
}

impl Anatomy {
    pub fn build(geo: &Geometry, catalog: &LabelCatalog, rules: &StructureRules, tol: f64) -> Result<Self> {
        let layout = BiatrialLayout::build(&geo.mesh, &geo.topo, catalog, &geo.rings)?;
        let fields = compute_fields(&geo.mesh, &layout, &geo.rings, tol)?;
        let labels = label_structures(&geo.mesh, &geo.topo, catalog, &layout, &geo.rings, &fields, rules)?;
        let labelled = labels.mesh(&geo.mesh)?;
        let (fibers, fiber_report) = assign_fibers(&labelled, catalog, &fields, &labels.bands)?;
        let mesh = labelled.with_fibers(fibers)?;
        Ok(Anatomy { layout, fields, labels, fiber_report, mesh })
    }
}

pub fn build_uac(mesh: &Mesh, topo: &Topology, layout: &BiatrialLayout, rings: &RingSet, relaxation: &RelaxationSpec, tol: f64) -> Result<UacCoordinates> {
    let raw = compute_uac(mesh, topo, layout, tol)?;
    relax_orifices(mesh, &raw, rings, relaxation, tol)
}

pub fn ct_band(bands: &[Band]) -> Option<&Band> {
    bands.iter().find(|b| b.structure == Structure::Ct)
}

/// Everything a forward simulation needs.
pub struct BiatrialModel {
    pub catalog: LabelCatalog,
    pub mesh: Mesh,
    pub topo: Topology,
    pub rings: RingSet,
    pub labels: StructureLabels,
    pub fiber_report: FiberReport,
    pub uac: UacCoordinates,
    pub locator: UacLocator,
    pub ics: IcSet,
    pub ic: IcConfig,
}

impl BiatrialModel {
    pub fn build(config: &ModelConfig) -> Result<Self> {
        let catalog = LabelCatalog::default();
        let geo = Geometry::generate(&config.generator, &catalog)?;
        Self::from_geometry(geo, catalog, config)
    }

    pub fn from_geometry(geo: Geometry, catalog: LabelCatalog, config: &ModelConfig) -> Result<Self> {
        let anatomy = Anatomy::build(&geo, &catalog, &config.rules, config.laplace_tol)?;
        let uac = build_uac(&anatomy.mesh, &geo.topo, &anatomy.layout, &geo.rings, &config.relaxation, config.laplace_tol)?;
        Self::assemble(catalog, anatomy.mesh, geo.topo, geo.rings, anatomy.labels, anatomy.fiber_report, uac, &config.ic, None)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        catalog: LabelCatalog,
        mesh: Mesh,
        topo: Topology,
        rings: RingSet,
        labels: StructureLabels,
        fiber_report: FiberReport,
        uac: UacCoordinates,
        ic: &IcConfig,
        ics: Option<IcSet>,
    ) -> Result<Self> {
        if uac.n_nodes() != mesh.n_nodes() {
            return Err(Error::Input(format!("coordinates cover {} nodes, the mesh has {}", uac.n_nodes(), mesh.n_nodes())));
        }
        let locator = UacLocator::new(&uac, DEFAULT_WEIGHTS)?;
        let ctx = AnchorContext { mesh: &mesh, topo: &topo, uac: &uac, locator: &locator, rings: &rings, ct: ct_band(&labels.bands) };
        let ics = match ics {
            Some(ics) => {
                if let Some(c) = ics.cables.iter().find(|c| c.nodes.iter().any(|&v| v as usize >= mesh.n_nodes())) {
                    return Err(Error::Input(format!("cable `{}` references nodes outside the mesh", c.name)));
                }
                ics
            }
            None => default_ic_set(&ctx, &catalog, ic)?,
        };
        Ok(BiatrialModel { catalog, mesh, topo, rings, labels, fiber_report, uac, locator, ics, ic: ic.clone() })
    }

    pub fn anchor_context(&self) -> AnchorContext<'_> {
        AnchorContext { mesh: &self.mesh, topo: &self.topo, uac: &self.uac, locator: &self.locator, rings: &self.rings, ct: ct_band(&self.labels.bands) }
    }

    pub fn centroid(&self) -> Point {
        self.mesh.nodes.iter().sum::<Point>() / self.mesh.n_nodes() as f64
    }

    /// Nodes of SAN-labelled elements.
    pub fn san_nodes(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .mesh
            .elements
            .iter()
            .zip(&self.mesh.tags)
            .filter(|(_, t)| self.catalog.entry(**t).map(|e| e.structure) == Some(Structure::San))
            .flat_map(|(el, _)| el.iter().copied())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Same-side nodes within `radius_mm` of the node located at `p`.
    pub fn site_nodes(&self, p: &UacPoint, radius_mm: f64) -> Result<Vec<u32>> {
        if !(radius_mm >= 0.0) {
            return Err(Error::Config(format!("site radius must be non-negative, got {radius_mm}")));
        }
        let c = self.locator.locate(p)?;
        let x = self.mesh.nodes[c as usize];
        Ok((0..self.mesh.n_nodes() as u32)
            .filter(|&v| self.uac.side[v as usize] == p.side && (self.mesh.nodes[v as usize] - x).norm() <= radius_mm * 1000.0)
            .collect())
    }
}
