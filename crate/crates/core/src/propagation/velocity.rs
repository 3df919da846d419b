use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Atrium, LabelCatalog, Layer, Mesh, Structure};

/// Longitudinal and transverse conduction velocity, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conduction {
    pub v_l: f64,
    pub v_t: f64,
}

impl Conduction {
    pub const fn new(v_l: f64, v_t: f64) -> Self {
        Conduction { v_l, v_t }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.v_t > 0.0) || !(self.v_l >= self.v_t) || !self.v_l.is_finite() {
            return Err(Error::Config(format!("{what}: need v_l ≥ v_t > 0, got v_l = {}, v_t = {}", self.v_l, self.v_t)));
        }
        Ok(())
    }
}

/// Matches elements by any combination of atrium, structure and layer. `conduction: None`
/// marks the matched tissue non-conducting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRule {
    #[serde(default)]
    pub atrium: Option<Atrium>,
    #[serde(default)]
    pub structure: Option<Structure>,
    #[serde(default)]
    pub layer: Option<Layer>,
    pub conduction: Option<Conduction>,
}

impl RegionRule {
    fn matches(&self, a: Atrium, s: Structure, l: Layer) -> bool {
        self.atrium.map_or(true, |x| x == a) && self.structure.map_or(true, |x| x == s) && self.layer.map_or(true, |x| x == l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VelocityConfig {
    pub ra: Conduction,
    pub la: Conduction,
    /// Applied in order; later rules win.
    pub rules: Vec<RegionRule>,
    /// Multiplies every velocity.
    pub scale: f64,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        let rule = |s, v_l, v_t| RegionRule { atrium: None, structure: Some(s), layer: None, conduction: Some(Conduction::new(v_l, v_t)) };
        VelocityConfig {
            ra: Conduction::new(0.97, 0.74),
            la: Conduction::new(0.98, 0.76),
            rules: vec![
                rule(Structure::Ct, 1.21, 0.92),
                rule(Structure::Pm, 1.30, 0.99),
                rule(Structure::Bb, 1.40, 1.08),
                rule(Structure::FoRim, 0.33, 0.24),
            ],
            scale: 1.0,
        }
    }
}

/// Per-element conduction and fibre direction.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub conduction: Vec<Option<Conduction>>,
    pub fibers: Vec<Vector3<f64>>,
}

impl VelocityField {
    pub fn from_config(mesh: &Mesh, catalog: &LabelCatalog, config: &VelocityConfig) -> Result<Self> {
        if !(config.scale > 0.0) || !config.scale.is_finite() {
            return Err(Error::Config(format!("velocity scale must be positive, got {}", config.scale)));
        }
        config.ra.validate("ra")?;
        config.la.validate("la")?;
        for (i, r) in config.rules.iter().enumerate() {
            if let Some(c) = r.conduction {
                c.validate(&format!("rule {i}"))?;
            }
        }
        let fibers = mesh.fibers.clone().ok_or_else(|| Error::Input("velocity field needs element fibres".into()))?;
        let mut conduction = Vec::with_capacity(mesh.n_elements());
        for &t in &mesh.tags {
            let en = catalog.entry(t).ok_or_else(|| Error::Catalog(format!("tag {t} is not in the catalog")))?;
            let mut c = Some(if en.atrium == Atrium::Ra { config.ra } else { config.la });
            for r in &config.rules {
                if r.matches(en.atrium, en.structure, en.layer) {
                    c = r.conduction;
                }
            }
            conduction.push(c.map(|c| Conduction::new(c.v_l * config.scale, c.v_t * config.scale)));
        }
        Ok(VelocityField { conduction, fibers })
    }

    /// One conduction value and fibre direction everywhere.
    pub fn uniform(mesh: &Mesh, fiber: Vector3<f64>, c: Conduction) -> Result<Self> {
        c.validate("uniform")?;
        let n = fiber.norm();
        if !(n > 0.0) {
            return Err(Error::Config("fibre direction must be non-zero".into()));
        }
        Ok(VelocityField { conduction: vec![Some(c); mesh.n_elements()], fibers: vec![fiber / n; mesh.n_elements()] })
    }

    pub fn max_velocity(&self) -> f64 {
        self.conduction.iter().flatten().map(|c| c.v_l).fold(0.0, f64::max)
    }

    /// M⁻¹ in (ms/µm)², so √(eᵀ M⁻¹ e) is the travel time along `e` in ms.
    pub fn inverse_metric(&self, e: usize) -> Option<Matrix3<f64>> {
        let c = self.conduction[e]?;
        let f = self.fibers[e];
        let ff = f * f.transpose();
        let (vl, vt) = (c.v_l * 1000.0, c.v_t * 1000.0);
        Some(ff / (vl * vl) + (Matrix3::identity() - ff) / (vt * vt))
    }
}
