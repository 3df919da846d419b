//! Infinite-medium lead fields and the extracellular source integral.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::fem::basis_gradients;
use crate::mesh::{Mesh, Point};

pub const LIMB: [&str; 3] = ["RA", "LA", "LL"];
pub const PRECORDIAL: [&str; 6] = ["V1", "V2", "V3", "V4", "V5", "V6"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub name: String,
    pub position_um: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeSet {
    pub electrodes: Vec<Electrode>,
}

impl ElectrodeSet {
    pub fn new(electrodes: Vec<Electrode>) -> Result<Self> {
        let mut names: Vec<&str> = electrodes.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Placement(format!("duplicate electrode `{}`", w[0])));
        }
        if electrodes.iter().any(|e| e.position_um.iter().any(|x| !x.is_finite())) {
            return Err(Error::Placement("electrode position is not finite".into()));
        }
        Ok(ElectrodeSet { electrodes })
    }

    /// Standard limb and precordial positions around `center`, in a frame with +x toward the
    /// patient's left, +y anterior and +z superior.
    pub fn standard(center: &Point) -> Self {
        let mm: [(&str, [f64; 3]); 9] = [
            ("RA", [-250.0, 0.0, 200.0]),
            ("LA", [250.0, 0.0, 200.0]),
            ("LL", [100.0, 0.0, -600.0]),
            ("V1", [-30.0, 110.0, -30.0]),
            ("V2", [30.0, 110.0, -30.0]),
            ("V3", [70.0, 100.0, -55.0]),
            ("V4", [110.0, 85.0, -80.0]),
            ("V5", [150.0, 50.0, -80.0]),
            ("V6", [170.0, 0.0, -80.0]),
        ];
        let electrodes = mm
            .iter()
            .map(|(n, p)| Electrode { name: n.to_string(), position_um: [center.x + p[0] * 1e3, center.y + p[1] * 1e3, center.z + p[2] * 1e3] })
            .collect();
        ElectrodeSet { electrodes }
    }

    pub fn names(&self) -> Vec<String> {
        self.electrodes.iter().map(|e| e.name.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("electrodes serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: ElectrodeSet = serde_json::from_str(text)?;
        Self::new(s.electrodes)
    }
}

/// Fails if `p` lies inside or within `tol_um` of any element.
fn check_outside(mesh: &Mesh, name: &str, p: &Point, tol_um: f64) -> Result<()> {
    let hit = (0..mesh.n_elements()).into_par_iter().find_any(|&e| {
        let q = mesh.element_points(e);
        let lo = q.iter().fold(Point::repeat(f64::INFINITY), |a, b| a.inf(b));
        let hi = q.iter().fold(Point::repeat(f64::NEG_INFINITY), |a, b| a.sup(b));
        if (0..3).any(|k| p[k] < lo[k] - tol_um || p[k] > hi[k] + tol_um) {
            return false;
        }
        let (g, _) = basis_gradients(&q);
        // Barycentric coordinates from the basis gradients.
        let l: Vec<f64> = (0..4).map(|i| if i == 0 { 0.0 } else { g[i].dot(&(p - q[0])) }).collect();
        let l0 = 1.0 - l[1] - l[2] - l[3];
        let h = (q[1] - q[0]).norm().max((q[2] - q[0]).norm()).max((q[3] - q[0]).norm());
        let eps = tol_um / h;
        l0 >= -eps && l[1..].iter().all(|&x| x >= -eps)
    });
    match hit {
        Some(e) => Err(Error::Placement(format!("electrode `{name}` lies inside or on element {e}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LeadFieldSource {
    /// Point electrodes in an unbounded homogeneous conductor.
    Infinite { positions_um: Vec<[f64; 3]> },
    /// Externally computed per-node Z, one vector per electrode (V/A).
    Nodal { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadFieldSet {
    pub names: Vec<String>,
    /// S/m.
    pub sigma_b: f64,
    /// S/m.
    pub sigma_i: f64,
    pub source: LeadFieldSource,
}

/// `Z = 1/(4π σ_b r)` in V/A with `r` in metres.
pub fn point_lead(sigma_b: f64, electrode: &Point, x: &Point) -> f64 {
    1.0 / (4.0 * std::f64::consts::PI * sigma_b * (electrode - x).norm() * 1e-6)
}

/// ∇Z with respect to the source point, V/A per µm.
fn point_lead_gradient(sigma_b: f64, electrode: &Point, x: &Point) -> Vector3<f64> {
    let d = electrode - x;
    let r = d.norm();
    d / (4.0 * std::f64::consts::PI * sigma_b * r * r * r * 1e-6)
}

const GAUSS_A: f64 = 0.585_410_196_624_968_5;
const GAUSS_B: f64 = 0.138_196_601_125_010_5;

pub fn lead_field_infinite(mesh: &Mesh, electrodes: &ElectrodeSet, sigma_b: f64, sigma_i: f64) -> Result<LeadFieldSet> {
    if !(sigma_b > 0.0) || !(sigma_i > 0.0) {
        return Err(Error::Config(format!("conductivities must be positive, got σ_b = {sigma_b}, σ_i = {sigma_i}")));
    }
    let tol = 1e-3 * mesh.mean_edge_length();
    for e in &electrodes.electrodes {
        check_outside(mesh, &e.name, &Point::from(e.position_um), tol)?;
    }
    Ok(LeadFieldSet {
        names: electrodes.names(),
        sigma_b,
        sigma_i,
        source: LeadFieldSource::Infinite { positions_um: electrodes.electrodes.iter().map(|e| e.position_um).collect() },
    })
}

impl LeadFieldSet {
    pub fn n_electrodes(&self) -> usize {
        self.names.len()
    }

    /// Nodal Z of one electrode.
    pub fn nodal(&self, mesh: &Mesh, k: usize) -> Vec<f64> {
        match &self.source {
            LeadFieldSource::Infinite { positions_um } => {
                let p = Point::from(positions_um[k]);
                mesh.nodes.iter().map(|x| point_lead(self.sigma_b, &p, x)).collect()
            }
            LeadFieldSource::Nodal { values } => values[k].clone(),
        }
    }

    /// Replaces the analytic fields with per-node values; text has one line per node and one
    /// column per electrode.
    pub fn from_nodal_text(names: Vec<String>, sigma_b: f64, sigma_i: f64, text: &str, n_nodes: usize) -> Result<Self> {
        let mut values = vec![Vec::with_capacity(n_nodes); names.len()];
        for (ln, line) in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).enumerate() {
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if cols.len() != names.len() {
                return Err(Error::Parse { file: "lead field".into(), line: ln + 1, msg: format!("expected {} columns", names.len()) });
            }
            for (k, c) in cols.iter().enumerate() {
                let v: f64 = c.parse().map_err(|_| Error::Parse { file: "lead field".into(), line: ln + 1, msg: format!("bad value `{c}`") })?;
                if !v.is_finite() {
                    return Err(Error::Placement(format!("lead field `{}` is not finite at node {ln}", names[k])));
                }
                values[k].push(v);
            }
        }
        if values.iter().any(|v| v.len() != n_nodes) {
            return Err(Error::Input(format!("lead field has {} rows, mesh has {n_nodes} nodes", values[0].len())));
        }
        Ok(LeadFieldSet { names, sigma_b, sigma_i, source: LeadFieldSource::Nodal { values } })
    }

    pub fn to_nodal_text(&self, mesh: &Mesh) -> String {
        let cols: Vec<Vec<f64>> = (0..self.n_electrodes()).map(|k| self.nodal(mesh, k)).collect();
        let mut s = format!("# {}\n", self.names.join(","));
        for i in 0..mesh.n_nodes() {
            let row: Vec<String> = cols.iter().map(|c| format!("{:e}", c[i])).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Linear map from nodal Vm (mV) to electrode potentials (mV).
#[derive(Debug, Clone)]
pub struct LeadWeights {
    pub names: Vec<String>,
    /// Per electrode, one weight per node.
    pub weights: Vec<Vec<f64>>,
}

impl LeadWeights {
    /// `φ_e = −Σ σ_i (∇Vm · ∇Z_e) vol` over elements with `active[e]` (all if `None`). Analytic
    /// fields average ∇Z over each element by 4-point quadrature; nodal fields use P1 gradients.
    pub fn new(mesh: &Mesh, leads: &LeadFieldSet, active: Option<&[bool]>) -> Result<Self> {
        if let Some(a) = active {
            if a.len() != mesh.n_elements() {
                return Err(Error::Input("element mask does not match the mesh".into()));
            }
        }
        let weights = (0..leads.n_electrodes())
            .into_par_iter()
            .map(|k| {
                let nodal = match &leads.source {
                    LeadFieldSource::Nodal { values } => Some(&values[k]),
                    LeadFieldSource::Infinite { .. } => None,
                };
                let mut w = vec![0.0; mesh.n_nodes()];
                for (e, t) in mesh.elements.iter().enumerate() {
                    if active.is_some_and(|a| !a[e]) {
                        continue;
                    }
                    let q = mesh.element_points(e);
                    let (g, vol) = basis_gradients(&q);
                    let gz: Vector3<f64> = match (&leads.source, nodal) {
                        (_, Some(z)) => (0..4).map(|i| g[i] * z[t[i] as usize]).sum(),
                        (LeadFieldSource::Infinite { positions_um }, None) => {
                            let p = Point::from(positions_um[k]);
                            (0..4)
                                .map(|j| {
                                    let x = q.iter().enumerate().fold(Point::zeros(), |acc, (i, qi)| acc + qi * if i == j { GAUSS_A } else { GAUSS_B });
                                    point_lead_gradient(leads.sigma_b, &p, &x) * 0.25
                                })
                                .sum()
                        }
                        _ => unreachable!(),
                    };
                    // µm³ · 1/µm · (V/A)/µm → SI factor 1e-6.
                    let c = -leads.sigma_i * vol * 1e-6;
                    for i in 0..4 {
                        w[t[i] as usize] += c * g[i].dot(&gz);
                    }
                }
                w
            })
            .collect();
        Ok(LeadWeights { names: leads.names.clone(), weights })
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.first().map_or(0, |w| w.len())
    }

    pub fn apply(&self, vm: &[f64]) -> Result<Vec<f64>> {
        if vm.len() != self.n_nodes() {
            return Err(Error::Input(format!("Vm has {} nodes, lead weights expect {}", vm.len(), self.n_nodes())));
        }
        Ok(self.weights.iter().map(|w| w.iter().zip(vm).map(|(a, b)| a * b).sum()).collect())
    }
}
