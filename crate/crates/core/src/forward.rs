//! One forward evaluation: eikonal activation, Vm recovery and the 12-lead ECG.

use serde::{Deserialize, Serialize};

use crate::ecg::{compute_extracellular, derive_12lead, filter_and_scale, lead_field_infinite, ElectrodeSet, ElectrodeTraces, EcgTraces, FilterSpec, LeadWeights};
use crate::error::{Error, Result};
use crate::model::BiatrialModel;
use crate::pathways::Cable;
use crate::propagation::{recover_vm, APTemplate, ActivationMap, EikonalOptions, EikonalSolver, StimulusSpec, VelocityConfig, VelocityField};
use crate::uac::UacPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StimulusSite {
    /// Every node of the labelled SAN region.
    San,
    /// RA nodes within `radius_mm` of the node nearest to (α, β) on the epicardium.
    Uac { alpha: f64, beta: f64, radius_mm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardConfig {
    pub velocity: VelocityConfig,
    pub stimulus: StimulusSite,
    pub onset_ms: f64,
    pub eikonal: EikonalOptions,
    pub cables: bool,
    /// Replaces every cable velocity (m/s). The global velocity scale applies on top.
    pub cable_velocity: Option<f64>,
    pub duration_ms: f64,
    pub dt_ms: f64,
    /// S/m.
    pub sigma_b: f64,
    /// S/m.
    pub sigma_i: f64,
    pub filter: FilterSpec,
    /// Standard placement around the mesh centroid when absent.
    pub electrodes: Option<ElectrodeSet>,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            velocity: VelocityConfig::default(),
            stimulus: StimulusSite::San,
            onset_ms: 0.0,
            eikonal: EikonalOptions::default(),
            cables: true,
            cable_velocity: None,
            duration_ms: 200.0,
            dt_ms: 1.0,
            sigma_b: 0.2,
            sigma_i: 0.583,
            filter: FilterSpec::default(),
            electrodes: None,
        }
    }
}

impl ForwardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_ms > 0.0) || !(self.dt_ms > 0.0) || self.dt_ms > self.duration_ms {
            return Err(Error::Config(format!("need 0 < dt ({}) <= duration ({})", self.dt_ms, self.duration_ms)));
        }
        if !(self.sigma_b > 0.0) || !(self.sigma_i > 0.0) {
            return Err(Error::Config("conductivities must be positive".into()));
        }
        if !(self.onset_ms >= 0.0) {
            return Err(Error::Config(format!("onset must be non-negative, got {}", self.onset_ms)));
        }
        if let Some(v) = self.cable_velocity {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("cable velocity must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Quantities reusable across forward runs on one model.
pub struct ForwardSetup {
    pub electrodes: ElectrodeSet,
    pub template: APTemplate,
    active: Vec<bool>,
    weights: LeadWeights,
    sigma: (f64, f64),
}

fn conducting_mask(vf: &VelocityField) -> Vec<bool> {
    vf.conduction.iter().map(|c| c.is_some()).collect()
}

impl ForwardSetup {
    pub fn new(model: &BiatrialModel, config: &ForwardConfig) -> Result<Self> {
        config.validate()?;
        let electrodes = config.electrodes.clone().unwrap_or_else(|| ElectrodeSet::standard(&model.centroid()));
        let vf = VelocityField::from_config(&model.mesh, &model.catalog, &config.velocity)?;
        let active = conducting_mask(&vf);
        let leads = lead_field_infinite(&model.mesh, &electrodes, config.sigma_b, config.sigma_i)?;
        let weights = LeadWeights::new(&model.mesh, &leads, Some(&active))?;
        Ok(ForwardSetup { electrodes, template: APTemplate::default(), active, weights, sigma: (config.sigma_b, config.sigma_i) })
    }

    fn weights_for(&self, model: &BiatrialModel, config: &ForwardConfig, vf: &VelocityField) -> Result<Option<LeadWeights>> {
        let mask = conducting_mask(vf);
        if mask == self.active && self.sigma == (config.sigma_b, config.sigma_i) {
            return Ok(None);
        }
        let leads = lead_field_infinite(&model.mesh, &self.electrodes, config.sigma_b, config.sigma_i)?;
        LeadWeights::new(&model.mesh, &leads, Some(&mask)).map(Some)
    }
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub activation: ActivationMap,
    pub electrodes: ElectrodeTraces,
    pub raw: EcgTraces,
    pub ecg: EcgTraces,
    pub ra_total_ms: Option<f64>,
    pub la_total_ms: Option<f64>,
    /// Activation outlasted the simulated window.
    pub truncated: bool,
}

pub fn stimulus_nodes(model: &BiatrialModel, site: &StimulusSite) -> Result<Vec<u32>> {
    let nodes = match site {
        StimulusSite::San => model.san_nodes(),
        StimulusSite::Uac { alpha, beta, radius_mm } => {
            model.site_nodes(&UacPoint { alpha: *alpha, beta: *beta, gamma: 1.0, side: 0 }, *radius_mm)?
        }
    };
    if nodes.is_empty() {
        return Err(Error::Config("stimulus site selects no nodes".into()));
    }
    Ok(nodes)
}

pub fn forward_cables(model: &BiatrialModel, config: &ForwardConfig) -> Result<Vec<Cable>> {
    if !config.cables {
        return Ok(Vec::new());
    }
    model.ics.cables.iter().map(|c| c.with_velocity(config.cable_velocity.unwrap_or(c.velocity) * config.velocity.scale)).collect()
}

/// Full forward run with the model's own cables.
pub fn run_forward(model: &BiatrialModel, setup: &ForwardSetup, config: &ForwardConfig) -> Result<ForwardResult> {
    let cables = forward_cables(model, config)?;
    run_forward_with(model, setup, config, &cables)
}

pub fn run_forward_with(model: &BiatrialModel, setup: &ForwardSetup, config: &ForwardConfig, cables: &[Cable]) -> Result<ForwardResult> {
    let activation = simulate_activation(model, config, cables)?;
    let (electrodes, raw, ecg, truncated) = ecg_from_activation(model, setup, config, &activation)?;
    let side_nodes = |s: u8| (0..model.mesh.n_nodes() as u32).filter(move |&v| model.uac.side[v as usize] == s);
    let ra_total_ms = activation.total_time(side_nodes(0));
    let la_total_ms = activation.total_time(side_nodes(1));
    Ok(ForwardResult { activation, electrodes, raw, ecg, ra_total_ms, la_total_ms, truncated })
}

/// Cable-coupled eikonal activation from the configured stimulus.
pub fn simulate_activation(model: &BiatrialModel, config: &ForwardConfig, cables: &[Cable]) -> Result<ActivationMap> {
    config.validate()?;
    let vf = VelocityField::from_config(&model.mesh, &model.catalog, &config.velocity)?;
    let stim = StimulusSpec::new(stimulus_nodes(model, &config.stimulus)?, config.onset_ms)?;
    EikonalSolver::new(&model.mesh, &vf, config.eikonal)?.solve_coupled(std::slice::from_ref(&stim), cables)
}

/// Electrode potentials, raw and filtered 12-lead ECG, and the truncation flag.
pub fn ecg_from_activation(
    model: &BiatrialModel,
    setup: &ForwardSetup,
    config: &ForwardConfig,
    activation: &ActivationMap,
) -> Result<(ElectrodeTraces, EcgTraces, EcgTraces, bool)> {
    config.validate()?;
    if activation.n_nodes() != model.mesh.n_nodes() {
        return Err(Error::Input(format!("activation covers {} nodes, the mesh has {}", activation.n_nodes(), model.mesh.n_nodes())));
    }
    let vf = VelocityField::from_config(&model.mesh, &model.catalog, &config.velocity)?;
    let vm = recover_vm(activation, &setup.template, config.duration_ms, config.dt_ms)?;
    let own = setup.weights_for(model, config, &vf)?;
    let weights = own.as_ref().unwrap_or(&setup.weights);
    let electrodes = compute_extracellular(&vm, weights)?;
    let raw = derive_12lead(&electrodes)?;
    let ecg = filter_and_scale(&raw, &config.filter)?;
    Ok((electrodes, raw, ecg, vm.truncated))
}
