//! Electrode potentials, 12-lead derivation, filtering and CSV I/O.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::filter::{filtfilt, Biquad};
use super::leadfield::LeadWeights;
use crate::error::{Error, Result};
use crate::propagation::VmTraces;

/// Electrode potentials in mV, one row per electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeTraces {
    pub names: Vec<String>,
    pub dt_ms: f64,
    pub data: Vec<Vec<f64>>,
}

impl ElectrodeTraces {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.data[i].as_slice())
    }

    pub fn n_samples(&self) -> usize {
        self.data.first().map_or(0, |d| d.len())
    }
}

pub fn compute_extracellular(vm: &VmTraces, weights: &LeadWeights) -> Result<ElectrodeTraces> {
    if vm.n_nodes() != weights.n_nodes() {
        return Err(Error::Input(format!("Vm covers {} nodes, the mesh has {}", vm.n_nodes(), weights.n_nodes())));
    }
    let mut frame = vec![0.0; vm.n_nodes()];
    let mut data = vec![Vec::with_capacity(vm.n_steps()); weights.names.len()];
    for k in 0..vm.n_steps() {
        vm.frame_into(k, &mut frame);
        for (d, p) in data.iter_mut().zip(weights.apply(&frame)?) {
            d.push(p);
        }
    }
    Ok(ElectrodeTraces { names: weights.names.clone(), dt_ms: vm.dt_ms, data })
}

pub const LEAD_NAMES: [&str; 12] = ["I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"];

/// Parameters of one applied filter stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub lowpass_hz: Option<f64>,
    pub highpass_hz: Option<f64>,
    /// Single-pass design cutoffs after the dual-pass correction.
    pub design_lowpass_hz: Option<f64>,
    pub design_highpass_hz: Option<f64>,
    pub order: usize,
    pub passes: usize,
    pub padding: String,
    pub sample_rate_hz: f64,
    pub scale: f64,
}

/// The 12 standard leads in mV, in [`LEAD_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgTraces {
    pub dt_ms: f64,
    pub leads: Vec<Vec<f64>>,
    pub provenance: Vec<FilterRecord>,
}

impl EcgTraces {
    pub fn n_samples(&self) -> usize {
        self.leads[0].len()
    }

    /// A lead by name; `-aVR` is the negated aVR.
    pub fn lead(&self, name: &str) -> Option<Vec<f64>> {
        if name == "-aVR" {
            return self.lead("aVR").map(|v| v.iter().map(|x| -x).collect());
        }
        LEAD_NAMES.iter().position(|n| *n == name).map(|i| self.leads[i].clone())
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("t_ms,{}\n", LEAD_NAMES.join(","));
        for k in 0..self.n_samples() {
            let _ = write!(s, "{}", k as f64 * self.dt_ms);
            for l in &self.leads {
                let _ = write!(s, ",{:e}", l[k]);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        if !self.provenance.is_empty() {
            let side = path.with_extension("filter.json");
            std::fs::write(&side, serde_json::to_string_pretty(&self.provenance)?).map_err(|e| Error::io(&side, e))?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file = path.display().to_string();
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let expect = format!("t_ms,{}", LEAD_NAMES.join(","));
        if header.trim() != expect {
            return Err(Error::Parse { file, line: 1, msg: format!("expected header `{expect}`") });
        }
        let mut t = Vec::new();
        let mut leads = vec![Vec::new(); 12];
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse { file: file.clone(), line: ln + 1, msg: "non-numeric value".into() })?;
            if v.len() != 13 {
                return Err(Error::Parse { file: file.clone(), line: ln + 1, msg: format!("expected 13 columns, found {}", v.len()) });
            }
            t.push(v[0]);
            for (l, x) in leads.iter_mut().zip(&v[1..]) {
                l.push(*x);
            }
        }
        if t.len() < 2 {
            return Err(Error::Parse { file, line: 2, msg: "need at least two samples".into() });
        }
        let dt_ms = t[1] - t[0];
        if t.windows(2).any(|w| ((w[1] - w[0]) - dt_ms).abs() > 1e-6 * dt_ms.abs().max(1e-9)) || !(dt_ms > 0.0) {
            return Err(Error::Input(format!("{}: samples are not uniformly spaced", path.display())));
        }
        let side = path.with_extension("filter.json");
        let provenance =
            if side.exists() { serde_json::from_str(&std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?)? } else { Vec::new() };
        Ok(EcgTraces { dt_ms, leads, provenance })
    }
}

/// Standard limb, augmented and Wilson-referenced precordial leads. II is formed as I + III so
/// the Einthoven identity holds exactly.
pub fn derive_12lead(phi: &ElectrodeTraces) -> Result<EcgTraces> {
    let get = |n: &str| phi.get(n).ok_or_else(|| Error::Input(format!("electrode `{n}` missing for the 12-lead derivation")));
    let (ra, la, ll) = (get("RA")?, get("LA")?, get("LL")?);
    let n = phi.n_samples();
    let lead_i: Vec<f64> = (0..n).map(|k| la[k] - ra[k]).collect();
    let lead_iii: Vec<f64> = (0..n).map(|k| ll[k] - la[k]).collect();
    let lead_ii: Vec<f64> = (0..n).map(|k| lead_i[k] + lead_iii[k]).collect();
    let avr = (0..n).map(|k| ra[k] - 0.5 * (la[k] + ll[k])).collect();
    let avl = (0..n).map(|k| la[k] - 0.5 * (ra[k] + ll[k])).collect();
    let avf = (0..n).map(|k| ll[k] - 0.5 * (ra[k] + la[k])).collect();
    let mut leads = vec![lead_i, lead_ii, lead_iii, avr, avl, avf];
    for v in super::leadfield::PRECORDIAL {
        let x = get(v)?;
        leads.push((0..n).map(|k| x[k] - (ra[k] + la[k] + ll[k]) / 3.0).collect());
    }
    Ok(EcgTraces { dt_ms: phi.dt_ms, leads, provenance: Vec::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub lowpass_hz: Option<f64>,
    pub highpass_hz: Option<f64>,
    pub scale: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { lowpass_hz: Some(150.0), highpass_hz: Some(0.5), scale: 0.2 }
    }
}

/// Cutoff correction for a second-order filter applied forward and backward.
const DUAL_PASS: f64 = 0.802_243_262_923_150_2;

/// Zero-phase second-order Butterworth low- and high-pass, then scaling. II is re-formed
/// from the filtered I and III.
pub fn filter_and_scale(traces: &EcgTraces, spec: &FilterSpec) -> Result<EcgTraces> {
    let fs = 1000.0 / traces.dt_ms;
    if !(spec.scale.is_finite()) {
        return Err(Error::Config("scale must be finite".into()));
    }
    let mut stages = Vec::new();
    let mut design_lp = None;
    let mut design_hp = None;
    if let Some(lp) = spec.lowpass_hz {
        if !(lp > 0.0) || fs <= 2.0 * lp {
            return Err(Error::Config(format!("sample rate {fs} Hz must exceed twice the {lp} Hz low-pass")));
        }
        let f = lp / DUAL_PASS;
        if f >= 0.5 * fs {
            return Err(Error::Config(format!("corrected low-pass {f:.1} Hz reaches the Nyquist rate {} Hz", 0.5 * fs)));
        }
        design_lp = Some(f);
        stages.push(Biquad::lowpass(f, fs));
    }
    if let Some(hp) = spec.highpass_hz {
        if !(hp > 0.0) || fs <= 2.0 * hp {
            return Err(Error::Config(format!("high-pass {hp} Hz is invalid at {fs} Hz")));
        }
        let f = hp * DUAL_PASS;
        design_hp = Some(f);
        stages.push(Biquad::highpass(f, fs));
    }
    let mut leads: Vec<Vec<f64>> = traces
        .leads
        .iter()
        .map(|l| {
            let mut x = l.clone();
            for s in &stages {
                x = filtfilt(s, &x);
            }
            x.iter().map(|v| v * spec.scale).collect()
        })
        .collect();
    leads[1] = leads[0].iter().zip(&leads[2]).map(|(a, b)| a + b).collect();
    let mut provenance = traces.provenance.clone();
    provenance.push(FilterRecord {
        lowpass_hz: spec.lowpass_hz,
        highpass_hz: spec.highpass_hz,
        design_lowpass_hz: design_lp,
        design_highpass_hz: design_hp,
        order: 2,
        passes: 2,
        padding: "odd".into(),
        sample_rate_hz: fs,
        scale: spec.scale,
    });
    Ok(EcgTraces { dt_ms: traces.dt_ms, leads, provenance })
}
