//! Action-potential template and reaction-eikonal transmembrane voltage.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eikonal::ActivationMap;
use crate::error::{Error, Result};
use crate::monodomain::{simulate_slab, ConductivitySet, IonicModelParams, SlabSpec, SlabStimulus};

/// Sampled AP in mV. Time zero of [`APTemplate::value`] is the activation instant, the first
/// −20 mV crossing, which lies `activation_ms` into the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APTemplate {
    pub dt_ms: f64,
    pub samples: Vec<f64>,
    pub rest_mv: f64,
    pub amplitude_mv: f64,
    /// 10 % to 90 % rise time.
    pub upstroke_ms: f64,
    pub activation_ms: f64,
}

impl APTemplate {
    pub fn from_samples(dt_ms: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt_ms > 0.0) || samples.len() < 3 || samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("template needs a positive step and at least three finite samples".into()));
        }
        let rest = samples[0];
        let (ipk, peak) = samples.iter().copied().enumerate().fold((0, f64::MIN), |a, (i, x)| if x > a.1 { (i, x) } else { a });
        let amplitude = peak - rest;
        if !(amplitude > 0.0) {
            return Err(Error::Input("template never rises above its first sample".into()));
        }
        // The upstroke runs from the last resting sample to the peak.
        let start = samples[..=ipk].iter().rposition(|&x| x <= rest + 1e-9).unwrap_or(0);
        if samples[start..=ipk].windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Input("template upstroke is not monotone".into()));
        }
        let at = |level: f64| -> f64 {
            let i = (start..ipk).find(|&i| samples[i + 1] >= level).unwrap_or(ipk);
            let (a, b) = (samples[i], samples[(i + 1).min(ipk)]);
            (i as f64 + if b > a { (level - a) / (b - a) } else { 0.0 }).clamp(0.0, ipk as f64) * dt_ms
        };
        if peak < -20.0 {
            return Err(Error::Input(format!("template peak {peak:.1} mV never crosses −20 mV")));
        }
        let activation_ms = at(-20.0);
        let upstroke_ms = at(rest + 0.9 * amplitude) - at(rest + 0.1 * amplitude);
        Ok(APTemplate { dt_ms, samples, rest_mv: rest, amplitude_mv: amplitude, upstroke_ms, activation_ms })
    }

    /// Single-cell AP of the ionic surrogate over 400 ms.
    pub fn from_ionic(ionic: &IonicModelParams) -> Result<Self> {
        let dt: f64 = 0.01;
        let step = dt.min(0.1 * ionic.tau_in);
        let raw = ionic.single_cell(step, 400.0, 1.0, 0.5)?;
        // Resample to 0.01 ms and drop the quiet lead, keeping one resting sample.
        let first = raw.iter().position(|&x| x > ionic.rest_mv).unwrap_or(1).saturating_sub(1);
        let ratio = dt / step;
        let n = ((raw.len() - 1 - first) as f64 * step / dt).floor() as usize;
        let samples = (0..=n)
            .map(|k| {
                let x = first as f64 + k as f64 * ratio;
                let i = (x.floor() as usize).min(raw.len() - 2);
                let f = x - i as f64;
                raw[i] * (1.0 - f) + raw[i + 1] * f
            })
            .collect();
        Self::from_samples(dt, samples)
    }

    /// AP propagated along a 10 mm RD cable at 0.25 mm, recorded 6 mm from the paced end.
    /// Unlike the single-cell AP it carries the electrotonic foot of tissue.
    pub fn from_tissue(ionic: &IonicModelParams, conductivity: &ConductivitySet) -> Result<Self> {
        let spec = SlabSpec { dims_mm: [10.0, 0.5, 0.5], h_mm: 0.25, fiber: [1.0, 0.0, 0.0] };
        let dt = 0.01f64.min(0.1 * ionic.tau_in);
        // Node 24 sits at x = 6 mm on the first row of the 41-node axis.
        let probe = (6.0 / spec.h_mm).round() as u32;
        let (_, run) = simulate_slab(&spec, conductivity, *ionic, &SlabStimulus::planar(1.0), 420.0, dt, &[probe], 1)?;
        let tau = run.activation_ms[probe as usize];
        if !tau.is_finite() {
            return Err(Error::Input("the cable does not propagate; no tissue action potential".into()));
        }
        let first = ((tau - 5.0).max(0.0) / dt).floor() as usize;
        let raw = &run.traces[0][first..];
        let ratio = 0.01 / dt;
        let n = ((raw.len() - 1) as f64 / ratio).floor() as usize;
        let mut samples = Vec::with_capacity(n + 2);
        samples.push(ionic.rest_mv);
        samples.extend((0..=n).map(|k| {
            let x = k as f64 * ratio;
            let i = (x.floor() as usize).min(raw.len() - 2);
            let f = x - i as f64;
            (raw[i] * (1.0 - f) + raw[i + 1] * f).max(ionic.rest_mv)
        }));
        Self::from_samples(0.01, samples)
    }

    pub fn duration_ms(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt_ms
    }

    /// Voltage `s` ms after activation: resting before the upstroke, last sample past the end.
    pub fn value(&self, s: f64) -> f64 {
        let x = (s + self.activation_ms) / self.dt_ms;
        if !(x > 0.0) {
            return self.rest_mv;
        }
        let i = x.floor() as usize;
        if i + 1 >= self.samples.len() {
            return *self.samples.last().unwrap();
        }
        let f = x - i as f64;
        self.samples[i] * (1.0 - f) + self.samples[i + 1] * f
    }
}

impl Default for APTemplate {
    fn default() -> Self {
        Self::from_tissue(&IonicModelParams::default(), &ConductivitySet::RA).expect("default tissue yields an action potential")
    }
}

/// Lazily evaluated reaction-eikonal voltage, `Vm(x, t) = template(t − τ(x))`.
#[derive(Debug, Clone)]
pub struct VmTraces<'a> {
    pub tau: &'a [f64],
    pub template: &'a APTemplate,
    pub dt_ms: f64,
    pub duration_ms: f64,
    /// Set when some finite activation lies past the end of the window.
    pub truncated: bool,
}

impl VmTraces<'_> {
    pub fn n_nodes(&self) -> usize {
        self.tau.len()
    }

    pub fn n_steps(&self) -> usize {
        (self.duration_ms / self.dt_ms + 1e-9).floor() as usize + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt_ms
    }

    pub fn value(&self, node: usize, t: f64) -> f64 {
        let tau = self.tau[node];
        if tau.is_finite() {
            self.template.value(t - tau)
        } else {
            self.template.rest_mv
        }
    }

    pub fn frame_into(&self, k: usize, out: &mut [f64]) {
        let t = self.time(k);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.value(i, t);
        }
    }

    pub fn trace(&self, node: u32) -> Vec<f64> {
        (0..self.n_steps()).map(|k| self.value(node as usize, self.time(k))).collect()
    }

    /// CSV with a `# dt_ms,duration_ms` header line, then one row per selected node.
    pub fn write_csv(&self, path: &Path, nodes: &[u32]) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        let io = |e| Error::io(path, e);
        writeln!(w, "# dt_ms={},duration_ms={},truncated={}", self.dt_ms, self.duration_ms, self.truncated).map_err(io)?;
        for &v in nodes {
            if v as usize >= self.n_nodes() {
                return Err(Error::Input(format!("node {v} out of range")));
            }
            let row: Vec<String> = self.trace(v).iter().map(|x| format!("{x:.4}")).collect();
            writeln!(w, "{v},{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

pub fn recover_vm<'a>(activation: &'a ActivationMap, template: &'a APTemplate, duration_ms: f64, dt_ms: f64) -> Result<VmTraces<'a>> {
    if !(duration_ms > 0.0) || !(dt_ms > 0.0) || dt_ms > duration_ms {
        return Err(Error::Config(format!("need 0 < dt ≤ duration, got dt = {dt_ms}, duration = {duration_ms}")));
    }
    let truncated = activation.max_finite().is_some_and(|m| m > duration_ms);
    if truncated {
        log::warn!("activation runs past the {duration_ms} ms window; depolarization is truncated");
    }
    Ok(VmTraces { tau: &activation.tau, template, dt_ms, duration_ms, truncated })
}
