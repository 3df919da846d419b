//! Parameter sweeps over SAN site, bulk RA velocities, BB insertion and cable velocity.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{ensemble_mean, metrics_report, MetricsReport, PwdOptions};
use crate::ecg::{EcgTraces, LEAD_NAMES};
use crate::error::{Error, Result};
use crate::forward::{forward_cables, run_forward_with, ForwardConfig, ForwardSetup, StimulusSite};
use crate::model::BiatrialModel;
use crate::pathways::build_cable_between;
use crate::propagation::Conduction;
use crate::uac::UacPoint;

/// Explicit values or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { start, stop, step } => {
                if !(*step > 0.0) || !(stop >= start) {
                    return Err(Error::Config(format!("bad range {start}..{stop} step {step}")));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                // Rounded so that hashes do not depend on accumulated error.
                (0..n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("axis must hold finite values".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParameterSpace {
    /// SAN exit sites as RA (α, β).
    pub san: Vec<[f64; 2]>,
    pub san_radius_mm: f64,
    /// Bulk RA velocities, m/s.
    pub v_l: Axis,
    pub v_t: Axis,
    /// LA (α, β) insertion of the `bb` cable; `None` keeps the model's own.
    pub bb: Vec<Option<[f64; 2]>>,
    pub cable_velocity: Vec<Option<f64>>,
    pub velocity_scale: Axis,
}

impl Default for ParameterSpace {
    fn default() -> Self {
        ParameterSpace {
            san: vec![[0.8, 0.5]],
            san_radius_mm: 2.0,
            v_l: Axis::Range { start: 0.6, stop: 1.1, step: 0.05 },
            v_t: Axis::Range { start: 0.45, stop: 0.7875, step: 0.0375 },
            bb: vec![None],
            cable_velocity: vec![None],
            velocity_scale: Axis::Values(vec![1.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleParams {
    pub san: [f64; 2],
    pub san_radius_mm: f64,
    pub v_l: f64,
    pub v_t: f64,
    pub bb: Option<[f64; 2]>,
    pub cable_velocity: Option<f64>,
    pub velocity_scale: f64,
}

impl SampleParams {
    /// Content hash of the parameter tuple.
    pub fn key(&self) -> String {
        let json = serde_json::to_string(self).expect("parameters serialize");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn apply(&self, base: &ForwardConfig) -> ForwardConfig {
        let mut c = base.clone();
        c.stimulus = StimulusSite::Uac { alpha: self.san[0], beta: self.san[1], radius_mm: self.san_radius_mm };
        c.velocity.ra = Conduction::new(self.v_l, self.v_t);
        c.velocity.scale = self.velocity_scale;
        if self.cable_velocity.is_some() {
            c.cable_velocity = self.cable_velocity;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    pub params: SampleParams,
}

/// Cartesian product in axis order san, v_l, v_t, bb, cable_velocity, velocity_scale, keeping
/// only v_t < v_l.
pub fn enumerate_samples(space: &ParameterSpace) -> Result<Vec<Sample>> {
    if space.san.is_empty() || space.bb.is_empty() || space.cable_velocity.is_empty() {
        return Err(Error::Config("every sweep axis needs at least one value".into()));
    }
    if !(space.san_radius_mm >= 0.0) {
        return Err(Error::Config("SAN radius must be non-negative".into()));
    }
    let (vl, vt, ks) = (space.v_l.values()?, space.v_t.values()?, space.velocity_scale.values()?);
    if vl.iter().chain(&vt).chain(&ks).any(|v| !(*v > 0.0)) {
        return Err(Error::Config("velocities and scales must be positive".into()));
    }
    let mut out = Vec::new();
    for san in &space.san {
        for &v_l in &vl {
            for &v_t in vt.iter().filter(|&&t| t < v_l) {
                for bb in &space.bb {
                    for cv in &space.cable_velocity {
                        for &k in &ks {
                            let params = SampleParams { san: *san, san_radius_mm: space.san_radius_mm, v_l, v_t, bb: *bb, cable_velocity: *cv, velocity_scale: k };
                            out.push(Sample { id: out.len(), params });
                        }
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no samples satisfy v_t < v_l".into()));
    }
    Ok(out)
}

/// LA epicardial (α, β) of up to `count` nodes inside a disc of `radius_mm` around `center`,
/// spread by polar angle about the disc centre.
pub fn bb_disc(model: &BiatrialModel, center: [f64; 2], radius_mm: f64, count: usize) -> Result<Vec<[f64; 2]>> {
    let c = model.locator.locate(&UacPoint { alpha: center[0], beta: center[1], gamma: 1.0, side: 1 })?;
    let pc = model.mesh.nodes[c as usize];
    let u = &model.uac;
    let mut cand: Vec<(f64, u32)> = (0..u.n_nodes() as u32)
        .filter(|&v| u.side[v as usize] == 1 && u.gamma[v as usize] >= 1.0 - 1e-9 && v != c)
        .filter(|&v| (model.mesh.nodes[v as usize] - pc).norm() <= radius_mm * 1000.0)
        .map(|v| ((u.beta[v as usize] - center[1]).atan2(u.alpha[v as usize] - center[0]), v))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = vec![[u.alpha[c as usize], u.beta[c as usize]]];
    if count > 1 && !cand.is_empty() {
        let m = (count - 1).min(cand.len());
        out.extend((0..m).map(|i| cand[i * cand.len() / m].1).map(|v| [u.alpha[v as usize], u.beta[v as usize]]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: usize,
    pub key: String,
    pub params: SampleParams,
    pub ra_total_ms: Option<f64>,
    pub la_total_ms: Option<f64>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub key: String,
    pub params: SampleParams,
    pub ok: bool,
    pub error: Option<String>,
    pub ra_total_ms: Option<f64>,
    pub la_total_ms: Option<f64>,
    pub average_rmse_percent: Option<f64>,
    pub average_mad: Option<f64>,
    pub average_pwd_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub dt_ms: f64,
    /// Per lead, per sample time.
    pub min: Vec<Vec<f64>>,
    pub max: Vec<Vec<f64>>,
}

impl Envelope {
    pub fn width(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| lo.iter().zip(hi).map(|(a, b)| b - a).fold(0.0, f64::max)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_ms");
        for n in LEAD_NAMES {
            let _ = write!(s, ",{n}_min,{n}_max");
        }
        s.push('\n');
        for k in 0..self.min.first().map_or(0, |l| l.len()) {
            let _ = write!(s, "{}", k as f64 * self.dt_ms);
            for l in 0..self.min.len() {
                let _ = write!(s, ",{:e},{:e}", self.min[l][k], self.max[l][k]);
            }
            s.push('\n');
        }
        s
    }
}

pub fn envelope(traces: &[EcgTraces]) -> Result<Envelope> {
    let first = traces.first().ok_or_else(|| Error::Input("envelope of an empty ensemble".into()))?;
    let n = first.n_samples();
    if traces.iter().any(|t| t.n_samples() != n || (t.dt_ms - first.dt_ms).abs() > 1e-9 * first.dt_ms) {
        return Err(Error::Input("ensemble members use different sampling grids".into()));
    }
    let mut min = first.leads.clone();
    let mut max = first.leads.clone();
    for t in &traces[1..] {
        for l in 0..min.len() {
            for k in 0..n {
                min[l][k] = min[l][k].min(t.leads[l][k]);
                max[l][k] = max[l][k].max(t.leads[l][k]);
            }
        }
    }
    Ok(Envelope { dt_ms: first.dt_ms, min, max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub space: ParameterSpace,
    pub samples: Vec<SampleEntry>,
    pub best: Option<usize>,
    /// Largest envelope width per lead, in `LEAD_NAMES` order.
    pub envelope_width: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub manifest: SweepManifest,
    pub envelope: Option<Envelope>,
    pub traces: Vec<Option<EcgTraces>>,
    pub reports: Vec<Option<MetricsReport>>,
    /// Samples computed in this call, as opposed to reused from disk.
    pub computed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub target: Option<EcgTraces>,
    pub pwd: PwdOptions,
    /// Stop after computing this many new samples (simulated interruption).
    pub limit: Option<usize>,
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sample_dir(out: &Path, key: &str) -> PathBuf {
    out.join("samples").join(key)
}

fn run_sample(model: &BiatrialModel, setup: &ForwardSetup, base: &ForwardConfig, s: &Sample, dir: &Path) -> Result<SampleOutcome> {
    let cfg = s.params.apply(base);
    let mut cables = forward_cables(model, &cfg)?;
    if let Some([alpha, beta]) = s.params.bb {
        let i = cables.iter().position(|c| c.name == "bb").ok_or_else(|| Error::Config("the model has no `bb` cable to move".into()))?;
        let la = model.locator.locate(&UacPoint { alpha, beta, gamma: 1.0, side: 1 })?;
        let old = &cables[i];
        cables[i] = build_cable_between("bb", &model.mesh, &model.topo, &model.uac, old.ra_node(), la, old.velocity, model.ic.gamma_min)?;
    }
    let r = run_forward_with(model, setup, &cfg, &cables)?;
    r.ecg.write_csv(&dir.join("ecg.csv"))?;
    Ok(SampleOutcome {
        id: s.id,
        key: s.params.key(),
        params: s.params.clone(),
        ra_total_ms: r.ra_total_ms,
        la_total_ms: r.la_total_ms,
        truncated: r.truncated,
    })
}

fn load_outcome(dir: &Path, params: &SampleParams) -> Option<SampleOutcome> {
    let text = std::fs::read_to_string(dir.join("result.json")).ok()?;
    let o: SampleOutcome = serde_json::from_str(&text).ok()?;
    (o.params == *params && dir.join("ecg.csv").exists()).then_some(o)
}

/// Runs every sample not already on disk, then rebuilds metrics, envelope and manifest from
/// the stored traces.
pub fn run_sweep(model: &BiatrialModel, base: &ForwardConfig, space: &ParameterSpace, out: &Path, opts: &SweepOptions) -> Result<SweepResult> {
    let samples = enumerate_samples(space)?;
    if let Some(t) = &opts.target {
        let n = (base.duration_ms / base.dt_ms).floor() as usize + 1;
        if t.n_samples() != n || (t.dt_ms - base.dt_ms).abs() > 1e-9 * base.dt_ms {
            return Err(Error::Input(format!("target has {} samples at {} ms, the sweep produces {n} at {} ms", t.n_samples(), t.dt_ms, base.dt_ms)));
        }
    }
    std::fs::create_dir_all(out.join("samples")).map_err(|e| Error::io(out, e))?;
    let setup = ForwardSetup::new(model, base)?;
    let pending: Vec<&Sample> = samples.iter().filter(|s| load_outcome(&sample_dir(out, &s.params.key()), &s.params).is_none()).collect();
    let todo: Vec<&Sample> = pending.iter().copied().take(opts.limit.unwrap_or(usize::MAX)).collect();
    let computed = todo.len();
    todo.par_iter().try_for_each(|s| -> Result<()> {
        let key = s.params.key();
        let dir = sample_dir(out, &key);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let t0 = Instant::now();
        match run_sample(model, &setup, base, s, &dir) {
            Ok(o) => {
                let _ = std::fs::remove_file(dir.join("error.txt"));
                write_atomic(&dir.join("result.json"), &serde_json::to_string_pretty(&o)?)?;
                log::info!("sample {} ({key}) done in {:.2?}", s.id, t0.elapsed());
            }
            Err(e) => {
                log::warn!("sample {} ({key}) failed: {e}", s.id);
                write_atomic(&dir.join("error.txt"), &format!("{e}\n"))?;
            }
        }
        Ok(())
    })?;
    if computed < pending.len() {
        log::info!("stopped after {computed} new samples, {} remain", pending.len() - computed);
    }
    aggregate(&samples, space, out, opts, computed)
}

fn aggregate(samples: &[Sample], space: &ParameterSpace, out: &Path, opts: &SweepOptions, computed: usize) -> Result<SweepResult> {
    let mut traces = Vec::with_capacity(samples.len());
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let key = s.params.key();
        let dir = sample_dir(out, &key);
        let mut e = SampleEntry {
            id: s.id,
            key,
            params: s.params.clone(),
            ok: false,
            error: None,
            ra_total_ms: None,
            la_total_ms: None,
            average_rmse_percent: None,
            average_mad: None,
            average_pwd_ms: None,
        };
        match load_outcome(&dir, &s.params) {
            Some(o) => {
                traces.push(Some(EcgTraces::read_csv(&dir.join("ecg.csv"))?));
                e.ok = true;
                e.ra_total_ms = o.ra_total_ms;
                e.la_total_ms = o.la_total_ms;
            }
            None => {
                traces.push(None);
                e.error = Some(std::fs::read_to_string(dir.join("error.txt")).map(|t| t.trim().to_string()).unwrap_or_else(|_| "not computed".into()));
            }
        }
        entries.push(e);
    }
    let ok: Vec<&EcgTraces> = traces.iter().flatten().collect();
    let (env, mean) = if ok.is_empty() {
        (None, None)
    } else {
        let env = envelope(&ok.iter().map(|t| (*t).clone()).collect::<Vec<_>>())?;
        let leads = (0..ok[0].leads.len())
            .map(|l| ensemble_mean(&ok.iter().map(|t| t.leads[l].as_slice()).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        (Some(env), Some(EcgTraces { dt_ms: ok[0].dt_ms, leads, provenance: Vec::new() }))
    };
    let mut reports = Vec::with_capacity(samples.len());
    for (e, t) in entries.iter_mut().zip(&traces) {
        let Some(t) = t else {
            reports.push(None);
            continue;
        };
        let dir = sample_dir(out, &e.key);
        match metrics_report(t, opts.target.as_ref(), mean.as_ref(), &opts.pwd) {
            Ok(r) => {
                e.average_rmse_percent = r.average_rmse_percent;
                e.average_mad = r.average_mad;
                e.average_pwd_ms = Some(r.average_pwd_ms);
                write_atomic(&dir.join("metrics.json"), &serde_json::to_string_pretty(&r)?)?;
                reports.push(Some(r));
            }
            Err(err) => {
                e.error = Some(format!("metrics: {err}"));
                reports.push(None);
            }
        }
    }
    let best = best_of(&entries);
    let manifest =
        SweepManifest { space: space.clone(), envelope_width: env.as_ref().map(|e| e.width()).unwrap_or_default(), samples: entries, best };
    if let Some(env) = &env {
        write_atomic(&out.join("envelope.csv"), &env.to_csv())?;
    }
    write_atomic(&out.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(SweepResult { manifest, envelope: env, traces, reports, computed })
}

fn best_of(entries: &[SampleEntry]) -> Option<usize> {
    entries
        .iter()
        .filter_map(|e| e.average_rmse_percent.map(|r| (r, e.id)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Sample with the lowest lead-averaged RMSE%; ties go to the earliest sample.
pub fn select_best(manifest: &SweepManifest) -> Result<&SampleEntry> {
    let id = best_of(&manifest.samples).ok_or_else(|| Error::Selection("no sample carries RMSE metrics; run the sweep with a target".into()))?;
    Ok(manifest.samples.iter().find(|e| e.id == id).unwrap())
}

pub fn read_manifest(out: &Path) -> Result<SweepManifest> {
    let p = out.join("manifest.json");
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}
