//! P-wave and activation-map comparison metrics.

use serde::{Deserialize, Serialize};

use crate::ecg::EcgTraces;
use crate::error::{Error, Result};

/// Candidate and reference traces on one sampling grid.
#[derive(Debug, Clone, Copy)]
pub struct SignalPair<'a> {
    pub candidate: &'a [f64],
    pub reference: &'a [f64],
    pub dt_ms: f64,
    pub lead: &'a str,
}

impl<'a> SignalPair<'a> {
    pub fn new(candidate: &'a [f64], reference: &'a [f64], dt_ms: f64, lead: &'a str) -> Result<Self> {
        if candidate.len() != reference.len() {
            return Err(Error::Input(format!("lead {lead}: {} candidate samples vs {} reference samples", candidate.len(), reference.len())));
        }
        if !(dt_ms > 0.0) {
            return Err(Error::Input(format!("lead {lead}: sampling step must be positive")));
        }
        Ok(SignalPair { candidate, reference, dt_ms, lead })
    }
}

/// `100·√(Σ(φ_v − φ_r)² / Σφ_r²)`.
pub fn rmse_percent(p: &SignalPair) -> Result<f64> {
    let num: f64 = p.candidate.iter().zip(p.reference).map(|(v, r)| (v - r) * (v - r)).sum();
    let den: f64 = p.reference.iter().map(|r| r * r).sum();
    if !(den > 0.0) {
        return Err(Error::Measurement(format!("RMSE% undefined for lead {}: reference has zero energy", p.lead)));
    }
    Ok(100.0 * (num / den).sqrt())
}

/// Mean absolute distance from `mean`.
pub fn mad(candidate: &[f64], mean: &[f64]) -> Result<f64> {
    if candidate.len() != mean.len() || candidate.is_empty() {
        return Err(Error::Input(format!("MAD needs equal non-empty lengths, got {} and {}", candidate.len(), mean.len())));
    }
    Ok(candidate.iter().zip(mean).map(|(a, b)| (a - b).abs()).sum::<f64>() / candidate.len() as f64)
}

/// Sample-wise mean of equally long traces.
pub fn ensemble_mean(traces: &[&[f64]]) -> Result<Vec<f64>> {
    let n = traces.first().map(|t| t.len()).ok_or_else(|| Error::Input("empty ensemble".into()))?;
    if traces.iter().any(|t| t.len() != n) {
        return Err(Error::Input("ensemble traces differ in length".into()));
    }
    Ok((0..n).map(|k| traces.iter().map(|t| t[k]).sum::<f64>() / traces.len() as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PwdOptions {
    /// Slope threshold as a fraction of the largest slope.
    pub k: f64,
    /// Time the slope must stay above threshold, ms.
    pub sustain_ms: f64,
}

impl Default for PwdOptions {
    fn default() -> Self {
        PwdOptions { k: 0.05, sustain_ms: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pwd {
    pub onset_ms: f64,
    pub offset_ms: f64,
    pub pwd_ms: f64,
    /// No sustained suprathreshold slope; duration reported as zero.
    pub flagged: bool,
}

/// P-wave duration by slope thresholding with central differences.
pub fn pwd_sloping(trace: &[f64], dt_ms: f64, opts: &PwdOptions) -> Result<Pwd> {
    if !(dt_ms > 0.0) || !(opts.k > 0.0 && opts.k < 1.0) || !(opts.sustain_ms >= 0.0) {
        return Err(Error::Config("PWD needs dt > 0, 0 < k < 1 and a non-negative sustain time".into()));
    }
    let n = trace.len();
    let flagged = Pwd { onset_ms: 0.0, offset_ms: 0.0, pwd_ms: 0.0, flagged: true };
    if n < 3 {
        return Ok(flagged);
    }
    let d: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => (trace[1] - trace[0]) / dt_ms,
            i if i == n - 1 => (trace[n - 1] - trace[n - 2]) / dt_ms,
            i => (trace[i + 1] - trace[i - 1]) / (2.0 * dt_ms),
        })
        .map(f64::abs)
        .collect();
    let max = d.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Ok(flagged);
    }
    let thr = opts.k * max;
    let m = (opts.sustain_ms / dt_ms).round() as usize;
    let above: Vec<bool> = d.iter().map(|&x| x > thr).collect();
    let run_from = |i: usize| i + m < n && above[i..=i + m].iter().all(|&a| a);
    let run_to = |j: usize| j >= m && above[j - m..=j].iter().all(|&a| a);
    let onset = (0..n).find(|&i| run_from(i));
    let offset = (0..n).rev().find(|&j| run_to(j));
    match (onset, offset) {
        (Some(a), Some(b)) if b > a => {
            Ok(Pwd { onset_ms: a as f64 * dt_ms, offset_ms: b as f64 * dt_ms, pwd_ms: (b - a) as f64 * dt_ms, flagged: false })
        }
        _ => Ok(flagged),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub label: String,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationDiff {
    #[serde(skip)]
    pub abs: Vec<f64>,
    pub all: DiffSummary,
    pub per_atrium: Vec<DiffSummary>,
    /// Nodes finite in exactly one map.
    pub mismatched: usize,
}

fn summarize(label: &str, it: impl Iterator<Item = f64>) -> DiffSummary {
    let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
    for x in it {
        max = max.max(x);
        sum += x;
        n += 1;
    }
    DiffSummary { label: label.into(), max_ms: max, mean_ms: if n > 0 { sum / n as f64 } else { 0.0 }, nodes: n }
}

/// Nodewise `|τ_a − τ_b|` over nodes finite in both maps; `side` (0 RA, 1 LA) adds per-atrium
/// summaries.
pub fn activation_diff(a: &[f64], b: &[f64], side: Option<&[u8]>) -> Result<ActivationDiff> {
    if a.len() != b.len() || side.is_some_and(|s| s.len() != a.len()) {
        return Err(Error::Input(format!("activation maps cover {} and {} nodes", a.len(), b.len())));
    }
    let abs: Vec<f64> = a.iter().zip(b).map(|(x, y)| if x.is_finite() && y.is_finite() { (x - y).abs() } else { f64::NAN }).collect();
    let mismatched = a.iter().zip(b).filter(|(x, y)| x.is_finite() != y.is_finite()).count();
    let all = summarize("all", abs.iter().copied().filter(|x| !x.is_nan()));
    let per_atrium = match side {
        Some(s) => [(0u8, "RA"), (1, "LA")]
            .iter()
            .map(|&(k, name)| summarize(name, abs.iter().zip(s).filter(|(x, &sd)| sd == k && !x.is_nan()).map(|(x, _)| *x)))
            .collect(),
        None => Vec::new(),
    };
    Ok(ActivationDiff { abs, all, per_atrium, mismatched })
}

/// Report column order.
pub const REPORT_LEADS: [&str; 12] = ["aVL", "I", "-aVR", "II", "aVF", "III", "V1", "V2", "V3", "V4", "V5", "V6"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadMetrics {
    pub lead: String,
    pub rmse_percent: Option<f64>,
    pub mad: Option<f64>,
    pub pwd_ms: f64,
    pub pwd_flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub leads: Vec<LeadMetrics>,
    pub average_rmse_percent: Option<f64>,
    pub average_mad: Option<f64>,
    pub average_pwd_ms: f64,
    /// aVR is reported alongside −aVR; its RMSE% and MAD equal those of −aVR.
    pub avr: LeadMetrics,
    #[serde(default)]
    pub activation: Option<ActivationDiff>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-lead RMSE% against `reference`, MAD against `ensemble_mean` and PWD, averaged over the
/// twelve report leads.
pub fn metrics_report(candidate: &EcgTraces, reference: Option<&EcgTraces>, ensemble_mean: Option<&EcgTraces>, pwd: &PwdOptions) -> Result<MetricsReport> {
    for other in [reference, ensemble_mean].into_iter().flatten() {
        if other.n_samples() != candidate.n_samples() || (other.dt_ms - candidate.dt_ms).abs() > 1e-9 * candidate.dt_ms {
            return Err(Error::Input("reference traces use a different sampling grid".into()));
        }
    }
    let row = |name: &str| -> Result<LeadMetrics> {
        let c = candidate.lead(name).unwrap();
        let rmse = match reference {
            Some(r) => Some(rmse_percent(&SignalPair::new(&c, &r.lead(name).unwrap(), candidate.dt_ms, name)?)?),
            None => None,
        };
        let m = match ensemble_mean {
            Some(e) => Some(mad(&c, &e.lead(name).unwrap())?),
            None => None,
        };
        let p = pwd_sloping(&c, candidate.dt_ms, pwd)?;
        Ok(LeadMetrics { lead: name.into(), rmse_percent: rmse, mad: m, pwd_ms: p.pwd_ms, pwd_flagged: p.flagged })
    };
    let leads: Vec<LeadMetrics> = REPORT_LEADS.iter().map(|n| row(n)).collect::<Result<_>>()?;
    let avg = |f: &dyn Fn(&LeadMetrics) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = leads.iter().map(f).collect();
        v.map(|v| mean(&v))
    };
    Ok(MetricsReport {
        average_rmse_percent: avg(&|l| l.rmse_percent),
        average_mad: avg(&|l| l.mad),
        average_pwd_ms: mean(&leads.iter().map(|l| l.pwd_ms).collect::<Vec<_>>()),
        avr: row("aVR")?,
        leads,
        activation: None,
    })
}
