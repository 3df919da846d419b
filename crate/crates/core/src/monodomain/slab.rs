//! Explicit monodomain solver on structured slabs.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::ionic::IonicModelParams;
use crate::error::{Error, Result};
use crate::fields::fem::{assemble_stiffness, lumped_mass, Region};
use crate::linalg::CsrMatrix;
use crate::mesh::generate::generate_slab;
use crate::mesh::Mesh;

/// Bidomain conductivities reduced to monodomain by harmonic means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductivitySet {
    pub g_il: f64,
    pub g_el: f64,
    pub g_it: f64,
    pub g_et: f64,
    /// Surface-to-volume ratio, 1/cm.
    #[serde(default = "default_beta")]
    pub beta_sv: f64,
    /// Membrane capacitance, µF/cm².
    #[serde(default = "default_cm")]
    pub cm: f64,
}

fn default_beta() -> f64 {
    1400.0
}

fn default_cm() -> f64 {
    1.0
}

impl ConductivitySet {
    pub const fn new(g_il: f64, g_el: f64, g_it: f64, g_et: f64) -> Self {
        ConductivitySet { g_il, g_el, g_it, g_et, beta_sv: 1400.0, cm: 1.0 }
    }

    /// Right atrial bulk tissue.
    pub const RA: ConductivitySet = ConductivitySet::new(0.583, 0.742, 0.232, 1.162);

    pub fn validate(&self) -> Result<()> {
        let all = [self.g_il, self.g_el, self.g_it, self.g_et, self.beta_sv, self.cm];
        if all.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Config(format!("conductivities, β and C_m must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn sigma_l(&self) -> f64 {
        self.g_il * self.g_el / (self.g_il + self.g_el)
    }

    pub fn sigma_t(&self) -> f64 {
        self.g_it * self.g_et / (self.g_it + self.g_et)
    }

    /// σ/(β·C_m) in mm²/ms.
    pub fn diffusivity(&self, sigma: f64) -> f64 {
        1e3 * sigma / (self.beta_sv * self.cm)
    }

    /// Scales the intra- and extracellular pair along one axis.
    pub fn scaled(&self, axis: FiberAxis, f: f64) -> Self {
        let mut c = *self;
        match axis {
            FiberAxis::Longitudinal => {
                c.g_il *= f;
                c.g_el *= f;
            }
            FiberAxis::Transverse => {
                c.g_it *= f;
                c.g_et *= f;
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberAxis {
    Longitudinal,
    Transverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    pub dims_mm: [f64; 3],
    pub h_mm: f64,
    pub fiber: [f64; 3],
}

/// Current injected over an axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabStimulus {
    pub min_mm: [f64; 3],
    pub max_mm: [f64; 3],
    pub start_ms: f64,
    pub duration_ms: f64,
    /// Normalized current, 1/ms.
    pub strength: f64,
}

impl SlabStimulus {
    /// Planar stimulus over `x ≤ depth_mm`.
    pub fn planar(depth_mm: f64) -> Self {
        SlabStimulus { min_mm: [-1.0; 3], max_mm: [depth_mm, 1e9, 1e9], start_ms: 0.0, duration_ms: 2.0, strength: 0.5 }
    }
}

/// Diffusion operator, lumped mass and ionic state on one slab.
pub struct SlabModel {
    pub mesh: Mesh,
    pub ionic: IonicModelParams,
    pub dt: f64,
    stiffness: CsrMatrix,
    inv_mass: Vec<f64>,
}

/// Largest stable explicit step for `M⁻¹K`, from a Gershgorin bound.
fn admissible_dt(k: &CsrMatrix, inv_mass: &[f64]) -> f64 {
    let mut lam: f64 = 0.0;
    for i in 0..k.n {
        let row: f64 = (k.indptr[i]..k.indptr[i + 1]).map(|j| k.data[j].abs()).sum();
        lam = lam.max(row * inv_mass[i]);
    }
    if lam > 0.0 {
        2.0 / lam
    } else {
        f64::INFINITY
    }
}

impl SlabModel {
    /// `sigma = [σ_l, σ_t]` in S/m; zero disables diffusion along that axis.
    pub fn new(spec: &SlabSpec, sigma: [f64; 2], beta_sv: f64, cm: f64, ionic: IonicModelParams, dt: f64) -> Result<Self> {
        ionic.validate()?;
        if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) || !(beta_sv > 0.0) || !(cm > 0.0) {
            return Err(Error::Config(format!("bad monodomain parameters σ = {sigma:?}, β = {beta_sv}, C_m = {cm}")));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let f = Vector3::from(spec.fiber);
        if !(f.norm() > 0.0) {
            return Err(Error::Config("slab fibre direction must be non-zero".into()));
        }
        let f = f.normalize();
        let mesh = generate_slab(spec.dims_mm.map(|d| d * 1000.0), spec.h_mm * 1000.0, 0)?;
        // mm²/ms to µm²/ms.
        let d = |s: f64| 1e3 * s / (beta_sv * cm) * 1e6;
        let ff = f * f.transpose();
        let tensor = ff * d(sigma[0]) + (Matrix3::identity() - ff) * d(sigma[1]);
        let region = Region::whole(&mesh);
        let stiffness = assemble_stiffness(&mesh, &region, |_| tensor);
        let inv_mass: Vec<f64> = lumped_mass(&mesh, &region).iter().map(|m| 1.0 / m).collect();
        let limit = admissible_dt(&stiffness, &inv_mass).min(0.5 * ionic.tau_in);
        if dt > limit {
            return Err(Error::Config(format!("time step {dt} ms violates the explicit stability bound; use dt ≤ {limit:.4} ms")));
        }
        Ok(SlabModel { mesh, ionic, dt, stiffness, inv_mass })
    }

    pub fn from_conductivity(spec: &SlabSpec, c: &ConductivitySet, ionic: IonicModelParams, dt: f64) -> Result<Self> {
        c.validate()?;
        Self::new(spec, [c.sigma_l(), c.sigma_t()], c.beta_sv, c.cm, ionic, dt)
    }

    /// Runs from rest for `duration` ms. `observe(t, vm_mv)` is called at every multiple of
    /// `every` steps, including t = 0. Returns the first −20 mV crossing per node.
    pub fn run(&self, stimulus: &SlabStimulus, duration: f64, every: usize, mut observe: impl FnMut(f64, &[f64])) -> Result<Vec<f64>> {
        if !(duration > 0.0) || every == 0 {
            return Err(Error::Config("duration and output interval must be positive".into()));
        }
        let n = self.mesh.n_nodes();
        let stim: Vec<bool> = self
            .mesh
            .nodes
            .iter()
            .map(|p| (0..3).all(|k| p[k] / 1000.0 >= stimulus.min_mm[k] - 1e-9 && p[k] / 1000.0 <= stimulus.max_mm[k] + 1e-9))
            .collect();
        if !stim.contains(&true) {
            return Err(Error::Config("stimulus box contains no slab node".into()));
        }
        let thr = self.ionic.from_mv(-20.0);
        let mut v = vec![0.0; n];
        let mut h = vec![1.0; n];
        let mut lap = vec![0.0; n];
        let mut act = vec![f64::INFINITY; n];
        let mut mv = vec![self.ionic.rest_mv; n];
        observe(0.0, &mv);
        let steps = (duration / self.dt).round() as usize;
        for k in 0..steps {
            let t = k as f64 * self.dt;
            let on = t >= stimulus.start_ms && t < stimulus.start_ms + stimulus.duration_ms;
            self.stiffness.matvec_into(&v, &mut lap);
            for i in 0..n {
                let old = v[i];
                let mut x = old - self.dt * self.inv_mass[i] * lap[i];
                let mut dv = self.ionic.current(x, h[i]);
                if on && stim[i] {
                    dv += stimulus.strength;
                }
                h[i] = self.ionic.gate(x, h[i], self.dt);
                x = (x + self.dt * dv).clamp(0.0, 1.0);
                if act[i].is_infinite() && old < thr && x >= thr {
                    act[i] = t + self.dt * (thr - old) / (x - old);
                }
                v[i] = x;
            }
            if (k + 1) % every == 0 {
                for i in 0..n {
                    mv[i] = self.ionic.to_mv(v[i]);
                }
                observe((k + 1) as f64 * self.dt, &mv);
            }
        }
        Ok(act)
    }
}

/// Activation times and probe traces from one slab run.
#[derive(Debug, Clone)]
pub struct SlabRun {
    pub activation_ms: Vec<f64>,
    pub probes: Vec<u32>,
    /// One trace (mV) per probe, sampled every `dt_out`.
    pub traces: Vec<Vec<f64>>,
    pub dt_out: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_slab(
    spec: &SlabSpec,
    conductivity: &ConductivitySet,
    ionic: IonicModelParams,
    stimulus: &SlabStimulus,
    duration: f64,
    dt: f64,
    probes: &[u32],
    every: usize,
) -> Result<(SlabModel, SlabRun)> {
    let model = SlabModel::from_conductivity(spec, conductivity, ionic, dt)?;
    if let Some(p) = probes.iter().find(|&&p| p as usize >= model.mesh.n_nodes()) {
        return Err(Error::Config(format!("probe node {p} out of range")));
    }
    let mut traces = vec![Vec::new(); probes.len()];
    let act = model.run(stimulus, duration, every, |_, mv| {
        for (t, &p) in traces.iter_mut().zip(probes) {
            t.push(mv[p as usize]);
        }
    })?;
    let dt_out = dt * every as f64;
    Ok((model, SlabRun { activation_ms: act, probes: probes.to_vec(), traces, dt_out }))
}

/// First upward crossing of `threshold` by linear interpolation.
pub fn crossing_time(trace: &[f64], dt: f64, threshold: f64) -> Option<f64> {
    trace.windows(2).position(|w| w[0] < threshold && w[1] >= threshold).map(|i| {
        let (a, b) = (trace[i], trace[i + 1]);
        (i as f64 + (threshold - a) / (b - a)) * dt
    })
}

/// CV in m/s from two traces `separation_mm` apart, using the −20 mV crossing.
pub fn measure_cv_traces(near: &[f64], far: &[f64], dt: f64, separation_mm: f64, window: (f64, f64)) -> Result<f64> {
    let t = |tr: &[f64], which: &str| -> Result<f64> {
        crossing_time(tr, dt, -20.0)
            .filter(|t| *t >= window.0 && *t <= window.1)
            .ok_or_else(|| Error::Measurement(format!("{which} trace does not cross −20 mV within {window:?} ms")))
    };
    let (t1, t2) = (t(near, "near")?, t(far, "far")?);
    if !(t2 > t1) {
        return Err(Error::Measurement(format!("far crossing {t2} ms does not follow near crossing {t1} ms")));
    }
    Ok(separation_mm / (t2 - t1))
}

/// CV in m/s between the node planes `x = planes.0` and `x = planes.1` (mm) from per-node
/// activation times.
pub fn measure_cv(mesh: &Mesh, activation_ms: &[f64], axis: usize, planes: (f64, f64), window: (f64, f64)) -> Result<f64> {
    let h = mesh.mean_edge_length() / 1000.0;
    let mean_at = |x: f64| -> Result<f64> {
        let ts: Vec<f64> = mesh
            .nodes
            .iter()
            .zip(activation_ms)
            .filter(|(p, _)| (p[axis] / 1000.0 - x).abs() < 0.25 * h)
            .map(|(_, &t)| t)
            .collect();
        if ts.is_empty() {
            return Err(Error::Measurement(format!("no nodes on probe plane {x} mm")));
        }
        if ts.iter().any(|t| !(*t >= window.0 && *t <= window.1)) {
            return Err(Error::Measurement(format!("wavefront does not cross probe plane {x} mm within {window:?} ms")));
        }
        Ok(ts.iter().sum::<f64>() / ts.len() as f64)
    };
    let (t1, t2) = (mean_at(planes.0)?, mean_at(planes.1)?);
    if !(t2 > t1) {
        return Err(Error::Measurement(format!("crossing at {} mm ({t2} ms) does not follow {} mm ({t1} ms)", planes.1, planes.0)));
    }
    Ok((planes.1 - planes.0) / (t2 - t1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneOptions {
    pub rel_tol: f64,
    pub max_expansions: usize,
    pub max_iterations: usize,
    pub length_mm: f64,
    /// Time step; `None` picks 80% of the stability bound, at most 0.02 ms.
    pub dt: Option<f64>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { rel_tol: 0.01, max_expansions: 8, max_iterations: 40, length_mm: 20.0, dt: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub axis: FiberAxis,
    pub target_v: f64,
    pub conductivity: ConductivitySet,
    /// Monodomain conductivity along the axis, S/m.
    pub sigma: f64,
    pub cv: f64,
    pub iterations: usize,
}

/// Thin cable slab along x with the fibre along or across it.
fn cable_spec(axis: FiberAxis, h_mm: f64, length_mm: f64) -> SlabSpec {
    SlabSpec {
        dims_mm: [length_mm, 2.0 * h_mm, 2.0 * h_mm],
        h_mm,
        fiber: match axis {
            FiberAxis::Longitudinal => [1.0, 0.0, 0.0],
            FiberAxis::Transverse => [0.0, 1.0, 0.0],
        },
    }
}

/// CV along one axis for a conductivity set on a thin slab at resolution `h_mm`.
pub fn cable_cv(c: &ConductivitySet, axis: FiberAxis, h_mm: f64, ionic: IonicModelParams, opts: &TuneOptions) -> Result<f64> {
    let spec = cable_spec(axis, h_mm, opts.length_mm);
    let sigma = [c.sigma_l(), c.sigma_t()];
    // Stability depends on the larger diffusivity; probe it before choosing dt.
    let dt = match opts.dt {
        Some(dt) => dt,
        None => {
            let probe = SlabModel::new(&spec, [sigma[0], sigma[1]], c.beta_sv, c.cm, ionic, 1e-9)?;
            let lim = admissible_dt(&probe.stiffness, &probe.inv_mass).min(0.5 * ionic.tau_in);
            (0.8 * lim).min(0.02)
        }
    };
    let model = SlabModel::new(&spec, sigma, c.beta_sv, c.cm, ionic, dt)?;
    let l = opts.length_mm;
    let act = model.run(&SlabStimulus::planar(0.1 * l), 200.0_f64.max(40.0 * l), usize::MAX, |_, _| {})?;
    measure_cv(&model.mesh, &act, 0, (0.25 * l, 0.75 * l), (0.0, f64::INFINITY))
}

/// Bisection on a common factor of the intra- and extracellular conductivities along `axis`
/// until the measured CV is within `rel_tol` of `target_v`.
pub fn tune_conductivity(
    target_v: f64,
    h_mm: f64,
    ionic: IonicModelParams,
    axis: FiberAxis,
    base: &ConductivitySet,
    opts: &TuneOptions,
) -> Result<TuneReport> {
    base.validate()?;
    if !(target_v > 0.0) || !target_v.is_finite() {
        return Err(Error::Config(format!("target velocity must be positive, got {target_v}")));
    }
    let mut iterations = 0;
    let mut eval = |f: f64| -> Result<f64> {
        iterations += 1;
        let c = base.scaled(axis, f);
        match cable_cv(&c, axis, h_mm, ionic, opts) {
            Err(Error::Measurement(_)) => Ok(0.0),
            other => other,
        }
    };
    let report = |f: f64, cv: f64, iterations: usize| {
        let c = base.scaled(axis, f);
        let sigma = match axis {
            FiberAxis::Longitudinal => c.sigma_l(),
            FiberAxis::Transverse => c.sigma_t(),
        };
        TuneReport { axis, target_v, conductivity: c, sigma, cv, iterations }
    };
    let close = |cv: f64| (cv - target_v).abs() <= opts.rel_tol * target_v;
    let (mut lo, mut hi) = (1.0, 1.0);
    let mut cv_lo = eval(1.0)?;
    if close(cv_lo) {
        return Ok(report(1.0, cv_lo, iterations));
    }
    let mut cv_hi = cv_lo;
    let mut expansions = 0;
    while cv_lo >= target_v {
        if expansions == opts.max_expansions {
            return Err(Error::Tuning(format!("no conductivity below {lo}× base reaches {target_v} m/s")));
        }
        hi = lo;
        cv_hi = cv_lo;
        lo /= 4.0;
        cv_lo = eval(lo)?;
        expansions += 1;
    }
    while cv_hi < target_v {
        if expansions == opts.max_expansions {
            return Err(Error::Tuning(format!("no conductivity up to {hi}× base reaches {target_v} m/s")));
        }
        lo = hi;
        cv_lo = cv_hi;
        hi *= 4.0;
        cv_hi = eval(hi)?;
        expansions += 1;
    }
    for (f, cv) in [(lo, cv_lo), (hi, cv_hi)] {
        if close(cv) {
            return Ok(report(f, cv, iterations));
        }
    }
    for _ in 0..opts.max_iterations {
        let mid = (lo * hi).sqrt();
        let cv = eval(mid)?;
        if close(cv) {
            return Ok(report(mid, cv, iterations));
        }
        if cv < target_v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Tuning(format!("bisection did not reach {target_v} m/s within {} iterations", opts.max_iterations)))
}
