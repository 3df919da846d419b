//! Staged file-to-file pipeline with a content-hash stage cache and an artifact manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{metrics_report, PwdOptions};
use crate::ecg::EcgTraces;
use crate::error::{Error, Result};
use crate::fields::{BiatrialLayout, FiberReport, StructureLabels};
use crate::forward::{ecg_from_activation, forward_cables, simulate_activation, ForwardConfig, ForwardSetup};
use crate::mesh::io::{read_mesh, write_mesh, MeshPaths};
use crate::mesh::quality::quality_report;
use crate::mesh::{LabelCatalog, Mesh, RingSet, Topology};
use crate::model::{build_uac, Anatomy, BiatrialModel, Geometry, ModelConfig};
use crate::pathways::IcSet;
use crate::propagation::ActivationMap;
use crate::sweep::{run_sweep, ParameterSpace, SweepOptions};
use crate::uac::UacCoordinates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageToggles {
    pub mesh: bool,
    pub fields: bool,
    pub uac: bool,
    pub cables: bool,
    pub simulate: bool,
    pub ecg: bool,
    pub metrics: bool,
    pub sweep: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles { mesh: true, fields: true, uac: true, cables: true, simulate: true, ecg: true, metrics: true, sweep: false }
    }
}

impl StageToggles {
    pub fn none() -> Self {
        StageToggles { mesh: false, fields: false, uac: false, cables: false, simulate: false, ecg: false, metrics: false, sweep: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub stages: StageToggles,
    pub model: ModelConfig,
    pub forward: ForwardConfig,
    /// Reference ECG CSV for metrics and the sweep.
    pub target: Option<PathBuf>,
    pub sweep: ParameterSpace,
    pub pwd: PwdOptions,
    /// Always on; `false` is rejected.
    pub deterministic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("out"),
            stages: StageToggles::default(),
            model: ModelConfig::default(),
            forward: ForwardConfig::default(),
            target: None,
            sweep: ParameterSpace::default(),
            pwd: PwdOptions::default(),
            deterministic: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("pipeline config: {e}")))
    }

    /// Checks that only need the configuration and the file system.
    pub fn validate(&self) -> Result<()> {
        if !self.deterministic {
            return Err(Error::Config("non-deterministic runs are not supported".into()));
        }
        self.model.generator.validate()?;
        self.model.relaxation.validate()?;
        self.forward.validate()?;
        if let Some(t) = &self.target {
            if (self.stages.metrics || self.stages.sweep) && !t.is_file() {
                return Err(Error::Config(format!("target trace {} does not exist", t.display())));
            }
        }
        if self.stages.sweep {
            crate::sweep::enumerate_samples(&self.sweep)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub stage: String,
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineReport {
    pub manifest: PipelineManifest,
    pub computed: Vec<String>,
    pub cached: Vec<String>,
}

/// A stage error together with everything produced before it.
#[derive(Debug)]
pub struct StageFailure {
    pub stage: String,
    pub error: Error,
    pub manifest: PipelineManifest,
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Every file under `dir`, sorted.
fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = e.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    outputs: Vec<Artifact>,
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Artifact locations below the output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn mesh_paths(&self, stem: &str) -> MeshPaths {
        MeshPaths::from_stem(&self.p(stem))
    }

    pub fn catalog(&self) -> Result<LabelCatalog> {
        let p = self.p("mesh/catalog.json");
        LabelCatalog::from_json(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)
    }

    pub fn rings(&self) -> Result<RingSet> {
        let p = self.p("mesh/rings.json");
        RingSet::from_json(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)
    }

    pub fn geometry_mesh(&self) -> Result<Mesh> {
        read_mesh(&self.mesh_paths("mesh/biatria"))
    }

    pub fn model_mesh(&self) -> Result<Mesh> {
        read_mesh(&self.mesh_paths("model/atria"))
    }

    /// Reassembles the model written by the field, UAC and cable stages.
    pub fn load_model(&self, config: &ModelConfig) -> Result<BiatrialModel> {
        let catalog = self.catalog()?;
        let mesh = self.model_mesh()?;
        let topo = Topology::new(&mesh);
        let labels: StructureLabels = read_json(&self.p("model/labels.json"))?;
        let fibers: FiberReport = read_json(&self.p("model/fibers.json"))?;
        let uac = UacCoordinates::read(&self.p("model/uac.txt"))?;
        let ics: IcSet = read_json(&self.p("model/cables.json"))?;
        BiatrialModel::assemble(catalog, mesh, topo, self.rings()?, labels, fibers, uac, &config.ic, Some(ics))
    }
}

struct Stage {
    name: &'static str,
    enabled: bool,
    inputs: Vec<&'static str>,
    config: serde_json::Value,
}

const MODEL_FILES: [&str; 7] =
    ["mesh/catalog.json", "mesh/rings.json", "model/atria.pts", "model/atria.elem", "model/atria.lon", "model/labels.json", "model/fibers.json"];

fn stages(cfg: &PipelineConfig) -> Result<Vec<Stage>> {
    let model_all = || {
        let mut v = MODEL_FILES.to_vec();
        v.extend(["model/uac.txt", "model/cables.json"]);
        v
    };
    let t = &cfg.stages;
    let target_hash = match &cfg.target {
        Some(p) if p.is_file() => serde_json::Value::String(sha256_file(p)?),
        _ => serde_json::Value::Null,
    };
    Ok(vec![
        Stage { name: "mesh", enabled: t.mesh, inputs: vec![], config: j(&cfg.model.generator) },
        Stage {
            name: "fields",
            enabled: t.fields,
            inputs: vec!["mesh/catalog.json", "mesh/rings.json", "mesh/biatria.pts", "mesh/biatria.elem"],
            config: serde_json::json!({ "rules": j(&cfg.model.rules), "tol": cfg.model.laplace_tol }),
        },
        Stage {
            name: "uac",
            enabled: t.uac,
            inputs: vec!["mesh/rings.json", "model/atria.pts", "model/atria.elem", "model/layout.json"],
            config: serde_json::json!({ "relaxation": j(&cfg.model.relaxation), "tol": cfg.model.laplace_tol }),
        },
        Stage {
            name: "cables",
            enabled: t.cables,
            inputs: { let mut v = MODEL_FILES.to_vec(); v.push("model/uac.txt"); v },
            config: j(&cfg.model.ic),
        },
        Stage { name: "simulate", enabled: t.simulate, inputs: model_all(), config: j(&cfg.forward) },
        Stage {
            name: "ecg",
            enabled: t.ecg,
            inputs: { let mut v = model_all(); v.push("sim/activation.dat"); v },
            config: j(&cfg.forward),
        },
        Stage {
            name: "metrics",
            enabled: t.metrics,
            inputs: vec!["ecg/ecg.csv", "ecg/ecg.filter.json"],
            config: serde_json::json!({ "pwd": j(&cfg.pwd), "target": target_hash }),
        },
        Stage {
            name: "sweep",
            enabled: t.sweep,
            inputs: model_all(),
            config: serde_json::json!({ "space": j(&cfg.sweep), "forward": j(&cfg.forward), "pwd": j(&cfg.pwd), "target": target_hash }),
        },
    ])
}

fn j<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configuration serializes")
}

fn stage_key(l: &Layout, s: &Stage) -> Result<String> {
    let mut h = Sha256::new();
    h.update(s.name.as_bytes());
    h.update(serde_json::to_vec(&s.config)?);
    for i in &s.inputs {
        let p = l.p(i);
        if !p.is_file() {
            return Err(Error::Config(format!("stage `{}` needs {}, which no earlier stage produced", s.name, p.display())));
        }
        h.update(i.as_bytes());
        h.update(sha256_file(&p)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn cached(l: &Layout, name: &str, key: &str) -> Option<Vec<Artifact>> {
    let e: CacheEntry = read_json(&l.p(&format!(".cache/{name}.json"))).ok()?;
    if e.key != key {
        return None;
    }
    e.outputs.iter().all(|a| sha256_file(&l.p(&a.path)).is_ok_and(|h| h == a.sha256)).then_some(e.outputs)
}

/// Runs one stage without consulting the cache and returns the files it wrote.
pub fn execute_stage(l: &Layout, cfg: &PipelineConfig, name: &str) -> Result<Vec<PathBuf>> {
    match name {
        "mesh" => {
            mkdir(&l.p("mesh"))?;
            let catalog = LabelCatalog::default();
            let geo = Geometry::generate(&cfg.model.generator, &catalog)?;
            let paths = write_mesh(&geo.mesh, &l.p("mesh/biatria"))?;
            std::fs::write(l.p("mesh/catalog.json"), catalog.to_json()).map_err(|e| Error::io(l.p("mesh/catalog.json"), e))?;
            std::fs::write(l.p("mesh/rings.json"), geo.rings.to_json()).map_err(|e| Error::io(l.p("mesh/rings.json"), e))?;
            write_json(&l.p("mesh/quality.json"), &quality_report(&geo.mesh))?;
            Ok(vec![paths.points, paths.elements, l.p("mesh/catalog.json"), l.p("mesh/rings.json"), l.p("mesh/quality.json")])
        }
        "fields" => {
            mkdir(&l.p("model"))?;
            mkdir(&l.p("fields"))?;
            let catalog = l.catalog()?;
            let mesh = l.geometry_mesh()?;
            let topo = Topology::new(&mesh);
            let geo = Geometry { mesh, topo, rings: l.rings()? };
            let a = Anatomy::build(&geo, &catalog, &cfg.model.rules, cfg.model.laplace_tol)?;
            a.fields.write_dir(&l.p("fields"))?;
            let paths = write_mesh(&a.mesh, &l.p("model/atria"))?;
            write_json(&l.p("model/labels.json"), &a.labels)?;
            write_json(&l.p("model/layout.json"), &a.layout)?;
            write_json(&l.p("model/fibers.json"), &a.fiber_report)?;
            let mut out = files_under(&l.p("fields"))?;
            out.extend([paths.points, paths.elements]);
            out.extend(paths.fibers);
            out.extend([l.p("model/labels.json"), l.p("model/layout.json"), l.p("model/fibers.json")]);
            Ok(out)
        }
        "uac" => {
            let mesh = l.model_mesh()?;
            let topo = Topology::new(&mesh);
            let layout: BiatrialLayout = read_json(&l.p("model/layout.json"))?;
            let u = build_uac(&mesh, &topo, &layout, &l.rings()?, &cfg.model.relaxation, cfg.model.laplace_tol)?;
            u.write(&l.p("model/uac.txt"))?;
            Ok(vec![l.p("model/uac.txt")])
        }
        "cables" => {
            let mesh = l.model_mesh()?;
            let topo = Topology::new(&mesh);
            let labels: StructureLabels = read_json(&l.p("model/labels.json"))?;
            let fibers: FiberReport = read_json(&l.p("model/fibers.json"))?;
            let uac = UacCoordinates::read(&l.p("model/uac.txt"))?;
            let m = BiatrialModel::assemble(l.catalog()?, mesh, topo, l.rings()?, labels, fibers, uac, &cfg.model.ic, None)?;
            write_json(&l.p("model/cables.json"), &m.ics)?;
            Ok(vec![l.p("model/cables.json")])
        }
        "simulate" => {
            mkdir(&l.p("sim"))?;
            let m = l.load_model(&cfg.model)?;
            let cables = forward_cables(&m, &cfg.forward)?;
            let act = simulate_activation(&m, &cfg.forward, &cables)?;
            act.write(&l.p("sim/activation.dat"))?;
            let sides = &m.uac.side;
            let side = |s: u8| (0..sides.len() as u32).filter(move |&v| sides[v as usize] == s);
            let summary = serde_json::json!({
                "ra_total_ms": act.total_time(side(0)),
                "la_total_ms": act.total_time(side(1)),
                "max_ms": act.max_finite(),
                "unreached": act.tau.iter().filter(|t| !t.is_finite()).count(),
            });
            write_json(&l.p("sim/summary.json"), &summary)?;
            Ok(vec![l.p("sim/activation.dat"), l.p("sim/summary.json")])
        }
        "ecg" => {
            mkdir(&l.p("ecg"))?;
            let m = l.load_model(&cfg.model)?;
            let act = ActivationMap::read(&l.p("sim/activation.dat"))?;
            let setup = ForwardSetup::new(&m, &cfg.forward)?;
            let (_, raw, ecg, truncated) = ecg_from_activation(&m, &setup, &cfg.forward, &act)?;
            if truncated {
                log::warn!("activation outlasts the {} ms window", cfg.forward.duration_ms);
            }
            std::fs::write(l.p("ecg/electrodes.json"), setup.electrodes.to_json()).map_err(|e| Error::io(l.p("ecg/electrodes.json"), e))?;
            raw.write_csv(&l.p("ecg/raw.csv"))?;
            ecg.write_csv(&l.p("ecg/ecg.csv"))?;
            Ok(vec![l.p("ecg/electrodes.json"), l.p("ecg/raw.csv"), l.p("ecg/ecg.csv"), l.p("ecg/ecg.filter.json")])
        }
        "metrics" => {
            mkdir(&l.p("metrics"))?;
            let ecg = EcgTraces::read_csv(&l.p("ecg/ecg.csv"))?;
            let target = cfg.target.as_deref().map(EcgTraces::read_csv).transpose()?;
            let r = metrics_report(&ecg, target.as_ref(), None, &cfg.pwd)?;
            write_json(&l.p("metrics/metrics.json"), &r)?;
            Ok(vec![l.p("metrics/metrics.json")])
        }
        "sweep" => {
            let m = l.load_model(&cfg.model)?;
            let target = cfg.target.as_deref().map(EcgTraces::read_csv).transpose()?;
            let opts = SweepOptions { target, pwd: cfg.pwd, limit: None };
            run_sweep(&m, &cfg.forward, &cfg.sweep, &l.p("sweep"), &opts)?;
            files_under(&l.p("sweep"))
        }
        other => Err(Error::Config(format!("unknown stage `{other}`"))),
    }
}

/// Runs the enabled stages in order, skipping those whose inputs and configuration are
/// unchanged, and writes `manifest.json` (also on failure).
pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<PipelineReport, StageFailure> {
    let fail = |stage: &str, error: Error, manifest: &PipelineManifest| StageFailure { stage: stage.into(), error, manifest: manifest.clone() };
    let mut report = PipelineReport::default();
    cfg.validate().map_err(|e| fail("validate", e, &report.manifest))?;
    let l = Layout { root: cfg.output_dir.clone() };
    let all = stages(cfg).map_err(|e| fail("validate", e, &report.manifest))?;
    let enabled: Vec<&Stage> = all.iter().filter(|s| s.enabled).collect();
    if enabled.is_empty() {
        return Ok(report);
    }
    mkdir(&l.p(".cache")).map_err(|e| fail("setup", e, &report.manifest))?;
    let write_manifest = |m: &PipelineManifest| write_json(&l.p("manifest.json"), m);
    for s in enabled {
        let step = || -> Result<(Vec<Artifact>, bool)> {
            let key = stage_key(&l, s)?;
            if let Some(out) = cached(&l, s.name, &key) {
                return Ok((out, false));
            }
            log::info!("running stage `{}`", s.name);
            let files = execute_stage(&l, cfg, s.name)?;
            let mut outputs: BTreeMap<String, Artifact> = BTreeMap::new();
            for f in files {
                let path = rel(&l.root, &f);
                outputs.insert(path.clone(), Artifact { stage: s.name.into(), path, sha256: sha256_file(&f)? });
            }
            let outputs: Vec<Artifact> = outputs.into_values().collect();
            write_json(&l.p(&format!(".cache/{}.json", s.name)), &CacheEntry { key, outputs: outputs.clone() })?;
            Ok((outputs, true))
        };
        match step() {
            Ok((out, fresh)) => {
                report.manifest.artifacts.extend(out);
                if fresh { report.computed.push(s.name.into()) } else { report.cached.push(s.name.into()) }
            }
            Err(e) => {
                let _ = write_manifest(&report.manifest);
                return Err(fail(s.name, e, &report.manifest));
            }
        }
    }
    write_manifest(&report.manifest).map_err(|e| fail("manifest", e, &report.manifest))?;
    Ok(report)
}
