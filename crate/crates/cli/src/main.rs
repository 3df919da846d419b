use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand, ValueEnum};

use atrialab::analysis::{activation_diff, ensemble_mean, mad, pwd_sloping, rmse_percent, SignalPair};
use atrialab::ecg::{compute_extracellular, derive_12lead, filter_and_scale, lead_field_infinite, EcgTraces, ElectrodeSet, FilterSpec, LeadFieldSet, LeadWeights};
use atrialab::fields::{assign_fibers, compute_fields, label_structures, BiatrialLayout, FieldSet, StructureLabels};
use atrialab::mesh::io::{read_mesh, write_mesh, MeshPaths};
use atrialab::mesh::quality::quality_report;
use atrialab::mesh::{detect_orifice_rings, Point, Topology};
use atrialab::model::BiatrialModel;
use atrialab::monodomain::{measure_cv, tune_conductivity, ConductivitySet, FiberAxis, IonicModelParams, SlabSpec, SlabStimulus, TuneOptions};
use atrialab::pathways::build_cable;
use atrialab::pipeline::{execute_stage, read_json, run_pipeline, write_json, Layout, PipelineConfig, StageFailure};
use atrialab::propagation::{recover_vm, APTemplate, ActivationMap, VelocityField};
use atrialab::sweep::{read_manifest, run_sweep, select_best, ParameterSpace, SweepOptions};
use atrialab::uac::{compute_uac, relax_orifices, UacCoordinates, UacLocator, UacPoint, DEFAULT_WEIGHTS};
use atrialab::Error;

#[derive(Parser)]
#[command(name = "atrialab", version, about = "Volumetric biatrial models, eikonal activation and lead-field P-waves")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Working directory holding the stage layout.
    #[arg(long, global = true, default_value = "out")]
    dir: PathBuf,
    /// Pipeline configuration supplying model and forward parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mesh generation, IO and quality
    #[command(subcommand)]
    Mesh(MeshCmd),
    /// Laplace solves, region labels and fibres
    #[command(subcommand)]
    Fields(FieldsCmd),
    /// Universal atrial coordinates
    #[command(subcommand)]
    Uac(UacCmd),
    /// Interatrial connections
    #[command(subcommand)]
    Cables(CablesCmd),
    /// Eikonal activation
    #[command(subcommand)]
    Sim(SimCmd),
    /// Monodomain slab runs and conductivity tuning
    #[command(subcommand)]
    Rd(RdCmd),
    /// Lead-field P-waves and filtering
    #[command(subcommand)]
    Ecg(EcgCmd),
    /// RMSE, MAD, PWD and activation differences
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Parameter sweeps and selection
    #[command(subcommand)]
    Sweep(SweepCmd),
    /// Staged, cached end-to-end run
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Subcommand)]
enum MeshCmd {
    /// Generate the idealized biatrial mesh into <dir>/mesh.
    Gen {
        /// Generator parameters JSON.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Element quality summary.
    Quality {
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Detect orifice rings.
    Rings {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FieldsCmd {
    /// Laplace fields into <dir>/fields.
    Solve,
    /// Structure labels from the solved fields.
    Label,
    /// Fibre directions on the labelled mesh.
    Fibers,
}

#[derive(Subcommand)]
enum UacCmd {
    /// Coordinates before orifice relaxation.
    Compute,
    /// Coordinates with relaxed CS and IPV rings.
    Relax,
    /// Node nearest to a coordinate tuple.
    Locate {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        side: u8,
    },
}

#[derive(Subcommand)]
enum CablesCmd {
    /// Build one cable between two coordinate anchors.
    Build {
        #[arg(long)]
        name: String,
        /// RA anchor `alpha,beta,gamma`.
        #[arg(long, value_parser = triple)]
        ra: [f64; 3],
        /// LA anchor `alpha,beta,gamma`.
        #[arg(long, value_parser = triple)]
        la: [f64; 3],
        /// m/s.
        #[arg(long, default_value_t = 1.4)]
        velocity: f64,
        #[arg(long, default_value_t = 0.8)]
        gamma_min: f64,
        /// Add the cable to <dir>/model/cables.json.
        #[arg(long)]
        append: bool,
    },
    /// The default BB, CS and posterior set.
    DefaultSet,
}

#[derive(Subcommand)]
enum SimCmd {
    /// Cable-coupled activation map.
    Eikonal,
    /// Vm traces from the activation map.
    Re {
        #[arg(long, value_delimiter = ',')]
        nodes: Vec<u32>,
        /// Every n-th node when no list is given.
        #[arg(long, default_value_t = 1000)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Longitudinal,
    Transverse,
}

impl From<AxisArg> for FiberAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Longitudinal => FiberAxis::Longitudinal,
            AxisArg::Transverse => FiberAxis::Transverse,
        }
    }
}

#[derive(Subcommand)]
enum RdCmd {
    /// Monodomain run on a slab with a planar stimulus at x = 0.
    Slab {
        /// mm.
        #[arg(long, value_parser = triple, default_value = "20,5,2.5")]
        dims: [f64; 3],
        #[arg(long, default_value_t = 0.5)]
        h: f64,
        #[arg(long, value_enum, default_value = "longitudinal")]
        fiber: AxisArg,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Output sampling interval in ms.
        #[arg(long, default_value_t = 0.5)]
        dt_out: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scale conductivities until a slab reaches the target velocity.
    Tune {
        #[arg(long)]
        target_v: f64,
        #[arg(long, value_enum, default_value = "longitudinal")]
        axis: AxisArg,
        #[arg(long, default_value_t = 0.25)]
        h: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EcgCmd {
    /// Electrode positions and nodal lead fields.
    Leadfield {
        #[arg(long)]
        electrodes: Option<PathBuf>,
    },
    /// Raw 12-lead ECG from the activation map.
    Compute {
        /// External nodal lead fields instead of the analytic ones.
        #[arg(long)]
        leadfield: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero-phase filtering and scaling.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 150.0)]
        lowpass: f64,
        #[arg(long, default_value_t = 0.5)]
        highpass: f64,
        #[arg(long, default_value_t = 0.2)]
        scale: f64,
        /// Skip the filters and only scale.
        #[arg(long)]
        no_filter: bool,
    },
}

#[derive(Args)]
struct LeadArg {
    /// Restrict to one lead.
    #[arg(long)]
    lead: Option<String>,
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Per-lead RMSE in percent against a reference ECG.
    Rmse {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[command(flatten)]
        lead: LeadArg,
    },
    /// Per-lead mean absolute deviation.
    Mad {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ensemble: Vec<PathBuf>,
        #[command(flatten)]
        lead: LeadArg,
    },
    /// P-wave duration from the sloping threshold.
    Pwd {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        k: f64,
        #[arg(long, default_value_t = 2.0)]
        sustain_ms: f64,
        #[command(flatten)]
        lead: LeadArg,
    },
    /// Absolute activation-time differences.
    Actdiff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Coordinates file for per-atrium summaries.
        #[arg(long)]
        uac: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SweepCmd {
    /// Sweep the parameter space, resuming finished samples.
    Run {
        /// Parameter space JSON; the configuration's space otherwise.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many new samples.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Lowest-RMSE sample of a finished sweep.
    Best {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-sample min and max over sweep traces.
    Envelope {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run every enabled stage of the `--config` document.
    Run,
}

fn triple(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated numbers".to_string())
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_json(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => PipelineConfig::default(),
    };
    cfg.output_dir = cli.dir.clone();
    Ok(cfg)
}

fn lead_filter(l: &LeadArg) -> anyhow::Result<Vec<String>> {
    let all: Vec<String> = atrialab::analysis::REPORT_LEADS.iter().map(|s| s.to_string()).collect();
    match &l.lead {
        Some(n) if all.contains(n) || n == "aVR" => Ok(vec![n.clone()]),
        Some(n) => bail!(Error::Input(format!("unknown lead `{n}`"))),
        None => Ok(all),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    let l = Layout { root: cfg.output_dir.clone() };
    match cli.cmd {
        Cmd::Mesh(c) => match c {
            MeshCmd::Gen { params } => {
                let mut cfg = cfg.clone();
                if let Some(p) = params {
                    cfg.model.generator = read_json(&p)?;
                }
                cfg.model.generator.validate()?;
                for f in execute_stage(&l, &cfg, "mesh")? {
                    println!("{}", f.display());
                }
            }
            MeshCmd::Quality { mesh } => {
                let m = read_mesh(&MeshPaths::from_stem(&mesh.unwrap_or_else(|| l.p("mesh/biatria"))))?;
                print_json(&quality_report(&m))?;
            }
            MeshCmd::Rings { mesh, out } => {
                let m = read_mesh(&MeshPaths::from_stem(&mesh.unwrap_or_else(|| l.p("mesh/biatria"))))?;
                let catalog = l.catalog().unwrap_or_default();
                let rings = detect_orifice_rings(&m, &Topology::new(&m), &catalog)?;
                match out {
                    Some(p) => std::fs::write(&p, rings.to_json()).map_err(|e| Error::io(&p, e))?,
                    None => println!("{}", rings.to_json()),
                }
            }
        },
        Cmd::Fields(c) => {
            let catalog = l.catalog()?;
            let rings = l.rings()?;
            match c {
                FieldsCmd::Solve => {
                    let mesh = l.geometry_mesh()?;
                    let topo = Topology::new(&mesh);
                    let layout = BiatrialLayout::build(&mesh, &topo, &catalog, &rings)?;
                    let fields = compute_fields(&mesh, &layout, &rings, cfg.model.laplace_tol)?;
                    std::fs::create_dir_all(l.p("model")).map_err(|e| Error::io(l.p("model"), e))?;
                    fields.write_dir(&l.p("fields"))?;
                    write_json(&l.p("model/layout.json"), &layout)?;
                    println!("{} fields written to {}", fields.fields.len(), l.p("fields").display());
                }
                FieldsCmd::Label => {
                    let mesh = l.geometry_mesh()?;
                    let topo = Topology::new(&mesh);
                    let layout: BiatrialLayout = read_json(&l.p("model/layout.json"))?;
                    let fields = FieldSet::read_dir(&l.p("fields"), mesh.n_nodes())?;
                    let labels = label_structures(&mesh, &topo, &catalog, &layout, &rings, &fields, &cfg.model.rules)?;
                    write_mesh(&labels.mesh(&mesh)?, &l.p("model/atria"))?;
                    write_json(&l.p("model/labels.json"), &labels)?;
                    println!("SAN centre node {}, {} bands", labels.san_center, labels.bands.len());
                }
                FieldsCmd::Fibers => {
                    let mut mesh = read_mesh(&MeshPaths { fibers: None, ..l.mesh_paths("model/atria") })?;
                    let fields = FieldSet::read_dir(&l.p("fields"), mesh.n_nodes())?;
                    let labels: StructureLabels = read_json(&l.p("model/labels.json"))?;
                    let (fib, report) = assign_fibers(&mesh, &catalog, &fields, &labels.bands)?;
                    mesh = mesh.with_fibers(fib)?;
                    write_mesh(&mesh, &l.p("model/atria"))?;
                    write_json(&l.p("model/fibers.json"), &report)?;
                    print_json(&report)?;
                }
            }
        }
        Cmd::Uac(c) => match c {
            UacCmd::Compute | UacCmd::Relax => {
                let mesh = l.model_mesh()?;
                let topo = Topology::new(&mesh);
                let layout: BiatrialLayout = read_json(&l.p("model/layout.json"))?;
                let raw = compute_uac(&mesh, &topo, &layout, cfg.model.laplace_tol)?;
                if matches!(c, UacCmd::Compute) {
                    raw.coords.write(&l.p("model/uac_raw.txt"))?;
                    println!("{}", l.p("model/uac_raw.txt").display());
                } else {
                    let u = relax_orifices(&mesh, &raw, &l.rings()?, &cfg.model.relaxation, cfg.model.laplace_tol)?;
                    u.write(&l.p("model/uac.txt"))?;
                    println!("{}", l.p("model/uac.txt").display());
                }
            }
            UacCmd::Locate { alpha, beta, gamma, side } => {
                let u = UacCoordinates::read(&l.p("model/uac.txt"))?;
                let node = UacLocator::new(&u, DEFAULT_WEIGHTS)?.locate(&UacPoint { alpha, beta, gamma, side })?;
                let mesh = l.model_mesh()?;
                if mesh.n_nodes() != u.n_nodes() {
                    bail!(Error::Input("coordinates do not match the mesh".into()));
                }
                let p = mesh.nodes[node as usize];
                print_json(&serde_json::json!({ "node": node, "position_um": [p.x, p.y, p.z], "uac": u.get(node) }))?;
            }
        },
        Cmd::Cables(c) => match c {
            CablesCmd::DefaultSet => {
                execute_stage(&l, &cfg, "cables")?;
                println!("{}", std::fs::read_to_string(l.p("model/cables.json")).map_err(|e| Error::io(l.p("model/cables.json"), e))?);
            }
            CablesCmd::Build { name, ra, la, velocity, gamma_min, append } => {
                let mesh = l.model_mesh()?;
                let topo = Topology::new(&mesh);
                let u = UacCoordinates::read(&l.p("model/uac.txt"))?;
                let loc = UacLocator::new(&u, DEFAULT_WEIGHTS)?;
                let pt = |c: [f64; 3], side| UacPoint { alpha: c[0], beta: c[1], gamma: c[2], side };
                let cable = build_cable(&name, &mesh, &topo, &u, &loc, pt(ra, 0), pt(la, 1), velocity, gamma_min)?;
                if append {
                    let p = l.p("model/cables.json");
                    let mut set: atrialab::pathways::IcSet = read_json(&p)?;
                    set.cables.retain(|c| c.name != name);
                    set.cables.push(cable.clone());
                    write_json(&p, &set)?;
                }
                print_json(&cable)?;
            }
        },
        Cmd::Sim(c) => match c {
            SimCmd::Eikonal => {
                execute_stage(&l, &cfg, "simulate")?;
                println!("{}", std::fs::read_to_string(l.p("sim/summary.json")).map_err(|e| Error::io(l.p("sim/summary.json"), e))?);
            }
            SimCmd::Re { nodes, stride, out } => {
                let act = ActivationMap::read(&l.p("sim/activation.dat"))?;
                let template = APTemplate::default();
                let vm = recover_vm(&act, &template, cfg.forward.duration_ms, cfg.forward.dt_ms)?;
                let nodes = if nodes.is_empty() { (0..act.n_nodes() as u32).step_by(stride.max(1)).collect() } else { nodes };
                vm.write_csv(&out, &nodes)?;
                println!("{} traces written to {}", nodes.len(), out.display());
            }
        },
        Cmd::Rd(c) => match c {
            RdCmd::Slab { dims, h, fiber, duration, dt, dt_out, out } => {
                let f = match fiber {
                    AxisArg::Longitudinal => [1.0, 0.0, 0.0],
                    AxisArg::Transverse => [0.0, 1.0, 0.0],
                };
                let spec = SlabSpec { dims_mm: dims, h_mm: h, fiber: f };
                let model = atrialab::monodomain::SlabModel::from_conductivity(&spec, &ConductivitySet::RA, IonicModelParams::default(), dt)?;
                // Probes every millimetre along the slab axis.
                let mut probes: Vec<u32> = Vec::new();
                for k in 0..=(dims[0].floor() as usize) {
                    let target = Point::new(k as f64 * 1000.0, 0.5 * dims[1] * 1000.0, 0.5 * dims[2] * 1000.0);
                    let near = (0..model.mesh.n_nodes() as u32)
                        .min_by(|&a, &b| (model.mesh.nodes[a as usize] - target).norm().total_cmp(&(model.mesh.nodes[b as usize] - target).norm()))
                        .unwrap();
                    probes.push(near);
                }
                let every = ((dt_out / dt).round() as usize).max(1);
                let mut rows: Vec<String> = Vec::new();
                let act = model.run(&SlabStimulus::planar(0.1 * dims[0]), duration, every, |t, mv| {
                    let r: Vec<String> = probes.iter().map(|&p| format!("{:.4}", mv[p as usize])).collect();
                    rows.push(format!("{t},{}", r.join(",")));
                })?;
                let header: Vec<String> = probes.iter().map(|p| format!("n{p}")).collect();
                let text = format!("t_ms,{}\n{}\n", header.join(","), rows.join("\n"));
                std::fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
                let cv = measure_cv(&model.mesh, &act, 0, (0.25 * dims[0], 0.75 * dims[0]), (0.0, f64::INFINITY))?;
                print_json(&serde_json::json!({ "cv_m_per_s": cv, "dt_ms": dt, "traces": out }))?;
            }
            RdCmd::Tune { target_v, axis, h, out } => {
                let r = tune_conductivity(target_v, h, IonicModelParams::default(), axis.into(), &ConductivitySet::RA, &TuneOptions::default())?;
                if let Some(p) = out {
                    write_json(&p, &r)?;
                }
                print_json(&r)?;
            }
        },
        Cmd::Ecg(c) => match c {
            EcgCmd::Leadfield { electrodes } => {
                let m = l.model_mesh()?;
                let set = match electrodes {
                    Some(p) => ElectrodeSet::from_json(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?,
                    None => cfg.forward.electrodes.clone().unwrap_or_else(|| {
                        ElectrodeSet::standard(&(m.nodes.iter().sum::<Point>() / m.n_nodes() as f64))
                    }),
                };
                let lf = lead_field_infinite(&m, &set, cfg.forward.sigma_b, cfg.forward.sigma_i)?;
                std::fs::create_dir_all(l.p("ecg")).map_err(|e| Error::io(l.p("ecg"), e))?;
                std::fs::write(l.p("ecg/electrodes.json"), set.to_json()).map_err(|e| Error::io(l.p("ecg/electrodes.json"), e))?;
                std::fs::write(l.p("ecg/leadfield.txt"), lf.to_nodal_text(&m)).map_err(|e| Error::io(l.p("ecg/leadfield.txt"), e))?;
                println!("{}", l.p("ecg/leadfield.txt").display());
            }
            EcgCmd::Compute { leadfield, out } => {
                let model = l.load_model(&cfg.model)?;
                let act = ActivationMap::read(&l.p("sim/activation.dat"))?;
                let vf = VelocityField::from_config(&model.mesh, &model.catalog, &cfg.forward.velocity)?;
                let mask: Vec<bool> = vf.conduction.iter().map(|c| c.is_some()).collect();
                let leads = match leadfield {
                    Some(p) => {
                        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                        let names: Vec<String> = text
                            .lines()
                            .next()
                            .and_then(|h| h.strip_prefix('#'))
                            .ok_or_else(|| Error::Input("lead-field file lacks the `# names` header".into()))?
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .collect();
                        LeadFieldSet::from_nodal_text(names, cfg.forward.sigma_b, cfg.forward.sigma_i, &text, model.mesh.n_nodes())?
                    }
                    None => {
                        let set = cfg.forward.electrodes.clone().unwrap_or_else(|| ElectrodeSet::standard(&model.centroid()));
                        lead_field_infinite(&model.mesh, &set, cfg.forward.sigma_b, cfg.forward.sigma_i)?
                    }
                };
                let w = LeadWeights::new(&model.mesh, &leads, Some(&mask))?;
                let template = APTemplate::default();
                let vm = recover_vm(&act, &template, cfg.forward.duration_ms, cfg.forward.dt_ms)?;
                let raw = derive_12lead(&compute_extracellular(&vm, &w)?)?;
                let out = out.unwrap_or_else(|| l.p("ecg/raw.csv"));
                if let Some(d) = out.parent() {
                    std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                }
                raw.write_csv(&out)?;
                println!("{}", out.display());
            }
            EcgCmd::Filter { input, out, lowpass, highpass, scale, no_filter } => {
                let raw = EcgTraces::read_csv(&input)?;
                let spec = if no_filter {
                    FilterSpec { lowpass_hz: None, highpass_hz: None, scale }
                } else {
                    FilterSpec { lowpass_hz: Some(lowpass), highpass_hz: Some(highpass), scale }
                };
                filter_and_scale(&raw, &spec)?.write_csv(&out)?;
                println!("{}", out.display());
            }
        },
        Cmd::Metrics(c) => match c {
            MetricsCmd::Rmse { candidate, reference, lead } => {
                let (a, b) = (EcgTraces::read_csv(&candidate)?, EcgTraces::read_csv(&reference)?);
                let mut out = serde_json::Map::new();
                for n in lead_filter(&lead)? {
                    let (x, y) = (a.lead(&n).unwrap(), b.lead(&n).unwrap());
                    out.insert(n.clone(), rmse_percent(&SignalPair::new(&x, &y, a.dt_ms, &n)?)?.into());
                }
                print_json(&out)?;
            }
            MetricsCmd::Mad { candidate, ensemble, lead } => {
                let a = EcgTraces::read_csv(&candidate)?;
                let ens: Vec<EcgTraces> = ensemble.iter().map(|p| EcgTraces::read_csv(p)).collect::<Result<_, _>>()?;
                let mut out = serde_json::Map::new();
                for n in lead_filter(&lead)? {
                    let members: Vec<Vec<f64>> = ens.iter().map(|e| e.lead(&n).unwrap()).collect();
                    let mean = ensemble_mean(&members.iter().map(|v| v.as_slice()).collect::<Vec<_>>())?;
                    out.insert(n.clone(), mad(&a.lead(&n).unwrap(), &mean)?.into());
                }
                print_json(&out)?;
            }
            MetricsCmd::Pwd { input, k, sustain_ms, lead } => {
                let a = EcgTraces::read_csv(&input)?;
                let opts = atrialab::analysis::PwdOptions { k, sustain_ms };
                let mut out = serde_json::Map::new();
                for n in lead_filter(&lead)? {
                    out.insert(n.clone(), serde_json::to_value(pwd_sloping(&a.lead(&n).unwrap(), a.dt_ms, &opts)?)?);
                }
                print_json(&out)?;
            }
            MetricsCmd::Actdiff { a, b, uac } => {
                let (x, y) = (ActivationMap::read(&a)?, ActivationMap::read(&b)?);
                let sides = uac.map(|p| UacCoordinates::read(&p)).transpose()?.map(|u| u.side);
                print_json(&activation_diff(&x.tau, &y.tau, sides.as_deref())?)?;
            }
        },
        Cmd::Sweep(c) => match c {
            SweepCmd::Run { space, target, out, limit } => {
                let space: ParameterSpace = match space {
                    Some(p) => read_json(&p)?,
                    None => cfg.sweep.clone(),
                };
                let target = target.or(cfg.target.clone());
                let target = target.as_deref().map(EcgTraces::read_csv).transpose()?;
                let model: BiatrialModel = l.load_model(&cfg.model)?;
                let out = out.unwrap_or_else(|| l.p("sweep"));
                let r = run_sweep(&model, &cfg.forward, &space, &out, &SweepOptions { target, pwd: cfg.pwd, limit })?;
                let failed = r.manifest.samples.iter().filter(|s| !s.ok).count();
                print_json(&serde_json::json!({
                    "samples": r.manifest.samples.len(),
                    "computed": r.computed,
                    "failed": failed,
                    "best": r.manifest.best,
                    "envelope_width": r.manifest.envelope_width,
                }))?;
            }
            SweepCmd::Best { out } => {
                let m = read_manifest(&out.unwrap_or_else(|| l.p("sweep")))?;
                print_json(select_best(&m)?)?;
            }
            SweepCmd::Envelope { out } => {
                let dir = out.unwrap_or_else(|| l.p("sweep"));
                let m = read_manifest(&dir)?;
                let widths: serde_json::Map<String, serde_json::Value> =
                    atrialab::ecg::LEAD_NAMES.iter().zip(&m.envelope_width).map(|(n, w)| (n.to_string(), (*w).into())).collect();
                print_json(&serde_json::json!({ "envelope": dir.join("envelope.csv"), "max_width": widths }))?;
            }
        },
        Cmd::Pipeline(PipelineCmd::Run) => {
            let config = cli.config.clone().ok_or_else(|| Error::Config("`pipeline run` needs --config".into()))?;
            let text = std::fs::read_to_string(&config).map_err(|e| Error::io(&config, e))?;
            let mut pc = PipelineConfig::from_json(&text)?;
            if pc.output_dir.is_relative() {
                if let Some(base) = config.parent().filter(|p| !p.as_os_str().is_empty()) {
                    pc.output_dir = base.join(&pc.output_dir);
                }
            }
            let r = run_pipeline(&pc)?;
            eprintln!("computed {:?}, cached {:?}", r.computed, r.cached);
            print_json(&r.manifest)?;
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(f) = e.downcast_ref::<StageFailure>() {
        return f.error.exit_code() as u8;
    }
    if let Some(c) = e.downcast_ref::<Error>() {
        return c.exit_code() as u8;
    }
    if e.downcast_ref::<serde_json::Error>().is_some() {
        return 2;
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return 4;
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            if let Some(f) = e.downcast_ref::<StageFailure>() {
                eprintln!("stage `{}` failed; {} artifacts were produced before it", f.stage, f.manifest.artifacts.len());
            }
            ExitCode::from(code)
        }
    }
}
