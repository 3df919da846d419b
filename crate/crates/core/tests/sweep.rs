use std::path::Path;
use std::sync::OnceLock;

use atrialab::ecg::EcgTraces;
use atrialab::error::Error;
use atrialab::forward::*;
use atrialab::mesh::Structure;
use atrialab::model::{BiatrialModel, ModelConfig};
use atrialab::pathways::build_cable_between;
use atrialab::sweep::*;
use atrialab::propagation::RegionRule;
use atrialab::uac::UacPoint;
use proptest::prelude::*;

fn model() -> &'static BiatrialModel {
    static M: OnceLock<BiatrialModel> = OnceLock::new();
    M.get_or_init(|| BiatrialModel::build(&ModelConfig::default()).unwrap())
}

fn grid(v_l: &[f64], v_t: &[f64]) -> ParameterSpace {
    ParameterSpace { v_l: Axis::Values(v_l.to_vec()), v_t: Axis::Values(v_t.to_vec()), ..ParameterSpace::default() }
}

#[test]
fn default_axes() {
    let s = ParameterSpace::default();
    let vt = s.v_t.values().unwrap();
    assert_eq!(vt.len(), 10);
    assert_eq!((vt[0], vt[9]), (0.45, 0.7875));
    assert!(vt.windows(2).all(|w| (w[1] - w[0] - 0.0375).abs() < 1e-12));
    let vl = s.v_l.values().unwrap();
    assert_eq!(vl.len(), 11);
    assert_eq!((vl[0], vl[10]), (0.6, 1.1));
    let all = enumerate_samples(&s).unwrap();
    assert!(all.iter().all(|x| x.params.v_t < x.params.v_l));
    let want: usize = vl.iter().map(|l| vt.iter().filter(|t| *t < l).count()).sum();
    assert_eq!(all.len(), want);
}

#[test]
fn enumeration_is_lexicographic_and_filtered() {
    assert!(matches!(enumerate_samples(&grid(&[0.6], &[0.7])), Err(Error::Config(_))));
    let s = enumerate_samples(&grid(&[0.9, 1.0], &[0.5, 0.6])).unwrap();
    let got: Vec<(usize, f64, f64)> = s.iter().map(|x| (x.id, x.params.v_l, x.params.v_t)).collect();
    assert_eq!(got, [(0, 0.9, 0.5), (1, 0.9, 0.6), (2, 1.0, 0.5), (3, 1.0, 0.6)]);
    let keys: std::collections::BTreeSet<String> = s.iter().map(|x| x.params.key()).collect();
    assert_eq!(keys.len(), 4);
    assert_eq!(s[0].params.key(), enumerate_samples(&grid(&[0.9, 1.0], &[0.5, 0.6])).unwrap()[0].params.key());
    let bad = ParameterSpace { san: vec![], ..ParameterSpace::default() };
    assert!(matches!(enumerate_samples(&bad), Err(Error::Config(_))));
    let bad = ParameterSpace { v_l: Axis::Range { start: 1.0, stop: 0.5, step: 0.1 }, ..ParameterSpace::default() };
    assert!(matches!(enumerate_samples(&bad), Err(Error::Config(_))));
}

#[test]
fn samples_configure_the_forward_run() {
    let s = &enumerate_samples(&ParameterSpace { cable_velocity: vec![Some(2.0)], ..grid(&[1.0], &[0.6]) }).unwrap()[0];
    let c = s.params.apply(&ForwardConfig::default());
    assert_eq!((c.velocity.ra.v_l, c.velocity.ra.v_t), (1.0, 0.6));
    assert_eq!(c.cable_velocity, Some(2.0));
    assert!(matches!(c.stimulus, StimulusSite::Uac { alpha, beta, .. } if (alpha, beta) == (0.8, 0.5)));
}

fn ecg(leads: Vec<Vec<f64>>) -> EcgTraces {
    EcgTraces { dt_ms: 1.0, leads, provenance: Vec::new() }
}

proptest! {
    #[test]
    fn envelope_bounds_every_member(data in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 12 * 16), 1..6)) {
        let members: Vec<EcgTraces> = data.iter().map(|d| ecg(d.chunks(16).map(|c| c.to_vec()).collect())).collect();
        let env = envelope(&members).unwrap();
        for m in &members {
            for l in 0..12 {
                for k in 0..16 {
                    prop_assert!(env.min[l][k] <= m.leads[l][k] && m.leads[l][k] <= env.max[l][k]);
                }
            }
        }
        if members.len() == 1 {
            prop_assert_eq!(&env.min, &members[0].leads);
            prop_assert_eq!(&env.max, &members[0].leads);
            prop_assert!(env.width().iter().all(|w| *w == 0.0));
        }
    }
}

#[test]
fn envelope_rejects_mixed_grids() {
    let a = ecg(vec![vec![0.0; 5]; 12]);
    let b = ecg(vec![vec![0.0; 6]; 12]);
    assert!(matches!(envelope(&[a, b]), Err(Error::Input(_))));
    assert!(matches!(envelope(&[]), Err(Error::Input(_))));
}

fn entry(id: usize, rmse: Option<f64>) -> SampleEntry {
    let params = enumerate_samples(&grid(&[1.0], &[0.6])).unwrap()[0].params.clone();
    SampleEntry {
        id,
        key: format!("{id}"),
        params,
        ok: true,
        error: None,
        ra_total_ms: None,
        la_total_ms: None,
        average_rmse_percent: rmse,
        average_mad: None,
        average_pwd_ms: None,
    }
}

#[test]
fn selection_takes_the_minimum_and_breaks_ties_by_order() {
    let m = |e: Vec<SampleEntry>| SweepManifest { space: ParameterSpace::default(), samples: e, best: None, envelope_width: vec![] };
    assert_eq!(select_best(&m(vec![entry(0, Some(1.72))])).unwrap().id, 0);
    assert_eq!(select_best(&m(vec![entry(0, Some(3.0)), entry(1, Some(2.0)), entry(2, Some(2.0))])).unwrap().id, 1);
    assert_eq!(select_best(&m(vec![entry(0, None), entry(1, Some(9.0))])).unwrap().id, 1);
    assert!(matches!(select_best(&m(vec![entry(0, None)])), Err(Error::Selection(_))));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walk(dir).into_iter().map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap())).collect();
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(walk(&p));
        } else {
            v.push(p);
        }
    }
    v
}

#[test]
fn sweep_on_the_biatria() {
    let m = model();
    let base = ForwardConfig::default();
    let space = ParameterSpace { velocity_scale: Axis::Values(vec![1.0, 2.0]), ..grid(&[0.9, 1.0], &[0.6, 0.7]) };
    let samples = enumerate_samples(&space).unwrap();
    assert_eq!(samples.len(), 8);

    // Plant the output of sample 3 as the target.
    let setup = ForwardSetup::new(m, &base).unwrap();
    let planted = run_forward(m, &setup, &samples[3].params.apply(&base)).unwrap().ecg;
    let opts = SweepOptions { target: Some(planted), ..SweepOptions::default() };

    let full = tempfile::tempdir().unwrap();
    let r = run_sweep(m, &base, &space, full.path(), &opts).unwrap();
    assert_eq!(r.computed, 8);
    assert!(r.manifest.samples.iter().all(|e| e.ok), "{:?}", r.manifest.samples);
    assert_eq!(r.manifest.best, Some(3));
    let best = select_best(&r.manifest).unwrap();
    assert_eq!((best.id, best.average_rmse_percent), (3, Some(0.0)));

    let env = r.envelope.as_ref().unwrap();
    for t in r.traces.iter().flatten() {
        for (l, lead) in t.leads.iter().enumerate() {
            for (k, x) in lead.iter().enumerate() {
                assert!(env.min[l][k] <= *x && *x <= env.max[l][k]);
            }
        }
    }

    let e = &r.manifest.samples;
    let total = |i: usize| e[i].ra_total_ms.unwrap();
    // Scale 2 halves every arrival, cables included.
    for i in (0..8).step_by(2) {
        assert_eq!(e[i + 1].params.velocity_scale, 2.0);
        assert!((total(i + 1) - total(i) / 2.0).abs() < 1e-9 * total(i), "{} vs {}", total(i + 1), total(i));
        assert!((e[i + 1].la_total_ms.unwrap() - e[i].la_total_ms.unwrap() / 2.0).abs() < 1e-9 * total(i));
    }
    // (0.9, 0.6) → (1.0, 0.7) speeds the RA up.
    assert_eq!((e[0].params.v_l, e[0].params.v_t, e[6].params.v_l, e[6].params.v_t), (0.9, 0.6, 1.0, 0.7));
    assert!(total(6) < total(0));

    // Interrupted after two samples, then resumed.
    let part = tempfile::tempdir().unwrap();
    let first = run_sweep(m, &base, &space, part.path(), &SweepOptions { limit: Some(2), ..opts.clone() }).unwrap();
    assert_eq!(first.computed, 2);
    assert_eq!(first.manifest.samples.iter().filter(|e| e.ok).count(), 2);
    let rest = run_sweep(m, &base, &space, part.path(), &opts).unwrap();
    assert_eq!(rest.computed, 6);
    assert_eq!(files(part.path()), files(full.path()));
    assert_eq!(read_manifest(part.path()).unwrap(), r.manifest);
    assert_eq!(run_sweep(m, &base, &space, part.path(), &opts).unwrap().computed, 0);
}

#[test]
fn target_on_another_grid_is_rejected_before_running() {
    let m = model();
    let dir = tempfile::tempdir().unwrap();
    let opts = SweepOptions { target: Some(ecg(vec![vec![0.0; 7]; 12])), ..SweepOptions::default() };
    assert!(matches!(run_sweep(m, &ForwardConfig::default(), &grid(&[1.0], &[0.6]), dir.path(), &opts), Err(Error::Input(_))));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn bb_insertion_moves_the_earliest_la_activation() {
    let m = model();
    let bb = m.ics.cables.iter().find(|c| c.name == "bb").unwrap();
    let center = [m.uac.alpha[bb.la_node() as usize], m.uac.beta[bb.la_node() as usize]];
    let sites = bb_disc(m, center, 5.0, 8).unwrap();
    assert_eq!(sites.len(), 8);
    // With the FO bridge blocked the cable is the only way into the LA.
    let mut cfg = ForwardConfig::default();
    cfg.velocity.rules.push(RegionRule { atrium: None, structure: Some(Structure::FoRim), layer: None, conduction: None });
    for [alpha, beta] in sites {
        let la = m.locator.locate(&UacPoint { alpha, beta, gamma: 1.0, side: 1 }).unwrap();
        assert!((m.mesh.nodes[la as usize] - m.mesh.nodes[bb.la_node() as usize]).norm() <= 5000.0 + 1e-6);
        let c = build_cable_between("bb", &m.mesh, &m.topo, &m.uac, bb.ra_node(), la, bb.velocity, m.ic.gamma_min).unwrap();
        let act = simulate_activation(m, &cfg, std::slice::from_ref(&c)).unwrap();
        let first = (0..m.mesh.n_nodes() as u32).filter(|&v| m.uac.side[v as usize] == 1).min_by(|&a, &b| act.tau[a as usize].total_cmp(&act.tau[b as usize])).unwrap();
        assert_eq!(first, la, "insertion at ({alpha:.3}, {beta:.3})");
    }
}
