use std::sync::OnceLock;

use atrialab::error::Error;
use atrialab::graph::dijkstra;
use atrialab::mesh::generate::generate_slab;
use atrialab::mesh::{Atrium, LabelCatalog, Layer, Mesh, Structure};
use atrialab::model::{ct_band, BiatrialModel, ModelConfig};
use atrialab::pathways::*;
use atrialab::uac::UacPoint;

fn model() -> &'static BiatrialModel {
    static M: OnceLock<BiatrialModel> = OnceLock::new();
    M.get_or_init(|| BiatrialModel::build(&ModelConfig::default()).unwrap())
}

fn cable<'a>(m: &'a BiatrialModel, name: &str) -> &'a Cable {
    m.ics.cables.iter().find(|c| c.name == name).unwrap()
}

#[test]
fn delay_is_length_over_velocity() {
    let c = Cable {
        name: "t".into(),
        ra_anchor: UacPoint { alpha: 0.0, beta: 0.0, gamma: 1.0, side: 0 },
        la_anchor: UacPoint { alpha: 0.0, beta: 0.0, gamma: 1.0, side: 1 },
        nodes: vec![0, 1],
        la_start: 1,
        length_mm: 30.0,
        velocity: 1.0,
        delay_ms: 30.0,
    };
    assert!((c.with_velocity(1.5).unwrap().delay_ms - 20.0).abs() < 1e-12);
    assert!(matches!(c.with_velocity(0.0), Err(Error::Config(_))));
    for c in &model().ics.cables {
        assert!((c.delay_ms - c.length_mm / c.velocity).abs() < 1e-12);
        let half = c.with_velocity(c.velocity / 2.0).unwrap();
        assert!((half.delay_ms - 2.0 * c.delay_ms).abs() < 1e-9);
        assert_eq!(half.nodes, c.nodes);
    }
}

#[test]
fn default_set_has_four_cables_and_the_fo_bridge() {
    let m = model();
    let names: Vec<&str> = m.ics.cables.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["bb", "cs", "superior_posterior", "middle_posterior"]);
    assert!(m.ics.fo_bridge_elements > 0);
    let cfg = IcConfig { include_posterior: false, ..IcConfig::default() };
    let two = default_ic_set(&m.anchor_context(), &m.catalog, &cfg).unwrap();
    assert_eq!(two.cables.len(), 2);
    assert_eq!(two.cables[0], m.ics.cables[0]);
}

#[test]
fn cables_run_sub_epicardially_from_ra_to_la() {
    let m = model();
    let g = m.ic.gamma_min;
    for c in &m.ics.cables {
        assert!(c.la_start >= 1 && c.la_start < c.nodes.len());
        for (i, &v) in c.nodes.iter().enumerate() {
            assert_eq!(m.uac.side[v as usize], u8::from(i >= c.la_start), "{} node {i}", c.name);
            assert!(m.uac.gamma[v as usize] >= g);
        }
        for (i, w) in c.nodes.windows(2).enumerate() {
            if i + 1 != c.la_start {
                assert!(m.topo.node_neighbors.row(w[0] as usize).contains(&w[1]), "{} hop {i}", c.name);
            }
        }
        let l: f64 = c.nodes.windows(2).map(|w| (m.mesh.nodes[w[0] as usize] - m.mesh.nodes[w[1] as usize]).norm()).sum();
        assert!((l / 1000.0 - c.length_mm).abs() < 1e-9);
        assert!(c.length_mm > 0.0);
    }
}

#[test]
fn cs_cable_starts_a_few_mm_superior_to_the_ostium() {
    let m = model();
    let c = cable(m, "cs");
    let p = m.mesh.nodes[c.ra_node() as usize];
    let ring = m.rings.require(Structure::Cs).unwrap();
    let d = ring.nodes.iter().map(|&v| (m.mesh.nodes[v as usize] - p).norm()).fold(f64::INFINITY, f64::min) / 1000.0;
    assert!((3.0..=8.0).contains(&d), "{d} mm");
    let up = m.rings.require(Structure::Svc).unwrap().centroid() - m.rings.require(Structure::Ivc).unwrap().centroid();
    assert!(up.dot(&(p - ring.centroid())) > 0.0);
}

#[test]
fn superior_posterior_cable_sits_near_the_end_of_the_ct() {
    let m = model();
    let ct = ct_band(&m.labels.bands).unwrap();
    let f = band_fraction(&m.mesh, ct, &m.mesh.nodes[cable(m, "superior_posterior").ra_node() as usize]);
    assert!((0.85..=0.95).contains(&f), "{f}");
}

#[test]
fn bachmann_fan_shares_its_ra_origin() {
    let m = model();
    let ra = RaAnchor::Uac { alpha: 0.85, beta: 0.75, gamma: 1.0 };
    let cables = [(0.7, 0.85), (0.6, 0.8), (0.75, 0.7)]
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| CableSpec {
            name: format!("bb{i}"),
            ra: ra.clone(),
            la: UacPoint { alpha: a, beta: b, gamma: 1.0, side: 1 },
            velocity: None,
            posterior: false,
        })
        .collect();
    let cfg = IcConfig { cables, ..IcConfig::default() };
    let set = default_ic_set(&m.anchor_context(), &m.catalog, &cfg).unwrap();
    assert_eq!(set.cables.len(), 3);
    assert!(set.cables.iter().all(|c| c.ra_node() == set.cables[0].ra_node()));
    let las: std::collections::BTreeSet<u32> = set.cables.iter().map(|c| c.la_node()).collect();
    assert_eq!(las.len(), 3);
}

#[test]
fn moving_the_la_anchor_changes_length_by_at_most_the_surface_distance() {
    let m = model();
    let bb = cable(m, "bb");
    let y = bb.la_node();
    let g = m.ic.gamma_min;
    let allow = |v: u32| m.uac.side[v as usize] == 1 && m.uac.gamma[v as usize] >= g;
    let from_y = dijkstra(&m.mesh.nodes, &m.topo.node_neighbors, &[(y, 0.0)], allow, None);
    let py = m.mesh.nodes[y as usize];
    let near: Vec<u32> = (0..m.mesh.n_nodes() as u32)
        .filter(|&v| allow(v) && m.uac.gamma[v as usize] >= 1.0 - 1e-9 && v != y && (m.mesh.nodes[v as usize] - py).norm() <= 5000.0)
        .step_by(7)
        .take(6)
        .collect();
    assert!(!near.is_empty());
    for v in near {
        let c = build_cable_between("bb", &m.mesh, &m.topo, &m.uac, bb.ra_node(), v, bb.velocity, g).unwrap();
        let d = from_y.dist[v as usize] / 1000.0;
        assert!((c.length_mm - bb.length_mm).abs() <= d + 1e-9, "moved {d} mm, length changed {}", c.length_mm - bb.length_mm);
    }
}

#[test]
fn anchors_below_gamma_min_are_rejected() {
    let m = model();
    let bb = cable(m, "bb");
    let endo = (0..m.mesh.n_nodes() as u32).find(|&v| m.uac.side[v as usize] == 0 && m.uac.gamma[v as usize] < 0.5).unwrap();
    let err = build_cable_between("x", &m.mesh, &m.topo, &m.uac, endo, bb.la_node(), 1.0, 0.8).unwrap_err();
    assert!(matches!(err, Error::Path(_)), "{err}");
    let err = build_cable_between("x", &m.mesh, &m.topo, &m.uac, bb.la_node(), bb.ra_node(), 1.0, 0.8).unwrap_err();
    assert!(matches!(err, Error::Anchor(_)), "{err}");
}

/// 2×2×2 cubes; x < 700 µm is RA wall, the rest LA wall.
fn two_blocks(cat: &LabelCatalog) -> Mesh {
    let mut m = generate_slab([1400.0, 1400.0, 1400.0], 700.0, 0).unwrap();
    let ra = cat.require(Atrium::Ra, Structure::Wall, Layer::Endo).unwrap();
    let la = cat.require(Atrium::La, Structure::Wall, Layer::Endo).unwrap();
    m.tags = (0..m.n_elements()).map(|e| if m.centroid(e).x < 700.0 { ra } else { la }).collect();
    m
}

#[test]
fn splitting_two_blocks_duplicates_the_shared_face() {
    let cat = LabelCatalog::default();
    let m = two_blocks(&cat);
    assert_eq!(node_components(&m), 1);
    let spec = SplitSpec::shared(&m, &cat).unwrap();
    assert_eq!(spec.interface.len(), 9);
    let s = split_atria(&m, &cat, &spec).unwrap();
    assert_eq!(s.mesh.n_nodes(), m.n_nodes() + 9);
    assert_eq!(s.duplicated, spec.interface);
    assert_eq!(node_components(&s.mesh), 2);
    for (i, &v) in s.duplicated.iter().enumerate() {
        assert_eq!(s.mesh.nodes[m.n_nodes() + i], m.nodes[v as usize]);
    }
    let vol = |x: &Mesh| (0..x.n_elements()).map(|e| x.volume(e)).sum::<f64>();
    assert!((vol(&s.mesh) - vol(&m)).abs() < 1e-6);
}

#[test]
fn preserving_everything_makes_the_split_a_no_op() {
    let cat = LabelCatalog::default();
    let m = two_blocks(&cat);
    let spec = SplitSpec { preserved: vec![Structure::Wall], ..SplitSpec::shared(&m, &cat).unwrap() };
    let s = split_atria(&m, &cat, &spec).unwrap();
    assert!(s.duplicated.is_empty());
    assert_eq!(s.mesh, m);
}

#[test]
fn interface_nodes_must_touch_both_atria() {
    let cat = LabelCatalog::default();
    let m = two_blocks(&cat);
    let spec = SplitSpec { interface: vec![0], preserved: vec![] };
    assert!(matches!(split_atria(&m, &cat, &spec), Err(Error::Topology(_))));
}

#[test]
fn generated_biatria_only_touch_through_the_fo_rim() {
    let m = model();
    let spec = SplitSpec::shared(&m.mesh, &m.catalog).unwrap();
    assert!(!spec.interface.is_empty());
    let s = split_atria(&m.mesh, &m.catalog, &spec).unwrap();
    assert!(s.duplicated.is_empty());
    assert_eq!(fo_bridge(&m.mesh, &m.catalog).unwrap(), m.ics.fo_bridge_elements);
}
