use std::collections::BTreeSet;
use std::fs;
use std::sync::OnceLock;

use atrialab::error::Error;
use atrialab::mesh::generate::{generate_biatria, generate_slab, GeneratorParams};
use atrialab::mesh::io::{read_mesh, write_mesh, MeshPaths};
use atrialab::mesh::quality::{element_quality, quality_report};
use atrialab::mesh::{detect_orifice_rings, Layer, LabelCatalog, Mesh, Point, RingSet, Structure, Topology};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn default_mesh() -> &'static (Mesh, RingSet) {
    static M: OnceLock<(Mesh, RingSet)> = OnceLock::new();
    M.get_or_init(|| {
        let cat = LabelCatalog::default();
        let m = generate_biatria(&GeneratorParams::default(), &cat).unwrap();
        let rings = detect_orifice_rings(&m, &Topology::new(&m), &cat).unwrap();
        (m, rings)
    })
}

#[test]
fn single_tet_fixture_keeps_its_tag() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("tet");
    fs::write(stem.with_extension("pts"), "4\n0 0 0\n1000 0 0\n0 1000 0\n0 0 1000\n").unwrap();
    fs::write(stem.with_extension("elem"), "1\nTt 0 1 2 3 42\n").unwrap();
    let m = read_mesh(&MeshPaths::from_stem(&stem)).unwrap();
    assert_eq!(m.n_elements(), 1);
    assert_eq!(m.tags, vec![42]);
    assert!((m.volume(0) - 1e9 / 6.0).abs() < 1e-3);
}

#[test]
fn point_count_mismatch_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("bad");
    fs::write(stem.with_extension("pts"), "5\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n").unwrap();
    fs::write(stem.with_extension("elem"), "1\nTt 0 1 2 3 1\n").unwrap();
    let err = read_mesh(&MeshPaths::from_stem(&stem)).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err}");
}

fn jittered_slab(n: usize, seed: u64, with_fibers: bool) -> Mesh {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let base = generate_slab([n as f64 * 700.0, 1400.0, 700.0], 700.0, 1).unwrap();
    let nodes: Vec<Point> = base
        .nodes
        .iter()
        .map(|p| {
            let d = Vector3::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0));
            (p + d) * rng.gen_range(0.999..1.001)
        })
        .collect();
    let tags = (0..base.n_elements()).map(|_| rng.gen()).collect();
    let m = Mesh::new(nodes, base.elements.clone(), tags).unwrap();
    if !with_fibers {
        return m;
    }
    let fib = (0..m.n_elements())
        .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.1..1.0)).normalize())
        .collect();
    m.with_fibers(fib).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn save_load_is_bit_exact(n in 1usize..5, seed in any::<u64>(), fibers in any::<bool>()) {
        let m = jittered_slab(n, seed, fibers);
        let dir = tempfile::tempdir().unwrap();
        let paths = write_mesh(&m, &dir.path().join("m")).unwrap();
        let back = read_mesh(&paths).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn quality_is_scale_invariant(
        c in prop::array::uniform12(-1.0f64..1.0),
        k in prop_oneof![1e-3f64..1.0, 1.0f64..1e3],
    ) {
        let p = [
            Point::new(c[0], c[1], c[2]),
            Point::new(1.0 + c[3], c[4], c[5]),
            Point::new(c[6], 1.0 + c[7], c[8]),
            Point::new(c[9], c[10], 1.0 + c[11]),
        ];
        let s = p.map(|q| q * k);
        prop_assert!((element_quality(&p) - element_quality(&s)).abs() < 1e-12);
    }
}

#[test]
fn regular_tet_is_zero_and_flat_tet_is_one() {
    let a = 2.0;
    let reg = [
        Point::new(0.0, 0.0, 0.0),
        Point::new(a, 0.0, 0.0),
        Point::new(a / 2.0, a * 3f64.sqrt() / 2.0, 0.0),
        Point::new(a / 2.0, a * 3f64.sqrt() / 6.0, a * (2.0f64 / 3.0).sqrt()),
    ];
    assert!(element_quality(&reg).abs() < 1e-14);
    let flat = [reg[0], reg[1], reg[2], Point::new(0.3, 0.2, 0.0)];
    assert_eq!(element_quality(&flat), 1.0);
}

#[test]
fn near_flat_tet_matches_scalar_formula() {
    // Equilateral base of unit edge, apex 1% of the edge above the base centroid.
    let h = 0.01;
    let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.75f64.sqrt(), 0.0], [0.5, 0.75f64.sqrt() / 3.0, h]];
    let sub = |i: usize, j: usize| [p[i][0] - p[j][0], p[i][1] - p[j][1], p[i][2] - p[j][2]];
    let (u, v, w) = (sub(1, 0), sub(2, 0), sub(3, 0));
    let det = u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) + u[2] * (v[0] * w[1] - v[1] * w[0]);
    let vol = det.abs() / 6.0;
    let mut sq = 0.0;
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
        let d = sub(i, j);
        sq += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    }
    let lrms = (sq / 6.0).sqrt();
    let expected = 1.0 - 6.0 * 2f64.sqrt() * vol / lrms.powi(3);
    let pts = p.map(|q| Point::new(q[0], q[1], q[2]));
    assert!((element_quality(&pts) - expected).abs() < 1e-13);
    assert!(expected > 0.9 && expected < 1.0);
}

#[test]
fn default_biatria_are_watertight_and_pass_the_quality_gate() {
    let (m, _) = default_mesh();
    assert_eq!(Topology::new(m).non_manifold_boundary_edges(), 0);
    let q = quality_report(m);
    assert!(q.max < 0.99, "worst element quality {}", q.max);
    assert_eq!(q.histogram.iter().sum::<usize>(), m.n_elements());
}

#[test]
fn rings_are_disjoint_closed_loops_between_endo_and_epi() {
    let (m, rings) = default_mesh();
    let cat = LabelCatalog::default();
    assert_eq!(rings.rings.len(), 9);
    let mut seen = BTreeSet::new();
    for r in &rings.rings {
        for &v in &r.nodes {
            assert!(seen.insert(v), "node {v} on two rings");
        }
        let (mut endo, mut epi) = (BTreeSet::new(), BTreeSet::new());
        for (e, t) in m.elements.iter().enumerate() {
            let en = cat.entry(m.tags[e]).unwrap();
            let generic = match r.structure {
                Structure::Lspv | Structure::Lipv => Structure::Lpv,
                Structure::Rspv | Structure::Ripv => Structure::Rpv,
                s => s,
            };
            if en.structure == generic {
                let set = if en.layer == Layer::Endo { &mut endo } else { &mut epi };
                set.extend(t.iter().copied());
            }
        }
        assert!(r.nodes.iter().all(|v| endo.contains(v) && epi.contains(v)), "{:?}", r.structure);
        for w in r.nodes.windows(2) {
            let gap = (m.nodes[w[0] as usize] - m.nodes[w[1] as usize]).norm();
            assert!(gap < 3.0 * m.mean_edge_length(), "{:?} ring jumps {gap} um", r.structure);
        }
    }
}

#[test]
fn superior_veins_are_the_ones_nearer_the_svc() {
    let (_, rings) = default_mesh();
    let svc = rings.require(Structure::Svc).unwrap().centroid();
    for (sup, inf) in [(Structure::Lspv, Structure::Lipv), (Structure::Rspv, Structure::Ripv)] {
        let s = rings.require(sup).unwrap().centroid();
        let i = rings.require(inf).unwrap().centroid();
        assert!((s - svc).norm() < (i - svc).norm());
        assert!(s.z > i.z);
    }
}

#[test]
fn flat_appendages_still_give_watertight_shells_and_rings() {
    let cat = LabelCatalog::default();
    let mut p = GeneratorParams::default();
    for a in &mut p.appendages {
        a.amplitude = 0.0;
    }
    let m = generate_biatria(&p, &cat).unwrap();
    let topo = Topology::new(&m);
    assert_eq!(topo.non_manifold_boundary_edges(), 0);
    assert_eq!(detect_orifice_rings(&m, &topo, &cat).unwrap().rings.len(), 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn small_perturbation_keeps_ring_membership(seed in any::<u64>()) {
        let (m, rings) = default_mesh();
        let cat = LabelCatalog::default();
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        // 0.1% of the smallest shell radius.
        let amp = 0.001 * 17_000.0;
        let nodes = m
            .nodes
            .iter()
            .map(|p| p + Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize() * amp * rng.gen::<f64>())
            .collect();
        let q = Mesh::new(nodes, m.elements.clone(), m.tags.clone()).unwrap();
        let r = detect_orifice_rings(&q, &Topology::new(&q), &cat).unwrap();
        for (a, b) in r.rings.iter().zip(&rings.rings) {
            prop_assert_eq!(a.structure, b.structure);
            prop_assert_eq!(&a.nodes, &b.nodes);
        }
    }
}

#[test]
fn missing_orifice_tag_is_a_catalog_error() {
    let cat = LabelCatalog::default();
    let (m, _) = default_mesh();
    let wall = cat.require(atrialab::mesh::Atrium::Ra, Structure::Wall, Layer::Endo).unwrap();
    let tags = m
        .tags
        .iter()
        .map(|&t| if cat.entry(t).unwrap().structure == Structure::Cs { wall } else { t })
        .collect();
    let q = Mesh { tags, ..m.clone() };
    let err = detect_orifice_rings(&q, &Topology::new(&q), &cat).unwrap_err();
    assert!(matches!(err, Error::Catalog(_)), "{err}");
}
