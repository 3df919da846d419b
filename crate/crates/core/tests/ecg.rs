use std::f64::consts::PI;

use atrialab::ecg::*;
use atrialab::error::Error;
use atrialab::mesh::generate::generate_slab;
use atrialab::mesh::{Mesh, Point};
use nalgebra::Vector3;
use proptest::prelude::*;

fn electrodes(list: &[(&str, [f64; 3])]) -> ElectrodeSet {
    ElectrodeSet::new(list.iter().map(|(n, p)| Electrode { name: n.to_string(), position_um: *p }).collect()).unwrap()
}

#[test]
fn point_lead_falls_off_as_one_over_r() {
    let e = Point::new(100_000.0, 0.0, 0.0);
    let z = point_lead(0.2, &e, &Point::zeros());
    assert!((z - 1.0 / (4.0 * PI * 0.2 * 0.1)).abs() < 1e-12);
    assert!((z - 3.979).abs() < 1e-3);
    let z2 = point_lead(0.2, &Point::new(200_000.0, 0.0, 0.0), &Point::zeros());
    assert!((z / z2 - 2.0).abs() < 1e-12);
}

#[test]
fn electrodes_inside_tissue_or_duplicated_are_rejected() {
    let m = generate_slab([2000.0, 2000.0, 2000.0], 500.0, 1).unwrap();
    let inside = electrodes(&[("A", [1000.0, 1000.0, 1000.0])]);
    assert!(matches!(lead_field_infinite(&m, &inside, 0.2, 0.2), Err(Error::Placement(_))));
    let on_face = electrodes(&[("A", [1000.0, 1000.0, 2000.0])]);
    assert!(matches!(lead_field_infinite(&m, &on_face, 0.2, 0.2), Err(Error::Placement(_))));
    let a = Electrode { name: "A".into(), position_um: [0.0, 0.0, 1e5] };
    assert!(matches!(ElectrodeSet::new(vec![a.clone(), a]), Err(Error::Placement(_))));
    let outside = electrodes(&[("A", [1000.0, 1000.0, 2100.0])]);
    assert!(lead_field_infinite(&m, &outside, 0.2, 0.2).is_ok());
}

fn slab_leads() -> (Mesh, LeadWeights) {
    let m = generate_slab([3000.0, 2000.0, 1000.0], 500.0, 1).unwrap();
    let set = ElectrodeSet::standard(&Point::new(1500.0, 1000.0, 500.0));
    let lf = lead_field_infinite(&m, &set, 0.2, 0.3).unwrap();
    let w = LeadWeights::new(&m, &lf, None).unwrap();
    (m, w)
}

#[test]
fn uniform_vm_gives_no_potential() {
    let (m, w) = slab_leads();
    for level in [-85.0, 0.0, 13.2] {
        let phi = w.apply(&vec![level; m.n_nodes()]).unwrap();
        let scale: f64 = w.weights.iter().flatten().map(|x| x.abs()).sum::<f64>() * 85.0;
        assert!(phi.iter().all(|p| p.abs() < 1e-12 * scale), "{phi:?}");
    }
}

#[test]
fn reversing_the_vm_gradient_flips_the_sign() {
    let (m, w) = slab_leads();
    let up: Vec<f64> = m.nodes.iter().map(|p| p.x * 0.01).collect();
    let down: Vec<f64> = up.iter().map(|v| -v).collect();
    let (a, b) = (w.apply(&up).unwrap(), w.apply(&down).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.abs() > 0.0);
        assert_eq!(*x, -*y);
    }
    assert!(matches!(w.apply(&[0.0; 3]), Err(Error::Input(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn potentials_are_linear_in_vm(
        a in prop::collection::vec(-100.0f64..50.0, 60),
        b in prop::collection::vec(-100.0f64..50.0, 60),
        s in -3.0f64..3.0,
    ) {
        let (m, w) = slab_leads();
        let vm = |c: &Vec<f64>| (0..m.n_nodes()).map(|i| c[i % c.len()] * (1.0 + (i / c.len()) as f64)).collect::<Vec<f64>>();
        let (va, vb) = (vm(&a), vm(&b));
        let sum: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x + s * y).collect();
        let (pa, pb, ps) = (w.apply(&va).unwrap(), w.apply(&vb).unwrap(), w.apply(&sum).unwrap());
        for k in 0..ps.len() {
            let want = pa[k] + s * pb[k];
            let mag = pa[k].abs() + (s * pb[k]).abs();
            prop_assert!((ps[k] - want).abs() <= 1e-9 * mag.max(1e-300));
        }
    }
}

/// One tetrahedron of edge `h` µm carrying Vm = g·x; returns (φ, analytic dipole) at `e`.
fn dipole_case(h: f64, e: Point, g: Vector3<f64>) -> (f64, f64) {
    let nodes = vec![Point::zeros(), Point::new(h, 0.0, 0.0), Point::new(0.0, h, 0.0), Point::new(0.0, 0.0, h)];
    let m = Mesh::new(nodes, vec![[0, 1, 2, 3]], vec![1]).unwrap();
    let (sb, si) = (0.2, 0.17);
    let lf = lead_field_infinite(&m, &electrodes(&[("E", [e.x, e.y, e.z])]), sb, si).unwrap();
    let w = LeadWeights::new(&m, &lf, None).unwrap();
    let vm: Vec<f64> = m.nodes.iter().map(|p| g.dot(p)).collect();
    let phi = w.apply(&vm).unwrap()[0];
    // p = −σ_i ∫∇Vm dV, SI: g in mV/µm → mV/m, volume µm³ → m³.
    let vol = h * h * h / 6.0 * 1e-18;
    let p = -si * g * 1e6 * vol;
    let c = h / 4.0;
    let r = e - Point::new(c, c, c);
    let rn = r.norm() * 1e-6;
    (phi, p.dot(&r.normalize()) / (4.0 * PI * sb * rn * rn))
}

#[test]
fn linear_vm_on_one_tet_matches_the_point_dipole() {
    let h = 500.0;
    let g = Vector3::new(0.3, -0.1, 0.2);
    let dirs = [Vector3::new(1.0, 0.2, 0.1), Vector3::new(-0.3, 1.0, 0.4), Vector3::new(0.2, -0.5, -1.0)];
    let mut rs = Vec::new();
    let mut phis = Vec::new();
    for d in dirs {
        for k in [10.0, 20.0, 40.0, 80.0] {
            let e: Point = d.normalize() * k * h;
            let (phi, exact) = dipole_case(h, e, g);
            assert!((phi - exact).abs() < 0.01 * exact.abs(), "r = {k} h: {phi} vs {exact}");
            if d == dirs[0] {
                rs.push((k * h).ln());
                phis.push(phi.abs().ln());
            }
        }
    }
    let n = rs.len() as f64;
    let (mx, my) = (rs.iter().sum::<f64>() / n, phis.iter().sum::<f64>() / n);
    let slope = rs.iter().zip(&phis).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / rs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 2.0).abs() < 0.1, "log-log slope {slope}");
}

#[test]
fn nodal_lead_fields_use_p1_gradients() {
    let m = generate_slab([2000.0, 1000.0, 1000.0], 500.0, 1).unwrap();
    // Z = a·x (V/A, x in µm) and Vm = b·x (mV): φ = −σ_i·a·b·V with gradients in SI.
    let (a, b, si) = (2e-3, 0.05, 0.3);
    let text: String = m.nodes.iter().map(|p| format!("{:e}\n", a * p.x)).collect();
    let lf = LeadFieldSet::from_nodal_text(vec!["E".into()], 0.2, si, &text, m.n_nodes()).unwrap();
    assert_eq!(lf.nodal(&m, 0), m.nodes.iter().map(|p| a * p.x).collect::<Vec<_>>());
    let w = LeadWeights::new(&m, &lf, None).unwrap();
    let vm: Vec<f64> = m.nodes.iter().map(|p| b * p.x).collect();
    let vol = 2000.0 * 1000.0 * 1000.0 * 1e-18;
    let exact = -si * (a * 1e6) * (b * 1e6) * vol;
    let phi = w.apply(&vm).unwrap()[0];
    assert!((phi - exact).abs() < 1e-9 * exact.abs(), "{phi} vs {exact}");
    assert!(matches!(LeadFieldSet::from_nodal_text(vec!["E".into()], 0.2, si, "1\n2\n", m.n_nodes()), Err(Error::Input(_))));
}

#[test]
fn analytic_fields_survive_an_export_import_roundtrip() {
    let (m, _) = slab_leads();
    let set = ElectrodeSet::standard(&Point::new(1500.0, 1000.0, 500.0));
    let lf = lead_field_infinite(&m, &set, 0.2, 0.3).unwrap();
    let text = lf.to_nodal_text(&m);
    let back = LeadFieldSet::from_nodal_text(lf.names.clone(), 0.2, 0.3, &text, m.n_nodes()).unwrap();
    for k in 0..lf.n_electrodes() {
        for (x, y) in lf.nodal(&m, k).iter().zip(back.nodal(&m, k)) {
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
    }
    let vm: Vec<f64> = m.nodes.iter().map(|p| (p.x * 1e-3).sin() * 40.0).collect();
    let a = LeadWeights::new(&m, &lf, None).unwrap().apply(&vm).unwrap();
    let b = LeadWeights::new(&m, &back, None).unwrap().apply(&vm).unwrap();
    for (x, y) in a.iter().zip(&b) {
        // Far electrodes: quadrature-averaged and P1 gradients of Z agree closely.
        assert!((x - y).abs() < 1e-3 * x.abs().max(y.abs()), "{x} vs {y}");
    }
}

fn constant_traces(ra: f64, la: f64, ll: f64, n: usize) -> ElectrodeTraces {
    let mut names = vec!["RA".to_string(), "LA".into(), "LL".into()];
    let mut data = vec![vec![ra; n], vec![la; n], vec![ll; n]];
    for (i, v) in PRECORDIAL.iter().enumerate() {
        names.push(v.to_string());
        data.push(vec![i as f64; n]);
    }
    ElectrodeTraces { names, dt_ms: 1.0, data }
}

#[test]
fn twelve_lead_arithmetic() {
    let e = derive_12lead(&constant_traces(0.0, 1.0, 2.0, 3)).unwrap();
    let at = |n: &str| e.lead(n).unwrap()[0];
    assert_eq!((at("I"), at("II"), at("III"), at("aVF")), (1.0, 2.0, 1.0, 1.5));
    assert_eq!((at("aVR"), at("-aVR"), at("aVL")), (-1.5, 1.5, 0.0));
    assert_eq!(at("V1"), -1.0);
    let s = derive_12lead(&constant_traces(4.0, 4.0, 4.0, 3)).unwrap();
    for l in &s.leads[..6] {
        assert!(l.iter().all(|&x| x == 0.0));
    }
    let mut missing = constant_traces(0.0, 1.0, 2.0, 3);
    missing.names[1] = "XX".into();
    assert!(matches!(derive_12lead(&missing), Err(Error::Input(_))));
}

proptest! {
    #[test]
    fn einthoven_holds_before_and_after_filtering(xs in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 40..120)) {
        let n = xs.len();
        let mut t = constant_traces(0.0, 0.0, 0.0, n);
        for (k, x) in xs.iter().enumerate() {
            for j in 0..3 {
                t.data[j][k] = x[j];
            }
        }
        let raw = derive_12lead(&t).unwrap();
        let f = filter_and_scale(&raw, &FilterSpec::default()).unwrap();
        for e in [&raw, &f] {
            for k in 0..n {
                prop_assert_eq!(e.leads[0][k] + e.leads[2][k], e.leads[1][k]);
            }
        }
    }
}

fn single_lead(x: Vec<f64>, dt: f64) -> EcgTraces {
    EcgTraces { dt_ms: dt, leads: vec![x; 12], provenance: Vec::new() }
}

#[test]
fn highpass_removes_dc() {
    let f = filter_and_scale(&single_lead(vec![3.0; 2000], 1.0), &FilterSpec { scale: 1.0, ..FilterSpec::default() }).unwrap();
    assert!(f.leads[0].iter().all(|x| x.abs() < 0.01 * 3.0));
}

#[test]
fn one_hertz_sits_in_the_passband() {
    let dt = 1.0;
    let x: Vec<f64> = (0..10_000).map(|k| (2.0 * PI * k as f64 * dt / 1000.0).sin()).collect();
    let f = filter_and_scale(&single_lead(x, dt), &FilterSpec::default()).unwrap();
    let mid = &f.leads[0][3000..7000];
    let amp = mid.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!((amp - 0.2).abs() < 0.05 * 0.2, "amplitude {amp}");
    let p = f.provenance.last().unwrap();
    assert_eq!((p.lowpass_hz, p.highpass_hz, p.scale, p.order, p.passes), (Some(150.0), Some(0.5), 0.2, 2, 2));
    assert_eq!(p.sample_rate_hz, 1000.0);
}

#[test]
fn neutral_filter_is_the_identity() {
    let x: Vec<f64> = (0..500).map(|k| (k as f64 * 0.37).sin() + 0.01 * k as f64).collect();
    let raw = single_lead(x, 0.5);
    let f = filter_and_scale(&raw, &FilterSpec { lowpass_hz: None, highpass_hz: None, scale: 1.0 }).unwrap();
    for (a, b) in f.leads.iter().zip(&raw.leads).skip(2) {
        assert_eq!(a, b);
    }
    assert_eq!(f.leads[1], f.leads[0].iter().zip(&f.leads[2]).map(|(a, b)| a + b).collect::<Vec<_>>());
}

#[test]
fn low_sample_rates_are_rejected() {
    let raw = single_lead(vec![0.0; 100], 4.0);
    assert!(matches!(filter_and_scale(&raw, &FilterSpec::default()), Err(Error::Config(_))));
}

#[test]
fn csv_roundtrip_keeps_leads_and_provenance() {
    let x: Vec<f64> = (0..300).map(|k| (k as f64 * 0.05).cos()).collect();
    let f = filter_and_scale(&single_lead(x, 1.0), &FilterSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ecg.csv");
    f.write_csv(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("t_ms,I,II,III,aVR,aVL,aVF,V1,V2,V3,V4,V5,V6\n"));
    let back = EcgTraces::read_csv(&p).unwrap();
    assert_eq!(back.provenance, f.provenance);
    assert_eq!(back.dt_ms, 1.0);
    for (a, b) in back.leads.iter().zip(&f.leads) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }
}
