use atrialab::error::Error;
use atrialab::mesh::generate::generate_slab;
use atrialab::mesh::{Mesh, Point};
use atrialab::pathways::Cable;
use atrialab::propagation::*;
use atrialab::uac::UacPoint;
use nalgebra::Vector3;
use proptest::prelude::*;

fn x_axis() -> Vector3<f64> {
    Vector3::x()
}

fn nodes_where(m: &Mesh, f: impl Fn(&Point) -> bool) -> Vec<u32> {
    (0..m.n_nodes() as u32).filter(|&v| f(&m.nodes[v as usize])).collect()
}

fn nearest(m: &Mesh, p: Point) -> u32 {
    (0..m.n_nodes() as u32).min_by(|&a, &b| (m.nodes[a as usize] - p).norm().total_cmp(&(m.nodes[b as usize] - p).norm())).unwrap()
}

#[test]
fn planar_front_is_exact() {
    let m = generate_slab([12_000.0, 2000.0, 1000.0], 500.0, 1).unwrap();
    let vel = VelocityField::uniform(&m, x_axis(), Conduction::new(0.97, 0.5)).unwrap();
    let seeds = nodes_where(&m, |p| p.x == 0.0);
    let map = solve_eikonal(&m, &vel, &[StimulusSpec::new(seeds, 2.0).unwrap()]).unwrap();
    for (v, p) in m.nodes.iter().enumerate() {
        let exact = 2.0 + p.x / 970.0;
        assert!((map.tau[v] - exact).abs() < 1e-6, "node {v}: {} vs {exact}", map.tau[v]);
    }
    // 10 mm along the fibre at 0.97 m/s.
    let far = nodes_where(&m, |p| p.x == 10_000.0);
    assert!(far.iter().all(|&v| (map.tau[v as usize] - 2.0 - 10.309).abs() < 1e-3));
}

/// Mean and max relative error against √(xᵀM⁻¹x) beyond `skip` edge lengths of a central seed.
fn ellipse_error(h: f64, cells: [usize; 3], c: Conduction, radius_um: Option<f64>, skip: f64) -> (f64, f64) {
    let dims = cells.map(|n| n as f64 * h);
    let m = generate_slab(dims, h, 1).unwrap();
    let vel = VelocityField::uniform(&m, x_axis(), c).unwrap();
    let s = nearest(&m, Point::new(dims[0] / 2.0, dims[1] / 2.0, dims[2] / 2.0));
    let opts = EikonalOptions { source_radius_um: radius_um, ..EikonalOptions::default() };
    let map = EikonalSolver::new(&m, &vel, opts).unwrap().solve(&[StimulusSpec::new(vec![s], 0.0).unwrap()]).unwrap();
    let o = m.nodes[s as usize];
    let (mut sum, mut n, mut worst) = (0.0, 0, 0.0f64);
    for (v, p) in m.nodes.iter().enumerate() {
        let d = p - o;
        if d.norm() < skip * h {
            continue;
        }
        let exact = ((d.x / (c.v_l * 1000.0)).powi(2) + ((d.y * d.y + d.z * d.z) / (c.v_t * 1000.0).powi(2))).sqrt();
        let e = (map.tau[v] - exact).abs() / exact;
        sum += e;
        n += 1;
        worst = worst.max(e);
    }
    (sum / n as f64, worst)
}

#[test]
fn point_source_matches_the_anisotropic_ellipsoid() {
    let (mean, max) = ellipse_error(900.0, [40, 40, 5], Conduction::new(0.97, 0.74), None, 3.0);
    assert!(mean < 0.03, "mean relative error {mean}");
    assert!(max < 0.05, "max relative error {max}");
}

#[test]
fn refinement_at_fixed_source_radius_reduces_the_error() {
    let c = Conduction::new(1.0, 0.5);
    let coarse = ellipse_error(1000.0, [16, 16, 2], c, Some(2000.0), 3.0).1;
    let fine = ellipse_error(500.0, [32, 32, 4], c, Some(2000.0), 6.0).1;
    assert!(coarse / fine >= 1.5, "coarse {coarse}, fine {fine}");
}

#[test]
fn non_conducting_tissue_is_never_reached() {
    let m = generate_slab([4000.0, 1000.0, 1000.0], 500.0, 1).unwrap();
    let mut vel = VelocityField::uniform(&m, x_axis(), Conduction::new(1.0, 1.0)).unwrap();
    for e in 0..m.n_elements() {
        if m.centroid(e).x > 2000.0 {
            vel.conduction[e] = None;
        }
    }
    let seeds = nodes_where(&m, |p| p.x == 0.0);
    let map = solve_eikonal(&m, &vel, &[StimulusSpec::new(seeds.clone(), 0.0).unwrap()]).unwrap();
    for (v, p) in m.nodes.iter().enumerate() {
        assert_eq!(map.tau[v].is_finite(), p.x <= 2000.0, "node {v} at x = {}", p.x);
    }
    vel.conduction.iter_mut().for_each(|c| *c = None);
    assert!(matches!(EikonalSolver::new(&m, &vel, EikonalOptions::default()), Err(Error::Validation(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scaling_velocity_by_k_scales_times_by_one_over_k(k in 0.25f64..4.0, onset in 0.0f64..20.0) {
        let m = generate_slab([6000.0, 3000.0, 1000.0], 500.0, 1).unwrap();
        let c = Conduction::new(0.9, 0.4);
        let s = StimulusSpec::new(vec![nearest(&m, Point::new(1000.0, 1500.0, 500.0))], onset).unwrap();
        let a = solve_eikonal(&m, &VelocityField::uniform(&m, x_axis(), c).unwrap(), &[s.clone()]).unwrap();
        let b = solve_eikonal(&m, &VelocityField::uniform(&m, x_axis(), Conduction::new(c.v_l * k, c.v_t * k)).unwrap(), &[s]).unwrap();
        for v in 0..m.n_nodes() {
            let want = onset + (a.tau[v] - onset) / k;
            prop_assert!((b.tau[v] - want).abs() <= 1e-9 * (1.0 + want), "{} vs {}", b.tau[v], want);
        }
    }

    #[test]
    fn nothing_arrives_faster_than_the_fastest_velocity(
        v_l in 0.3f64..2.0,
        ratio in 0.2f64..1.0,
        fx in -1.0f64..1.0, fy in -1.0f64..1.0,
        seed in 0usize..400,
        onset in 0.0f64..10.0,
    ) {
        let m = generate_slab([5000.0, 4000.0, 1000.0], 500.0, 1).unwrap();
        let vel = VelocityField::uniform(&m, Vector3::new(fx, fy, 0.3), Conduction::new(v_l, v_l * ratio)).unwrap();
        let s = (seed % m.n_nodes()) as u32;
        let map = solve_eikonal(&m, &vel, &[StimulusSpec::new(vec![s], onset).unwrap()]).unwrap();
        prop_assert_eq!(map.tau[s as usize], onset);
        for (v, p) in m.nodes.iter().enumerate() {
            let bound = onset + (p - m.nodes[s as usize]).norm() / (v_l * 1000.0);
            prop_assert!(map.tau[v] >= bound - 1e-9, "node {v}: {} < {bound}", map.tau[v]);
        }
    }

    #[test]
    fn several_stimuli_fire_no_later_than_their_onsets(onsets in prop::collection::vec(0.0f64..10.0, 1..5)) {
        let m = generate_slab([5000.0, 4000.0, 1000.0], 500.0, 1).unwrap();
        let vel = VelocityField::uniform(&m, x_axis(), Conduction::new(0.8, 0.5)).unwrap();
        let stim: Vec<StimulusSpec> = onsets.iter().enumerate()
            .map(|(i, &t)| StimulusSpec::new(vec![(i * 53 % m.n_nodes()) as u32], t).unwrap())
            .collect();
        let map = solve_eikonal(&m, &vel, &stim).unwrap();
        let first = onsets.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(map.onset_ms, first);
        prop_assert!(map.tau.iter().all(|&t| t.is_finite() && t >= first));
        for s in &stim {
            prop_assert!(map.tau[s.nodes[0] as usize] <= s.onset_ms);
        }
    }
}

/// Two slabs 5 mm apart along x, disconnected; returns the mesh and the node offset of the second.
fn two_slabs() -> (Mesh, usize) {
    let a = generate_slab([4000.0, 2000.0, 1000.0], 500.0, 1).unwrap();
    let off = a.n_nodes();
    let shift = Vector3::new(9000.0, 0.0, 0.0);
    let mut nodes = a.nodes.clone();
    nodes.extend(a.nodes.iter().map(|p| p + shift));
    let mut elements = a.elements.clone();
    elements.extend(a.elements.iter().map(|t| t.map(|v| v + off as u32)));
    let tags = vec![1; elements.len()];
    (Mesh::new(nodes, elements, tags).unwrap(), off)
}

fn link(name: &str, a: u32, b: u32, delay_ms: f64) -> Cable {
    let p = |side| UacPoint { alpha: 0.0, beta: 0.0, gamma: 1.0, side };
    Cable { name: name.into(), ra_anchor: p(0), la_anchor: p(1), nodes: vec![a, b], la_start: 1, length_mm: delay_ms, velocity: 1.0, delay_ms }
}

#[test]
fn a_single_cable_delays_the_far_side_by_its_transit_time() {
    let (m, off) = two_slabs();
    let vel = VelocityField::uniform(&m, x_axis(), Conduction::new(1.0, 0.6)).unwrap();
    let s = StimulusSpec::new(vec![0], 0.0).unwrap();
    let alone = solve_eikonal(&m, &vel, &[s.clone()]).unwrap();
    assert!(alone.tau[off..].iter().all(|t| t.is_infinite()));
    let a = nearest(&m, Point::new(4000.0, 1000.0, 500.0));
    let b = off as u32;
    let map = couple_cables(&m, &vel, &[s], &[link("c", a, b, 12.5)]).unwrap();
    assert!((map.tau[b as usize] - (map.tau[a as usize] + 12.5)).abs() < 1e-9);
    assert!(map.tau[off..].iter().all(|t| t.is_finite() && *t >= map.tau[b as usize] - 1e-9));
    assert_eq!(&map.tau[..off], &alone.tau[..off]);
}

#[test]
fn the_faster_of_two_cables_wins() {
    let (m, off) = two_slabs();
    let vel = VelocityField::uniform(&m, x_axis(), Conduction::new(1.0, 0.6)).unwrap();
    let a = nearest(&m, Point::new(4000.0, 0.0, 0.0));
    let b1 = nearest(&m, Point::new(9000.0, 0.0, 0.0));
    let b2 = nearest(&m, Point::new(9000.0, 2000.0, 1000.0));
    assert!(b1 as usize >= off && b2 as usize >= off);
    let s = StimulusSpec::new(vec![a], 0.0).unwrap();
    let map = couple_cables(&m, &vel, &[s], &[link("slow", a, b1, 35.0), link("fast", a, b2, 20.0)]).unwrap();
    assert!((map.tau[b2 as usize] - 20.0).abs() < 1e-9);
    assert!(map.tau[b1 as usize] < 35.0);
    assert!(map.tau[off..].iter().all(|t| *t >= 20.0 - 1e-9));
}

#[test]
fn cables_conduct_retrogradely() {
    let (m, off) = two_slabs();
    let vel = VelocityField::uniform(&m, x_axis(), Conduction::new(1.0, 0.6)).unwrap();
    let (a, b) = (5u32, off as u32 + 5);
    let s = StimulusSpec::new(vec![b], 1.0).unwrap();
    let map = couple_cables(&m, &vel, &[s], &[link("c", a, b, 7.0)]).unwrap();
    assert!((map.tau[a as usize] - 8.0).abs() < 1e-9);
}

#[test]
fn activation_text_roundtrip_keeps_unreached_nodes() {
    let map = ActivationMap { tau: vec![0.0, 1.25, f64::INFINITY, 3.5e-7], onset_ms: 0.0, updates: 3 };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("act.dat");
    map.write(&p).unwrap();
    let back = ActivationMap::read(&p).unwrap();
    assert_eq!(back.tau, map.tau);
    std::fs::write(&p, "1.0\nNaN\n").unwrap();
    assert!(matches!(ActivationMap::read(&p), Err(Error::Parse { line: 2, .. })));
}

fn ramp_template() -> APTemplate {
    // Rest −80 mV, linear rise to +20 mV over 1 ms, plateau.
    let mut s = vec![-80.0; 11];
    s.extend((1..=10).map(|i| -80.0 + 10.0 * i as f64));
    s.extend(std::iter::repeat(20.0).take(50));
    APTemplate::from_samples(0.1, s).unwrap()
}

#[test]
fn template_activation_is_the_minus_twenty_crossing() {
    let t = ramp_template();
    assert!((t.activation_ms - 1.6).abs() < 1e-12);
    assert!((t.upstroke_ms - 0.8).abs() < 1e-12);
    assert_eq!(t.value(0.0), -20.0);
    assert_eq!(t.value(-5.0), -80.0);
    assert_eq!(t.value(100.0), 20.0);
    let d = APTemplate::default();
    assert!(d.amplitude_mv > 80.0 && d.upstroke_ms < 2.0);
    assert!(matches!(APTemplate::from_samples(0.1, vec![1.0, 1.0, 1.0]), Err(Error::Input(_))));
}

#[test]
fn recovered_vm_follows_the_template() {
    let t = ramp_template();
    let map = ActivationMap { tau: vec![0.0, 3.0, f64::INFINITY], onset_ms: 0.0, updates: 0 };
    let vm = recover_vm(&map, &t, 10.0, 0.5).unwrap();
    assert_eq!(vm.n_steps(), 21);
    assert!(!vm.truncated);
    for k in 0..vm.n_steps() {
        let time = vm.time(k);
        assert_eq!(vm.value(0, time), t.value(time));
        assert_eq!(vm.value(2, time), t.rest_mv);
    }
    assert!(recover_vm(&map, &t, 2.0, 0.5).unwrap().truncated);
    assert!(matches!(recover_vm(&map, &t, 1.0, 2.0), Err(Error::Config(_))));
}

proptest! {
    #[test]
    fn shifting_activation_shifts_vm(tau in 0.0f64..20.0, shift in 0.0f64..20.0, t in 0.0f64..60.0) {
        let tp = ramp_template();
        let a = ActivationMap { tau: vec![tau], onset_ms: 0.0, updates: 0 };
        let b = ActivationMap { tau: vec![tau + shift], onset_ms: 0.0, updates: 0 };
        let va = recover_vm(&a, &tp, 100.0, 1.0).unwrap();
        let vb = recover_vm(&b, &tp, 100.0, 1.0).unwrap();
        prop_assert!((vb.value(0, t + shift) - va.value(0, t)).abs() < 1e-9);
    }
}
