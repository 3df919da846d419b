use std::sync::OnceLock;

use atrialab::error::Error;
use atrialab::mesh::generate::generate_slab;
use atrialab::mesh::Point;
use atrialab::monodomain::*;
use atrialab::propagation::{solve_eikonal, Conduction, StimulusSpec, VelocityField};
use nalgebra::Vector3;
use proptest::prelude::*;

fn ionic() -> IonicModelParams {
    IonicModelParams::default()
}

fn opts() -> TuneOptions {
    TuneOptions::default()
}

#[test]
fn harmonic_means_and_diffusivity() {
    let c = ConductivitySet::RA;
    assert!((c.sigma_l() - 0.583 * 0.742 / (0.583 + 0.742)).abs() < 1e-15);
    assert!((c.sigma_t() - 0.232 * 1.162 / (0.232 + 1.162)).abs() < 1e-15);
    // 1 S/m over β = 1400 cm⁻¹ and 1 µF/cm² is 1/1.4 mm²/ms.
    assert!((c.diffusivity(1.0) - 1.0 / 1.4).abs() < 1e-12);
    let s = c.scaled(FiberAxis::Longitudinal, 4.0);
    assert!((s.sigma_l() - 4.0 * c.sigma_l()).abs() < 1e-12);
    assert_eq!(s.sigma_t(), c.sigma_t());
    assert!(matches!(ConductivitySet::new(0.0, 1.0, 1.0, 1.0).validate(), Err(Error::Config(_))));
}

#[test]
fn crossing_and_trace_cv_on_synthetic_ramps() {
    let dt = 0.1;
    let ramp = |t0: f64| (0..400).map(|k| if (k as f64 * dt) < t0 { -85.0 } else { 15.0 }).collect::<Vec<f64>>();
    let lin: Vec<f64> = (0..100).map(|k| -85.0 + k as f64).collect();
    assert!((crossing_time(&lin, dt, -20.0).unwrap() - 6.5).abs() < 1e-12);
    let (near, far) = (ramp(5.0), ramp(15.0));
    let cv = measure_cv_traces(&near, &far, dt, 10.0, (0.0, 40.0)).unwrap();
    assert!((cv - 1.0).abs() < 0.03, "{cv}");
    assert!(matches!(measure_cv_traces(&near, &far, dt, 10.0, (0.0, 10.0)), Err(Error::Measurement(_))));
    assert!(matches!(measure_cv_traces(&far, &near, dt, 10.0, (0.0, 40.0)), Err(Error::Measurement(_))));
    assert!(crossing_time(&[-85.0; 10], dt, -20.0).is_none());
}

proptest! {
    #[test]
    fn plane_cv_recovers_a_planar_field(v in 0.2f64..2.0, t0 in 0.0f64..5.0) {
        let m = generate_slab([10_000.0, 1000.0, 500.0], 250.0, 0).unwrap();
        let act: Vec<f64> = m.nodes.iter().map(|p| t0 + p.x / (1000.0 * v)).collect();
        let cv = measure_cv(&m, &act, 0, (2.5, 7.5), (0.0, f64::INFINITY)).unwrap();
        prop_assert!((cv - v).abs() < 1e-9 * v);
    }
}

fn cv(c: &ConductivitySet, axis: FiberAxis, h: f64) -> f64 {
    cable_cv(c, axis, h, ionic(), &opts()).unwrap()
}

#[test]
fn table_conductivities_give_table_velocities_at_quarter_mm() {
    let l = cv(&ConductivitySet::RA, FiberAxis::Longitudinal, 0.25);
    assert!((l - 0.97).abs() < 0.05 * 0.97, "CV_l {l}");
    let t = cv(&ConductivitySet::RA, FiberAxis::Transverse, 0.25);
    assert!((t - 0.74).abs() < 0.05 * 0.74, "CV_t {t}");
}

#[test]
fn quadrupling_sigma_doubles_cv() {
    let base = cv(&ConductivitySet::RA, FiberAxis::Longitudinal, 0.25);
    let four = cv(&ConductivitySet::RA.scaled(FiberAxis::Longitudinal, 4.0), FiberAxis::Longitudinal, 0.25);
    let r = four / base;
    assert!((r - 2.0).abs() < 0.1, "ratio {r}");
}

#[test]
fn cv_increases_with_sigma_close_to_its_square_root_over_a_decade() {
    let fs = [0.3, 1.0, 3.0];
    let cvs: Vec<f64> = fs.iter().map(|&f| cv(&ConductivitySet::RA.scaled(FiberAxis::Longitudinal, f), FiberAxis::Longitudinal, 0.25)).collect();
    assert!(cvs.windows(2).all(|w| w[1] > w[0]), "{cvs:?}");
    for (f, c) in fs.iter().zip(&cvs) {
        let want = cvs[1] * f.sqrt();
        assert!((c - want).abs() < 0.05 * want, "σ×{f}: {c} vs √ scaling {want}");
    }
}

#[test]
fn zero_conductivity_confines_activation_to_the_stimulus() {
    let spec = SlabSpec { dims_mm: [5.0, 0.5, 0.5], h_mm: 0.25, fiber: [1.0, 0.0, 0.0] };
    let m = SlabModel::new(&spec, [0.0, 0.0], 1400.0, 1.0, ionic(), 0.01).unwrap();
    let act = m.run(&SlabStimulus::planar(1.0), 30.0, usize::MAX, |_, _| {}).unwrap();
    for (p, t) in m.mesh.nodes.iter().zip(&act) {
        assert_eq!(t.is_finite(), p.x <= 1000.0 + 1e-6, "x = {}", p.x);
    }
}

#[test]
fn runs_are_deterministic_and_step_is_bounded() {
    let spec = SlabSpec { dims_mm: [5.0, 0.5, 0.5], h_mm: 0.25, fiber: [1.0, 0.0, 0.0] };
    let probes = [0u32, 10, 20];
    let run = || simulate_slab(&spec, &ConductivitySet::RA, ionic(), &SlabStimulus::planar(0.5), 20.0, 0.01, &probes, 10).unwrap().1;
    let (a, b) = (run(), run());
    assert_eq!(a.activation_ms, b.activation_ms);
    assert_eq!(a.traces, b.traces);
    assert_eq!(a.traces[0].len(), 201);
    let err = SlabModel::from_conductivity(&spec, &ConductivitySet::RA, ionic(), 1.0).err().unwrap();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

fn tuned_097() -> &'static TuneReport {
    static T: OnceLock<TuneReport> = OnceLock::new();
    T.get_or_init(|| tune_conductivity(0.97, 0.25, ionic(), FiberAxis::Longitudinal, &ConductivitySet::RA, &opts()).unwrap())
}

#[test]
fn tuning_reaches_097_within_one_percent() {
    let r = tuned_097();
    assert!((r.cv - 0.97).abs() <= 0.01 * 0.97, "{}", r.cv);
    let again = cv(&r.conductivity, FiberAxis::Longitudinal, 0.25);
    assert!((again - 0.97).abs() <= 0.01 * 0.97);
}

#[test]
fn slower_target_tunes_to_a_smaller_conductivity() {
    let fo = tune_conductivity(0.33, 0.25, ionic(), FiberAxis::Longitudinal, &ConductivitySet::RA, &opts()).unwrap();
    assert!((fo.cv - 0.33).abs() <= 0.01 * 0.33, "{}", fo.cv);
    assert!(fo.sigma < tuned_097().sigma);
}

#[test]
fn tuning_to_the_measured_cv_is_a_fixed_point() {
    let base = ConductivitySet::RA.scaled(FiberAxis::Longitudinal, 1.7);
    let measured = cv(&base, FiberAxis::Longitudinal, 0.25);
    let r = tune_conductivity(measured, 0.25, ionic(), FiberAxis::Longitudinal, &base, &opts()).unwrap();
    assert!((r.sigma / base.sigma_l() - 1.0).abs() < 1e-12);
    assert_eq!(r.iterations, 1);
}

#[test]
fn tuned_cv_is_resolution_consistent() {
    let c = tuned_097().conductivity;
    let half = cv(&c, FiberAxis::Longitudinal, 0.5);
    let quarter = cv(&c, FiberAxis::Longitudinal, 0.25);
    assert!((half - quarter).abs() < 0.05 * quarter, "0.5 mm {half}, 0.25 mm {quarter}");
}

#[test]
fn bad_targets_are_rejected() {
    assert!(matches!(
        tune_conductivity(-1.0, 0.25, ionic(), FiberAxis::Longitudinal, &ConductivitySet::RA, &opts()),
        Err(Error::Config(_))
    ));
    let tight = TuneOptions { max_expansions: 1, ..opts() };
    assert!(matches!(
        tune_conductivity(50.0, 0.25, ionic(), FiberAxis::Longitudinal, &ConductivitySet::RA, &tight),
        Err(Error::Tuning(_))
    ));
}

#[test]
fn eikonal_at_rd_velocities_matches_rd_activation_on_a_20_mm_slab() {
    let c = tuned_097().conductivity;
    let cv_l = cv(&c, FiberAxis::Longitudinal, 0.25);
    let cv_t = cv(&c, FiberAxis::Transverse, 0.25);
    let spec = SlabSpec { dims_mm: [20.0, 5.0, 2.5], h_mm: 0.25, fiber: [1.0, 0.0, 0.0] };
    let (model, run) = simulate_slab(&spec, &c, ionic(), &SlabStimulus::planar(1.0), 40.0, 0.02, &[], usize::MAX).unwrap();
    let m = &model.mesh;
    let rd = &run.activation_ms;
    assert!(rd.iter().all(|t| t.is_finite()));
    // RE starts where RD leaves the stimulus: the x = 2 mm plane at its RD times.
    let plane: Vec<u32> = (0..m.n_nodes() as u32).filter(|&v| (m.nodes[v as usize].x - 2000.0).abs() < 1.0).collect();
    let onset = plane.iter().map(|&v| rd[v as usize]).sum::<f64>() / plane.len() as f64;
    let vel = VelocityField::uniform(m, Vector3::x(), Conduction::new(cv_l, cv_t.min(cv_l))).unwrap();
    let re = solve_eikonal(m, &vel, &[StimulusSpec::new(plane, onset).unwrap()]).unwrap();
    let beyond: Vec<usize> = (0..m.n_nodes()).filter(|&v| m.nodes[v].x >= 2000.0).collect();
    let diffs: Vec<f64> = beyond.iter().map(|&v| (re.tau[v] - rd[v]).abs()).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let max = diffs.iter().copied().fold(0.0, f64::max);
    assert!(mean < 2.0 && max < 2.0, "mean {mean} ms, max {max} ms");
    let far = Point::new(20_000.0, 0.0, 0.0);
    let v = (0..m.n_nodes()).min_by(|&a, &b| (m.nodes[a] - far).norm().total_cmp(&(m.nodes[b] - far).norm())).unwrap();
    assert!(rd[v] > 15.0, "RD reached the far end at {} ms", rd[v]);
}

#[test]
fn tissue_upstroke_matches_the_template() {
    let t = atrialab::propagation::APTemplate::default();
    let spec = SlabSpec { dims_mm: [16.0, 1.0, 1.0], h_mm: 0.25, fiber: [1.0, 0.0, 0.0] };
    let probe_at = Point::new(10_000.0, 500.0, 500.0);
    let mesh = generate_slab([16_000.0, 1000.0, 1000.0], 250.0, 0).unwrap();
    let probe = (0..mesh.n_nodes() as u32).find(|&v| (mesh.nodes[v as usize] - probe_at).norm() < 1.0).unwrap();
    let (_, run) = simulate_slab(&spec, &ConductivitySet::RA, ionic(), &SlabStimulus::planar(1.0), 30.0, 0.01, &[probe], 1).unwrap();
    let tau = run.activation_ms[probe as usize];
    let (mut sq, mut n) = (0.0, 0);
    for (k, &x) in run.traces[0].iter().enumerate() {
        let s = k as f64 * run.dt_out - tau;
        if (-2.0..=2.0).contains(&s) {
            sq += (x - t.value(s)).powi(2);
            n += 1;
        }
    }
    let rms = (sq / n as f64).sqrt();
    assert!(rms < 2.0, "upstroke RMS {rms} mV");
    let single = atrialab::propagation::APTemplate::from_ionic(&ionic()).unwrap();
    assert!((single.amplitude_mv - t.amplitude_mv).abs() < 5.0);
}
