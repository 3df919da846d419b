use std::f64::consts::PI;

use atrialab::analysis::*;
use atrialab::ecg::{EcgTraces, LEAD_NAMES};
use atrialab::error::Error;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn pair<'a>(c: &'a [f64], r: &'a [f64]) -> SignalPair<'a> {
    SignalPair::new(c, r, 1.0, "II").unwrap()
}

#[test]
fn rmse_closed_forms() {
    let r: Vec<f64> = (0..50).map(|k| (k as f64 * 0.3).sin() + 0.2).collect();
    assert_eq!(rmse_percent(&pair(&r, &r)).unwrap(), 0.0);
    let twice: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
    assert!((rmse_percent(&pair(&twice, &r)).unwrap() - 100.0).abs() < 1e-12);
    let zero = vec![0.0; 50];
    assert!(matches!(rmse_percent(&pair(&r, &zero)), Err(Error::Measurement(_))));
    assert!(matches!(SignalPair::new(&r, &r[1..], 1.0, "I"), Err(Error::Input(_))));
    assert!(matches!(SignalPair::new(&r, &r, 0.0, "I"), Err(Error::Input(_))));
}

#[test]
fn rmse_matches_a_plain_loop() {
    let mut rng = StdRng::seed_from_u64(7);
    let c: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..c.len() {
        num += (c[i] - r[i]).powi(2);
        den += r[i].powi(2);
    }
    let want = 100.0 * (num / den).sqrt();
    let got = rmse_percent(&pair(&c, &r)).unwrap();
    assert!((got - want).abs() <= 1e-12 * want);
}

proptest! {
    #[test]
    fn rmse_is_scale_covariant(r in prop::collection::vec(-5.0f64..5.0, 2..200), k in -4.0f64..4.0) {
        prop_assume!(r.iter().any(|x| x.abs() > 1e-3));
        let c: Vec<f64> = r.iter().map(|x| k * x).collect();
        let got = rmse_percent(&pair(&c, &r)).unwrap();
        prop_assert!((got - (k - 1.0).abs() * 100.0).abs() < 1e-9 * (1.0 + got));
    }

    #[test]
    fn mad_shifts_by_a_uniform_offset(m in prop::collection::vec(-5.0f64..5.0, 1..100), c in -3.0f64..3.0) {
        let cand: Vec<f64> = m.iter().map(|x| x + c).collect();
        prop_assert!((mad(&cand, &m).unwrap() - c.abs()).abs() < 1e-12);
        prop_assert_eq!(mad(&m, &m).unwrap(), 0.0);
    }
}

#[test]
fn mad_of_a_constant_ensemble() {
    let t: Vec<Vec<f64>> = (0..3).map(|v| vec![v as f64; 10]).collect();
    let refs: Vec<&[f64]> = t.iter().map(|v| v.as_slice()).collect();
    let mean = ensemble_mean(&refs).unwrap();
    assert_eq!(mean, vec![1.0; 10]);
    assert_eq!(mad(&t[2], &mean).unwrap(), 1.0);
    assert!(matches!(mad(&t[2], &mean[1..]), Err(Error::Input(_))));
    assert!(matches!(ensemble_mean(&[&t[0], &t[1][1..]]), Err(Error::Input(_))));
    assert!(matches!(ensemble_mean(&[]), Err(Error::Input(_))));
}

/// sin² bump supported on [a, b] ms, sampled every `dt` up to `end`.
fn bump(a: f64, b: f64, amp: f64, dt: f64, end: f64) -> Vec<f64> {
    (0..=(end / dt) as usize)
        .map(|k| {
            let t = k as f64 * dt;
            if t <= a || t >= b {
                0.0
            } else {
                amp * (PI * (t - a) / (b - a)).sin().powi(2)
            }
        })
        .collect()
}

#[test]
fn pwd_of_a_flat_trace_is_flagged() {
    let p = pwd_sloping(&[0.0; 400], 0.5, &PwdOptions::default()).unwrap();
    assert!(p.flagged);
    assert_eq!(p.pwd_ms, 0.0);
    assert!(pwd_sloping(&[0.0, 1.0], 0.5, &PwdOptions::default()).unwrap().flagged);
    assert!(matches!(pwd_sloping(&[0.0; 10], 0.5, &PwdOptions { k: 1.5, ..PwdOptions::default() }), Err(Error::Config(_))));
}

#[test]
fn pwd_recovers_a_constructed_support() {
    for dt in [0.25, 0.5, 1.0] {
        let p = pwd_sloping(&bump(20.0, 140.0, 0.1, dt, 200.0), dt, &PwdOptions::default()).unwrap();
        assert!(!p.flagged);
        assert!((p.pwd_ms - 120.0).abs() <= 4.0, "dt {dt}: {p:?}");
        assert!(p.onset_ms >= 20.0 - 2.0 && p.offset_ms <= 140.0 + 2.0);
    }
}

proptest! {
    #[test]
    fn pwd_ignores_amplitude_and_translation(amp in 0.01f64..50.0, shift in 0usize..80, width in 40.0f64..140.0) {
        let dt = 0.5;
        let base = pwd_sloping(&bump(20.0, 20.0 + width, 1.0, dt, 260.0), dt, &PwdOptions::default()).unwrap();
        let scaled = pwd_sloping(&bump(20.0, 20.0 + width, amp, dt, 260.0), dt, &PwdOptions::default()).unwrap();
        prop_assert_eq!(base.pwd_ms, scaled.pwd_ms);
        let s = shift as f64 * dt;
        let moved = pwd_sloping(&bump(20.0 + s, 20.0 + width + s, 1.0, dt, 260.0), dt, &PwdOptions::default()).unwrap();
        prop_assert_eq!(moved.pwd_ms, base.pwd_ms);
        prop_assert!((moved.onset_ms - base.onset_ms - s).abs() < 1e-9);
    }
}

#[test]
fn activation_diff_summaries() {
    let a = vec![0.0, 3.0, 5.0, f64::INFINITY, 8.0];
    let d = activation_diff(&a, &a, None).unwrap();
    assert_eq!(d.all.max_ms, 0.0);
    assert_eq!(d.all.nodes, 4);
    let b: Vec<f64> = a.iter().map(|x| x + 2.0).collect();
    let side = [0u8, 0, 1, 1, 1];
    let d = activation_diff(&a, &b, Some(&side)).unwrap();
    assert_eq!((d.all.max_ms, d.all.mean_ms), (2.0, 2.0));
    assert_eq!(d.per_atrium.iter().map(|s| s.nodes).collect::<Vec<_>>(), [2, 2]);
    let mut c = b.clone();
    c[0] = f64::INFINITY;
    assert_eq!(activation_diff(&a, &c, None).unwrap().mismatched, 1);
    assert!(matches!(activation_diff(&a, &b[1..], None), Err(Error::Input(_))));
}

fn traces(f: impl Fn(usize, f64) -> f64) -> EcgTraces {
    let dt = 1.0;
    let leads = (0..LEAD_NAMES.len()).map(|l| (0..200).map(|k| f(l, k as f64 * dt)).collect()).collect();
    EcgTraces { dt_ms: dt, leads, provenance: Vec::new() }
}

#[test]
fn report_averages_are_lead_means_and_avr_mirrors_minus_avr() {
    let shape = |l: usize, t: f64| (1.0 + l as f64) * if (30.0..130.0).contains(&t) { (PI * (t - 30.0) / 100.0).sin().powi(2) } else { 0.0 };
    let reference = traces(shape);
    let cand = traces(|l, t| shape(l, t) * (1.0 + 0.1 * l as f64));
    let mean = traces(|l, t| shape(l, t) + 0.05);
    let r = metrics_report(&cand, Some(&reference), Some(&mean), &PwdOptions::default()).unwrap();
    let names: Vec<&str> = r.leads.iter().map(|l| l.lead.as_str()).collect();
    assert_eq!(names, REPORT_LEADS);
    let avg = |f: &dyn Fn(&LeadMetrics) -> f64| r.leads.iter().map(f).sum::<f64>() / 12.0;
    assert!((r.average_rmse_percent.unwrap() - avg(&|l| l.rmse_percent.unwrap())).abs() < 1e-12);
    assert!((r.average_mad.unwrap() - avg(&|l| l.mad.unwrap())).abs() < 1e-12);
    assert!((r.average_pwd_ms - avg(&|l| l.pwd_ms)).abs() < 1e-12);
    let minus = r.leads.iter().find(|l| l.lead == "-aVR").unwrap();
    assert_eq!(r.avr.rmse_percent, minus.rmse_percent);
    assert_eq!(r.avr.mad, minus.mad);
    let none = metrics_report(&cand, None, None, &PwdOptions::default()).unwrap();
    assert!(none.average_rmse_percent.is_none() && none.average_mad.is_none());
    let short = EcgTraces { leads: reference.leads.iter().map(|l| l[..100].to_vec()).collect(), ..reference.clone() };
    assert!(matches!(metrics_report(&cand, Some(&short), None, &PwdOptions::default()), Err(Error::Input(_))));
}
