use std::collections::BTreeMap;
use std::path::Path;

use atrialab::error::Error;
use atrialab::pathways::IcSet;
use atrialab::pipeline::*;

const ALL: [&str; 7] = ["mesh", "fields", "uac", "cables", "simulate", "ecg", "metrics"];

fn hashes(m: &PipelineManifest) -> BTreeMap<String, String> {
    m.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect()
}

#[test]
fn no_stages_means_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { output_dir: dir.path().join("out"), stages: StageToggles::none(), ..PipelineConfig::default() };
    let r = run_pipeline(&cfg).unwrap();
    assert!(r.manifest.artifacts.is_empty() && r.computed.is_empty() && r.cached.is_empty());
}

#[test]
fn missing_target_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = PipelineConfig { output_dir: out.clone(), target: Some(dir.path().join("nope.csv")), ..PipelineConfig::default() };
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, "validate");
    assert!(matches!(err.error, Error::Config(_)));
    assert!(!out.exists());
    let cfg = PipelineConfig { output_dir: out.clone(), deterministic: false, ..PipelineConfig::default() };
    assert_eq!(run_pipeline(&cfg).unwrap_err().stage, "validate");
}

#[test]
fn a_stage_without_its_inputs_reports_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let stages = StageToggles { simulate: true, ..StageToggles::none() };
    let cfg = PipelineConfig { output_dir: dir.path().to_path_buf(), stages, ..PipelineConfig::default() };
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, "simulate");
    assert!(err.to_string().contains("simulate"));
    assert!(err.manifest.artifacts.is_empty());
    assert!(dir.path().join("manifest.json").is_file());
}

#[test]
fn config_documents_parse_with_defaults() {
    let cfg = PipelineConfig::from_json(r#"{"output_dir": "x", "stages": {"sweep": true}}"#).unwrap();
    assert!(cfg.stages.sweep && cfg.stages.mesh);
    assert_eq!(cfg.forward, PipelineConfig::default().forward);
    assert!(matches!(PipelineConfig::from_json(r#"{"stages": 3}"#), Err(Error::Config(_))));
}

fn mtimes(root: &Path, m: &PipelineManifest) -> Vec<std::time::SystemTime> {
    m.artifacts.iter().map(|a| std::fs::metadata(root.join(&a.path)).unwrap().modified().unwrap()).collect()
}

#[test]
fn full_run_is_cached_deterministic_and_invalidated_by_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let cfg = PipelineConfig { output_dir: a.clone(), ..PipelineConfig::default() };
    let first = run_pipeline(&cfg).unwrap();
    assert_eq!(first.computed, ALL);
    let paths = hashes(&first.manifest);
    for p in ["mesh/biatria.pts", "mesh/quality.json", "model/labels.json", "model/uac.txt", "model/cables.json", "sim/activation.dat", "ecg/ecg.csv", "metrics/metrics.json"] {
        assert!(paths.contains_key(p), "{p} missing");
    }
    let ics: IcSet = read_json(&a.join("model/cables.json")).unwrap();
    assert_eq!(ics.cables.len(), 4);
    let on_disk: PipelineManifest = read_json(&a.join("manifest.json")).unwrap();
    assert_eq!(on_disk, first.manifest);
    for art in &first.manifest.artifacts {
        assert_eq!(sha256_file(&a.join(&art.path)).unwrap(), art.sha256);
    }

    let before = mtimes(&a, &first.manifest);
    let again = run_pipeline(&cfg).unwrap();
    assert!(again.computed.is_empty());
    assert_eq!(again.cached, ALL);
    assert_eq!(again.manifest, first.manifest);
    assert_eq!(mtimes(&a, &again.manifest), before);

    let b = dir.path().join("b");
    let fresh = run_pipeline(&PipelineConfig { output_dir: b, ..cfg.clone() }).unwrap();
    assert_eq!(hashes(&fresh.manifest), paths);

    // A forward-only change leaves the model stages cached.
    let mut changed = cfg.clone();
    changed.forward.duration_ms = 180.0;
    let r = run_pipeline(&changed).unwrap();
    assert_eq!(r.cached, ["mesh", "fields", "uac", "cables"]);
    assert_eq!(r.computed, ["simulate", "ecg", "metrics"]);

    // Tampering with an output reruns its stage.
    std::fs::write(a.join("ecg/ecg.csv"), "t_ms\n").unwrap();
    let r = run_pipeline(&changed).unwrap();
    assert_eq!(r.computed, ["ecg"]);
    assert_eq!(r.cached, ["mesh", "fields", "uac", "cables", "simulate", "metrics"]);
}
