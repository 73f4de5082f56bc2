use std::path::PathBuf;

use dsfdi_core::data::{generate_synthetic_flight, FaultSpec, ManeuverSegment, SyntheticConfig};
use dsfdi_core::detection::detection_residual;
use dsfdi_core::error::Error;
use dsfdi_core::evidence::MassVector;
use dsfdi_core::fusion::{CombinationRule, RuleId};
use dsfdi_core::harness::{
    build_series, emit_series, read_series, run_offline_design, run_pipeline, run_rule, run_with_bundle,
    run_with_plugins, DataSource, DesignBundle, FaultPlan, PipelineConfig, SeriesId,
};
use dsfdi_core::{apply_normalization, Result};

fn small_source(m: usize, seed: u64, segments: &[(usize, usize, f64)]) -> SyntheticConfig {
    let mut cfg = SyntheticConfig::new(4, 2, m, 2, 0.01, seed);
    cfg.system_seed = Some(21);
    cfg.maneuver_mismatch = 1.0;
    cfg.maneuver_segments = segments
        .iter()
        .map(|&(start, stop, intensity)| ManeuverSegment { start, stop, intensity })
        .collect();
    cfg
}

fn small_config() -> PipelineConfig {
    let train = DataSource::Synthetic(small_source(6000, 1, &[(1000, 1200, 3.0), (4000, 4200, 3.0)]));
    let validation = DataSource::Synthetic(small_source(2000, 2, &[(600, 900, 4.0)]));
    let json = serde_json::json!({ "train": [train], "validation": validation });
    PipelineConfig::from_json(&json.to_string()).unwrap()
}

fn experiment_config() -> PipelineConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.json");
    PipelineConfig::from_file(path).unwrap()
}

#[test]
fn identical_configs_give_identical_reports() {
    let cfg = small_config();
    let (b1, r1) = run_pipeline(&cfg).unwrap();
    let (b2, r2) = run_pipeline(&cfg).unwrap();
    assert_eq!(b1.to_json().unwrap(), b2.to_json().unwrap());
    assert_eq!(r1.to_json().unwrap(), r2.to_json().unwrap());

    let mut other = cfg.clone();
    other.reseed(99);
    let (_, r3) = run_pipeline(&other).unwrap();
    assert_ne!(r1.to_json().unwrap(), r3.to_json().unwrap());
}

#[test]
fn rules_consume_the_same_evidence() {
    let cfg = small_config();
    let (bundle, report) = run_pipeline(&cfg).unwrap();
    for run in &report.runs {
        assert_eq!(run.runs.len(), 2);
        for rr in &run.runs {
            assert_eq!(rr.combined.len(), run.evidence.len());
            let rule = dsfdi_core::fusion::builtin_rule(&rr.rule).unwrap();
            let again = run_rule(&run.evidence, bundle.x_channels.len(), rule.as_ref()).unwrap();
            assert_eq!(&again, rr);
        }
        // Same detections for both rules, so TDR must agree.
        let tdr: Vec<_> = run.report.rules.iter().map(|r| r.tdr).collect();
        assert_eq!(tdr[0], tdr[1]);
    }
}

#[test]
fn bundle_round_trips_and_satisfies_design_invariants() {
    let cfg = small_config();
    let bundle = run_offline_design(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    bundle.save(&path).unwrap();
    let loaded = DesignBundle::load(&path).unwrap();
    assert_eq!(loaded.to_json().unwrap(), bundle.to_json().unwrap());

    // Th_D is a (1 - P_F) quantile of the training residuals.
    let raw = cfg.load_training().unwrap();
    let train = apply_normalization(&raw, &bundle.norm).unwrap();
    let above = (0..train.m())
        .filter(|&k| detection_residual(train.row(k).as_slice(), &bundle.detection).unwrap().abs() > bundle.th_d())
        .count();
    assert!(above as f64 / train.m() as f64 <= cfg.p_f);

    let w = &bundle.isolation.w_is;
    let n_x = bundle.x_channels.len();
    for i in 0..n_x {
        assert_eq!(w[(i, i)], -1.0);
        for j in (i + 1)..n_x {
            assert!(w.column(i).normalize().dot(&w.column(j).normalize()).abs() < 1e-6);
        }
    }
    assert!(bundle.isolation.objective <= bundle.isolation.initial_objective);
    assert!(bundle.fault_amplitudes.iter().all(|a| *a > 0.0));

    // A reused bundle gives the same report as a fresh design.
    let (_, fresh) = run_pipeline(&cfg).unwrap();
    let reused = run_with_bundle(&cfg, &loaded).unwrap();
    assert_eq!(fresh.to_json().unwrap(), reused.to_json().unwrap());
}

#[test]
fn series_export_round_trips() {
    let cfg = experiment_config();
    let (_, report) = run_pipeline(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let detection = emit_series(&report, "x1", &SeriesId::Detection, dir.path().join("det.csv")).unwrap();
    assert_eq!(detection.rows.len(), 9600);
    assert_eq!(detection.columns, ["time", "abs_e_d", "th_d", "fault"]);
    assert_eq!(read_series(dir.path().join("det.csv")).unwrap(), detection);
    let active: f64 = detection.rows.iter().map(|r| r[3]).sum();
    assert_eq!(active, 7200.0);
    assert!((detection.rows[10][0] - 1.0).abs() < 1e-12);

    let evidence = emit_series(&report, "x1", &"fig3".parse().unwrap(), dir.path().join("ev.csv")).unwrap();
    assert_eq!(evidence.columns.len(), 1 + 9 + 1);
    for row in &evidence.rows {
        let sum: f64 = row[1..10].iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&row[10]));
    }
    assert_eq!(read_series(dir.path().join("ev.csv")).unwrap(), evidence);

    let fe = emit_series(&report, "x3", &SeriesId::FaultEvidence, dir.path().join("fe.csv")).unwrap();
    assert_eq!(fe.columns, ["time", "RB_m_x3", "DS_m_x3"]);

    let combined = build_series(&report, report.scenario("fault-free").unwrap(), &"combined:DS".parse().unwrap()).unwrap();
    assert_eq!(combined.columns.last().unwrap(), "m_NF");

    assert!(matches!(
        emit_series(&report, "nope", &SeriesId::Detection, dir.path().join("x.csv")),
        Err(Error::UnknownSeries(_))
    ));
}

#[test]
fn zero_amplitude_fault_is_fault_free() {
    let mut cfg = small_config();
    cfg.include_fault_free = false;
    cfg.faults = FaultPlan::List(vec![FaultSpec {
        channel: 1,
        amplitude: 0.0,
        start: 200,
        stop: 1800,
    }]);
    let (_, report) = run_pipeline(&cfg).unwrap();
    let s = &report.scenarios[0];
    for r in &s.rules {
        assert_eq!(r.tir, None);
        assert_eq!(r.tdr, None);
        assert!(r.false_alarm_rate.is_some());
    }
}

#[test]
fn large_faults_are_detected_and_isolated() {
    let mut cfg = experiment_config();
    cfg.fault_factor = 10.0;
    cfg.include_fault_free = false;
    if let DataSource::Synthetic(v) = &mut cfg.validation {
        v.maneuver_segments.clear();
    }
    let (_, report) = run_pipeline(&cfg).unwrap();
    for s in &report.scenarios {
        for r in &s.rules {
            assert!(r.tdr.unwrap() > 99.0, "{} {}: TDR {:?}", s.label, r.rule, r.tdr);
            assert!(r.tir.unwrap() > 95.0, "{} {}: TIR {:?}", s.label, r.rule, r.tir);
        }
    }
}

/// Keeps the posterior halfway between its old value and the plain product.
struct Halfway;

impl CombinationRule for Halfway {
    fn id(&self) -> RuleId {
        RuleId::Plugin("HALF".into())
    }

    fn combine(&self, posterior: &MassVector, evidence: &MassVector, _rel: f64) -> Result<MassVector> {
        let product = dsfdi_core::fusion::ds_combine(posterior, evidence)?;
        let blended = dsfdi_core::fusion::reliability_blend(posterior, &product, 0.5)?;
        Ok(dsfdi_core::fusion::desaturate(&blended))
    }
}

#[test]
fn plugin_rules_run_alongside_builtins() {
    let mut cfg = small_config();
    cfg.rules = vec![RuleId::ClassicDs, "HALF".parse().unwrap()];
    let bundle = run_offline_design(&cfg).unwrap();
    let report = run_with_plugins(&cfg, &bundle, &[&Halfway]).unwrap();
    let rules: Vec<String> = report.scenarios[0].rules.iter().map(|r| r.rule.to_string()).collect();
    assert_eq!(rules, ["DS", "HALF"]);

    let err = run_with_bundle(&cfg, &bundle).unwrap_err();
    assert!(err.to_string().contains("HALF"), "{err}");
}

#[test]
fn csv_sources_match_synthetic_sources() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let DataSource::Synthetic(train) = &cfg.train[0] else { unreachable!() };
    let DataSource::Synthetic(val) = &cfg.validation else { unreachable!() };
    generate_synthetic_flight(train).unwrap().write_csv(dir.path().join("train.csv")).unwrap();
    generate_synthetic_flight(val).unwrap().write_csv(dir.path().join("val.csv")).unwrap();

    let json = serde_json::json!({
        "train": [{"kind": "csv", "paths": ["train.csv"]}],
        "validation": {"kind": "csv", "paths": ["val.csv"]},
        "x_names": ["x1", "x2", "x3", "x4"],
        "u_names": ["u1", "u2"],
    });
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, json.to_string()).unwrap();
    let from_csv = PipelineConfig::from_file(&cfg_path).unwrap();

    let (_, a) = run_pipeline(&cfg).unwrap();
    let (_, b) = run_pipeline(&from_csv).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn failures_name_their_stage() {
    let json = serde_json::json!({
        "train": [{"kind": "csv", "paths": ["/definitely/missing.csv"]}],
        "validation": {"kind": "csv", "paths": ["/definitely/missing.csv"]},
        "x_names": ["x1"],
        "u_names": ["u1"],
    });
    let cfg = PipelineConfig::from_json(&json.to_string()).unwrap();
    let err = run_offline_design(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { .. }));
    assert!(err.to_string().contains("load training data"), "{err}");
}
