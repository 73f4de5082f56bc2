//! Offline design, online diagnosis and reporting.

mod config;
pub mod metrics;
mod series;

use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_normalization, calibrate_fault_amplitude, compute_normalization, fit_ls_model, inject_fault, Dataset,
    FaultSpec, LsModel, NormStats,
};
use crate::detection::{detection_residual, fit_detection_versor, DetectionModel};
use crate::error::{Error, Result, StageExt};
use crate::evidence::{
    assign_bbm, calibrate_reliability_threshold, reliability_from_norm, BbaParams, MassVector, ReliabilityParams,
};
use crate::fusion::{builtin_rule, init_state, isolate, CombinationRule, IsolationDecision, RuleId};
use crate::residual::{angular_distances_to, directional_residual, optimize_fault_directions, IsolationModel};

pub use config::{
    BbaOverrides, DataSource, FaultPlan, FaultWindow, PipelineConfig, ReliabilityOverrides,
};
pub use metrics::{compute_tdr, compute_tir, detection_false_alarm_rate, false_alarm_rate};
pub use series::{build_series, emit_series, read_series, write_series, SeriesId, SeriesTable};

/// Everything the online phase needs, produced by the offline design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBundle {
    pub x_channels: Vec<String>,
    pub u_channels: Vec<String>,
    pub dt: f64,
    pub norm: NormStats,
    pub detection: DetectionModel,
    pub isolation: IsolationModel,
    pub ls_model: LsModel,
    /// Calibrated per-channel fault amplitudes in normalized units.
    pub fault_amplitudes: Vec<f64>,
    pub reliability: ReliabilityParams,
    pub bba: BbaParams,
}

impl DesignBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn th_d(&self) -> f64 {
        self.bba.th_d
    }

    fn check_schema(&self, ds: &Dataset) -> Result<()> {
        if ds.x_channels() != self.x_channels.as_slice() || ds.u_channels() != self.u_channels.as_slice() {
            return Err(Error::InvalidDataset("dataset channels do not match the design bundle".into()));
        }
        Ok(())
    }
}

/// Offline design on an already loaded raw training set.
pub fn design_from_training(raw_train: &Dataset, cfg: &PipelineConfig) -> Result<DesignBundle> {
    let norm = compute_normalization(raw_train).stage("normalization")?;
    let train = apply_normalization(raw_train, &norm).stage("normalization")?;

    let detection = fit_detection_versor(&train)
        .and_then(|m| m.with_threshold(&train, cfg.p_f))
        .stage("detection design")?;
    let th_d = detection.threshold().stage("detection design")?;

    let isolation = optimize_fault_directions(&train, &cfg.solver).stage("fault-direction design")?;

    let ls_model = fit_ls_model(&train).stage("least-squares model")?;
    let fault_amplitudes = (0..train.n_x())
        .map(|i| calibrate_fault_amplitude(&ls_model, i, cfg.fault_factor))
        .collect::<Result<Vec<_>>>()
        .stage("fault amplitude calibration")?;

    let u_norms: Vec<f64> = (0..train.m()).map(|k| train.u_norm(k)).collect();
    let reliability = calibrate_reliability_threshold(&u_norms, cfg.p_f)
        .and_then(|th_r| ReliabilityParams::with_factor(th_r, cfg.reliability.delta_factor))
        .stage("reliability calibration")?;

    let gamma = cfg.bba.gamma.unwrap_or(std::f64::consts::LN_2 / 90.0);
    let bba = BbaParams::with_factors(th_d, gamma, cfg.bba.lambda_factor).stage("belief assignment parameters")?;

    Ok(DesignBundle {
        x_channels: train.x_channels().to_vec(),
        u_channels: train.u_channels().to_vec(),
        dt: train.dt(),
        norm,
        detection,
        isolation,
        ls_model,
        fault_amplitudes,
        reliability,
        bba,
    })
}

/// Load the training sources and run the offline design.
pub fn run_offline_design(cfg: &PipelineConfig) -> Result<DesignBundle> {
    cfg.validate().stage("configuration")?;
    let raw = cfg.load_training().stage("load training data")?;
    design_from_training(&raw, cfg)
}

/// Rule-independent per-sample signals of one scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvidenceSeries {
    pub e_d: Vec<f64>,
    pub detected: Vec<bool>,
    pub distances: Vec<Vec<f64>>,
    pub bbm: Vec<MassVector>,
    pub rel: Vec<f64>,
}

impl EvidenceSeries {
    pub fn len(&self) -> usize {
        self.e_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_d.is_empty()
    }
}

/// Output of the recursive filter for one rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleRun {
    pub rule: RuleId,
    pub combined: Vec<MassVector>,
    pub decisions: Vec<IsolationDecision>,
    /// Updates skipped because of total conflict.
    pub skipped_updates: usize,
}

/// Compute `e_D`, detections, distances, masses and reliability for a normalized record.
pub fn compute_evidence(normalized: &Dataset, bundle: &DesignBundle) -> Result<EvidenceSeries> {
    bundle.check_schema(normalized)?;
    let th_d = bundle.detection.threshold()?;
    let signatures = bundle.isolation.unit_signatures();
    let m = normalized.m();
    let mut out = EvidenceSeries {
        e_d: Vec::with_capacity(m),
        detected: Vec::with_capacity(m),
        distances: Vec::with_capacity(m),
        bbm: Vec::with_capacity(m),
        rel: Vec::with_capacity(m),
    };
    for k in 0..m {
        let z = normalized.row(k);
        let z = z.as_slice();
        let e_d = detection_residual(z, &bundle.detection)?;
        let r = directional_residual(z, &bundle.isolation)?;
        let d = angular_distances_to(&r, &signatures)?;
        let bbm = assign_bbm(&d, e_d, &bundle.bba)?;
        let rel = reliability_from_norm(normalized.u_norm(k), &bundle.reliability);
        out.detected.push(e_d.abs() > th_d);
        out.e_d.push(e_d);
        out.distances.push(d);
        out.bbm.push(bbm);
        out.rel.push(rel);
    }
    Ok(out)
}

/// Run the recursive filter over a precomputed evidence stream.
pub fn run_rule(evidence: &EvidenceSeries, n_x: usize, rule: &dyn CombinationRule) -> Result<RuleRun> {
    let mut state = init_state(n_x, rule.id())?;
    let mut run = RuleRun {
        rule: rule.id(),
        combined: Vec::with_capacity(evidence.len()),
        decisions: Vec::with_capacity(evidence.len()),
        skipped_updates: 0,
    };
    for (k, (bbm, &rel)) in evidence.bbm.iter().zip(&evidence.rel).enumerate() {
        if let Err(e) = state.step(rule, bbm, rel) {
            match e {
                Error::TotalConflict => {
                    warn!("rule {}: sample {k}: {e}; posterior kept", rule.id());
                    run.skipped_updates += 1;
                }
                other => return Err(other),
            }
        }
        run.combined.push(state.posterior.clone());
        run.decisions.push(isolate(&state));
    }
    Ok(run)
}

/// Metrics of one rule in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub rule: RuleId,
    pub tdr: Option<f64>,
    pub tir: Option<f64>,
    pub false_alarm_rate: Option<f64>,
    pub skipped_updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub label: String,
    pub fault: Option<FaultSpec>,
    /// Raw detector alarms on fault-free samples, percent.
    pub detection_false_alarm_rate: Option<f64>,
    pub rules: Vec<RuleMetrics>,
}

/// Series of one executed scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub evidence: EvidenceSeries,
    pub runs: Vec<RuleRun>,
}

impl ScenarioRun {
    pub fn rule_run(&self, rule: &RuleId) -> Option<&RuleRun> {
        self.runs.iter().find(|r| &r.rule == rule)
    }
}

fn is_real_fault(f: Option<&FaultSpec>) -> Option<&FaultSpec> {
    f.filter(|f| f.amplitude != 0.0)
}

/// Inject `fault` into the normalized validation record and run every rule on the same evidence.
pub fn run_scenario(
    validation: &Dataset,
    bundle: &DesignBundle,
    fault: Option<&FaultSpec>,
    rules: &[&dyn CombinationRule],
    label: impl Into<String>,
) -> Result<ScenarioRun> {
    let faulty = match fault {
        Some(f) => inject_fault(validation, f)?,
        None => validation.clone(),
    };
    let evidence = compute_evidence(&faulty, bundle)?;
    let active = is_real_fault(fault);
    let mask = active.map(|f| f.mask(faulty.m()));

    let mut runs = Vec::with_capacity(rules.len());
    let mut metrics = Vec::with_capacity(rules.len());
    for rule in rules {
        let run = run_rule(&evidence, bundle.x_channels.len(), *rule)?;
        let tdr = match &mask {
            Some(mask) => Some(compute_tdr(&evidence.detected, mask)?),
            None => None,
        };
        let tir = match active {
            Some(f) => Some(compute_tir(&run.decisions, f)?),
            None => None,
        };
        metrics.push(RuleMetrics {
            rule: run.rule.clone(),
            tdr,
            tir,
            false_alarm_rate: false_alarm_rate(&run.decisions, active),
            skipped_updates: run.skipped_updates,
        });
        runs.push(run);
    }
    Ok(ScenarioRun {
        report: ScenarioReport {
            label: label.into(),
            fault: fault.copied(),
            detection_false_alarm_rate: detection_false_alarm_rate(&evidence.detected, active),
            rules: metrics,
        },
        evidence,
        runs,
    })
}

/// Single-rule online run, as used by the in-flight phase.
pub fn run_online(
    validation: &Dataset,
    bundle: &DesignBundle,
    fault: Option<&FaultSpec>,
    rule: &dyn CombinationRule,
) -> Result<ScenarioRun> {
    let label = match fault {
        Some(f) => bundle.x_channels.get(f.channel).cloned().unwrap_or_default(),
        None => "fault-free".to_owned(),
    };
    run_scenario(validation, bundle, fault, &[rule], label)
}

/// Summary of the design used for a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub x_channels: Vec<String>,
    pub u_channels: Vec<String>,
    pub dt: f64,
    pub p_f: f64,
    pub th_d: f64,
    pub th_r: f64,
    pub v: Vec<f64>,
    pub isolation_objective: f64,
    pub solver_iterations: usize,
    pub solver_converged: bool,
    pub fault_amplitudes: Vec<f64>,
}

impl DesignSummary {
    fn of(bundle: &DesignBundle) -> Self {
        Self {
            x_channels: bundle.x_channels.clone(),
            u_channels: bundle.u_channels.clone(),
            dt: bundle.dt,
            p_f: bundle.detection.p_f,
            th_d: bundle.th_d(),
            th_r: bundle.reliability.th_r,
            v: bundle.detection.v.clone(),
            isolation_objective: bundle.isolation.objective,
            solver_iterations: bundle.isolation.iterations,
            solver_converged: bundle.isolation.converged,
            fault_amplitudes: bundle.fault_amplitudes.clone(),
        }
    }
}

/// Metrics of every scenario; series stay in memory for [`emit_series`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub design: DesignSummary,
    pub validation_samples: usize,
    pub scenarios: Vec<ScenarioReport>,
    #[serde(skip)]
    pub runs: Vec<ScenarioRun>,
}

impl DiagnosisReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn scenario(&self, label: &str) -> Option<&ScenarioRun> {
        self.runs.iter().find(|r| r.report.label == label)
    }
}

/// Scenario list for a validation record of `m` samples.
pub fn plan_scenarios(cfg: &PipelineConfig, bundle: &DesignBundle, m: usize) -> Vec<(String, Option<FaultSpec>)> {
    let mut out = Vec::new();
    if cfg.include_fault_free {
        out.push(("fault-free".to_owned(), None));
    }
    match &cfg.faults {
        FaultPlan::Auto => {
            let (start, stop) = cfg.fault_window.bounds(m);
            for (i, name) in bundle.x_channels.iter().enumerate() {
                out.push((
                    name.clone(),
                    Some(FaultSpec {
                        channel: i,
                        amplitude: bundle.fault_amplitudes[i],
                        start,
                        stop,
                    }),
                ));
            }
        }
        FaultPlan::List(faults) => {
            for f in faults {
                let name = bundle.x_channels.get(f.channel).cloned().unwrap_or_else(|| format!("#{}", f.channel));
                out.push((name, Some(*f)));
            }
        }
    }
    out
}

fn resolve_rules<'a>(
    ids: &[RuleId],
    plugins: &[&'a dyn CombinationRule],
) -> Result<Vec<Box<dyn CombinationRule + 'a>>> {
    ids.iter()
        .map(|id| {
            if let Some(rule) = builtin_rule(id) {
                return Ok(rule);
            }
            plugins
                .iter()
                .find(|p| &p.id() == id)
                .map(|p| Box::new(PluginRef(*p)) as Box<dyn CombinationRule + 'a>)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown combination rule {id}")))
        })
        .collect()
}

struct PluginRef<'a>(&'a dyn CombinationRule);

impl CombinationRule for PluginRef<'_> {
    fn id(&self) -> RuleId {
        self.0.id()
    }

    fn combine(&self, posterior: &MassVector, evidence: &MassVector, rel: f64) -> Result<MassVector> {
        self.0.combine(posterior, evidence, rel)
    }
}

/// Run every planned scenario against an existing design bundle.
pub fn run_with_bundle(cfg: &PipelineConfig, bundle: &DesignBundle) -> Result<DiagnosisReport> {
    run_with_plugins(cfg, bundle, &[])
}

/// As [`run_with_bundle`], with extra combination rules available by id.
pub fn run_with_plugins(
    cfg: &PipelineConfig,
    bundle: &DesignBundle,
    plugins: &[&dyn CombinationRule],
) -> Result<DiagnosisReport> {
    cfg.validate().stage("configuration")?;
    let raw = cfg.load_validation().stage("load validation data")?;
    let validation = apply_normalization(&raw, &bundle.norm).stage("normalization")?;
    let rules = resolve_rules(&cfg.rules, plugins).stage("configuration")?;
    let rule_refs: Vec<&dyn CombinationRule> = rules.iter().map(|r| r.as_ref()).collect();
    let plan = plan_scenarios(cfg, bundle, validation.m());

    let runs = plan
        .par_iter()
        .map(|(label, fault)| run_scenario(&validation, bundle, fault.as_ref(), &rule_refs, label.clone()))
        .collect::<Result<Vec<_>>>()
        .stage("online run")?;

    Ok(DiagnosisReport {
        design: DesignSummary::of(bundle),
        validation_samples: validation.m(),
        scenarios: runs.iter().map(|r| r.report.clone()).collect(),
        runs,
    })
}

/// Offline design followed by every online scenario.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(DesignBundle, DiagnosisReport)> {
    let bundle = run_offline_design(cfg)?;
    let report = run_with_bundle(cfg, &bundle)?;
    Ok((bundle, report))
}
