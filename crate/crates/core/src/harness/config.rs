use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, FaultSpec, SyntheticConfig, DEFAULT_DT};
use crate::detection::DEFAULT_FALSE_ALARM_PROBABILITY;
use crate::error::{Error, Result};
use crate::fusion::RuleId;
use crate::residual::SolverOptions;

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// One or more CSV files, concatenated in order.
    Csv {
        paths: Vec<PathBuf>,
        #[serde(default = "default_dt")]
        dt: f64,
    },
    Synthetic(SyntheticConfig),
}

impl DataSource {
    /// Load the raw (unnormalized) dataset. Relative paths resolve against `base`.
    pub fn load(&self, x_names: &[String], u_names: &[String], base: Option<&Path>) -> Result<Dataset> {
        match self {
            DataSource::Csv { paths, dt } => {
                if paths.is_empty() {
                    return Err(Error::InvalidParameter("csv source without paths".into()));
                }
                if x_names.is_empty() {
                    return Err(Error::InvalidParameter("x_names must be given for csv sources".into()));
                }
                let parts = paths
                    .iter()
                    .map(|p| {
                        let p = match base {
                            Some(b) if p.is_relative() => b.join(p),
                            _ => p.clone(),
                        };
                        data::load_dataset(&p, x_names, u_names)?.with_dt(*dt)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Dataset::concat(&parts)
            }
            DataSource::Synthetic(cfg) => data::generate_synthetic_flight(cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BbaOverrides {
    /// Per-degree decay; `ln 2 / 90` when absent.
    pub gamma: Option<f64>,
    /// `λ = -lambda_factor · ln 3 / Th_D`.
    pub lambda_factor: f64,
}

impl Default for BbaOverrides {
    fn default() -> Self {
        Self {
            gamma: None,
            lambda_factor: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReliabilityOverrides {
    /// `δ = delta_factor · ln 3 / Th_R`.
    pub delta_factor: f64,
}

impl Default for ReliabilityOverrides {
    fn default() -> Self {
        Self { delta_factor: 40.0 }
    }
}

/// Fault scenarios to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum FaultPlan {
    /// One rectangular fault per monitored channel at the calibrated amplitude.
    #[default]
    #[serde(rename = "auto")]
    Auto,
    #[serde(untagged)]
    List(Vec<FaultSpec>),
}

/// Fault-active window as fractions of the validation record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultWindow {
    pub start: f64,
    pub stop: f64,
}

impl Default for FaultWindow {
    /// Minutes 2 to 14 of a 16-minute record.
    fn default() -> Self {
        Self {
            start: 0.125,
            stop: 0.875,
        }
    }
}

impl FaultWindow {
    pub fn bounds(&self, m: usize) -> (usize, usize) {
        let start = (self.start * m as f64).floor() as usize;
        let stop = (self.stop * m as f64).floor() as usize;
        (start.min(m), stop.min(m))
    }
}

fn default_p_f() -> f64 {
    DEFAULT_FALSE_ALARM_PROBABILITY
}

fn default_factor() -> f64 {
    3.0
}

fn default_rules() -> Vec<RuleId> {
    vec![RuleId::ReliabilityBased, RuleId::ClassicDs]
}

fn default_true() -> bool {
    true
}

/// Complete description of a design + validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: Vec<DataSource>,
    pub validation: DataSource,
    #[serde(default)]
    pub x_names: Vec<String>,
    #[serde(default)]
    pub u_names: Vec<String>,
    #[serde(default = "default_p_f")]
    pub p_f: f64,
    #[serde(default)]
    pub bba: BbaOverrides,
    #[serde(default)]
    pub reliability: ReliabilityOverrides,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub faults: FaultPlan,
    #[serde(default = "default_factor")]
    pub fault_factor: f64,
    #[serde(default)]
    pub fault_window: FaultWindow,
    #[serde(default = "default_rules")]
    pub rules: Vec<RuleId>,
    /// Also run the unfaulted validation record.
    #[serde(default = "default_true")]
    pub include_fault_free: bool,
    /// Directory that relative CSV paths resolve against; set by [`PipelineConfig::from_file`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::InvalidParameter("at least one training source is required".into()));
        }
        if !(self.p_f > 0.0 && self.p_f < 1.0) {
            return Err(Error::InvalidParameter(format!("P_F must be in (0, 1), got {}", self.p_f)));
        }
        if !(self.fault_factor > 0.0) {
            return Err(Error::InvalidParameter(format!("fault_factor must be > 0, got {}", self.fault_factor)));
        }
        let w = self.fault_window;
        if !(0.0 <= w.start && w.start < w.stop && w.stop <= 1.0) {
            return Err(Error::InvalidParameter(format!("fault window [{}, {}) not inside [0, 1]", w.start, w.stop)));
        }
        if self.rules.is_empty() {
            return Err(Error::InvalidParameter("no combination rules selected".into()));
        }
        Ok(())
    }

    /// Re-seed every synthetic source (base seed plus source index) and the solver.
    /// All synthetic sources share the plant drawn from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        for (i, src) in self.train.iter_mut().enumerate() {
            if let DataSource::Synthetic(c) = src {
                c.seed = seed.wrapping_add(i as u64);
                c.system_seed = Some(seed);
            }
        }
        if let DataSource::Synthetic(c) = &mut self.validation {
            c.seed = seed.wrapping_add(1_000);
            c.system_seed = Some(seed);
        }
        self.solver.seed = seed;
    }

    pub fn load_training(&self) -> Result<Dataset> {
        let parts = self
            .train
            .iter()
            .map(|s| s.load(&self.x_names, &self.u_names, self.base_dir.as_deref()))
            .collect::<Result<Vec<_>>>()?;
        Dataset::concat(&parts)
    }

    pub fn load_validation(&self) -> Result<Dataset> {
        self.validation.load(&self.x_names, &self.u_names, self.base_dir.as_deref())
    }
}
