//! Recursive evidence filter.
//!
//! The running posterior is combined with each new mass vector by
//! Dempster's rule. The reliability-based rule then moves the posterior only
//! part of the way toward the combined mass, proportionally to `Rel(k)`, and
//! every update ends with a floor-and-renormalize desaturation step so that
//! no hypothesis can lock at 0 or 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::MassVector;

/// Lower bound applied to every mass before renormalization.
pub const MASS_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "RB")]
    ReliabilityBased,
    #[serde(rename = "DS")]
    ClassicDs,
    #[serde(untagged)]
    Plugin(String),
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleId::ReliabilityBased => f.write_str("RB"),
            RuleId::ClassicDs => f.write_str("DS"),
            RuleId::Plugin(name) => f.write_str(name),
        }
    }
}

impl std::str::FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RB" | "rb" => Ok(RuleId::ReliabilityBased),
            "DS" | "ds" => Ok(RuleId::ClassicDs),
            "" => Err(Error::InvalidParameter("empty rule id".into())),
            other => Ok(RuleId::Plugin(other.to_owned())),
        }
    }
}

/// A recursive update rule: `(posterior, evidence, reliability) -> posterior`.
///
/// Implementations must return a valid [`MassVector`] over the same frame.
pub trait CombinationRule: Send + Sync {
    fn id(&self) -> RuleId;

    fn combine(&self, posterior: &MassVector, evidence: &MassVector, rel: f64) -> Result<MassVector>;
}

/// Reliability-weighted Dempster-Shafer rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReliabilityBased;

/// Plain recursive Dempster-Shafer rule; reliability is ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassicDs;

impl CombinationRule for ReliabilityBased {
    fn id(&self) -> RuleId {
        RuleId::ReliabilityBased
    }

    fn combine(&self, posterior: &MassVector, evidence: &MassVector, rel: f64) -> Result<MassVector> {
        let prior = ds_combine(posterior, evidence)?;
        Ok(desaturate(&reliability_blend(posterior, &prior, rel)?))
    }
}

impl CombinationRule for ClassicDs {
    fn id(&self) -> RuleId {
        RuleId::ClassicDs
    }

    fn combine(&self, posterior: &MassVector, evidence: &MassVector, _rel: f64) -> Result<MassVector> {
        Ok(desaturate(&ds_combine(posterior, evidence)?))
    }
}

/// Look up a built-in rule.
pub fn builtin_rule(id: &RuleId) -> Option<Box<dyn CombinationRule>> {
    match id {
        RuleId::ReliabilityBased => Some(Box::new(ReliabilityBased)),
        RuleId::ClassicDs => Some(Box::new(ClassicDs)),
        RuleId::Plugin(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionState {
    pub posterior: MassVector,
    pub rule: RuleId,
    pub step_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    NoFault,
    Fault(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolationDecision {
    pub verdict: Verdict,
    pub winning_mass: f64,
}

/// Uniform posterior over `n_x + 1` events.
pub fn init_state(n_x: usize, rule: RuleId) -> Result<FusionState> {
    if n_x == 0 {
        return Err(Error::InvalidParameter("n_x must be >= 1".into()));
    }
    Ok(FusionState {
        posterior: MassVector::uniform(n_x),
        rule,
        step_count: 0,
    })
}

fn same_frame(a: &MassVector, b: &MassVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Dempster's rule on a frame of singletons: normalized elementwise product.
pub fn ds_combine(m1: &MassVector, m2: &MassVector) -> Result<MassVector> {
    Ok(ds_combine_with_agreement(m1, m2)?.0)
}

/// As [`ds_combine`], also returning `H`, the non-conflicting mass.
pub fn ds_combine_with_agreement(m1: &MassVector, m2: &MassVector) -> Result<(MassVector, f64)> {
    same_frame(m1, m2)?;
    let prod: Vec<f64> = m1.as_slice().iter().zip(m2.as_slice()).map(|(a, b)| a * b).collect();
    let h: f64 = prod.iter().sum();
    if !(h > 0.0) {
        return Err(Error::TotalConflict);
    }
    Ok((MassVector::from_raw(prod.into_iter().map(|p| p / h).collect()), h))
}

/// `posterior + (prior - posterior) · rel`, before desaturation.
pub fn reliability_blend(posterior: &MassVector, prior: &MassVector, rel: f64) -> Result<MassVector> {
    same_frame(posterior, prior)?;
    if !(0.0..=1.0).contains(&rel) {
        return Err(Error::InvalidParameter(format!("reliability {rel} outside [0, 1]")));
    }
    Ok(MassVector::from_raw(
        posterior
            .as_slice()
            .iter()
            .zip(prior.as_slice())
            .map(|(p, q)| p + (q - p) * rel)
            .collect(),
    ))
}

/// Floor every mass at [`MASS_FLOOR`] and renormalize.
pub fn desaturate(m: &MassVector) -> MassVector {
    let floored: Vec<f64> = m.as_slice().iter().map(|v| v.max(MASS_FLOOR)).collect();
    let chi: f64 = floored.iter().sum();
    MassVector::from_raw(floored.into_iter().map(|v| v / chi).collect())
}

fn advance(state: &FusionState, rule: &dyn CombinationRule, evidence: &MassVector, rel: f64) -> Result<FusionState> {
    same_frame(&state.posterior, evidence)?;
    Ok(FusionState {
        posterior: rule.combine(&state.posterior, evidence, rel)?,
        rule: state.rule.clone(),
        step_count: state.step_count + 1,
    })
}

/// One reliability-based step. On error the caller keeps the old state.
pub fn rb_update(state: &FusionState, evidence: &MassVector, rel: f64) -> Result<FusionState> {
    advance(state, &ReliabilityBased, evidence, rel)
}

/// One classic Dempster-Shafer step (desaturated).
pub fn classic_update(state: &FusionState, evidence: &MassVector) -> Result<FusionState> {
    advance(state, &ClassicDs, evidence, 1.0)
}

impl FusionState {
    /// Apply `rule` in place. A failed combination leaves the posterior untouched.
    pub fn step(&mut self, rule: &dyn CombinationRule, evidence: &MassVector, rel: f64) -> Result<()> {
        let next = advance(self, rule, evidence, rel)?;
        *self = next;
        Ok(())
    }
}

/// Most probable event. No-Fault wins ties; among faults the lowest index wins.
pub fn isolate(state: &FusionState) -> IsolationDecision {
    let m = &state.posterior;
    let n_x = m.n_x();
    let mut best = Verdict::NoFault;
    let mut best_mass = m.no_fault();
    for i in 0..n_x {
        if m[i] > best_mass {
            best = Verdict::Fault(i);
            best_mass = m[i];
        }
    }
    IsolationDecision {
        verdict: best,
        winning_mass: best_mass,
    }
}
