//! Basic belief assignment and the control-activity reliability signal.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::detection::calibrate_threshold;
use crate::error::{Error, Result};

/// Masses over `{F_1, …, F_nx, NF}`; the last entry is No-Fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MassVector(Vec<f64>);

pub const MASS_SUM_TOL: f64 = 1e-9;

impl MassVector {
    /// Validate and wrap a mass vector.
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a frame needs at least one fault and the no-fault event, got {} masses",
                masses.len()
            )));
        }
        if let Some(bad) = masses.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::InvalidParameter(format!("mass {bad} outside [0, 1]")));
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::InvalidParameter(format!("masses sum to {sum}, not 1")));
        }
        Ok(Self(masses))
    }

    /// Wrap without validation; callers guarantee the invariants.
    pub(crate) fn from_raw(masses: Vec<f64>) -> Self {
        debug_assert!(masses.len() >= 2);
        Self(masses)
    }

    pub fn uniform(n_x: usize) -> Self {
        Self(vec![1.0 / (n_x + 1) as f64; n_x + 1])
    }

    pub fn n_x(&self) -> usize {
        self.0.len() - 1
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn fault(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn no_fault(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for MassVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Slopes of the belief assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BbaParams {
    pub gamma: f64,
    pub lambda: f64,
    pub th_d: f64,
}

impl BbaParams {
    /// `γ = ln 2 / 90` and `λ = -20 ln 3 / Th_D`.
    pub fn from_threshold(th_d: f64) -> Result<Self> {
        Self::with_factors(th_d, LN_2 / 90.0, 20.0)
    }

    /// `λ = -lambda_factor · ln 3 / Th_D`.
    pub fn with_factors(th_d: f64, gamma: f64, lambda_factor: f64) -> Result<Self> {
        let p = Self {
            gamma,
            lambda: -lambda_factor * 3f64.ln() / th_d,
            th_d,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.th_d > 0.0 && self.th_d.is_finite()) {
            return Err(Error::InvalidParameter(format!("Th_D must be > 0, got {}", self.th_d)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.lambda < 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be < 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `1 / (1 + e^{-x})`, evaluated without overflow.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Unscaled no-fault term `1 - [1 + e^{λ(|e_D| - Th_D)}]⁻¹`.
pub fn no_fault_term(e_d: f64, params: &BbaParams) -> f64 {
    logistic(params.lambda * (e_d.abs() - params.th_d))
}

/// Unscaled fault term `2 - e^{γ d}`, clamped at zero.
pub fn fault_term(d: f64, params: &BbaParams) -> f64 {
    (2.0 - (params.gamma * d).exp()).max(0.0)
}

/// Masses from angular distances (degrees) and the detection residual.
pub fn assign_bbm(d: &[f64], e_d: f64, params: &BbaParams) -> Result<MassVector> {
    let n_x = d.len();
    if n_x == 0 {
        return Err(Error::InvalidParameter("no angular distances".into()));
    }
    if let Some(bad) = d.iter().find(|v| !(0.0..=90.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!("angular distance {bad} outside [0, 90]")));
    }
    if !e_d.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite detection residual {e_d}")));
    }
    let nf = no_fault_term(e_d, params);
    let mut masses = Vec::with_capacity(n_x + 1);
    if e_d.abs() > params.th_d {
        masses.extend(d.iter().map(|&di| fault_term(di, params)));
        masses.push(nf);
        let total: f64 = masses.iter().sum();
        if total > 0.0 {
            let eta = 1.0 / total;
            masses.iter_mut().for_each(|m| *m *= eta);
        } else {
            // Every term vanished (all distances at 90° and a saturated NF term).
            masses.iter_mut().for_each(|m| *m = 1.0 / (n_x + 1) as f64);
        }
    } else {
        // 1 - nf is the sigmoid [1 + e^{λ(|e_D| - Th_D)}]⁻¹.
        let share = logistic(-params.lambda * (e_d.abs() - params.th_d)) / n_x as f64;
        masses.extend(std::iter::repeat_n(share, n_x));
        masses.push(nf);
    }
    Ok(MassVector::from_raw(masses))
}

/// Slope and threshold of the reliability sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityParams {
    pub delta: f64,
    pub th_r: f64,
}

impl ReliabilityParams {
    /// `δ = 40 ln 3 / Th_R`.
    pub fn from_threshold(th_r: f64) -> Result<Self> {
        Self::with_factor(th_r, 40.0)
    }

    pub fn with_factor(th_r: f64, delta_factor: f64) -> Result<Self> {
        let p = Self {
            delta: delta_factor * 3f64.ln() / th_r,
            th_r,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.th_r > 0.0 && self.th_r.is_finite()) {
            return Err(Error::InvalidParameter(format!("Th_R must be > 0, got {}", self.th_r)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be > 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// `Rel = 1 - [1 + e^{δ(Th_R - ‖u‖)}]⁻¹`.
pub fn reliability_from_norm(u_norm: f64, params: &ReliabilityParams) -> f64 {
    logistic(params.delta * (params.th_r - u_norm))
}

/// Reliability of an input vector `u(k)`.
pub fn reliability(u: &[f64], params: &ReliabilityParams) -> f64 {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    reliability_from_norm(norm, params)
}

/// `Th_R` from training input norms, with the same quantile rule as `Th_D`.
pub fn calibrate_reliability_threshold(u_norms: &[f64], p_f: f64) -> Result<f64> {
    calibrate_threshold(u_norms, p_f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mass_vector_validation() {
        assert!(MassVector::new(vec![0.5, 0.5]).is_ok());
        assert!(MassVector::new(vec![1.0]).is_err());
        assert!(MassVector::new(vec![0.6, 0.6]).is_err());
        assert!(MassVector::new(vec![1.2, -0.2]).is_err());
        assert_eq!(MassVector::uniform(8).as_slice(), &[1.0 / 9.0; 9]);
    }

    #[test]
    fn fault_mass_vanishes_at_ninety_degrees() {
        let p = BbaParams::from_threshold(0.24).unwrap();
        let m = assign_bbm(&[90.0, 10.0, 40.0], 0.5, &p).unwrap();
        assert_eq!(m[0], 0.0);
        assert!(m[1] > m[2]);
        assert_abs_diff_eq!(m.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn no_fault_anchor_below_threshold() {
        let th = 0.24;
        let p = BbaParams::from_threshold(th).unwrap();
        let m = assign_bbm(&[30.0; 8], 0.9 * th, &p).unwrap();
        assert_abs_diff_eq!(m.no_fault(), 0.9, epsilon = 1e-9);
        for i in 0..8 {
            assert_abs_diff_eq!(m[i], 0.1 / 8.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn deep_fault_free_sample() {
        let p = BbaParams::from_threshold(0.24).unwrap();
        let m = assign_bbm(&[45.0; 4], 0.0, &p).unwrap();
        assert!(m.no_fault() > 1.0 - 1e-8);
        // Fault share is 1 / (n_x (1 + 3^20)).
        let expected = 1.0 / (4.0 * (1.0 + 3f64.powi(20)));
        for i in 0..4 {
            assert_abs_diff_eq!(m[i], expected, epsilon = 1e-20);
        }
    }

    #[test]
    fn no_fault_anchor_above_threshold() {
        let th = 0.24;
        let p = BbaParams::from_threshold(th).unwrap();
        assert_abs_diff_eq!(no_fault_term(1.1 * th, &p), 0.1, epsilon = 1e-9);
        let m = assign_bbm(&[0.0; 3], 1.1 * th, &p).unwrap();
        // Unscaled terms 1, 1, 1, 0.1.
        assert_abs_diff_eq!(m.no_fault(), 0.1 / 3.1, epsilon = 1e-12);
        assert_abs_diff_eq!(m[0], 1.0 / 3.1, epsilon = 1e-12);
        assert_abs_diff_eq!(m.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn branch_boundary_belongs_to_fault_free_rule() {
        let p = BbaParams::from_threshold(0.3).unwrap();
        let m = assign_bbm(&[0.0, 80.0], 0.3, &p).unwrap();
        assert_eq!(m[0], m[1]);
        assert_abs_diff_eq!(m.no_fault(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(no_fault_term(0.3, &p), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_out_of_range_distances() {
        let p = BbaParams::from_threshold(0.3).unwrap();
        assert!(assign_bbm(&[91.0], 1.0, &p).is_err());
        assert!(assign_bbm(&[], 1.0, &p).is_err());
        assert!(BbaParams::from_threshold(0.0).is_err());
    }

    #[test]
    fn reliability_anchors() {
        let p = ReliabilityParams::from_threshold(2.43).unwrap();
        assert_abs_diff_eq!(reliability_from_norm(2.43, &p), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(reliability_from_norm(0.95 * 2.43, &p), 0.9, epsilon = 1e-9);
        assert_abs_diff_eq!(reliability_from_norm(1.05 * 2.43, &p), 0.1, epsilon = 1e-9);
        assert_abs_diff_eq!(reliability(&[2.43, 0.0], &p), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn reliability_threshold_calibration() {
        assert_eq!(calibrate_reliability_threshold(&[1.7; 10], 0.1).unwrap(), 1.7);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let th = calibrate_reliability_threshold(&v, 0.1).unwrap();
        assert!((th - 0.9).abs() < 0.02);
        assert!(calibrate_reliability_threshold(&[], 0.1).is_err());
    }
}
