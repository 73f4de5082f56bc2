//! Fault detection through a right-null-space versor of the training matrix.
//!
//! The versor `v` is the right singular vector of the normalized training
//! matrix `Z` for its smallest singular value, so `Z v ≈ 0` on fault-free
//! data. The detection residual is `e_D(k) = z(k)ᵀ v`; a fault on sensor `i`
//! with amplitude `f` shifts it by `v_i f`.

use nalgebra::{DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_FALSE_ALARM_PROBABILITY: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub v: Vec<f64>,
    /// `None` until [`DetectionModel::with_threshold`] is applied.
    pub th_d: Option<f64>,
    pub p_f: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl DetectionModel {
    pub fn versor(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.v)
    }

    pub fn threshold(&self) -> Result<f64> {
        self.th_d
            .ok_or_else(|| Error::InvalidParameter("detection threshold has not been calibrated".into()))
    }

    /// Calibrate `Th_D` on the detection residuals of `train`.
    pub fn with_threshold(mut self, train: &Dataset, p_f: f64) -> Result<Self> {
        let abs: Vec<f64> = (0..train.m())
            .map(|k| detection_residual(train.samples().row(k).transpose().as_slice(), &self).map(f64::abs))
            .collect::<Result<_>>()?;
        self.th_d = Some(calibrate_threshold(&abs, p_f)?);
        self.p_f = p_f;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detection {
    Normal,
    FaultDetected,
}

/// Right singular vector for the smallest singular value of the training matrix.
pub fn fit_detection_versor(train: &Dataset) -> Result<DetectionModel> {
    let z = train.samples();
    let svd = SVD::try_new(z.clone(), false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Svd(format!("no convergence on a {}x{} training matrix", z.nrows(), z.ncols())))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Svd("right singular vectors missing".into()))?;
    let (imin, &sigma_min) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Svd("empty singular value set".into()))?;
    let sigma_max = svd.singular_values.max();
    if !sigma_min.is_finite() || !sigma_max.is_finite() {
        return Err(Error::Svd(format!(
            "non-finite singular values (sigma_max = {sigma_max}, sigma_min = {sigma_min})"
        )));
    }
    let mut v: Vec<f64> = v_t.row(imin).iter().copied().collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    // Sign convention: first nonzero component positive.
    let tiny = 1e-14;
    if let Some(first) = v.iter().find(|x| x.abs() > tiny) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(DetectionModel {
        v,
        th_d: None,
        p_f: DEFAULT_FALSE_ALARM_PROBABILITY,
        sigma_min,
        sigma_max,
    })
}

/// `e_D = zᵀ v`.
pub fn detection_residual(z: &[f64], model: &DetectionModel) -> Result<f64> {
    if z.len() != model.v.len() {
        return Err(Error::DimensionMismatch {
            expected: model.v.len(),
            got: z.len(),
        });
    }
    Ok(z.iter().zip(&model.v).map(|(a, b)| a * b).sum())
}

/// Smallest observed value whose empirical CDF reaches `1 - p_f`.
///
/// The empirical CDF is `#{samples <= t} / N`; the result is the
/// `⌈(1 - p_f) N⌉`-th order statistic.
pub fn calibrate_threshold(values: &[f64], p_f: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(p_f > 0.0 && p_f < 1.0) {
        return Err(Error::InvalidParameter(format!("false-alarm probability must be in (0, 1), got {p_f}")));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidParameter(format!("calibration values must be finite and >= 0, got {bad}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let target = 1.0 - p_f;
    let reaches = |count: usize| count as f64 / n as f64 >= target;
    // Guess from the ceiling, then settle the exact boundary with the same comparison.
    let mut count = ((target * n as f64).ceil() as usize).clamp(1, n);
    while count > 1 && reaches(count - 1) {
        count -= 1;
    }
    while !reaches(count) && count < n {
        count += 1;
    }
    Ok(sorted[count - 1])
}

/// `|e_D| > Th_D` is a detection; equality is still normal.
pub fn detect(e_d: f64, th_d: f64) -> Detection {
    if e_d.abs() > th_d {
        Detection::FaultDetected
    } else {
        Detection::Normal
    }
}
