//! Detection and isolation rates.

use crate::data::FaultSpec;
use crate::error::{Error, Result};
use crate::fusion::{IsolationDecision, Verdict};

/// Percentage of fault-active samples flagged by the detector.
pub fn compute_tdr(detections: &[bool], fault_mask: &[bool]) -> Result<f64> {
    if detections.len() != fault_mask.len() {
        return Err(Error::DimensionMismatch {
            expected: fault_mask.len(),
            got: detections.len(),
        });
    }
    let active = fault_mask.iter().filter(|f| **f).count();
    if active == 0 {
        return Err(Error::NoFaultySamples);
    }
    let hits = detections.iter().zip(fault_mask).filter(|(d, f)| **d && **f).count();
    Ok(100.0 * hits as f64 / active as f64)
}

/// Percentage of fault-active samples attributed to the faulty sensor.
pub fn compute_tir(decisions: &[IsolationDecision], fault: &FaultSpec) -> Result<f64> {
    if fault.is_empty() {
        return Err(Error::NoFaultySamples);
    }
    if fault.stop > decisions.len() {
        return Err(Error::DimensionMismatch {
            expected: fault.stop,
            got: decisions.len(),
        });
    }
    let correct = decisions[fault.start..fault.stop]
        .iter()
        .filter(|d| d.verdict == Verdict::Fault(fault.channel))
        .count();
    Ok(100.0 * correct as f64 / fault.len() as f64)
}

/// Percentage of fault-free samples whose verdict is not `NoFault`.
///
/// Samples inside the fault interval are excluded; `None` when no fault-free sample remains.
pub fn false_alarm_rate(decisions: &[IsolationDecision], fault: Option<&FaultSpec>) -> Option<f64> {
    let mut total = 0usize;
    let mut alarms = 0usize;
    for (k, d) in decisions.iter().enumerate() {
        if fault.is_some_and(|f| f.is_active(k)) {
            continue;
        }
        total += 1;
        if d.verdict != Verdict::NoFault {
            alarms += 1;
        }
    }
    (total > 0).then(|| 100.0 * alarms as f64 / total as f64)
}

/// Percentage of fault-free samples where the raw detector fires.
pub fn detection_false_alarm_rate(detections: &[bool], fault: Option<&FaultSpec>) -> Option<f64> {
    let mut total = 0usize;
    let mut alarms = 0usize;
    for (k, d) in detections.iter().enumerate() {
        if fault.is_some_and(|f| f.is_active(k)) {
            continue;
        }
        total += 1;
        alarms += usize::from(*d);
    }
    (total > 0).then(|| 100.0 * alarms as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(v: Verdict) -> IsolationDecision {
        IsolationDecision {
            verdict: v,
            winning_mass: 0.5,
        }
    }

    #[test]
    fn tdr_cases() {
        let mask = [false, true, true, true, true, false];
        assert_eq!(compute_tdr(&mask, &mask).unwrap(), 100.0);
        let inv: Vec<bool> = mask.iter().map(|m| !m).collect();
        assert_eq!(compute_tdr(&inv, &mask).unwrap(), 0.0);
        let det = [true, true, false, true, true, true];
        assert_eq!(compute_tdr(&det, &mask).unwrap(), 75.0);
        assert!(compute_tdr(&[false; 3], &[false; 3]).is_err());
        assert!(compute_tdr(&[false; 2], &[true; 3]).is_err());
    }

    #[test]
    fn tir_cases() {
        let fault = FaultSpec {
            channel: 2,
            amplitude: 1.0,
            start: 2,
            stop: 6,
        };
        let perfect: Vec<_> = (0..8)
            .map(|k| dec(if fault.is_active(k) { Verdict::Fault(2) } else { Verdict::NoFault }))
            .collect();
        assert_eq!(compute_tir(&perfect, &fault).unwrap(), 100.0);
        assert_eq!(compute_tir(&[dec(Verdict::NoFault); 8], &fault).unwrap(), 0.0);
        let mut half = perfect.clone();
        half[2] = dec(Verdict::Fault(0));
        half[3] = dec(Verdict::NoFault);
        assert_eq!(compute_tir(&half, &fault).unwrap(), 50.0);
        let empty = FaultSpec { stop: 2, ..fault };
        assert!(compute_tir(&perfect, &empty).is_err());
    }

    #[test]
    fn rates_ignore_fault_free_padding() {
        let fault = FaultSpec {
            channel: 0,
            amplitude: 1.0,
            start: 0,
            stop: 4,
        };
        let short: Vec<_> = [0, 0, 1, 0].iter().map(|&c| dec(if c == 0 { Verdict::Fault(0) } else { Verdict::NoFault })).collect();
        let mut padded = short.clone();
        padded.extend(vec![dec(Verdict::NoFault); 100]);
        assert_eq!(compute_tir(&short, &fault).unwrap(), compute_tir(&padded, &fault).unwrap());
        assert_eq!(false_alarm_rate(&padded, Some(&fault)), Some(0.0));
        assert_eq!(false_alarm_rate(&short, Some(&fault)), None);
        assert_eq!(false_alarm_rate(&short, None), Some(75.0));
        assert_eq!(detection_false_alarm_rate(&[true, false, false, false], None), Some(25.0));
    }
}
