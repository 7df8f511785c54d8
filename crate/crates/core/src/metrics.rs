//! Evaluation metrics: ON/OFF confusion counts, the derived scores, and RMSE
//! on power. An appliance counts as ON whenever its power exceeds the
//! threshold, regardless of which ON state it is in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PowerSeries;

/// Default ON threshold (watts); sits between OFF-state leakage and the
/// lowest real ON level of common appliances.
pub const DEFAULT_ON_THRESHOLD_W: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when precision or recall had a zero denominator and was defined
    /// as 0 by convention.
    pub degenerate: bool,
}

/// Per-sample ON/OFF binarization of both series, counted over all samples.
pub fn onoff_confusion(
    true_power: &PowerSeries,
    est_power: &PowerSeries,
    on_threshold: f64,
) -> Result<Confusion> {
    if true_power.len() != est_power.len() {
        return Err(Error::LengthMismatch {
            what: "onoff_confusion",
            left: true_power.len(),
            right: est_power.len(),
        });
    }
    let mut c = Confusion {
        true_pos: 0,
        true_neg: 0,
        false_pos: 0,
        false_neg: 0,
    };
    for (&t, &e) in true_power.samples().iter().zip(est_power.samples()) {
        match (t > on_threshold, e > on_threshold) {
            (true, true) => c.true_pos += 1,
            (false, false) => c.true_neg += 1,
            (false, true) => c.false_pos += 1,
            (true, false) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Accuracy, precision, recall, and f1 from confusion counts.
///
/// Zero-denominator precision/recall are 0 by convention and flagged.
pub fn scores(c: &Confusion) -> Result<Scores> {
    if c.total() == 0 {
        return Err(Error::EmptyConfusion);
    }
    let tp = c.true_pos as f64;
    let accuracy = (tp + c.true_neg as f64) / c.total() as f64;
    let mut degenerate = false;
    let precision = if c.true_pos + c.false_pos > 0 {
        tp / (tp + c.false_pos as f64)
    } else {
        degenerate = true;
        0.0
    };
    let recall = if c.true_pos + c.false_neg > 0 {
        tp / (tp + c.false_neg as f64)
    } else {
        degenerate = true;
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Scores {
        accuracy,
        precision,
        recall,
        f1,
        degenerate,
    })
}

/// Root mean square error between two equal-length series (watts).
pub fn rmse(true_power: &PowerSeries, est_power: &PowerSeries) -> Result<f64> {
    if true_power.len() != est_power.len() {
        return Err(Error::LengthMismatch {
            what: "rmse",
            left: true_power.len(),
            right: est_power.len(),
        });
    }
    let n = true_power.len() as f64;
    let sum_sq: f64 = true_power
        .samples()
        .iter()
        .zip(est_power.samples())
        .map(|(&p, &q)| (p - q) * (p - q))
        .sum();
    Ok((sum_sq / n).sqrt())
}

/// Unweighted mean of per-appliance scores, for summary rows.
pub fn macro_average(per_appliance: &[Scores]) -> Option<Scores> {
    if per_appliance.is_empty() {
        return None;
    }
    let n = per_appliance.len() as f64;
    Some(Scores {
        accuracy: per_appliance.iter().map(|s| s.accuracy).sum::<f64>() / n,
        precision: per_appliance.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: per_appliance.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: per_appliance.iter().map(|s| s.f1).sum::<f64>() / n,
        degenerate: per_appliance.iter().any(|s| s.degenerate),
    })
}
