//! Navigation metrics over episode outcomes: SR, SPL, efficiency, ECE and
//! statistics on the validate-or-re-propose loop.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::policy::{DecisionRecord, VerdictKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no outcomes to aggregate")]
    EmptyInput,
    #[error("outcome {index} has non-positive optimal path length {value}")]
    NonpositiveOptimal { index: usize, value: f64 },
    #[error("confidence {value} of outcome {index} is outside [0,1]")]
    InvalidConfidence { index: usize, value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// Meters walked.
    pub path_length: f64,
    /// Geodesic distance to the nearest goal-satisfying cell, in meters.
    pub optimal_path_length: f64,
    pub decisions: u32,
    pub confidence: f64,
}

fn check_optimal(outcomes: &[EpisodeOutcome]) -> Result<(), MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for (index, o) in outcomes.iter().enumerate() {
        if !(o.optimal_path_length > 0.0) {
            return Err(MetricsError::NonpositiveOptimal {
                index,
                value: o.optimal_path_length,
            });
        }
    }
    Ok(())
}

/// Percentage of successful outcomes.
pub fn success_rate(outcomes: &[EpisodeOutcome]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = outcomes.iter().filter(|o| o.success).count();
    Ok(100.0 * hits as f64 / outcomes.len() as f64)
}

/// Path-length ratio `p / max(p, l)` of one outcome.
pub fn path_ratio(o: &EpisodeOutcome) -> f64 {
    o.optimal_path_length / o.optimal_path_length.max(o.path_length)
}

/// One outcome's SPL term: the path ratio if it succeeded, else 0.
pub fn spl_contribution(o: &EpisodeOutcome) -> f64 {
    if o.success {
        path_ratio(o)
    } else {
        0.0
    }
}

pub fn spl(outcomes: &[EpisodeOutcome]) -> Result<f64, MetricsError> {
    check_optimal(outcomes)?;
    let sum: f64 = outcomes.iter().map(spl_contribution).sum();
    Ok(100.0 * sum / outcomes.len() as f64)
}

/// Mean path ratio regardless of success, as a percentage.
pub fn efficiency(outcomes: &[EpisodeOutcome]) -> Result<f64, MetricsError> {
    check_optimal(outcomes)?;
    let sum: f64 = outcomes.iter().map(path_ratio).sum();
    Ok(100.0 * sum / outcomes.len() as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    /// Fraction in [0,1].
    pub ece: f64,
    /// `ece` × 100.
    pub ece_percent: f64,
}

/// Expected calibration error over equal-width confidence bins; the top bin
/// is closed so confidence 1.0 lands in it.
pub fn ece(outcomes: &[EpisodeOutcome], bins: usize) -> Result<CalibrationReport, MetricsError> {
    if outcomes.is_empty() || bins == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let mut acc = vec![(0usize, 0.0f64, 0usize); bins];
    for (index, o) in outcomes.iter().enumerate() {
        if !(0.0..=1.0).contains(&o.confidence) {
            return Err(MetricsError::InvalidConfidence {
                index,
                value: o.confidence,
            });
        }
        let b = ((o.confidence * bins as f64).floor() as usize).min(bins - 1);
        acc[b].0 += 1;
        acc[b].1 += o.confidence;
        acc[b].2 += o.success as usize;
    }
    let n = outcomes.len() as f64;
    let mut total = 0.0;
    let bins_out = acc
        .iter()
        .enumerate()
        .map(|(i, &(count, conf_sum, correct))| {
            let mut bin = CalibrationBin {
                lower: i as f64 / bins as f64,
                upper: (i + 1) as f64 / bins as f64,
                count,
                ..Default::default()
            };
            if count > 0 {
                bin.mean_confidence = conf_sum / count as f64;
                bin.accuracy = correct as f64 / count as f64;
                total += count as f64 / n * (bin.accuracy - bin.mean_confidence).abs();
            }
            bin
        })
        .collect();
    Ok(CalibrationReport {
        bins: bins_out,
        ece: total,
        ece_percent: 100.0 * total,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconsiderationStats {
    /// Executed memory actions with known ground truth.
    pub memory_actions: usize,
    pub confirmed: usize,
    pub confirmed_correct: usize,
    pub forced: usize,
    pub forced_incorrect: usize,
    /// Memory actions executed without validation.
    pub unvalidated: usize,
    pub unvalidated_correct: usize,
    /// Correct fraction among confirmed executions.
    pub confirm_precision: Option<f64>,
    /// Incorrect fraction among forced executions.
    pub forced_error_rate: Option<f64>,
    /// Correct fraction among all executed memory actions.
    pub memory_precision: f64,
}

/// Precision statistics of executed memory actions.
pub fn reconsideration_stats<'a>(
    records: impl IntoIterator<Item = &'a DecisionRecord>,
) -> Result<ReconsiderationStats, MetricsError> {
    let mut s = ReconsiderationStats::default();
    let mut correct_total = 0;
    for r in records {
        let Some(correct) = r.correct else { continue };
        s.memory_actions += 1;
        correct_total += correct as usize;
        if r.forced {
            s.forced += 1;
            s.forced_incorrect += !correct as usize;
        } else if r.verdicts.last().is_some_and(|v| v.kind == VerdictKind::Confirm) {
            s.confirmed += 1;
            s.confirmed_correct += correct as usize;
        } else {
            s.unvalidated += 1;
            s.unvalidated_correct += correct as usize;
        }
    }
    if s.memory_actions == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    s.confirm_precision = ratio(s.confirmed_correct, s.confirmed);
    s.forced_error_rate = ratio(s.forced_incorrect, s.forced);
    s.memory_precision = correct_total as f64 / s.memory_actions as f64;
    Ok(s)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Welch's unpaired t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sa * sa / na, sb * sb / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        return Some(TTest {
            t: if ma == mb { 0.0 } else { f64::INFINITY.copysign(ma - mb) },
            df: na + nb - 2.0,
            p_value: p,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(TTest {
        t,
        df,
        p_value: 2.0 * (1.0 - dist.cdf(t.abs())),
    })
}
