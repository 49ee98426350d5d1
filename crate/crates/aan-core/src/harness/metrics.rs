//! Per-phase trial metrics.
//!
//! The exercise alternates extension (first half of each cycle) and flexion
//! (second half); samples are pooled per phase across all cycles. The human
//! torque ratio divides the RMS estimated human torque by the summed RMS of
//! human plus exoskeleton torque.

use super::record::TrialRecord;
use crate::config::fmt_f64;
use crate::{Error, Result};

/// Statistics of one movement phase pooled over all cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMetrics {
    /// Human torque ratio R_h in [0, 1].
    pub torque_ratio: f64,
    /// Tracking-error quartiles in rad.
    pub error_median: f64,
    pub error_q1: f64,
    pub error_q3: f64,
    /// Median of the absolute tracking error in rad.
    pub abs_error_median: f64,
    /// RMS tracking error in rad.
    pub rms_error: f64,
    /// RMS mode likelihoods.
    pub rms_assist: f64,
    pub rms_safety: f64,
    pub samples: usize,
}

/// Metrics of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub extension: PhaseMetrics,
    pub flexion: PhaseMetrics,
    /// RMS tracking error over the whole trial, rad.
    pub rms_error: f64,
}

impl TrialMetrics {
    /// Key-value summary written next to the trial CSV.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let mut phase = |name: &str, m: &PhaseMetrics| {
            let mut line = |k: &str, v: f64| {
                out.push_str(&format!("{name}.{k} = {}\n", fmt_f64(v)));
            };
            line("torque_ratio", m.torque_ratio);
            line("error_median", m.error_median);
            line("error_q1", m.error_q1);
            line("error_q3", m.error_q3);
            line("abs_error_median", m.abs_error_median);
            line("rms_error", m.rms_error);
            line("rms_mu_a", m.rms_assist);
            line("rms_mu_s", m.rms_safety);
            out.push_str(&format!("{name}.samples = {}\n", m.samples));
        };
        phase("extension", &self.extension);
        phase("flexion", &self.flexion);
        out.push_str(&format!("trial.rms_error = {}\n", fmt_f64(self.rms_error)));
        out
    }
}

/// Linear-interpolation percentile of a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let mut sq = 0.0;
    let mut n = 0usize;
    for v in values {
        sq += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sq / n as f64).sqrt()
    }
}

fn phase_metrics(record: &TrialRecord, indices: &[usize]) -> PhaseMetrics {
    let rows = &record.rows;
    let mut errors: Vec<f64> = indices.iter().map(|&i| rows[i].error()).collect();
    errors.sort_by(f64::total_cmp);
    let mut abs_errors: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    abs_errors.sort_by(f64::total_cmp);
    let rms_h = rms(indices.iter().map(|&i| rows[i].tau_h_hat));
    let rms_e = rms(indices.iter().map(|&i| rows[i].tau_e));
    let denominator = rms_h + rms_e;
    PhaseMetrics {
        torque_ratio: if denominator > 0.0 {
            rms_h / denominator
        } else {
            0.0
        },
        error_median: percentile(&errors, 0.5),
        error_q1: percentile(&errors, 0.25),
        error_q3: percentile(&errors, 0.75),
        abs_error_median: percentile(&abs_errors, 0.5),
        rms_error: rms(indices.iter().map(|&i| rows[i].error())),
        rms_assist: rms(indices.iter().map(|&i| rows[i].mu_assist)),
        rms_safety: rms(indices.iter().map(|&i| rows[i].mu_safety)),
        samples: indices.len(),
    }
}

/// Pool the extension and flexion phases of every cycle and compute the
/// per-phase statistics.
pub fn compute_metrics(record: &TrialRecord) -> Result<TrialMetrics> {
    let cycle = record.meta.cycle;
    if !(cycle > 0.0) {
        return Err(Error::Config("metrics need a positive cycle period".into()));
    }
    let half = cycle / 2.0;
    let mut extension = Vec::new();
    let mut flexion = Vec::new();
    for (i, row) in record.rows.iter().enumerate() {
        let phase = row.t.rem_euclid(cycle);
        if phase < half {
            extension.push(i);
        } else {
            flexion.push(i);
        }
    }
    if extension.is_empty() || flexion.is_empty() {
        return Err(Error::Config(format!(
            "record too short to cover both phases of a {cycle} s cycle"
        )));
    }
    let all_rms = rms(record.rows.iter().map(|r| r.error()));
    Ok(TrialMetrics {
        extension: phase_metrics(record, &extension),
        flexion: phase_metrics(record, &flexion),
        rms_error: all_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::super::record::{TrialMeta, TrialRow};
    use super::*;
    use approx::assert_relative_eq;

    fn row(t: f64) -> TrialRow {
        TrialRow {
            t,
            theta_r: 0.0,
            theta: 0.0,
            theta_dot: 0.0,
            tau_e: 0.0,
            tau_h_true: 0.0,
            tau_h_hat: 0.0,
            ch1: 0.0,
            ch2: 0.0,
            mu_assist: 0.0,
            mu_safety: 0.0,
            mode: 1.0,
            stage_cost: 0.0,
            augmented_cost: 0.0,
        }
    }

    fn record(rows: Vec<TrialRow>) -> TrialRecord {
        TrialRecord {
            rows,
            meta: TrialMeta::imported(500.0, 4.0),
        }
    }

    #[test]
    fn zero_human_torque_gives_zero_ratio() {
        let rows: Vec<TrialRow> = (0..4000)
            .map(|i| {
                let mut r = row(i as f64 * 0.002);
                r.tau_e = 5.0;
                r
            })
            .collect();
        let metrics = compute_metrics(&record(rows)).unwrap();
        assert_eq!(metrics.extension.torque_ratio, 0.0);
        assert_eq!(metrics.flexion.torque_ratio, 0.0);
    }

    #[test]
    fn equal_rms_torques_split_the_ratio() {
        let rows: Vec<TrialRow> = (0..4000)
            .map(|i| {
                let mut r = row(i as f64 * 0.002);
                r.tau_e = 3.0;
                r.tau_h_hat = -3.0;
                r
            })
            .collect();
        let metrics = compute_metrics(&record(rows)).unwrap();
        assert_relative_eq!(metrics.extension.torque_ratio, 0.5);
        assert_relative_eq!(metrics.flexion.torque_ratio, 0.5);
    }

    #[test]
    fn phases_pool_across_cycles() {
        // Error +e in every extension phase, -2e in every flexion phase.
        let rows: Vec<TrialRow> = (0..8000)
            .map(|i| {
                let t = i as f64 * 0.002;
                let mut r = row(t);
                r.theta_r = if t.rem_euclid(4.0) < 2.0 { 0.1 } else { -0.2 };
                r
            })
            .collect();
        let metrics = compute_metrics(&record(rows)).unwrap();
        assert_relative_eq!(metrics.extension.error_median, 0.1);
        assert_relative_eq!(metrics.flexion.error_median, -0.2);
        assert_relative_eq!(metrics.extension.abs_error_median, 0.1);
        assert_relative_eq!(metrics.flexion.abs_error_median, 0.2);
        assert_eq!(metrics.extension.samples, 4000);
        assert_eq!(metrics.flexion.samples, 4000);
        assert_relative_eq!(
            metrics.rms_error,
            ((0.1f64.powi(2) + 0.2f64.powi(2)) / 2.0).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn quartiles_use_linear_interpolation() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(percentile(&sorted, 0.5), 2.5);
        assert_relative_eq!(percentile(&sorted, 0.25), 1.75);
        assert_relative_eq!(percentile(&sorted, 0.75), 3.25);
        assert_relative_eq!(percentile(&sorted, 0.0), 1.0);
        assert_relative_eq!(percentile(&sorted, 1.0), 4.0);
    }

    #[test]
    fn short_records_are_rejected() {
        let rows: Vec<TrialRow> = (0..100).map(|i| row(i as f64 * 0.002)).collect();
        assert!(compute_metrics(&record(rows)).is_err());
    }
}
