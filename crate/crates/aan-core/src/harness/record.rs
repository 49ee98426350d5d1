//! Trial records and their on-disk forms: sample CSV, metrics summary, and
//! the run manifest.

use super::metrics::TrialMetrics;
use crate::config::fmt_f64;
use crate::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Fixed column order of the trial CSV.
pub const CSV_COLUMNS: [&str; 14] = [
    "t",
    "theta_r",
    "theta",
    "theta_dot",
    "tau_e",
    "tau_h_true",
    "tau_h_hat",
    "ch1",
    "ch2",
    "mu_a",
    "mu_s",
    "m",
    "stage_cost",
    "augmented_cost",
];

/// One control-period sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRow {
    pub t: f64,
    pub theta_r: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub tau_e: f64,
    pub tau_h_true: f64,
    pub tau_h_hat: f64,
    pub ch1: f64,
    pub ch2: f64,
    pub mu_assist: f64,
    pub mu_safety: f64,
    pub mode: f64,
    pub stage_cost: f64,
    pub augmented_cost: f64,
}

impl TrialRow {
    fn values(&self) -> [f64; 14] {
        [
            self.t,
            self.theta_r,
            self.theta,
            self.theta_dot,
            self.tau_e,
            self.tau_h_true,
            self.tau_h_hat,
            self.ch1,
            self.ch2,
            self.mu_assist,
            self.mu_safety,
            self.mode,
            self.stage_cost,
            self.augmented_cost,
        ]
    }

    fn from_values(v: [f64; 14]) -> Self {
        Self {
            t: v[0],
            theta_r: v[1],
            theta: v[2],
            theta_dot: v[3],
            tau_e: v[4],
            tau_h_true: v[5],
            tau_h_hat: v[6],
            ch1: v[7],
            ch2: v[8],
            mu_assist: v[9],
            mu_safety: v[10],
            mode: v[11],
            stage_cost: v[12],
            augmented_cost: v[13],
        }
    }

    /// Tracking error theta_r - theta.
    pub fn error(&self) -> f64 {
        self.theta_r - self.theta
    }
}

/// Run metadata carried alongside the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMeta {
    pub subject: String,
    pub script: String,
    pub seed: u64,
    pub config_hash: String,
    pub sample_rate: f64,
    /// Exercise cycle period in seconds; metrics pool phases across cycles.
    pub cycle: f64,
    pub duration: f64,
    /// Control steps spent with the reference frozen by adaptation.
    pub frozen_steps: usize,
    /// Control steps whose solve ended with a stalled line search.
    pub degraded_steps: usize,
    /// Accepted inner iterations that increased the augmented cost.
    pub descent_violations: usize,
    pub max_constraint_violation: f64,
}

impl TrialMeta {
    /// Minimal metadata for records imported from bare CSV.
    pub fn imported(sample_rate: f64, cycle: f64) -> Self {
        Self {
            subject: "imported".into(),
            script: "imported".into(),
            seed: 0,
            config_hash: String::new(),
            sample_rate,
            cycle,
            duration: 0.0,
            frozen_steps: 0,
            degraded_steps: 0,
            descent_violations: 0,
            max_constraint_violation: 0.0,
        }
    }
}

/// Full time series of one closed-loop trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub rows: Vec<TrialRow>,
    pub meta: TrialMeta,
}

impl TrialRecord {
    pub fn csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 160);
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        for row in &self.rows {
            let values = row.values();
            for (i, v) in values.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn manifest(&self) -> String {
        let meta = &self.meta;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("run.version", env!("CARGO_PKG_VERSION").to_string());
        line("run.subject", meta.subject.clone());
        line("run.script", meta.script.clone());
        line("run.seed", meta.seed.to_string());
        line("run.config_hash", meta.config_hash.clone());
        line("run.sample_rate", fmt_f64(meta.sample_rate));
        line("run.cycle", fmt_f64(meta.cycle));
        line("run.duration", fmt_f64(meta.duration));
        line("run.samples", self.rows.len().to_string());
        line("run.frozen_steps", meta.frozen_steps.to_string());
        line("run.degraded_steps", meta.degraded_steps.to_string());
        line(
            "run.descent_violations",
            meta.descent_violations.to_string(),
        );
        line(
            "run.max_constraint_violation",
            fmt_f64(meta.max_constraint_violation),
        );
        out
    }
}

/// Files written for one exported trial.
#[derive(Debug, Clone)]
pub struct ExportPaths {
    pub csv: PathBuf,
    pub metrics: PathBuf,
    pub manifest: PathBuf,
}

/// Write the trial CSV, the metrics summary, and the run manifest under
/// `dir` with the given file stem.
pub fn export(
    record: &TrialRecord,
    metrics: &TrialMetrics,
    dir: &Path,
    stem: &str,
) -> Result<ExportPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let paths = ExportPaths {
        csv: dir.join(format!("{stem}.csv")),
        metrics: dir.join(format!("{stem}_metrics.txt")),
        manifest: dir.join(format!("{stem}_manifest.txt")),
    };
    write_file(&paths.csv, &record.csv())?;
    write_file(&paths.metrics, &metrics.summary())?;
    write_file(&paths.manifest, &record.manifest())?;
    Ok(paths)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(content.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read trial rows back from an exported CSV.
pub fn import_rows(path: &Path) -> Result<Vec<TrialRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let label = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse {
            path: label,
            line: 1,
            message: "empty file".into(),
        });
    };
    if header != CSV_COLUMNS.join(",") {
        return Err(Error::Parse {
            path: label,
            line: 1,
            message: format!("unexpected header `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut values = [0.0f64; 14];
        let mut fields = line.split(',');
        for (col, slot) in values.iter_mut().enumerate() {
            let Some(field) = fields.next() else {
                return Err(Error::Parse {
                    path: label,
                    line: idx + 1,
                    message: format!("missing column {}", CSV_COLUMNS[col]),
                });
            };
            *slot = field.parse::<f64>().map_err(|_| Error::Parse {
                path: label.clone(),
                line: idx + 1,
                message: format!("bad number `{field}` in column {}", CSV_COLUMNS[col]),
            })?;
        }
        if fields.next().is_some() {
            return Err(Error::Parse {
                path: label,
                line: idx + 1,
                message: "too many columns".into(),
            });
        }
        rows.push(TrialRow::from_values(values));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> TrialRecord {
        let rows = (0..10)
            .map(|i| {
                let t = i as f64 * 0.002;
                TrialRow {
                    t,
                    theta_r: 0.2 + 0.1 * t,
                    theta: 0.2 + 0.099 * t,
                    theta_dot: 0.1,
                    tau_e: 3.5 - 0.01 * t,
                    tau_h_true: 0.0,
                    tau_h_hat: 0.001,
                    ch1: 0.0001,
                    ch2: 0.0,
                    mu_assist: 0.01,
                    mu_safety: 0.02,
                    mode: 0.97,
                    stage_cost: 0.5,
                    augmented_cost: 1.5,
                }
            })
            .collect();
        TrialRecord {
            rows,
            meta: TrialMeta::imported(500.0, 4.0),
        }
    }

    #[test]
    fn csv_round_trips_bit_exactly() {
        let record = sample_record();
        let dir = std::env::temp_dir().join("aan_record_test");
        let metrics_src = TrialRecord {
            rows: record.rows.clone(),
            meta: record.meta.clone(),
        };
        // Metrics need at least one full cycle; reuse a dummy from summary of
        // the same rows via compute on a longer record is unnecessary here,
        // so exercise the CSV path directly.
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        std::fs::write(&path, record.csv()).unwrap();
        let rows = import_rows(&path).unwrap();
        assert_eq!(rows, metrics_src.rows);
    }

    #[test]
    fn import_rejects_malformed_files() {
        let dir = std::env::temp_dir().join("aan_record_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad_header.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(import_rows(&path).is_err());

        let path = dir.join("bad_field.csv");
        let mut content = CSV_COLUMNS.join(",");
        content.push_str("\n1,2,3,4,5,6,7,8,9,10,11,12,13,zebra\n");
        std::fs::write(&path, content).unwrap();
        assert!(import_rows(&path).is_err());

        let path = dir.join("short_row.csv");
        let mut content = CSV_COLUMNS.join(",");
        content.push_str("\n1,2,3\n");
        std::fs::write(&path, content).unwrap();
        assert!(import_rows(&path).is_err());
    }
}
