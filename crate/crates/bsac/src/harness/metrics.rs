//! Metrics CSV emission and parsing.
//!
//! File layout:
//!
//! ```text
//! # config_hash=<16 hex chars>
//! # seed=<u64>
//! env_step,eval_return_mean,eval_return_std,q1_loss,q2_loss,v_loss,policy_loss,entropy_sub_1..entropy_sub_m,wall_clock_s
//! <rows, append-only, strictly increasing env_step>
//! ```
//!
//! Losses before the first update are the not-ready sentinel `NA`. Every
//! field except `wall_clock_s` is a deterministic function of (config,
//! seed); replay comparisons mask that one trailing field.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::learner::StepMetrics;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub env_step: u64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    /// None until the learner has taken its first update.
    pub losses: Option<StepMetrics>,
    pub wall_clock_s: f64,
}

pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    n_subs: usize,
    last_step: Option<u64>,
}

pub fn metrics_file_name(seed: u64) -> String {
    format!("metrics_seed_{seed}.csv")
}

/// Column names for a run with `n_subs` sub-policies.
pub fn columns(n_subs: usize) -> Vec<String> {
    let mut cols = vec![
        "env_step".to_string(),
        "eval_return_mean".to_string(),
        "eval_return_std".to_string(),
        "q1_loss".to_string(),
        "q2_loss".to_string(),
        "v_loss".to_string(),
        "policy_loss".to_string(),
    ];
    for i in 1..=n_subs {
        cols.push(format!("entropy_sub_{i}"));
    }
    cols.push("wall_clock_s".to_string());
    cols
}

impl MetricsWriter {
    pub fn create(dir: &Path, seed: u64, config_hash: &str, n_subs: usize) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(metrics_file_name(seed));
        let file =
            File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# config_hash={config_hash}")?;
        writeln!(out, "# seed={seed}")?;
        writeln!(out, "{}", columns(n_subs).join(","))?;
        out.flush()?;
        Ok(MetricsWriter { out, path, n_subs, last_step: None })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append one row and flush, so partial runs stay analyzable.
    pub fn write_row(&mut self, row: &EvalRow) -> Result<()> {
        if let Some(last) = self.last_step {
            if row.env_step <= last {
                bail!("metrics rows must be monotone: {} after {last}", row.env_step);
            }
        }
        self.last_step = Some(row.env_step);
        let mut fields = vec![
            row.env_step.to_string(),
            fmt(row.eval_return_mean),
            fmt(row.eval_return_std),
        ];
        match &row.losses {
            Some(m) => {
                if m.entropy_subs.len() != self.n_subs {
                    bail!(
                        "metrics expect {} entropy columns, got {}",
                        self.n_subs,
                        m.entropy_subs.len()
                    );
                }
                fields.push(fmt(m.q1_loss));
                fields.push(fmt(m.q2_loss));
                fields.push(fmt(m.v_loss));
                fields.push(fmt(m.policy_loss));
                fields.extend(m.entropy_subs.iter().map(|&v| fmt(v)));
            }
            None => {
                for _ in 0..4 + self.n_subs {
                    fields.push("NA".to_string());
                }
            }
        }
        fields.push(format!("{:.3}", row.wall_clock_s));
        writeln!(self.out, "{}", fields.join(","))?;
        self.out.flush()?;
        Ok(())
    }
}

/// Shortest-round-trip float formatting; deterministic for a given value.
fn fmt(v: f64) -> String {
    format!("{v}")
}

/// A parsed metrics file.
#[derive(Debug, Clone)]
pub struct ParsedMetrics {
    pub config_hash: String,
    pub seed: u64,
    pub columns: Vec<String>,
    /// rows[i][j]: None where the file holds the NA sentinel.
    pub rows: Vec<Vec<Option<f64>>>,
}

pub fn parse_metrics(path: &Path) -> Result<ParsedMetrics> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut config_hash = String::new();
    let mut seed = 0u64;
    let mut columns: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(h) = rest.strip_prefix("config_hash=") {
                config_hash = h.to_string();
            } else if let Some(s) = rest.strip_prefix("seed=") {
                seed = s.parse().context("bad seed header")?;
            }
            continue;
        }
        if columns.is_empty() {
            columns = line.split(',').map(str::to_string).collect();
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row: Vec<Option<f64>> = line
            .split(',')
            .map(|f| if f == "NA" { Ok(None) } else { f.parse().map(Some) })
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad row in {}", path.display()))?;
        if row.len() != columns.len() {
            bail!("row width {} != header width {}", row.len(), columns.len());
        }
        rows.push(row);
    }
    if columns.is_empty() {
        bail!("{} has no header", path.display());
    }
    Ok(ParsedMetrics { config_hash, seed, columns, rows })
}

/// Read the config hash header of an existing metrics file.
pub fn read_hash(path: &Path) -> Result<String> {
    Ok(parse_metrics(path)?.config_hash)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, losses: Option<StepMetrics>) -> EvalRow {
        EvalRow {
            env_step: step,
            eval_return_mean: -1.5,
            eval_return_std: 0.25,
            losses,
            wall_clock_s: 0.123,
        }
    }

    fn metrics() -> StepMetrics {
        StepMetrics {
            q1_loss: 0.5,
            q2_loss: 0.625,
            v_loss: 0.75,
            policy_loss: -0.875,
            entropy_subs: vec![1.0, 2.0],
        }
    }

    #[test]
    fn round_trip_with_sentinels() {
        let dir = std::env::temp_dir().join("bsac_metrics_test");
        let mut w = MetricsWriter::create(&dir, 7, "cafebabe", 2).unwrap();
        w.write_row(&row(100, None)).unwrap();
        w.write_row(&row(200, Some(metrics()))).unwrap();
        let parsed = parse_metrics(&dir.join(metrics_file_name(7))).unwrap();
        assert_eq!(parsed.config_hash, "cafebabe");
        assert_eq!(parsed.seed, 7);
        assert_eq!(parsed.columns.len(), 3 + 4 + 2 + 1);
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.rows[0][3], None);
        assert_eq!(parsed.rows[1][3], Some(0.5));
        assert_eq!(parsed.rows[1][8], Some(2.0));
    }

    #[test]
    fn rows_must_be_monotone() {
        let dir = std::env::temp_dir().join("bsac_metrics_test_mono");
        let mut w = MetricsWriter::create(&dir, 1, "00", 1).unwrap();
        w.write_row(&row(100, None)).unwrap();
        assert!(w.write_row(&row(100, None)).is_err());
    }
}
