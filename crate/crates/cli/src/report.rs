use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use semcom_core::training::LossReport;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu1,
    Bleu2,
    Bleu3,
    Bleu4,
    Similarity,
    MiNats,
    CeLoss,
    SymbolsPerWord,
    Ser,
}

impl Metric {
    pub fn bleu(n: usize) -> Option<Self> {
        match n {
            1 => Some(Metric::Bleu1),
            2 => Some(Metric::Bleu2),
            3 => Some(Metric::Bleu3),
            4 => Some(Metric::Bleu4),
            _ => None,
        }
    }
}

/// One long-format result line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub run_id: String,
    pub phase: String,
    /// SNR in dB, or the erasure probability for erasure sweeps.
    pub snr_db_or_rate: f64,
    pub metric: Metric,
    pub value: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Append-only collection of result rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    rows: Vec<Row>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = Row>) {
        self.rows.extend(rows);
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Value of the first row matching `phase`, `metric` and the x coordinate.
    pub fn value(&self, phase: &str, metric: Metric, x: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.phase == phase && r.metric == metric && same_x(r.snr_db_or_rate, x))
            .map(|r| r.value)
    }

    /// `(x, value)` of every row matching `phase` and `metric`, in insertion order.
    pub fn series(&self, phase: &str, metric: Metric) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.phase == phase && r.metric == metric)
            .map(|r| (r.snr_db_or_rate, r.value))
            .collect()
    }

    /// True when some `(run_id, phase, x, metric, seed)` key occurs twice.
    pub fn has_duplicates(&self) -> bool {
        let mut seen = BTreeSet::new();
        !self.rows.iter().all(|r| {
            seen.insert((
                r.run_id.clone(),
                r.phase.clone(),
                r.snr_db_or_rate.to_bits(),
                r.metric,
                r.seed,
            ))
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<Row>, _>>()?;
        Ok(Self { rows })
    }
}

fn same_x(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() < 1e-9
}

/// Per-epoch training losses, one line per phase record.
pub fn write_losses(path: &Path, reports: &[LossReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "phase", "ce", "mi_bound", "total"])?;
    for r in reports {
        w.write_record([
            r.epoch.to_string(),
            r.phase.name().to_string(),
            r.ce.to_string(),
            r.mi_bound.to_string(),
            r.total.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(())
}
