//! Line-delimited key=value metrics log: one record per outer step plus
//! a final summary record.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{DataError, Result};

pub struct MetricsWriter {
    file: std::fs::File,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(MetricsWriter { file: std::fs::File::create(path)? })
    }

    /// One record per outer step.
    pub fn step(&mut self, step: usize, epoch: usize, loss: f64, eta: f64, wall_s: f64) -> Result<()> {
        writeln!(
            self.file,
            "step={step} epoch={epoch} loss={loss} eta={eta} wall={wall_s:.3}"
        )?;
        Ok(())
    }

    /// Closing summary record.
    pub fn finish(&mut self, steps: usize, accuracy: f64) -> Result<()> {
        writeln!(self.file, "final=1 steps={steps} accuracy={accuracy}")?;
        Ok(())
    }
}

/// Parse a metrics log back into key=value maps, one per line.
pub fn parse_metrics(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(|line| {
            line.split_whitespace()
                .map(|pair| {
                    pair.split_once('=')
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .ok_or_else(|| DataError::Invalid(format!("bad metrics field {pair:?}")))
                })
                .collect()
        })
        .collect()
}
