//! Column-oriented logs written as CSV with round-trip float formatting.

use crate::sim::SimError;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// 17 significant digits, enough to reproduce every `f64` exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl TrajectoryLog {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|&x| format_float(x)))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, SimError> {
        let mut rd = csv::Reader::from_reader(r);
        let columns: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        let mut log = Self::new(columns);
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| SimError::Log(format!("row {}: {e}", line + 2)))?;
            if row.len() != log.columns.len() {
                return Err(SimError::Log(format!("row {}: expected {} fields", line + 2, log.columns.len())));
            }
            log.rows.push(row);
        }
        Ok(log)
    }

    pub fn read_csv(path: &Path) -> Result<Self, SimError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

pub fn vector_columns(prefix: &str, suffixes: &[&str]) -> Vec<String> {
    suffixes.iter().map(|s| format!("{prefix}_{s}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut log = TrajectoryLog::new(vec!["t".into(), "x".into()]);
        log.push(vec![0.0, std::f64::consts::PI]);
        log.push(vec![1e-3, -1.0 / 3.0]);
        log.push(vec![2e-3, 5e-324]);
        let mut buf = Vec::new();
        log.write_to(&mut buf).unwrap();
        let back = TrajectoryLog::read_from(&buf[..]).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.column("x").unwrap()[1], -1.0 / 3.0);
    }

    #[test]
    fn malformed_row_reported() {
        let err = TrajectoryLog::read_from("t,x\n0,abc\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 2"));
    }
}
