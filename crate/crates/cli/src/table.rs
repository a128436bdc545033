//! Result tables and their CSV / JSON serialization.
//!
//! CSV columns, in order: `h,seed,metric,value,config_hash,tool_version`.
//! `h` and `seed` are empty for rows that aggregate over them.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const HEADER: [&str; 6] = ["h", "seed", "metric", "value", "config_hash", "tool_version"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub h: Option<f64>,
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
}

impl Row {
    pub fn new(h: Option<f64>, seed: Option<u64>, metric: impl Into<String>, value: f64) -> Self {
        Row { h, seed, metric: metric.into(), value }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultTable {
    pub config_hash: String,
    pub tool_version: &'static str,
    rows: Vec<Row>,
}

/// Shortest round-trip form; exponent notation for very small or large magnitudes.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

impl ResultTable {
    pub fn new(config_hash: impl Into<String>) -> Self {
        ResultTable { config_hash: config_hash.into(), tool_version: TOOL_VERSION, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = Row>) {
        self.rows.extend(rows);
    }

    /// Rows ordered by `(h, seed, metric)`; aggregate rows sort first.
    pub fn rows(&self) -> Vec<Row> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| {
            let h = match (a.h, b.h) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (x, y) => x.is_some().cmp(&y.is_some()),
            };
            h.then(a.seed.cmp(&b.seed)).then_with(|| a.metric.cmp(&b.metric))
        });
        rows
    }

    pub fn find(&self, h: Option<f64>, seed: Option<u64>, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.h == h && r.seed == seed && r.metric == metric).map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for row in self.rows() {
            w.write_record([
                row.h.map(format_float).unwrap_or_default(),
                row.seed.map(|s| s.to_string()).unwrap_or_default(),
                row.metric.clone(),
                format_float(row.value),
                self.config_hash.clone(),
                self.tool_version.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, CliError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mirror = serde_json::json!({
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "rows": self.rows(),
        });
        Ok(serde_json::to_string_pretty(&mirror)?)
    }

    pub fn save(&self, csv_path: Option<&Path>, json_path: Option<&Path>) -> Result<(), CliError> {
        match csv_path {
            Some(p) => self.write_csv(std::fs::File::create(p)?)?,
            None => self.write_csv(std::io::stdout().lock())?,
        }
        if let Some(p) = json_path {
            std::fs::write(p, self.to_json()? + "\n")?;
        }
        Ok(())
    }
}
