use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const SCHEMA: &str = "calderonlab.report/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `le` passes when `value <= tolerance`, `ge` when `value >= tolerance`,
    /// `eq` when they are equal.
    pub relation: String,
    pub pass: bool,
}

impl Verdict {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, "le", value <= tolerance)
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, "ge", value >= tolerance)
    }

    pub fn equals(name: &str, value: f64, expected: f64) -> Self {
        Self::new(name, value, expected, "eq", value == expected)
    }

    fn new(name: &str, value: f64, tolerance: f64, relation: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            relation: relation.into(),
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_seconds: f64,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub command: String,
    pub config: serde_json::Value,
    pub blocks: BTreeMap<String, serde_json::Value>,
    pub verdicts: Vec<Verdict>,
    pub all_pass: bool,
    pub files: Vec<String>,
    pub omitted: Vec<String>,
    pub timing: Timing,
}

/// A CSV table: header plus rows of already formatted cells.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

/// Seventeen significant digits, the round-trip precision of `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub const TABLE_FILES: [&str; 4] = ["modes.csv", "sweep.csv", "spectrum.csv", "ucp.csv"];

/// Writes `report.json` and every non-empty table; empty tables are
/// listed in `report.omitted` instead.
pub fn write_report(
    report: &mut RunReport,
    tables: &BTreeMap<&'static str, Table>,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    report.files.clear();
    report.omitted.clear();
    for name in TABLE_FILES {
        match tables.get(name) {
            Some(t) if !t.rows.is_empty() => {
                std::fs::write(dir.join(name), t.render())?;
                report.files.push(name.to_string());
            }
            _ => report.omitted.push(name.to_string()),
        }
    }
    report.files.push("report.json".into());
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(dir.join("report.json"), json + "\n")?;
    Ok(())
}
