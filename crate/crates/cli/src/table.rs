//! Tabular results with deterministic CSV and JSON rendering.
//!
//! Floats are written with 17 significant digits so identical runs produce
//! byte-identical files and values round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    pub fn bool(v: bool) -> Cell {
        Cell::Int(v as i64)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    /// Maximum finite value in a named column; None when absent or empty.
    pub fn max_in(&self, column: &str) -> Option<f64> {
        let idx = self.columns.iter().position(|c| c == column)?;
        let mut best: Option<f64> = None;
        for row in &self.rows {
            if let Cell::Float(v) = row[idx] {
                if v.is_finite() {
                    best = Some(best.map_or(v, |b| b.max(v)));
                }
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                first = false;
                match cell {
                    Cell::Float(v) => {
                        let _ = write!(out, "{v:.16e}");
                    }
                    Cell::Int(v) => {
                        let _ = write!(out, "{v}");
                    }
                    Cell::Text(s) => {
                        out.push('"');
                        out.push_str(&s.replace('"', "\"\""));
                        out.push('"');
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, summary: &[(String, String)]) -> String {
        let mut out = String::new();
        out.push_str("{\n  \"columns\": [");
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{}", json_string(c));
        }
        out.push_str("],\n  \"rows\": [\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str("    [");
            for (j, cell) in row.iter().enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                match cell {
                    Cell::Float(v) if v.is_finite() => {
                        let _ = write!(out, "{v:.16e}");
                    }
                    Cell::Float(v) => {
                        let _ = write!(out, "{}", json_string(&v.to_string()));
                    }
                    Cell::Int(v) => {
                        let _ = write!(out, "{v}");
                    }
                    Cell::Text(s) => {
                        let _ = write!(out, "{}", json_string(s));
                    }
                }
            }
            out.push(']');
            if i + 1 < self.rows.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("  ],\n  \"summary\": {");
        for (i, (k, v)) in summary.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "\n    {}: {}", json_string(k), json_string(v));
        }
        out.push_str("\n  }\n}\n");
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    pub fn write_json(&self, path: &Path, summary: &[(String, String)]) -> std::io::Result<()> {
        std::fs::write(path, self.to_json(summary))
    }
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting() {
        let mut t = Table::new(&["a", "b", "note"]);
        t.push(vec![
            Cell::Float(1.0),
            Cell::Int(2),
            Cell::Text("he \"says\", hi".into()),
        ]);
        let csv = t.to_csv();
        assert_eq!(
            csv,
            "a,b,note\n1.0000000000000000e0,2,\"he \"\"says\"\", hi\"\n"
        );
    }

    #[test]
    fn max_in_skips_nan() {
        let mut t = Table::new(&["r"]);
        t.push(vec![Cell::Float(f64::NAN)]);
        t.push(vec![Cell::Float(0.25)]);
        assert_eq!(t.max_in("r"), Some(0.25));
        assert_eq!(t.max_in("missing"), None);
    }

    #[test]
    fn json_is_well_formed() {
        let mut t = Table::new(&["x"]);
        t.push(vec![Cell::Float(f64::NAN)]);
        t.push(vec![Cell::Float(1.5)]);
        let text = t.to_json(&[("samples".into(), "2".into())]);
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["rows"][1][0].as_f64(), Some(1.5));
        assert_eq!(parsed["rows"][0][0].as_str(), Some("NaN"));
    }
}
