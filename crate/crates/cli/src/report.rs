//! Deterministic CSV reports: full-precision scientific notation so a rerun
//! of the same configuration reproduces the files byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{CliError, CliResult};

/// 17 significant digits; round-trips every f64 exactly.
pub fn sci(v: f64) -> String {
    format!("{:.16e}", v)
}

pub struct Table {
    header: String,
    rows: Vec<String>,
}

impl Table {
    pub fn new(header: &str) -> Table {
        Table { header: header.to_string(), rows: Vec::new() }
    }

    pub fn push(&mut self, cells: &[f64]) {
        self.push_labeled(None, cells);
    }

    pub fn push_labeled(&mut self, label: Option<&str>, cells: &[f64]) {
        let mut row = String::new();
        if let Some(l) = label {
            row.push_str(l);
        }
        for (i, v) in cells.iter().enumerate() {
            if i > 0 || label.is_some() {
                row.push(',');
            }
            let _ = write!(row, "{}", sci(*v));
        }
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, name: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        let mut text = String::with_capacity(64 * (self.rows.len() + 1));
        text.push_str(&self.header);
        text.push('\n');
        for row in &self.rows {
            text.push_str(row);
            text.push('\n');
        }
        let path = dir.join(name);
        std::fs::write(&path, text)
            .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scientific_format_round_trips_f64() {
        for v in [0.1, -3.25e-17, 2.0f64.powi(-40) + 1.0, 6.02e23] {
            assert_eq!(sci(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn tables_render_headers_labels_and_rows() {
        let mut t = Table::new("check,x,value");
        t.push_labeled(Some("alpha"), &[1.0, 0.5]);
        let dir = std::env::temp_dir().join("zcf-report-test");
        let path = t.write(&dir, "t.csv").unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("check,x,value"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("alpha,1.0000000000000000e0,"));
    }
}
