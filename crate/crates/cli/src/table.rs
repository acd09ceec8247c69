//! Reads the artifact CSVs back for plotting.

use std::path::Path;

/// A numeric CSV: header names and row-major values. Empty cells read as NaN.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, String> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| format!("{}: {e}", path.display()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| format!("{}: {e}", path.display()))?;
            let row = record
                .iter()
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        cell.parse::<f64>().map_err(|_| {
                            format!(
                                "{}: data row {}: not a number: {cell:?}",
                                path.display(),
                                i + 1
                            )
                        })
                    }
                })
                .collect::<Result<Vec<f64>, String>>()?;
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// `(x, y)` pairs for two columns, skipping rows where either is not finite.
    pub fn xy(&self, x: usize, y: usize) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r[x], r[y]))
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .collect()
    }
}
