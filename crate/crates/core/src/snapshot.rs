//! JSON snapshots of filter banks and complete plants.
//!
//! Filter bank (`mvanc.filterbank.v1`):
//!
//! ```text
//! { "schema": "mvanc.filterbank.v1", "name": "W",
//!   "rows": K, "cols": J, "taps": N,
//!   "filters": [[[tap0, tap1, ...], ...], ...] }   // filters[row][col]
//! ```
//!
//! Plant (`mvanc.pathset.v1`): `dims` (`j`, `k`, `m`, `q`) plus one filter
//! bank object per path set under `banks`, keyed `primary_physical`,
//! `primary_virtual`, `secondary_physical`, `secondary_physical_est`,
//! `secondary_virtual`, `secondary_virtual_est`.
//!
//! Floats are written in shortest round-trip form, so reloading a snapshot
//! reproduces the exact coefficients.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acoustics::PathSet;
use crate::adaptive::SystemDims;
use crate::dsp::{FilterBank, FirFilter};
use crate::error::{Error, Result};

pub const BANK_SCHEMA: &str = "mvanc.filterbank.v1";
pub const PATHSET_SCHEMA: &str = "mvanc.pathset.v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BankDoc {
    schema: String,
    #[serde(default)]
    name: String,
    rows: usize,
    cols: usize,
    taps: usize,
    filters: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Banks {
    primary_physical: BankDoc,
    primary_virtual: BankDoc,
    secondary_physical: BankDoc,
    secondary_physical_est: BankDoc,
    secondary_virtual: BankDoc,
    secondary_virtual_est: BankDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PathSetDoc {
    schema: String,
    dims: SystemDims,
    banks: Banks,
}

fn to_doc(name: &str, bank: &FilterBank) -> BankDoc {
    BankDoc {
        schema: BANK_SCHEMA.to_string(),
        name: name.to_string(),
        rows: bank.rows(),
        cols: bank.cols(),
        taps: bank.tap_len(),
        filters: (0..bank.rows())
            .map(|r| {
                (0..bank.cols())
                    .map(|c| bank.get(r, c).taps().to_vec())
                    .collect()
            })
            .collect(),
    }
}

fn from_doc(doc: BankDoc, field: &str) -> Result<FilterBank> {
    let bad = |msg: String| Error::Snapshot(format!("{field}: {msg}"));
    if doc.schema != BANK_SCHEMA {
        return Err(bad(format!(
            "schema is '{}', expected '{BANK_SCHEMA}'",
            doc.schema
        )));
    }
    if doc.rows == 0 || doc.cols == 0 || doc.taps == 0 {
        return Err(bad("rows, cols and taps must all be >= 1".into()));
    }
    if doc.filters.len() != doc.rows {
        return Err(bad(format!(
            "filters has {} rows, header says {}",
            doc.filters.len(),
            doc.rows
        )));
    }
    let mut out = Vec::with_capacity(doc.rows * doc.cols);
    for (r, row) in doc.filters.into_iter().enumerate() {
        if row.len() != doc.cols {
            return Err(bad(format!(
                "filters[{r}] has {} columns, header says {}",
                row.len(),
                doc.cols
            )));
        }
        for (c, taps) in row.into_iter().enumerate() {
            if taps.len() != doc.taps {
                return Err(bad(format!(
                    "filters[{r}][{c}] has {} taps, header says {}",
                    taps.len(),
                    doc.taps
                )));
            }
            out.push(FirFilter::new(taps).map_err(|e| bad(format!("filters[{r}][{c}]: {e}")))?);
        }
    }
    FilterBank::from_filters(doc.rows, doc.cols, out)
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Snapshot(format!("line {}, column {}: {e}", e.line(), e.column()))
}

pub fn bank_to_json(name: &str, bank: &FilterBank) -> String {
    serde_json::to_string(&to_doc(name, bank)).expect("bank snapshot serialises")
}

/// Parses a filter-bank snapshot; returns the stored name with the bank.
pub fn bank_from_json(text: &str) -> Result<(String, FilterBank)> {
    let doc: BankDoc = serde_json::from_str(text).map_err(parse_error)?;
    let name = doc.name.clone();
    Ok((name, from_doc(doc, "bank")?))
}

pub fn pathset_to_json(paths: &PathSet) -> String {
    let doc = PathSetDoc {
        schema: PATHSET_SCHEMA.to_string(),
        dims: paths.dims,
        banks: Banks {
            primary_physical: to_doc("primary_physical", &paths.primary_physical),
            primary_virtual: to_doc("primary_virtual", &paths.primary_virtual),
            secondary_physical: to_doc("secondary_physical", &paths.secondary_physical),
            secondary_physical_est: to_doc("secondary_physical_est", &paths.secondary_physical_est),
            secondary_virtual: to_doc("secondary_virtual", &paths.secondary_virtual),
            secondary_virtual_est: to_doc("secondary_virtual_est", &paths.secondary_virtual_est),
        },
    };
    serde_json::to_string(&doc).expect("pathset snapshot serialises")
}

pub fn pathset_from_json(text: &str) -> Result<PathSet> {
    let doc: PathSetDoc = serde_json::from_str(text).map_err(parse_error)?;
    if doc.schema != PATHSET_SCHEMA {
        return Err(Error::Snapshot(format!(
            "schema is '{}', expected '{PATHSET_SCHEMA}'",
            doc.schema
        )));
    }
    let b = doc.banks;
    let paths = PathSet {
        dims: doc.dims,
        primary_physical: from_doc(b.primary_physical, "banks.primary_physical")?,
        primary_virtual: from_doc(b.primary_virtual, "banks.primary_virtual")?,
        secondary_physical: from_doc(b.secondary_physical, "banks.secondary_physical")?,
        secondary_physical_est: from_doc(b.secondary_physical_est, "banks.secondary_physical_est")?,
        secondary_virtual: from_doc(b.secondary_virtual, "banks.secondary_virtual")?,
        secondary_virtual_est: from_doc(b.secondary_virtual_est, "banks.secondary_virtual_est")?,
    };
    paths
        .validate()
        .map_err(|e| Error::Snapshot(format!("inconsistent plant: {e}")))?;
    Ok(paths)
}

pub fn save_bank(path: &Path, name: &str, bank: &FilterBank) -> Result<()> {
    std::fs::write(path, bank_to_json(name, bank))?;
    Ok(())
}

pub fn load_bank(path: &Path) -> Result<(String, FilterBank)> {
    bank_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_pathset(path: &Path, paths: &PathSet) -> Result<()> {
    std::fs::write(path, pathset_to_json(paths))?;
    Ok(())
}

pub fn load_pathset(path: &Path) -> Result<PathSet> {
    pathset_from_json(&std::fs::read_to_string(path)?)
}
