//! Column-typed tabular data. Cells are kept as their original text so a
//! table survives a write/read cycle unchanged.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Finite number in `cell`, if it holds one.
pub fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Numeric iff every non-empty cell parses as a finite number.
pub fn infer_kind<'a>(cells: impl IntoIterator<Item = &'a str>) -> ColumnKind {
    let numeric = cells
        .into_iter()
        .filter(|c| !c.trim().is_empty())
        .all(|c| parse_number(c).is_some());
    if numeric {
        ColumnKind::Numeric
    } else {
        ColumnKind::Categorical
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    rows: Vec<Vec<String>>,
    target: Option<usize>,
}

impl Table {
    /// Builds a table, inferring column kinds. `hints` may pin the kind of
    /// individual columns by name.
    pub fn new(names: Vec<String>, rows: Vec<Vec<String>>, hints: &[(String, ColumnKind)]) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::Table(format!(
                    "row {} has {} cells, header has {}",
                    r + 1,
                    row.len(),
                    names.len()
                )));
            }
        }
        let mut kinds = Vec::with_capacity(names.len());
        for (c, name) in names.iter().enumerate() {
            let inferred = infer_kind(rows.iter().map(|r| r[c].as_str()));
            let kind = match hints.iter().find(|(n, _)| n == name) {
                Some(&(_, ColumnKind::Numeric)) if inferred != ColumnKind::Numeric => {
                    return Err(Error::Table(format!("column `{name}` is not numeric")));
                }
                Some(&(_, kind)) => kind,
                None => inferred,
            };
            kinds.push(kind);
        }
        Ok(Self {
            names,
            kinds,
            rows,
            target: None,
        })
    }

    pub fn with_target(mut self, name: &str) -> Result<Self> {
        let idx = self
            .column(name)
            .ok_or_else(|| Error::Table(format!("no column named `{name}`")))?;
        self.target = Some(idx);
        Ok(self)
    }

    pub(crate) fn from_parts(names: Vec<String>, kinds: Vec<ColumnKind>, rows: Vec<Vec<String>>, target: Option<usize>) -> Self {
        Self {
            names,
            kinds,
            rows,
            target,
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.names.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    /// Columns other than the target.
    pub fn predictors(&self) -> Vec<usize> {
        (0..self.names.len()).filter(|&c| Some(c) != self.target).collect()
    }
}
