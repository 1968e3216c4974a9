//! Stochastic expansion of a tabular training set: every row yields
//! `factor` corrupted copies that any downstream learner can consume.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::table::{parse_number, ColumnKind, Table};
use crate::{Error, Result, Rng};

/// Replacement for dropped categorical cells.
pub const DROPPED: &str = "__DROPPED__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExpansionScheme {
    /// Corrupted cells take the partner row's value.
    Hb,
    /// Dropped numeric cells become 0, kept ones are scaled by `1/(1-p)`.
    Dropout,
    /// Hybrid bootstrap with kept numeric cells scaled by `1/(1-p)`.
    HbNorm,
    /// As [`HbNorm`](Self::HbNorm), with the per-cell scale factors shuffled
    /// across predictor positions.
    HbPermNorm,
    /// Dropout without scaling.
    DropoutNoNorm,
    /// Every numeric cell scaled by `1/(1-p)`; nothing dropped or swapped.
    NormOnly,
}

impl ExpansionScheme {
    pub const ALL: [Self; 6] = [
        Self::Hb,
        Self::Dropout,
        Self::HbNorm,
        Self::HbPermNorm,
        Self::DropoutNoNorm,
        Self::NormOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hb => "hb",
            Self::Dropout => "dropout",
            Self::HbNorm => "hb_norm",
            Self::HbPermNorm => "hb_perm_norm",
            Self::DropoutNoNorm => "dropout_nonorm",
            Self::NormOnly => "norm_only",
        }
    }

    pub fn uses_partner(self) -> bool {
        matches!(self, Self::Hb | Self::HbNorm | Self::HbPermNorm)
    }

    pub fn normalizes(self) -> bool {
        matches!(self, Self::Dropout | Self::HbNorm | Self::HbPermNorm | Self::NormOnly)
    }
}

impl FromStr for ExpansionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown expansion scheme `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionSpec {
    pub scheme: ExpansionScheme,
    /// Levels are drawn per synthetic row from `Uniform[0, u)`.
    pub u: f64,
    /// Synthetic copies per input row.
    pub factor: usize,
    /// Emit each original row ahead of its copies.
    pub include_originals: bool,
    /// Level used for every row instead of sampling.
    pub fixed_p: Option<f64>,
}

impl ExpansionSpec {
    pub fn new(scheme: ExpansionScheme, u: f64, factor: usize) -> Self {
        Self {
            scheme,
            u,
            factor,
            include_originals: false,
            fixed_p: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factor == 0 {
            return Err(Error::InvalidConfig("expansion factor must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.u) {
            return Err(Error::InvalidLevel(self.u));
        }
        if let Some(p) = self.fixed_p {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidLevel(p));
            }
        }
        Ok(())
    }
}

fn scaled(cell: &str, scale: f64) -> String {
    if scale == 1.0 {
        return cell.to_string();
    }
    match parse_number(cell) {
        Some(v) => format!("{}", v * scale),
        None => cell.to_string(),
    }
}

/// Expands `table` row by row. Output order is by base row, then replicate
/// (the original first when included). Synthetic row `(r, k)` draws from
/// its own stream `rng.derive(&[r, k])`; the target cell is always the
/// base row's.
pub fn expand(table: &Table, spec: &ExpansionSpec, rng: &Rng) -> Result<Table> {
    spec.validate()?;
    let target = table
        .target()
        .ok_or_else(|| Error::Table("no target column designated".into()))?;
    let n = table.row_count();
    if spec.scheme.uses_partner() && n < 2 {
        return Err(Error::InsufficientData(format!(
            "{} needs at least two rows, table has {n}",
            spec.scheme.name()
        )));
    }
    let predictors = table.predictors();
    let kinds = table.kinds();
    let per_row = spec.factor + usize::from(spec.include_originals);
    let mut rows = Vec::with_capacity(n * per_row);
    let mut keep = vec![false; predictors.len()];
    let mut factors = vec![1.0; predictors.len()];
    for r in 0..n {
        if spec.include_originals {
            rows.push(table.rows()[r].clone());
        }
        for k in 0..spec.factor {
            let mut rng = rng.derive(&[r as u64, k as u64]);
            let p = match spec.fixed_p {
                Some(p) => p,
                None => rng.uniform() * spec.u,
            };
            if spec.scheme.normalizes() && p >= 1.0 {
                return Err(Error::InvalidLevel(p));
            }
            let scale = if spec.scheme.normalizes() { 1.0 / (1.0 - p) } else { 1.0 };
            for bit in keep.iter_mut() {
                *bit = rng.uniform() >= p;
            }
            let partner = if spec.scheme.uses_partner() {
                let j = rng.below(n - 1);
                Some(if j >= r { j + 1 } else { j })
            } else {
                None
            };
            if spec.scheme == ExpansionScheme::HbPermNorm {
                for (f, &kept) in factors.iter_mut().zip(&keep) {
                    *f = if kept { scale } else { 1.0 };
                }
                rng.shuffle(&mut factors);
            }

            let own = &table.rows()[r];
            let mut row = own.clone();
            row[target] = own[target].clone();
            for (pos, &c) in predictors.iter().enumerate() {
                let kept = keep[pos];
                let numeric = kinds[c] == ColumnKind::Numeric;
                let swapped = || table.rows()[partner.unwrap()][c].clone();
                row[c] = match spec.scheme {
                    ExpansionScheme::Hb => {
                        if kept {
                            own[c].clone()
                        } else {
                            swapped()
                        }
                    }
                    ExpansionScheme::Dropout | ExpansionScheme::DropoutNoNorm => match (kept, numeric) {
                        (true, true) => scaled(&own[c], scale),
                        (true, false) => own[c].clone(),
                        (false, true) => "0".into(),
                        (false, false) => DROPPED.into(),
                    },
                    ExpansionScheme::HbNorm => match (kept, numeric) {
                        (true, true) => scaled(&own[c], scale),
                        (true, false) => own[c].clone(),
                        (false, _) => swapped(),
                    },
                    ExpansionScheme::HbPermNorm => {
                        let v = if kept { own[c].clone() } else { swapped() };
                        if numeric {
                            scaled(&v, factors[pos])
                        } else {
                            v
                        }
                    }
                    ExpansionScheme::NormOnly => {
                        if numeric {
                            scaled(&own[c], scale)
                        } else {
                            own[c].clone()
                        }
                    }
                };
            }
            rows.push(row);
        }
    }
    Ok(Table::from_parts(
        table.names().to_vec(),
        table.kinds().to_vec(),
        rows,
        Some(target),
    ))
}
