//! Feature tables built from a record set, optionally with demographic
//! columns appended after the base block.
//!
//! Column layout:
//! - `none`: base columns only.
//! - `continuous`: base, then `age_years` (age in years) and `female` (1 for
//!   female, 0 otherwise).
//! - `bracket`: base, then five age indicators `age<21`, `age21-44`,
//!   `age45-64`, `age65-84`, `age85+` and two sex indicators `female`, `male`.
//!
//! Missing age or sex leaves the corresponding columns at zero.

use std::fmt;
use std::str::FromStr;

use super::{RecordSet, Sex};
use crate::error::Error;

/// Half-open bracket lower bounds: [0,21), [21,45), [45,65), [65,85), [85,inf).
pub const AGE_BRACKETS: [(u32, &str); 5] = [(0, "age<21"), (21, "age21-44"), (45, "age45-64"), (65, "age65-84"), (85, "age85+")];

pub fn age_bracket(age: u32) -> usize {
    AGE_BRACKETS.iter().rposition(|&(lo, _)| age >= lo).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DemoEncoding {
    None,
    Continuous,
    Bracket,
}

impl FromStr for DemoEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "none" => Ok(DemoEncoding::None),
            "continuous" => Ok(DemoEncoding::Continuous),
            "bracket" => Ok(DemoEncoding::Bracket),
            other => Err(Error::UnknownVariant {
                kind: "demographic encoding",
                value: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for DemoEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemoEncoding::None => "none",
            DemoEncoding::Continuous => "continuous",
            DemoEncoding::Bracket => "bracket",
        })
    }
}

/// Which half of a record forms the base columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureBlock {
    Symptoms,
    Diseases,
}

/// Sparse rows of `(column, value)` pairs with nonzero values, columns ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub n_base: usize,
    pub encoding: DemoEncoding,
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl FeatureMatrix {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_binary(&self) -> bool {
        self.rows.iter().flatten().all(|&(_, v)| v == 1.0)
    }
}

pub fn attach_demographics(records: &RecordSet, block: FeatureBlock, encoding: DemoEncoding) -> FeatureMatrix {
    let vocab = records.vocabulary();
    let mut columns: Vec<String> = match block {
        FeatureBlock::Symptoms => vocab.symptoms().to_vec(),
        FeatureBlock::Diseases => vocab.diseases().to_vec(),
    };
    let n_base = columns.len();
    match encoding {
        DemoEncoding::None => {}
        DemoEncoding::Continuous => columns.extend(["age_years".to_string(), "female".to_string()]),
        DemoEncoding::Bracket => {
            columns.extend(AGE_BRACKETS.iter().map(|(_, name)| name.to_string()));
            columns.extend(["female".to_string(), "male".to_string()]);
        }
    }
    let base = n_base as u32;
    let rows = records
        .records()
        .iter()
        .map(|r| {
            let bits = match block {
                FeatureBlock::Symptoms => &r.symptoms,
                FeatureBlock::Diseases => &r.diseases,
            };
            let mut row: Vec<(u32, f64)> = bits.iter().map(|&c| (c, 1.0)).collect();
            match encoding {
                DemoEncoding::None => {}
                DemoEncoding::Continuous => {
                    if let Some(age) = r.age_years.filter(|&a| a > 0) {
                        row.push((base, f64::from(age)));
                    }
                    if r.sex == Some(Sex::Female) {
                        row.push((base + 1, 1.0));
                    }
                }
                DemoEncoding::Bracket => {
                    if let Some(age) = r.age_years {
                        row.push((base + age_bracket(age) as u32, 1.0));
                    }
                    match r.sex {
                        Some(Sex::Female) => row.push((base + 5, 1.0)),
                        Some(Sex::Male) => row.push((base + 6, 1.0)),
                        None => {}
                    }
                }
            }
            row
        })
        .collect();
    FeatureMatrix {
        columns,
        n_base,
        encoding,
        rows,
    }
}
