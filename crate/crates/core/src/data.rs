//! CSV ingestion.
//!
//! Policy:
//! - a header row is required; cells are trimmed;
//! - a column is numeric when more than half of its non-empty cells parse as
//!   finite numbers, otherwise categorical;
//! - in numeric columns an empty cell or `NA`/`NaN`/`null` is missing, and any
//!   other unparsable cell is non-numeric; in categorical columns only an empty
//!   cell is missing;
//! - rows with a missing or non-numeric cell are dropped and counted;
//! - categorical columns become indicator columns named `column=level`, with
//!   levels taken from the kept rows and sorted lexicographically.
//!
//! The response column must be numeric.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stack::Dataset;

const MISSING_TOKENS: [&str; 5] = ["na", "nan", "null", "n/a", "none"];

/// A cleaned dataset and the number of rejected rows.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub dropped: usize,
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_missing_token(cell: &str) -> bool {
    cell.is_empty() || MISSING_TOKENS.iter().any(|t| cell.eq_ignore_ascii_case(t))
}

enum Column {
    Numeric,
    Categorical(Vec<String>),
}

fn is_numeric(cells: impl Iterator<Item = String>) -> bool {
    let (mut present, mut parsed) = (0usize, 0usize);
    for c in cells.filter(|c| !is_missing_token(c)) {
        present += 1;
        parsed += usize::from(parse_number(&c).is_some());
    }
    2 * parsed > present
}

/// Loads `path`, using `response` as the target column.
pub fn load_csv(path: impl AsRef<Path>, response: &str) -> Result<LoadedCsv> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let target = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::MissingColumn(response.to_owned()))?;
    let rows: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
        .collect::<std::result::Result<_, _>>()?;

    let numeric: Vec<bool> = (0..header.len())
        .map(|j| j == target || is_numeric(rows.iter().map(|r| r[j].clone())))
        .collect();

    let keep = |row: &[String]| {
        row.iter().zip(&numeric).all(|(cell, &num)| {
            if num {
                parse_number(cell).is_some()
            } else {
                !cell.is_empty()
            }
        })
    };
    let kept: Vec<&Vec<String>> = rows.iter().filter(|r| keep(r)).collect();
    let dropped = rows.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::EmptyAfterCleaning { dropped });
    }

    let columns: Vec<(usize, Column)> = (0..header.len())
        .filter(|&j| j != target)
        .map(|j| {
            let col = if numeric[j] {
                Column::Numeric
            } else {
                let mut levels: Vec<String> = kept.iter().map(|r| r[j].clone()).collect();
                levels.sort();
                levels.dedup();
                Column::Categorical(levels)
            };
            (j, col)
        })
        .collect();

    let mut names = Vec::new();
    for (j, col) in &columns {
        match col {
            Column::Numeric => names.push(header[*j].clone()),
            Column::Categorical(levels) => names.extend(levels.iter().map(|l| format!("{}={l}", header[*j]))),
        }
    }
    let mut data = Vec::with_capacity(kept.len() * names.len());
    let mut y = Vec::with_capacity(kept.len());
    for row in &kept {
        y.push(parse_number(&row[target]).expect("kept rows parse"));
        for (j, col) in &columns {
            match col {
                Column::Numeric => data.push(parse_number(&row[*j]).expect("kept rows parse")),
                Column::Categorical(levels) => {
                    data.extend(levels.iter().map(|l| if *l == row[*j] { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    let x = Matrix::new(kept.len(), names.len(), data)?;
    Ok(LoadedCsv {
        dataset: Dataset::new(x, y, names)?,
        dropped,
    })
}
