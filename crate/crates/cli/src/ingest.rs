//! CSV loading with missing-row filtering.

use std::path::Path;

use bham::Dataset;

use crate::error::CliError;

/// Parsed table restricted to the requested columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub predictors: Dataset,
    /// Empty when no outcome column was requested.
    pub outcome: Vec<f64>,
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null")
}

/// Reads `path`, keeping `outcome` (if given) and `predictors` (all other
/// columns when `None`). Rows with a missing value in any kept column are
/// dropped and counted; any other non-numeric cell is an error naming its
/// line and column.
pub fn ingest_csv(
    path: &Path,
    outcome: Option<&str>,
    predictors: Option<&[String]>,
) -> Result<Ingested, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Usage(format!("column `{name}` not found in {}", path.display()))
        })
    };
    let outcome_idx = outcome.map(find).transpose()?;
    let pred_names: Vec<String> = match predictors {
        Some(list) => list.to_vec(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != outcome_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if pred_names.is_empty() {
        return Err(CliError::Usage("no predictor columns".into()));
    }
    let pred_idx: Vec<usize> = pred_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<_, _>>()?;

    let mut columns = vec![Vec::new(); pred_idx.len()];
    let mut y = Vec::new();
    let mut dropped = 0;
    for (r, record) in reader.records().enumerate() {
        // line numbers count the header as line 1
        let line = r + 2;
        let record = record.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let parse = |idx: usize| -> Result<Option<f64>, CliError> {
            let cell = record.get(idx).unwrap_or("");
            if is_missing(cell) {
                return Ok(None);
            }
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| CliError::Parse {
                    line,
                    column: headers[idx].clone(),
                    value: cell.to_string(),
                })
        };
        let yv = outcome_idx.map(parse).transpose()?;
        let xs: Vec<Option<f64>> = pred_idx
            .iter()
            .map(|&i| parse(i))
            .collect::<Result<_, _>>()?;
        if yv.is_some_and(|v| v.is_none()) || xs.iter().any(Option::is_none) {
            dropped += 1;
            continue;
        }
        if let Some(Some(v)) = yv {
            y.push(v);
        }
        for (col, v) in columns.iter_mut().zip(xs) {
            col.push(v.expect("checked above"));
        }
    }
    if columns[0].is_empty() {
        return Err(CliError::EmptyAfterFiltering(path.display().to_string()));
    }
    Ok(Ingested {
        predictors: Dataset::new(pred_names, columns)?,
        outcome: y,
        dropped_rows: dropped,
    })
}
