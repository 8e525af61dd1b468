//! Labelled dataset CSV: a header, then `y,x1,…,xp` per row with
//! `y ∈ {−1, +1}` or `y ∈ {0, 1}` (0 is read as −1).

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledData {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

pub fn read_dataset(path: &Path) -> Result<LabelledData, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    parse_dataset(file)
}

pub fn parse_dataset<R: std::io::Read>(input: R) -> Result<LabelledData, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| CliError::Input(e.to_string()))?.clone();
    if header.iter().all(str::is_empty) {
        return Err(CliError::Input("empty file".into()));
    }
    if header.len() < 2 {
        return Err(CliError::Input("need a label column followed by at least one covariate column".into()));
    }
    let p = header.len() - 1;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CliError::Input(format!("line {line}: {e}")))?;
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| CliError::Input(format!("line {line}, column {}: {cell:?} is not a finite number", j + 1)))?;
            if j == 0 {
                labels.push((line, v));
            } else {
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(CliError::Input("no data rows".into()));
    }
    let zero_one = labels.iter().all(|&(_, v)| v == 0.0 || v == 1.0);
    let y = labels
        .iter()
        .map(|&(line, v)| match v {
            0.0 if zero_one => Ok(-1.0),
            1.0 => Ok(1.0),
            -1.0 if !zero_one => Ok(-1.0),
            _ => Err(CliError::Input(format!(
                "line {line}: label {v} is outside {{-1, +1}} or {{0, 1}} (encodings cannot be mixed)"
            ))),
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let x = DMatrix::from_row_slice(y.len(), p, &values);
    Ok(LabelledData { x, y })
}
