use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;

use super::{DataError, Dataset};

/// Read a header-first CSV. Every column except `label_column` must parse as
/// a real number; label cells equal to `positive_label` map to 1, anything
/// else to 0. Row numbers in errors are 1-based data rows (header excluded).
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, positive_label: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    read_csv(file, &name, label_column, positive_label)
}

pub(crate) fn read_csv<R: std::io::Read>(
    reader: R,
    name: &str,
    label_column: &str,
    positive_label: &str,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingColumn(label_column.to_string()))?;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_idx).collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = r + 1;
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(DataError::EmptyCell { row, column: header[c].clone() });
            }
            let v: f64 = cell.parse().map_err(|_| DataError::Unparseable {
                row,
                column: header[c].clone(),
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        let label = record.get(label_idx).unwrap_or("").trim();
        if label.is_empty() {
            return Err(DataError::EmptyCell { row, column: label_column.to_string() });
        }
        raw_labels.push(label.to_string());
    }

    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    if distinct.len() > 2 {
        return Err(DataError::NonBinaryLabel {
            column: label_column.to_string(),
            values: distinct.into_iter().map(str::to_string).collect(),
        });
    }
    if distinct.len() == 2 && !distinct.contains(positive_label) {
        return Err(DataError::PositiveLabelAbsent {
            column: label_column.to_string(),
            positive: positive_label.to_string(),
        });
    }
    let labels: Vec<u8> = raw_labels.iter().map(|l| u8::from(l == positive_label)).collect();
    let features = Array2::from_shape_vec((labels.len(), feature_cols.len()), values)
        .map_err(|e| DataError::Shape(e.to_string()))?;
    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();
    Dataset::new(name, features, labels, names)
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    DataError::Csv { line, message: e.to_string() }
}
