use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::strategic::{Label, LabeledExample};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub label_column: String,
    /// A row is positive iff its trimmed label cell equals this token.
    pub positive_token: String,
    /// One-hot encode non-numeric feature columns (categories sorted
    /// lexicographically) instead of rejecting them.
    pub one_hot: bool,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>, positive_token: impl Into<String>) -> Self {
        Self { label_column: label_column.into(), positive_token: positive_token.into(), one_hot: false }
    }
}

pub fn load_csv(path: &Path, label_column: &str, positive_token: &str) -> Result<Dataset> {
    load_csv_with(path, &CsvOptions::new(label_column, positive_token))
}

enum Column {
    Numeric,
    Categorical(Vec<String>),
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a headed, comma-separated file. Lines starting with `#` are
/// skipped, so files written with a metadata header load back directly.
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn load_csv_with(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .quoting(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(file);

    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        None => return Err(Error::Schema(format!("{} is empty", path.display()))),
        Some(rec) => rec
            .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect(),
    };
    let label_idx = header
        .iter()
        .position(|h| *h == opts.label_column)
        .ok_or_else(|| Error::Schema(format!("label column '{}' not found in header", opts.label_column)))?;
    if header.len() < 2 {
        return Err(Error::Schema("need at least one feature column besides the label".into()));
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, column: "(record)".into(), message: e.to_string() })?;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        let cells: Vec<String> = rec.iter().map(|s| s.trim().to_string()).collect();
        if let Some(col) = cells.iter().position(|c| c.contains('"')) {
            return Err(Error::Parse {
                row,
                column: header.get(col).cloned().unwrap_or_else(|| format!("#{col}")),
                message: "quoted cells are not supported".into(),
            });
        }
        if cells.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: "(record)".into(),
                message: format!("expected {} cells, found {}", header.len(), cells.len()),
            });
        }
        rows.push(cells);
    }

    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_idx).collect();
    let mut columns = Vec::with_capacity(feature_cols.len());
    for &c in &feature_cols {
        let bad = rows.iter().position(|r| parse_number(&r[c]).is_none());
        match bad {
            None => columns.push(Column::Numeric),
            Some(_) if opts.one_hot => {
                let cats: BTreeSet<&str> = rows.iter().map(|r| r[c].as_str()).collect();
                columns.push(Column::Categorical(cats.into_iter().map(String::from).collect()));
            }
            Some(r) => {
                return Err(Error::Parse {
                    row: r + 1,
                    column: header[c].clone(),
                    message: format!("'{}' is not a finite number", rows[r][c]),
                })
            }
        }
    }

    let mut names = Vec::new();
    for (&c, kind) in feature_cols.iter().zip(&columns) {
        match kind {
            Column::Numeric => names.push(header[c].clone()),
            Column::Categorical(cats) => names.extend(cats.iter().map(|cat| format!("{}={cat}", header[c]))),
        }
    }

    let mut examples = Vec::with_capacity(rows.len());
    for r in &rows {
        let mut values = Vec::with_capacity(names.len());
        for (&c, kind) in feature_cols.iter().zip(&columns) {
            match kind {
                Column::Numeric => values.push(parse_number(&r[c]).expect("checked above")),
                Column::Categorical(cats) => {
                    values.extend(cats.iter().map(|cat| if *cat == r[c] { 1.0 } else { 0.0 }))
                }
            }
        }
        let label = if r[label_idx] == opts.positive_token { Label::Positive } else { Label::Negative };
        examples.push(LabeledExample::new(crate::strategic::FeatureVector::new(values)?, label));
    }
    Dataset::new(examples, names, Provenance::File(path.to_path_buf()))
}

/// Writes `feature_names…,label` followed by one row per example.
pub fn write_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    for name in &ds.feature_names {
        if name.contains([',', '"', '\n']) || name == "label" {
            return Err(Error::Schema(format!("feature name '{name}' cannot be written")));
        }
    }
    let mut writer = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(out);
    let to_err = |e: csv::Error| Error::Schema(format!("csv write failed: {e}"));
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push("label");
    writer.write_record(&header).map_err(to_err)?;
    for ex in &ds.examples {
        let mut row: Vec<String> = ex.features.iter().map(|v| v.to_string()).collect();
        row.push(ex.label.as_u8().to_string());
        writer.write_record(&row).map_err(to_err)?;
    }
    writer.flush().map_err(|e| Error::Schema(format!("csv flush failed: {e}")))
}
