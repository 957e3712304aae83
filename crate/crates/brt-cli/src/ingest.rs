//! Dataset ingestion: delimited numeric text with optional header and row
//! labels, plus the binarization rules applied on the way in.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// A rectangular numeric matrix with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub row_labels: Option<Vec<String>>,
    pub col_labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    /// Interprets the matrix as binary data (entries must be 0 or 1).
    pub fn to_binary(&self) -> CliResult<Vec<Vec<u8>>> {
        let mut out = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            let mut r = Vec::with_capacity(row.len());
            for (j, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    r.push(0);
                } else if v == 1.0 {
                    r.push(1);
                } else {
                    return Err(CliError::Data(format!(
                        "row {}, column {}: value {v} is not binary (use --binarize)",
                        i + 1,
                        j + 1
                    )));
                }
            }
            out.push(r);
        }
        Ok(out)
    }

    /// Splits the matrix into input columns and the final output column,
    /// for regression data laid out as x…, y.
    pub fn to_xy(&self) -> CliResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let d = self.n_cols();
        if d < 2 {
            return Err(CliError::Data(
                "regression data needs at least one input column and one output column".into(),
            ));
        }
        let inputs = self.rows.iter().map(|r| r[..d - 1].to_vec()).collect();
        let outputs = self.rows.iter().map(|r| r[d - 1]).collect();
        Ok((inputs, outputs))
    }
}

/// Rule mapping raw values to binary attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinarizeRule {
    /// Keep values as they are.
    None,
    /// x ≠ 0 → 1.
    Nonzero,
    /// x ≥ K → 1.
    Threshold(f64),
    /// Alias of `Nonzero` for count data.
    Presence,
}

impl BinarizeRule {
    pub fn apply(&self, v: f64) -> f64 {
        match self {
            BinarizeRule::None => v,
            BinarizeRule::Nonzero | BinarizeRule::Presence => (v != 0.0) as u8 as f64,
            BinarizeRule::Threshold(k) => (v >= *k) as u8 as f64,
        }
    }
}

impl FromStr for BinarizeRule {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(BinarizeRule::None),
            "nonzero" => Ok(BinarizeRule::Nonzero),
            "presence" => Ok(BinarizeRule::Presence),
            _ => {
                if let Some(k) = s.strip_prefix("threshold:") {
                    let k: f64 = k.parse().map_err(|_| {
                        CliError::Usage(format!("bad threshold value in binarize rule '{s}'"))
                    })?;
                    Ok(BinarizeRule::Threshold(k))
                } else {
                    Err(CliError::Usage(format!(
                        "unknown binarize rule '{s}' (use none, nonzero, presence, or threshold:K)"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for BinarizeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinarizeRule::None => write!(f, "none"),
            BinarizeRule::Nonzero => write!(f, "nonzero"),
            BinarizeRule::Presence => write!(f, "presence"),
            BinarizeRule::Threshold(k) => write!(f, "threshold:{k}"),
        }
    }
}

/// Reads a delimited numeric file. A non-numeric first row becomes column
/// labels; a non-numeric first column becomes row labels. Ragged rows and
/// non-numeric body cells are reported with their line number.
pub fn ingest(path: &Path, delimiter: u8, rule: BinarizeRule) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;

    let mut records: Vec<(u64, Vec<String>)> = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| CliError::Data(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        records.push((line, record.iter().map(str::to_string).collect()));
    }
    if records.is_empty() {
        return Err(CliError::Data(format!("{}: empty file", path.display())));
    }

    let is_num = |s: &str| s.trim().parse::<f64>().is_ok();
    let col_labels = !records[0].1.iter().skip(1).all(|c| is_num(c));
    let header = if col_labels {
        Some(records.remove(0).1)
    } else {
        None
    };
    if records.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }
    let row_labels = !is_num(&records[0].1[0]);
    let skip = usize::from(row_labels);

    let width = records[0].1.len();
    let mut rows = Vec::with_capacity(records.len());
    let mut labels = Vec::new();
    for (line, cells) in &records {
        if cells.len() != width {
            return Err(CliError::Data(format!(
                "line {line}: expected {width} fields, found {}",
                cells.len()
            )));
        }
        if row_labels {
            labels.push(cells[0].clone());
        }
        let mut row = Vec::with_capacity(width - skip);
        for (j, cell) in cells.iter().enumerate().skip(skip) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CliError::Data(format!(
                    "line {line}, column {}: '{cell}' is not numeric",
                    j + 1
                ))
            })?;
            row.push(rule.apply(v));
        }
        rows.push(row);
    }

    let col_labels = header.map(|h| h.into_iter().skip(skip).collect());
    Ok(Dataset {
        rows,
        row_labels: row_labels.then_some(labels),
        col_labels,
    })
}

fn format_cell(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        // Shortest representation that parses back to the same value.
        format!("{v}")
    }
}

/// Writes a dataset back out as CSV (labels included when present), so
/// that re-ingesting reproduces it.
pub fn write_csv<W: std::io::Write>(dataset: &Dataset, writer: &mut W) -> CliResult<()> {
    if let Some(cols) = &dataset.col_labels {
        let mut header = Vec::new();
        if dataset.row_labels.is_some() {
            header.push("id".to_string());
        }
        header.extend(cols.iter().cloned());
        writeln!(writer, "{}", header.join(","))?;
    }
    for (i, row) in dataset.rows.iter().enumerate() {
        let mut cells = Vec::with_capacity(row.len() + 1);
        if let Some(labels) = &dataset.row_labels {
            cells.push(labels[i].clone());
        }
        cells.extend(row.iter().map(|&v| format_cell(v)));
        writeln!(writer, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("none".parse::<BinarizeRule>().unwrap(), BinarizeRule::None);
        assert_eq!(
            "threshold:32".parse::<BinarizeRule>().unwrap(),
            BinarizeRule::Threshold(32.0)
        );
        assert_eq!(
            "presence".parse::<BinarizeRule>().unwrap(),
            BinarizeRule::Presence
        );
        assert!("bogus".parse::<BinarizeRule>().is_err());
        assert!("threshold:x".parse::<BinarizeRule>().is_err());
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let rule = BinarizeRule::Threshold(32.0);
        assert_eq!(rule.apply(32.0), 1.0);
        assert_eq!(rule.apply(31.0), 0.0);
    }

    #[test]
    fn nonzero_keeps_zero_columns_zero() {
        let f = write_temp("0,5\n0,0\n0,2\n");
        let d = ingest(f.path(), b',', BinarizeRule::Nonzero).unwrap();
        assert_eq!(d.rows, vec![vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn header_and_row_labels_detected() {
        let f = write_temp("id,a,b\nr1,1,0\nr2,0,1\n");
        let d = ingest(f.path(), b',', BinarizeRule::None).unwrap();
        assert_eq!(d.rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(d.row_labels.as_deref().unwrap(), ["r1", "r2"]);
        assert_eq!(d.col_labels.as_deref().unwrap(), ["a", "b"]);
    }

    #[test]
    fn ragged_and_non_numeric_rows_report_lines() {
        let f = write_temp("1,0\n1\n");
        let err = ingest(f.path(), b',', BinarizeRule::None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let f = write_temp("1,0\n1,x\n");
        let err = ingest(f.path(), b',', BinarizeRule::None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn roundtrip_through_write_csv() {
        let f = write_temp("id,a,b\nr1,1,0\nr2,0,1\n");
        let d = ingest(f.path(), b',', BinarizeRule::None).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let f2 = write_temp(std::str::from_utf8(&buf).unwrap());
        let d2 = ingest(f2.path(), b',', BinarizeRule::None).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn tsv_delimiter() {
        let f = write_temp("1\t0\n0\t1\n");
        let d = ingest(f.path(), b'\t', BinarizeRule::None).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.n_cols(), 2);
    }

    #[test]
    fn binary_validation() {
        let d = Dataset {
            rows: vec![vec![0.0, 1.0], vec![1.0, 2.0]],
            row_labels: None,
            col_labels: None,
        };
        let err = d.to_binary().unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }
}
