use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::matrix::{FeatureMatrix, LabelVector};
use crate::{Error, Result};

const LABEL_COLUMN: &str = "label";

/// Feature rows with optional ground truth.
#[derive(Debug, Clone)]
pub struct TabularData {
    pub matrix: FeatureMatrix,
    pub labels: Option<LabelVector>,
}

impl TabularData {
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            matrix: self.matrix.select_rows(rows),
            labels: self.labels.as_ref().map(|l| {
                LabelVector::pointwise(rows.iter().map(|&r| l.marks()[r]).collect())
            }),
        }
    }
}

pub fn load_tabular_csv(path: impl AsRef<Path>) -> Result<TabularData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tabular_csv(file)
}

/// Header of feature names plus an optional `label` column in {0, 1}.
/// A header-only or empty input yields zero rows.
pub fn read_tabular_csv<R: Read>(reader: R) -> Result<TabularData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_col = header.iter().position(|h| h == LABEL_COLUMN);
    let names: Vec<String> = header
        .iter()
        .filter(|h| h.as_str() != LABEL_COLUMN)
        .cloned()
        .collect();
    if names.is_empty() {
        return Err(Error::Schema("tabular file has no feature columns".into()));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("{} fields, expected {}", rec.len(), header.len()),
            });
        }
        for (c, raw) in rec.iter().enumerate() {
            if Some(c) == label_col {
                labels.push(match raw {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Parse {
                            line,
                            message: format!("label `{other}` is not 0 or 1"),
                        })
                    }
                });
                continue;
            }
            let v = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column `{}`: `{raw}` is not a finite number", header[c]),
                })?;
            values.push(v);
        }
    }
    Ok(TabularData {
        matrix: FeatureMatrix::new(names, values)?,
        labels: label_col.map(|_| LabelVector::pointwise(labels)),
    })
}

pub fn write_tabular_csv<W: Write>(writer: W, data: &TabularData) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = data.matrix.column_names().iter().map(String::as_str).collect();
    if data.labels.is_some() {
        header.push(LABEL_COLUMN);
    }
    wtr.write_record(&header)?;
    for (i, row) in data.matrix.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
        if let Some(l) = &data.labels {
            rec.push(if l.marks()[i] { "1" } else { "0" }.into());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Shuttle classes treated as normal behaviour.
pub const SHUTTLE_NORMAL_CLASSES: [u32; 2] = [1, 4];

pub fn shuttle_label(class: u32) -> bool {
    !SHUTTLE_NORMAL_CLASSES.contains(&class)
}

/// Reads the Statlog Shuttle files (`shuttle.trn`, `shuttle.tst`, or their
/// concatenation): nine whitespace-separated integer attributes followed by
/// the class in 1..=7.
pub fn read_shuttle<R: Read>(reader: R) -> Result<TabularData> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io("<shuttle>", e))?;
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 10 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        for f in &fields[..9] {
            values.push(f.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("attribute `{f}` is not numeric"),
            })?);
        }
        let class: u32 = fields[9].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("class `{}` is not an integer", fields[9]),
        })?;
        if !(1..=7).contains(&class) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("class {class} outside 1..=7"),
            });
        }
        labels.push(shuttle_label(class));
    }
    let names = (1..=9).map(|j| format!("a{j}")).collect();
    Ok(TabularData {
        matrix: FeatureMatrix::new(names, values)?,
        labels: Some(LabelVector::pointwise(labels)),
    })
}

pub fn load_shuttle(path: impl AsRef<Path>) -> Result<TabularData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_shuttle(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabular_with_label() {
        let csv = "a,b,label\n1,2,0\n3,4,1\n";
        let d = read_tabular_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.matrix.n_rows(), 2);
        assert_eq!(d.matrix.column_names(), &["a", "b"]);
        assert_eq!(d.labels.unwrap().marks(), &[false, true]);
    }

    #[test]
    fn header_only_is_empty() {
        let d = read_tabular_csv("a,b\n".as_bytes()).unwrap();
        assert_eq!(d.matrix.n_rows(), 0);
        assert!(d.labels.is_none());
    }

    #[test]
    fn roundtrip() {
        let csv = "a,b,label\n1.5,-2,0\n3,4e-7,1\n";
        let d = read_tabular_csv(csv.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_tabular_csv(&mut buf, &d).unwrap();
        let back = read_tabular_csv(buf.as_slice()).unwrap();
        assert_eq!(back.matrix, d.matrix);
        assert_eq!(back.labels, d.labels);
    }

    #[test]
    fn shuttle_class_mapping() {
        let raw = "50 21 77 0 28 0 27 48 22 2\n55 0 81 0 -6 11 25 88 64 4\n56 0 96 0 52 -4 40 44 4 1\n";
        let d = read_shuttle(raw.as_bytes()).unwrap();
        assert_eq!(d.matrix.n_cols(), 9);
        assert_eq!(d.labels.unwrap().marks(), &[true, false, false]);
        assert!(read_shuttle("1 2 3\n".as_bytes()).is_err());
        assert!(read_shuttle("1 2 3 4 5 6 7 8 9 8\n".as_bytes()).is_err());
    }
}
