use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Which CSV column holds the response: a header name or a zero-based index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl FromStr for ColumnSelector {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        })
    }
}

impl fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnSelector::Index(i) => write!(f, "{i}"),
            ColumnSelector::Name(s) => f.write_str(s),
        }
    }
}

impl ColumnSelector {
    fn resolve(&self, headers: &[String]) -> Result<usize> {
        match self {
            ColumnSelector::Name(name) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.clone())),
            // a header literally named "3" wins over index 3
            ColumnSelector::Index(i) => match headers.iter().position(|h| *h == i.to_string()) {
                Some(p) => Ok(p),
                None if *i < headers.len() => Ok(*i),
                None => Err(Error::MissingColumn(i.to_string())),
            },
        }
    }
}

/// Reads a headed, all-numeric CSV. Ids follow row order.
pub fn load_csv(path: impl AsRef<Path>, response: &ColumnSelector) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, response)
}

pub(crate) fn read_csv<R: std::io::Read>(reader: R, response: &ColumnSelector) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, "header"))?
        .iter()
        .map(str::to_string)
        .collect();
    let target = response.resolve(&headers)?;

    let width = headers.len();
    let mut features = Vec::new();
    let mut ys = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, "-"))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: headers[j].clone(),
                message: if cell.is_empty() {
                    "blank cell".to_string()
                } else {
                    format!("`{cell}` is not a number")
                },
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: headers[j].clone(),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            if j == target {
                ys.push(value);
            } else {
                features.push(value);
            }
        }
    }
    let n = ys.len();
    let feature_names = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::from_parts(
        Matrix::new(n, width - 1, features)?,
        Vector::new(ys)?,
        (0..n).collect(),
        feature_names,
        headers[target].clone(),
    )
}

fn csv_error(e: csv::Error, column: &str) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        row,
        column: column.to_string(),
        message: e.to_string(),
    }
}

/// Writes features then the response as the last column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(ds, file).map_err(|e| match e {
        Error::Serde(msg) => Error::io(path, std::io::Error::other(msg)),
        other => other,
    })
}

pub(crate) fn write_csv_to<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Serde(e.to_string());
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(ds.response_name());
    wtr.write_record(&header).map_err(to_err)?;
    let mut cells = Vec::with_capacity(header.len());
    for (row, y) in ds.features().iter_rows().zip(ds.response().iter()) {
        cells.clear();
        cells.extend(row.iter().map(f64::to_string));
        cells.push(y.to_string());
        wtr.write_record(&cells).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_by_name_and_index() {
        let text = "a,b,y\n1,2,3\n4,5,6\n7,8,9\n";
        let ds = read_csv(text.as_bytes(), &ColumnSelector::Name("y".into())).unwrap();
        assert_eq!((ds.len(), ds.n_features()), (3, 2));
        assert_eq!(ds.response().as_slice(), &[3.0, 6.0, 9.0]);
        assert_eq!(ds.ids(), &[0, 1, 2]);
        let by_index = read_csv(text.as_bytes(), &ColumnSelector::Index(0)).unwrap();
        assert_eq!(by_index.response().as_slice(), &[1.0, 4.0, 7.0]);
        assert_eq!(by_index.feature_names(), &["b", "y"]);
    }

    #[test]
    fn blank_cell_names_row_and_column() {
        let text = "a,b,y\n1,2,3\n4,,6\n";
        match read_csv(text.as_bytes(), &"y".parse().unwrap()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_missing() {
        let ragged = "a,y\n1,2\n3\n";
        assert!(matches!(
            read_csv(ragged.as_bytes(), &"y".parse().unwrap()),
            Err(Error::Parse { .. })
        ));
        let text = "a,y\n1,2\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &"z".parse().unwrap()),
            Err(Error::MissingColumn(_))
        ));
        assert!(matches!(
            read_csv(text.as_bytes(), &ColumnSelector::Index(5)),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let text = "a,b,y\n0.1,2e-7,3\n-4.25,1e300,0.3333333333333333\n";
        let ds = read_csv(text.as_bytes(), &"y".parse().unwrap()).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&ds, &mut buf).unwrap();
        let again = read_csv(buf.as_slice(), &"y".parse().unwrap()).unwrap();
        assert_eq!(ds, again);
    }
}
