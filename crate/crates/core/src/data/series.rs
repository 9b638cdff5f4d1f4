use std::path::Path;

use crate::error::{Error, Result};

/// A `T × F` matrix of observations in chronological order.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub columns: Vec<String>,
    /// Row-major, `len() * n_features()` values.
    pub values: Vec<f64>,
    pub source: String,
}

impl RawSeries {
    pub fn new(columns: Vec<String>, values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        let f = columns.len();
        if f == 0 {
            return Err(Error::Data("series has no columns".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(f) {
            return Err(Error::Data(format!(
                "series needs at least one full row of {f} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column '{}'",
                i / f,
                columns[i % f]
            )));
        }
        Ok(RawSeries {
            columns,
            values,
            source: source.into(),
        })
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.values.len() / self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let f = self.n_features();
        &self.values[t * f..(t + 1) * f]
    }

    pub fn rows(&self, start: usize, len: usize) -> &[f64] {
        let f = self.n_features();
        &self.values[start * f..(start + len) * f]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(j)
            .step_by(self.n_features())
            .copied()
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// The last `len` rows as a new series.
    pub fn tail(&self, len: usize) -> Result<RawSeries> {
        if len > self.len() {
            return Err(Error::Data(format!(
                "need {len} rows, series has {}",
                self.len()
            )));
        }
        let start = self.len() - len;
        RawSeries::new(
            self.columns.clone(),
            self.rows(start, len).to_vec(),
            self.source.clone(),
        )
    }
}

/// Reads the requested numeric columns from a headered, comma-separated
/// file. Output columns follow `columns`, not the file order. Other columns
/// (e.g. a timestamp) are ignored.
pub fn load_csv(path: &Path, columns: &[String]) -> Result<RawSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() {
        return Err(Error::Data(format!("{}: empty file", path.display())));
    }
    let mut positions = Vec::with_capacity(columns.len());
    for name in columns {
        let pos = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{}: missing column '{name}'", path.display())))?;
        positions.push(pos);
    }
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        for (name, &pos) in columns.iter().zip(&positions) {
            let cell = record.get(pos).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Data(format!(
                    "{}: row {line}, column '{name}': missing value",
                    path.display()
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {line}, column '{name}': cannot parse '{cell}' as a number",
                    path.display()
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: row {line}, column '{name}': non-finite value '{cell}'",
                    path.display()
                )));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    RawSeries::new(columns.to_vec(), values, path.display().to_string())
}

/// Header names of a CSV file, for picking default feature columns.
pub fn csv_headers(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    Ok(headers.iter().map(str::to_owned).collect())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reads_known_literals() {
        let f = write("a,b\n1,2\n3.5,-4\n0,1e3\n");
        let s = load_csv(f.path(), &cols(&["a", "b"])).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values, vec![1.0, 2.0, 3.5, -4.0, 0.0, 1000.0]);
    }

    #[test]
    fn output_order_follows_request() {
        let f = write("date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n");
        let s = load_csv(f.path(), &cols(&["b", "a"])).unwrap();
        assert_eq!(s.columns, cols(&["b", "a"]));
        assert_eq!(s.values, vec![2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn blank_cell_names_row_and_column() {
        let f = write("a,b\n1,2\n3,\n");
        let msg = load_csv(f.path(), &cols(&["a", "b"]))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("row 3") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn rejects_missing_column_garbage_and_empty_files() {
        let f = write("a,b\n1,2\n");
        assert!(load_csv(f.path(), &cols(&["c"]))
            .unwrap_err()
            .to_string()
            .contains("'c'"));
        let f = write("a\nfoo\n");
        assert!(load_csv(f.path(), &cols(&["a"]))
            .unwrap_err()
            .to_string()
            .contains("foo"));
        let f = write("");
        assert!(matches!(
            load_csv(f.path(), &cols(&["a"])),
            Err(Error::Data(_))
        ));
        let f = write("a,b\n");
        assert!(matches!(
            load_csv(f.path(), &cols(&["a"])),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_csv(Path::new("/no/such/file.csv"), &cols(&["a"])).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
        assert_eq!(err.exit_code(), 2);
    }
}
