//! Dataset CSV parsing and atomic CSV output.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::embedding::TrainingSet;

use super::CliError;

/// Read a headered CSV with input columns `x0..x{d-1}` and output columns `y0..y{k-1}`.
pub fn read_dataset(path: &Path) -> Result<TrainingSet, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read dataset {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Config(format!("dataset {}: {e}", path.display())))?
        .clone();

    let mut xcols = Vec::new();
    let mut ycols = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        let (prefix, idx) = h.split_at(h.len().min(1));
        let idx: usize = idx
            .parse()
            .map_err(|_| CliError::Config(format!("dataset {}: unexpected column '{h}'", path.display())))?;
        match prefix {
            "x" => xcols.push((idx, c)),
            "y" => ycols.push((idx, c)),
            _ => {
                return Err(CliError::Config(format!(
                    "dataset {}: unexpected column '{h}'",
                    path.display()
                )))
            }
        }
    }
    for (name, cols) in [("x", &mut xcols), ("y", &mut ycols)] {
        cols.sort_unstable();
        if cols.is_empty() || cols.iter().enumerate().any(|(i, &(idx, _))| i != idx) {
            return Err(CliError::Config(format!(
                "dataset {}: need contiguous columns {name}0..{name}{{k-1}}",
                path.display()
            )));
        }
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("dataset {}: {e}", path.display())))?;
        let field = |c: usize| -> Result<f64, CliError> {
            rec.get(c).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| {
                CliError::Config(format!(
                    "dataset {}: row {} column {}: not a number",
                    path.display(),
                    line + 2,
                    &headers[c]
                ))
            })
        };
        for &(_, c) in xcols.iter() {
            xs.push(field(c)?);
        }
        for &(_, c) in ycols.iter() {
            ys.push(field(c)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Config(format!("dataset {} has no rows", path.display())));
    }
    let xs = Array2::from_shape_vec((rows, xcols.len()), xs).expect("row-major fill");
    let ys = Array2::from_shape_vec((rows, ycols.len()), ys).expect("row-major fill");
    TrainingSet::new(xs, ys).map_err(|e| CliError::Config(format!("dataset {}: {e}", path.display())))
}

/// Write a training set in the dataset format.
pub fn write_dataset(path: &Path, data: &TrainingSet) -> Result<(), CliError> {
    let mut t = Table::new(
        (0..data.xs().ncols())
            .map(|i| format!("x{i}"))
            .chain((0..data.ys().ncols()).map(|i| format!("y{i}"))),
    );
    for (x, y) in data.xs().outer_iter().zip(data.ys().outer_iter()) {
        t.push(x.iter().chain(y.iter()).map(|v| num(*v)));
    }
    t.write(path)
}

/// Canonical float formatting (shortest round-trip representation).
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Fixed-column CSV accumulated in memory and written atomically.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &self.to_bytes())
    }
}

/// Write via a temporary sibling file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Output(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| CliError::Output(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let t = TrainingSet::new(array![[0.5, -1.0], [2.0, 3.25]], array![[1.0], [1e-17]]).unwrap();
        write_dataset(&p, &t).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), t);
    }

    #[test]
    fn columns_may_be_reordered() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "y0,x1,x0\n1,2,3\n").unwrap();
        let t = read_dataset(&p).unwrap();
        assert_eq!(t.xs(), array![[3.0, 2.0]]);
        assert_eq!(t.ys(), array![[1.0]]);
    }

    #[test]
    fn malformed_datasets_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        for body in [
            "x0,z0\n1,2\n",
            "x0,x2,y0\n1,2,3\n",
            "x0,y0\n",
            "x0,y0\n1,abc\n",
            "x0\n1\n",
        ] {
            fs::write(&p, body).unwrap();
            assert!(matches!(read_dataset(&p), Err(CliError::Config(_))), "{body}");
        }
        assert!(read_dataset(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn table_bytes_are_newline_terminated() {
        let mut t = Table::new(["a", "b"]);
        t.push([num(0.1), num(2.0)]);
        assert_eq!(t.to_bytes(), b"a,b\n0.1,2\n");
    }
}
