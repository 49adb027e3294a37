//! CSV and JSON formats: design and response matrices, the dataset
//! envelope, fit records and result tables.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::designs::{CovarianceModel, Dataset};
use crate::error::{check_dims, Error, Result};
use crate::solvers::LassoFit;

/// Shortest round-trip decimal text, switching to exponent notation for very
/// large or small magnitudes.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// A rectangular table of already-formatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }
}

fn csv_writer<W: std::io::Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(inner)
}

/// Matrix as CSV with header `c0, c1, …`.
pub fn matrix_table(m: &DMatrix<f64>) -> Table {
    let mut t = Table::new((0..m.ncols()).map(|j| format!("c{j}")));
    for i in 0..m.nrows() {
        t.push((0..m.ncols()).map(|j| format_f64(m[(i, j)])).collect());
    }
    t
}

pub fn vector_table(name: &str, v: &DVector<f64>) -> Table {
    let mut t = Table::new([name]);
    for x in v.iter() {
        t.push(vec![format_f64(*x)]);
    }
    t
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    matrix_table(m).write_csv(path)
}

pub fn write_vector_csv(path: &Path, name: &str, v: &DVector<f64>) -> Result<()> {
    vector_table(name, v).write_csv(path)
}

/// Read a numeric CSV with a header row.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let cols = reader.headers()?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != cols {
            return Err(Error::DimensionMismatch(format!(
                "{}: row {} has {} fields, header has {cols}",
                path.display(),
                line + 1,
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidParameter(format!("{}: row {}: cannot parse {field:?} as a number", path.display(), line + 1))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    check_dims("vector CSV column count", m.ncols(), 1)?;
    Ok(DVector::from_column_slice(m.as_slice()))
}

/// JSON envelope pointing at the CSV files of a dataset. Paths are relative
/// to the envelope's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEnvelope {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
    #[serde(rename = "X_path")]
    pub x_path: String,
    pub y_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceModel>,
}

pub const DATASET_FILE: &str = "dataset.json";

/// Write `X.csv`, `y.csv`, optionally `w.csv`, and `dataset.json` into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset, covariance: Option<&CovarianceModel>) -> Result<PathBuf> {
    data.validate()?;
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("X.csv"), &data.x)?;
    write_vector_csv(&dir.join("y.csv"), "y", &data.y)?;
    let w_path = match &data.w {
        Some(w) => {
            write_vector_csv(&dir.join("w.csv"), "w", w)?;
            Some("w.csv".to_string())
        }
        None => None,
    };
    let env = DatasetEnvelope {
        n: data.n(),
        p: data.p(),
        seed: data.seed,
        sigma: data.sigma,
        theta_star: data.theta_star.as_ref().map(|t| t.iter().copied().collect()),
        x_path: "X.csv".into(),
        y_path: "y.csv".into(),
        w_path,
        covariance: covariance.cloned(),
    };
    let path = dir.join(DATASET_FILE);
    write_json(&path, &env)?;
    Ok(path)
}

/// Load a dataset from its envelope (or from a directory holding one).
pub fn read_dataset(path: &Path) -> Result<(Dataset, Option<CovarianceModel>)> {
    let path = if path.is_dir() { path.join(DATASET_FILE) } else { path.to_path_buf() };
    let env: DatasetEnvelope = read_json(&path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let x = read_matrix_csv(&base.join(&env.x_path))?;
    let y = read_vector_csv(&base.join(&env.y_path))?;
    check_dims("design rows", x.nrows(), env.n)?;
    check_dims("design columns", x.ncols(), env.p)?;
    let w = env.w_path.as_ref().map(|wp| read_vector_csv(&base.join(wp))).transpose()?;
    let data = Dataset {
        x,
        y,
        theta_star: env.theta_star.map(DVector::from_vec),
        w,
        sigma: env.sigma,
        seed: env.seed,
    };
    data.validate()?;
    if let Some(cov) = &env.covariance {
        check_dims("covariance dimension", cov.p, env.p)?;
    }
    Ok((data, env.covariance))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Lasso fit with the coefficient vector stored as `(index, value)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub lambda: f64,
    pub p: usize,
    pub theta_hat: Vec<(usize, f64)>,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

impl FitRecord {
    pub fn from_fit(fit: &LassoFit) -> Self {
        Self {
            lambda: fit.lambda,
            p: fit.theta_hat.len(),
            theta_hat: fit.support.iter().map(|&i| (i, fit.theta_hat[i])).collect(),
            gap: fit.gap,
            iterations: fit.iterations,
            converged: fit.converged,
            objective: fit.objective,
        }
    }

    pub fn dense(&self) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.p);
        for &(i, x) in &self.theta_hat {
            if i >= self.p {
                return Err(Error::DimensionMismatch(format!("fit index {i} out of range for p = {}", self.p)));
            }
            v[i] = x;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::SimulationSpec;

    #[test]
    fn float_format_round_trips() {
        for &x in &[0.0, 1.5, -2.25e-7, 3e20, 0.1 + 0.2, f64::MIN_POSITIVE, 123456.789] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_f64(0.5), "0.5");
        assert_eq!(format_f64(1e-7), "1e-7");
    }

    #[test]
    fn table_uses_lf_and_quotes_when_needed() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(t.to_csv_string().unwrap(), "a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SimulationSpec {
            covariance: CovarianceModel::circulant(0.8, 6),
            n: 9,
            s0: 2,
            amplitude: 0.15,
            sigma: 1.0,
        };
        let data = spec.simulate(7).unwrap();
        write_dataset(dir.path(), &data, Some(&spec.covariance)).unwrap();
        let (back, cov) = read_dataset(dir.path()).unwrap();
        assert_eq!(back.x, data.x);
        assert_eq!(back.y, data.y);
        assert_eq!(back.w, data.w);
        assert_eq!(back.theta_star, data.theta_star);
        assert_eq!(cov, Some(spec.covariance.clone()));
        let text = fs::read_to_string(dir.path().join("X.csv")).unwrap();
        assert!(text.starts_with("c0,c1,c2,c3,c4,c5\n"));
    }

    #[test]
    fn ragged_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "c0,c1\n1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&path).is_err());
        fs::write(&path, "c0\nabc\n").unwrap();
        assert!(matches!(read_matrix_csv(&path), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn fit_record_round_trip() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let fit = crate::solvers::lasso_fit(&x, &y, 0.05, &Default::default()).unwrap();
        let rec = FitRecord::from_fit(&fit);
        let json = serde_json::to_string(&rec).unwrap();
        let back: FitRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.dense().unwrap(), fit.theta_hat);
    }
}
