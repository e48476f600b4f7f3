//! Dataset container and its CSV form.

use crate::error::{FscreError, Result};
use crate::linalg::Matrix;
use std::path::Path;

/// Row-major binary matrix (contamination masks, imputation flags).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.cols + j] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn row_any(&self, i: usize) -> bool {
        self.bits[i * self.cols..(i + 1) * self.cols].iter().any(|&b| b)
    }

    /// Mask restricted to columns `from..` (drops leading columns).
    pub fn drop_leading_columns(&self, k: usize) -> BinaryMask {
        let mut out = BinaryMask::new(self.rows, self.cols - k);
        for i in 0..self.rows {
            for j in k..self.cols {
                out.set(i, j - k, self.get(i, j));
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// Generation truth carried alongside simulated data.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub beta: Vec<f64>,
    /// Indices `j` with `beta[j] != 0`, ascending.
    pub active_set: Vec<usize>,
    pub mask_x: BinaryMask,
    pub mask_y: Vec<bool>,
    pub noise_sd: f64,
}

impl GroundTruth {
    pub fn new(beta: Vec<f64>, n: usize, noise_sd: f64) -> Self {
        let active_set = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect();
        let p = beta.len();
        Self {
            beta,
            active_set,
            mask_x: BinaryMask::new(n, p),
            mask_y: vec![false; n],
            noise_sd,
        }
    }
}

/// Observed response and predictors, plus optional truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Matrix,
    pub names: Vec<String>,
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Matrix) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(FscreError::shape(
                format!("{} responses", x.rows()),
                format!("{} responses", y.len()),
            ));
        }
        let names = (1..=x.cols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            y,
            x,
            names,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: GroundTruth) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    /// Joint matrix `[y, X]` with the response in column 0.
    pub fn joint(&self) -> Matrix {
        let (n, p) = (self.n(), self.p());
        let mut data = Vec::with_capacity(n * (p + 1));
        for i in 0..n {
            data.push(self.y[i]);
            data.extend_from_slice(self.x.row(i));
        }
        Matrix::new(n, p + 1, data).expect("joint dimensions")
    }

    /// Column names of the joint matrix, response first.
    pub fn joint_names(&self) -> Vec<String> {
        std::iter::once("y".to_string())
            .chain(self.names.iter().cloned())
            .collect()
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if header.len() < 2 {
            return Err(FscreError::Parse(format!(
                "{}: need a response column and at least one predictor",
                path.display()
            )));
        }
        let mut y = Vec::new();
        let mut data = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = parse_record(&rec, header.len(), line + 2, path)?;
            y.push(row[0]);
            data.extend_from_slice(&row[1..]);
        }
        let n = y.len();
        if n == 0 {
            return Err(FscreError::Parse(format!("{}: no data rows", path.display())));
        }
        let x = Matrix::new(n, header.len() - 1, data)?;
        let mut ds = Dataset::new(y, x)?;
        ds.names = header[1..].to_vec();
        Ok(ds)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.joint_names())?;
        for i in 0..self.n() {
            let mut rec = vec![fmt_f64(self.y[i])];
            rec.extend(self.x.row(i).iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the contamination masks as a 0/1 CSV parallel to
    /// [`Dataset::write_csv`].
    pub fn write_mask_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let truth = self
            .truth
            .as_ref()
            .ok_or_else(|| FscreError::InvalidConfig("dataset carries no ground truth".into()))?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.joint_names())?;
        for i in 0..self.n() {
            let mut rec = vec![u8::from(truth.mask_y[i]).to_string()];
            rec.extend((0..self.p()).map(|j| u8::from(truth.mask_x.get(i, j)).to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn parse_record(
    rec: &csv::StringRecord,
    width: usize,
    line: usize,
    path: &Path,
) -> Result<Vec<f64>> {
    if rec.len() != width {
        return Err(FscreError::Parse(format!(
            "{}:{line}: expected {width} fields, found {}",
            path.display(),
            rec.len()
        )));
    }
    rec.iter()
        .enumerate()
        .map(|(k, field)| {
            let field = field.trim();
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(FscreError::Parse(format!(
                    "{}:{line}: field {} is not a finite number: {field:?}",
                    path.display(),
                    k + 1
                ))),
            }
        })
        .collect()
}

/// Shortest round-tripping representation.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_mask_csv(mask: &BinaryMask, header: &[String], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..mask.rows() {
        w.write_record((0..mask.cols()).map(|j| u8::from(mask.get(i, j)).to_string()))?;
    }
    w.flush()?;
    Ok(())
}
