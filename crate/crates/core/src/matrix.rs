//! Square matrices keyed by socioeconomic class pairs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// n×n matrix over classes `1..=n`, with missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMatrix {
    pub label: String,
    n: usize,
    values: Vec<Option<f64>>,
}

impl ClassMatrix {
    pub fn new(label: impl Into<String>, n: usize) -> Self {
        ClassMatrix {
            label: label.into(),
            n,
            values: vec![None; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Zero-based access.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Option<f64>) {
        self.values[i * self.n + j] = v;
    }

    pub fn set_symmetric(&mut self, i: usize, j: usize, v: Option<f64>) {
        self.set(i, j, v);
        self.set(j, i, v);
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn diagonal(&self) -> Vec<Option<f64>> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, Option<f64>)> + '_ {
        (0..self.n).flat_map(move |i| (0..self.n).map(move |j| (i, j, self.get(i, j))))
    }

    /// Mean over present cells matching `pred(i, j)`.
    pub fn mean_where(&self, pred: impl Fn(usize, usize) -> bool) -> Option<f64> {
        let (s, c) = self
            .cells()
            .filter(|&(i, j, _)| pred(i, j))
            .filter_map(|(_, _, v)| v)
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        (c > 0).then(|| s / c as f64)
    }

    /// CSV with a header row and column of class indices; missing cells are `NA`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["class".to_string()];
        header.extend((1..=self.n).map(|j| j.to_string()));
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut row = vec![(i + 1).to_string()];
            row.extend((0..self.n).map(|j| match self.get(i, j) {
                Some(v) => format!("{v}"),
                None => "NA".into(),
            }));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<matrix>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: std::io::Read>(reader: R, label: &str, origin: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let n = rdr.headers()?.len().saturating_sub(1);
        let mut m = ClassMatrix::new(label, n);
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::parse(origin, i as u64 + 2, e.to_string()))?;
            if i >= n || row.len() != n + 1 {
                return Err(Error::parse(origin, i as u64 + 2, "matrix is not square"));
            }
            for j in 0..n {
                let cell = &row[j + 1];
                let v = if cell == "NA" {
                    None
                } else {
                    Some(
                        cell.parse()
                            .map_err(|_| Error::parse(origin, i as u64 + 2, format!("bad cell `{cell}`")))?,
                    )
                };
                m.set(i, j, v);
            }
        }
        Ok(m)
    }
}
