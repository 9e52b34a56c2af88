//! Row-major observation matrices.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// `n` observations in `ℝ^D`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return config("dataset dimension must be at least 1");
        }
        if values.len() % dim != 0 {
            return config(format!(
                "{} values cannot be split into rows of dimension {dim}",
                values.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return config("dataset has no rows");
        };
        let dim = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return config(format!(
                    "row {i} has {} columns, expected {dim}",
                    row.len()
                ));
            }
            values.extend_from_slice(row);
        }
        Self::new(dim, values)
    }

    /// One-dimensional data.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            dim: self.dim,
            values,
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut means = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Per-coordinate sample variances (denominator `n - 1`; zero when `n = 1`).
    pub fn column_variances(&self) -> Vec<f64> {
        let n = self.len();
        let means = self.column_means();
        let mut vars = vec![0.0; self.dim];
        for row in self.rows() {
            for ((v, x), m) in vars.iter_mut().zip(row).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        if n < 2 {
            return vec![0.0; self.dim];
        }
        vars.iter_mut().for_each(|v| *v /= (n - 1) as f64);
        vars
    }

    /// Multiplies coordinate `d` of every row by `scales[d]`.
    pub fn scaled(&self, scales: &[f64]) -> Dataset {
        assert_eq!(scales.len(), self.dim);
        let values = self
            .values
            .chunks_exact(self.dim)
            .flat_map(|row| row.iter().zip(scales).map(|(x, s)| x * s))
            .collect();
        Dataset {
            dim: self.dim,
            values,
        }
    }
}
