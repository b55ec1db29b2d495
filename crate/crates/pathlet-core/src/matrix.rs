//! Sparse binary and dense float matrices used by the learning pipeline.
//!
//! The incidence matrices (edge-by-trajectory, edge-by-candidate) are binary
//! and very sparse; the fractional decision matrix iterated by the solver is
//! small after pre-filtering and partitioning, so it stays dense.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatrixError {
    #[error("coordinate ({row}, {col}) out of range for {n_rows}x{n_cols} matrix")]
    OutOfRange {
        row: u32,
        col: u32,
        n_rows: usize,
        n_cols: usize,
    },
}

/// Binary matrix stored as sorted adjacency in both orientations.
///
/// Entries are a set of `(row, col)` coordinates with implicit value 1;
/// duplicate coordinates collapse to one entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseBinaryMatrix {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<Vec<u32>>,
    cols: Vec<Vec<u32>>,
    nnz: usize,
}

impl SparseBinaryMatrix {
    pub fn from_entries(
        n_rows: usize,
        n_cols: usize,
        entries: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, MatrixError> {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n_rows];
        for (r, c) in entries {
            if (r as usize) >= n_rows || (c as usize) >= n_cols {
                return Err(MatrixError::OutOfRange {
                    row: r,
                    col: c,
                    n_rows,
                    n_cols,
                });
            }
            rows[r as usize].push(c);
        }
        let mut cols: Vec<Vec<u32>> = vec![Vec::new(); n_cols];
        let mut nnz = 0;
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            nnz += row.len();
            for &c in row.iter() {
                cols[c as usize].push(r as u32);
            }
        }
        // column lists inherit sortedness from the row sweep
        Ok(Self {
            n_rows,
            n_cols,
            rows,
            cols,
            nnz,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            rows: vec![Vec::new(); n_rows],
            cols: vec![Vec::new(); n_cols],
            nnz: 0,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.rows
            .get(row as usize)
            .is_some_and(|r| r.binary_search(&col).is_ok())
    }

    /// Column indices of the 1-entries in `row`, ascending.
    pub fn row(&self, row: u32) -> &[u32] {
        &self.rows[row as usize]
    }

    /// Row indices of the 1-entries in `col`, ascending.
    pub fn col(&self, col: u32) -> &[u32] {
        &self.cols[col as usize]
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, cs)| cs.iter().map(move |&c| (r as u32, c)))
    }

    /// Sum of each column (number of 1-entries per column).
    pub fn col_sums(&self) -> Vec<usize> {
        self.cols.iter().map(|c| c.len()).collect()
    }

    /// Number of rows that contain at least one 1-entry.
    pub fn n_nonempty_rows(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_empty()).count()
    }
}

/// Row-major dense `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n_cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    /// Clamp every entry into `[lo, hi]`.
    pub fn clip(&mut self, lo: f64, hi: f64) {
        for v in &mut self.data {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_dedups_and_sorts() {
        let m =
            SparseBinaryMatrix::from_entries(3, 4, [(2, 1), (0, 3), (2, 1), (2, 0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(2), &[0, 1]);
        assert_eq!(m.col(1), &[2]);
        assert!(m.get(0, 3));
        assert!(!m.get(1, 0));
    }

    #[test]
    fn sparse_rejects_out_of_range() {
        let err = SparseBinaryMatrix::from_entries(2, 2, [(2, 0)]).unwrap_err();
        assert!(matches!(err, MatrixError::OutOfRange { row: 2, .. }));
    }

    #[test]
    fn dense_roundtrip() {
        let mut m = DenseMatrix::zeros(2, 3);
        m.set(1, 2, 4.5);
        m.set(0, 0, -1.0);
        assert_eq!(m.get(1, 2), 4.5);
        m.clip(0.0, 1.0);
        assert_eq!(m.get(1, 2), 1.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.row(1), &[0.0, 0.0, 1.0]);
    }
}
