//! Compressed sparse row storage with a fixed pattern.

use std::sync::Arc;

/// Row pointers and sorted column indices. Shared between matrices that
/// have the same structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds the pattern from per-row column lists (duplicates allowed).
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Position of entry `(row, col)` in the value array.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.col_idx[lo..hi].binary_search(&col).ok().map(|p| lo + p)
    }

    /// Whether every stored `(i, j)` has a stored `(j, i)`.
    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n)
            .all(|i| self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]].iter().all(|&j| self.position(j, i).is_some()))
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub pattern: Arc<SparsityPattern>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let rows =
            a.iter().map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect()).collect();
        let pattern = Arc::new(SparsityPattern::from_rows(rows));
        let mut m = Self::zeros(pattern.clone());
        for (i, r) in a.iter().enumerate() {
            for p in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                m.values[p] = r[pattern.col_idx[p]];
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        let p = self.pattern.position(row, col).expect("entry outside sparsity pattern");
        self.values[p] += v;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern.position(row, col).map_or(0.0, |p| self.values[p])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.values[k] * x[p.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec(x, &mut y);
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (maximum absolute row sum); bounds the spectral norm
    /// of a symmetric matrix.
    pub fn norm_inf(&self) -> f64 {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| self.values[p.row_ptr[i]..p.row_ptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |M_ij - M_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let p = &self.pattern;
        let mut worst = 0.0f64;
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_products() {
        let a = vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]];
        let m = CsrMatrix::from_dense(&a);
        assert_eq!(m.pattern.nnz(), 7);
        assert!(m.pattern.is_structurally_symmetric());
        assert_eq!(m.symmetry_defect(), 0.0);
        assert_eq!(m.mul(&[1.0, 1.0, 1.0]), vec![5.0, 4.5, 2.5]);
        assert_eq!(m.quadratic_form(&[1.0, 0.0, 1.0]), 6.0);
        assert_eq!(m.norm_inf(), 5.0);
        assert_eq!(m.diagonal(), vec![4.0, 3.0, 2.0]);
        assert_eq!(m.get(0, 2), 0.0);
    }
}
