use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the largest matrix entry are treated as zero.
pub const PIVOT_THRESHOLD: f64 = 1e-14;

/// A square linear system `A x = b` with `A` held as a coordinate list.
///
/// Duplicate `(row, col)` entries accumulate additively, which is what lets
/// element stamps be appended in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    dimension: usize,
    entries: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl LinearSystem {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            entries: Vec::new(),
            rhs: vec![0.0; dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Adds `value` at `(row, col)`.
    ///
    /// # Panics
    /// If either index is outside the system dimension.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            row < self.dimension && col < self.dimension,
            "entry ({row}, {col}) outside dimension {}",
            self.dimension
        );
        self.entries.push((row, col, value));
    }

    pub fn add_rhs(&mut self, row: usize, value: f64) {
        assert!(row < self.dimension, "rhs row {row} outside dimension {}", self.dimension);
        self.rhs[row] += value;
    }

    /// `A x`
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dimension];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// `A x - b`
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.mul(x);
        for (yi, bi) in y.iter_mut().zip(&self.rhs) {
            *yi -= bi;
        }
        y
    }

    /// Accumulated matrix entry at `(row, col)`. Linear scan; meant for tests and diagnostics.
    pub fn coefficient(&self, row: usize, col: usize) -> f64 {
        self.entries
            .iter()
            .filter(|&&(r, c, _)| r == row && c == col)
            .map(|&(_, _, v)| v)
            .sum()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.dimension, &self.entries)
    }

    /// Row-major dense copy of the accumulated matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dimension;
        let mut a = vec![0.0; n * n];
        for &(r, c, v) in &self.entries {
            a[r * n + c] += v;
        }
        a
    }
}

/// Compressed sparse row matrix with sorted, de-duplicated column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub dimension: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(dimension: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; dimension + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dimension {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dimension,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

type SparseRow = Vec<(usize, f64)>;

/// `target -= factor * source`, both sorted by column. Entries in `skip` column are dropped.
fn axpy_rows(target: &SparseRow, factor: f64, source: &SparseRow, skip: usize) -> SparseRow {
    let mut out = Vec::with_capacity(target.len() + source.len());
    let (mut i, mut j) = (0, 0);
    while i < target.len() || j < source.len() {
        let ct = target.get(i).map_or(usize::MAX, |e| e.0);
        let cs = source.get(j).map_or(usize::MAX, |e| e.0);
        let (col, val) = if ct == cs {
            let v = target[i].1 - factor * source[j].1;
            i += 1;
            j += 1;
            (ct, v)
        } else if ct < cs {
            i += 1;
            (ct, target[i - 1].1)
        } else {
            j += 1;
            (cs, -factor * source[j - 1].1)
        };
        if col != skip {
            out.push((col, val));
        }
    }
    out
}

/// Solves the system with sparse Gaussian elimination and partial pivoting.
///
/// Rows are kept as sorted sparse vectors; at each column the pivot is the
/// active row with the largest leading entry. Fill-in is created on demand.
pub fn lu_solve(system: &LinearSystem) -> Result<Vec<f64>> {
    let csr = system.to_csr();
    let n = csr.dimension;
    if n == 0 {
        return Ok(Vec::new());
    }
    let threshold = PIVOT_THRESHOLD * csr.max_abs();
    if threshold == 0.0 {
        return Err(Error::SingularMatrix { column: 0 });
    }

    let mut rows: Vec<SparseRow> = (0..n).map(|r| csr.row(r).collect()).collect();
    let mut rhs = system.rhs().to_vec();
    let mut active: Vec<usize> = (0..n).collect();
    let mut upper: Vec<(SparseRow, f64)> = Vec::with_capacity(n);

    for k in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for (slot, &r) in active.iter().enumerate() {
            if let Some(&(c, v)) = rows[r].first() {
                if c == k && best.is_none_or(|(_, b)| v.abs() > b) {
                    best = Some((slot, v.abs()));
                }
            }
        }
        let (slot, magnitude) = best.ok_or(Error::SingularMatrix { column: k })?;
        if magnitude <= threshold {
            return Err(Error::SingularMatrix { column: k });
        }
        let p = active.swap_remove(slot);
        let pivot_row = core::mem::take(&mut rows[p]);
        let pivot = pivot_row[0].1;
        for &r in &active {
            if let Some(&(c, v)) = rows[r].first() {
                if c == k {
                    let factor = v / pivot;
                    rows[r] = axpy_rows(&rows[r], factor, &pivot_row, k);
                    rhs[r] -= factor * rhs[p];
                }
            }
        }
        upper.push((pivot_row, rhs[p]));
    }

    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let (row, b) = &upper[k];
        let mut acc = *b;
        for &(c, v) in &row[1..] {
            acc -= v * x[c];
        }
        x[k] = acc / row[0].1;
    }
    Ok(x)
}

/// Dense LU with partial pivoting. Kept as an independent reference path for the sparse solver.
pub fn dense_lu_solve(system: &LinearSystem) -> Result<Vec<f64>> {
    let n = system.dimension();
    let mut a = system.to_dense();
    let mut b = system.rhs().to_vec();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if n == 0 {
        return Ok(Vec::new());
    }
    let threshold = PIVOT_THRESHOLD * scale;
    if threshold == 0.0 {
        return Err(Error::SingularMatrix { column: 0 });
    }
    for k in 0..n {
        let (p, mag) = (k..n)
            .map(|i| (i, a[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if mag <= threshold {
            return Err(Error::SingularMatrix { column: k });
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        let pivot = a[k * n + k];
        for i in k + 1..n {
            let factor = a[i * n + k] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in k..n {
                a[i * n + j] -= factor * a[k * n + j];
            }
            b[i] -= factor * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a[k * n + j] * x[j];
        }
        x[k] = acc / a[k * n + k];
    }
    Ok(x)
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
