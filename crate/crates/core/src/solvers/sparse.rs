//! Compressed sparse row matrices.

use std::io::Write;

use nalgebra::DMatrix;

/// Square or rectangular CSR matrix with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-format accumulator; duplicates are summed on conversion.
#[derive(Clone, Debug, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    /// Adds a dense row-major `dofs.len()` square block.
    pub fn add_block(&mut self, dofs: &[usize], block: &[f64]) {
        let n = dofs.len();
        debug_assert_eq!(block.len(), n * n);
        for (a, &i) in dofs.iter().enumerate() {
            for (b, &j) in dofs.iter().enumerate() {
                let v = block[a * n + b];
                if v != 0.0 {
                    self.push(i, j, v);
                }
            }
        }
    }

    pub fn into_csr(self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nrows, self.ncols, self.entries)
    }
}

impl CsrMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(row_ptr.len(), nrows + 1);
        assert_eq!(col_idx.len(), values.len());
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut t = Triplets::new(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push(i, j, a[(i, j)]);
                }
            }
        }
        t.into_csr()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                col_idx[next[j]] = i;
                values[next[j]] = self.values[k];
                next[j] += 1;
            }
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr: counts, col_idx, values }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise asymmetry `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    /// Principal submatrix on the ascending index set `rows`.
    pub fn principal_submatrix(&self, rows: &[usize]) -> CsrMatrix {
        let mut local = vec![usize::MAX; self.ncols];
        for (l, &g) in rows.iter().enumerate() {
            local[g] = l;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &g in rows {
            let (cols, vals) = self.row(g);
            let mut entries: Vec<(usize, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|(c, _)| local[**c] != usize::MAX)
                .map(|(c, v)| (local[*c], *v))
                .collect();
            entries.sort_unstable_by_key(|e| e.0);
            for (c, v) in entries {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows: rows.len(), ncols: rows.len(), row_ptr, col_idx, values }
    }

    /// `self + alpha * other` for matrices of equal shape.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = Triplets::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                t.push(i, j, x);
            }
            let (c, v) = other.row(i);
            for (&j, &x) in c.iter().zip(v) {
                t.push(i, j, alpha * x);
            }
        }
        t.into_csr()
    }

    /// `[A W; Wᵀ 0]` for dense columns `W` with `nrows` entries each.
    pub fn bordered(&self, cols: &[Vec<f64>]) -> CsrMatrix {
        let n = self.nrows();
        let m = n + cols.len();
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + 2 * n * cols.len());
        for i in 0..n {
            let (c, v) = self.row(i);
            entries.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, x)));
        }
        for (k, w) in cols.iter().enumerate() {
            for (i, &x) in w.iter().enumerate().take(n) {
                if x != 0.0 {
                    entries.push((i, n + k, x));
                    entries.push((n + k, i, x));
                }
            }
        }
        CsrMatrix::from_triplets(m, m, entries)
    }

    /// `diag(r) · self · diag(c)`
    pub fn scaled(&self, r: &[f64], c: &[f64]) -> CsrMatrix {
        let mut m = self.clone();
        for i in 0..m.nrows() {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                m.values[k] *= r[i] * c[m.col_idx[k]];
            }
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                a[(i, j)] = v;
            }
        }
        a
    }

    /// MatrixMarket coordinate format, 1-based indices, 17 significant digits.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let a = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 4.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(1, 2), 5.0);
        assert_eq!(a.row(1).0, &[0, 2]);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![2.0, 8.0]);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn matrix_market_round_trip_digits() {
        let a = CsrMatrix::from_triplets(1, 1, vec![(0, 0, 0.1)]);
        let mut out = Vec::new();
        a.write_matrix_market(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let value: f64 = text.lines().nth(2).unwrap().split_whitespace().nth(2).unwrap().parse().unwrap();
        assert_eq!(value, 0.1);
    }

    proptest! {
        #[test]
        fn transpose_is_adjoint(entries in proptest::collection::vec((0usize..6, 0usize..5, -5.0f64..5.0), 0..30),
                                x in proptest::collection::vec(-1.0f64..1.0, 5),
                                y in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let a = CsrMatrix::from_triplets(6, 5, entries);
            let lhs = dot(&a.mul_vec(&x), &y);
            let rhs = dot(&x, &a.transpose().mul_vec(&y));
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
