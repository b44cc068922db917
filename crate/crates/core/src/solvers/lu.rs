//! Sparse LU factorization: row and column equilibration, nested-dissection
//! column order, left-looking elimination with threshold partial pivoting
//! that prefers the diagonal.

use super::ordering::nested_dissection;
use super::sparse::{norm2, CsrMatrix};
use crate::error::{Error, Result};

const PIVOT_THRESHOLD: f64 = 1e-3;
const SINGULAR_TOL: f64 = 1e-14;
const RUIZ_SWEEPS: usize = 30;

/// Compressed sparse column storage.
#[derive(Clone, Debug, Default)]
struct Csc {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

/// `P Dr A Dc Q = L U` with `Dr`, `Dc` diagonal scalings, `P` from pivoting
/// and `Q` the fill-reducing order.
#[derive(Clone, Debug)]
pub struct Factorization {
    n: usize,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    /// Column order: step `k` eliminates column `q[k]`.
    q: Vec<usize>,
    /// Pivot row of step `k`.
    prow: Vec<usize>,
    /// Unit lower factor, rows in step numbering, diagonal first.
    l: Csc,
    /// Upper factor, rows in step numbering, diagonal last.
    u: Csc,
    off_diagonal_pivots: usize,
}

struct Workspace {
    x: Vec<f64>,
    xi: Vec<usize>,
    pstack: Vec<usize>,
    mark: Vec<usize>,
    stamp: usize,
}

/// Factorizes a square matrix.
pub fn factorize(a: &CsrMatrix) -> Result<Factorization> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension { expected: n, got: a.ncols() });
    }
    let (row_scale, col_scale) = equilibrate(a);
    // CSC of the scaled matrix: CSR of the transpose.
    let at = a.transpose();
    let acol = Csc {
        ptr: at.row_ptr().to_vec(),
        idx: at.col_idx().to_vec(),
        val: (0..n)
            .flat_map(|j| {
                let (rows, vals) = at.row(j);
                let (rs, cs) = (&row_scale, col_scale[j]);
                rows.iter().zip(vals).map(move |(&i, &v)| v * rs[i] * cs)
            })
            .collect(),
    };
    let q = nested_dissection(a);

    const NONE: usize = usize::MAX;
    let mut pinv = vec![NONE; n];
    let mut l = Csc { ptr: Vec::with_capacity(n + 1), ..Default::default() };
    let mut u = Csc { ptr: Vec::with_capacity(n + 1), ..Default::default() };
    let mut ws = Workspace { x: vec![0.0; n], xi: vec![0; n], pstack: vec![0; n], mark: vec![0; n], stamp: 0 };
    let mut prow = vec![0usize; n];
    let mut off_diagonal_pivots = 0;

    for k in 0..n {
        l.ptr.push(l.idx.len());
        u.ptr.push(u.idx.len());
        let col = q[k];
        let top = spsolve(&l, &acol, col, &pinv, &mut ws);
        let col_max = acol.val[acol.ptr[col]..acol.ptr[col + 1]].iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let mut ipiv = NONE;
        let mut amax = -1.0;
        for p in top..n {
            let i = ws.xi[p];
            if pinv[i] == NONE {
                let t = ws.x[i].abs();
                if t > amax {
                    amax = t;
                    ipiv = i;
                }
            } else {
                u.idx.push(pinv[i]);
                u.val.push(ws.x[i]);
            }
        }
        if ipiv == NONE || amax <= SINGULAR_TOL * col_max.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular { pivot: col, value: amax.max(0.0) });
        }
        if pinv[col] == NONE && ws.x[col].abs() >= PIVOT_THRESHOLD * amax {
            ipiv = col;
        }
        off_diagonal_pivots += (ipiv != col) as usize;
        let pivot = ws.x[ipiv];
        u.idx.push(k);
        u.val.push(pivot);
        pinv[ipiv] = k;
        prow[k] = ipiv;
        l.idx.push(ipiv);
        l.val.push(1.0);
        for p in top..n {
            let i = ws.xi[p];
            if pinv[i] == NONE {
                l.idx.push(i);
                l.val.push(ws.x[i] / pivot);
            }
            ws.x[i] = 0.0;
        }
    }
    l.ptr.push(l.idx.len());
    u.ptr.push(u.idx.len());
    for i in l.idx.iter_mut() {
        *i = pinv[*i];
    }
    Ok(Factorization { n, row_scale, col_scale, q, prow, l, u, off_diagonal_pivots })
}

/// Ruiz scaling: rows and columns are repeatedly divided by the square root
/// of their largest entry until every maximum is close to one. Coefficient
/// jumps of many orders of magnitude (layered materials, `1/λ` pressure
/// blocks) otherwise defeat threshold pivoting.
pub(crate) fn equilibrate(a: &CsrMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut r = vec![1.0; n];
    let mut c = vec![1.0; n];
    for _ in 0..RUIZ_SWEEPS {
        let mut rmax = vec![0.0f64; n];
        let mut cmax = vec![0.0f64; n];
        for (i, rm) in rmax.iter_mut().enumerate() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let t = (v * r[i] * c[j]).abs();
                *rm = rm.max(t);
                cmax[j] = cmax[j].max(t);
            }
        }
        let off = rmax.iter().chain(&cmax).filter(|&&m| m > 0.0).fold(0.0f64, |d, &m| d.max((1.0 - m).abs()));
        if off < 0.1 {
            break;
        }
        for (s, m) in r.iter_mut().zip(&rmax).chain(c.iter_mut().zip(&cmax)) {
            if *m > 0.0 {
                *s /= m.sqrt();
            }
        }
    }
    (r, c)
}

/// Solves `L x = A(:, col)` for the partially built `L`; returns the start of
/// the nonzero pattern in `ws.xi[top..]`.
fn spsolve(l: &Csc, a: &Csc, col: usize, pinv: &[usize], ws: &mut Workspace) -> usize {
    let n = ws.x.len();
    ws.stamp += 1;
    let stamp = ws.stamp;
    let mut top = n;
    for p in a.ptr[col]..a.ptr[col + 1] {
        let j = a.idx[p];
        if ws.mark[j] != stamp {
            top = dfs(j, l, top, pinv, ws, stamp);
        }
    }
    for p in top..n {
        ws.x[ws.xi[p]] = 0.0;
    }
    for p in a.ptr[col]..a.ptr[col + 1] {
        ws.x[a.idx[p]] = a.val[p];
    }
    for px in top..n {
        let j = ws.xi[px];
        let jj = pinv[j];
        if jj == usize::MAX {
            continue;
        }
        let xj = ws.x[j];
        // Unit diagonal is stored first.
        for p in l.ptr[jj] + 1..l.ptr[jj + 1] {
            ws.x[l.idx[p]] -= l.val[p] * xj;
        }
    }
    top
}

/// Depth-first search in the graph of `L` from row `j`; writes the reach in
/// topological order to `ws.xi[..top]` going downwards.
fn dfs(j: usize, l: &Csc, mut top: usize, pinv: &[usize], ws: &mut Workspace, stamp: usize) -> usize {
    let mut nodes: Vec<usize> = vec![j];
    while let Some(&node) = nodes.last() {
        let head = nodes.len() - 1;
        let jj = pinv[node];
        let (start, end) = if jj == usize::MAX { (0, 0) } else { (l.ptr[jj], l.ptr[jj + 1]) };
        if ws.mark[node] != stamp {
            ws.mark[node] = stamp;
            ws.pstack[head] = start;
        }
        let mut p = ws.pstack[head];
        let mut child = None;
        while p < end {
            let i = l.idx[p];
            p += 1;
            if ws.mark[i] != stamp {
                child = Some(i);
                break;
            }
        }
        ws.pstack[head] = p;
        match child {
            Some(i) => nodes.push(i),
            None => {
                nodes.pop();
                top -= 1;
                ws.xi[top] = node;
            }
        }
    }
    top
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.l.idx.len() + self.u.idx.len()
    }

    /// Steps whose pivot was taken off the diagonal.
    pub fn off_diagonal_pivots(&self) -> usize {
        self.off_diagonal_pivots
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solve followed by up to `steps` rounds of iterative refinement against `a`,
    /// stopping once the residual stops decreasing.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        let mut r = vec![0.0; self.n];
        let mut last = f64::INFINITY;
        for _ in 0..steps {
            a.mul_vec_into(&x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
            let norm = norm2(&r);
            if !(norm < 0.5 * last) || norm == 0.0 {
                break;
            }
            last = norm;
            self.solve_in_place(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|k| b[self.prow[k]] * self.row_scale[self.prow[k]]).collect();
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                for p in self.l.ptr[j] + 1..self.l.ptr[j + 1] {
                    y[self.l.idx[p]] -= self.l.val[p] * yj;
                }
            }
        }
        for j in (0..n).rev() {
            let end = self.u.ptr[j + 1];
            let yj = y[j] / self.u.val[end - 1];
            y[j] = yj;
            if yj != 0.0 {
                for p in self.u.ptr[j]..end - 1 {
                    y[self.u.idx[p]] -= self.u.val[p] * yj;
                }
            }
        }
        for k in 0..n {
            let c = self.q[k];
            b[c] = y[k] * self.col_scale[c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::sparse::Triplets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
        norm2(&r) / norm2(b)
    }

    #[test]
    fn identity_and_permutation() {
        let f = factorize(&CsrMatrix::identity(5)).unwrap();
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let swap = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]);
        let f = factorize(&swap).unwrap();
        assert_eq!(f.solve(&[1.0, 2.0]), vec![2.0, 1.0]);
    }

    #[test]
    fn random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let b = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let spd = &b * b.transpose() + nalgebra::DMatrix::identity(n, n) * (n as f64);
        let a = CsrMatrix::from_dense(&spd);
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = factorize(&a).unwrap().solve(&rhs);
        assert!(residual(&a, &x, &rhs) < 1e-10);
    }

    #[test]
    fn saddle_point_with_zero_block() {
        // 2D Laplacian coupled to a discrete divergence with an empty (2,2) block.
        let m = 12;
        let nu = m * m;
        let np = (m - 1) * (m - 1);
        let mut t = Triplets::new(nu + np, nu + np);
        for i in 0..m {
            for j in 0..m {
                let v = i * m + j;
                t.push(v, v, 4.0);
                if i + 1 < m {
                    t.push(v, v + m, -1.0);
                    t.push(v + m, v, -1.0);
                }
                if j + 1 < m {
                    t.push(v, v + 1, -1.0);
                    t.push(v + 1, v, -1.0);
                }
            }
        }
        for i in 0..m - 1 {
            for j in 0..m - 1 {
                let p = nu + i * (m - 1) + j;
                for (v, s) in [(i * m + j, 1.0), (i * m + j + 1, -0.5), ((i + 1) * m + j, -0.25)] {
                    t.push(p, v, s);
                    t.push(v, p, s);
                }
            }
        }
        let a = t.into_csr();
        let rhs: Vec<f64> = (0..nu + np).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = factorize(&a).unwrap().solve(&rhs);
        assert!(residual(&a, &x, &rhs) < 1e-10);
    }

    #[test]
    fn singular_is_reported() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0), (2, 2, 1.0)]);
        assert!(matches!(factorize(&a), Err(Error::Singular { .. })));
    }
}
