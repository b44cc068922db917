//! Dense complex QZ algorithm for the generalized eigenproblem `A x = λ B x`.
//! Used on small projected problems and as a reference for the sparse solver.

use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Square complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_real(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = C::new(f(i, j), 0.0);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C) {
        self.data[i * self.n + j] = v;
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rows `p, q` over columns `cols`: `(x_p, x_q) <- (c x_p + s x_q, -s̄ x_p + c x_q)`.
    fn rotate_rows(&mut self, p: usize, q: usize, c: f64, s: C, cols: std::ops::Range<usize>) {
        let n = self.n;
        for j in cols {
            let (a, b) = (self.data[p * n + j], self.data[q * n + j]);
            self.data[p * n + j] = a * c + s * b;
            self.data[q * n + j] = -s.conj() * a + b * c;
        }
    }

    /// Columns `p, q` over rows `rows`: `(x_p, x_q) <- (c x_p - s̄ x_q, s x_p + c x_q)`.
    fn rotate_cols(&mut self, p: usize, q: usize, c: f64, s: C, rows: std::ops::Range<usize>) {
        let n = self.n;
        for i in rows {
            let (u, v) = (self.data[i * n + p], self.data[i * n + q]);
            self.data[i * n + p] = u * c - s.conj() * v;
            self.data[i * n + q] = s * u + v * c;
        }
    }
}

/// Plane rotation with `c f + s g = r` and `-s̄ f + c g = 0`.
fn givens(f: C, g: C) -> (f64, C, C) {
    if g == ZERO {
        return (1.0, ZERO, f);
    }
    if f == ZERO {
        let ag = g.norm();
        return (0.0, g.conj() / ag, C::new(ag, 0.0));
    }
    let (af, ag) = (f.norm(), g.norm());
    let norm = af.hypot(ag);
    let phase = f / af;
    (af / norm, phase * g.conj() / norm, phase * norm)
}

/// Column rotation for columns `(p, q)` that zeroes the `p` entry of a row
/// holding `u` in column `p` and `v` in column `q`: `c u - s̄ v = 0`.
fn column_givens(u: C, v: C) -> (f64, C) {
    if u == ZERO {
        return (1.0, ZERO);
    }
    if v == ZERO {
        return (0.0, ONE);
    }
    let c = v.norm() / u.norm().hypot(v.norm());
    (c, (u / v * c).conj())
}

/// Upper triangular pair `(S, T)` with `Qᴴ A Z = S`, `Qᴴ B Z = T`.
#[derive(Clone, Debug)]
pub struct GeneralizedSchur {
    pub s: CMatrix,
    pub t: CMatrix,
    pub z: Option<CMatrix>,
}

/// Eigenvalue as the ratio `alpha / beta`; `beta = 0` is infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenRatio {
    pub alpha: C,
    pub beta: C,
}

impl EigenRatio {
    /// `None` for an infinite eigenvalue (`|beta| <= tol |alpha|`).
    pub fn value(&self, tol: f64) -> Option<C> {
        if self.beta.norm() <= tol * self.alpha.norm() || self.beta == ZERO {
            None
        } else {
            Some(self.alpha / self.beta)
        }
    }
}

/// Reduces `(A, B)` to generalized Schur form, accumulating `Z` on request.
pub fn qz(mut a: CMatrix, mut b: CMatrix, want_z: bool) -> Result<GeneralizedSchur> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::Dimension { expected: n, got: b.dim() });
    }
    let mut z = want_z.then(|| CMatrix::identity(n));
    if n == 0 {
        return Ok(GeneralizedSchur { s: a, t: b, z });
    }

    // B upper triangular.
    for j in 0..n {
        for i in (j + 1..n).rev() {
            let (c, s, _) = givens(b.get(i - 1, j), b.get(i, j));
            b.rotate_rows(i - 1, i, c, s, j..n);
            a.rotate_rows(i - 1, i, c, s, 0..n);
            b.set(i, j, ZERO);
        }
    }
    // A upper Hessenberg, B kept triangular.
    for j in 0..n.saturating_sub(2) {
        for i in (j + 2..n).rev() {
            let (c, s, _) = givens(a.get(i - 1, j), a.get(i, j));
            a.rotate_rows(i - 1, i, c, s, j..n);
            b.rotate_rows(i - 1, i, c, s, i - 1..n);
            a.set(i, j, ZERO);
            let (c, s) = column_givens(b.get(i, i - 1), b.get(i, i));
            b.rotate_cols(i - 1, i, c, s, 0..i + 1);
            a.rotate_cols(i - 1, i, c, s, 0..n);
            if let Some(z) = z.as_mut() {
                z.rotate_cols(i - 1, i, c, s, 0..n);
            }
            b.set(i, i - 1, ZERO);
        }
    }

    let ulp = f64::EPSILON;
    let safe = f64::MIN_POSITIVE;
    let btol = safe.max(ulp * b.frobenius());
    let anorm = a.frobenius();
    let mut ilast = n - 1;
    let mut since_deflation = 0usize;
    let mut total = 0usize;
    let max_iter = 30 * n.max(10);

    'outer: loop {
        if ilast == 0 {
            break;
        }
        total += 1;
        if total > max_iter {
            return Err(Error::Eigen(format!("QZ did not converge in {max_iter} sweeps")));
        }
        // Deflation at the bottom.
        let small = |a: &CMatrix, j: usize| {
            a.get(j, j - 1).l1_norm() <= safe.max(ulp * (a.get(j, j).l1_norm() + a.get(j - 1, j - 1).l1_norm()))
                || a.get(j, j - 1).l1_norm() <= ulp * ulp * anorm
        };
        if small(&a, ilast) {
            a.set(ilast, ilast - 1, ZERO);
            ilast -= 1;
            since_deflation = 0;
            continue;
        }
        if b.get(ilast, ilast).norm() < btol {
            b.set(ilast, ilast, ZERO);
            split_infinite(&mut a, &mut b, z.as_mut(), ilast);
            ilast -= 1;
            since_deflation = 0;
            continue;
        }
        // Find the top of the active block and any zero on B's diagonal.
        let mut j = ilast - 1;
        let ifirst = loop {
            let top = j == 0 || small(&a, j);
            if top && j > 0 {
                a.set(j, j - 1, ZERO);
            }
            if b.get(j, j).norm() < btol {
                b.set(j, j, ZERO);
                chase_zero(&mut a, &mut b, z.as_mut(), j, ilast, top);
                split_infinite(&mut a, &mut b, z.as_mut(), ilast);
                ilast -= 1;
                since_deflation = 0;
                continue 'outer;
            }
            if top {
                break j;
            }
            j -= 1;
        };

        since_deflation += 1;
        let shift = if since_deflation % 10 == 0 {
            // Exceptional shift.
            let scale = a.get(ilast, ilast - 1).norm() / b.get(ilast - 1, ilast - 1).norm().max(safe);
            a.get(ilast, ilast) / b.get(ilast, ilast) + C::new(scale, 0.0)
        } else {
            wilkinson_shift(&a, &b, ilast)
        };

        // Single-shift sweep over ifirst..=ilast.
        let f = a.get(ifirst, ifirst) - shift * b.get(ifirst, ifirst);
        let g = a.get(ifirst + 1, ifirst);
        let (mut c, mut s, _) = givens(f, g);
        for j in ifirst..ilast {
            if j > ifirst {
                let (c2, s2, r) = givens(a.get(j, j - 1), a.get(j + 1, j - 1));
                c = c2;
                s = s2;
                a.set(j, j - 1, r);
                a.set(j + 1, j - 1, ZERO);
            }
            a.rotate_rows(j, j + 1, c, s, j..n);
            b.rotate_rows(j, j + 1, c, s, j..n);
            let (cc, sc) = column_givens(b.get(j + 1, j), b.get(j + 1, j + 1));
            b.rotate_cols(j, j + 1, cc, sc, 0..j + 2);
            b.set(j + 1, j, ZERO);
            a.rotate_cols(j, j + 1, cc, sc, 0..(j + 3).min(ilast + 1));
            if let Some(z) = z.as_mut() {
                z.rotate_cols(j, j + 1, cc, sc, 0..n);
            }
        }
    }
    Ok(GeneralizedSchur { s: a, t: b, z })
}

/// Eigenvalue of the trailing 2x2 pencil closer to the last diagonal ratio.
fn wilkinson_shift(a: &CMatrix, b: &CMatrix, l: usize) -> C {
    let k = l - 1;
    let u12 = b.get(k, l) / b.get(l, l);
    let ad11 = a.get(k, k) / b.get(k, k);
    let ad21 = a.get(l, k) / b.get(k, k);
    let ad12 = a.get(k, l) / b.get(l, l);
    let ad22 = a.get(l, l) / b.get(l, l);
    let abi22 = ad22 - u12 * ad21;
    let abi12 = ad12 - u12 * ad11;
    let mut shift = abi22;
    let ctemp = abi12.sqrt() * ad21.sqrt();
    if ctemp != ZERO {
        let x = (ad11 - shift) * 0.5;
        let mut y = (x * x + ctemp * ctemp).sqrt();
        if (x.conj() * y).re < 0.0 {
            y = -y;
        }
        shift -= ctemp * (ctemp / (x + y));
    }
    if shift.is_finite() {
        shift
    } else {
        ad22
    }
}

/// With `T(j,j) = 0`, moves the zero to `T(ilast, ilast)`.
fn chase_zero(a: &mut CMatrix, b: &mut CMatrix, mut z: Option<&mut CMatrix>, j: usize, ilast: usize, top: bool) {
    let n = a.dim();
    for k in j..ilast {
        let (c, s, r) = givens(b.get(k, k + 1), b.get(k + 1, k + 1));
        b.set(k, k + 1, r);
        b.set(k + 1, k + 1, ZERO);
        b.rotate_rows(k, k + 1, c, s, k + 2..n);
        let lo = if k == 0 { 0 } else { k - 1 };
        a.rotate_rows(k, k + 1, c, s, lo..n);
        if k == j && top {
            // Nothing below the block to restore.
            if k > 0 {
                a.set(k + 1, k - 1, ZERO);
            }
            continue;
        }
        if k == 0 {
            continue;
        }
        let (cc, sc) = column_givens(a.get(k + 1, k - 1), a.get(k + 1, k));
        a.rotate_cols(k - 1, k, cc, sc, 0..k + 2);
        a.set(k + 1, k - 1, ZERO);
        b.rotate_cols(k - 1, k, cc, sc, 0..k);
        if let Some(z) = z.as_deref_mut() {
            z.rotate_cols(k - 1, k, cc, sc, 0..n);
        }
    }
}

/// With `T(l,l) = 0`, zeroes `A(l, l-1)` so the infinite eigenvalue splits off.
fn split_infinite(a: &mut CMatrix, b: &mut CMatrix, z: Option<&mut CMatrix>, l: usize) {
    let n = a.dim();
    let (c, s) = column_givens(a.get(l, l - 1), a.get(l, l));
    a.rotate_cols(l - 1, l, c, s, 0..l + 1);
    a.set(l, l - 1, ZERO);
    b.rotate_cols(l - 1, l, c, s, 0..l);
    if let Some(z) = z {
        z.rotate_cols(l - 1, l, c, s, 0..n);
    }
}

impl GeneralizedSchur {
    pub fn eigenvalues(&self) -> Vec<EigenRatio> {
        (0..self.s.dim()).map(|i| EigenRatio { alpha: self.s.get(i, i), beta: self.t.get(i, i) }).collect()
    }

    /// Right eigenvector for diagonal position `k` (finite eigenvalue), unit norm.
    pub fn eigenvector(&self, k: usize) -> Option<Vec<C>> {
        let z = self.z.as_ref()?;
        let n = self.s.dim();
        let (alpha, beta) = (self.s.get(k, k), self.t.get(k, k));
        if beta == ZERO {
            return None;
        }
        let scale = (self.s.frobenius() * beta.norm() + self.t.frobenius() * alpha.norm()).max(f64::MIN_POSITIVE);
        let mut x = vec![ZERO; n];
        x[k] = ONE;
        for j in (0..k).rev() {
            let mut sum = ZERO;
            for (i, xi) in x.iter().enumerate().take(k + 1).skip(j + 1) {
                sum += (beta * self.s.get(j, i) - alpha * self.t.get(j, i)) * xi;
            }
            let mut d = beta * self.s.get(j, j) - alpha * self.t.get(j, j);
            if d.norm() < f64::EPSILON * scale {
                d = C::new(f64::EPSILON * scale, 0.0);
            }
            x[j] = -sum / d;
        }
        let mut v = vec![ZERO; n];
        for (r, vr) in v.iter_mut().enumerate() {
            for (i, xi) in x.iter().enumerate().take(k + 1) {
                *vr += z.get(r, i) * xi;
            }
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        Some(v.into_iter().map(|c| c / norm).collect())
    }
}

/// Eigenvalues of the real pencil `(A, B)`; `None` marks an infinite eigenvalue.
pub fn dense_generalized_eigenvalues(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> Result<Vec<Option<C>>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::Dimension { expected: n, got: b.nrows() });
    }
    let schur = qz(CMatrix::from_real(n, |i, j| a[(i, j)]), CMatrix::from_real(n, |i, j| b[(i, j)]), false)?;
    let tol = 1e3 * f64::EPSILON * b.norm() / a.norm().max(f64::MIN_POSITIVE);
    Ok(schur.eigenvalues().iter().map(|e| e.value(tol)).collect())
}
