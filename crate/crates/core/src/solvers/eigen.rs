//! Generalized eigenpairs `A v = λ B v` of smallest magnitude.
//!
//! The sparse path runs Arnoldi on the shift-invert operator
//! `(A - σB)⁻¹ B`, whose dominant eigenvalues `θ = 1/(λ - σ)` belong to the
//! `λ` closest to `σ`. `B` may be singular; its null directions map to
//! `θ = 0` and never enter the wanted set.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lu::{equilibrate, factorize};
use super::qz::{qz, CMatrix};
use super::sparse::{axpy, dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

type C = Complex64;

/// Start vectors of the band Arnoldi process.
const BLOCK_SIZE: usize = 6;

/// Dimension up to which the dense QZ fallback is allowed.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: C,
    /// Unit Euclidean norm, largest entry real and positive.
    pub vector: Vec<C>,
}

impl EigenPair {
    /// A real vector from the pair: the real part for `Im λ >= 0`, the
    /// imaginary part for the conjugate partner. A conjugate pair thus
    /// contributes both halves of its invariant subspace. Eigenvalues that
    /// are real up to rounding always give the real part.
    pub fn real_vector(&self) -> Vec<f64> {
        let re = self.vector.iter().map(|c| c.re * c.re).sum::<f64>();
        let im = self.vector.iter().map(|c| c.im * c.im).sum::<f64>();
        let complex = self.value.im.abs() > 1e-10 * self.value.norm() && im > 1e-12 * re;
        if complex && self.value.im < 0.0 {
            self.vector.iter().map(|c| c.im).collect()
        } else {
            self.vector.iter().map(|c| c.re).collect()
        }
    }

    /// `‖A v - λ B v‖₂`
    pub fn residual(&self, a: &CsrMatrix, b: &CsrMatrix) -> f64 {
        let re: Vec<f64> = self.vector.iter().map(|c| c.re).collect();
        let im: Vec<f64> = self.vector.iter().map(|c| c.im).collect();
        let (ar, ai, br, bi) = (a.mul_vec(&re), a.mul_vec(&im), b.mul_vec(&re), b.mul_vec(&im));
        let l = self.value;
        (0..re.len())
            .map(|k| {
                let av = C::new(ar[k], ai[k]);
                let bv = C::new(br[k], bi[k]);
                (av - l * bv).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `‖A v - λ B v‖ / ((‖A‖ + |λ| ‖B‖) ‖v‖)` with infinity norms for the matrices.
    pub fn backward_error(&self, a: &CsrMatrix, b: &CsrMatrix) -> f64 {
        let v = self.vector.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        self.residual(a, b) / ((a.norm_inf() + self.value.norm() * b.norm_inf()) * v)
    }

    /// The residual bound `tol (‖A‖ + |λ| ‖B‖) ‖v‖`.
    pub fn satisfies_bound(&self, a: &CsrMatrix, b: &CsrMatrix, tol: f64) -> bool {
        self.backward_error(a, b) <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMethod {
    ShiftInvert,
    Dense,
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    pub count: usize,
    /// Defaults to [`default_shift`].
    pub shift: Option<f64>,
    /// Backward error every returned pair is guaranteed to meet.
    pub tol: f64,
    /// Relative change of the Ritz values between two checks below which
    /// they count as settled. Meeting `tol` alone can leave a visibly wrong
    /// eigenvalue when the pencil's entries span many orders of magnitude.
    pub settle: f64,
    pub seed: u64,
}

impl EigenOptions {
    pub fn new(count: usize) -> Self {
        Self { count, shift: None, tol: 1e-8, settle: 1e-12, seed: 0x5eed }
    }
}

/// `-1e-6 ‖A‖∞ / ‖B‖∞`: small and negative, so shift-invert stays well posed
/// for singular `A` without reordering the smallest eigenvalues.
pub fn default_shift(a: &CsrMatrix, b: &CsrMatrix) -> f64 {
    let nb = b.norm_inf();
    -1e-6 * a.norm_inf() / if nb > 0.0 { nb } else { 1.0 }
}

fn sort_pairs(pairs: &mut [EigenPair]) {
    pairs.sort_by(|x, y| {
        x.value
            .norm()
            .total_cmp(&y.value.norm())
            .then(x.value.re.total_cmp(&y.value.re))
            .then(x.value.im.total_cmp(&y.value.im))
    });
}

fn normalize(mut v: Vec<C>) -> Vec<C> {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let pivot = v.iter().copied().max_by(|x, y| x.norm().total_cmp(&y.norm())).unwrap_or(C::new(1.0, 0.0));
    let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { C::new(1.0, 0.0) };
    for c in v.iter_mut() {
        *c = *c * phase / norm;
        if c.im.abs() <= 1e-15 * c.re.abs() {
            c.im = 0.0;
        }
    }
    v
}

/// Shift-invert Arnoldi; falls back to dense QZ for small problems when
/// the iteration fails.
pub fn generalized_eigs(a: &CsrMatrix, b: &CsrMatrix, opts: EigenOptions) -> Result<Vec<EigenPair>> {
    match shift_invert_eigs(a, b, opts) {
        Ok(p) => Ok(p),
        Err(_) if a.nrows() <= DENSE_LIMIT => dense_eigs(a, b, opts.count),
        Err(e) => Err(e),
    }
}

pub fn eigs_with(method: EigenMethod, a: &CsrMatrix, b: &CsrMatrix, opts: EigenOptions) -> Result<Vec<EigenPair>> {
    match method {
        EigenMethod::ShiftInvert => shift_invert_eigs(a, b, opts),
        EigenMethod::Dense => dense_eigs(a, b, opts.count),
    }
}

/// All finite eigenvalues from dense QZ, then the `count` smallest with vectors.
pub fn dense_eigs(a: &CsrMatrix, b: &CsrMatrix, count: usize) -> Result<Vec<EigenPair>> {
    let n = a.nrows();
    check_dims(a, b)?;
    if n > DENSE_LIMIT {
        return Err(Error::Eigen(format!("dense eigensolver limited to dimension {DENSE_LIMIT}, got {n}")));
    }
    let (rows, cols) = balance(a, b);
    let (ad, bd) = (a.scaled(&rows, &cols).to_dense(), b.scaled(&rows, &cols).to_dense());
    let schur = qz(CMatrix::from_real(n, |i, j| ad[(i, j)]), CMatrix::from_real(n, |i, j| bd[(i, j)]), true)?;
    let tol = 1e3 * f64::EPSILON * bd.norm() / ad.norm().max(f64::MIN_POSITIVE);
    let mut found: Vec<(usize, C)> =
        schur.eigenvalues().iter().enumerate().filter_map(|(k, e)| e.value(tol).map(|v| (k, v))).collect();
    found.sort_by(|x, y| x.1.norm().total_cmp(&y.1.norm()).then(x.1.re.total_cmp(&y.1.re)).then(x.1.im.total_cmp(&y.1.im)));
    let mut pairs: Vec<EigenPair> = found
        .into_iter()
        .take(count)
        .map(|(k, value)| unbalance(EigenPair { value, vector: schur.eigenvector(k).expect("vectors requested") }, &cols))
        .collect();
    sort_pairs(&mut pairs);
    Ok(pairs)
}

/// Row and column scalings `D₁, D₂` that bring the rows and columns of
/// `|D₁AD₂| + |D₁BD₂|` close to unit maximum. `(D₁AD₂, D₁BD₂)` has the
/// eigenvalues of `(A, B)` and eigenvectors `D₂⁻¹ v`. Without it, pencils
/// whose entries span many orders of magnitude lose eigenvalue digits in
/// both the dense and the iterative path.
fn balance(a: &CsrMatrix, b: &CsrMatrix) -> (Vec<f64>, Vec<f64>) {
    let abs = |m: &CsrMatrix| {
        let mut m = m.clone();
        m.values_mut().iter_mut().for_each(|v| *v = v.abs());
        m
    };
    equilibrate(&abs(a).add_scaled(1.0, &abs(b)))
}

/// `D₂ ṽ`, renormalized.
fn unbalance(pair: EigenPair, cols: &[f64]) -> EigenPair {
    EigenPair { value: pair.value, vector: normalize(pair.vector.into_iter().zip(cols).map(|(x, c)| x * c).collect()) }
}

fn check_dims(a: &CsrMatrix, b: &CsrMatrix) -> Result<()> {
    let n = a.nrows();
    for d in [a.ncols(), b.nrows(), b.ncols()] {
        if d != n {
            return Err(Error::Dimension { expected: n, got: d });
        }
    }
    Ok(())
}

/// Arnoldi on `(A - σB)⁻¹ B` of the balanced pencil with full
/// reorthogonalization, grown until the wanted Ritz pairs satisfy the
/// residual bound and their values settle.
pub fn shift_invert_eigs(a: &CsrMatrix, b: &CsrMatrix, opts: EigenOptions) -> Result<Vec<EigenPair>> {
    check_dims(a, b)?;
    if opts.count == 0 || a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let shift = opts.shift.unwrap_or_else(|| default_shift(a, b));
    let (rows, cols) = balance(a, b);
    let (ab, bb) = (a.scaled(&rows, &cols), b.scaled(&rows, &cols));
    let mut pairs: Vec<EigenPair> =
        arnoldi(&ab, &bb, shift, opts)?.into_iter().map(|p| unbalance(p, &cols)).collect();
    if let Some(p) = pairs.iter().find(|p| !p.satisfies_bound(a, b, opts.tol)) {
        return Err(Error::Eigen(format!("Ritz pair {} missed the residual bound of the original pencil", p.value)));
    }
    sort_pairs(&mut pairs);
    Ok(pairs)
}

fn arnoldi(a: &CsrMatrix, b: &CsrMatrix, base: f64, opts: EigenOptions) -> Result<Vec<EigenPair>> {
    let n = a.nrows();
    let mut sigma = base;
    let mut factor = None;
    let mut last_err = None;
    for attempt in 0..3 {
        let shifted = a.add_scaled(-sigma, b);
        match factorize(&shifted) {
            Ok(f) => {
                factor = Some((f, shifted));
                break;
            }
            Err(e) => {
                last_err = Some(e);
                sigma = base * (1.0 + 0.37 * (attempt + 1) as f64);
            }
        }
    }
    let (factor, shifted) = factor.ok_or_else(|| {
        Error::Eigen(format!("shift-invert factorization failed near sigma = {base:e}: {}", last_err.expect("recorded")))
    })?;
    // Refinement keeps the operator accurate enough for `target`.
    let op = |x: &[f64]| -> Vec<f64> { factor.solve_refined(&shifted, &b.mul_vec(x), 2) };

    let want = (opts.count + 3).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let fresh = |basis: &[Vec<f64>], rng: &mut ChaCha8Rng| -> Option<Vec<f64>> {
        for _ in 0..5 {
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut w = op(&r);
            for _ in 0..2 {
                for v in basis {
                    let c = dot(&w, v);
                    axpy(-c, v, &mut w);
                }
            }
            let nw = norm2(&w);
            if nw > 0.0 {
                return Some(w.into_iter().map(|x| x / nw).collect());
            }
        }
        None
    };

    // Band Arnoldi: a block of start vectors lets repeated eigenvalues (such
    // as a multi-dimensional kernel) show up with their full multiplicity.
    let block = BLOCK_SIZE.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(block);
    for _ in 0..block {
        let v = fresh(&basis, &mut rng).ok_or_else(|| Error::Eigen("B annihilates every start vector".into()))?;
        basis.push(v);
    }
    // Column j holds the coefficients of `Op v_j` in the basis.
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut next_check = (2 * want).max(want + 15).max(block).min(n);
    // Basis size at which `tol` was first met; waiting for the Ritz values
    // to settle may grow the basis to four times that.
    let mut loose_at: Option<usize> = None;
    let mut previous: Vec<C> = Vec::new();
    loop {
        let j = h.len();
        let mut w = op(&basis[j]);
        let before = norm2(&w);
        let mut col = vec![0.0; basis.len() + 1];
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                col[i] += c;
                axpy(-c, v, &mut w);
            }
        }
        let hn = norm2(&w);
        if basis.len() < n {
            if hn <= 1e-12 * before.max(f64::MIN_POSITIVE) {
                // Deflation: continue with a fresh direction.
                match fresh(&basis, &mut rng) {
                    Some(v) => basis.push(v),
                    None => {
                        col.pop();
                    }
                }
            } else {
                *col.last_mut().expect("nonempty") = hn;
                basis.push(w.into_iter().map(|x| x / hn).collect());
            }
        } else {
            col.pop();
        }
        h.push(col);
        let m = j + 1;
        let full = m == n;
        if m >= next_check || full {
            if let Some((pairs, worst)) = ritz_pairs(&h, &basis, sigma, a, b, want, opts.count, full)? {
                let values: Vec<C> = pairs.iter().map(|p| p.value).collect();
                let settled = settled(&previous, &values, opts.settle);
                previous = values;
                if worst <= opts.tol {
                    let since = *loose_at.get_or_insert(m);
                    if settled || m >= 4 * since || full {
                        return Ok(pairs);
                    }
                } else if full {
                    return Err(Error::Eigen(format!("Ritz pairs missed the residual bound ({worst:e}) after exhausting the space")));
                }
            }
            next_check = (m + 15).min(n);
            if full {
                return Err(Error::Eigen("Arnoldi exhausted the space without converging".into()));
            }
        }
    }
}

/// Whether every value moved by at most `tol` relative to its size, with
/// sizes floored at `1e-8` of the largest so that zero modes compare
/// absolutely.
fn settled(old: &[C], new: &[C], tol: f64) -> bool {
    let top = new.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    old.len() == new.len() && old.iter().zip(new).all(|(x, y)| (x - y).norm() <= tol * y.norm().max(1e-8 * top))
}

/// The `want` dominant Ritz pairs as `λ`, truncated to `count`, and the
/// worst backward error among those kept, or `None` while too few are available.
#[allow(clippy::too_many_arguments)]
fn ritz_pairs(
    h: &[Vec<f64>],
    basis: &[Vec<f64>],
    sigma: f64,
    a: &CsrMatrix,
    b: &CsrMatrix,
    want: usize,
    count: usize,
    exhausted: bool,
) -> Result<Option<(Vec<EigenPair>, f64)>> {
    let m = h.len();
    let hm = CMatrix::from_real(m, |i, j| if i < h[j].len() { h[j][i] } else { 0.0 });
    let schur = qz(hm, CMatrix::identity(m), true)?;
    let thetas: Vec<(usize, C)> = schur.eigenvalues().iter().enumerate().filter_map(|(k, e)| e.value(1e-14).map(|t| (k, t))).collect();
    let tmax = thetas.iter().fold(0.0f64, |acc, (_, t)| acc.max(t.norm()));
    let mut ranked: Vec<(usize, C)> = thetas.into_iter().filter(|(_, t)| t.norm() > 1e-12 * tmax).collect();
    ranked.sort_by(|x, y| y.1.norm().total_cmp(&x.1.norm()).then(x.1.re.total_cmp(&y.1.re)).then(x.1.im.total_cmp(&y.1.im)));
    if ranked.len() < want && !exhausted {
        return Ok(None);
    }
    let n = a.nrows();
    let mut pairs = Vec::with_capacity(want);
    for &(k, theta) in ranked.iter().take(want) {
        let y = schur.eigenvector(k).expect("vectors requested");
        let mut x = vec![C::new(0.0, 0.0); n];
        for (v, yk) in basis.iter().zip(&y) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += yk * vi;
            }
        }
        let pair = EigenPair { value: C::new(sigma, 0.0) + theta.inv(), vector: normalize(x) };
        pairs.push(pair);
    }
    sort_pairs(&mut pairs);
    pairs.truncate(count);
    let worst = pairs.iter().map(|p| p.backward_error(a, b)).fold(0.0, f64::max);
    Ok(Some((pairs, worst)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::sparse::Triplets;

    #[test]
    fn diagonal_pencil_smallest_two() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 0.0), (1, 1, 1.0), (2, 2, 2.0)]);
        let b = CsrMatrix::identity(3);
        for method in [EigenMethod::ShiftInvert, EigenMethod::Dense] {
            let pairs = eigs_with(method, &a, &b, EigenOptions::new(2)).unwrap();
            assert_eq!(pairs.len(), 2);
            assert!(pairs[0].value.norm() < 1e-12, "{method:?} {:?}", pairs[0].value);
            assert!((pairs[1].value - C::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_invert_resolves_triple_kernel() {
        let n = 40;
        let a = CsrMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, if i < 3 { 0.0 } else { i as f64 })).collect());
        let b = CsrMatrix::identity(n);
        let pairs = eigs_with(EigenMethod::ShiftInvert, &a, &b, EigenOptions::new(5)).unwrap();
        let zeros = pairs.iter().filter(|p| p.value.norm() < 1e-10).count();
        assert_eq!(zeros, 3, "{:?}", pairs.iter().map(|p| p.value).collect::<Vec<_>>());
        assert!((pairs[3].value.re - 3.0).abs() < 1e-10);
        assert!((pairs[4].value.re - 4.0).abs() < 1e-10);
    }

    #[test]
    fn real_vector_ignores_rounding_in_the_imaginary_part() {
        let v = vec![C::new(1.0, 0.0), C::new(0.5, 1e-18)];
        let p = EigenPair { value: C::new(2.0, -1e-20), vector: v };
        assert_eq!(p.real_vector(), vec![1.0, 0.5]);
        let q = EigenPair { value: C::new(0.5, -0.3), vector: vec![C::new(1.0, 0.0), C::new(0.0, 1.0)] };
        assert_eq!(q.real_vector(), vec![0.0, 1.0]);
    }

    fn laplacian_pencil(n: usize) -> (CsrMatrix, CsrMatrix) {
        // Neumann 1D Laplacian (singular, kernel = constants) against a mass
        // matrix with two zeroed rows.
        let mut a = Triplets::new(n, n);
        let mut b = Triplets::new(n, n);
        for i in 0..n - 1 {
            a.push(i, i, 1.0);
            a.push(i + 1, i + 1, 1.0);
            a.push(i, i + 1, -1.0);
            a.push(i + 1, i, -1.0);
        }
        for i in 0..n {
            if i != 5 && i != n - 3 {
                b.push(i, i, 1.0 + 0.01 * i as f64);
            }
        }
        (a.into_csr(), b.into_csr())
    }

    #[test]
    fn shift_invert_matches_dense_with_singular_b() {
        let (a, b) = laplacian_pencil(60);
        let opts = EigenOptions::new(6);
        let si = shift_invert_eigs(&a, &b, opts).unwrap();
        let de = dense_eigs(&a, &b, 6).unwrap();
        assert!(si[0].value.norm() < 1e-10);
        for (x, y) in si.iter().zip(&de) {
            assert!((x.value - y.value).norm() <= 1e-8 * x.value.norm().max(1.0), "{} vs {}", x.value, y.value);
            assert!(x.satisfies_bound(&a, &b, 1e-8));
        }
    }

    #[test]
    fn nonsymmetric_pencil_with_complex_pair() {
        let n = 30;
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0 + i as f64);
        }
        // Rotation block makes 0.5 ± 0.3i.
        t.push(0, 0, -0.5);
        t.push(0, 1, -0.3);
        t.push(1, 0, 0.3);
        t.push(1, 1, -1.5);
        let a = t.into_csr();
        let b = CsrMatrix::identity(n);
        let pairs = shift_invert_eigs(&a, &b, EigenOptions::new(3)).unwrap();
        assert!((pairs[0].value - C::new(0.5, -0.3)).norm() < 1e-10, "{:?}", pairs[0].value);
        assert!((pairs[1].value - C::new(0.5, 0.3)).norm() < 1e-10);
        let v0 = pairs[0].real_vector();
        let v1 = pairs[1].real_vector();
        // Real and imaginary halves are independent.
        let cos = dot(&v0, &v1) / (norm2(&v0) * norm2(&v1));
        assert!(cos.abs() < 0.999);
    }
}
