//! Full (non-restarted) right-preconditioned GMRES with pluggable stopping rules.

use super::lu::Factorization;
use super::sparse::{axpy, dot, norm2, CsrMatrix};

/// A linear map `y = Op x` on vectors of length `dim()`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y);
    }
}

impl LinearOperator for Factorization {
    fn dim(&self) -> usize {
        Factorization::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
        self.solve_in_place(y);
    }
}

/// The identity, used when no preconditioner is wanted.
#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Decides convergence from the residual norm and, when requested, the iterate.
pub trait Monitor {
    /// Whether `check` needs the current iterate.
    fn needs_iterate(&self) -> bool;
    /// Called once with the initial guess and residual norm.
    fn start(&mut self, x0: &[f64], residual: f64);
    /// Returns `(converged, error)` for iteration `it`.
    fn check(&mut self, it: usize, residual: f64, x: Option<&[f64]>) -> (bool, Option<f64>);
}

/// Stops when `‖U − x_m‖ / ‖U − x_0‖` drops below `tol` for a known solution `U`.
#[derive(Clone, Debug)]
pub struct ErrorMonitor {
    reference: Vec<f64>,
    tol: f64,
    initial: f64,
}

impl ErrorMonitor {
    pub fn new(reference: Vec<f64>, tol: f64) -> Self {
        Self { reference, tol, initial: 0.0 }
    }

    pub fn relative_error(&self, x: &[f64]) -> f64 {
        let e: f64 = self.reference.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum();
        if self.initial > 0.0 {
            e.sqrt() / self.initial
        } else {
            e.sqrt()
        }
    }
}

impl Monitor for ErrorMonitor {
    fn needs_iterate(&self) -> bool {
        true
    }

    fn start(&mut self, x0: &[f64], _residual: f64) {
        self.initial = 0.0;
        self.initial = self.relative_error(x0);
    }

    fn check(&mut self, _it: usize, _residual: f64, x: Option<&[f64]>) -> (bool, Option<f64>) {
        let e = self.relative_error(x.expect("error monitor needs the iterate"));
        (e < self.tol, Some(e))
    }
}

/// Stops when `‖b − A x_m‖ / ‖b − A x_0‖` drops below `tol`.
#[derive(Clone, Debug)]
pub struct ResidualMonitor {
    tol: f64,
    initial: f64,
}

impl ResidualMonitor {
    pub fn new(tol: f64) -> Self {
        Self { tol, initial: 0.0 }
    }
}

impl Monitor for ResidualMonitor {
    fn needs_iterate(&self) -> bool {
        false
    }

    fn start(&mut self, _x0: &[f64], residual: f64) {
        self.initial = residual;
    }

    fn check(&mut self, _it: usize, residual: f64, _x: Option<&[f64]>) -> (bool, Option<f64>) {
        (residual <= self.tol * self.initial, None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KrylovTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
}

impl KrylovTrace {
    /// `"12"` or `">1000"`.
    pub fn label(&self, maxit: usize) -> String {
        if self.converged {
            self.iterations.to_string()
        } else {
            format!(">{maxit}")
        }
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solves `A x = b` from `x0` with right preconditioner `M⁻¹`, iterating
/// until the monitor reports convergence or `maxit` iterations are done.
/// Returns the last iterate.
pub fn gmres(
    a: &dyn LinearOperator,
    m_inv: &dyn LinearOperator,
    b: &[f64],
    x0: &[f64],
    monitor: &mut dyn Monitor,
    maxit: usize,
) -> (Vec<f64>, KrylovTrace) {
    let n = b.len();
    assert_eq!(a.dim(), n);
    assert_eq!(m_inv.dim(), n);
    assert_eq!(x0.len(), n);
    let mut trace = KrylovTrace::default();
    let mut r = vec![0.0; n];
    a.apply(x0, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let beta = norm2(&r);
    monitor.start(x0, beta);
    let mut x = x0.to_vec();
    if beta == 0.0 {
        trace.converged = true;
        return (x, trace);
    }

    let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
    let mut z: Vec<Vec<f64>> = Vec::new();
    // Columns of the Hessenberg matrix after the Givens rotations.
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut w = vec![0.0; n];

    for it in 1..=maxit {
        let mut zj = vec![0.0; n];
        m_inv.apply(&v[it - 1], &mut zj);
        a.apply(&zj, &mut w);
        z.push(zj);
        let mut col = vec![0.0; it + 1];
        // Modified Gram-Schmidt with one reorthogonalization pass.
        for _ in 0..2 {
            for (i, vi) in v.iter().enumerate() {
                let c = dot(&w, vi);
                col[i] += c;
                axpy(-c, vi, &mut w);
            }
        }
        let hn = norm2(&w);
        col[it] = hn;
        for (i, &(c, s)) in rotations.iter().enumerate() {
            let (p, q) = (col[i], col[i + 1]);
            col[i] = c * p + s * q;
            col[i + 1] = -s * p + c * q;
        }
        let (c, s) = givens(col[it - 1], col[it]);
        col[it - 1] = c * col[it - 1] + s * col[it];
        col[it] = 0.0;
        rotations.push((c, s));
        let gk = g[it - 1];
        g[it - 1] = c * gk;
        g.push(-s * gk);
        h.push(col);
        let residual = g[it].abs();

        let breakdown = hn <= 1e-14 * beta;
        let iterate = if monitor.needs_iterate() || breakdown || it == maxit {
            Some(iterate_from(&h, &g, &z, x0))
        } else {
            None
        };
        let (done, error) = monitor.check(it, residual, iterate.as_deref());
        trace.records.push(IterationRecord { iteration: it, residual, error });
        trace.iterations = it;
        if done || breakdown {
            x = iterate.unwrap_or_else(|| iterate_from(&h, &g, &z, x0));
            trace.converged = done;
            return (x, trace);
        }
        if it == maxit {
            x = iterate.expect("formed at maxit");
            break;
        }
        v.push(w.iter().map(|wi| wi / hn).collect());
    }
    (x, trace)
}

/// `x0 + Z y` with `y` from the rotated triangular system.
fn iterate_from(h: &[Vec<f64>], g: &[f64], z: &[Vec<f64>], x0: &[f64]) -> Vec<f64> {
    let m = h.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for (j, yj) in y.iter().enumerate().take(m).skip(i + 1) {
            s -= h[j][i] * yj;
        }
        y[i] = s / h[i][i];
    }
    let mut x = x0.to_vec();
    for (zj, yj) in z.iter().zip(&y) {
        axpy(*yj, zj, &mut x);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::lu::factorize;

    fn laplacian(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 0.1 * i as f64));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -0.7));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = CsrMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 1.0];
        let (x, trace) = gmres(&a, &Identity(5), &b, &[0.0; 5], &mut ResidualMonitor::new(1e-12), 10);
        assert!(trace.converged);
        assert_eq!(trace.iterations, 1);
        assert!(x.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-14));
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let a = laplacian(30);
        let f = factorize(&a).unwrap();
        let b: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let u = f.solve(&b);
        let mut mon = ErrorMonitor::new(u, 1e-6);
        let (_, trace) = gmres(&a, &f, &b, &[0.0; 30], &mut mon, 10);
        assert_eq!(trace.iterations, 1);
        assert!(trace.converged);
    }

    #[test]
    fn diagonal_is_exact_after_two_steps() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 2.0)]);
        let (x, trace) = gmres(&a, &Identity(2), &[1.0, 1.0], &[0.0, 0.0], &mut ResidualMonitor::new(1e-14), 10);
        assert!(trace.iterations <= 2 && trace.converged);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn residuals_do_not_increase() {
        let a = laplacian(80);
        let b = vec![1.0; 80];
        let (_, trace) = gmres(&a, &Identity(80), &b, &[0.0; 80], &mut ResidualMonitor::new(1e-10), 200);
        assert!(trace.converged);
        for w in trace.records.windows(2) {
            assert!(w[1].residual <= w[0].residual * (1.0 + 1e-12));
        }
    }

    #[test]
    fn maxit_is_reported() {
        let a = laplacian(50);
        let b = vec![1.0; 50];
        let (_, trace) = gmres(&a, &Identity(50), &b, &[0.0; 50], &mut ResidualMonitor::new(1e-14), 3);
        assert!(!trace.converged);
        assert_eq!(trace.label(3), ">3");
    }
}
