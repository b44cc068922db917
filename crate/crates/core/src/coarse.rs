//! GenEO spectral coarse spaces and the two-level projected preconditioner.
//!
//! On every subdomain the pencil `Ã_j v = λ B_j v` pairs the Neumann
//! operator with the preconditioner's own local matrix. Eigenvectors of the
//! smallest `|λ|`, weighted by the partition of unity and extended by zero,
//! span the coarse space.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::decomposition::Decomposition;
use crate::discretization::{Assembler, ConstraintOrigin, InterfaceCondition, LinearSystem};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::schwarz::{LocalSolver, OneLevelPreconditioner};
use crate::solvers::eigen::{default_shift, generalized_eigs, EigenOptions};
use crate::solvers::gmres::LinearOperator;
use crate::solvers::sparse::{dot, CsrMatrix};

/// Pivot size, after equilibration of `E₀`, below which a coarse column is dropped.
pub const COARSE_PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Selection {
    /// The `M` smallest-magnitude eigenvalues of every subdomain.
    FixedCount(usize),
    /// Every eigenvalue with `|λ| < θ` among those computed.
    Threshold(f64),
}

impl Selection {
    pub fn label(&self) -> String {
        match self {
            Selection::FixedCount(m) => m.to_string(),
            Selection::Threshold(t) => format!("theta={t}"),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Selection {
    type Err = Error;

    /// `5` or `theta=0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(t) = s.strip_prefix("theta=") {
            let t: f64 = t.parse().map_err(|_| Error::Config(format!("bad threshold `{s}`")))?;
            if !(t > 0.0) {
                return Err(Error::Config(format!("threshold must be positive, got {t}")));
            }
            return Ok(Selection::Threshold(t));
        }
        s.parse().map(Selection::FixedCount).map_err(|_| Error::Config(format!("bad coarse size `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarseSpec {
    pub selection: Selection,
    /// Eigenpairs computed per subdomain.
    pub request: usize,
    /// Defaults to a small negative multiple of the pencil scale.
    pub shift: Option<f64>,
}

impl CoarseSpec {
    pub fn fixed(m: usize) -> Self {
        Self { selection: Selection::FixedCount(m), request: m, shift: None }
    }

    pub fn threshold(theta: f64, request: usize) -> Self {
        Self { selection: Selection::Threshold(theta), request, shift: None }
    }
}

/// The generalized eigenproblem of one subdomain, restricted to the dofs
/// that are neither fixed by the global boundary nor augmentation.
#[derive(Clone, Debug)]
pub struct GeneoPencil {
    /// Neumann operator in the frame of `B_j`.
    pub a: CsrMatrix,
    /// `B_j` with its interface-constrained rows zeroed.
    pub b: CsrMatrix,
    /// Local indices (into the `B_j` numbering) of the pencil unknowns.
    pub kept: Vec<usize>,
    /// Common kernel of `Ã` and `B_j` on `kept`. When nonempty, `a` and `b`
    /// are bordered so that eigenvectors are orthogonal to it; the kernel
    /// vectors themselves are zero modes.
    pub kernel: Vec<Vec<f64>>,
    /// `‖Ã‖∞ / ‖B̄‖∞`, the natural size of the spectrum.
    pub scale: f64,
}

fn csr_triplets(m: &CsrMatrix) -> Vec<(usize, usize, f64)> {
    (0..m.nrows())
        .flat_map(|i| {
            let (cols, vals) = m.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
        .collect()
}

pub fn geneo_pencil(
    assembler: &Assembler,
    global: &LinearSystem,
    decomposition: &Decomposition,
    local: &LocalSolver,
) -> Result<GeneoPencil> {
    let j = local.subdomain;
    let neumann = assembler.local_system(
        global,
        &decomposition.overlapped_elements[j],
        &decomposition.dof_sets[j],
        InterfaceCondition::Neumann,
        false,
    )?;
    let bsys = local.system();
    if !neumann.system.frame.is_identity() {
        return Err(Error::Preconditioner("Neumann subdomain operator carries a rotated frame".into()));
    }
    let n = bsys.dim();
    let na = neumann.system.dim();
    // Ã lives on the dof list; B may add a trailing local augmentation slot.
    let entries: Vec<(usize, usize, f64)> = csr_triplets(&neumann.system.matrix);
    let a_full = CsrMatrix::from_triplets(n, n, bsys.frame.rotate_triplets(n, entries));

    let mut exclude = vec![false; n];
    for c in &bsys.constraints {
        if c.origin == ConstraintOrigin::Boundary {
            exclude[c.dof] = true;
        }
    }
    for c in &neumann.system.constraints {
        exclude[c.dof] = true;
    }
    if let Some(a) = bsys.layout.augmentation {
        exclude[a] = true;
    }
    for e in exclude.iter_mut().skip(na) {
        *e = true;
    }
    let mut b_bar = bsys.matrix.clone();
    let interface = bsys.interface_constrained();
    {
        let ptr = b_bar.row_ptr().to_vec();
        let cols = b_bar.col_idx().to_vec();
        let vals = b_bar.values_mut();
        for &i in &interface {
            for k in ptr[i]..ptr[i + 1] {
                if cols[k] == i {
                    vals[k] = 0.0;
                }
            }
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&i| !exclude[i]).collect();
    let a = a_full.principal_submatrix(&kept);
    let b = b_bar.principal_submatrix(&kept);
    let nb = b.norm_inf();
    let scale = if nb > 0.0 { a.norm_inf() / nb } else { 1.0 };
    // Rigid motions annihilated by B are annihilated by Ã too, which makes
    // the pencil singular; they are split off and constrained away.
    let kernel: Vec<Vec<f64>> = local.local.kernel.iter().map(|w| kept.iter().map(|&i| w[i]).collect()).collect();
    let (a, b) = if kernel.is_empty() {
        (a, b)
    } else {
        let zero = vec![vec![0.0; kept.len()]; kernel.len()];
        (a.bordered(&kernel), b.bordered(&zero))
    };
    Ok(GeneoPencil { a, b, kept, kernel, scale })
}

/// Computed eigenpairs of one subdomain; vectors are real, in physical
/// coordinates and indexed like the subdomain dof list.
#[derive(Clone, Debug)]
pub struct SubdomainModes {
    pub subdomain: usize,
    pub values: Vec<Complex64>,
    pub vectors: Vec<Vec<f64>>,
    pub scale: f64,
}

impl SubdomainModes {
    /// Eigenvalues with `|λ| < tol · scale`.
    pub fn near_zero_count(&self, tol: f64) -> usize {
        self.values.iter().filter(|l| l.norm() < tol * self.scale).count()
    }
}

pub fn solve_geneo(
    assembler: &Assembler,
    global: &LinearSystem,
    decomposition: &Decomposition,
    local: &LocalSolver,
    count: usize,
    shift: Option<f64>,
) -> Result<SubdomainModes> {
    let pencil = geneo_pencil(assembler, global, decomposition, local)?;
    let zeros = pencil.kernel.iter().map(|w| (Complex64::new(0.0, 0.0), w.clone()));
    let want = count.saturating_sub(pencil.kernel.len()).min(pencil.kept.len() - pencil.kernel.len());
    let mut pairs = Vec::new();
    if want > 0 {
        let mut opts = EigenOptions::new(want);
        opts.shift = Some(shift.unwrap_or_else(|| default_shift(&pencil.a, &pencil.b)));
        pairs = generalized_eigs(&pencil.a, &pencil.b, opts)
            .map_err(|e| Error::Eigen(format!("subdomain {}: {e}", local.subdomain)))?;
    }
    let modes = zeros.chain(pairs.iter().map(|p| (p.value, p.real_vector()))).take(count).collect::<Vec<_>>();
    Ok(modes_from_pairs(local, &pencil, modes.into_iter()))
}

fn modes_from_pairs(
    local: &LocalSolver,
    pencil: &GeneoPencil,
    pairs: impl Iterator<Item = (Complex64, Vec<f64>)>,
) -> SubdomainModes {
    let sys = local.system();
    let nd = local.dofs().len();
    let (values, vectors) = pairs
        .map(|(value, v)| {
            let mut full = vec![0.0; sys.dim()];
            for (&k, x) in pencil.kept.iter().zip(v) {
                full[k] = x;
            }
            sys.frame.to_physical(&mut full);
            full.truncate(nd);
            (value, full)
        })
        .unzip();
    SubdomainModes { subdomain: local.subdomain, values, vectors, scale: pencil.scale }
}

/// GenEO eigenpairs of every subdomain, computed concurrently.
pub fn solve_all_geneo(
    assembler: &Assembler,
    global: &LinearSystem,
    decomposition: &Decomposition,
    one_level: &OneLevelPreconditioner,
    count: usize,
    shift: Option<f64>,
    execution: Execution,
) -> Result<Vec<SubdomainModes>> {
    execution.try_map(one_level.locals.len(), |j| {
        solve_geneo(assembler, global, decomposition, &one_level.locals[j], count, shift)
    })
}

/// `(j, k, re, im)` rows.
pub fn write_spectrum_csv<W: Write>(modes: &SubdomainModes, mut w: W) -> std::io::Result<()> {
    writeln!(w, "subdomain,index,re,im")?;
    for (k, l) in modes.values.iter().enumerate() {
        writeln!(w, "{},{k},{:e},{:e}", modes.subdomain, l.re, l.im)?;
    }
    Ok(())
}

/// A coarse basis vector stored sparsely in global numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseColumn {
    pub subdomain: usize,
    pub index: usize,
    pub value: Complex64,
    pub rows: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CoarseColumn {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.rows.iter().zip(&self.vals).map(|(&i, v)| v * x[i]).sum()
    }

    pub fn axpy(&self, alpha: f64, y: &mut [f64]) {
        for (&i, v) in self.rows.iter().zip(&self.vals) {
            y[i] += alpha * v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        self.axpy(1.0, &mut x);
        x
    }
}

/// `R₀ᵀ` by columns and the factorized `E₀ = R₀ A R₀ᵀ`.
#[derive(Clone, Debug)]
pub struct CoarseSpace {
    pub columns: Vec<CoarseColumn>,
    /// Columns removed by the pivot rule.
    pub dropped: Vec<CoarseColumn>,
    e0: Option<CoarseSolver>,
    dim: usize,
}

/// Row and column scalings making every row and column maximum of `m` close
/// to one, so pivot tests do not depend on the units of the unknowns.
fn equilibrate(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let (nr, nc) = m.shape();
    let mut r = vec![1.0; nr];
    let mut c = vec![1.0; nc];
    for _ in 0..30 {
        let mut rmax = vec![0.0f64; nr];
        let mut cmax = vec![0.0f64; nc];
        for j in 0..nc {
            for i in 0..nr {
                let t = (m[(i, j)] * r[i] * c[j]).abs();
                rmax[i] = rmax[i].max(t);
                cmax[j] = cmax[j].max(t);
            }
        }
        let off = rmax.iter().chain(&cmax).filter(|&&x| x > 0.0).fold(0.0f64, |d, &x| d.max((1.0 - x).abs()));
        if off < 0.1 {
            break;
        }
        for (s, x) in r.iter_mut().zip(&rmax).chain(c.iter_mut().zip(&cmax)) {
            if *x > 0.0 {
                *s /= x.sqrt();
            }
        }
    }
    (r, c)
}

fn scaled(m: &DMatrix<f64>, r: &[f64], c: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * r[i] * c[j])
}

/// Smallest LU pivot of the equilibrated matrix.
fn min_relative_pivot(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    if m.amax() == 0.0 {
        return 0.0;
    }
    let (r, c) = equilibrate(m);
    let u = scaled(m, &r, &c).lu().u();
    (0..m.nrows()).map(|i| u[(i, i)].abs()).fold(f64::MAX, f64::min)
}

/// `E₀⁻¹` through an LU of the equilibrated coarse matrix.
#[derive(Clone, Debug)]
struct CoarseSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl CoarseSolver {
    fn new(e0: &DMatrix<f64>) -> Self {
        let (row_scale, col_scale) = equilibrate(e0);
        Self { lu: scaled(e0, &row_scale, &col_scale).lu(), row_scale, col_scale }
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let b = nalgebra::DVector::from_iterator(r.len(), r.iter().zip(&self.row_scale).map(|(x, s)| x * s));
        let y = self.lu.solve(&b).expect("coarse operator factorized with nonzero pivots");
        y.iter().zip(&self.col_scale).map(|(x, s)| x * s).collect()
    }
}

impl CoarseSpace {
    pub fn empty(dim: usize) -> Self {
        Self { columns: Vec::new(), dropped: Vec::new(), e0: None, dim }
    }

    /// Assembles `E₀` and factorizes it, dropping columns (in order) whose
    /// inclusion drives a pivot below [`COARSE_PIVOT_TOL`].
    pub fn from_columns(a: &CsrMatrix, columns: Vec<CoarseColumn>, execution: Execution) -> Result<Self> {
        let n = a.nrows();
        let m = columns.len();
        if m == 0 {
            return Ok(Self::empty(n));
        }
        let e_cols = execution.map(m, |k| {
            let ak = a.mul_vec(&columns[k].to_dense(n));
            columns.iter().map(|c| c.dot(&ak)).collect::<Vec<f64>>()
        });
        let e = DMatrix::from_fn(m, m, |i, k| e_cols[k][i]);
        let keep: Vec<usize> = if min_relative_pivot(&e) >= COARSE_PIVOT_TOL {
            (0..m).collect()
        } else {
            let mut keep: Vec<usize> = Vec::new();
            for k in 0..m {
                keep.push(k);
                let sub = e.select_rows(&keep).select_columns(&keep);
                if min_relative_pivot(&sub) < COARSE_PIVOT_TOL {
                    keep.pop();
                }
            }
            keep
        };
        let e0 = e.select_rows(&keep).select_columns(&keep);
        let mut kept = Vec::with_capacity(keep.len());
        let mut dropped = Vec::new();
        let mut flags = vec![false; m];
        for &k in &keep {
            flags[k] = true;
        }
        for (k, c) in columns.into_iter().enumerate() {
            if flags[k] {
                kept.push(c);
            } else {
                dropped.push(c);
            }
        }
        if kept.is_empty() {
            return Err(Error::Coarse(format!("all {m} columns dropped; first from subdomain {}", dropped[0].subdomain)));
        }
        Ok(Self { columns: kept, dropped, e0: Some(CoarseSolver::new(&e0)), dim: n })
    }

    pub fn size(&self) -> usize {
        self.columns.len()
    }

    pub fn global_dim(&self) -> usize {
        self.dim
    }

    /// `R₀ r`
    pub fn restrict(&self, r: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|c| c.dot(r)).collect()
    }

    /// `R₀ᵀ y`
    pub fn extend(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (c, &yk) in self.columns.iter().zip(y) {
            c.axpy(yk, &mut x);
        }
        x
    }

    /// `R₀ᵀ E₀⁻¹ R₀ r`
    pub fn coarse_solve(&self, r: &[f64]) -> Vec<f64> {
        match &self.e0 {
            None => vec![0.0; self.dim],
            Some(solver) => {
                let y = solver.solve(&self.restrict(r));
                self.extend(&y)
            }
        }
    }

    /// `P₀ v = R₀ᵀ E₀⁻¹ R₀ A v`
    pub fn project(&self, a: &CsrMatrix, v: &[f64]) -> Vec<f64> {
        self.coarse_solve(&a.mul_vec(v))
    }
}

/// Fixed-count or threshold selection, per-subdomain orthonormalization of
/// `D_j V_jk`, then assembly of `E₀`.
pub fn build_coarse_space(
    a: &CsrMatrix,
    decomposition: &Decomposition,
    modes: &[SubdomainModes],
    selection: Selection,
    execution: Execution,
) -> Result<CoarseSpace> {
    let mut columns = Vec::new();
    for md in modes {
        let j = md.subdomain;
        let dofs = &decomposition.dof_sets[j];
        let weights = &decomposition.pu_weights[j];
        let chosen: Vec<usize> = match selection {
            Selection::FixedCount(m) => (0..md.values.len().min(m)).collect(),
            Selection::Threshold(t) => (0..md.values.len()).filter(|&k| md.values[k].norm() < t).collect(),
        };
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for k in chosen {
            let mut w: Vec<f64> = md.vectors[k].iter().zip(weights).map(|(x, d)| x * d).collect();
            let before = dot(&w, &w).sqrt();
            if before == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&w, q);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let after = dot(&w, &w).sqrt();
            if after <= 1e-10 * before {
                continue;
            }
            w.iter_mut().for_each(|x| *x /= after);
            let (rows, vals): (Vec<usize>, Vec<f64>) =
                dofs.iter().zip(&w).filter(|(_, &x)| x != 0.0).map(|(&g, &x)| (g, x)).unzip();
            basis.push(w);
            columns.push(CoarseColumn { subdomain: j, index: k, value: md.values[k], rows, vals });
        }
    }
    CoarseSpace::from_columns(a, columns, execution)
}

/// `M⁻¹ = P₀A⁻¹ + (I − P₀) M₁⁻¹ (I − P₀ᵀ)`, applied matrix-free.
pub struct TwoLevelPreconditioner<'a> {
    pub one_level: &'a OneLevelPreconditioner,
    pub coarse: &'a CoarseSpace,
    pub a: &'a CsrMatrix,
}

impl<'a> TwoLevelPreconditioner<'a> {
    pub fn new(one_level: &'a OneLevelPreconditioner, coarse: &'a CoarseSpace, a: &'a CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        for d in [one_level.dim(), coarse.global_dim()] {
            if d != n {
                return Err(Error::Dimension { expected: n, got: d });
            }
        }
        Ok(Self { one_level, coarse, a })
    }
}

impl LinearOperator for TwoLevelPreconditioner<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        if self.coarse.size() == 0 {
            self.one_level.apply(r, z);
            return;
        }
        let c = self.coarse.coarse_solve(r);
        let ac = self.a.mul_vec(&c);
        let s: Vec<f64> = r.iter().zip(&ac).map(|(ri, ai)| ri - ai).collect();
        let mut w = vec![0.0; r.len()];
        self.one_level.apply(&s, &mut w);
        let pw = self.coarse.project(self.a, &w);
        for (((zi, ci), wi), pi) in z.iter_mut().zip(&c).zip(&w).zip(&pw) {
            *zi = ci + wi - pi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_parsing() {
        assert_eq!("5".parse::<Selection>().unwrap(), Selection::FixedCount(5));
        assert_eq!("theta=0.25".parse::<Selection>().unwrap(), Selection::Threshold(0.25));
        assert!("theta=-1".parse::<Selection>().is_err());
        assert!("x".parse::<Selection>().is_err());
    }

    #[test]
    fn dependent_columns_are_dropped() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 2.0), (1, 1, 3.0), (2, 2, 4.0)]);
        let col = |k: usize, rows: Vec<usize>, vals: Vec<f64>| CoarseColumn { subdomain: k, index: 0, value: Complex64::new(0.0, 0.0), rows, vals };
        let cols = vec![col(0, vec![0, 1], vec![1.0, 1.0]), col(1, vec![0, 1], vec![2.0, 2.0]), col(2, vec![2], vec![1.0])];
        let cs = CoarseSpace::from_columns(&a, cols, Execution::Sequential).unwrap();
        assert_eq!(cs.size(), 2);
        assert_eq!(cs.dropped.len(), 1);
        assert_eq!(cs.dropped[0].subdomain, 1);
        // P₀ reproduces vectors in the span.
        let v = vec![3.0, 3.0, -1.0];
        let pv = cs.project(&a, &v);
        assert!(pv.iter().zip(&v).all(|(p, q)| (p - q).abs() < 1e-14));
    }

    #[test]
    fn empty_space_solves_to_zero() {
        let cs = CoarseSpace::empty(4);
        assert_eq!(cs.coarse_solve(&[1.0; 4]), vec![0.0; 4]);
    }
}
