//! Assembled linear systems: constrained operator, load, block layout and
//! the normal-tangential frame used by rotated nodal constraints.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::solvers::sparse::CsrMatrix;

/// Relative size of `‖A w‖` below which a rigid motion counts as a kernel vector.
const KERNEL_TOL: f64 = 1e-9;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub velocity: Range<usize>,
    pub multiplier: Range<usize>,
    pub pressure: Range<usize>,
    pub augmentation: Option<usize>,
}

/// A velocity node whose two components are expressed in the frame
/// `(n, t)` with `t = (-n_y, n_x)`. The normal component is stored at
/// `dofs[0]`, the tangential one at `dofs[1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    pub dofs: [usize; 2],
    pub normal: [f64; 2],
}

impl Rotation {
    pub fn tangent(&self) -> [f64; 2] {
        [-self.normal[1], self.normal[0]]
    }
}

/// Block-diagonal orthogonal change of basis `Q`, identity outside the listed nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Frame {
    pub rotations: Vec<Rotation>,
}

impl Frame {
    pub fn is_identity(&self) -> bool {
        self.rotations.is_empty()
    }

    /// `x = Q x̄`
    pub fn to_physical(&self, x: &mut [f64]) {
        for r in &self.rotations {
            let t = r.tangent();
            let [i, j] = r.dofs;
            let (un, ut) = (x[i], x[j]);
            x[i] = r.normal[0] * un + t[0] * ut;
            x[j] = r.normal[1] * un + t[1] * ut;
        }
    }

    /// `x̄ = Qᵀ x`
    pub fn to_frame(&self, x: &mut [f64]) {
        for r in &self.rotations {
            let t = r.tangent();
            let [i, j] = r.dofs;
            let (ux, uy) = (x[i], x[j]);
            x[i] = r.normal[0] * ux + r.normal[1] * uy;
            x[j] = t[0] * ux + t[1] * uy;
        }
    }

    /// Per-dof expansion `r -> [(r', Q[r][r'])]`, or `None` for unrotated dofs.
    pub(crate) fn expansion(&self, n: usize) -> Vec<Option<[(usize, f64); 2]>> {
        let mut out = vec![None; n];
        for r in &self.rotations {
            let t = r.tangent();
            let [i, j] = r.dofs;
            out[i] = Some([(i, r.normal[0]), (j, t[0])]);
            out[j] = Some([(i, r.normal[1]), (j, t[1])]);
        }
        out
    }

    /// `Qᵀ A Q` applied to a triplet list.
    pub(crate) fn rotate_triplets(&self, n: usize, entries: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
        if self.is_identity() {
            return entries;
        }
        let exp = self.expansion(n);
        let mut out = Vec::with_capacity(entries.len() * 2);
        for (r, c, v) in entries {
            let rows: &[(usize, f64)] = match &exp[r] {
                Some(e) => e,
                None => &[(r, 1.0)],
            };
            let cols: &[(usize, f64)] = match &exp[c] {
                Some(e) => e,
                None => &[(c, 1.0)],
            };
            for &(ri, qr) in rows {
                for &(ci, qc) in cols {
                    let w = qr * v * qc;
                    if w != 0.0 {
                        out.push((ri, ci, w));
                    }
                }
            }
        }
        out
    }
}

/// Why a row was replaced by an identity row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintOrigin {
    /// Essential condition of the global boundary.
    Boundary,
    /// Homogeneous condition imposed on a subdomain interface.
    Interface,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constraint {
    pub dof: usize,
    pub value: f64,
    pub origin: ConstraintOrigin,
}

#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub layout: BlockLayout,
    /// Sorted by dof, one entry per identity row.
    pub constraints: Vec<Constraint>,
    pub frame: Frame,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn constrained_dofs(&self) -> impl Iterator<Item = usize> + '_ {
        self.constraints.iter().map(|c| c.dof)
    }

    /// Orthonormal basis, in frame coordinates, of the combinations of
    /// `candidates` (physical coordinates, zero-padded to `dim`) that the
    /// matrix maps to zero up to rounding.
    pub fn annihilated(&self, candidates: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut q: Vec<Vec<f64>> = Vec::new();
        for c in candidates {
            let mut v = c.clone();
            v.resize(n, 0.0);
            self.frame.to_frame(&mut v);
            let before = norm(&v);
            for _ in 0..2 {
                for u in &q {
                    let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
                }
            }
            let after = norm(&v);
            if after > 1e-8 * before {
                v.iter_mut().for_each(|a| *a /= after);
                q.push(v);
            }
        }
        if q.is_empty() {
            return q;
        }
        let bq: Vec<Vec<f64>> = q.iter().map(|v| self.matrix.mul_vec(v)).collect();
        let k = q.len();
        let gram = DMatrix::from_fn(k, k, |i, j| bq[i].iter().zip(&bq[j]).map(|(a, b)| a * b).sum::<f64>());
        let eig = gram.symmetric_eigen();
        let tol = (KERNEL_TOL * self.matrix.norm_inf()).powi(2);
        (0..k)
            .filter(|&e| eig.eigenvalues[e] <= tol)
            .map(|e| {
                let mut w = vec![0.0; n];
                for (i, v) in q.iter().enumerate() {
                    let y = eig.eigenvectors[(i, e)];
                    w.iter_mut().zip(v).for_each(|(a, b)| *a += y * b);
                }
                let s = norm(&w);
                w.iter_mut().for_each(|a| *a /= s);
                w
            })
            .collect()
    }

    /// Appends one multiplier row and column per basis vector:
    /// `[A W; Wᵀ 0]`.
    pub(crate) fn border(&mut self, basis: &[Vec<f64>]) {
        if basis.is_empty() {
            return;
        }
        self.matrix = self.matrix.bordered(basis);
        self.rhs.resize(self.rhs.len() + basis.len(), 0.0);
    }

    pub fn interface_constrained(&self) -> Vec<usize> {
        self.constraints
            .iter()
            .filter(|c| c.origin == ConstraintOrigin::Interface)
            .map(|c| c.dof)
            .collect()
    }

    /// Rotates into the frame, eliminates constraints symmetrically and compresses.
    pub(crate) fn finalize(
        n: usize,
        entries: Vec<(usize, usize, f64)>,
        mut rhs: Vec<f64>,
        layout: BlockLayout,
        frame: Frame,
        constraints: Vec<Constraint>,
    ) -> LinearSystem {
        let entries = frame.rotate_triplets(n, entries);
        frame.to_frame(&mut rhs);
        let constraints = merge_constraints(constraints);
        let mut fixed: Vec<Option<f64>> = vec![None; n];
        for c in &constraints {
            fixed[c.dof] = Some(c.value);
        }
        let mut kept = Vec::with_capacity(entries.len() + constraints.len());
        for (r, c, v) in entries {
            if fixed[r].is_some() {
                continue;
            }
            if let Some(g) = fixed[c] {
                rhs[r] -= v * g;
                continue;
            }
            kept.push((r, c, v));
        }
        for c in &constraints {
            kept.push((c.dof, c.dof, 1.0));
            rhs[c.dof] = c.value;
        }
        LinearSystem { matrix: CsrMatrix::from_triplets(n, n, kept), rhs, layout, constraints, frame }
    }
}

/// One constraint per dof; a boundary origin wins over an interface one.
fn merge_constraints(mut list: Vec<Constraint>) -> Vec<Constraint> {
    list.sort_by(|a, b| {
        a.dof.cmp(&b.dof).then_with(|| {
            let rank = |c: &Constraint| (c.origin == ConstraintOrigin::Interface) as u8;
            rank(a).cmp(&rank(b))
        })
    });
    list.dedup_by_key(|c| c.dof);
    list
}
