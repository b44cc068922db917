//! Lowest-order Brezzi-Douglas-Marini element on a physical triangle.
//!
//! The two dofs of a facet are the normal moments
//! `(1/|E|) ∫_E (v·n_E) q_m ds` against the orthonormal Legendre polynomials
//! `q_0 = 1`, `q_1 = sqrt(3)(2s - 1)`, with `s` running from the lower to the
//! higher vertex index and `n_E` the global facet normal. Building the basis
//! against these global functionals makes normal continuity automatic.

use nalgebra::Matrix6;

use super::quadrature::LineRule;
use crate::mesh::{Mesh, Point};

pub fn legendre(m: usize, s: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => 3f64.sqrt() * (2.0 * s - 1.0),
        _ => unreachable!("only degrees 0 and 1 are used"),
    }
}

#[derive(Clone, Debug)]
pub struct BdmElement {
    center: Point,
    scale: f64,
    /// Row `j` holds the coefficients of basis function `j` in the scaled monomials.
    coeffs: Matrix6<f64>,
}

fn monomials(xi: f64, eta: f64) -> [[f64; 2]; 6] {
    [[1.0, 0.0], [xi, 0.0], [eta, 0.0], [0.0, 1.0], [0.0, xi], [0.0, eta]]
}

/// Points of the facet `f` at parameters `s` (lower to higher vertex).
pub fn facet_point(mesh: &Mesh, f: usize, s: f64) -> Point {
    let [a, b] = mesh.facets[f].vertices;
    let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
    [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]
}

impl BdmElement {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        let center = mesh.centroid(t);
        let scale = mesh.diameter(t);
        let rule = LineRule::new(4);
        let mut g = Matrix6::zeros();
        for (e, &f) in mesh.triangle_facets[t].iter().enumerate() {
            let n = mesh.facet_normal(f);
            for (s, w) in rule.points.iter().zip(&rule.weights) {
                let p = facet_point(mesh, f, *s);
                let m = monomials((p[0] - center[0]) / scale, (p[1] - center[1]) / scale);
                for mm in 0..2 {
                    let q = legendre(mm, *s);
                    for i in 0..6 {
                        g[(2 * e + mm, i)] += w * q * (m[i][0] * n[0] + m[i][1] * n[1]);
                    }
                }
            }
        }
        let coeffs = g.try_inverse().expect("BDM dofs are unisolvent").transpose();
        Self { center, scale, coeffs }
    }

    pub fn eval(&self, p: Point) -> [[f64; 2]; 6] {
        let m = monomials((p[0] - self.center[0]) / self.scale, (p[1] - self.center[1]) / self.scale);
        let mut out = [[0.0; 2]; 6];
        for j in 0..6 {
            for i in 0..6 {
                out[j][0] += self.coeffs[(j, i)] * m[i][0];
                out[j][1] += self.coeffs[(j, i)] * m[i][1];
            }
        }
        out
    }

    /// Constant gradients: `grad[j][c][d] = ∂_d (φ_j)_c`.
    pub fn grad(&self) -> [[[f64; 2]; 2]; 6] {
        let inv = 1.0 / self.scale;
        let mut out = [[[0.0; 2]; 2]; 6];
        for j in 0..6 {
            let c = |i: usize| self.coeffs[(j, i)] * inv;
            out[j] = [[c(1), c(2)], [c(4), c(5)]];
        }
        out
    }

    /// Moments of `v` against the six facet functionals of triangle `t`.
    pub fn interpolate(mesh: &Mesh, t: usize, v: &dyn Fn(Point) -> [f64; 2]) -> [f64; 6] {
        let rule = LineRule::new(10);
        let mut out = [0.0; 6];
        for (e, &f) in mesh.triangle_facets[t].iter().enumerate() {
            let m = facet_moments(mesh, f, v, &rule);
            out[2 * e] = m[0];
            out[2 * e + 1] = m[1];
        }
        out
    }
}

/// The two normal moments of `v` on facet `f`.
pub fn facet_moments(mesh: &Mesh, f: usize, v: &dyn Fn(Point) -> [f64; 2], rule: &LineRule) -> [f64; 2] {
    let n = mesh.facet_normal(f);
    let mut out = [0.0; 2];
    for (s, w) in rule.points.iter().zip(&rule.weights) {
        let val = v(facet_point(mesh, f, *s));
        let vn = val[0] * n[0] + val[1] * n[1];
        out[0] += w * vn * legendre(0, *s);
        out[1] += w * vn * legendre(1, *s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, BoundaryRule, DomainKind, DomainShape};

    #[test]
    fn dual_to_facet_moments_and_reproduces_linears() {
        let shape = DomainShape::new(DomainKind::LShape, BoundaryRule::Sides);
        let mesh = build_structured_mesh(&shape, 2).unwrap();
        let rule = LineRule::new(6);
        for t in 0..mesh.num_triangles() {
            let el = BdmElement::new(&mesh, t);
            for j in 0..6 {
                let basis = |p: Point| el.eval(p)[j];
                for (e, &f) in mesh.triangle_facets[t].iter().enumerate() {
                    let m = facet_moments(&mesh, f, &basis, &rule);
                    for mm in 0..2 {
                        let expect = if 2 * e + mm == j { 1.0 } else { 0.0 };
                        assert!((m[mm] - expect).abs() < 1e-12);
                    }
                }
            }
            let field = |p: Point| [1.0 + 2.0 * p[0] - p[1], 0.5 * p[0] + 3.0 * p[1]];
            let dofs = BdmElement::interpolate(&mesh, t, &field);
            let x = [mesh.centroid(t)[0] + 0.01, mesh.centroid(t)[1] - 0.02];
            let vals = el.eval(x);
            let mut v = [0.0; 2];
            for j in 0..6 {
                v[0] += dofs[j] * vals[j][0];
                v[1] += dofs[j] * vals[j][1];
            }
            let exact = field(x);
            assert!((v[0] - exact[0]).abs() < 1e-12 && (v[1] - exact[1]).abs() < 1e-12);
        }
    }
}
