//! Element matrices, loads and facet integrals for both schemes.

use super::bdm::{facet_point, BdmElement};
use super::lagrange::{LagrangeElement, REFERENCE_VERTICES};
use super::quadrature::{LineRule, TriangleRule};
use super::space::{Scheme, Space};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::problems::{PdeKind, Problem};

/// Dense element matrices of the unconstrained operator, row-major, one per triangle.
#[derive(Clone, Debug)]
pub struct ElementMatrices {
    pub stride: usize,
    pub matrices: Vec<f64>,
    pub loads: Vec<f64>,
    /// `∫_K ψ` for every local dof, non-zero only for pressure dofs.
    pub pressure_weights: Vec<f64>,
    pub tau: f64,
}

impl ElementMatrices {
    pub fn matrix(&self, t: usize) -> &[f64] {
        let n = self.stride * self.stride;
        &self.matrices[t * n..(t + 1) * n]
    }

    pub fn load(&self, t: usize) -> &[f64] {
        &self.loads[t * self.stride..(t + 1) * self.stride]
    }

    pub fn pressure_weight(&self, t: usize) -> &[f64] {
        &self.pressure_weights[t * self.stride..(t + 1) * self.stride]
    }
}

/// Affine map from the reference triangle.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Affine {
    origin: Point,
    jac: [[f64; 2]; 2],
    inv_t: [[f64; 2]; 2],
    pub det: f64,
}

impl Affine {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        let [p0, p1, p2] = mesh.coords(t);
        let jac = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        // J^{-T}
        let inv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        Self { origin: p0, jac, inv_t, det }
    }

    pub fn map(&self, r: [f64; 2]) -> Point {
        [
            self.origin[0] + self.jac[0][0] * r[0] + self.jac[0][1] * r[1],
            self.origin[1] + self.jac[1][0] * r[0] + self.jac[1][1] * r[1],
        ]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

/// Reference coordinates of the point at parameter `r` along local edge `e`.
pub(crate) fn reference_edge_point(e: usize, r: f64) -> [f64; 2] {
    let a = REFERENCE_VERTICES[(e + 1) % 3];
    let b = REFERENCE_VERTICES[(e + 2) % 3];
    [a[0] + r * (b[0] - a[0]), a[1] + r * (b[1] - a[1])]
}

pub fn element_matrices(space: &Space, problem: &Problem, tau: f64) -> Result<ElementMatrices> {
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("stabilisation tau must be positive, got {tau}")));
    }
    if problem.kind() == PdeKind::Elasticity {
        for r in 0..space.mesh.num_regions() {
            let c = problem.coefficients(r);
            if !c.compressibility.is_finite() {
                return Err(Error::Material(
                    "the mixed elasticity form needs a positive Lame lambda (Poisson ratio > 0)".into(),
                ));
            }
        }
    }
    match space.scheme {
        Scheme::TaylorHood => Ok(taylor_hood_elements(space, problem, tau)),
        Scheme::Hdg => Ok(hdg_elements(space, problem, tau)),
    }
}

fn taylor_hood_elements(space: &Space, problem: &Problem, tau: f64) -> ElementMatrices {
    let mesh = &*space.mesh;
    let vel = &space.velocity_nodes.as_ref().expect("TH space").element;
    let pre = &space.pressure_nodes.as_ref().expect("TH space").element;
    let (nu, np) = (vel.len(), pre.len());
    let stride = 2 * nu + np;
    let rule = TriangleRule::new(2 * space.degree + 2);
    let vel_vals: Vec<Vec<f64>> = rule.points.iter().map(|&p| vel.eval(p)).collect();
    let vel_grads: Vec<Vec<[f64; 2]>> = rule.points.iter().map(|&p| vel.eval_grad(p)).collect();
    let pre_vals: Vec<Vec<f64>> = rule.points.iter().map(|&p| pre.eval(p)).collect();
    let elasticity = problem.kind() == PdeKind::Elasticity;
    let force = problem.body_force();

    let nt = mesh.num_triangles();
    let mut matrices = vec![0.0; nt * stride * stride];
    let mut loads = vec![0.0; nt * stride];
    let mut pressure_weights = vec![0.0; nt * stride];
    for t in 0..nt {
        let map = Affine::new(mesh, t);
        let coef = problem.coefficients(mesh.regions[t]);
        let m = &mut matrices[t * stride * stride..(t + 1) * stride * stride];
        let load = &mut loads[t * stride..(t + 1) * stride];
        let pw = &mut pressure_weights[t * stride..(t + 1) * stride];
        let mut grads = vec![[0.0; 2]; nu];
        for (q, w_ref) in rule.weights.iter().enumerate() {
            let w = w_ref * map.det;
            for a in 0..nu {
                grads[a] = map.grad(vel_grads[q][a]);
            }
            let f = force(map.map(rule.points[q]));
            for a in 0..nu {
                let ga = grads[a];
                for b in 0..nu {
                    let gb = grads[b];
                    let dot = ga[0] * gb[0] + ga[1] * gb[1];
                    for c in 0..2 {
                        for d in 0..2 {
                            let delta = if c == d { dot } else { 0.0 };
                            let val = if elasticity { 0.5 * (delta + ga[d] * gb[c]) } else { delta };
                            m[(2 * a + c) * stride + 2 * b + d] += w * coef.diffusion * val;
                        }
                    }
                }
                load[2 * a] += w * f[0] * vel_vals[q][a];
                load[2 * a + 1] += w * f[1] * vel_vals[q][a];
            }
            for j in 0..np {
                let pj = 2 * nu + j;
                let psi = pre_vals[q][j];
                pw[pj] += w * psi;
                for a in 0..nu {
                    for c in 0..2 {
                        let v = -w * psi * grads[a][c];
                        m[pj * stride + 2 * a + c] += v;
                        m[(2 * a + c) * stride + pj] += v;
                    }
                }
                for i in 0..np {
                    m[(2 * nu + i) * stride + pj] -= w * coef.compressibility * pre_vals[q][i] * psi;
                }
            }
        }
    }
    ElementMatrices { stride, matrices, loads, pressure_weights, tau }
}

/// Local dof layout of the hdG element: six BDM moments, three facet
/// multipliers, one cell pressure.
pub(crate) const HDG_STRIDE: usize = 10;
pub(crate) const HDG_MULT: usize = 6;
pub(crate) const HDG_PRESSURE: usize = 9;

/// Flux `(D(φ) n)·t` of a BDM basis function with constant gradient `g`.
fn hdg_flux(g: &[[f64; 2]; 2], n: [f64; 2], t: [f64; 2], elasticity: bool) -> f64 {
    let mut s = 0.0;
    for c in 0..2 {
        for d in 0..2 {
            let grad = if elasticity { 0.5 * (g[c][d] + g[d][c]) } else { g[c][d] };
            s += t[c] * grad * n[d];
        }
    }
    s
}

fn hdg_elements(space: &Space, problem: &Problem, tau: f64) -> ElementMatrices {
    let mesh = &*space.mesh;
    let stride = HDG_STRIDE;
    let elasticity = problem.kind() == PdeKind::Elasticity;
    let force = problem.body_force();
    let rule = TriangleRule::new(6);
    let line = LineRule::new(4);
    let nt = mesh.num_triangles();
    let mut matrices = vec![0.0; nt * stride * stride];
    let mut loads = vec![0.0; nt * stride];
    let mut pressure_weights = vec![0.0; nt * stride];
    for t in 0..nt {
        let el = BdmElement::new(mesh, t);
        let map = Affine::new(mesh, t);
        let area = 0.5 * map.det;
        let coef = problem.coefficients(mesh.regions[t]);
        let h_k = mesh.diameter(t);
        let g = el.grad();
        let m = &mut matrices[t * stride * stride..(t + 1) * stride * stride];
        let load = &mut loads[t * stride..(t + 1) * stride];

        for i in 0..6 {
            for j in 0..6 {
                let mut s = 0.0;
                for c in 0..2 {
                    for d in 0..2 {
                        s += if elasticity {
                            0.25 * (g[i][c][d] + g[i][d][c]) * (g[j][c][d] + g[j][d][c])
                        } else {
                            g[i][c][d] * g[j][c][d]
                        };
                    }
                }
                m[i * stride + j] += area * coef.diffusion * s;
            }
            let div = g[i][0][0] + g[i][1][1];
            m[HDG_PRESSURE * stride + i] -= area * div;
            m[i * stride + HDG_PRESSURE] -= area * div;
        }
        m[HDG_PRESSURE * stride + HDG_PRESSURE] -= area * coef.compressibility;
        pressure_weights[t * stride + HDG_PRESSURE] = area;

        for (q, w_ref) in rule.weights.iter().enumerate() {
            let x = map.map(rule.points[q]);
            let f = force(x);
            let vals = el.eval(x);
            for j in 0..6 {
                load[j] += w_ref * map.det * (f[0] * vals[j][0] + f[1] * vals[j][1]);
            }
        }

        for (e, &f) in mesh.triangle_facets[t].iter().enumerate() {
            let n = mesh.outward_normal(t, f);
            let tan = mesh.facet_tangent(f);
            let len = mesh.facet_length(f);
            let flux: Vec<f64> = (0..6).map(|j| hdg_flux(&g[j], n, tan, elasticity)).collect();
            let mut mean_jump = [0.0; HDG_STRIDE];
            for (s, w_ref) in line.points.iter().zip(&line.weights) {
                let w = w_ref * len;
                let vals = el.eval(facet_point(mesh, f, *s));
                let mut jump = [0.0; HDG_STRIDE];
                for j in 0..6 {
                    jump[j] = vals[j][0] * tan[0] + vals[j][1] * tan[1];
                }
                jump[HDG_MULT + e] = -1.0;
                for i in 0..HDG_STRIDE {
                    mean_jump[i] += w_ref * jump[i];
                }
                for i in 0..6 {
                    for j in 0..HDG_STRIDE {
                        let v = -w * coef.diffusion * flux[i] * jump[j];
                        m[i * stride + j] += v;
                        m[j * stride + i] += v;
                    }
                }
            }
            let penalty = coef.diffusion * tau / h_k * len;
            for i in 0..HDG_STRIDE {
                for j in 0..HDG_STRIDE {
                    m[i * stride + j] += penalty * mean_jump[i] * mean_jump[j];
                }
            }
        }
    }
    ElementMatrices { stride, matrices, loads, pressure_weights, tau }
}

/// Point evaluation of the discrete velocity on one element.
pub(crate) struct VelocityEvaluator<'a> {
    space: &'a Space,
    bdm: Option<BdmElement>,
    affine: Affine,
}

impl<'a> VelocityEvaluator<'a> {
    pub fn new(space: &'a Space, t: usize) -> Self {
        let bdm = (space.scheme == Scheme::Hdg).then(|| BdmElement::new(&space.mesh, t));
        Self { space, bdm, affine: Affine::new(&space.mesh, t) }
    }

    /// Values of the velocity basis at reference point `r`, as `(local dof, vector)` pairs.
    pub fn basis_at(&self, r: [f64; 2]) -> (Point, Vec<(usize, [f64; 2])>) {
        let x = self.affine.map(r);
        let out = match &self.bdm {
            Some(el) => el.eval(x).iter().enumerate().map(|(j, v)| (j, *v)).collect(),
            None => {
                let vel: &LagrangeElement = &self.space.velocity_nodes.as_ref().expect("TH").element;
                let mut out = Vec::with_capacity(2 * vel.len());
                for (a, phi) in vel.eval(r).into_iter().enumerate() {
                    out.push((2 * a, [phi, 0.0]));
                    out.push((2 * a + 1, [0.0, phi]));
                }
                out
            }
        };
        (x, out)
    }

    pub fn det(&self) -> f64 {
        self.affine.det
    }
}

/// Quadrature data for one facet seen from an adjacent element: physical
/// point, weight (including the facet length), and velocity basis values.
pub(crate) struct FacetQuadrature {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub basis: Vec<Vec<(usize, [f64; 2])>>,
}

pub(crate) fn facet_quadrature(space: &Space, t: usize, f: usize, degree: usize) -> FacetQuadrature {
    let mesh = &*space.mesh;
    let e = mesh.triangle_facets[t].iter().position(|&g| g == f).expect("facet of triangle");
    let eval = VelocityEvaluator::new(space, t);
    let rule = LineRule::new(degree);
    let len = mesh.facet_length(f);
    let mut q = FacetQuadrature { points: Vec::new(), weights: Vec::new(), basis: Vec::new() };
    for (r, w) in rule.points.iter().zip(&rule.weights) {
        let (x, basis) = eval.basis_at(reference_edge_point(e, *r));
        q.points.push(x);
        q.weights.push(w * len);
        q.basis.push(basis);
    }
    q
}
