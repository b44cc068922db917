//! Evaluation of discrete fields.

use super::element::VelocityEvaluator;
use super::quadrature::TriangleRule;
use super::space::Space;
use crate::mesh::Point;

/// `‖u - u_h‖_{L²(Ω)}` for the velocity part of a physical-frame solution vector.
pub fn velocity_l2_error(space: &Space, solution: &[f64], exact: &dyn Fn(Point) -> [f64; 2]) -> f64 {
    let rule = TriangleRule::new(2 * space.degree + 6);
    let mut sum = 0.0;
    for t in 0..space.mesh.num_triangles() {
        let eval = VelocityEvaluator::new(space, t);
        let dofs = space.element_dofs(t);
        for (r, w) in rule.points.iter().zip(&rule.weights) {
            let (x, basis) = eval.basis_at(*r);
            let mut uh = [0.0; 2];
            for (a, v) in basis {
                uh[0] += solution[dofs[a]] * v[0];
                uh[1] += solution[dofs[a]] * v[1];
            }
            let u = exact(x);
            sum += w * eval.det() * ((u[0] - uh[0]).powi(2) + (u[1] - uh[1]).powi(2));
        }
    }
    sum.sqrt()
}
