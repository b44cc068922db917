//! Nodal Lagrange elements on the reference triangle.

use nalgebra::DMatrix;

/// Continuous `P_k` element on `(0,0), (1,0), (0,1)`.
///
/// Nodes are ordered vertices first, then `k - 1` nodes per local edge
/// (edge `e` runs from local vertex `e+1` to `e+2`, modulo 3), then interior nodes.
#[derive(Clone, Debug)]
pub struct LagrangeElement {
    pub degree: usize,
    pub nodes: Vec<[f64; 2]>,
    exponents: Vec<(i32, i32)>,
    /// Row `i` holds the monomial coefficients of basis function `i`.
    coeffs: DMatrix<f64>,
}

pub const REFERENCE_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

impl LagrangeElement {
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1, "Lagrange degree must be positive");
        let k = degree;
        let mut nodes: Vec<[f64; 2]> = REFERENCE_VERTICES.to_vec();
        for e in 0..3 {
            let a = REFERENCE_VERTICES[(e + 1) % 3];
            let b = REFERENCE_VERTICES[(e + 2) % 3];
            for j in 1..k {
                let s = j as f64 / k as f64;
                nodes.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
            }
        }
        for j in 1..k {
            for i in 1..k - j {
                nodes.push([i as f64 / k as f64, j as f64 / k as f64]);
            }
        }
        let exponents: Vec<(i32, i32)> = (0..=k as i32)
            .flat_map(|total| (0..=total).map(move |q| (total - q, q)))
            .collect();
        let n = nodes.len();
        assert_eq!(n, exponents.len());
        let vandermonde = DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = exponents[j];
            nodes[i][0].powi(a) * nodes[i][1].powi(b)
        });
        // V c_i = e_i for every basis function, so the coefficient rows are those of V^{-T}.
        let inverse = vandermonde.try_inverse().expect("Lagrange nodes are unisolvent");
        Self { degree, nodes, exponents, coeffs: inverse.transpose() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn interior_count(&self) -> usize {
        self.len() - 3 - 3 * (self.degree - 1)
    }

    pub fn eval(&self, p: [f64; 2]) -> Vec<f64> {
        let mono: Vec<f64> = self.exponents.iter().map(|&(a, b)| p[0].powi(a) * p[1].powi(b)).collect();
        (0..self.len())
            .map(|i| (0..mono.len()).map(|j| self.coeffs[(i, j)] * mono[j]).sum())
            .collect()
    }

    /// Gradients with respect to the reference coordinates.
    pub fn eval_grad(&self, p: [f64; 2]) -> Vec<[f64; 2]> {
        let dmono: Vec<[f64; 2]> = self
            .exponents
            .iter()
            .map(|&(a, b)| {
                let dx = if a > 0 { a as f64 * p[0].powi(a - 1) * p[1].powi(b) } else { 0.0 };
                let dy = if b > 0 { b as f64 * p[0].powi(a) * p[1].powi(b - 1) } else { 0.0 };
                [dx, dy]
            })
            .collect();
        (0..self.len())
            .map(|i| {
                let mut g = [0.0; 2];
                for (j, d) in dmono.iter().enumerate() {
                    g[0] += self.coeffs[(i, j)] * d[0];
                    g[1] += self.coeffs[(i, j)] * d[1];
                }
                g
            })
            .collect()
    }

    /// Local node indices lying on the closed local edge `e`, endpoints first.
    pub fn edge_nodes(&self, e: usize) -> Vec<usize> {
        let mut out = vec![(e + 1) % 3, (e + 2) % 3];
        out.extend((0..self.degree - 1).map(|j| 3 + e * (self.degree - 1) + j));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_property_and_partition_of_unity() {
        for k in 1..=3 {
            let el = LagrangeElement::new(k);
            assert_eq!(el.len(), (k + 1) * (k + 2) / 2);
            for (i, &node) in el.nodes.iter().enumerate() {
                let vals = el.eval(node);
                for (j, v) in vals.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-12);
                }
            }
            let p = [0.21, 0.37];
            let sum: f64 = el.eval(p).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let gsum = el.eval_grad(p).iter().fold([0.0, 0.0], |acc, g| [acc[0] + g[0], acc[1] + g[1]]);
            assert!(gsum[0].abs() < 1e-11 && gsum[1].abs() < 1e-11);
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let el = LagrangeElement::new(3);
        let p = [0.3, 0.2];
        let h = 1e-6;
        let g = el.eval_grad(p);
        let fx = el.eval([p[0] + h, p[1]]);
        let bx = el.eval([p[0] - h, p[1]]);
        let fy = el.eval([p[0], p[1] + h]);
        let by = el.eval([p[0], p[1] - h]);
        for i in 0..el.len() {
            assert!((g[i][0] - (fx[i] - bx[i]) / (2.0 * h)).abs() < 1e-7);
            assert!((g[i][1] - (fy[i] - by[i]) / (2.0 * h)).abs() < 1e-7);
        }
    }
}
