//! Gauss rules on the unit interval and on the reference triangle.

/// Gauss-Legendre rule with `n` points on `[0, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess for the i-th root on [-1, 1], refined by Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut derivative = 1.0;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            derivative = dp;
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        if dp != 0.0 {
            derivative = dp;
        }
        let w = 2.0 / ((1.0 - x * x) * derivative * derivative);
        points[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (points, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Quadrature rule on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    /// Weights sum to the reference area `1/2`.
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed Gauss product rule exact for polynomials of total degree `degree`.
    pub fn new(degree: usize) -> Self {
        let n = (degree + 2).div_ceil(2).max(1);
        let (gp, gw) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (u, wu) in gp.iter().zip(&gw) {
            for (v, wv) in gp.iter().zip(&gw) {
                points.push([*u, (1.0 - u) * v]);
                weights.push(wu * wv * (1.0 - u));
            }
        }
        Self { points, weights }
    }
}

/// Quadrature rule on `[0, 1]` exact for degree `degree`.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    pub fn new(degree: usize) -> Self {
        let (points, weights) = gauss_legendre((degree + 2) / 2);
        Self { points, weights }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_rule_integrates_monomials() {
        for n in 1..8 {
            let (p, w) = gauss_legendre(n);
            for d in 0..2 * n {
                let q: f64 = p.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
                assert!((q - 1.0 / (d + 1) as f64).abs() < 1e-14, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn triangle_rule_integrates_monomials() {
        fn factorial(n: u32) -> f64 {
            (1..=n).map(f64::from).product()
        }
        for degree in 0..10 {
            let rule = TriangleRule::new(degree);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!((q - exact).abs() < 1e-14, "degree {degree}, x^{a} y^{b}");
                }
            }
        }
    }
}
