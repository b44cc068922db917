//! Manufactured Stokes solution on the unit square shared by the order tests.

use std::sync::Arc;

use ddlab::discretization::{build_space, Assembler, Scheme};
use ddlab::mesh::{build_structured_mesh, BoundaryRule, DomainKind, DomainShape, Point};
use ddlab::problems::{BoundaryCondition, BoundaryConditionSpec, Problem, StokesProblem};
use ddlab::solvers::factorize;

fn g(s: f64) -> [f64; 4] {
    // s^2 (1-s)^2 and its first three derivatives
    [s * s * (1.0 - s) * (1.0 - s), 2.0 * s - 6.0 * s * s + 4.0 * s * s * s, 2.0 - 12.0 * s + 12.0 * s * s, -12.0 + 24.0 * s]
}

fn exact_velocity(p: Point) -> [f64; 2] {
    let (gx, gy) = (g(p[0]), g(p[1]));
    [gx[0] * gy[1], -gx[1] * gy[0]]
}

fn manufactured_force(p: Point) -> [f64; 2] {
    let (gx, gy) = (g(p[0]), g(p[1]));
    let lap1 = gx[2] * gy[1] + gx[0] * gy[3];
    let lap2 = -(gx[3] * gy[0] + gx[1] * gy[2]);
    [-lap1 + 3.0 * p[0] * p[0], -lap2 + 3.0 * p[1] * p[1]]
}

pub fn manufactured_error(scheme: Scheme, degree: usize, n: usize) -> f64 {
    let shape = DomainShape::new(DomainKind::UnitSquare, BoundaryRule::Sides);
    let mesh = Arc::new(build_structured_mesh(&shape, n).unwrap());
    let zero: ddlab::problems::VectorField = Arc::new(|_| [0.0, 0.0]);
    let mut bc = BoundaryConditionSpec::new();
    for side in ["left", "right", "bottom", "top"] {
        bc = bc.with(side, BoundaryCondition::Dirichlet(zero.clone()));
    }
    let problem = Problem::Stokes(StokesProblem { viscosity: 1.0, body_force: Arc::new(manufactured_force), bc });
    let space = Arc::new(build_space(mesh, scheme, degree).unwrap());
    let asm = Assembler::new(space.clone(), Arc::new(problem), 10.0).unwrap();
    let sys = asm.global_system().unwrap();
    let mut x = factorize(&sys.matrix).unwrap().solve(&sys.rhs);
    sys.frame.to_physical(&mut x);
    ddlab::discretization::velocity_l2_error(&space, &x, &exact_velocity)
}

pub fn orders(scheme: Scheme, degree: usize, ns: &[usize]) -> Vec<f64> {
    let errs: Vec<f64> = ns.iter().map(|&n| manufactured_error(scheme, degree, n)).collect();
    eprintln!("{scheme}{degree} errors {errs:?}");
    errs.windows(2).zip(ns.windows(2)).map(|(e, n)| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln()).collect()
}
