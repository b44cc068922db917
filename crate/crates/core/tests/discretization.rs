mod common;

use std::sync::Arc;

use common::orders;
use ddlab::discretization::{build_space, Assembler, Scheme};
use ddlab::mesh::build_structured_mesh;
use ddlab::problems::{canonical_test_case, TEST_CASES};
use ddlab::solvers::factorize;
use ddlab::solvers::sparse::norm2;

#[test]
fn taylor_hood_velocity_converges_at_third_order() {
    let o = orders(Scheme::TaylorHood, 2, &[4, 8, 16, 32]);
    eprintln!("TH2 orders {o:?}");
    assert!(o.iter().all(|&r| r >= 2.7), "{o:?}");
}

#[test]
fn hdg_velocity_converges_at_second_order() {
    let o = orders(Scheme::Hdg, 1, &[4, 8, 16, 32]);
    eprintln!("HDG1 orders {o:?}");
    assert!(o.iter().all(|&r| r >= 1.7), "{o:?}");
}

#[test]
fn direct_solves_of_every_case_have_small_residuals() {
    for name in TEST_CASES {
        let case = canonical_test_case(name).unwrap();
        for (scheme, degree) in [(Scheme::TaylorHood, 2), (Scheme::TaylorHood, 3), (Scheme::Hdg, 1)] {
            let mesh = Arc::new(build_structured_mesh(&case.shape, 10).unwrap());
            let space = Arc::new(build_space(mesh, scheme, degree).unwrap());
            let asm = Assembler::new(space, Arc::new(case.problem.clone()), 10.0).unwrap();
            let sys = asm.global_system().unwrap();
            let x = factorize(&sys.matrix).unwrap().solve_refined(&sys.matrix, &sys.rhs, 3);
            let ax = sys.matrix.mul_vec(&x);
            let r: Vec<f64> = ax.iter().zip(&sys.rhs).map(|(p, q)| p - q).collect();
            let rel = norm2(&r) / norm2(&sys.rhs);
            let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let backward = inf(&r) / (sys.matrix.norm_inf() * inf(&x) + inf(&sys.rhs));
            eprintln!("{name} {scheme}{degree} dim {} residual {rel:.2e} backward {backward:.2e}", sys.dim());
            assert!(backward < 1e-14, "{name} {scheme}{degree}: backward error {backward}");
            // The steel/rubber beam is far beyond the condition range where a
            // 1e-10 relative residual is attainable in double precision.
            let bound = if name == "hetero_beam" { 1e-7 } else { 1e-10 };
            assert!(rel < bound, "{name} {scheme}{degree}: {rel}");
        }
    }
}
