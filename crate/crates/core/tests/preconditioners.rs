use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddlab::coarse::{build_coarse_space, solve_all_geneo, CoarseSpace, Selection, TwoLevelPreconditioner};
use ddlab::decomposition::PartitionMethod;
use ddlab::discretization::Scheme;
use ddlab::harness::{run_experiment, Dumps, ExperimentSpec, ProblemSetup};
use ddlab::par::Execution;
use ddlab::schwarz::{build_one_level, OneLevelPreconditioner};
use ddlab::solvers::sparse::norm2;
use ddlab::solvers::{factorize, LinearOperator};

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn apply(op: &dyn LinearOperator, r: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; r.len()];
    op.apply(r, &mut z);
    z
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b)
}

fn one_level(s: &ProblemSetup, n: usize, name: &str) -> (ddlab::decomposition::Decomposition, OneLevelPreconditioner) {
    let d = s.decompose(n, PartitionMethod::Graph, 1).unwrap();
    let p = build_one_level(name.parse().unwrap(), &d, &s.assembler, &s.system, Execution::Parallel).unwrap();
    (d, p)
}

fn coarse(s: &ProblemSetup, d: &ddlab::decomposition::Decomposition, p: &OneLevelPreconditioner, m: usize) -> CoarseSpace {
    let modes = solve_all_geneo(&s.assembler, &s.system, d, p, m, None, Execution::Parallel).unwrap();
    build_coarse_space(&s.system.matrix, d, &modes, Selection::FixedCount(m), Execution::Parallel).unwrap()
}

#[test]
fn smras_two_level_is_symmetric_for_symmetric_a() {
    let s = ProblemSetup::new("l_shape_elasticity", Scheme::TaylorHood, 2, 6, 10.0).unwrap();
    let a = &s.system.matrix;
    assert!(a.asymmetry() < 1e-12 * a.max_abs(), "test needs a symmetric A");
    let (d, p) = one_level(&s, 4, "smras:ndtns");
    let cs = coarse(&s, &d, &p, 3);
    let two = TwoLevelPreconditioner::new(&p, &cs, a).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let u = random(&mut rng, a.nrows());
        let v = random(&mut rng, a.nrows());
        let (mu, mv) = (apply(&two, &u), apply(&two, &v));
        let (l, r) = (dot(&mu, &v), dot(&u, &mv));
        assert!((l - r).abs() <= 1e-10 * l.abs().max(r.abs()), "{l} vs {r}");
    }
}

#[test]
fn preconditioners_are_linear() {
    let s = ProblemSetup::new("cavity", Scheme::Hdg, 1, 6, 10.0).unwrap();
    let n = s.system.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for name in ["oras", "soras", "mras:tvnf", "smras:nvtf"] {
        let (_, p) = one_level(&s, 4, name);
        let (x, y) = (random(&mut rng, n), random(&mut rng, n));
        let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let expect: Vec<f64> = apply(&p, &x).iter().zip(apply(&p, &y)).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        assert!(rel(&apply(&p, &combo), &expect) < 1e-12, "{name}");
    }
}

#[test]
fn single_subdomain_is_an_exact_solve() {
    let s = ProblemSetup::new("t_shape", Scheme::TaylorHood, 2, 4, 10.0).unwrap();
    let a = &s.system.matrix;
    let r = random(&mut ChaCha8Rng::seed_from_u64(3), a.nrows());
    let exact = factorize(a).unwrap().solve_refined(a, &r, 2);
    for name in ["oras", "mras:tvnf", "smras:nvtf"] {
        let (_, p) = one_level(&s, 1, name);
        assert!(rel(&apply(&p, &r), &exact) < 1e-9, "{name}");
    }
}

#[test]
fn restricted_sum_differs_from_plain_additive_schwarz() {
    let s = ProblemSetup::new("l_shape_elasticity", Scheme::TaylorHood, 2, 6, 10.0).unwrap();
    let (_, p) = one_level(&s, 4, "mras:tdnns");
    let r = random(&mut ChaCha8Rng::seed_from_u64(4), s.system.dim());
    let mut additive = vec![0.0; r.len()];
    p.apply_additive(&r, &mut additive);
    assert!(rel(&apply(&p, &r), &additive) > 1e-3);
}

#[test]
fn coarse_columns_span_the_weighted_eigenvectors() {
    let s = ProblemSetup::new("l_shape_elasticity", Scheme::TaylorHood, 2, 8, 10.0).unwrap();
    let (d, p) = one_level(&s, 4, "mras:ndtns");
    let modes = solve_all_geneo(&s.assembler, &s.system, &d, &p, 3, None, Execution::Parallel).unwrap();
    let cs = build_coarse_space(&s.system.matrix, &d, &modes, Selection::FixedCount(3), Execution::Parallel).unwrap();
    assert_eq!(cs.size() + cs.dropped.len(), 12);
    for c in &cs.columns {
        let j = c.subdomain;
        let dofs = &d.dof_sets[j];
        // Support inside the subdomain, on dofs it owns.
        for &g in &c.rows {
            let k = dofs.binary_search(&g).expect("column leaves its subdomain");
            assert_eq!(d.pu_weights[j][k], 1.0);
        }
        // The column lies in span{D_j V_jk}.
        let local: Vec<f64> = dofs.iter().map(|&g| c.rows.iter().position(|&r| r == g).map_or(0.0, |i| c.vals[i])).collect();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in &modes[j].vectors {
            let mut w: Vec<f64> = v.iter().zip(&d.pu_weights[j]).map(|(x, w)| x * w).collect();
            for q in &basis {
                let t = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= t * y);
            }
            let nw = norm2(&w);
            if nw > 1e-10 {
                basis.push(w.into_iter().map(|x| x / nw).collect());
            }
        }
        let mut rest = local.clone();
        for q in &basis {
            let t = dot(&rest, q);
            rest.iter_mut().zip(q).for_each(|(x, y)| *x -= t * y);
        }
        assert!(norm2(&rest) < 1e-10 * norm2(&local), "column ({j}, {}) leaves the span", c.index);
    }
}

#[test]
fn two_level_is_exact_on_the_coarse_range() {
    let s = ProblemSetup::new("cavity", Scheme::TaylorHood, 2, 8, 10.0).unwrap();
    let a = &s.system.matrix;
    let (d, p) = one_level(&s, 4, "mras:nvtf");
    let cs = coarse(&s, &d, &p, 4);
    let two = TwoLevelPreconditioner::new(&p, &cs, a).unwrap();
    let y = random(&mut ChaCha8Rng::seed_from_u64(5), cs.size());
    let r = a.mul_vec(&cs.extend(&y));
    let z = apply(&two, &r);
    assert!(rel(&a.mul_vec(&z), &r) < 1e-8);
}

#[test]
fn sequential_and_parallel_applies_agree_bitwise() {
    let s = ProblemSetup::new("l_shape_elasticity", Scheme::Hdg, 1, 6, 10.0).unwrap();
    let (_, mut p) = one_level(&s, 4, "smras:tdnns");
    let r = random(&mut ChaCha8Rng::seed_from_u64(6), s.system.dim());
    let par = apply(&p, &r);
    p.set_execution(Execution::Sequential);
    assert_eq!(apply(&p, &r), par);
}

#[test]
fn identical_runs_give_identical_rows() {
    let mut spec = ExperimentSpec::new("cavity", Scheme::TaylorHood, 2);
    spec.schedule = vec![(6, 4)];
    spec.preconditioners = vec!["oras".parse().unwrap(), "smras:tvnf".parse().unwrap()];
    spec.coarse = vec![Selection::FixedCount(0), Selection::FixedCount(2)];
    spec.seed = 11;
    let strip = |rows: Vec<ddlab::harness::ReportRow>| {
        rows.into_iter()
            .map(|mut r| {
                r.setup_time = 0.0;
                r.solve_time = 0.0;
                r
            })
            .collect::<Vec<_>>()
    };
    let first = strip(run_experiment(&spec, None, Dumps::default()).unwrap());
    let second = strip(run_experiment(&spec, None, Dumps::default()).unwrap());
    assert_eq!(first.len(), 4);
    assert_eq!(first, second);
}

#[test]
fn singular_strip_subdomains_are_bordered_and_reported_as_zero_modes() {
    // Straight vertical cuts with NDTNS leave the vertical translation of a
    // free strip unconstrained.
    let s = ProblemSetup::new("hetero_beam", Scheme::TaylorHood, 2, 10, 10.0).unwrap();
    let (d, p) = one_level(&s, 8, "smras:ndtns");
    let singular: Vec<usize> = p.locals.iter().filter(|l| !l.local.kernel.is_empty()).map(|l| l.subdomain).collect();
    assert!(!singular.is_empty());
    let modes = solve_all_geneo(&s.assembler, &s.system, &d, &p, 4, None, Execution::Parallel).unwrap();
    for &j in &singular {
        let l = &p.locals[j];
        let dim = l.system().dim();
        for w in &l.local.kernel {
            let mut padded = w.clone();
            padded.resize(dim, 0.0);
            let bw = l.matrix().mul_vec(&padded);
            assert!(norm2(&bw[..w.len()]) < 1e-9 * l.matrix().norm_inf());
        }
        assert!(modes[j].near_zero_count(1e-8) >= l.local.kernel.len());
    }
}
