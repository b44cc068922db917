//! Sequential against data-parallel execution for the per-subdomain work:
//! building and factorizing the local operators, the GenEO solves, and one
//! preconditioner application. Without the `parallel` feature both columns
//! run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddlab::coarse::{build_coarse_space, solve_all_geneo, Selection, TwoLevelPreconditioner};
use ddlab::decomposition::PartitionMethod;
use ddlab::discretization::Scheme;
use ddlab::harness::ProblemSetup;
use ddlab::par::Execution;
use ddlab::schwarz::build_one_level;
use ddlab::solvers::LinearOperator;

const MODES: [(Execution, &str); 2] = [(Execution::Sequential, "sequential"), (Execution::Parallel, "parallel")];

fn schwarz(c: &mut Criterion) {
    let setup = ProblemSetup::new("l_shape_elasticity", Scheme::TaylorHood, 2, 12, 10.0).unwrap();
    let decomposition = setup.decompose(8, PartitionMethod::Graph, 1).unwrap();
    let spec = "smras:ndtns".parse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r: Vec<f64> = (0..setup.system.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut group = c.benchmark_group("schwarz");
    group.sample_size(10);
    for (execution, name) in MODES {
        group.bench_function(BenchmarkId::new("build_one_level", name), |b| {
            b.iter(|| build_one_level(spec, &decomposition, &setup.assembler, &setup.system, execution).unwrap())
        });
        let one = build_one_level(spec, &decomposition, &setup.assembler, &setup.system, execution).unwrap();
        group.bench_function(BenchmarkId::new("geneo", name), |b| {
            b.iter(|| solve_all_geneo(&setup.assembler, &setup.system, &decomposition, &one, 5, None, execution).unwrap())
        });
        let modes = solve_all_geneo(&setup.assembler, &setup.system, &decomposition, &one, 5, None, execution).unwrap();
        let coarse = build_coarse_space(&setup.system.matrix, &decomposition, &modes, Selection::FixedCount(5), execution).unwrap();
        let two = TwoLevelPreconditioner::new(&one, &coarse, &setup.system.matrix).unwrap();
        let mut z = vec![0.0; r.len()];
        group.bench_function(BenchmarkId::new("apply_one_level", name), |b| b.iter(|| one.apply(&r, &mut z)));
        group.bench_function(BenchmarkId::new("apply_two_level", name), |b| b.iter(|| two.apply(&r, &mut z)));
    }
    group.finish();
}

criterion_group!(benches, schwarz);
criterion_main!(benches);
