//! Weak-scaling experiment runner.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coarse::{build_coarse_space, solve_all_geneo, write_spectrum_csv, CoarseSpace, Selection, TwoLevelPreconditioner};
use crate::decomposition::{Decomposition, PartitionMethod};
use crate::discretization::{build_space, Assembler, LinearSystem, Scheme, Space};
use crate::error::{Error, Result};
use crate::mesh::{build_structured_mesh, Mesh};
use crate::par::Execution;
use crate::problems::{canonical_test_case, InitialGuess, TestCase};
use crate::schwarz::{build_one_level, PreconditionerSpec};
use crate::solvers::gmres::{gmres, ErrorMonitor, KrylovTrace, LinearOperator};
use crate::solvers::lu::factorize;
use crate::solvers::sparse::norm2;

use super::report::{Outcome, ReportRow};

/// Penalty of the hdG facet term used by every run.
pub const DEFAULT_TAU: f64 = 10.0;

/// Mesh, space, assembler and the global system of one test case.
#[derive(Debug)]
pub struct ProblemSetup {
    pub case: TestCase,
    pub mesh: Arc<Mesh>,
    pub space: Arc<Space>,
    pub assembler: Assembler,
    pub system: LinearSystem,
    pub resolution: usize,
}

impl ProblemSetup {
    pub fn new(case: &str, scheme: Scheme, degree: usize, resolution: usize, tau: f64) -> Result<Self> {
        let case = canonical_test_case(case)?;
        let mesh = Arc::new(build_structured_mesh(&case.shape, resolution)?);
        let space = Arc::new(build_space(mesh.clone(), scheme, degree)?);
        let assembler = Assembler::new(space.clone(), Arc::new(case.problem.clone()), tau)?;
        let system = assembler.global_system()?;
        Ok(Self { case, mesh, space, assembler, system, resolution })
    }

    /// Total unknowns, augmentation included.
    pub fn dofs(&self) -> usize {
        self.system.dim()
    }

    pub fn decompose(&self, n: usize, method: PartitionMethod, overlap: usize) -> Result<Decomposition> {
        Decomposition::new(&self.space, self.dofs(), n, method, overlap)
    }

    /// Direct solution with two steps of iterative refinement.
    pub fn reference_solution(&self) -> Result<Vec<f64>> {
        let f = factorize(&self.system.matrix)?;
        Ok(f.solve_refined(&self.system.matrix, &self.system.rhs, 2))
    }

    pub fn initial_guess(&self, seed: u64) -> Vec<f64> {
        initial_guess(self.case.initial_guess, self.dofs(), seed)
    }
}

pub fn initial_guess(kind: InitialGuess, n: usize, seed: u64) -> Vec<f64> {
    match kind {
        InitialGuess::Zero => vec![0.0; n],
        InitialGuess::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolutionCheck {
    /// `‖U − x‖ / ‖U − x₀‖`
    pub relative_error: f64,
    /// `‖A x − F‖ / ‖F‖`
    pub residual: f64,
}

pub fn verify_solution(system: &LinearSystem, candidate: &[f64], reference: &[f64], x0: &[f64]) -> SolutionCheck {
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let initial = diff(reference, x0);
    let err = diff(reference, candidate);
    let relative_error = if initial > 0.0 { err / initial } else { err };
    let ax = system.matrix.mul_vec(candidate);
    let r: Vec<f64> = ax.iter().zip(&system.rhs).map(|(p, q)| p - q).collect();
    let nf = norm2(&system.rhs);
    let residual = if nf > 0.0 { norm2(&r) / nf } else { norm2(&r) };
    SolutionCheck { relative_error, residual }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub case: String,
    pub scheme: Scheme,
    pub degree: usize,
    /// `(resolution, N)` pairs.
    pub schedule: Vec<(usize, usize)>,
    pub overlap: usize,
    pub partition: PartitionMethod,
    pub preconditioners: Vec<PreconditionerSpec>,
    /// `FixedCount(0)` is the one-level method.
    pub coarse: Vec<Selection>,
    /// Eigenpairs per subdomain; defaults to the largest fixed count (at least 10 for thresholds).
    pub eigen_request: Option<usize>,
    pub seed: u64,
    pub maxit: usize,
    pub tol: f64,
    pub tau: f64,
    pub execution: Execution,
}

impl ExperimentSpec {
    pub fn new(case: &str, scheme: Scheme, degree: usize) -> Self {
        Self {
            case: case.to_string(),
            scheme,
            degree,
            schedule: Vec::new(),
            overlap: 1,
            partition: PartitionMethod::Graph,
            preconditioners: Vec::new(),
            coarse: vec![Selection::FixedCount(0)],
            eigen_request: None,
            seed: 0,
            maxit: 1000,
            tol: 1e-6,
            tau: DEFAULT_TAU,
            execution: Execution::Parallel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Config("empty schedule".into()));
        }
        if self.preconditioners.is_empty() {
            return Err(Error::Config("no preconditioner requested".into()));
        }
        if self.coarse.is_empty() {
            return Err(Error::Config("no coarse size requested".into()));
        }
        if self.schedule.iter().any(|&(r, n)| r == 0 || n == 0) {
            return Err(Error::Config("schedule entries need positive resolution and N".into()));
        }
        if !(self.tol > 0.0) || self.maxit == 0 {
            return Err(Error::Config("tolerance and maxit must be positive".into()));
        }
        Ok(())
    }

    fn request(&self) -> usize {
        self.eigen_request.unwrap_or_else(|| {
            self.coarse
                .iter()
                .map(|s| match s {
                    Selection::FixedCount(m) => *m,
                    Selection::Threshold(_) => 10,
                })
                .max()
                .unwrap_or(0)
        })
    }

    /// Flat `key=value` lines accepted by the config parser.
    pub fn echo(&self) -> Vec<(String, String)> {
        let list = |v: Vec<String>| v.join(",");
        vec![
            ("case".into(), self.case.clone()),
            ("scheme".into(), self.scheme.to_string()),
            ("degree".into(), self.degree.to_string()),
            ("schedule".into(), list(self.schedule.iter().map(|(r, n)| format!("{r}:{n}")).collect())),
            ("overlap".into(), self.overlap.to_string()),
            ("partition".into(), self.partition.to_string()),
            ("precond".into(), list(self.preconditioners.iter().map(|p| p.label()).collect())),
            ("coarse".into(), list(self.coarse.iter().map(|c| c.label()).collect())),
            ("eigen_request".into(), self.request().to_string()),
            ("seed".into(), self.seed.to_string()),
            ("maxit".into(), self.maxit.to_string()),
            ("tol".into(), self.tol.to_string()),
            ("tau".into(), self.tau.to_string()),
            (
                "execution".into(),
                match self.execution {
                    Execution::Sequential => "sequential".into(),
                    Execution::Parallel => "parallel".into(),
                },
            ),
        ]
    }

    pub fn echo_string(&self) -> String {
        self.echo().into_iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
    }
}

/// Optional artifacts written next to the report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Dumps {
    pub traces: bool,
    pub spectrum: bool,
    pub partition: bool,
    pub system: bool,
    pub mesh: bool,
}

/// Solves one row: preconditioned GMRES with the error monitor.
pub fn solve_row(
    setup: &ProblemSetup,
    preconditioner: &dyn LinearOperator,
    reference: &[f64],
    x0: &[f64],
    tol: f64,
    maxit: usize,
) -> (Vec<f64>, KrylovTrace, SolutionCheck) {
    let mut monitor = ErrorMonitor::new(reference.to_vec(), tol);
    let (x, trace) = gmres(&setup.system.matrix, preconditioner, &setup.system.rhs, x0, &mut monitor, maxit);
    let check = verify_solution(&setup.system, &x, reference, x0);
    (x, trace, check)
}

fn trace_csv(trace: &KrylovTrace) -> String {
    let mut s = String::from("iteration,residual,error\n");
    for r in &trace.records {
        s.push_str(&format!("{},{:e},{:e}\n", r.iteration, r.residual, r.error.unwrap_or(f64::NAN)));
    }
    s
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

struct Cell<'a> {
    spec: &'a ExperimentSpec,
    setup: &'a ProblemSetup,
    decomposition: &'a Decomposition,
    reference: &'a [f64],
    x0: &'a [f64],
    out: Option<&'a Path>,
    dumps: Dumps,
    rows: Vec<ReportRow>,
}

impl Cell<'_> {
    fn row(&self, method: &str, coarse: &str, coarse_dim: usize) -> ReportRow {
        ReportRow {
            dof: self.setup.dofs(),
            n: self.decomposition.n_subdomains,
            method: method.to_string(),
            coarse: coarse.to_string(),
            coarse_dim,
            outcome: Outcome::Failed(String::new()),
            relative_error: f64::NAN,
            residual: f64::NAN,
            setup_time: 0.0,
            solve_time: 0.0,
            seed: self.spec.seed,
            config: self.spec.echo_string(),
        }
    }

    fn fail(&mut self, method: &str, coarse: &str, e: &Error) {
        let mut row = self.row(method, coarse, 0);
        row.outcome = Outcome::Failed(e.to_string());
        self.rows.push(row);
    }

    fn run(&mut self, method: &str, coarse: &str, coarse_dim: usize, setup_time: f64, op: &dyn LinearOperator) -> Result<()> {
        let start = Instant::now();
        let (_, trace, check) = solve_row(self.setup, op, self.reference, self.x0, self.spec.tol, self.spec.maxit);
        let mut row = self.row(method, coarse, coarse_dim);
        row.outcome = if trace.converged { Outcome::Converged(trace.iterations) } else { Outcome::MaxIt(self.spec.maxit) };
        row.relative_error = check.relative_error;
        row.residual = check.residual;
        row.setup_time = setup_time;
        row.solve_time = start.elapsed().as_secs_f64();
        if let (Some(dir), true) = (self.out, self.dumps.traces) {
            let name = format!("trace_{}_{}_{}_{}.csv", self.setup.dofs(), row.n, file_safe(method), file_safe(coarse));
            fs::write(dir.join(name), trace_csv(&trace))?;
        }
        self.rows.push(row);
        Ok(())
    }

    fn run_preconditioner(&mut self, pspec: PreconditionerSpec) -> Result<()> {
        let method = pspec.label();
        let t0 = Instant::now();
        let one = match build_one_level(pspec, self.decomposition, &self.setup.assembler, &self.setup.system, self.spec.execution) {
            Ok(p) => p,
            Err(e) => {
                for c in &self.spec.coarse {
                    self.fail(&method, &c.label(), &e);
                }
                return Ok(());
            }
        };
        let one_time = t0.elapsed().as_secs_f64();
        let two_level: Vec<Selection> = self.spec.coarse.iter().copied().filter(|c| *c != Selection::FixedCount(0)).collect();
        for c in &self.spec.coarse {
            if *c == Selection::FixedCount(0) {
                self.run(&method, "1L", 0, one_time, &one)?;
            }
        }
        if two_level.is_empty() {
            return Ok(());
        }
        let t1 = Instant::now();
        let modes = match solve_all_geneo(
            &self.setup.assembler,
            &self.setup.system,
            self.decomposition,
            &one,
            self.spec.request(),
            None,
            self.spec.execution,
        ) {
            Ok(m) => m,
            Err(e) => {
                for c in &two_level {
                    self.fail(&method, &c.label(), &e);
                }
                return Ok(());
            }
        };
        let eigen_time = t1.elapsed().as_secs_f64();
        if let (Some(dir), true) = (self.out, self.dumps.spectrum) {
            for m in &modes {
                let name = format!("spectrum_{}_{}_{}_{}.csv", self.setup.dofs(), self.decomposition.n_subdomains, file_safe(&method), m.subdomain);
                write_spectrum_csv(m, fs::File::create(dir.join(name))?)?;
            }
        }
        for c in two_level {
            let t2 = Instant::now();
            let built: Result<CoarseSpace> =
                build_coarse_space(&self.setup.system.matrix, self.decomposition, &modes, c, self.spec.execution);
            match built.and_then(|cs| {
                let setup_time = one_time + eigen_time + t2.elapsed().as_secs_f64();
                let op = TwoLevelPreconditioner::new(&one, &cs, &self.setup.system.matrix)?;
                self.run(&method, &c.label(), cs.size(), setup_time, &op)
            }) {
                Ok(()) => {}
                Err(e) => self.fail(&method, &c.label(), &e),
            }
        }
        Ok(())
    }
}

/// Runs every schedule entry with every preconditioner and coarse size.
/// Build failures become failed rows; I/O errors abort.
pub fn run_experiment(spec: &ExperimentSpec, out: Option<&Path>, dumps: Dumps) -> Result<Vec<ReportRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &(resolution, n) in &spec.schedule {
        let setup = ProblemSetup::new(&spec.case, spec.scheme, spec.degree, resolution, spec.tau)?;
        for p in &spec.preconditioners {
            p.validate(setup.assembler.problem.kind())?;
        }
        let decomposition = setup.decompose(n, spec.partition, spec.overlap)?;
        let reference = setup.reference_solution()?;
        let x0 = setup.initial_guess(spec.seed);
        if let Some(dir) = out {
            if dumps.partition {
                let f = fs::File::create(dir.join(format!("partition_{}_{n}.csv", setup.dofs())))?;
                decomposition.write_partition_csv(&setup.mesh, std::io::BufWriter::new(f))?;
            }
            if dumps.mesh {
                setup.mesh.write_text(std::io::BufWriter::new(fs::File::create(dir.join(format!("mesh_{resolution}.txt")))?))?;
            }
            if dumps.system {
                let f = fs::File::create(dir.join(format!("system_{}.mtx", setup.dofs())))?;
                setup.system.matrix.write_matrix_market(std::io::BufWriter::new(f))?;
            }
        }
        let mut cell = Cell { spec, setup: &setup, decomposition: &decomposition, reference: &reference, x0: &x0, out, dumps, rows: Vec::new() };
        for &p in &spec.preconditioners {
            cell.run_preconditioner(p)?;
        }
        rows.extend(cell.rows);
    }
    Ok(rows)
}

/// Elements per subdomain for each schedule entry, for checking that a
/// schedule really holds the subdomain size fixed.
pub fn elements_per_subdomain(case: &str, schedule: &[(usize, usize)]) -> Result<Vec<f64>> {
    let tc = canonical_test_case(case)?;
    schedule
        .iter()
        .map(|&(r, n)| Ok(build_structured_mesh(&tc.shape, r)?.num_triangles() as f64 / n as f64))
        .collect()
}
