use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddlab::coarse::Selection;
use ddlab::decomposition::PartitionMethod;
use ddlab::discretization::Scheme;
use ddlab::harness::{apply_config, parse_config, parse_schedule, run_experiment, to_csv, to_markdown, Dumps, ExperimentSpec};
use ddlab::par::Execution;
use ddlab::schwarz::PreconditionerSpec;
use ddlab::{Error, Result};

#[derive(Parser)]
#[command(name = "ddlab", version, about = "Overlapping Schwarz experiments for Stokes and nearly incompressible elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a weak-scaling experiment and write report.csv and report.md.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key=value file; command-line flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    /// th or hdg
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    degree: Option<usize>,
    /// File with one `resolution N` pair per line.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Comma-separated list, e.g. `oras,soras,mras:ndtns,smras:tdnns`.
    #[arg(long, value_delimiter = ',')]
    precond: Vec<PreconditionerSpec>,
    /// Comma-separated coarse sizes: `0` (one-level), a count, or `theta=<x>`.
    #[arg(long, value_delimiter = ',')]
    coarse: Vec<Selection>,
    #[arg(long)]
    overlap: Option<usize>,
    /// graph or strips
    #[arg(long)]
    partition: Option<PartitionMethod>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    maxit: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Eigenpairs computed per subdomain.
    #[arg(long)]
    eigen_request: Option<usize>,
    /// sequential or parallel
    #[arg(long)]
    execution: Option<Execution>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    dump_traces: bool,
    #[arg(long)]
    dump_spectrum: bool,
    #[arg(long)]
    dump_partition: bool,
    #[arg(long)]
    dump_system: bool,
    #[arg(long)]
    dump_mesh: bool,
}

fn spec_from(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::new("", Scheme::TaylorHood, 2);
    if let Some(path) = &args.config {
        apply_config(&mut spec, &parse_config(&fs::read_to_string(path)?)?)?;
    }
    if let Some(c) = &args.case {
        spec.case = c.clone();
    }
    if let Some(s) = args.scheme {
        spec.scheme = s;
    }
    if let Some(d) = args.degree {
        spec.degree = d;
    }
    if let Some(path) = &args.schedule {
        spec.schedule = parse_schedule(&fs::read_to_string(path)?)?;
    }
    if !args.precond.is_empty() {
        spec.preconditioners = args.precond.clone();
    }
    if !args.coarse.is_empty() {
        spec.coarse = args.coarse.clone();
    }
    if let Some(l) = args.overlap {
        spec.overlap = l;
    }
    if let Some(p) = args.partition {
        spec.partition = p;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(m) = args.maxit {
        spec.maxit = m;
    }
    if let Some(t) = args.tol {
        spec.tol = t;
    }
    if args.eigen_request.is_some() {
        spec.eigen_request = args.eigen_request;
    }
    if let Some(e) = args.execution {
        spec.execution = e;
    }
    if spec.case.is_empty() {
        return Err(Error::Config("no test case given (--case or `case=` in --config)".into()));
    }
    Ok(spec)
}

fn run(args: RunArgs) -> Result<()> {
    let spec = spec_from(&args)?;
    fs::create_dir_all(&args.out)?;
    let dumps = Dumps {
        traces: args.dump_traces,
        spectrum: args.dump_spectrum,
        partition: args.dump_partition,
        system: args.dump_system,
        mesh: args.dump_mesh,
    };
    let rows = run_experiment(&spec, Some(&args.out), dumps)?;
    fs::write(args.out.join("report.csv"), to_csv(&rows)?)?;
    let md = to_markdown(&rows);
    fs::write(args.out.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}

fn main() -> ExitCode {
    let Command::Run(args) = Cli::parse().command;
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
