//! One-level restricted Schwarz preconditioners built from factorized
//! subdomain operators.
//!
//! All four families share one skeleton: `z = Σ R_iᵀ D_i B_i⁻¹ (D_i) R_i r`.
//! They differ only in the interface condition used to assemble `B_i` and
//! in whether the restriction is weighted as well (the symmetrized forms).

use std::fmt;
use std::str::FromStr;

use crate::decomposition::Decomposition;
use crate::discretization::{Assembler, InterfaceCondition, LinearSystem, LocalSystem};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::problems::PdeKind;
use crate::solvers::gmres::LinearOperator;
use crate::solvers::lu::{factorize, Factorization};
use crate::solvers::sparse::CsrMatrix;

/// Robin weight used unless a spec overrides it.
pub const DEFAULT_ROBIN_ALPHA: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Oras,
    Soras,
    Mras,
    Smras,
}

impl Family {
    pub fn symmetrized(self) -> bool {
        matches!(self, Family::Soras | Family::Smras)
    }

    /// Whether the family uses the non-standard interface conditions.
    pub fn modified(self) -> bool {
        matches!(self, Family::Mras | Family::Smras)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Oras => "ORAS",
            Family::Soras => "SORAS",
            Family::Mras => "MRAS",
            Family::Smras => "SMRAS",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ORAS" => Ok(Family::Oras),
            "SORAS" => Ok(Family::Soras),
            "MRAS" => Ok(Family::Mras),
            "SMRAS" => Ok(Family::Smras),
            other => Err(Error::Config(format!("unknown preconditioner family `{other}`"))),
        }
    }
}

fn parse_condition(s: &str) -> Result<InterfaceCondition> {
    match s.to_ascii_uppercase().as_str() {
        "TVNF" => Ok(InterfaceCondition::Tvnf),
        "NVTF" => Ok(InterfaceCondition::Nvtf),
        "TDNNS" => Ok(InterfaceCondition::Tdnns),
        "NDTNS" => Ok(InterfaceCondition::Ndtns),
        other => Err(Error::Config(format!("unknown interface condition `{other}`"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreconditionerSpec {
    pub family: Family,
    pub interface: InterfaceCondition,
}

impl PreconditionerSpec {
    pub fn new(family: Family, interface: InterfaceCondition) -> Self {
        Self { family, interface }
    }

    pub fn oras(alpha: f64) -> Self {
        Self::new(Family::Oras, InterfaceCondition::Robin(alpha))
    }

    pub fn soras(alpha: f64) -> Self {
        Self::new(Family::Soras, InterfaceCondition::Robin(alpha))
    }

    /// Checks the family/condition pairing and the condition against the PDE.
    pub fn validate(&self, kind: PdeKind) -> Result<()> {
        let robin = matches!(self.interface, InterfaceCondition::Robin(a) if a > 0.0);
        let nonstandard = matches!(
            self.interface,
            InterfaceCondition::Tvnf | InterfaceCondition::Nvtf | InterfaceCondition::Tdnns | InterfaceCondition::Ndtns
        );
        if self.family.modified() && !nonstandard {
            return Err(Error::Preconditioner(format!("{} needs TVNF, NVTF, TDNNS or NDTNS, got {}", self.family, self.interface)));
        }
        if !self.family.modified() && !robin {
            return Err(Error::Preconditioner(format!("{} needs a positive Robin weight, got {}", self.family, self.interface)));
        }
        self.interface.check_pde(kind)
    }

    /// `ORAS`, `SORAS:20` (non-default Robin weight), `NDTNS-MRAS`, ...
    pub fn label(&self) -> String {
        match self.interface {
            InterfaceCondition::Robin(a) if a != DEFAULT_ROBIN_ALPHA => format!("{}:{a}", self.family),
            InterfaceCondition::Robin(_) => self.family.to_string(),
            other => format!("{other}-{}", self.family),
        }
    }
}

impl fmt::Display for PreconditionerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for PreconditionerSpec {
    type Err = Error;

    /// `oras`, `soras`, `oras:20` (Robin weight), `mras:ndtns`, `ndtns-smras`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, arg) = if let Some((a, b)) = s.split_once(':') {
            (a.parse::<Family>()?, Some(b))
        } else if let Some((a, b)) = s.split_once('-') {
            (b.parse::<Family>()?, Some(a))
        } else {
            (s.parse::<Family>()?, None)
        };
        let interface = if family.modified() {
            parse_condition(arg.ok_or_else(|| Error::Config(format!("`{s}` needs an interface condition")))?)?
        } else {
            let alpha = match arg {
                Some(a) => a.parse::<f64>().map_err(|_| Error::Config(format!("bad Robin weight in `{s}`")))?,
                None => DEFAULT_ROBIN_ALPHA,
            };
            InterfaceCondition::Robin(alpha)
        };
        Ok(Self { family, interface })
    }
}

/// A factorized subdomain operator `B_i` with its restriction data.
#[derive(Debug)]
pub struct LocalSolver {
    pub subdomain: usize,
    pub local: LocalSystem,
    pub weights: Vec<f64>,
    factor: Factorization,
    interface_rows: Vec<usize>,
}

impl LocalSolver {
    pub fn dofs(&self) -> &[usize] {
        &self.local.dofs
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.local.system.matrix
    }

    pub fn system(&self) -> &LinearSystem {
        &self.local.system
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factor
    }

    /// `x = Q M B⁻¹ M Qᵀ r` on a restricted vector of length `dofs().len()`,
    /// where `M` zeroes the interface-constrained rows and `Q` is the local
    /// normal-tangential frame.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = self.local.dofs.len();
        let frame = &self.local.system.frame;
        let mut x = vec![0.0; self.local.system.dim()];
        x[..n].copy_from_slice(r);
        frame.to_frame(&mut x);
        for &i in &self.interface_rows {
            x[i] = 0.0;
        }
        self.factor.solve_in_place(&mut x);
        frame.to_physical(&mut x);
        x.truncate(n);
        x
    }
}

/// Assembles and factorizes `B_i` for one subdomain.
pub fn build_local(
    assembler: &Assembler,
    global: &LinearSystem,
    decomposition: &Decomposition,
    i: usize,
    interface: InterfaceCondition,
) -> Result<LocalSolver> {
    let local = assembler.local_system(
        global,
        &decomposition.overlapped_elements[i],
        &decomposition.dof_sets[i],
        interface,
        true,
    )?;
    let factor = factorize(&local.system.matrix).map_err(|e| Error::SingularLocal { subdomain: i, source: Box::new(e) })?;
    let interface_rows = local.system.interface_constrained();
    Ok(LocalSolver { subdomain: i, weights: decomposition.pu_weights[i].clone(), local, factor, interface_rows })
}

#[derive(Debug)]
pub struct OneLevelPreconditioner {
    pub spec: PreconditionerSpec,
    pub locals: Vec<LocalSolver>,
    dim: usize,
    execution: Execution,
}

/// Builds every `B_i` concurrently (per `execution`) and factorizes it.
pub fn build_one_level(
    spec: PreconditionerSpec,
    decomposition: &Decomposition,
    assembler: &Assembler,
    global: &LinearSystem,
    execution: Execution,
) -> Result<OneLevelPreconditioner> {
    spec.validate(assembler.problem.kind())?;
    if global.dim() != decomposition.global_dim {
        return Err(Error::Dimension { expected: global.dim(), got: decomposition.global_dim });
    }
    let locals = execution.try_map(decomposition.n_subdomains, |i| build_local(assembler, global, decomposition, i, spec.interface))?;
    Ok(OneLevelPreconditioner { spec, locals, dim: global.dim(), execution })
}

impl OneLevelPreconditioner {
    pub fn n_subdomains(&self) -> usize {
        self.locals.len()
    }

    pub fn execution(&self) -> Execution {
        self.execution
    }

    pub fn set_execution(&mut self, execution: Execution) {
        self.execution = execution;
    }

    fn accumulate(&self, r: &[f64], z: &mut [f64], weighted: bool) {
        assert_eq!(r.len(), self.dim);
        assert_eq!(z.len(), self.dim);
        let symmetric = self.spec.family.symmetrized();
        let parts = self.execution.map(self.locals.len(), |i| {
            let loc = &self.locals[i];
            let rl: Vec<f64> = loc
                .dofs()
                .iter()
                .zip(&loc.weights)
                .map(|(&g, &w)| if symmetric && weighted { w * r[g] } else { r[g] })
                .collect();
            loc.solve(&rl)
        });
        z.fill(0.0);
        // Fixed ascending order keeps the sum bitwise reproducible.
        for (loc, x) in self.locals.iter().zip(parts) {
            for ((&g, &w), xi) in loc.dofs().iter().zip(&loc.weights).zip(x) {
                z[g] += if weighted { w * xi } else { xi };
            }
        }
    }

    /// The unweighted sum `Σ R_iᵀ B_i⁻¹ R_i r`.
    pub fn apply_additive(&self, r: &[f64], z: &mut [f64]) {
        self.accumulate(r, z, false);
    }
}

impl LinearOperator for OneLevelPreconditioner {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.accumulate(r, z, true);
    }
}
