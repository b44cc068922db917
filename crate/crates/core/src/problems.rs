//! Continuous problems: Stokes flow and nearly incompressible elasticity,
//! their materials, boundary conditions and the canonical test cases.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Axis, BoundaryRule, DomainKind, DomainShape, Mesh, Point};

pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

pub fn constant_vector(v: [f64; 2]) -> VectorField {
    Arc::new(move |_| v)
}

pub fn constant_scalar(c: f64) -> ScalarField {
    Arc::new(move |_| c)
}

/// Boundary condition on one tagged part of the boundary.
///
/// `Tvnf`/`Tdnns` fix the tangential component and prescribe the normal part
/// of the flux (stress); `Nvtf`/`Ndtns` fix the normal component and prescribe
/// the tangential part. `Neumann` prescribes the full flux vector and gives,
/// together with `Dirichlet` on other tags, the mixed problem.
#[derive(Clone)]
pub enum BoundaryCondition {
    Dirichlet(VectorField),
    Neumann(VectorField),
    Tvnf(ScalarField),
    Nvtf(ScalarField),
    Tdnns(ScalarField),
    Ndtns(ScalarField),
}

impl BoundaryCondition {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dirichlet(_) => "Dirichlet",
            Self::Neumann(_) => "Neumann",
            Self::Tvnf(_) => "TVNF",
            Self::Nvtf(_) => "NVTF",
            Self::Tdnns(_) => "TDNNS",
            Self::Ndtns(_) => "NDTNS",
        }
    }

    pub fn fixes_tangential(&self) -> bool {
        matches!(self, Self::Dirichlet(_) | Self::Tvnf(_) | Self::Tdnns(_))
    }

    pub fn fixes_normal(&self) -> bool {
        matches!(self, Self::Dirichlet(_) | Self::Nvtf(_) | Self::Ndtns(_))
    }
}

impl fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default)]
pub struct BoundaryConditionSpec {
    pub conditions: BTreeMap<String, BoundaryCondition>,
}

impl BoundaryConditionSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, tag: &str, bc: BoundaryCondition) -> Self {
        self.conditions.insert(tag.to_string(), bc);
        self
    }

    pub fn get(&self, tag: &str) -> Option<&BoundaryCondition> {
        self.conditions.get(tag)
    }

    /// Checks that every tag used by `mesh` has a condition.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        for name in &mesh.tag_names {
            if !self.conditions.contains_key(name) {
                return Err(Error::MissingCondition(name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
}

impl Material {
    pub fn new(young: f64, poisson: f64) -> Result<Self> {
        lame_parameters(young, poisson)?;
        Ok(Self { young, poisson })
    }

    pub fn lame(&self) -> (f64, f64) {
        lame_parameters(self.young, self.poisson).expect("validated on construction")
    }
}

/// Lamé coefficients `(lambda, mu)` from Young's modulus and Poisson's ratio.
pub fn lame_parameters(young: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(young > 0.0) || !young.is_finite() {
        return Err(Error::Material(format!("Young modulus must be positive, got {young}")));
    }
    if !(0.0..0.5).contains(&poisson) {
        return Err(Error::Material(format!("Poisson ratio must lie in [0, 0.5), got {poisson}")));
    }
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    Ok((lambda, mu))
}

#[derive(Clone)]
pub struct StokesProblem {
    pub viscosity: f64,
    pub body_force: VectorField,
    pub bc: BoundaryConditionSpec,
}

#[derive(Clone)]
pub struct ElasticityProblem {
    /// Indexed by mesh region id.
    pub materials: Vec<Material>,
    pub body_force: VectorField,
    pub bc: BoundaryConditionSpec,
}

impl fmt::Debug for StokesProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StokesProblem")
            .field("viscosity", &self.viscosity)
            .field("bc", &self.bc)
            .finish_non_exhaustive()
    }
}

impl fmt::Debug for ElasticityProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ElasticityProblem")
            .field("materials", &self.materials)
            .field("bc", &self.bc)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PdeKind {
    Stokes,
    Elasticity,
}

#[derive(Clone, Debug)]
pub enum Problem {
    Stokes(StokesProblem),
    Elasticity(ElasticityProblem),
}

/// Per-region coefficients used by the assemblers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    /// `nu` for Stokes, `2 mu` for elasticity.
    pub diffusion: f64,
    /// `0` for Stokes, `1/lambda` for elasticity.
    pub compressibility: f64,
    /// Robin interface weight per unit `alpha`.
    pub robin: f64,
}

impl Problem {
    pub fn kind(&self) -> PdeKind {
        match self {
            Problem::Stokes(_) => PdeKind::Stokes,
            Problem::Elasticity(_) => PdeKind::Elasticity,
        }
    }

    pub fn body_force(&self) -> &VectorField {
        match self {
            Problem::Stokes(p) => &p.body_force,
            Problem::Elasticity(p) => &p.body_force,
        }
    }

    pub fn bc(&self) -> &BoundaryConditionSpec {
        match self {
            Problem::Stokes(p) => &p.bc,
            Problem::Elasticity(p) => &p.bc,
        }
    }

    pub fn bc_mut(&mut self) -> &mut BoundaryConditionSpec {
        match self {
            Problem::Stokes(p) => &mut p.bc,
            Problem::Elasticity(p) => &mut p.bc,
        }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        match self {
            Problem::Stokes(p) => {
                if !(p.viscosity > 0.0) {
                    return Err(Error::Material(format!("viscosity must be positive, got {}", p.viscosity)));
                }
            }
            Problem::Elasticity(p) => {
                for m in &p.materials {
                    lame_parameters(m.young, m.poisson)?;
                }
                let regions = mesh.num_regions();
                if p.materials.len() < regions {
                    return Err(Error::Material(format!(
                        "mesh has {regions} regions but only {} materials are given",
                        p.materials.len()
                    )));
                }
            }
        }
        self.bc().validate(mesh)
    }

    pub fn coefficients(&self, region: usize) -> Coefficients {
        match self {
            Problem::Stokes(p) => Coefficients {
                diffusion: p.viscosity,
                compressibility: 0.0,
                robin: p.viscosity,
            },
            Problem::Elasticity(p) => {
                let (lambda, mu) = p.materials[region].lame();
                Coefficients {
                    diffusion: 2.0 * mu,
                    compressibility: 1.0 / lambda,
                    robin: 2.0 * mu * (2.0 * mu + lambda) / (lambda + 3.0 * mu),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialGuess {
    Zero,
    /// Uniform random entries in `[-1, 1)` drawn from the run seed.
    Random,
}

#[derive(Clone, Debug)]
pub struct TestCase {
    pub name: &'static str,
    pub shape: DomainShape,
    pub problem: Problem,
    pub initial_guess: InitialGuess,
}

pub const TEST_CASES: [&str; 4] = ["l_shape_elasticity", "hetero_beam", "cavity", "t_shape"];

/// Builds one of the named model problems.
pub fn canonical_test_case(name: &str) -> Result<TestCase> {
    let zero_v = constant_vector([0.0, 0.0]);
    match name {
        "l_shape_elasticity" => Ok(TestCase {
            name: "l_shape_elasticity",
            shape: DomainShape::new(DomainKind::LShape, BoundaryRule::LShapeClamped),
            problem: Problem::Elasticity(ElasticityProblem {
                materials: vec![Material::new(1e5, 0.4999)?],
                body_force: constant_vector([0.0, -1.0]),
                bc: BoundaryConditionSpec::new()
                    .with("clamped", BoundaryCondition::Dirichlet(zero_v.clone()))
                    .with("free", BoundaryCondition::Neumann(zero_v)),
            }),
            initial_guess: InitialGuess::Zero,
        }),
        "hetero_beam" => {
            let steel = Material::new(210e9, 0.3)?;
            let rubber = Material::new(1e8, 0.4999)?;
            Ok(TestCase {
                name: "hetero_beam",
                shape: DomainShape::new(
                    DomainKind::Rectangle { width: 5.0, height: 1.0 },
                    BoundaryRule::ClampedLeft,
                )
                .with_layers(10, Axis::Y),
                problem: Problem::Elasticity(ElasticityProblem {
                    materials: (0..10).map(|k| if k % 2 == 0 { steel } else { rubber }).collect(),
                    body_force: constant_vector([0.0, -1.0]),
                    bc: BoundaryConditionSpec::new()
                        .with("clamped", BoundaryCondition::Dirichlet(zero_v.clone()))
                        .with("free", BoundaryCondition::Neumann(zero_v)),
                }),
                initial_guess: InitialGuess::Zero,
            })
        }
        "cavity" => {
            // Lid and walls share one field so nodes on both corners see the
            // lid velocity (leaky lid).
            let lid: VectorField =
                Arc::new(|p: Point| if (p[1] - 1.0).abs() < 1e-12 { [1.0, 0.0] } else { [0.0, 0.0] });
            Ok(TestCase {
            name: "cavity",
            shape: DomainShape::new(DomainKind::UnitSquare, BoundaryRule::Cavity),
            problem: Problem::Stokes(StokesProblem {
                viscosity: 1.0,
                body_force: zero_v.clone(),
                bc: BoundaryConditionSpec::new()
                    .with("lid", BoundaryCondition::Dirichlet(lid.clone()))
                    .with("wall", BoundaryCondition::Dirichlet(lid)),
            }),
            initial_guess: InitialGuess::Random,
        })
        }
        "t_shape" => {
            let profile: VectorField = Arc::new(|p: Point| [4.0 * p[1] * (1.0 - p[1]), 0.0]);
            Ok(TestCase {
                name: "t_shape",
                shape: DomainShape::new(DomainKind::TShape, BoundaryRule::Channel),
                problem: Problem::Stokes(StokesProblem {
                    viscosity: 1.0,
                    body_force: zero_v.clone(),
                    bc: BoundaryConditionSpec::new()
                        .with("inflow", BoundaryCondition::Dirichlet(profile.clone()))
                        .with("outflow", BoundaryCondition::Dirichlet(profile))
                        .with("wall", BoundaryCondition::Dirichlet(zero_v)),
                }),
                initial_guess: InitialGuess::Zero,
            })
        }
        other => Err(Error::UnknownCase(other.to_string())),
    }
}
