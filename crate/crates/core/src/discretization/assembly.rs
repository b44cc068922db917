//! Global and subdomain assembly with essential, natural and Robin conditions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::bdm::{facet_moments, facet_point};
use super::element::{element_matrices, facet_quadrature, ElementMatrices};
use super::quadrature::LineRule;
use super::space::{Scheme, Space};
use super::system::{BlockLayout, Constraint, ConstraintOrigin, Frame, LinearSystem, Rotation};
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::problems::{BoundaryCondition, PdeKind, Problem, ScalarField, VectorField};
use crate::solvers::sparse::CsrMatrix;

/// Condition imposed on the part of a subdomain boundary interior to the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InterfaceCondition {
    Robin(f64),
    Tvnf,
    Nvtf,
    Tdnns,
    Ndtns,
    Neumann,
    /// Take the rows of the global operator (`R_i A R_iᵀ`).
    InheritGlobal,
}

impl InterfaceCondition {
    pub fn check_pde(&self, kind: PdeKind) -> Result<()> {
        let ok = match self {
            Self::Tvnf | Self::Nvtf => kind == PdeKind::Stokes,
            Self::Tdnns | Self::Ndtns => kind == PdeKind::Elasticity,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Preconditioner(format!("interface condition {self} does not apply to {kind:?}")))
        }
    }
}

impl fmt::Display for InterfaceCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Robin(a) => write!(f, "Robin({a})"),
            Self::Tvnf => f.write_str("TVNF"),
            Self::Nvtf => f.write_str("NVTF"),
            Self::Tdnns => f.write_str("TDNNS"),
            Self::Ndtns => f.write_str("NDTNS"),
            Self::Neumann => f.write_str("Neumann"),
            Self::InheritGlobal => f.write_str("InheritGlobal"),
        }
    }
}

#[derive(Clone, Copy)]
enum SiteKind<'a> {
    Dirichlet(&'a VectorField),
    Traction(&'a VectorField),
    /// Tangential component fixed to zero, optional normal-flux load.
    FixTangential(Option<&'a ScalarField>),
    /// Normal component fixed to zero, optional tangential-flux load.
    FixNormal(Option<&'a ScalarField>),
    Robin(f64),
    Free,
}

impl SiteKind<'_> {
    fn fixes_normal(&self) -> bool {
        matches!(self, SiteKind::Dirichlet(_) | SiteKind::FixNormal(_))
    }
}

#[derive(Clone, Copy)]
struct Site<'a> {
    facet: usize,
    element: usize,
    kind: SiteKind<'a>,
    origin: ConstraintOrigin,
}

fn global_site_kind(bc: &BoundaryCondition) -> SiteKind<'_> {
    match bc {
        BoundaryCondition::Dirichlet(g) => SiteKind::Dirichlet(g),
        BoundaryCondition::Neumann(h) => SiteKind::Traction(h),
        BoundaryCondition::Tvnf(g) | BoundaryCondition::Tdnns(g) => SiteKind::FixTangential(Some(g)),
        BoundaryCondition::Nvtf(g) | BoundaryCondition::Ndtns(g) => SiteKind::FixNormal(Some(g)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum AugmentationMode {
    MeanZero,
    Identity,
}

/// A subdomain operator in local numbering. Local index `l < dofs.len()`
/// corresponds to global dof `dofs[l]`. Trailing extra indices hold a local
/// mean-zero pressure multiplier (if `local_augmentation`) followed by one
/// multiplier per `kernel` vector.
#[derive(Clone, Debug)]
pub struct LocalSystem {
    pub system: LinearSystem,
    pub dofs: Vec<usize>,
    pub local_augmentation: bool,
    /// Rigid motions the subdomain conditions leave undetermined, orthonormal
    /// and in frame coordinates. The system is bordered with them.
    pub kernel: Vec<Vec<f64>>,
}

/// Shared assembly context: element matrices are computed once and reused by
/// the global system and every subdomain system.
#[derive(Clone)]
pub struct Assembler {
    pub space: Arc<Space>,
    pub problem: Arc<Problem>,
    pub elements: ElementMatrices,
}

impl fmt::Debug for Assembler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Assembler")
            .field("space", &self.space.label())
            .field("tau", &self.elements.tau)
            .finish_non_exhaustive()
    }
}

pub fn assemble_taylor_hood(space: Arc<Space>, problem: Arc<Problem>) -> Result<LinearSystem> {
    if space.scheme != Scheme::TaylorHood {
        return Err(Error::Discretization("assemble_taylor_hood needs a Taylor-Hood space".into()));
    }
    Assembler::new(space, problem, 10.0)?.global_system()
}

pub fn assemble_hdg(space: Arc<Space>, problem: Arc<Problem>, tau: f64) -> Result<LinearSystem> {
    if space.scheme != Scheme::Hdg {
        return Err(Error::Discretization("assemble_hdg needs an hdG space".into()));
    }
    Assembler::new(space, problem, tau)?.global_system()
}

impl Assembler {
    pub fn new(space: Arc<Space>, problem: Arc<Problem>, tau: f64) -> Result<Self> {
        problem.validate(&space.mesh)?;
        let elements = element_matrices(&space, &problem, tau)?;
        Ok(Self { space, problem, elements })
    }

    pub fn tau(&self) -> f64 {
        self.elements.tau
    }

    fn global_sites(&self) -> Vec<Site<'_>> {
        let mesh = &self.space.mesh;
        mesh.boundary_facets()
            .map(|f| {
                let tag = mesh.boundary_tag(f).expect("boundary facets are tagged");
                let bc = self.problem.bc().get(tag).expect("validated");
                Site { facet: f, element: mesh.facets[f].owner, kind: global_site_kind(bc), origin: ConstraintOrigin::Boundary }
            })
            .collect()
    }

    fn needs_augmentation(&self, sites: &[Site<'_>]) -> bool {
        self.problem.kind() == PdeKind::Stokes && !sites.is_empty() && sites.iter().all(|s| s.kind.fixes_normal())
    }

    /// Whether the global problem determines the pressure only up to a constant.
    pub fn needs_global_augmentation(&self) -> bool {
        self.needs_augmentation(&self.global_sites())
    }

    /// Total global dimension including the augmentation dof.
    pub fn global_dim(&self) -> usize {
        self.space.ndofs() + self.needs_global_augmentation() as usize
    }

    pub fn global_system(&self) -> Result<LinearSystem> {
        let all: Vec<usize> = (0..self.space.nt_elements()).collect();
        let dofs: Vec<usize> = (0..self.space.ndofs()).collect();
        let sites = self.global_sites();
        let aug = self.needs_augmentation(&sites).then_some((self.space.ndofs(), AugmentationMode::MeanZero));
        Ok(self.assemble(&all, &dofs, &sites, aug, true))
    }

    /// Global operator without any boundary treatment or augmentation.
    pub fn unconstrained_global(&self) -> CsrMatrix {
        let all: Vec<usize> = (0..self.space.nt_elements()).collect();
        let dofs: Vec<usize> = (0..self.space.ndofs()).collect();
        self.assemble(&all, &dofs, &[], None, false).matrix
    }

    /// Assembles the operator of one subdomain.
    ///
    /// `elements` are the subdomain's (overlapped) triangles and `dofs` its
    /// ascending global dof set, possibly ending with the global augmentation
    /// index. With `augment`, a local mean-zero pressure constraint is added
    /// when the subdomain conditions leave the pressure undetermined.
    pub fn local_system(
        &self,
        global: &LinearSystem,
        elements: &[usize],
        dofs: &[usize],
        condition: InterfaceCondition,
        augment: bool,
    ) -> Result<LocalSystem> {
        if elements.is_empty() || dofs.is_empty() {
            return Err(Error::Partition("empty subdomain".into()));
        }
        condition.check_pde(self.problem.kind())?;
        if !global.frame.is_identity() {
            return Err(Error::Preconditioner(
                "subdomain problems need a global system without rotated constraints".into(),
            ));
        }
        if condition == InterfaceCondition::InheritGlobal {
            return Ok(self.inherit(global, dofs));
        }
        let ndofs = self.space.ndofs();
        let has_global_aug = dofs.last() == Some(&ndofs);
        let space_dofs = if has_global_aug { &dofs[..dofs.len() - 1] } else { dofs };

        let sites = self.local_sites(elements, condition);
        let needs = augment && self.needs_augmentation(&sites);
        let (aug, local_augmentation) = match (has_global_aug, needs) {
            (true, true) => (Some((space_dofs.len(), AugmentationMode::MeanZero)), false),
            (true, false) => (Some((space_dofs.len(), AugmentationMode::Identity)), false),
            (false, true) => (Some((space_dofs.len(), AugmentationMode::MeanZero)), true),
            (false, false) => (None, false),
        };
        let mut system = self.assemble(elements, space_dofs, &sites, aug, true);
        let kernel = if augment { system.annihilated(&self.rigid_modes(dofs)) } else { Vec::new() };
        system.border(&kernel);
        Ok(LocalSystem { system, dofs: dofs.to_vec(), local_augmentation, kernel })
    }

    fn inherit(&self, global: &LinearSystem, dofs: &[usize]) -> LocalSystem {
        let matrix = global.matrix.principal_submatrix(dofs);
        let mut local = vec![usize::MAX; global.dim()];
        for (l, &g) in dofs.iter().enumerate() {
            local[g] = l;
        }
        let constraints = global
            .constraints
            .iter()
            .filter(|c| local[c.dof] != usize::MAX)
            .map(|c| Constraint { dof: local[c.dof], ..*c })
            .collect();
        let layout = self.local_layout(dofs, global.layout.augmentation.filter(|a| local[*a] != usize::MAX).map(|a| local[a]));
        LocalSystem {
            system: LinearSystem {
                matrix,
                rhs: dofs.iter().map(|&g| global.rhs[g]).collect(),
                layout,
                constraints,
                frame: Frame::default(),
            },
            dofs: dofs.to_vec(),
            local_augmentation: false,
            kernel: Vec::new(),
        }
    }

    /// Interpolated rigid motions on a dof list: the two translations and
    /// the rotation about the centroid of the listed velocity entities.
    /// Pressure and augmentation entries are zero.
    pub fn rigid_modes(&self, dofs: &[usize]) -> Vec<Vec<f64>> {
        let space = &*self.space;
        let mesh = &*space.mesh;
        let (nv, mult) = (space.velocity_range().end, space.multiplier_range());
        let anchor = |d: usize| match space.scheme {
            Scheme::TaylorHood => space.velocity_nodes.as_ref().expect("TH space").coords[d / 2],
            Scheme::Hdg => facet_point(mesh, d / 2, 0.5),
        };
        let carried: Vec<Point> = dofs.iter().filter(|&&d| d < nv).map(|&d| anchor(d)).collect();
        let m = carried.len().max(1) as f64;
        let c = carried.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / m, a[1] + p[1] / m]);
        let fields: [Box<dyn Fn(Point) -> [f64; 2]>; 3] =
            [Box::new(|_| [1.0, 0.0]), Box::new(|_| [0.0, 1.0]), Box::new(move |p: Point| [c[1] - p[1], p[0] - c[0]])];
        let rule = LineRule::new(4);
        fields
            .iter()
            .map(|g| {
                dofs.iter()
                    .map(|&d| match space.scheme {
                        Scheme::TaylorHood if d < nv => g(anchor(d))[d % 2],
                        Scheme::Hdg if d < nv => facet_moments(mesh, d / 2, &|x| g(x), &rule)[d % 2],
                        Scheme::Hdg if mult.contains(&d) => {
                            let f = d - mult.start;
                            let t = mesh.facet_tangent(f);
                            rule.points
                                .iter()
                                .zip(&rule.weights)
                                .map(|(s, w)| {
                                    let v = g(facet_point(mesh, f, *s));
                                    w * (v[0] * t[0] + v[1] * t[1])
                                })
                                .sum()
                        }
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect()
    }

    fn local_layout(&self, dofs: &[usize], augmentation: Option<usize>) -> BlockLayout {
        let count = |limit: usize| dofs.partition_point(|&d| d < limit);
        let s = &self.space;
        let v = count(s.n_velocity);
        let m = count(s.n_velocity + s.n_multiplier);
        let p = count(s.ndofs());
        BlockLayout { velocity: 0..v, multiplier: v..m, pressure: m..p, augmentation }
    }

    fn local_sites(&self, elements: &[usize], condition: InterfaceCondition) -> Vec<Site<'_>> {
        let mesh = &self.space.mesh;
        let mut inside = vec![false; mesh.num_triangles()];
        for &t in elements {
            inside[t] = true;
        }
        let interface_kind = match condition {
            InterfaceCondition::Robin(alpha) => SiteKind::Robin(alpha),
            InterfaceCondition::Tvnf | InterfaceCondition::Tdnns => SiteKind::FixTangential(None),
            InterfaceCondition::Nvtf | InterfaceCondition::Ndtns => SiteKind::FixNormal(None),
            InterfaceCondition::Neumann | InterfaceCondition::InheritGlobal => SiteKind::Free,
        };
        let mut sites = Vec::new();
        for (f, facet) in mesh.facets.iter().enumerate() {
            match facet.neighbor {
                None if inside[facet.owner] => {
                    let tag = mesh.boundary_tag(f).expect("boundary facets are tagged");
                    let bc = self.problem.bc().get(tag).expect("validated");
                    sites.push(Site { facet: f, element: facet.owner, kind: global_site_kind(bc), origin: ConstraintOrigin::Boundary });
                }
                Some(nb) if inside[facet.owner] != inside[nb] => {
                    let element = if inside[facet.owner] { facet.owner } else { nb };
                    sites.push(Site { facet: f, element, kind: interface_kind, origin: ConstraintOrigin::Interface });
                }
                _ => {}
            }
        }
        sites
    }

    fn assemble(
        &self,
        elements: &[usize],
        dofs: &[usize],
        sites: &[Site<'_>],
        aug: Option<(usize, AugmentationMode)>,
        with_conditions: bool,
    ) -> LinearSystem {
        let space = &*self.space;
        let em = &self.elements;
        let n = dofs.len() + aug.map_or(0, |(slot, _)| (slot >= dofs.len()) as usize);
        let mut local = vec![usize::MAX; space.ndofs()];
        for (l, &g) in dofs.iter().enumerate() {
            local[g] = l;
        }

        let stride = em.stride;
        let mut entries = Vec::with_capacity(elements.len() * stride * stride);
        let mut rhs = vec![0.0; n];
        let mut ldofs = vec![0usize; stride];
        for &t in elements {
            for (k, &g) in space.element_dofs(t).iter().enumerate() {
                ldofs[k] = local[g];
            }
            let m = em.matrix(t);
            for a in 0..stride {
                for b in 0..stride {
                    let v = m[a * stride + b];
                    if v != 0.0 {
                        entries.push((ldofs[a], ldofs[b], v));
                    }
                }
            }
            for (a, v) in em.load(t).iter().enumerate() {
                rhs[ldofs[a]] += v;
            }
            if let Some((slot, AugmentationMode::MeanZero)) = aug {
                for (a, &w) in em.pressure_weight(t).iter().enumerate() {
                    if w != 0.0 {
                        entries.push((slot, ldofs[a], w));
                        entries.push((ldofs[a], slot, w));
                    }
                }
            }
        }
        if let Some((slot, AugmentationMode::Identity)) = aug {
            entries.push((slot, slot, 1.0));
        }

        let mut constraints = Vec::new();
        let mut frame = Frame::default();
        if with_conditions {
            self.facet_terms(sites, &local, &mut entries, &mut rhs);
            match space.scheme {
                Scheme::TaylorHood => self.nodal_constraints(sites, &local, &mut constraints, &mut frame),
                Scheme::Hdg => self.facet_constraints(sites, &local, &mut constraints),
            }
        }
        let layout = self.local_layout(dofs, aug.map(|(slot, _)| slot));
        LinearSystem::finalize(n, entries, rhs, layout, frame, constraints)
    }

    /// Robin mass terms and natural-condition loads on boundary sites.
    fn facet_terms(&self, sites: &[Site<'_>], local: &[usize], entries: &mut Vec<(usize, usize, f64)>, rhs: &mut [f64]) {
        let space = &*self.space;
        let mesh = &*space.mesh;
        let degree = 2 * space.degree + 4;
        for site in sites {
            let (t, f) = (site.element, site.facet);
            let n = mesh.outward_normal(t, f);
            let tan = [-n[1], n[0]];
            let edofs = space.element_dofs(t);
            let mult = (space.scheme == Scheme::Hdg).then(|| local[space.multiplier_dof(f)]);
            let facet_tangent = mesh.facet_tangent(f);
            match site.kind {
                SiteKind::Robin(alpha) => {
                    let kappa = alpha * self.problem.coefficients(mesh.regions[t]).robin;
                    let q = facet_quadrature(space, t, f, degree);
                    for (w, basis) in q.weights.iter().zip(&q.basis) {
                        for &(a, va) in basis {
                            for &(b, vb) in basis {
                                let v = w * kappa * (va[0] * vb[0] + va[1] * vb[1]);
                                if v != 0.0 {
                                    entries.push((local[edofs[a]], local[edofs[b]], v));
                                }
                            }
                        }
                    }
                }
                SiteKind::Traction(h) => {
                    let q = facet_quadrature(space, t, f, degree);
                    for ((x, w), basis) in q.points.iter().zip(&q.weights).zip(&q.basis) {
                        let hv = h(*x);
                        match mult {
                            None => {
                                for &(a, va) in basis {
                                    rhs[local[edofs[a]]] += w * (hv[0] * va[0] + hv[1] * va[1]);
                                }
                            }
                            Some(m) => {
                                let hn = hv[0] * n[0] + hv[1] * n[1];
                                for &(a, va) in basis {
                                    rhs[local[edofs[a]]] += w * hn * (va[0] * n[0] + va[1] * n[1]);
                                }
                                rhs[m] += w * (hv[0] * facet_tangent[0] + hv[1] * facet_tangent[1]);
                            }
                        }
                    }
                }
                SiteKind::FixTangential(Some(g)) => {
                    let q = facet_quadrature(space, t, f, degree);
                    for ((x, w), basis) in q.points.iter().zip(&q.weights).zip(&q.basis) {
                        let gv = g(*x);
                        for &(a, va) in basis {
                            rhs[local[edofs[a]]] += w * gv * (va[0] * n[0] + va[1] * n[1]);
                        }
                    }
                }
                SiteKind::FixNormal(Some(g)) => {
                    let q = facet_quadrature(space, t, f, degree);
                    for ((x, w), basis) in q.points.iter().zip(&q.weights).zip(&q.basis) {
                        let gv = g(*x);
                        match mult {
                            None => {
                                for &(a, va) in basis {
                                    rhs[local[edofs[a]]] += w * gv * (va[0] * tan[0] + va[1] * tan[1]);
                                }
                            }
                            Some(m) => {
                                // The multiplier carries the trace along the global facet tangent.
                                let sign = tan[0] * facet_tangent[0] + tan[1] * facet_tangent[1];
                                rhs[m] += w * gv * sign;
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }

    /// Taylor-Hood: nodal constraints with rotation to the averaged normal frame.
    fn nodal_constraints(&self, sites: &[Site<'_>], local: &[usize], out: &mut Vec<Constraint>, frame: &mut Frame) {
        #[derive(Default)]
        struct NodeRecord {
            dirichlet: Option<([f64; 2], ConstraintOrigin)>,
            normal_type: Vec<[f64; 2]>,
            tangential_type: Vec<[f64; 2]>,
            interface: bool,
        }
        let space = &*self.space;
        let mesh = &*space.mesh;
        let nodes = space.velocity_nodes.as_ref().expect("TH space");
        let mut records: BTreeMap<usize, NodeRecord> = BTreeMap::new();
        for site in sites {
            let n = mesh.outward_normal(site.element, site.facet);
            for node in nodes.facet_nodes(mesh, site.facet) {
                let rec = records.entry(node).or_default();
                rec.interface |= site.origin == ConstraintOrigin::Interface;
                match site.kind {
                    SiteKind::Dirichlet(g) => {
                        let keep = matches!(rec.dirichlet, Some((_, ConstraintOrigin::Boundary)));
                        if !keep {
                            rec.dirichlet = Some((g(nodes.coords[node]), site.origin));
                        }
                    }
                    SiteKind::FixNormal(_) => rec.normal_type.push(n),
                    SiteKind::FixTangential(_) => rec.tangential_type.push(n),
                    _ => {}
                }
            }
        }
        for (node, rec) in records {
            let dofs = [local[2 * node], local[2 * node + 1]];
            let origin = if rec.interface { ConstraintOrigin::Interface } else { ConstraintOrigin::Boundary };
            let full = |values: [f64; 2], origin, out: &mut Vec<Constraint>| {
                for c in 0..2 {
                    out.push(Constraint { dof: dofs[c], value: values[c], origin });
                }
            };
            if let Some((g, o)) = rec.dirichlet {
                full(g, o, out);
                continue;
            }
            let (normals, slot) = match (rec.normal_type.is_empty(), rec.tangential_type.is_empty()) {
                (true, true) => continue,
                (false, false) => {
                    full([0.0, 0.0], origin, out);
                    continue;
                }
                (false, true) => (&rec.normal_type, 0),
                (true, false) => (&rec.tangential_type, 1),
            };
            let sum = normals.iter().fold([0.0, 0.0], |a, n| [a[0] + n[0], a[1] + n[1]]);
            let len = (sum[0] * sum[0] + sum[1] * sum[1]).sqrt();
            if len < 1e-8 * normals.len() as f64 {
                full([0.0, 0.0], origin, out);
                continue;
            }
            frame.rotations.push(Rotation { dofs, normal: [sum[0] / len, sum[1] / len] });
            out.push(Constraint { dof: dofs[slot], value: 0.0, origin });
        }
    }

    /// hdG: BDM normal moments and facet multipliers.
    fn facet_constraints(&self, sites: &[Site<'_>], local: &[usize], out: &mut Vec<Constraint>) {
        let space = &*self.space;
        let mesh = &*space.mesh;
        let rule = LineRule::new(10);
        for site in sites {
            let f = site.facet;
            let bdm = space.bdm_dofs(f).map(|d| local[d]);
            let mult = local[space.multiplier_dof(f)];
            let origin = site.origin;
            match site.kind {
                SiteKind::Dirichlet(g) => {
                    let moments = facet_moments(mesh, f, &|x| g(x), &rule);
                    let t = mesh.facet_tangent(f);
                    let mean_t: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(s, w)| {
                            let v = g(facet_point(mesh, f, *s));
                            w * (v[0] * t[0] + v[1] * t[1])
                        })
                        .sum();
                    out.push(Constraint { dof: bdm[0], value: moments[0], origin });
                    out.push(Constraint { dof: bdm[1], value: moments[1], origin });
                    out.push(Constraint { dof: mult, value: mean_t, origin });
                }
                SiteKind::FixNormal(_) => {
                    out.push(Constraint { dof: bdm[0], value: 0.0, origin });
                    out.push(Constraint { dof: bdm[1], value: 0.0, origin });
                }
                SiteKind::FixTangential(_) => out.push(Constraint { dof: mult, value: 0.0, origin }),
                _ => {}
            }
        }
    }
}

impl Space {
    pub(crate) fn nt_elements(&self) -> usize {
        self.mesh.num_triangles()
    }
}
