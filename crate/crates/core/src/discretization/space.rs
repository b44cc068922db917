//! Degree-of-freedom maps for the Taylor-Hood and hdG spaces.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use super::lagrange::LagrangeElement;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    TaylorHood,
    Hdg,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::TaylorHood => "th",
            Scheme::Hdg => "hdg",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "th" | "taylor-hood" | "taylor_hood" => Ok(Scheme::TaylorHood),
            "hdg" => Ok(Scheme::Hdg),
            other => Err(Error::Discretization(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Mesh entity carrying a degree of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entity {
    Vertex(usize),
    Facet(usize),
    Cell(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Velocity,
    Multiplier,
    Pressure,
    Augmentation,
}

/// Continuous Lagrange node numbering: vertices, then edge nodes ordered from
/// the lower to the higher vertex index, then interior nodes per triangle.
#[derive(Clone, Debug)]
pub struct NodeMap {
    pub element: LagrangeElement,
    /// `element.len()` global node ids per triangle, in local node order.
    pub cell_nodes: Vec<usize>,
    pub coords: Vec<Point>,
    pub entities: Vec<Entity>,
}

impl NodeMap {
    pub fn new(mesh: &Mesh, degree: usize) -> Self {
        let element = LagrangeElement::new(degree);
        let per_edge = degree - 1;
        let interior = element.interior_count();
        let nv = mesh.num_vertices();
        let nf = mesh.num_facets();
        let total = nv + nf * per_edge + mesh.num_triangles() * interior;

        let mut coords = vec![[0.0; 2]; total];
        let mut entities = vec![Entity::Vertex(0); total];
        for (v, p) in mesh.vertices.iter().enumerate() {
            coords[v] = *p;
            entities[v] = Entity::Vertex(v);
        }
        for f in 0..nf {
            let [a, b] = mesh.facets[f].vertices;
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            for j in 0..per_edge {
                let s = (j + 1) as f64 / degree as f64;
                let id = nv + f * per_edge + j;
                coords[id] = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                entities[id] = Entity::Facet(f);
            }
        }

        let n_loc = element.len();
        let mut cell_nodes = Vec::with_capacity(mesh.num_triangles() * n_loc);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            cell_nodes.extend_from_slice(tri);
            for e in 0..3 {
                let f = mesh.triangle_facets[t][e];
                let a = tri[(e + 1) % 3];
                let forward = a == mesh.facets[f].vertices[0];
                for j in 0..per_edge {
                    let pos = if forward { j } else { per_edge - 1 - j };
                    cell_nodes.push(nv + f * per_edge + pos);
                }
            }
            let [p0, p1, p2] = mesh.coords(t);
            for i in 0..interior {
                let id = nv + nf * per_edge + t * interior + i;
                let r = element.nodes[3 + 3 * per_edge + i];
                coords[id] = [
                    p0[0] + r[0] * (p1[0] - p0[0]) + r[1] * (p2[0] - p0[0]),
                    p0[1] + r[0] * (p1[1] - p0[1]) + r[1] * (p2[1] - p0[1]),
                ];
                entities[id] = Entity::Cell(t);
                cell_nodes.push(id);
            }
        }
        Self { element, cell_nodes, coords, entities }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn nodes_of(&self, t: usize) -> &[usize] {
        let n = self.element.len();
        &self.cell_nodes[t * n..(t + 1) * n]
    }

    /// Global nodes on the closed facet `f`.
    pub fn facet_nodes(&self, mesh: &Mesh, f: usize) -> Vec<usize> {
        let [a, b] = mesh.facets[f].vertices;
        let per_edge = self.element.degree - 1;
        let nv = mesh.num_vertices();
        let mut out = vec![a, b];
        out.extend((0..per_edge).map(|j| nv + f * per_edge + j));
        out
    }
}

/// Discrete space with block structure `velocity | multiplier | pressure`.
#[derive(Clone, Debug)]
pub struct Space {
    pub scheme: Scheme,
    pub degree: usize,
    pub mesh: Arc<Mesh>,
    pub n_velocity: usize,
    pub n_multiplier: usize,
    pub n_pressure: usize,
    /// Taylor-Hood velocity nodes (`P_k`).
    pub velocity_nodes: Option<NodeMap>,
    /// Taylor-Hood pressure nodes (`P_{k-1}`).
    pub pressure_nodes: Option<NodeMap>,
    stride: usize,
    element_dofs: Vec<usize>,
    dof_entity: Vec<Entity>,
}

/// Builds the dof map of `scheme` with polynomial degree `degree` on `mesh`.
pub fn build_space(mesh: Arc<Mesh>, scheme: Scheme, degree: usize) -> Result<Space> {
    match scheme {
        Scheme::TaylorHood => {
            if !(2..=3).contains(&degree) {
                return Err(Error::Discretization(format!(
                    "Taylor-Hood needs degree 2 or 3, got {degree}"
                )));
            }
            let vel = NodeMap::new(&mesh, degree);
            let pre = NodeMap::new(&mesh, degree - 1);
            let n_velocity = 2 * vel.len();
            let n_pressure = pre.len();
            let (nu, np) = (vel.element.len(), pre.element.len());
            let stride = 2 * nu + np;
            let mut element_dofs = Vec::with_capacity(mesh.num_triangles() * stride);
            for t in 0..mesh.num_triangles() {
                for &node in vel.nodes_of(t) {
                    element_dofs.push(2 * node);
                    element_dofs.push(2 * node + 1);
                }
                element_dofs.extend(pre.nodes_of(t).iter().map(|&n| n_velocity + n));
            }
            let mut dof_entity = Vec::with_capacity(n_velocity + n_pressure);
            for &e in &vel.entities {
                dof_entity.push(e);
                dof_entity.push(e);
            }
            dof_entity.extend_from_slice(&pre.entities);
            Ok(Space {
                scheme,
                degree,
                n_velocity,
                n_multiplier: 0,
                n_pressure,
                velocity_nodes: Some(vel),
                pressure_nodes: Some(pre),
                stride,
                element_dofs,
                dof_entity,
                mesh,
            })
        }
        Scheme::Hdg => {
            if degree != 1 {
                return Err(Error::Discretization(format!("hdG is implemented for degree 1 only, got {degree}")));
            }
            let nf = mesh.num_facets();
            let nt = mesh.num_triangles();
            let (n_velocity, n_multiplier, n_pressure) = (2 * nf, nf, nt);
            let stride = 6 + 3 + 1;
            let mut element_dofs = Vec::with_capacity(nt * stride);
            for t in 0..nt {
                let facets = mesh.triangle_facets[t];
                for &f in &facets {
                    element_dofs.push(2 * f);
                    element_dofs.push(2 * f + 1);
                }
                element_dofs.extend(facets.iter().map(|&f| n_velocity + f));
                element_dofs.push(n_velocity + n_multiplier + t);
            }
            let mut dof_entity = Vec::with_capacity(n_velocity + n_multiplier + n_pressure);
            for f in 0..nf {
                dof_entity.push(Entity::Facet(f));
                dof_entity.push(Entity::Facet(f));
            }
            dof_entity.extend((0..nf).map(Entity::Facet));
            dof_entity.extend((0..nt).map(Entity::Cell));
            Ok(Space {
                scheme,
                degree,
                n_velocity,
                n_multiplier,
                n_pressure,
                velocity_nodes: None,
                pressure_nodes: None,
                stride,
                element_dofs,
                dof_entity,
                mesh,
            })
        }
    }
}

impl Space {
    pub fn ndofs(&self) -> usize {
        self.n_velocity + self.n_multiplier + self.n_pressure
    }

    pub fn velocity_range(&self) -> Range<usize> {
        0..self.n_velocity
    }

    pub fn multiplier_range(&self) -> Range<usize> {
        self.n_velocity..self.n_velocity + self.n_multiplier
    }

    pub fn pressure_range(&self) -> Range<usize> {
        let start = self.n_velocity + self.n_multiplier;
        start..start + self.n_pressure
    }

    pub fn block(&self, dof: usize) -> Block {
        if dof < self.n_velocity {
            Block::Velocity
        } else if dof < self.n_velocity + self.n_multiplier {
            Block::Multiplier
        } else if dof < self.ndofs() {
            Block::Pressure
        } else {
            Block::Augmentation
        }
    }

    pub fn dof_entity(&self, dof: usize) -> Entity {
        self.dof_entity[dof]
    }

    /// Global dofs of triangle `t` in element-matrix order.
    pub fn element_dofs(&self, t: usize) -> &[usize] {
        &self.element_dofs[t * self.stride..(t + 1) * self.stride]
    }

    pub fn dofs_per_element(&self) -> usize {
        self.stride
    }

    /// hdG: the two BDM moment dofs of facet `f`.
    pub fn bdm_dofs(&self, f: usize) -> [usize; 2] {
        [2 * f, 2 * f + 1]
    }

    /// hdG: the multiplier dof of facet `f`.
    pub fn multiplier_dof(&self, f: usize) -> usize {
        self.n_velocity + f
    }

    pub fn label(&self) -> String {
        match self.scheme {
            Scheme::TaylorHood => format!("TH{}", self.degree),
            Scheme::Hdg => format!("HDG{}", self.degree),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, BoundaryRule, DomainKind, DomainShape};

    fn square(n: usize) -> Arc<Mesh> {
        let shape = DomainShape::new(DomainKind::UnitSquare, BoundaryRule::Sides);
        Arc::new(build_structured_mesh(&shape, n).unwrap())
    }

    #[test]
    fn dof_counts_on_two_triangles() {
        let mesh = square(1);
        let th2 = build_space(mesh.clone(), Scheme::TaylorHood, 2).unwrap();
        assert_eq!((th2.n_velocity, th2.n_pressure, th2.ndofs()), (18, 4, 22));
        let th3 = build_space(mesh.clone(), Scheme::TaylorHood, 3).unwrap();
        assert_eq!((th3.n_velocity, th3.n_pressure), (32, 9));
        let hdg = build_space(mesh.clone(), Scheme::Hdg, 1).unwrap();
        assert_eq!((hdg.n_velocity, hdg.n_multiplier, hdg.n_pressure), (10, 5, 2));
        assert!(build_space(mesh.clone(), Scheme::TaylorHood, 1).is_err());
        assert!(build_space(mesh, Scheme::Hdg, 2).is_err());
    }

    #[test]
    fn shared_edge_nodes_coincide() {
        let mesh = square(3);
        let space = build_space(mesh.clone(), Scheme::TaylorHood, 3).unwrap();
        let vel = space.velocity_nodes.as_ref().unwrap();
        for t in 0..mesh.num_triangles() {
            let [p0, p1, p2] = mesh.coords(t);
            for (local, &node) in vel.nodes_of(t).iter().enumerate() {
                let r = vel.element.nodes[local];
                let x = [
                    p0[0] + r[0] * (p1[0] - p0[0]) + r[1] * (p2[0] - p0[0]),
                    p0[1] + r[0] * (p1[1] - p0[1]) + r[1] * (p2[1] - p0[1]),
                ];
                let c = vel.coords[node];
                assert!((x[0] - c[0]).abs() < 1e-14 && (x[1] - c[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn every_dof_has_one_block_and_entity() {
        let mesh = square(2);
        for (scheme, k) in [(Scheme::TaylorHood, 2), (Scheme::TaylorHood, 3), (Scheme::Hdg, 1)] {
            let space = build_space(mesh.clone(), scheme, k).unwrap();
            let mut seen = vec![false; space.ndofs()];
            for t in 0..mesh.num_triangles() {
                for &d in space.element_dofs(t) {
                    seen[d] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
            assert_eq!(space.block(space.ndofs()), Block::Augmentation);
        }
    }
}
