//! Structured simplicial meshes of the model domains.
//!
//! Every domain is a union of axis-aligned blocks whose corners lie on a
//! common grid of spacing `1/resolution`. Each grid cell is split along its
//! lower-left to upper-right diagonal, so all triangles are right triangles
//! with `h = sqrt(2) / resolution`.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const GEOM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DomainKind {
    UnitSquare,
    Rectangle { width: f64, height: f64 },
    /// `(-1,1)^2` minus the lower right quadrant `(0,1) x (-1,0)`.
    LShape,
    /// `(0,1.5) x (0,1)` joined with the stem `(0.5,1) x (-1,1)`.
    TShape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Material bands of equal thickness stacked along `axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub count: usize,
    pub axis: Axis,
}

/// How boundary facets are labelled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryRule {
    /// `left`, `right`, `bottom`, `top` from the outward normal.
    Sides,
    /// L-shape clamped on its left side and on the left halves of the top
    /// and bottom sides (`clamped`), traction free elsewhere (`free`).
    LShapeClamped,
    /// Rectangle clamped at `x = 0` (`clamped`), free elsewhere.
    ClampedLeft,
    /// Unit square with a moving `lid` at `y = 1` and fixed `wall`s.
    Cavity,
    /// T-shape with `inflow` at `x = 0`, `outflow` at `x = 1.5`, `wall` elsewhere.
    Channel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainShape {
    pub kind: DomainKind,
    pub layers: Option<LayerSpec>,
    pub boundary: BoundaryRule,
}

impl DomainShape {
    pub fn new(kind: DomainKind, boundary: BoundaryRule) -> Self {
        Self { kind, layers: None, boundary }
    }

    pub fn with_layers(mut self, count: usize, axis: Axis) -> Self {
        self.layers = Some(LayerSpec { count, axis });
        self
    }

    /// `[xmin, xmax, ymin, ymax]`.
    pub fn bounding_box(&self) -> [f64; 4] {
        match self.kind {
            DomainKind::UnitSquare => [0.0, 1.0, 0.0, 1.0],
            DomainKind::Rectangle { width, height } => [0.0, width, 0.0, height],
            DomainKind::LShape => [-1.0, 1.0, -1.0, 1.0],
            DomainKind::TShape => [0.0, 1.5, -1.0, 1.0],
        }
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            DomainKind::UnitSquare => 1.0,
            DomainKind::Rectangle { width, height } => width * height,
            DomainKind::LShape => 3.0,
            DomainKind::TShape => 2.0,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let [x, y] = p;
        let inside = |x0: f64, x1: f64, y0: f64, y1: f64| x > x0 && x < x1 && y > y0 && y < y1;
        match self.kind {
            DomainKind::UnitSquare => inside(0.0, 1.0, 0.0, 1.0),
            DomainKind::Rectangle { width, height } => inside(0.0, width, 0.0, height),
            DomainKind::LShape => inside(-1.0, 1.0, -1.0, 1.0) && !(x > 0.0 && y < 0.0),
            DomainKind::TShape => inside(0.0, 1.5, 0.0, 1.0) || inside(0.5, 1.0, -1.0, 1.0),
        }
    }

    /// Coordinates that must fall on grid lines for the block union to be meshed exactly.
    fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            DomainKind::UnitSquare => vec![0.0, 1.0],
            DomainKind::Rectangle { width, height } => vec![0.0, width, height],
            DomainKind::LShape => vec![-1.0, 0.0, 1.0],
            DomainKind::TShape => vec![-1.0, 0.0, 0.5, 1.0, 1.5],
        }
    }

    fn segments(&self) -> Result<Vec<(&'static str, Segment)>> {
        use Axis::{X, Y};
        let [x0, x1, y0, y1] = self.bounding_box();
        let seg = |axis, at, lo, hi| Segment { axis, at, lo, hi };
        let rect = |left: &'static str, right: &'static str, bottom: &'static str, top: &'static str| {
            vec![
                (left, seg(X, x0, y0, y1)),
                (right, seg(X, x1, y0, y1)),
                (bottom, seg(Y, y0, x0, x1)),
                (top, seg(Y, y1, x0, x1)),
            ]
        };
        let mismatch = || {
            Error::Mesh(format!(
                "boundary rule {:?} does not apply to domain {:?}",
                self.boundary, self.kind
            ))
        };
        let is_box = matches!(self.kind, DomainKind::UnitSquare | DomainKind::Rectangle { .. });
        Ok(match self.boundary {
            BoundaryRule::Sides => Vec::new(),
            BoundaryRule::ClampedLeft if is_box => rect("clamped", "free", "free", "free"),
            BoundaryRule::Cavity if is_box => rect("wall", "wall", "wall", "lid"),
            BoundaryRule::LShapeClamped if self.kind == DomainKind::LShape => vec![
                ("clamped", seg(X, -1.0, -1.0, 1.0)),
                ("clamped", seg(Y, 1.0, -1.0, 0.0)),
                ("clamped", seg(Y, -1.0, -1.0, 0.0)),
                ("free", seg(Y, 1.0, 0.0, 1.0)),
                ("free", seg(X, 1.0, 0.0, 1.0)),
                ("free", seg(Y, 0.0, 0.0, 1.0)),
                ("free", seg(X, 0.0, -1.0, 0.0)),
            ],
            BoundaryRule::Channel if self.kind == DomainKind::TShape => vec![
                ("inflow", seg(X, 0.0, 0.0, 1.0)),
                ("outflow", seg(X, 1.5, 0.0, 1.0)),
                ("wall", seg(Y, 1.0, 0.0, 1.5)),
                ("wall", seg(Y, 0.0, 0.0, 0.5)),
                ("wall", seg(Y, 0.0, 1.0, 1.5)),
                ("wall", seg(X, 0.5, -1.0, 0.0)),
                ("wall", seg(X, 1.0, -1.0, 0.0)),
                ("wall", seg(Y, -1.0, 0.5, 1.0)),
            ],
            _ => return Err(mismatch()),
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    axis: Axis,
    at: f64,
    lo: f64,
    hi: f64,
}

impl Segment {
    fn contains(&self, p: Point) -> bool {
        let (normal_coord, along) = match self.axis {
            Axis::X => (p[0], p[1]),
            Axis::Y => (p[1], p[0]),
        };
        (normal_coord - self.at).abs() < GEOM_TOL && along > self.lo - GEOM_TOL && along < self.hi + GEOM_TOL
    }
}

/// An edge of the triangulation, stored with its vertices in ascending
/// index order. That order fixes the global tangent `t = (v1 - v0)/|v1 - v0|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Facet {
    pub vertices: [usize; 2],
    pub owner: usize,
    pub neighbor: Option<usize>,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.neighbor.is_none()
    }

    pub fn other(&self, triangle: usize) -> Option<usize> {
        if triangle == self.owner {
            self.neighbor
        } else {
            Some(self.owner)
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    /// Local edge `i` of a triangle is opposite to its local vertex `i`.
    pub triangle_facets: Vec<[usize; 3]>,
    pub facet_tags: Vec<Option<u8>>,
    pub tag_names: Vec<String>,
    pub regions: Vec<usize>,
    pub h: f64,
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn coords(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.coords(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.coords(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facets[f].vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn facet_midpoint(&self, f: usize) -> Point {
        let [a, b] = self.facets[f].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    /// Unit tangent from the lower to the higher vertex index.
    pub fn facet_tangent(&self, f: usize) -> [f64; 2] {
        let [a, b] = self.facets[f].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = dist(pa, pb);
        [(pb[0] - pa[0]) / len, (pb[1] - pa[1]) / len]
    }

    /// Global facet normal, the tangent rotated clockwise.
    pub fn facet_normal(&self, f: usize) -> [f64; 2] {
        let t = self.facet_tangent(f);
        [t[1], -t[0]]
    }

    /// Unit normal of `f` pointing out of triangle `t`.
    pub fn outward_normal(&self, t: usize, f: usize) -> [f64; 2] {
        let n = self.facet_normal(f);
        let c = self.centroid(t);
        let m = self.facet_midpoint(f);
        if (m[0] - c[0]) * n[0] + (m[1] - c[1]) * n[1] > 0.0 {
            n
        } else {
            [-n[0], -n[1]]
        }
    }

    pub fn boundary_tag(&self, f: usize) -> Option<&str> {
        self.facet_tags[f].map(|id| self.tag_names[id as usize].as_str())
    }

    pub fn tag_id(&self, name: &str) -> Option<u8> {
        self.tag_names.iter().position(|t| t == name).map(|i| i as u8)
    }

    pub fn boundary_facets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.facets.len()).filter(|&f| self.facets[f].is_boundary())
    }

    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                adj[v].push(t);
            }
        }
        adj
    }

    pub fn num_regions(&self) -> usize {
        self.regions.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Plain-text dump: a header `vertices N / triangles M / facets F`, then
    /// one vertex `x y`, triangle `a b c region` or facet
    /// `a b owner neighbor tag` per line (`-1` and `-` mark absent values).
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "vertices {} / triangles {} / facets {}",
            self.vertices.len(),
            self.triangles.len(),
            self.facets.len()
        )?;
        for v in &self.vertices {
            writeln!(w, "{:?} {:?}", v[0], v[1])?;
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            writeln!(w, "{} {} {} {}", tri[0], tri[1], tri[2], self.regions[t])?;
        }
        for (f, facet) in self.facets.iter().enumerate() {
            let neighbor = facet.neighbor.map_or(-1, |n| n as i64);
            writeln!(
                w,
                "{} {} {} {} {}",
                facet.vertices[0],
                facet.vertices[1],
                facet.owner,
                neighbor,
                self.boundary_tag(f).unwrap_or("-")
            )?;
        }
        Ok(())
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

fn grid_count(length: f64, resolution: usize) -> Option<usize> {
    let cells = length * resolution as f64;
    let rounded = cells.round();
    ((cells - rounded).abs() < 1e-9).then_some(rounded as usize)
}

/// Triangulates `shape` with `resolution` cells per unit length and tags its boundary.
pub fn build_structured_mesh(shape: &DomainShape, resolution: usize) -> Result<Mesh> {
    if resolution == 0 {
        return Err(Error::Mesh("resolution must be at least 1".into()));
    }
    let [x0, x1, y0, y1] = shape.bounding_box();
    if let DomainKind::Rectangle { width, height } = shape.kind {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::Mesh(format!("rectangle {width} x {height} is degenerate")));
        }
    }
    for b in shape.breakpoints() {
        if grid_count(b.abs(), resolution).is_none() {
            return Err(Error::Mesh(format!(
                "resolution {resolution} does not put the domain corner coordinate {b} on a grid line"
            )));
        }
    }
    let nx = grid_count(x1 - x0, resolution).expect("checked above");
    let ny = grid_count(y1 - y0, resolution).expect("checked above");
    if let Some(layers) = shape.layers {
        let cells = match layers.axis {
            Axis::X => nx,
            Axis::Y => ny,
        };
        if layers.count == 0 || cells % layers.count != 0 {
            return Err(Error::Mesh(format!(
                "{} layers cannot tile {cells} grid cells along {:?}",
                layers.count, layers.axis
            )));
        }
    }

    let step = 1.0 / resolution as f64;
    let grid_x = |i: usize| x0 + i as f64 * step;
    let grid_y = |j: usize| y0 + j as f64 * step;

    let cell_inside: Vec<bool> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| shape.contains([grid_x(i) + 0.5 * step, grid_y(j) + 0.5 * step]))
        .collect();

    let mut vertex_id = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let touches = [(0, 0), (1, 0), (0, 1), (1, 1)].iter().any(|&(di, dj)| {
                let (ci, cj) = (i as isize - di, j as isize - dj);
                ci >= 0
                    && cj >= 0
                    && (ci as usize) < nx
                    && (cj as usize) < ny
                    && cell_inside[cj as usize * nx + ci as usize]
            });
            if touches {
                vertex_id[j * (nx + 1) + i] = vertices.len();
                vertices.push([grid_x(i), grid_y(j)]);
            }
        }
    }

    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !cell_inside[j * nx + i] {
                continue;
            }
            let v = |di: usize, dj: usize| vertex_id[(j + dj) * (nx + 1) + i + di];
            let (v00, v10, v01, v11) = (v(0, 0), v(1, 0), v(0, 1), v(1, 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let regions = triangles
        .iter()
        .map(|tri| {
            shape.layers.map_or(0, |layers| {
                let c = centroid_of(&vertices, tri);
                let (coord, lo, hi) = match layers.axis {
                    Axis::X => (c[0], x0, x1),
                    Axis::Y => (c[1], y0, y1),
                };
                let band = ((coord - lo) / (hi - lo) * layers.count as f64).floor() as usize;
                band.min(layers.count - 1)
            })
        })
        .collect();

    let (facets, triangle_facets) = build_facets(&triangles);
    let nf = facets.len();
    let mesh = Mesh {
        vertices,
        triangles,
        facets,
        triangle_facets,
        facet_tags: vec![None; nf],
        tag_names: Vec::new(),
        regions,
        h: std::f64::consts::SQRT_2 * step,
    };
    tag_boundary(mesh, shape)
}

fn centroid_of(vertices: &[Point], tri: &[usize; 3]) -> Point {
    let (a, b, c) = (vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

fn build_facets(triangles: &[[usize; 3]]) -> (Vec<Facet>, Vec<[usize; 3]>) {
    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
    let mut facets: Vec<Facet> = Vec::with_capacity(triangles.len() * 3 / 2 + 4);
    let mut triangle_facets = vec![[0usize; 3]; triangles.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for local in 0..3 {
            let a = tri[(local + 1) % 3];
            let b = tri[(local + 2) % 3];
            let key = (a.min(b), a.max(b));
            let f = *index.entry(key).or_insert_with(|| {
                facets.push(Facet { vertices: [key.0, key.1], owner: t, neighbor: None });
                facets.len() - 1
            });
            if facets[f].owner != t {
                facets[f].neighbor = Some(t);
            }
            triangle_facets[t][local] = f;
        }
    }
    (facets, triangle_facets)
}

/// Labels every boundary facet of `mesh` according to the shape's boundary rule.
pub fn tag_boundary(mut mesh: Mesh, shape: &DomainShape) -> Result<Mesh> {
    let segments = shape.segments()?;
    let mut names: Vec<String> = Vec::new();
    let mut intern = |name: &str| -> u8 {
        match names.iter().position(|n| n == name) {
            Some(i) => i as u8,
            None => {
                names.push(name.to_string());
                (names.len() - 1) as u8
            }
        }
    };
    let mut tags = vec![None; mesh.facets.len()];
    for f in 0..mesh.facets.len() {
        if !mesh.facets[f].is_boundary() {
            continue;
        }
        let mid = mesh.facet_midpoint(f);
        let label = if shape.boundary == BoundaryRule::Sides {
            let n = mesh.outward_normal(mesh.facets[f].owner, f);
            Some(if n[0] < -0.5 {
                "left"
            } else if n[0] > 0.5 {
                "right"
            } else if n[1] < -0.5 {
                "bottom"
            } else {
                "top"
            })
        } else {
            segments.iter().find(|(_, s)| s.contains(mid)).map(|(name, _)| *name)
        };
        match label {
            Some(name) => tags[f] = Some(intern(name)),
            None => return Err(Error::UntaggableFacet { facet: f, x: mid[0], y: mid[1] }),
        }
    }
    mesh.facet_tags = tags;
    mesh.tag_names = names;
    Ok(mesh)
}
