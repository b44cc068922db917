//! Element partitions, overlap layers, restriction index sets and Boolean
//! partition-of-unity weights.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::discretization::Space;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionMethod {
    /// `a × b` blocks of the bounding box, binned by centroid.
    UniformGrid,
    /// Recursive coordinate bisection with connectivity repair and boundary smoothing.
    Graph,
}

impl fmt::Display for PartitionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UniformGrid => "uniform",
            Self::Graph => "graph",
        })
    }
}

impl FromStr for PartitionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_grid" | "unif" => Ok(Self::UniformGrid),
            "graph" => Ok(Self::Graph),
            other => Err(Error::Config(format!("unknown partition method `{other}`"))),
        }
    }
}

/// Largest allowed ratio of the biggest to the smallest part for [`PartitionMethod::Graph`].
pub const BALANCE_BAND: f64 = 1.3;

pub fn partition_elements(mesh: &Mesh, n: usize, method: PartitionMethod) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Partition("need at least one subdomain".into()));
    }
    if n > mesh.num_triangles() {
        return Err(Error::Partition(format!("{n} subdomains for {} triangles", mesh.num_triangles())));
    }
    if n == 1 {
        return Ok(vec![0; mesh.num_triangles()]);
    }
    match method {
        PartitionMethod::UniformGrid => uniform_grid(mesh, n),
        PartitionMethod::Graph => graph_partition(mesh, n),
    }
}

fn bounding_box(mesh: &Mesh) -> [f64; 4] {
    mesh.vertices.iter().fold([f64::MAX, f64::MAX, f64::MIN, f64::MIN], |b, p| {
        [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])]
    })
}

fn uniform_grid(mesh: &Mesh, n: usize) -> Result<Vec<usize>> {
    let [x0, y0, x1, y1] = bounding_box(mesh);
    let aspect = (x1 - x0) / (y1 - y0);
    // Grid a × b closest to the aspect ratio of the bounding box.
    let a = (1..=n)
        .filter(|a| n % a == 0)
        .min_by(|&p, &q| {
            let d = |a: usize| ((a * a) as f64 / n as f64 / aspect).ln().abs();
            d(p).total_cmp(&d(q)).then(q.cmp(&p))
        })
        .expect("n >= 1");
    let b = n / a;
    let owner: Vec<usize> = (0..mesh.num_triangles())
        .map(|t| {
            let c = mesh.centroid(t);
            let i = (((c[0] - x0) / (x1 - x0)) * a as f64).floor().clamp(0.0, (a - 1) as f64) as usize;
            let j = (((c[1] - y0) / (y1 - y0)) * b as f64).floor().clamp(0.0, (b - 1) as f64) as usize;
            j * a + i
        })
        .collect();
    let counts = part_sizes(&owner, n);
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Partition(format!("uniform {a}x{b} grid leaves block {empty} without triangles")));
    }
    Ok(owner)
}

fn part_sizes(owner: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &p in owner {
        counts[p] += 1;
    }
    counts
}

/// Triangles sharing an edge with `t`.
fn edge_neighbors(mesh: &Mesh, t: usize) -> impl Iterator<Item = usize> + '_ {
    mesh.triangle_facets[t].iter().filter_map(move |&f| mesh.facets[f].other(t))
}

fn graph_partition(mesh: &Mesh, n: usize) -> Result<Vec<usize>> {
    let nt = mesh.num_triangles();
    let centroids: Vec<[f64; 2]> = (0..nt).map(|t| mesh.centroid(t)).collect();
    let mut owner = vec![0usize; nt];
    // (elements, first part id, part count)
    let mut stack = vec![((0..nt).collect::<Vec<_>>(), 0usize, n)];
    while let Some((mut elems, first, parts)) = stack.pop() {
        if parts == 1 {
            for t in elems {
                owner[t] = first;
            }
            continue;
        }
        let extent = |axis: usize| {
            let (lo, hi) = elems.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &t| {
                (lo.min(centroids[t][axis]), hi.max(centroids[t][axis]))
            });
            hi - lo
        };
        let axis = if extent(0) >= extent(1) { 0 } else { 1 };
        let other = 1 - axis;
        elems.sort_by(|&p, &q| {
            centroids[p][axis]
                .total_cmp(&centroids[q][axis])
                .then(centroids[p][other].total_cmp(&centroids[q][other]))
                .then(p.cmp(&q))
        });
        let left_parts = parts / 2;
        let cut = elems.len() * left_parts / parts;
        let right = elems.split_off(cut);
        stack.push((right, first + left_parts, parts - left_parts));
        stack.push((elems, first, left_parts));
    }
    repair_connectivity(mesh, &mut owner, n);
    rebalance(mesh, &mut owner, n);
    smooth_boundaries(mesh, &mut owner, n);
    let counts = part_sizes(&owner, n);
    let (min, max) = (*counts.iter().min().expect("n >= 1"), *counts.iter().max().expect("n >= 1"));
    if min == 0 || max as f64 > BALANCE_BAND * min as f64 {
        return Err(Error::Partition(format!("graph partition out of balance: sizes {min}..{max}")));
    }
    Ok(owner)
}

/// Edge-connected components of part `p`, largest first.
fn components(mesh: &Mesh, owner: &[usize], p: usize) -> Vec<Vec<usize>> {
    let nt = owner.len();
    let mut seen = vec![false; nt];
    let mut comps = Vec::new();
    for start in 0..nt {
        if owner[start] != p || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut head = 0;
        while head < comp.len() {
            let t = comp[head];
            head += 1;
            for nb in edge_neighbors(mesh, t) {
                if owner[nb] == p && !seen[nb] {
                    seen[nb] = true;
                    comp.push(nb);
                }
            }
        }
        comps.push(comp);
    }
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    comps
}

/// Hands every detached fragment to the neighbouring part it shares most edges with.
fn repair_connectivity(mesh: &Mesh, owner: &mut [usize], n: usize) {
    for _sweep in 0..4 {
        let mut changed = false;
        for p in 0..n {
            for frag in components(mesh, owner, p).into_iter().skip(1) {
                let mut shared = vec![0usize; n];
                for &t in &frag {
                    for nb in edge_neighbors(mesh, t) {
                        if owner[nb] != p {
                            shared[owner[nb]] += 1;
                        }
                    }
                }
                if let Some(target) = (0..n).filter(|&q| shared[q] > 0).max_by_key(|&q| (shared[q], std::cmp::Reverse(q))) {
                    for &t in &frag {
                        owner[t] = target;
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Whether removing `t` from its part keeps the part connected, judged
/// locally: its same-part edge neighbours must be linked through the
/// same-part triangles of its vertex star.
fn removable(mesh: &Mesh, owner: &[usize], vt: &[Vec<usize>], t: usize) -> bool {
    let p = owner[t];
    let targets: Vec<usize> = edge_neighbors(mesh, t).filter(|&nb| owner[nb] == p).collect();
    if targets.len() <= 1 {
        return !targets.is_empty();
    }
    let mut star: Vec<usize> = mesh.triangles[t].iter().flat_map(|&v| vt[v].iter().copied()).filter(|&s| s != t && owner[s] == p).collect();
    star.sort_unstable();
    star.dedup();
    let mut reached = vec![targets[0]];
    let mut head = 0;
    while head < reached.len() {
        let s = reached[head];
        head += 1;
        for nb in edge_neighbors(mesh, s) {
            if star.binary_search(&nb).is_ok() && !reached.contains(&nb) {
                reached.push(nb);
            }
        }
    }
    targets.iter().all(|x| reached.contains(x))
}

/// Moves boundary triangles from larger to smaller neighbouring parts until
/// no move reduces the imbalance. Every move lowers the sum of squared part
/// sizes, so the loop terminates.
fn rebalance(mesh: &Mesh, owner: &mut [usize], n: usize) {
    let vt = mesh.vertex_triangles();
    let mut counts = part_sizes(owner, n);
    for _sweep in 0..200 {
        let (lo, hi) = (*counts.iter().min().expect("n >= 1"), *counts.iter().max().expect("n >= 1"));
        if hi <= lo + 1 || (hi as f64) < 1.1 * lo as f64 {
            break;
        }
        let mut moved = false;
        for t in 0..owner.len() {
            let p = owner[t];
            let Some(q) = edge_neighbors(mesh, t)
                .map(|nb| owner[nb])
                .filter(|&q| q != p && counts[q] + 1 < counts[p])
                .min_by_key(|&q| (counts[q], q))
            else {
                continue;
            };
            if removable(mesh, owner, &vt, t) {
                owner[t] = q;
                counts[p] -= 1;
                counts[q] += 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Greedy pass moving triangles that stick out of their part into the part
/// holding most of their edge neighbours. A moved triangle has at most one
/// neighbour in its old part, so the old part stays connected.
fn smooth_boundaries(mesh: &Mesh, owner: &mut [usize], n: usize) {
    let mut counts = part_sizes(owner, n);
    for _sweep in 0..3 {
        let mut moved = false;
        for t in 0..owner.len() {
            let p = owner[t];
            let mut same = 0;
            let mut votes: Vec<(usize, usize)> = Vec::new();
            for nb in edge_neighbors(mesh, t) {
                let q = owner[nb];
                if q == p {
                    same += 1;
                } else if let Some(v) = votes.iter_mut().find(|v| v.0 == q) {
                    v.1 += 1;
                } else {
                    votes.push((q, 1));
                }
            }
            let Some(&(q, k)) = votes.iter().max_by_key(|v| (v.1, std::cmp::Reverse(v.0))) else {
                continue;
            };
            if same > 1 || k < 2 || counts[p] <= 1 {
                continue;
            }
            let (lo, hi) = {
                let mut c = counts.clone();
                c[p] -= 1;
                c[q] += 1;
                (*c.iter().min().expect("n >= 1"), *c.iter().max().expect("n >= 1"))
            };
            if hi as f64 <= BALANCE_BAND * lo as f64 {
                owner[t] = q;
                counts[p] -= 1;
                counts[q] += 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Overlapped element sets: `l` times, add every triangle sharing a vertex
/// with the current set.
pub fn expand_overlap(mesh: &Mesh, owner: &[usize], n: usize, l: usize) -> Vec<Vec<usize>> {
    let vt = mesh.vertex_triangles();
    let nt = mesh.num_triangles();
    (0..n)
        .map(|p| {
            let mut inside: Vec<bool> = owner.iter().map(|&o| o == p).collect();
            for _ in 0..l {
                let mut touched = vec![false; mesh.num_vertices()];
                for t in (0..nt).filter(|&t| inside[t]) {
                    for &v in &mesh.triangles[t] {
                        touched[v] = true;
                    }
                }
                for (v, ts) in vt.iter().enumerate() {
                    if touched[v] {
                        for &t in ts {
                            inside[t] = true;
                        }
                    }
                }
            }
            (0..nt).filter(|&t| inside[t]).collect()
        })
        .collect()
}

/// Ascending global dof sets `𝒩_i`: every dof of an overlapped element,
/// followed by the augmentation index `space.ndofs()` when `global_dim`
/// exceeds the space dimension.
pub fn build_restrictions(space: &Space, global_dim: usize, overlapped: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let nd = space.ndofs();
    overlapped
        .iter()
        .map(|elems| {
            let mut mark = vec![false; nd];
            for &t in elems {
                for &d in space.element_dofs(t) {
                    mark[d] = true;
                }
            }
            let mut dofs: Vec<usize> = (0..nd).filter(|&d| mark[d]).collect();
            dofs.extend(nd..global_dim);
            dofs
        })
        .collect()
}

/// Boolean weights: a dof belongs to the lowest subdomain whose own
/// (non-overlapped) elements carry it. Extra augmentation dofs belong to
/// subdomain 0.
pub fn build_partition_of_unity(
    space: &Space,
    global_dim: usize,
    owner: &[usize],
    dof_sets: &[Vec<usize>],
) -> Result<Vec<Vec<f64>>> {
    let nd = space.ndofs();
    let mut dof_owner = vec![usize::MAX; global_dim];
    for (t, &p) in owner.iter().enumerate() {
        for &d in space.element_dofs(t) {
            dof_owner[d] = dof_owner[d].min(p);
        }
    }
    for o in dof_owner.iter_mut().skip(nd) {
        *o = 0;
    }
    if let Some(d) = dof_owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::Partition(format!("dof {d} is carried by no element")));
    }
    Ok(dof_sets
        .iter()
        .enumerate()
        .map(|(i, dofs)| dofs.iter().map(|&d| if dof_owner[d] == i { 1.0 } else { 0.0 }).collect())
        .collect())
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub n_subdomains: usize,
    pub overlap: usize,
    pub method: PartitionMethod,
    pub element_owner: Vec<usize>,
    pub overlapped_elements: Vec<Vec<usize>>,
    pub dof_sets: Vec<Vec<usize>>,
    pub pu_weights: Vec<Vec<f64>>,
    pub global_dim: usize,
}

impl Decomposition {
    pub fn new(space: &Space, global_dim: usize, n: usize, method: PartitionMethod, overlap: usize) -> Result<Self> {
        let owner = partition_elements(&space.mesh, n, method)?;
        Self::from_owner(space, global_dim, owner, n, method, overlap)
    }

    pub fn from_owner(
        space: &Space,
        global_dim: usize,
        element_owner: Vec<usize>,
        n: usize,
        method: PartitionMethod,
        overlap: usize,
    ) -> Result<Self> {
        if element_owner.len() != space.mesh.num_triangles() {
            return Err(Error::Dimension { expected: space.mesh.num_triangles(), got: element_owner.len() });
        }
        if let Some(&bad) = element_owner.iter().find(|&&p| p >= n) {
            return Err(Error::Partition(format!("owner {bad} out of range for {n} subdomains")));
        }
        let overlapped_elements = expand_overlap(&space.mesh, &element_owner, n, overlap);
        if let Some(empty) = overlapped_elements.iter().position(|e| e.is_empty()) {
            return Err(Error::Partition(format!("subdomain {empty} is empty")));
        }
        let dof_sets = build_restrictions(space, global_dim, &overlapped_elements);
        let pu_weights = build_partition_of_unity(space, global_dim, &element_owner, &dof_sets)?;
        Ok(Self { n_subdomains: n, overlap, method, element_owner, overlapped_elements, dof_sets, pu_weights, global_dim })
    }

    /// `Σ R_iᵀ D_i R_i` accumulated in integers; its diagonal, since every
    /// term is diagonal.
    pub fn partition_of_unity_sum(&self) -> Vec<u32> {
        let mut sum = vec![0u32; self.global_dim];
        for (dofs, w) in self.dof_sets.iter().zip(&self.pu_weights) {
            for (&d, &x) in dofs.iter().zip(w) {
                sum[d] += x as u32;
            }
        }
        sum
    }

    /// Whether the partition of unity sums to the identity exactly.
    pub fn is_partition_of_unity(&self) -> bool {
        let integral = self.pu_weights.iter().flatten().all(|&w| w == 0.0 || w == 1.0);
        integral && self.partition_of_unity_sum().iter().all(|&s| s == 1)
    }

    pub fn subdomain_sizes(&self) -> Vec<usize> {
        part_sizes(&self.element_owner, self.n_subdomains)
    }

    /// `triangle,owner,cx,cy` rows.
    pub fn write_partition_csv<W: Write>(&self, mesh: &Mesh, mut w: W) -> std::io::Result<()> {
        writeln!(w, "triangle,owner,cx,cy")?;
        for (t, &p) in self.element_owner.iter().enumerate() {
            let c = mesh.centroid(t);
            writeln!(w, "{t},{p},{},{}", c[0], c[1])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_space, Scheme};
    use crate::mesh::{build_structured_mesh, BoundaryRule, DomainKind, DomainShape};
    use std::sync::Arc;

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(build_structured_mesh(&DomainShape::new(DomainKind::UnitSquare, BoundaryRule::Sides), n).unwrap())
    }

    fn lshape(n: usize) -> Arc<Mesh> {
        Arc::new(build_structured_mesh(&DomainShape::new(DomainKind::LShape, BoundaryRule::LShapeClamped), n).unwrap())
    }

    #[test]
    fn single_subdomain_owns_everything() {
        let mesh = square(4);
        let space = build_space(mesh.clone(), Scheme::TaylorHood, 2).unwrap();
        let d = Decomposition::new(&space, space.ndofs(), 1, PartitionMethod::Graph, 2).unwrap();
        assert!(d.element_owner.iter().all(|&p| p == 0));
        assert_eq!(d.dof_sets[0], (0..space.ndofs()).collect::<Vec<_>>());
        assert!(d.pu_weights[0].iter().all(|&w| w == 1.0));
    }

    #[test]
    fn uniform_quadrants() {
        let mesh = square(8);
        let owner = partition_elements(&mesh, 4, PartitionMethod::UniformGrid).unwrap();
        for (t, &p) in owner.iter().enumerate() {
            let c = mesh.centroid(t);
            let q = (c[0] > 0.5) as usize + 2 * (c[1] > 0.5) as usize;
            assert_eq!(p, q);
        }
        assert!(partition_elements(&lshape(4), 4, PartitionMethod::UniformGrid).is_err());
    }

    #[test]
    fn graph_partition_is_balanced_and_connected() {
        for mesh in [square(12), lshape(8)] {
            for n in [2, 3, 4, 5, 8, 16] {
                let owner = partition_elements(&mesh, n, PartitionMethod::Graph).unwrap();
                let sizes = part_sizes(&owner, n);
                let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
                assert!(hi as f64 <= BALANCE_BAND * lo as f64, "n={n}: {sizes:?}");
                for p in 0..n {
                    assert_eq!(components(&mesh, &owner, p).len(), 1, "part {p} of {n}");
                }
            }
        }
    }

    #[test]
    fn one_layer_adds_triangles_touching_the_interface() {
        let mesh = square(6);
        let owner = partition_elements(&mesh, 2, PartitionMethod::UniformGrid).unwrap();
        let over = expand_overlap(&mesh, &owner, 2, 1);
        for (t, _) in owner.iter().enumerate().filter(|&(_, &p)| p == 1) {
            let touches = mesh.triangles[t].iter().any(|&v| (mesh.vertices[v][0] - 0.5).abs() < 1e-12);
            assert_eq!(over[0].contains(&t), touches);
        }
        assert_eq!(expand_overlap(&mesh, &owner, 2, 0)[0], (0..owner.len()).filter(|&t| owner[t] == 0).collect::<Vec<_>>());
        assert_eq!(expand_overlap(&mesh, &owner, 2, 20)[1].len(), mesh.num_triangles());
    }

    #[test]
    fn overlap_is_monotone() {
        let mesh = lshape(6);
        let owner = partition_elements(&mesh, 4, PartitionMethod::Graph).unwrap();
        let layers: Vec<_> = (0..4).map(|l| expand_overlap(&mesh, &owner, 4, l)).collect();
        for w in layers.windows(2) {
            for p in 0..4 {
                assert!(w[0][p].iter().all(|t| w[1][p].contains(t)));
            }
        }
    }

    #[test]
    fn partition_of_unity_with_augmentation() {
        let mesh = square(6);
        for (scheme, k) in [(Scheme::TaylorHood, 2), (Scheme::Hdg, 1)] {
            let space = build_space(mesh.clone(), scheme, k).unwrap();
            let d = Decomposition::new(&space, space.ndofs() + 1, 4, PartitionMethod::UniformGrid, 1).unwrap();
            assert!(d.is_partition_of_unity());
            assert!(d.dof_sets.iter().all(|s| s.last() == Some(&space.ndofs())));
            assert!(d.dof_sets.iter().map(|s| s.len()).sum::<usize>() > space.ndofs() + 1);
        }
    }
}
