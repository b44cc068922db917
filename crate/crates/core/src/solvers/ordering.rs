//! Fill-reducing symmetric ordering by recursive level-structure bisection.

use std::collections::VecDeque;

use super::sparse::CsrMatrix;

const LEAF_SIZE: usize = 64;

/// Adjacency of the pattern of `A + Aᵀ` between representatives `rep[i]`,
/// without self loops and without the vertices flagged in `dense`.
struct Graph {
    ptr: Vec<usize>,
    adj: Vec<usize>,
}

impl Graph {
    fn from_matrix(a: &CsrMatrix, dense: &[bool], rep: &[usize]) -> Self {
        let n = a.nrows();
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for &j in a.row(i).0 {
                let (ri, rj) = (rep[i], rep[j]);
                if ri != rj && !dense[i] && !dense[j] {
                    lists[ri].push(rj);
                    lists[rj].push(ri);
                }
            }
        }
        let mut ptr = Vec::with_capacity(n + 1);
        let mut adj = Vec::new();
        ptr.push(0);
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            adj.extend(l);
            ptr.push(adj.len());
        }
        Self { ptr, adj }
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.ptr[v]..self.ptr[v + 1]]
    }
}

struct Dissection<'a> {
    graph: &'a Graph,
    late: &'a [bool],
    /// Zero-diagonal vertex eliminated right after its partner.
    attached: &'a [Option<usize>],
    /// Current part id per vertex; vertices outside the active set differ.
    part: Vec<usize>,
    level: Vec<usize>,
    next_part: usize,
    order: Vec<usize>,
}

impl Dissection<'_> {
    /// BFS from `root` inside part `p`; returns vertices in visit order.
    fn bfs(&mut self, root: usize, p: usize) -> Vec<usize> {
        let mut seen = Vec::new();
        let mut queue = VecDeque::new();
        self.level[root] = 0;
        let marker = usize::MAX;
        self.part[root] = marker;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            seen.push(v);
            for &w in self.graph.neighbors(v) {
                if self.part[w] == p {
                    self.part[w] = marker;
                    self.level[w] = self.level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        for &v in &seen {
            self.part[v] = p;
        }
        seen
    }

    fn emit(&mut self, mut vertices: Vec<usize>) {
        // Rows with a zero diagonal go last so earlier eliminations fill them in.
        vertices.sort_by_key(|&v| (self.late[v], v));
        for v in vertices {
            self.order.push(v);
            if let Some(w) = self.attached[v] {
                self.order.push(w);
            }
        }
    }

    fn relabel(&mut self, vertices: &[usize]) -> usize {
        let p = self.next_part;
        self.next_part += 1;
        for &v in vertices {
            self.part[v] = p;
        }
        p
    }

    fn dissect(&mut self, vertices: Vec<usize>) {
        let mut pending_separators: Vec<(usize, Vec<usize>)> = Vec::new();
        // Iterative post-order: a separator is emitted after both halves.
        let mut tasks: Vec<Task> = vec![Task::Split(vertices)];
        while let Some(task) = tasks.pop() {
            match task {
                Task::Emit(id) => {
                    let pos = pending_separators.iter().position(|(i, _)| *i == id).expect("separator");
                    let (_, sep) = pending_separators.swap_remove(pos);
                    self.emit(sep);
                }
                Task::Split(vertices) => {
                    if vertices.len() <= LEAF_SIZE {
                        self.emit(vertices);
                        continue;
                    }
                    let p = self.relabel(&vertices);
                    let start = *vertices.iter().min().expect("non-empty");
                    let reached = self.bfs(start, p);
                    if reached.len() < vertices.len() {
                        // Disconnected: split off the reached component.
                        let in_reached: std::collections::HashSet<usize> = reached.iter().copied().collect();
                        let rest: Vec<usize> = vertices.iter().copied().filter(|v| !in_reached.contains(v)).collect();
                        let mut reached = reached;
                        reached.sort_unstable();
                        tasks.push(Task::Split(rest));
                        tasks.push(Task::Split(reached));
                        continue;
                    }
                    // Pseudo-peripheral root: repeat BFS from the farthest vertex.
                    let mut root = *reached.last().expect("non-empty");
                    let mut depth = self.level[root];
                    for _ in 0..4 {
                        let far = *self.bfs(root, p).last().expect("non-empty");
                        if self.level[far] <= depth {
                            break;
                        }
                        depth = self.level[far];
                        root = far;
                    }
                    let reached = self.bfs(root, p);
                    let max_level = reached.iter().map(|&v| self.level[v]).max().unwrap_or(0);
                    if max_level < 2 {
                        self.emit(vertices);
                        continue;
                    }
                    let mut counts = vec![0usize; max_level + 1];
                    for &v in &reached {
                        counts[self.level[v]] += 1;
                    }
                    // Smallest level whose removal leaves both sides within 30-70%.
                    let total = reached.len();
                    let mut below = 0;
                    let mut sep_level = 0;
                    let mut best = usize::MAX;
                    let mut median = 1;
                    for (l, &c) in counts.iter().enumerate() {
                        if below < total / 2 {
                            median = l;
                        }
                        let above = total - below - c;
                        if l >= 1 && l < max_level && 10 * below >= 3 * total && 10 * above >= 3 * total && c < best {
                            best = c;
                            sep_level = l;
                        }
                        below += c;
                    }
                    if sep_level == 0 {
                        sep_level = median.clamp(1, max_level - 1);
                    }
                    let (mut left, mut right, mut sep) = (Vec::new(), Vec::new(), Vec::new());
                    for &v in &reached {
                        match self.level[v].cmp(&sep_level) {
                            std::cmp::Ordering::Less => left.push(v),
                            std::cmp::Ordering::Equal => sep.push(v),
                            std::cmp::Ordering::Greater => right.push(v),
                        }
                    }
                    left.sort_unstable();
                    right.sort_unstable();
                    let id = self.next_part;
                    self.next_part += 1;
                    pending_separators.push((id, sep));
                    tasks.push(Task::Emit(id));
                    tasks.push(Task::Split(right));
                    tasks.push(Task::Split(left));
                }
            }
        }
    }
}

enum Task {
    Split(Vec<usize>),
    Emit(usize),
}

/// Elimination order `perm` (position -> vertex) for the symmetric pattern of `a`.
///
/// Rows much denser than average (such as a mean-value constraint) would
/// collapse every level structure, so they are left out of the graph and
/// eliminated last.
pub fn nested_dissection(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut degree = vec![0usize; n];
    for i in 0..n {
        for &j in a.row(i).0 {
            if i != j {
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    let limit = (10.0 * (n as f64).sqrt()).max(16.0 * degree.iter().sum::<usize>() as f64 / n.max(1) as f64) as usize;
    let dense: Vec<bool> = degree.iter().map(|&d| d > limit.max(32)).collect();
    let late: Vec<bool> = (0..n).map(|i| a.get(i, i) == 0.0).collect();

    // Pair each zero-diagonal vertex with a free neighbour of nonzero
    // diagonal, so its pivot is filled in by the time it is eliminated.
    let mut rep: Vec<usize> = (0..n).collect();
    let mut attached: Vec<Option<usize>> = vec![None; n];
    for v in 0..n {
        if !late[v] || dense[v] {
            continue;
        }
        let (cols, vals) = a.row(v);
        let mut partner = None;
        let mut best = 0.0;
        for (&w, &b) in cols.iter().zip(vals) {
            if w == v || late[w] || dense[w] || rep[w] != w || attached[w].is_some() {
                continue;
            }
            // Size of the pivot left behind after eliminating `w`.
            let gain = b * b / a.get(w, w).abs();
            if gain > best {
                best = gain;
                partner = Some(w);
            }
        }
        if let Some(w) = partner {
            rep[v] = w;
            attached[w] = Some(v);
        }
    }
    let graph = Graph::from_matrix(a, &dense, &rep);
    let mut d = Dissection {
        graph: &graph,
        late: &late,
        attached: &attached,
        part: vec![0; n],
        level: vec![0; n],
        next_part: 1,
        order: Vec::with_capacity(n),
    };
    let sparse: Vec<usize> = (0..n).filter(|&i| !dense[i] && rep[i] == i).collect();
    if !sparse.is_empty() {
        d.dissect(sparse);
    }
    d.order.extend((0..n).filter(|&i| dense[i]));
    debug_assert_eq!(d.order.len(), n);
    d.order
}
