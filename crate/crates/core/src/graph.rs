//! Network families, adjacency structure and the Laplacian Hamiltonian `H = D - A`.
//!
//! Grid families use row-major indexing, `index = r * cols + c`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary identification for the rectangular grid families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// Column direction periodic, row direction open.
    Cylinder,
    /// Column direction periodic with a row flip at the seam, row direction open.
    Moebius,
    /// Both directions periodic.
    Torus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimpleKind {
    Line,
    Cycle,
    Star,
    Complete,
}

impl SimpleKind {
    fn min_nodes(self) -> usize {
        match self {
            SimpleKind::Cycle => 3,
            _ => 2,
        }
    }
}

/// Undirected simple graph with dense symmetric 0/1 adjacency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkGraph {
    n: usize,
    adjacency: Vec<bool>,
    degrees: Vec<usize>,
}

impl NetworkGraph {
    /// Build a graph from an undirected edge list. Self-loops and repeated
    /// edges are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut adjacency = vec![false; n * n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if adjacency[a * n + b] {
                return Err(Error::InvalidGraph(format!("repeated edge ({a}, {b})")));
            }
            adjacency[a * n + b] = true;
            adjacency[b * n + a] = true;
        }
        Ok(Self::from_adjacency_unchecked(n, adjacency))
    }

    fn from_adjacency_unchecked(n: usize, adjacency: Vec<bool>) -> Self {
        let degrees = (0..n)
            .map(|k| adjacency[k * n..(k + 1) * n].iter().filter(|&&x| x).count())
            .collect();
        NetworkGraph {
            n,
            adjacency,
            degrees,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn degree(&self, k: usize) -> usize {
        self.degrees[k]
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.n + b]
    }

    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.is_adjacent(k, j))
    }

    /// Undirected edges `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in a + 1..self.n {
                if self.is_adjacent(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.degrees.iter().sum::<usize>() / 2
    }

    /// Dense adjacency as a real matrix.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if self.is_adjacent(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// True when every node has the same degree.
    pub fn is_regular(&self) -> bool {
        self.degrees.windows(2).all(|w| w[0] == w[1])
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            for j in self.neighbors(k) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Edge list as CSV with header `src,dst`.
    pub fn edge_list_csv(&self) -> String {
        let mut out = String::from("src,dst\n");
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a},{b}");
        }
        out
    }
}

/// Cylinder, Möbius strip or torus on a `rows x cols` sheet.
pub fn build_grid_topology(rows: usize, cols: usize, kind: GridKind) -> Result<NetworkGraph> {
    if rows < 3 || cols < 3 {
        return Err(Error::InvalidGraph(format!(
            "grid dimensions must be at least 3x3, got {rows}x{cols}"
        )));
    }
    let idx = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols - 1 {
            edges.push((idx(r, c), idx(r, c + 1)));
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols {
            edges.push((idx(r, c), idx(r + 1, c)));
        }
    }
    match kind {
        GridKind::Cylinder => {
            for r in 0..rows {
                edges.push((idx(r, cols - 1), idx(r, 0)));
            }
        }
        GridKind::Moebius => {
            for r in 0..rows {
                edges.push((idx(r, cols - 1), idx(rows - 1 - r, 0)));
            }
        }
        GridKind::Torus => {
            for r in 0..rows {
                edges.push((idx(r, cols - 1), idx(r, 0)));
            }
            for c in 0..cols {
                edges.push((idx(rows - 1, c), idx(0, c)));
            }
        }
    }
    NetworkGraph::from_edges(rows * cols, &edges)
}

/// Line, cycle, star (hub at index 0) or complete graph on `n` nodes.
pub fn build_simple_topology(n: usize, kind: SimpleKind) -> Result<NetworkGraph> {
    if n < kind.min_nodes() {
        return Err(Error::InvalidGraph(format!(
            "{kind:?} needs at least {} nodes, got {n}",
            kind.min_nodes()
        )));
    }
    let edges: Vec<(usize, usize)> = match kind {
        SimpleKind::Line => (0..n - 1).map(|k| (k, k + 1)).collect(),
        SimpleKind::Cycle => (0..n).map(|k| (k, (k + 1) % n)).collect(),
        SimpleKind::Star => (1..n).map(|k| (0, k)).collect(),
        SimpleKind::Complete => (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .collect(),
    };
    NetworkGraph::from_edges(n, &edges)
}

/// Delete node `k`. Surviving nodes keep their relative order; the returned
/// map sends each original index to its new index (`None` for `k`).
pub fn remove_node(g: &NetworkGraph, k: usize) -> Result<(NetworkGraph, Vec<Option<usize>>)> {
    let n = g.n();
    if k >= n {
        return Err(Error::InvalidGraph(format!(
            "node {k} out of range for {n} nodes"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidGraph("cannot remove the only node".into()));
    }
    let map: Vec<Option<usize>> = (0..n)
        .map(|i| match i.cmp(&k) {
            std::cmp::Ordering::Less => Some(i),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(i - 1),
        })
        .collect();
    let m = n - 1;
    let mut adjacency = vec![false; m * m];
    for a in 0..n {
        for b in 0..n {
            if let (Some(na), Some(nb)) = (map[a], map[b]) {
                adjacency[na * m + nb] = g.is_adjacent(a, b);
            }
        }
    }
    let out = NetworkGraph::from_adjacency_unchecked(m, adjacency);
    if !out.is_connected() {
        return Err(Error::Disconnected(k));
    }
    Ok((out, map))
}

/// Laplacian Hamiltonian `H = D - A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    pub matrix: DMatrix<f64>,
}

impl Laplacian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn laplacian(g: &NetworkGraph) -> Laplacian {
    let n = g.n();
    let matrix = DMatrix::from_fn(n, n, |k, j| {
        if k == j {
            g.degree(k) as f64
        } else if g.is_adjacent(k, j) {
            -1.0
        } else {
            0.0
        }
    });
    Laplacian { matrix }
}

/// Graph description as it appears in run configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Original node indices to delete.
    #[serde(default)]
    pub defects: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cylinder,
    Moebius,
    Torus,
    Line,
    Cycle,
    Star,
    Complete,
}

/// A graph built from a [`GraphSpec`] together with the index map from the
/// undefected family to the built graph.
#[derive(Clone, Debug)]
pub struct BuiltGraph {
    pub graph: NetworkGraph,
    pub index_map: Vec<Option<usize>>,
}

impl BuiltGraph {
    /// New index of an original (pre-defect) node.
    pub fn node(&self, original: usize) -> Option<usize> {
        self.index_map.get(original).copied().flatten()
    }
}

impl GraphSpec {
    pub fn grid(family: Family, rows: usize, cols: usize) -> Self {
        GraphSpec {
            family,
            rows: Some(rows),
            cols: Some(cols),
            n: None,
            defects: Vec::new(),
        }
    }

    pub fn simple(family: Family, n: usize) -> Self {
        GraphSpec {
            family,
            rows: None,
            cols: None,
            n: Some(n),
            defects: Vec::new(),
        }
    }

    pub fn with_defects(mut self, defects: Vec<usize>) -> Self {
        self.defects = defects;
        self
    }

    pub fn build(&self) -> Result<BuiltGraph> {
        let base = match self.family {
            Family::Cylinder | Family::Moebius | Family::Torus => {
                let (rows, cols) = match (self.rows, self.cols) {
                    (Some(r), Some(c)) => (r, c),
                    _ => {
                        return Err(Error::InvalidGraph(format!(
                            "{:?} requires `rows` and `cols`",
                            self.family
                        )))
                    }
                };
                let kind = match self.family {
                    Family::Cylinder => GridKind::Cylinder,
                    Family::Moebius => GridKind::Moebius,
                    _ => GridKind::Torus,
                };
                build_grid_topology(rows, cols, kind)?
            }
            Family::Line | Family::Cycle | Family::Star | Family::Complete => {
                let n = self.n.ok_or_else(|| {
                    Error::InvalidGraph(format!("{:?} requires `n`", self.family))
                })?;
                let kind = match self.family {
                    Family::Line => SimpleKind::Line,
                    Family::Cycle => SimpleKind::Cycle,
                    Family::Star => SimpleKind::Star,
                    _ => SimpleKind::Complete,
                };
                build_simple_topology(n, kind)?
            }
        };
        let mut index_map: Vec<Option<usize>> = (0..base.n()).map(Some).collect();
        let mut graph = base;
        for &d in &self.defects {
            let current = index_map.get(d).copied().flatten().ok_or_else(|| {
                Error::InvalidGraph(format!("defect {d} is out of range or already removed"))
            })?;
            let (next, step) = remove_node(&graph, current)?;
            for slot in index_map.iter_mut() {
                *slot = slot.and_then(|i| step[i]);
            }
            graph = next;
        }
        Ok(BuiltGraph { graph, index_map })
    }
}
