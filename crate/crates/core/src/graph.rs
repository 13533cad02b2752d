//! Undirected simple graphs, synthetic topology generators and SNAP-style
//! edge-list ingestion.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Immutable undirected graph without self-loops or parallel edges.
///
/// Neighbor lists are kept sorted so that iteration order, and therefore every
/// simulation that walks them, is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph on `node_count` nodes. Self-loops are dropped and
    /// duplicate or reciprocal pairs collapse into a single edge.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        if node_count == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::NodeOutOfRange {
                    node: u.max(v),
                    node_count,
                });
            }
            if u == v {
                continue;
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut twice = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            twice += list.len();
        }
        Ok(Self {
            adjacency,
            edge_count: twice / 2,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().copied().filter(move |&v| u < v).map(move |v| (u, v)))
    }

    /// Weight `1/|N(v)|` with which each neighbor influences `v`.
    pub fn influence_weight(&self, target: NodeId) -> Result<f64> {
        match self.degree(target) {
            0 => Err(Error::IsolatedNode(target)),
            d => Ok(1.0 / d as f64),
        }
    }

    /// Full scan of the symmetry, loop-free and duplicate-free invariants.
    pub fn check_invariants(&self) -> bool {
        let mut twice = 0;
        for (v, ns) in self.adjacency.iter().enumerate() {
            twice += ns.len();
            if ns.windows(2).any(|w| w[0] >= w[1]) {
                return false;
            }
            for &u in ns {
                if u == v || u >= self.node_count() || !self.has_edge(u, v) {
                    return false;
                }
            }
        }
        twice == 2 * self.edge_count
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Mean local clustering coefficient; nodes of degree < 2 count as 0.
    pub fn average_clustering(&self) -> f64 {
        let n = self.node_count();
        let total: f64 = (0..n)
            .map(|v| {
                let ns = self.neighbors(v);
                let d = ns.len();
                if d < 2 {
                    return 0.0;
                }
                let mut links = 0usize;
                for (a, &x) in ns.iter().enumerate() {
                    for &y in &ns[a + 1..] {
                        if self.has_edge(x, y) {
                            links += 1;
                        }
                    }
                }
                2.0 * links as f64 / (d * (d - 1)) as f64
            })
            .sum();
        total / n as f64
    }

    /// Writes the graph as a SNAP-compatible edge list, one `u\tv` line per
    /// undirected edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# Undirected graph: {} nodes, {} edges",
            self.node_count(),
            self.edge_count()
        )?;
        writeln!(out, "# FromNodeId\tToNodeId")?;
        for (u, v) in self.edges() {
            writeln!(out, "{u}\t{v}")?;
        }
        Ok(())
    }
}

/// Parses a whitespace-separated edge list. Lines starting with `#` are
/// comments. Raw ids are remapped in ascending order onto `0..n`.
///
/// Nodes left without any edge after self-loop removal are dropped unless
/// `keep_isolated` is set.
pub fn load_edge_list<R: BufRead>(reader: R, keep_isolated: bool) -> Result<Graph> {
    let mut raw_edges = Vec::new();
    let mut ids = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut next_id = || -> Result<u64> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected two node ids".into(),
            })?;
            tok.parse::<u64>().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("invalid node id {tok:?}"),
            })
        };
        let a = next_id()?;
        let b = next_id()?;
        if keep_isolated || a != b {
            ids.insert(a, 0usize);
            ids.insert(b, 0usize);
        }
        if a != b {
            raw_edges.push((a, b));
        }
    }
    if ids.is_empty() {
        return Err(Error::EmptyGraph);
    }
    for (dense, slot) in ids.values_mut().enumerate() {
        *slot = dense;
    }
    Graph::from_edges(ids.len(), raw_edges.into_iter().map(|(a, b)| (ids[&a], ids[&b])))
}

/// Preferential attachment growth with one link per arriving node.
///
/// Starts from the single edge 0-1. Node `t` attaches to an existing node
/// chosen with probability proportional to its degree.
pub fn generate_preferential_attachment<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "preferential attachment needs n >= 2, got {n}"
        )));
    }
    // Edge endpoints: node v appears degree(v) times.
    let mut urn: Vec<NodeId> = Vec::with_capacity(2 * n);
    urn.extend_from_slice(&[0, 1]);
    let mut edges = Vec::with_capacity(n - 1);
    edges.push((0, 1));
    for t in 2..n {
        let target = urn[rng.gen_range(0..urn.len())];
        edges.push((t, target));
        urn.push(t);
        urn.push(target);
    }
    Graph::from_edges(n, edges)
}

/// Ring lattice where node `i` links to `i+1` and `i+2`, followed by
/// Watts-Strogatz rewiring of each edge's far endpoint with probability
/// `p_rewire`. The edge count stays at `2n`.
pub fn generate_small_world<R: Rng + ?Sized>(n: usize, p_rewire: f64, rng: &mut R) -> Result<Graph> {
    if n < 5 {
        return Err(Error::InvalidParameter(format!("small world needs n >= 5, got {n}")));
    }
    if !(0.0..=1.0).contains(&p_rewire) {
        return Err(Error::InvalidParameter(format!(
            "rewiring probability {p_rewire} outside [0, 1]"
        )));
    }
    let mut edges: Vec<(NodeId, NodeId)> = (0..n).flat_map(|i| [(i, (i + 1) % n), (i, (i + 2) % n)]).collect();
    let mut present: HashSet<(NodeId, NodeId)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let mut degree = vec![4usize; n];

    for edge in edges.iter_mut() {
        if rng.gen::<f64>() >= p_rewire {
            continue;
        }
        let (u, old) = *edge;
        if degree[u] >= n - 1 {
            continue;
        }
        let w = loop {
            let w = rng.gen_range(0..n);
            if w != u && !present.contains(&(u.min(w), u.max(w))) {
                break w;
            }
        };
        present.remove(&(u.min(old), u.max(old)));
        present.insert((u.min(w), u.max(w)));
        degree[old] -= 1;
        degree[w] += 1;
        *edge = (u, w);
    }
    Graph::from_edges(n, edges)
}

/// Spatially clustered network: nodes placed uniformly in the unit square,
/// then a uniformly chosen node repeatedly links to its nearest unconnected
/// node until the edge count reaches `round(n * avg_degree / 2)`.
///
/// Distance ties go to the lower node id.
pub fn generate_spatially_clustered<R: Rng + ?Sized>(n: usize, avg_degree: f64, rng: &mut R) -> Result<Graph> {
    if avg_degree.is_nan() || avg_degree < 0.0 || avg_degree > (n as f64 - 1.0) || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "average degree {avg_degree} infeasible for {n} nodes"
        )));
    }
    let target = (n as f64 * avg_degree / 2.0).round() as usize;
    let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let dist2 = |a: NodeId, b: NodeId| {
        let dx = points[a].0 - points[b].0;
        let dy = points[a].1 - points[b].1;
        dx * dx + dy * dy
    };
    let nearest: Vec<Vec<NodeId>> = (0..n)
        .map(|v| {
            let mut others: Vec<NodeId> = (0..n).filter(|&u| u != v).collect();
            others.sort_by(|&a, &b| dist2(v, a).total_cmp(&dist2(v, b)).then(a.cmp(&b)));
            others
        })
        .collect();
    let mut cursor = vec![0usize; n];
    let mut present: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(target);
    let mut open: Vec<NodeId> = (0..n).collect();
    let mut edges = Vec::with_capacity(target);

    while edges.len() < target {
        let slot = rng.gen_range(0..open.len());
        let v = open[slot];
        let list = &nearest[v];
        while cursor[v] < list.len() && present.contains(&key(v, list[cursor[v]])) {
            cursor[v] += 1;
        }
        if cursor[v] == list.len() {
            open.swap_remove(slot);
            continue;
        }
        let u = list[cursor[v]];
        present.insert(key(u, v));
        edges.push((u, v));
    }
    Graph::from_edges(n, edges)
}

#[inline]
fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

/// Erdős–Rényi G(n, m) graph with exactly `m` edges.
pub fn generate_uniform_random<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Graph> {
    if n < 2 || m > n * (n - 1) / 2 {
        return Err(Error::InvalidParameter(format!("cannot place {m} edges on {n} nodes")));
    }
    let mut present = HashSet::with_capacity(m);
    while present.len() < m {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            present.insert(key(a, b));
        }
    }
    let mut edges: Vec<_> = present.into_iter().collect();
    edges.sort_unstable();
    edges.shuffle(rng);
    Graph::from_edges(n, edges)
}
