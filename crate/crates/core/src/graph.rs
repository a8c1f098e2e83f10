//! Random DAG generation and basic graph utilities.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A directed acyclic graph over `d` nodes. Entry `(j, i)` of the adjacency
/// matrix set to 1 means the edge `X_j -> X_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    d: usize,
    adj: Array2<u8>,
}

impl Dag {
    /// Builds a DAG from a 0/1 adjacency matrix, verifying shape, zero
    /// diagonal, and acyclicity.
    pub fn from_adjacency(adj: Array2<u8>) -> Result<Self> {
        let d = adj.nrows();
        if adj.ncols() != d {
            return Err(Error::dims(format!(
                "adjacency must be square, got {}x{}",
                adj.nrows(),
                adj.ncols()
            )));
        }
        for i in 0..d {
            if adj[[i, i]] != 0 {
                return Err(Error::invalid(format!("nonzero diagonal at node {i}")));
            }
        }
        if !is_acyclic_u8(&adj) {
            return Err(Error::invalid("adjacency contains a directed cycle"));
        }
        Ok(Dag { d, adj })
    }

    pub fn empty(d: usize) -> Self {
        Dag {
            d,
            adj: Array2::zeros((d, d)),
        }
    }

    /// Convenience constructor from an edge list.
    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Array2::zeros((d, d));
        for &(s, t) in edges {
            if s >= d || t >= d {
                return Err(Error::invalid(format!("edge ({s},{t}) out of range for d={d}")));
            }
            adj[[s, t]] = 1;
        }
        Dag::from_adjacency(adj)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn adjacency(&self) -> &Array2<u8> {
        &self.adj
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adj[[from, to]] != 0
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&v| v != 0).count()
    }

    /// Edges as `(source, target)` pairs in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for s in 0..self.d {
            for t in 0..self.d {
                if self.adj[[s, t]] != 0 {
                    out.push((s, t));
                }
            }
        }
        out
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.adj[[j, node]] != 0).collect()
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.adj[[node, j]] != 0).collect()
    }

    /// A topological order (sources first). Always succeeds for a `Dag`.
    pub fn topological_order(&self) -> Vec<usize> {
        topological_order_u8(&self.adj).expect("Dag invariant guarantees acyclicity")
    }

    /// Set of nodes reachable from `node` by directed paths (excludes `node`
    /// itself unless it lies on a cycle, which a `Dag` rules out).
    pub fn descendants(&self, node: usize) -> Vec<bool> {
        let mut seen = vec![false; self.d];
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            for c in 0..self.d {
                if self.adj[[v, c]] != 0 && !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        seen
    }
}

/// Random-graph family used by the simulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    /// Erdős–Rényi: each node pair included independently.
    Er,
    /// Scale-free: preferential attachment.
    Sf,
}

/// Graph model with an expected-edge multiplier: roughly `k * d` edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphModel {
    pub kind: GraphKind,
    pub k: usize,
}

impl GraphModel {
    pub fn new(kind: GraphKind, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("graph model requires k >= 1"));
        }
        Ok(GraphModel { kind, k })
    }
}

/// Samples a random DAG with roughly `k*d` expected edges.
///
/// ER: a uniform random node permutation fixes the orientation; each
/// unordered pair is included independently with probability `2k/(d-1)`, so
/// the expected edge count is `k*d`. SF: preferential attachment seeded with
/// an acyclically oriented k-clique; each new node attaches to `k` distinct
/// existing nodes chosen proportionally to degree + 1, edges oriented
/// existing -> new, and the node labels are finally shuffled by a random
/// permutation.
pub fn sample_dag(model: GraphModel, d: usize, seed: u64) -> Result<Dag> {
    if d < 2 {
        return Err(Error::invalid(format!("sample_dag requires d >= 2, got {d}")));
    }
    if model.k < 1 {
        return Err(Error::invalid("sample_dag requires k >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    match model.kind {
        GraphKind::Er => {
            let p = (2.0 * model.k as f64 / (d as f64 - 1.0)).min(1.0);
            let mut order: Vec<usize> = (0..d).collect();
            order.shuffle(&mut rng);
            // rank[v] = position of v in the permutation
            let mut rank = vec![0usize; d];
            for (pos, &v) in order.iter().enumerate() {
                rank[v] = pos;
            }
            let mut adj = Array2::zeros((d, d));
            for a in 0..d {
                for b in (a + 1)..d {
                    if rng.random::<f64>() < p {
                        let (s, t) = if rank[a] < rank[b] { (a, b) } else { (b, a) };
                        adj[[s, t]] = 1;
                    }
                }
            }
            Dag::from_adjacency(adj)
        }
        GraphKind::Sf => {
            let k = model.k;
            if k >= d {
                return Err(Error::invalid(format!(
                    "scale-free model requires k < d (k={k}, d={d})"
                )));
            }
            let mut adj: Array2<u8> = Array2::zeros((d, d));
            let mut degree = vec![0usize; d];
            // Seed clique on nodes 0..k, oriented low -> high.
            for s in 0..k {
                for t in (s + 1)..k {
                    adj[[s, t]] = 1;
                    degree[s] += 1;
                    degree[t] += 1;
                }
            }
            for new in k..d {
                let mut targets: Vec<usize> = Vec::with_capacity(k);
                for _ in 0..k {
                    let total: usize = (0..new)
                        .filter(|v| !targets.contains(v))
                        .map(|v| degree[v] + 1)
                        .sum();
                    let mut pick = rng.random_range(0..total);
                    let mut chosen = None;
                    for v in 0..new {
                        if targets.contains(&v) {
                            continue;
                        }
                        let w = degree[v] + 1;
                        if pick < w {
                            chosen = Some(v);
                            break;
                        }
                        pick -= w;
                    }
                    let v = chosen.expect("weighted pick lands inside total");
                    targets.push(v);
                }
                for &t in &targets {
                    adj[[t, new]] = 1;
                    degree[t] += 1;
                    degree[new] += 1;
                }
            }
            // Random relabeling removes the index bias of attachment order.
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut rng);
            let mut out = Array2::zeros((d, d));
            for s in 0..d {
                for t in 0..d {
                    if adj[[s, t]] != 0 {
                        out[[perm[s], perm[t]]] = 1;
                    }
                }
            }
            Dag::from_adjacency(out)
        }
    }
}

/// True iff the 0/1 matrix has no directed cycle, decided exactly by
/// iterated source removal. The diagonal participates: a self-loop is a cycle.
pub fn is_acyclic(adjacency: &Array2<u8>) -> Result<bool> {
    if adjacency.nrows() != adjacency.ncols() {
        return Err(Error::invalid(format!(
            "is_acyclic requires a square matrix, got {}x{}",
            adjacency.nrows(),
            adjacency.ncols()
        )));
    }
    Ok(is_acyclic_u8(adjacency))
}

fn is_acyclic_u8(adj: &Array2<u8>) -> bool {
    topological_order_u8(adj).is_some()
}

/// Kahn's algorithm; `None` when a cycle blocks progress.
fn topological_order_u8(adj: &Array2<u8>) -> Option<Vec<usize>> {
    let d = adj.nrows();
    let mut indeg = vec![0usize; d];
    for t in 0..d {
        for s in 0..d {
            if adj[[s, t]] != 0 {
                indeg[t] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = (0..d).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(d);
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        order.push(v);
        for t in 0..d {
            if adj[[v, t]] != 0 {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    queue.push(t);
                }
            }
        }
    }
    if order.len() == d {
        Some(order)
    } else {
        None
    }
}

/// On-disk graph document: node count, edge list, optional parallel weights.
/// Serialized as JSON; floats round-trip bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphFile {
    pub d: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl GraphFile {
    pub fn from_dag(dag: &Dag) -> Self {
        GraphFile {
            d: dag.d(),
            edges: dag.edges().into_iter().map(|(s, t)| [s, t]).collect(),
            weights: None,
        }
    }

    pub fn to_dag(&self) -> Result<Dag> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        Dag::from_edges(self.d, &edges)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
