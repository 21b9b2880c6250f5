//! Mixed graphs: a directed (causal) part plus bidirected edges marking
//! correlated noise. The edge sets double as the zero-patterns of the model
//! matrices. Vertices are 0-based here; the classical SEM literature counts
//! from 1.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cycle detected in the directed part")]
    CycleDetected,
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid edge ({0}, {1}) for a graph on {2} vertices")]
    InvalidEdge(usize, usize, usize),
    #[error("drop probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
}

/// A mixed graph on `n` vertices. Directed edges are ordered pairs `(i, j)`;
/// bidirected edges are stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedGraph {
    n: usize,
    directed: BTreeSet<(usize, usize)>,
    bidirected: BTreeSet<(usize, usize)>,
}

impl MixedGraph {
    /// Validates index ranges and rejects self-loops. Bidirected pairs are
    /// normalized to `i < j`. Acyclicity of the directed part is checked by
    /// [`MixedGraph::topological_order`], not here.
    pub fn new(
        n: usize,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::InvalidSize("vertex count must be positive".into()));
        }
        let mut dir = BTreeSet::new();
        for (i, j) in directed {
            if i >= n || j >= n || i == j {
                return Err(GraphError::InvalidEdge(i, j, n));
            }
            dir.insert((i, j));
        }
        let mut bid = BTreeSet::new();
        for (i, j) in bidirected {
            if i >= n || j >= n || i == j {
                return Err(GraphError::InvalidEdge(i, j, n));
            }
            bid.insert((i.min(j), i.max(j)));
        }
        Ok(MixedGraph {
            n,
            directed: dir,
            bidirected: bid,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn directed(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    pub fn bidirected(&self) -> &BTreeSet<(usize, usize)> {
        &self.bidirected
    }

    pub fn has_directed(&self, i: usize, j: usize) -> bool {
        self.directed.contains(&(i, j))
    }

    /// True if `i -> j` or `j -> i` is present.
    pub fn has_directed_pair(&self, i: usize, j: usize) -> bool {
        self.directed.contains(&(i, j)) || self.directed.contains(&(j, i))
    }

    pub fn has_bidirected(&self, i: usize, j: usize) -> bool {
        self.bidirected.contains(&(i.min(j), i.max(j)))
    }

    /// Parents of `v` in the directed part, ascending.
    pub fn parents_of(&self, v: usize) -> Vec<usize> {
        self.directed
            .iter()
            .filter(|&&(_, j)| j == v)
            .map(|&(i, _)| i)
            .collect()
    }

    /// No vertex pair carries both a directed and a bidirected edge.
    pub fn is_bow_free(&self) -> bool {
        self.bidirected
            .iter()
            .all(|&(i, j)| !self.has_directed_pair(i, j))
    }

    /// True when the directed part is exactly the path `0 -> 1 -> ... -> n-1`.
    pub fn is_path(&self) -> bool {
        self.directed.len() == self.n - 1
            && (0..self.n - 1).all(|i| self.directed.contains(&(i, i + 1)))
    }

    /// Kahn's algorithm, smallest vertex first on ties, so the order is
    /// deterministic.
    pub fn topological_order(&self) -> Result<Vec<usize>, GraphError> {
        let mut indegree = vec![0usize; self.n];
        for &(_, j) in &self.directed {
            indegree[j] += 1;
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..self.n)
            .filter(|&v| indegree[v] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(v);
            for &(i, j) in self.directed.range((v, 0)..(v + 1, 0)) {
                debug_assert_eq!(i, v);
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(std::cmp::Reverse(j));
                }
            }
        }
        if order.len() == self.n {
            Ok(order)
        } else {
            Err(GraphError::CycleDetected)
        }
    }

    /// The bow-free path on `n >= 2` vertices: directed edges `(i, i+1)` and
    /// bidirected edges on every pair at distance two or more.
    pub fn path_graph(n: usize) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::InvalidSize(format!(
                "path graph needs at least 2 vertices, got {n}"
            )));
        }
        let directed: BTreeSet<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let bidirected = bowfree_complement(n, &directed);
        Ok(MixedGraph {
            n,
            directed,
            bidirected,
        })
    }

    /// Layered complete-bipartite family: `n/k` consecutive layers of width
    /// `k`, every vertex of one layer pointing to every vertex of the next,
    /// and bidirected edges on all remaining pairs. `k = 1` reduces to the
    /// path graph.
    pub fn clique_of_paths(n: usize, k: usize) -> Result<Self, GraphError> {
        if k == 0 || n == 0 || n % k != 0 {
            return Err(GraphError::InvalidSize(format!(
                "layer width {k} must be positive and divide {n}"
            )));
        }
        let layers = n / k;
        let mut directed = BTreeSet::new();
        for layer in 0..layers.saturating_sub(1) {
            for u in layer * k..(layer + 1) * k {
                for v in (layer + 1) * k..(layer + 2) * k {
                    directed.insert((u, v));
                }
            }
        }
        let bidirected = bowfree_complement(n, &directed);
        Ok(MixedGraph {
            n,
            directed,
            bidirected,
        })
    }

    /// Starts from [`MixedGraph::clique_of_paths`] and drops each directed
    /// edge independently with probability `p`; the bidirected set is
    /// recomputed as the bow-free complement of what survives.
    pub fn layered_graph<R: Rng + ?Sized>(
        n: usize,
        k: usize,
        p: f64,
        rng: &mut R,
    ) -> Result<Self, GraphError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(GraphError::InvalidProbability(p));
        }
        let base = Self::clique_of_paths(n, k)?;
        let directed: BTreeSet<_> = base
            .directed
            .iter()
            .copied()
            .filter(|_| rng.random_bool(1.0 - p))
            .collect();
        let bidirected = bowfree_complement(n, &directed);
        Ok(MixedGraph {
            n,
            directed,
            bidirected,
        })
    }
}

/// All unordered pairs not connected by a directed edge.
fn bowfree_complement(
    n: usize,
    directed: &BTreeSet<(usize, usize)>,
) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if !directed.contains(&(i, j)) && !directed.contains(&(j, i)) {
                out.insert((i, j));
            }
        }
    }
    out
}

// Wire format: {"n": ..., "directed": [[i,j],...], "bidirected": [[i,j],...]}
// with directed sorted lexicographically and bidirected pairs stored i < j.
#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    directed: Vec<(usize, usize)>,
    bidirected: Vec<(usize, usize)>,
}

impl Serialize for MixedGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphRepr {
            n: self.n,
            directed: self.directed.iter().copied().collect(),
            bidirected: self.bidirected.iter().copied().collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MixedGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = GraphRepr::deserialize(deserializer)?;
        MixedGraph::new(repr.n, repr.directed, repr.bidirected)
            .map_err(serde::de::Error::custom)
    }
}
