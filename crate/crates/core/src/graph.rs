//! Scale-free network generation and shortest-path precomputation.
//!
//! A [`Network`] is immutable once built. Construction runs one breadth-first
//! search per node and stores two dense `N x N` tables of 16-bit entries:
//! hop distances, and the canonical next node toward every destination.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const UNREACHED: u16 = u16::MAX;
const MAX_NODES: usize = u16::MAX as usize;

/// Dense matrix of unweighted hop counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    hops: Vec<u16>,
}

impl DistanceMatrix {
    #[inline]
    pub fn get(&self, from: usize, to: usize) -> u16 {
        self.hops[from * self.n + to]
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn row(&self, from: usize) -> &[u16] {
        &self.hops[from * self.n..(from + 1) * self.n]
    }
}

/// Undirected, connected, simple graph with precomputed shortest-path data.
#[derive(Debug, Clone)]
pub struct Network {
    adjacency: Vec<Vec<usize>>,
    dist: DistanceMatrix,
    // toward[dest * n + v]: successor of v on the canonical path to dest.
    toward: Vec<u16>,
    hub: usize,
    seed: Option<u64>,
}

impl Network {
    /// Builds a network from an undirected edge list. Each edge may appear in
    /// either orientation but only once.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], seed: Option<u64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "network needs at least one node",
            });
        }
        if n > MAX_NODES {
            return Err(Error::TooManyNodes(n));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(Error::InvalidEdge(a, b));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for (v, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidEdge(v, w[0]));
            }
        }
        Self::from_adjacency(adjacency, seed)
    }

    fn from_adjacency(adjacency: Vec<Vec<usize>>, seed: Option<u64>) -> Result<Self> {
        let (dist, toward) = bfs_tables(&adjacency)?;
        let hub = (0..adjacency.len())
            .max_by_key(|&v| (adjacency[v].len(), core::cmp::Reverse(v)))
            .unwrap_or(0);
        Ok(Self {
            adjacency,
            dist,
            toward,
            hub,
            seed,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.iter().map(Vec::len)
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edge_count() as f64 / self.node_count() as f64
    }

    /// Lowest-index node of maximal degree.
    pub fn hub_index(&self) -> usize {
        self.hub
    }

    /// Seed the network was generated from, if any.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.dist
    }

    #[inline]
    pub fn distance(&self, from: usize, to: usize) -> u16 {
        self.dist.get(from, to)
    }

    /// Edges `(i, j)` with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Neighbors of `at` that lie one hop closer to `dest`.
    ///
    /// Panics if `at == dest`.
    pub fn shortest_next_hops(&self, at: usize, dest: usize) -> impl Iterator<Item = usize> + '_ {
        assert_ne!(at, dest, "no next hop from a node to itself");
        let target = self.distance(at, dest) - 1;
        self.adjacency[at]
            .iter()
            .copied()
            .filter(move |&l| self.distance(l, dest) == target)
    }

    /// Successor of `v` on the canonical shortest path to `dest`.
    #[inline]
    pub fn canonical_next(&self, v: usize, dest: usize) -> usize {
        self.toward[dest * self.node_count() + v] as usize
    }

    /// Iterator over the canonical shortest path from `from` to `dest`,
    /// both endpoints included.
    pub fn canonical_path_iter(&self, from: usize, dest: usize) -> CanonicalPath<'_> {
        CanonicalPath {
            net: self,
            next: Some(from),
            dest,
        }
    }

    /// The canonical shortest path from `from` to `dest`: the BFS tree rooted
    /// at `dest` with neighbors explored in ascending index order, read back
    /// from `from` through recorded parents.
    pub fn canonical_shortest_path(&self, from: usize, dest: usize) -> Vec<usize> {
        self.canonical_path_iter(from, dest).collect()
    }
}

pub struct CanonicalPath<'a> {
    net: &'a Network,
    next: Option<usize>,
    dest: usize,
}

impl Iterator for CanonicalPath<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let v = self.next?;
        self.next = (v != self.dest).then(|| self.net.canonical_next(v, self.dest));
        Some(v)
    }
}

/// BFS from every node. Returns the distance matrix and the canonical
/// successor table.
fn bfs_tables(adjacency: &[Vec<usize>]) -> Result<(DistanceMatrix, Vec<u16>)> {
    let n = adjacency.len();
    if n > MAX_NODES {
        return Err(Error::TooManyNodes(n));
    }
    let mut hops = vec![UNREACHED; n * n];
    let mut toward = vec![0u16; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for root in 0..n {
        let row = &mut hops[root * n..(root + 1) * n];
        let parents = &mut toward[root * n..(root + 1) * n];
        row[root] = 0;
        parents[root] = root as u16;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            let next = row[v] + 1;
            for &w in &adjacency[v] {
                if row[w] == UNREACHED {
                    row[w] = next;
                    parents[w] = v as u16;
                    queue.push_back(w);
                }
            }
        }
        if let Some(to) = row.iter().position(|&d| d == UNREACHED) {
            return Err(Error::Disconnected { from: root, to });
        }
    }
    // Distances are symmetric, so the BFS tree rooted at `dest` gives each
    // node's successor toward `dest`.
    Ok((DistanceMatrix { n, hops }, toward))
}

/// All-pairs unweighted shortest-path hop counts.
///
/// Fails with [`Error::Disconnected`] if any pair is unreachable.
pub fn all_pairs_shortest_paths(adjacency: &[Vec<usize>]) -> Result<DistanceMatrix> {
    bfs_tables(adjacency).map(|(d, _)| d)
}

/// Preferential-attachment network: a clique of `links_per_new_node + 1`
/// nodes, then every further node links to `links_per_new_node` distinct
/// existing nodes chosen with probability proportional to their degree.
pub fn generate_scale_free(n: usize, links_per_new_node: usize, seed: u64) -> Result<Network> {
    let m = links_per_new_node;
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "links_per_new_node",
            reason: "must be at least 1",
        });
    }
    if n < m + 1 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "must be at least links_per_new_node + 1",
        });
    }
    if n > MAX_NODES {
        return Err(Error::TooManyNodes(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    // Every edge endpoint once; uniform draws from it are degree-proportional.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * m * n);
    let clique = m + 1;
    for a in 0..clique {
        for b in (a + 1)..clique {
            adjacency[a].push(b);
            adjacency[b].push(a);
            endpoints.push(a);
            endpoints.push(b);
        }
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for v in clique..n {
        chosen.clear();
        while chosen.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for &t in &chosen {
            adjacency[v].push(t);
            adjacency[t].push(v);
            endpoints.push(v);
            endpoints.push(t);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    Network::from_adjacency(adjacency, Some(seed))
}
