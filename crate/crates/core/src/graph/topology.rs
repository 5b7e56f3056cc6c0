use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Path,
    Complete,
    /// Each node links to the nodes at offsets 1, 2, 4, ... (`degree` of them),
    /// then the relation is symmetrized.
    Exponential,
}

/// Undirected communication graph. Every node lists itself among its
/// neighbors; neighbor lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology")]
pub struct Topology {
    n: usize,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct RawTopology {
    n: usize,
    neighbors: Vec<Vec<usize>>,
}

impl TryFrom<RawTopology> for Topology {
    type Error = Error;

    fn try_from(raw: RawTopology) -> Result<Self> {
        if raw.neighbors.len() != raw.n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} neighbor lists", raw.n),
                actual: raw.neighbors.len().to_string(),
            });
        }
        let mut edges = Vec::new();
        for (i, list) in raw.neighbors.iter().enumerate() {
            for &j in list {
                edges.push((i, j));
            }
        }
        let t = Topology::from_edges(raw.n, &edges)?;
        // from_edges symmetrizes; a serialized topology must already be symmetric.
        for (i, list) in raw.neighbors.iter().enumerate() {
            let given: BTreeSet<usize> = list.iter().copied().chain([i]).collect();
            if given.len() != t.neighbors[i].len() {
                return Err(Error::param("neighbors", "adjacency is not symmetric"));
            }
        }
        Ok(t)
    }
}

impl Topology {
    /// Builds an undirected topology from an edge list. Edges are symmetrized
    /// and self-loops added; the result must be connected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "topology needs at least one node"));
        }
        let mut sets: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::NodeOutOfRange { index: i.max(j), n });
            }
            sets[i].insert(j);
            sets[j].insert(i);
        }
        let t = Topology {
            n,
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        };
        let components = t.components();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighbors of `i`, including `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Number of neighbors excluding the self-loop.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() - 1
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    /// Connected components, counted by breadth-first search.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }
}

pub fn build_topology(kind: TopologyKind, n: usize, degree: Option<usize>) -> Result<Topology> {
    if n == 0 {
        return Err(Error::param("n", "topology needs at least one node"));
    }
    let mut edges = Vec::new();
    match kind {
        TopologyKind::Ring => {
            for i in 0..n {
                edges.push((i, (i + 1) % n));
            }
        }
        TopologyKind::Path => {
            for i in 1..n {
                edges.push((i - 1, i));
            }
        }
        TopologyKind::Complete => {
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((i, j));
                }
            }
        }
        TopologyKind::Exponential => {
            let degree =
                degree.ok_or_else(|| Error::param("degree", "exponential topology requires a degree"))?;
            if degree == 0 {
                return Err(Error::param("degree", "must be at least 1"));
            }
            if degree > n.saturating_sub(1) {
                return Err(Error::param(
                    "degree",
                    format!("degree {degree} exceeds n - 1 = {}", n - 1),
                ));
            }
            for i in 0..n {
                for k in 0..degree {
                    let offset = 1usize.checked_shl(k as u32).unwrap_or(0) % n;
                    edges.push((i, (i + offset) % n));
                }
            }
        }
    }
    Topology::from_edges(n, &edges)
}

/// Random connected topology: a uniformly random spanning tree (random
/// attachment order) plus independent extra edges with probability `edge_prob`.
pub fn random_connected<R: Rng + ?Sized>(n: usize, edge_prob: f64, rng: &mut R) -> Result<Topology> {
    if n == 0 {
        return Err(Error::param("n", "topology needs at least one node"));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::param("edge_prob", "must lie in [0, 1]"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        edges.push((order[k], parent));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < edge_prob {
                edges.push((i, j));
            }
        }
    }
    Topology::from_edges(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn complete_two_nodes() {
        let t = build_topology(TopologyKind::Complete, 2, None).unwrap();
        assert_eq!(t.neighbors(0), &[0, 1]);
        assert_eq!(t.neighbors(1), &[0, 1]);
    }

    #[test]
    fn ring_four_nodes() {
        let t = build_topology(TopologyKind::Ring, 4, None).unwrap();
        assert_eq!(t.neighbors(0), &[0, 1, 3]);
        assert_eq!(t.neighbors(2), &[1, 2, 3]);
        assert!((0..4).all(|i| t.degree(i) == 2));
    }

    #[test]
    fn single_node_is_connected() {
        for kind in [TopologyKind::Ring, TopologyKind::Path, TopologyKind::Complete] {
            let t = build_topology(kind, 1, None).unwrap();
            assert_eq!(t.neighbors(0), &[0]);
        }
    }

    #[test]
    fn exponential_offsets_symmetrized() {
        let t = build_topology(TopologyKind::Exponential, 20, Some(5)).unwrap();
        // Offsets ±{1, 2, 4, 8, 16} mod 20, recomputed by hand.
        let expected: BTreeSet<usize> = [1, 2, 4, 8, 12, 16, 18, 19].into_iter().collect();
        for i in 0..20 {
            let got: BTreeSet<usize> = t
                .neighbors(i)
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (j + 20 - i) % 20)
                .collect();
            assert_eq!(got, expected, "node {i}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_topology(TopologyKind::Ring, 0, None).is_err());
        assert!(build_topology(TopologyKind::Exponential, 4, Some(4)).is_err());
        assert!(build_topology(TopologyKind::Exponential, 4, None).is_err());
        assert!(build_topology(TopologyKind::Exponential, 4, Some(0)).is_err());
        assert!(Topology::from_edges(3, &[(0, 1)]).is_err());
    }

    #[test]
    fn random_topologies_are_connected_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = rng.random_range(2..40);
            let t = random_connected(n, 0.1, &mut rng).unwrap();
            assert_eq!(t.components(), 1);
            for i in 0..n {
                assert!(t.is_adjacent(i, i));
                for &j in t.neighbors(i) {
                    assert!(t.is_adjacent(j, i));
                }
            }
        }
    }

    #[test]
    fn json_round_trip_validates() {
        let t = build_topology(TopologyKind::Ring, 5, None).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: Topology = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let asym = r#"{"n":2,"neighbors":[[0,1],[1]]}"#;
        assert!(serde_json::from_str::<Topology>(asym).is_err());
    }
}
