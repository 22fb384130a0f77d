//! Multihypergraphs with labelled edges and enumeration of their connected
//! edge subsets (polymers).

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::connected::for_each_connected_subset;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate edge id `{0}`")]
    DuplicateEdgeId(String),
    #[error("edge `{0}` has no vertices")]
    EmptyEdge(String),
    #[error("edge `{edge}` references vertex {vertex} but the graph has {n_vertices} vertices")]
    VertexOutOfRange {
        edge: String,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("edge `{edge}` repeats vertex {vertex}")]
    RepeatedVertex { edge: String, vertex: usize },
}

/// A labelled edge over an ordered set of distinct vertices. The stored order
/// fixes the tensor-factor order of the edge's interaction operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub vertices: Vec<usize>,
}

/// A finite multihypergraph: parallel edges and edges of any cardinality are
/// allowed, and every edge carries a unique label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Multihypergraph {
    n_vertices: usize,
    edges: Vec<Edge>,
}

impl Multihypergraph {
    pub fn new(n_vertices: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut ids = HashSet::new();
        for edge in &edges {
            if !ids.insert(edge.id.as_str()) {
                return Err(GraphError::DuplicateEdgeId(edge.id.clone()));
            }
            if edge.vertices.is_empty() {
                return Err(GraphError::EmptyEdge(edge.id.clone()));
            }
            let mut seen = BTreeSet::new();
            for &v in &edge.vertices {
                if v >= n_vertices {
                    return Err(GraphError::VertexOutOfRange {
                        edge: edge.id.clone(),
                        vertex: v,
                        n_vertices,
                    });
                }
                if !seen.insert(v) {
                    return Err(GraphError::RepeatedVertex {
                        edge: edge.id.clone(),
                        vertex: v,
                    });
                }
            }
        }
        Ok(Self { n_vertices, edges })
    }

    /// Convenience constructor labelling edges `e0`, `e1`, ...
    pub fn from_vertex_lists(n_vertices: usize, lists: &[&[usize]]) -> Result<Self, GraphError> {
        let edges = lists
            .iter()
            .enumerate()
            .map(|(i, vs)| Edge {
                id: format!("e{i}"),
                vertices: vs.to_vec(),
            })
            .collect();
        Self::new(n_vertices, edges)
    }

    /// Order `|G|`.
    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// Size `‖G‖`.
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> &Edge {
        &self.edges[index]
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Maximum degree (parallel edges counted with multiplicity) and rank.
    pub fn degree_and_rank(&self) -> (usize, usize) {
        let mut degree = vec![0usize; self.n_vertices];
        let mut rank = 0;
        for edge in &self.edges {
            rank = rank.max(edge.vertices.len());
            for &v in &edge.vertices {
                degree[v] += 1;
            }
        }
        (degree.into_iter().max().unwrap_or(0), rank)
    }

    /// Edge-intersection graph: edges adjacent iff they share a vertex.
    pub(crate) fn edge_adjacency(&self) -> Vec<Vec<usize>> {
        let mut incident = vec![Vec::new(); self.n_vertices];
        for (i, edge) in self.edges.iter().enumerate() {
            for &v in &edge.vertices {
                incident[v].push(i);
            }
        }
        let mut adj = vec![BTreeSet::new(); self.edges.len()];
        for list in &incident {
            for &a in list {
                for &b in list {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Builds the polymer for a set of edge indices. The caller guarantees
    /// connectivity.
    pub(crate) fn polymer_from_edges(&self, mut edges: Vec<usize>) -> Polymer {
        edges.sort_unstable();
        edges.dedup();
        let support: BTreeSet<usize> = edges
            .iter()
            .flat_map(|&e| self.edges[e].vertices.iter().copied())
            .collect();
        Polymer {
            edges,
            support: support.into_iter().collect(),
        }
    }

    /// Every connected edge subset with between 1 and `max_size` edges, each
    /// exactly once, ordered lexicographically by sorted edge index.
    pub fn enumerate_polymers(&self, max_size: usize) -> Vec<Polymer> {
        let adj = self.edge_adjacency();
        let unit = vec![1; self.edges.len()];
        let mut out = Vec::new();
        for_each_connected_subset(&adj, &unit, max_size, |subset| {
            out.push(self.polymer_from_edges(subset.to_vec()));
        });
        out.sort_by(|a, b| a.edges.cmp(&b.edges));
        out
    }

    /// Whether an arbitrary edge subset is connected in the edge-intersection
    /// sense. The empty set counts as connected.
    pub fn is_connected_edge_set(&self, edges: &[usize]) -> bool {
        let Some(&first) = edges.first() else {
            return true;
        };
        let mut reached = vec![first];
        let mut frontier = vec![first];
        while let Some(e) = frontier.pop() {
            for &f in edges {
                if !reached.contains(&f) && self.shares_vertex(e, f) {
                    reached.push(f);
                    frontier.push(f);
                }
            }
        }
        reached.len() == edges.len()
    }

    fn shares_vertex(&self, a: usize, b: usize) -> bool {
        let va = &self.edges[a].vertices;
        self.edges[b].vertices.iter().any(|v| va.contains(v))
    }
}

/// A connected edge subset `γ` together with its vertex support.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Polymer {
    edges: Vec<usize>,
    support: Vec<usize>,
}

impl Polymer {
    /// Sorted edge indices into the owning graph.
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// Sorted vertex support `V(γ)`.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `‖γ‖`, the number of edges.
    pub fn size(&self) -> usize {
        self.edges.len()
    }

    /// `|γ|`, the number of supported vertices.
    pub fn order(&self) -> usize {
        self.support.len()
    }

    pub fn edge_ids<'g>(&self, graph: &'g Multihypergraph) -> Vec<&'g str> {
        self.edges
            .iter()
            .map(|&e| graph.edge(e).id.as_str())
            .collect()
    }

    /// Polymers are compatible iff their supports are vertex-disjoint.
    pub fn is_compatible(&self, other: &Polymer) -> bool {
        are_compatible(self, other)
    }
}

pub fn are_compatible(a: &Polymer, b: &Polymer) -> bool {
    // both supports are sorted
    let (mut i, mut j) = (0, 0);
    while i < a.support.len() && j < b.support.len() {
        match a.support[i].cmp(&b.support[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Multihypergraph {
        Multihypergraph::from_vertex_lists(3, &[&[0, 1], &[1, 2]]).unwrap()
    }

    #[test]
    fn degree_and_rank_examples() {
        assert_eq!(path3().degree_and_rank(), (2, 2));
        let g = Multihypergraph::from_vertex_lists(3, &[&[0, 1, 2], &[0, 1]]).unwrap();
        assert_eq!(g.degree_and_rank(), (2, 3));
        let g = Multihypergraph::new(4, vec![]).unwrap();
        assert_eq!(g.degree_and_rank(), (0, 0));
    }

    #[test]
    fn parallel_edges_count_toward_degree() {
        let g = Multihypergraph::from_vertex_lists(2, &[&[0, 1], &[1, 0], &[0, 1]]).unwrap();
        assert_eq!(g.degree_and_rank(), (3, 2));
    }

    #[test]
    fn rejects_malformed_edges() {
        let dup = vec![
            Edge {
                id: "a".into(),
                vertices: vec![0, 1],
            },
            Edge {
                id: "a".into(),
                vertices: vec![1, 2],
            },
        ];
        assert_eq!(
            Multihypergraph::new(3, dup),
            Err(GraphError::DuplicateEdgeId("a".into()))
        );
        assert!(matches!(
            Multihypergraph::from_vertex_lists(2, &[&[0, 2]]),
            Err(GraphError::VertexOutOfRange { vertex: 2, .. })
        ));
        assert!(matches!(
            Multihypergraph::from_vertex_lists(2, &[&[1, 1]]),
            Err(GraphError::RepeatedVertex { vertex: 1, .. })
        ));
        assert!(matches!(
            Multihypergraph::from_vertex_lists(2, &[&[]]),
            Err(GraphError::EmptyEdge(_))
        ));
    }

    #[test]
    fn path_polymers_up_to_two_edges() {
        let g = Multihypergraph::from_vertex_lists(4, &[&[0, 1], &[1, 2], &[2, 3]]).unwrap();
        let polys: Vec<Vec<usize>> = g
            .enumerate_polymers(2)
            .iter()
            .map(|p| p.edges().to_vec())
            .collect();
        assert_eq!(
            polys,
            vec![vec![0], vec![0, 1], vec![1], vec![1, 2], vec![2]]
        );
    }

    #[test]
    fn singletons_and_edgeless() {
        let g = Multihypergraph::from_vertex_lists(4, &[&[0, 1], &[2, 3], &[1, 2, 3]]).unwrap();
        assert_eq!(g.enumerate_polymers(1).len(), 3);
        let empty = Multihypergraph::new(5, vec![]).unwrap();
        assert!(empty.enumerate_polymers(4).is_empty());
    }

    #[test]
    fn compatibility_is_vertex_disjointness() {
        let g = Multihypergraph::from_vertex_lists(4, &[&[0, 1], &[2, 3], &[1, 2]]).unwrap();
        let p = g.enumerate_polymers(1);
        assert!(are_compatible(&p[0], &p[1]));
        assert!(!are_compatible(&p[0], &p[2]));
        assert!(!are_compatible(&p[0], &p[0]));
    }
}
