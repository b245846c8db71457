//! Decorated causal graphs and their acyclic teleportation families.

use std::collections::HashMap;
use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{QcmError, Result};

/// Default cap on the number of edges (or vertices) an enumeration may range over.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Observed,
    Unobserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Classical,
    Quantum,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: String,
    pub kind: VertexKind,
}

/// Directed edge between vertex indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.source == self.target
    }
}

/// Directed graph with observed/unobserved vertices and classical/quantum edges.
#[derive(Clone, PartialEq, Eq)]
pub struct CausalGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    index: HashMap<String, usize>,
}

impl fmt::Debug for CausalGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vs: Vec<String> = self
            .vertices
            .iter()
            .map(|v| match v.kind {
                VertexKind::Observed => v.id.clone(),
                VertexKind::Unobserved => format!("({})", v.id),
            })
            .collect();
        let es: Vec<String> = self.edges.iter().map(|e| self.edge_label_of(e)).collect();
        f.debug_struct("CausalGraph")
            .field("vertices", &vs)
            .field("edges", &es)
            .finish()
    }
}

/// Rejects ids that would collide with generated ids or with the `A->B` edge syntax.
pub fn check_vertex_id(id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(QcmError::InvalidGraph("vertex id is empty".into()));
    }
    if id.contains('#') || id.contains("->") || id.contains(',') || id.chars().any(char::is_whitespace) {
        return Err(QcmError::InvalidGraph(format!(
            "vertex id `{id}` may not contain `#`, `->`, `,` or whitespace"
        )));
    }
    Ok(())
}

impl CausalGraph {
    /// Builds a user graph from vertex ids and `(source, target, kind)` triples.
    pub fn new<V, E, S, T>(vertices: V, edges: E) -> Result<Self>
    where
        V: IntoIterator<Item = (S, VertexKind)>,
        E: IntoIterator<Item = (T, T, EdgeKind)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let vertices: Vec<Vertex> = vertices
            .into_iter()
            .map(|(id, kind)| Vertex { id: id.into(), kind })
            .collect();
        for v in &vertices {
            check_vertex_id(&v.id)?;
        }
        let index = build_index(&vertices)?;
        let mut resolved = Vec::new();
        for (s, t, kind) in edges {
            let source = lookup(&index, s.as_ref())?;
            let target = lookup(&index, t.as_ref())?;
            resolved.push(Edge { source, target, kind });
        }
        Self::from_parts(vertices, resolved)
    }

    /// Builds a graph from resolved parts; generated ids are allowed here.
    pub(crate) fn from_parts(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        let index = build_index(&vertices)?;
        let n = vertices.len();
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            if e.source >= n || e.target >= n {
                return Err(QcmError::InvalidGraph(format!(
                    "edge endpoint {} -> {} out of range",
                    e.source, e.target
                )));
            }
            if !seen.insert((e.source, e.target)) {
                return Err(QcmError::InvalidGraph(format!(
                    "parallel edge {}->{}",
                    vertices[e.source].id, vertices[e.target].id
                )));
            }
            if vertices[e.source].kind == VertexKind::Observed && e.kind != EdgeKind::Classical {
                return Err(QcmError::InvalidGraph(format!(
                    "edge {}->{} leaves observed vertex {} but is not classical",
                    vertices[e.source].id, vertices[e.target].id, vertices[e.source].id
                )));
            }
        }
        Ok(Self {
            vertices,
            edges,
            index,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn id(&self, v: usize) -> &str {
        &self.vertices[v].id
    }

    pub fn kind(&self, v: usize) -> VertexKind {
        self.vertices[v].kind
    }

    pub fn vertex_index(&self, id: &str) -> Result<usize> {
        lookup(&self.index, id)
    }

    pub fn find_edge(&self, source: usize, target: usize) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.source == source && e.target == target)
    }

    /// Resolves an edge label of the form `A->B`.
    pub fn edge_index(&self, label: &str) -> Result<usize> {
        let (s, t) = label
            .split_once("->")
            .ok_or_else(|| QcmError::UnknownEdge(label.to_string()))?;
        let source = self.vertex_index(s.trim())?;
        let target = self.vertex_index(t.trim())?;
        self.find_edge(source, target)
            .ok_or_else(|| QcmError::UnknownEdge(label.to_string()))
    }

    pub fn edge_label(&self, e: usize) -> String {
        self.edge_label_of(&self.edges[e])
    }

    fn edge_label_of(&self, e: &Edge) -> String {
        format!("{}->{}", self.vertices[e.source].id, self.vertices[e.target].id)
    }

    /// Parent ids of `id`, in vertex order.
    pub fn parents(&self, id: &str) -> Result<Vec<&str>> {
        let v = self.vertex_index(id)?;
        Ok(self.parent_indices(v).into_iter().map(|p| self.id(p)).collect())
    }

    pub fn children(&self, id: &str) -> Result<Vec<&str>> {
        let v = self.vertex_index(id)?;
        Ok(self.child_indices(v).into_iter().map(|p| self.id(p)).collect())
    }

    pub fn parent_indices(&self, v: usize) -> Vec<usize> {
        self.in_edges(v).into_iter().map(|e| self.edges[e].source).collect()
    }

    pub fn child_indices(&self, v: usize) -> Vec<usize> {
        self.out_edges(v).into_iter().map(|e| self.edges[e].target).collect()
    }

    /// Incoming edge indices, sorted by source vertex index.
    pub fn in_edges(&self, v: usize) -> Vec<usize> {
        let mut es: Vec<usize> = (0..self.edges.len()).filter(|&e| self.edges[e].target == v).collect();
        es.sort_by_key(|&e| (self.edges[e].source, e));
        es
    }

    /// Outgoing edge indices, sorted by target vertex index.
    pub fn out_edges(&self, v: usize) -> Vec<usize> {
        let mut es: Vec<usize> = (0..self.edges.len()).filter(|&e| self.edges[e].source == v).collect();
        es.sort_by_key(|&e| (self.edges[e].target, e));
        es
    }

    pub fn is_exogenous(&self, v: usize) -> bool {
        self.edges.iter().all(|e| e.target != v)
    }

    pub fn observed_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.vertices[v].kind == VertexKind::Observed)
            .collect()
    }

    pub fn is_acyclic(&self) -> bool {
        is_acyclic_on(self.vertex_count(), self.edges.iter().map(|e| (e.source, e.target)))
    }

    /// Kahn order (smallest available index first), or `None` if cyclic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        topological_order_on(self.vertex_count(), self.edges.iter().map(|e| (e.source, e.target)))
    }

    /// Whether `(V, subset)` is acyclic.
    pub fn is_acyclic_subset(&self, subset: &[usize]) -> bool {
        is_acyclic_on(
            self.vertex_count(),
            subset.iter().map(|&e| (self.edges[e].source, self.edges[e].target)),
        )
    }

    /// Strict descendants of each vertex; a vertex on a directed cycle is its own descendant.
    pub fn descendants(&self) -> Vec<Vec<bool>> {
        let n = self.vertex_count();
        let children: Vec<Vec<usize>> = (0..n).map(|v| self.child_indices(v)).collect();
        (0..n)
            .map(|start| {
                let mut seen = vec![false; n];
                let mut stack = children[start].clone();
                while let Some(v) = stack.pop() {
                    if !std::mem::replace(&mut seen[v], true) {
                        stack.extend(&children[v]);
                    }
                }
                seen
            })
            .collect()
    }

    /// Every edge subset `E'` with `(V, E')` acyclic, largest first, then lexicographic.
    pub fn enumerate_acyclic_edge_subsets(
        &self,
        cap: usize,
    ) -> Result<impl Iterator<Item = Vec<usize>> + '_> {
        let m = self.edge_count();
        if m > cap {
            return Err(QcmError::CapExceeded {
                what: "edges",
                size: m,
                cap,
            });
        }
        Ok((0..=m)
            .rev()
            .flat_map(move |k| (0..m).combinations(k))
            .filter(move |subset| self.is_acyclic_subset(subset)))
    }

    /// Whether removing every out-edge of `split` leaves the graph acyclic.
    pub fn is_valid_split_set(&self, split: &[usize]) -> bool {
        is_acyclic_on(
            self.vertex_count(),
            self.edges
                .iter()
                .filter(|e| !split.contains(&e.source))
                .map(|e| (e.source, e.target)),
        )
    }

    /// Every valid vertex split set, fewest split vertices first, then lexicographic.
    pub fn enumerate_vertex_split_sets(
        &self,
        cap: usize,
    ) -> Result<impl Iterator<Item = Vec<usize>> + '_> {
        let n = self.vertex_count();
        if n > cap {
            return Err(QcmError::CapExceeded {
                what: "vertices",
                size: n,
                cap,
            });
        }
        Ok((0..=n)
            .flat_map(move |k| (0..n).combinations(k))
            .filter(move |split| self.is_valid_split_set(split)))
    }
}

fn build_index(vertices: &[Vertex]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        if index.insert(v.id.clone(), i).is_some() {
            return Err(QcmError::InvalidGraph(format!("duplicate vertex id `{}`", v.id)));
        }
    }
    Ok(index)
}

fn lookup(index: &HashMap<String, usize>, id: &str) -> Result<usize> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| QcmError::UnknownVertex(id.to_string()))
}

pub fn is_acyclic_on(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> bool {
    topological_order_on(n, edges).is_some()
}

pub fn topological_order_on(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for (s, t) in edges {
        if s == t {
            return None;
        }
        indegree[t] += 1;
        children[s].push(t);
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Bookkeeping for one split edge `(v, v')` of a teleportation graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitEdge {
    /// Index of the split edge in the base graph.
    pub base_edge: usize,
    /// Pre-selection vertex `R` (derived-graph index).
    pub pre: usize,
    /// Post-selection vertex `T` (derived-graph index).
    pub post: usize,
    /// Derived edge `(v, T)`.
    pub to_post: usize,
    /// Derived edge `(R, T)`.
    pub pre_to_post: usize,
    /// Derived edge `(R, v')`.
    pub pre_to_target: usize,
}

/// Acyclic graph obtained by replacing the edges outside `kept` with teleportation gadgets.
///
/// Base vertices keep their indices in the derived graph; kept edges come first, in base
/// order, followed by `(v,T)`, `(R,T)`, `(R,v')` for each split edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeleportationGraph {
    base: CausalGraph,
    kept: Vec<usize>,
    splits: Vec<SplitEdge>,
    derived: CausalGraph,
}

impl TeleportationGraph {
    pub fn base(&self) -> &CausalGraph {
        &self.base
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.derived
    }

    pub fn kept_edges(&self) -> &[usize] {
        &self.kept
    }

    pub fn splits(&self) -> &[SplitEdge] {
        &self.splits
    }

    pub fn split_edges(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.base_edge).collect()
    }

    pub fn is_maximal(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn pre_selection_vertices(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.pre).collect()
    }

    pub fn post_selection_vertices(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.post).collect()
    }

    /// Derived index of a kept base edge.
    pub fn kept_edge_position(&self, base_edge: usize) -> Option<usize> {
        self.kept.iter().position(|&e| e == base_edge)
    }
}

pub fn build_teleportation_graph(g: &CausalGraph, kept: &[usize]) -> Result<TeleportationGraph> {
    let mut kept: Vec<usize> = kept.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&e| e >= g.edge_count()) {
        return Err(QcmError::UnknownEdge(format!("edge index {bad}")));
    }
    if !g.is_acyclic_subset(&kept) {
        let labels = kept.iter().map(|&e| g.edge_label(e)).join(",");
        return Err(QcmError::CyclicSubset(format!("{{{labels}}}")));
    }
    let mut vertices = g.vertices.clone();
    let mut edges: Vec<Edge> = kept.iter().map(|&e| g.edges[e]).collect();
    let mut splits = Vec::new();
    for k in (0..g.edge_count()).filter(|e| !kept.contains(e)) {
        let base = g.edges[k];
        let pre = vertices.len();
        vertices.push(Vertex {
            id: format!("R#{k}"),
            kind: VertexKind::Unobserved,
        });
        let post = vertices.len();
        vertices.push(Vertex {
            id: format!("T#{k}"),
            kind: VertexKind::Observed,
        });
        let to_post = edges.len();
        edges.push(Edge {
            source: base.source,
            target: post,
            kind: base.kind,
        });
        edges.push(Edge {
            source: pre,
            target: post,
            kind: EdgeKind::Quantum,
        });
        edges.push(Edge {
            source: pre,
            target: base.target,
            kind: EdgeKind::Quantum,
        });
        splits.push(SplitEdge {
            base_edge: k,
            pre,
            post,
            to_post,
            pre_to_post: to_post + 1,
            pre_to_target: to_post + 2,
        });
    }
    let derived = CausalGraph::from_parts(vertices, edges)?;
    debug_assert!(derived.is_acyclic());
    Ok(TeleportationGraph {
        base: g.clone(),
        kept,
        splits,
        derived,
    })
}

/// The member with every edge split.
pub fn maximal_teleportation_graph(g: &CausalGraph) -> TeleportationGraph {
    build_teleportation_graph(g, &[]).expect("the empty edge set is acyclic")
}

/// Bookkeeping for one split vertex of a vertex-split graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitVertex {
    pub vertex: usize,
    pub pre: usize,
    pub post: usize,
    /// Derived edge `(v, T_v)`.
    pub to_post: usize,
    /// Derived edge `(R_v, T_v)`.
    pub pre_to_post: usize,
    /// Derived edges `(R_v, c)` for each child `c` of `v`, in base out-edge order.
    pub pre_to_children: Vec<usize>,
}

/// Acyclic graph in which every split vertex hands its outputs to a teleportation gadget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSplitGraph {
    base: CausalGraph,
    splits: Vec<SplitVertex>,
    derived: CausalGraph,
}

impl VertexSplitGraph {
    pub fn base(&self) -> &CausalGraph {
        &self.base
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.derived
    }

    pub fn splits(&self) -> &[SplitVertex] {
        &self.splits
    }

    pub fn split_vertices(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.vertex).collect()
    }

    pub fn post_selection_vertices(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.post).collect()
    }

    pub fn pre_selection_vertices(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.pre).collect()
    }
}

pub fn build_vertex_split_graph(g: &CausalGraph, split: &[usize]) -> Result<VertexSplitGraph> {
    let mut split: Vec<usize> = split.to_vec();
    split.sort_unstable();
    split.dedup();
    if let Some(&bad) = split.iter().find(|&&v| v >= g.vertex_count()) {
        return Err(QcmError::UnknownVertex(format!("vertex index {bad}")));
    }
    if !g.is_valid_split_set(&split) {
        let ids = split.iter().map(|&v| g.id(v)).join(",");
        return Err(QcmError::CyclicSubset(format!(
            "removing the out-edges of {{{ids}}} leaves a cycle"
        )));
    }
    let mut vertices = g.vertices.clone();
    let mut edges: Vec<Edge> = g
        .edges
        .iter()
        .filter(|e| !split.contains(&e.source))
        .copied()
        .collect();
    let mut splits = Vec::new();
    for &v in &split {
        let id = &g.vertices[v].id;
        let pre = vertices.len();
        vertices.push(Vertex {
            id: format!("R#{id}"),
            kind: VertexKind::Unobserved,
        });
        let post = vertices.len();
        vertices.push(Vertex {
            id: format!("T#{id}"),
            kind: VertexKind::Observed,
        });
        let outs = g.out_edges(v);
        let all_classical = outs.iter().all(|&e| g.edges[e].kind == EdgeKind::Classical);
        let to_post = edges.len();
        edges.push(Edge {
            source: v,
            target: post,
            kind: if g.kind(v) == VertexKind::Observed || all_classical {
                EdgeKind::Classical
            } else {
                EdgeKind::Quantum
            },
        });
        edges.push(Edge {
            source: pre,
            target: post,
            kind: EdgeKind::Quantum,
        });
        let mut pre_to_children = Vec::new();
        for e in outs {
            pre_to_children.push(edges.len());
            edges.push(Edge {
                source: pre,
                target: g.edges[e].target,
                kind: EdgeKind::Quantum,
            });
        }
        splits.push(SplitVertex {
            vertex: v,
            pre,
            post,
            to_post,
            pre_to_post: to_post + 1,
            pre_to_children,
        });
    }
    let derived = CausalGraph::from_parts(vertices, edges)?;
    debug_assert!(derived.is_acyclic());
    Ok(VertexSplitGraph {
        base: g.clone(),
        splits,
        derived,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use EdgeKind::{Classical as C, Quantum as Q};
    use VertexKind::{Observed as O, Unobserved as U};

    fn chain() -> CausalGraph {
        CausalGraph::new([("A", O), ("C", O), ("B", O)], [("A", "C", C), ("C", "B", C)]).unwrap()
    }

    fn overview() -> CausalGraph {
        CausalGraph::new(
            [("v1", O), ("v2", O), ("v3", U), ("v4", U)],
            [("v3", "v4", Q), ("v4", "v3", Q), ("v3", "v1", C), ("v4", "v2", C)],
        )
        .unwrap()
    }

    fn dsep_cycle() -> CausalGraph {
        CausalGraph::new(
            [("v1", O), ("v2", O), ("v3", O), ("v4", O)],
            [("v1", "v2", C), ("v2", "v1", C), ("v3", "v1", C), ("v4", "v2", C)],
        )
        .unwrap()
    }

    fn self_cycle() -> CausalGraph {
        CausalGraph::new([("L", U), ("M", O)], [("L", "L", Q), ("L", "M", Q)]).unwrap()
    }

    fn brute_force_acyclic_subsets(g: &CausalGraph) -> Vec<Vec<usize>> {
        let m = g.edge_count();
        (0u32..1 << m)
            .map(|mask| (0..m).filter(|&e| mask >> e & 1 == 1).collect::<Vec<_>>())
            .filter(|s| {
                // acyclic iff repeatedly removing sinks empties the graph
                let mut alive = vec![true; g.vertex_count()];
                loop {
                    let sink = (0..g.vertex_count()).find(|&v| {
                        alive[v]
                            && !s.iter().any(|&e| {
                                let edge = g.edge(e);
                                edge.source == v && alive[edge.target]
                            })
                    });
                    match sink {
                        Some(v) => alive[v] = false,
                        None => break,
                    }
                }
                alive.iter().all(|a| !a)
            })
            .collect()
    }

    #[test]
    fn parents_and_children() {
        let g = chain();
        assert_eq!(g.parents("C").unwrap(), vec!["A"]);
        assert!(g.parents("A").unwrap().is_empty());
        assert_eq!(g.children("C").unwrap(), vec!["B"]);
        assert!(g.parents("Z").is_err());
        let s = self_cycle();
        assert!(s.parents("L").unwrap().contains(&"L"));
    }

    #[test]
    fn graph_invariants_enforced() {
        assert!(CausalGraph::new([("A", O), ("B", O)], [("A", "B", Q)]).is_err());
        assert!(CausalGraph::new([("A", U), ("B", O)], [("A", "B", Q), ("A", "B", C)]).is_err());
        assert!(CausalGraph::new([("A", U)], [("A", "B", Q)]).is_err());
        assert!(CausalGraph::new([("A", U), ("A", O)], Vec::<(&str, &str, EdgeKind)>::new()).is_err());
        assert!(CausalGraph::new([("R#1", U)], Vec::<(&str, &str, EdgeKind)>::new()).is_err());
        assert!(CausalGraph::new([("a->b", U)], Vec::<(&str, &str, EdgeKind)>::new()).is_err());
    }

    #[test]
    fn acyclicity() {
        assert!(chain().is_acyclic());
        assert!(!overview().is_acyclic());
        assert!(!self_cycle().is_acyclic());
        assert_eq!(chain().topological_order(), Some(vec![0, 1, 2]));
    }

    #[test]
    fn two_cycle_subsets() {
        let g = CausalGraph::new([("a", U), ("b", U)], [("a", "b", Q), ("b", "a", Q)]).unwrap();
        let subsets: Vec<_> = g.enumerate_acyclic_edge_subsets(20).unwrap().collect();
        assert_eq!(subsets, vec![vec![0], vec![1], vec![]]);
    }

    #[test]
    fn dsep_cycle_subset_count() {
        let g = dsep_cycle();
        let subsets: Vec<_> = g.enumerate_acyclic_edge_subsets(20).unwrap().collect();
        assert_eq!(subsets.len(), 12);
        let mut brute = brute_force_acyclic_subsets(&g);
        brute.sort();
        let mut sorted = subsets.clone();
        sorted.sort();
        assert_eq!(sorted, brute);
        assert!(subsets.windows(2).all(|w| w[0].len() >= w[1].len()));
    }

    #[test]
    fn acyclic_graph_includes_full_edge_set() {
        let g = chain();
        let first = g.enumerate_acyclic_edge_subsets(20).unwrap().next().unwrap();
        assert_eq!(first, vec![0, 1]);
    }

    #[test]
    fn enumeration_cap() {
        let g = dsep_cycle();
        let err = g.enumerate_acyclic_edge_subsets(3).err().unwrap();
        assert!(matches!(err, QcmError::CapExceeded { size: 4, cap: 3, .. }));
        assert!(err.to_string().contains("raise the cap"));
        assert!(g.enumerate_vertex_split_sets(3).is_err());
    }

    #[test]
    fn teleportation_graph_without_splits_is_base() {
        let g = chain();
        let tg = build_teleportation_graph(&g, &[0, 1]).unwrap();
        assert!(tg.splits().is_empty());
        assert_eq!(tg.graph(), &g);
    }

    #[test]
    fn self_cycle_teleportation_graph() {
        let g = self_cycle();
        let lm = g.edge_index("L->M").unwrap();
        let tg = build_teleportation_graph(&g, &[lm]).unwrap();
        let d = tg.graph();
        assert_eq!(tg.splits().len(), 1);
        assert_eq!(d.vertex_count(), 4);
        assert!(d.is_acyclic());
        assert_eq!(d.parents("T#0").unwrap(), vec!["L", "R#0"]);
        assert_eq!(d.children("R#0").unwrap(), vec!["L", "T#0"]);
        assert_eq!(d.kind(d.vertex_index("T#0").unwrap()), O);
        assert!(d.edge_index("L->M").is_ok());
        assert!(build_teleportation_graph(&g, &[0]).is_err());
    }

    #[test]
    fn maximal_graph_splits_everything() {
        let g = overview();
        let tg = maximal_teleportation_graph(&g);
        assert_eq!(tg.splits().len(), g.edge_count());
        assert!(tg.is_maximal());
        let d = tg.graph();
        for s in tg.splits() {
            assert_eq!(d.edge(s.to_post).kind, g.edge(s.base_edge).kind);
            assert_eq!(d.edge(s.pre_to_post).kind, Q);
            assert_eq!(d.edge(s.pre_to_target).kind, Q);
            assert!(d.is_exogenous(s.pre));
            assert_eq!(d.in_edges(s.post).len(), 2);
            assert!(d.out_edges(s.post).is_empty());
        }
    }

    #[test]
    fn vertex_split_examples() {
        let g = chain();
        let vs = build_vertex_split_graph(&g, &[]).unwrap();
        assert_eq!(vs.graph(), &g);

        let eg = CausalGraph::new(
            [("A", U), ("B", U), ("C", U)],
            [("A", "B", Q), ("B", "A", Q), ("A", "C", Q), ("C", "A", Q)],
        )
        .unwrap();
        let vs = build_vertex_split_graph(&eg, &[0]).unwrap();
        assert_eq!(vs.splits().len(), 1);
        assert_eq!(vs.graph().children("R#A").unwrap(), vec!["B", "C", "T#A"]);
        assert!(vs.graph().is_acyclic());
        assert!(build_vertex_split_graph(&eg, &[1]).is_err());
    }

    #[test]
    fn two_cycle_split_sets() {
        let g = CausalGraph::new([("v3", U), ("v4", U)], [("v3", "v4", Q), ("v4", "v3", Q)]).unwrap();
        let sets: Vec<_> = g.enumerate_vertex_split_sets(20).unwrap().collect();
        assert_eq!(sets, vec![vec![0], vec![1], vec![0, 1]]);
        let sets: Vec<_> = overview().enumerate_vertex_split_sets(20).unwrap().collect();
        assert!(sets.iter().all(|s| s.contains(&2) || s.contains(&3)));
        assert!(chain().enumerate_vertex_split_sets(20).unwrap().next().unwrap().is_empty());
    }

    #[test]
    fn self_loop_forces_split() {
        let g = self_cycle();
        let sets: Vec<_> = g.enumerate_vertex_split_sets(20).unwrap().collect();
        assert_eq!(sets, vec![vec![0], vec![0, 1]]);
    }

    fn arb_graph() -> impl Strategy<Value = CausalGraph> {
        (1usize..=4)
            .prop_flat_map(|n| (Just(n), proptest::collection::btree_set((0..n, 0..n), 0..=6)))
            .prop_map(|(n, edges)| {
                let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
                let vs: Vec<(String, VertexKind)> = ids.iter().map(|i| (i.clone(), U)).collect();
                let es: Vec<(String, String, EdgeKind)> =
                    edges.into_iter().map(|(a, b)| (ids[a].clone(), ids[b].clone(), Q)).collect();
                CausalGraph::new(vs, es).unwrap()
            })
    }

    proptest! {
        #[test]
        fn every_family_member_is_acyclic(g in arb_graph()) {
            let subsets: Vec<_> = g.enumerate_acyclic_edge_subsets(20).unwrap().collect();
            let again: Vec<_> = g.enumerate_acyclic_edge_subsets(20).unwrap().collect();
            prop_assert_eq!(&subsets, &again);
            prop_assert_eq!(subsets.len(), brute_force_acyclic_subsets(&g).len());
            for kept in subsets {
                let tg = build_teleportation_graph(&g, &kept).unwrap();
                prop_assert!(tg.graph().is_acyclic());
                prop_assert_eq!(tg.splits().len(), g.edge_count() - kept.len());
                for s in tg.splits() {
                    prop_assert!(tg.graph().is_exogenous(s.pre));
                    prop_assert_eq!(tg.graph().in_edges(s.post).len(), 2);
                    prop_assert!(tg.graph().out_edges(s.post).is_empty());
                }
            }
            for split in g.enumerate_vertex_split_sets(20).unwrap() {
                let vs = build_vertex_split_graph(&g, &split).unwrap();
                prop_assert!(vs.graph().is_acyclic());
                prop_assert_eq!(vs.splits().len(), split.len());
            }
        }
    }
}
