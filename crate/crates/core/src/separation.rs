//! d-separation, p-separation and conditional-independence tests.

use rayon::prelude::*;
use serde::Serialize;

use crate::distribution::Distribution;
use crate::error::{QcmError, Result};
use crate::graph::{build_teleportation_graph, build_vertex_split_graph, CausalGraph};
use crate::tensor::unflatten;

/// Three disjoint vertex sets, stored as vertex indices of the target graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparationQuery {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
}

impl SeparationQuery {
    pub fn new(g: &CausalGraph, x: &[&str], y: &[&str], z: &[&str]) -> Result<Self> {
        let resolve = |ids: &[&str]| ids.iter().map(|id| g.vertex_index(id)).collect::<Result<Vec<_>>>();
        Self::from_indices(g, resolve(x)?, resolve(y)?, resolve(z)?)
    }

    pub fn from_indices(g: &CausalGraph, x: Vec<usize>, y: Vec<usize>, z: Vec<usize>) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(QcmError::InvalidQuery("the first two sets must be non-empty".into()));
        }
        let n = g.vertex_count();
        let mut owner = vec![None; n];
        for (name, set) in [("first", &x), ("second", &y), ("conditioning", &z)] {
            for &v in set {
                if v >= n {
                    return Err(QcmError::UnknownVertex(format!("vertex index {v}")));
                }
                if let Some(prev) = owner[v].replace(name) {
                    return Err(QcmError::InvalidQuery(format!(
                        "vertex {} appears in the {prev} and {name} sets; the sets must be disjoint",
                        g.id(v)
                    )));
                }
            }
        }
        let norm = |mut s: Vec<usize>| {
            s.sort_unstable();
            s
        };
        Ok(Self {
            x: norm(x),
            y: norm(y),
            z: norm(z),
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
            z: self.z.clone(),
        }
    }
}

/// d-separation by enumerating simple undirected paths.
///
/// Self-loops are never traversed; a vertex on a directed cycle counts as its own descendant.
pub fn d_separated(g: &CausalGraph, q: &SeparationQuery) -> Result<bool> {
    SeparationQuery::from_indices(g, q.x.clone(), q.y.clone(), q.z.clone())?;
    Ok(!connected_by_paths(g, q))
}

fn connected_by_paths(g: &CausalGraph, q: &SeparationQuery) -> bool {
    let n = g.vertex_count();
    let mut in_z = vec![false; n];
    for &v in &q.z {
        in_z[v] = true;
    }
    let mut in_y = vec![false; n];
    for &v in &q.y {
        in_y[v] = true;
    }
    let desc = g.descendants();
    let collider_open: Vec<bool> = (0..n)
        .map(|w| in_z[w] || (0..n).any(|u| desc[w][u] && in_z[u]))
        .collect();
    // (neighbour, arrow head at neighbour, arrow head at self)
    let mut adj: Vec<Vec<(usize, bool, bool)>> = vec![Vec::new(); n];
    for e in g.edges().iter().filter(|e| !e.is_self_loop()) {
        adj[e.source].push((e.target, true, false));
        adj[e.target].push((e.source, false, true));
    }

    struct Walk<'a> {
        adj: &'a [Vec<(usize, bool, bool)>],
        in_z: &'a [bool],
        in_y: &'a [bool],
        collider_open: &'a [bool],
        visited: Vec<bool>,
    }

    impl Walk<'_> {
        fn go(&mut self, v: usize, head_in: Option<bool>) -> bool {
            for &(w, head_at_w, head_at_v) in &self.adj[v] {
                if self.visited[w] {
                    continue;
                }
                if let Some(head_in) = head_in {
                    let blocked = if head_in && head_at_v {
                        !self.collider_open[v]
                    } else {
                        self.in_z[v]
                    };
                    if blocked {
                        continue;
                    }
                }
                if self.in_y[w] {
                    return true;
                }
                self.visited[w] = true;
                let found = self.go(w, Some(head_at_w));
                self.visited[w] = false;
                if found {
                    return true;
                }
            }
            false
        }
    }

    let mut walk = Walk {
        adj: &adj,
        in_z: &in_z,
        in_y: &in_y,
        collider_open: &collider_open,
        visited: vec![false; n],
    };
    q.x.iter().any(|&a| {
        walk.visited[a] = true;
        let found = walk.go(a, None);
        walk.visited[a] = false;
        found
    })
}

/// Adjacency bitmasks of a graph with at most 64 vertices.
#[derive(Debug, Clone)]
pub struct MaskGraph {
    parents: Vec<u64>,
    children: Vec<u64>,
}

impl MaskGraph {
    pub fn new(g: &CausalGraph) -> Option<Self> {
        let n = g.vertex_count();
        if n > 64 {
            return None;
        }
        let mut parents = vec![0u64; n];
        let mut children = vec![0u64; n];
        for e in g.edges() {
            parents[e.target] |= 1 << e.source;
            children[e.source] |= 1 << e.target;
        }
        Some(Self { parents, children })
    }

    /// `z` together with every ancestor of a member of `z`.
    fn ancestors_of(&self, z: u64) -> u64 {
        let mut anc = z;
        let mut frontier = z;
        while frontier != 0 {
            let v = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let fresh = self.parents[v] & !anc;
            anc |= fresh;
            frontier |= fresh;
        }
        anc
    }

    /// Active-trail reachability; exact for acyclic graphs.
    pub fn d_separated(&self, x: u64, y: u64, z: u64) -> bool {
        let anc = self.ancestors_of(z);
        // bit v of `up`: reached v from a child; of `down`: reached v from a parent
        let mut up_seen = 0u64;
        let mut down_seen = 0u64;
        let mut up_todo = x;
        let mut down_todo = 0u64;
        let mut reached = 0u64;
        while up_todo | down_todo != 0 {
            if up_todo != 0 {
                let v = up_todo.trailing_zeros() as usize;
                let bit = 1u64 << v;
                up_todo &= !bit;
                if up_seen & bit != 0 {
                    continue;
                }
                up_seen |= bit;
                if z & bit == 0 {
                    reached |= bit;
                    up_todo |= self.parents[v] & !up_seen;
                    down_todo |= self.children[v] & !down_seen;
                }
            } else {
                let v = down_todo.trailing_zeros() as usize;
                let bit = 1u64 << v;
                down_todo &= !bit;
                if down_seen & bit != 0 {
                    continue;
                }
                down_seen |= bit;
                if z & bit == 0 {
                    reached |= bit;
                    down_todo |= self.children[v] & !down_seen;
                }
                if anc & bit != 0 {
                    up_todo |= self.parents[v] & !up_seen;
                }
            }
            if reached & y != 0 {
                return false;
            }
        }
        true
    }
}

pub fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0, |m, &v| m | 1 << v)
}

/// d-separation on an acyclic graph by active-trail reachability.
pub fn d_separated_reachability(g: &CausalGraph, q: &SeparationQuery) -> Result<bool> {
    SeparationQuery::from_indices(g, q.x.clone(), q.y.clone(), q.z.clone())?;
    if !g.is_acyclic() {
        return Err(QcmError::InvalidGraph(
            "reachability d-separation requires an acyclic graph".into(),
        ));
    }
    let mg = MaskGraph::new(g)
        .ok_or_else(|| QcmError::InvalidGraph("reachability d-separation supports at most 64 vertices".into()))?;
    Ok(mg.d_separated(mask_of(&q.x), mask_of(&q.y), mask_of(&q.z)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitVariant {
    EdgeSplit,
    VertexSplit,
}

struct Member {
    graph: CausalGraph,
    post: Vec<usize>,
    masks: Option<(MaskGraph, u64)>,
}

/// The teleportation family of one graph, prepared for repeated p-separation queries.
pub struct PSeparation {
    vertex_count: usize,
    members: Vec<Member>,
}

impl PSeparation {
    pub fn new(g: &CausalGraph, variant: SplitVariant, cap: usize) -> Result<Self> {
        let mut members = Vec::new();
        let mut push = |graph: CausalGraph, post: Vec<usize>| {
            let masks = MaskGraph::new(&graph).map(|m| (m, mask_of(&post)));
            members.push(Member { graph, post, masks });
        };
        match variant {
            SplitVariant::EdgeSplit => {
                for kept in g.enumerate_acyclic_edge_subsets(cap)? {
                    let tg = build_teleportation_graph(g, &kept)?;
                    push(tg.graph().clone(), tg.post_selection_vertices());
                }
            }
            SplitVariant::VertexSplit => {
                for split in g.enumerate_vertex_split_sets(cap)? {
                    let vs = build_vertex_split_graph(g, &split)?;
                    push(vs.graph().clone(), vs.post_selection_vertices());
                }
            }
        }
        Ok(Self {
            vertex_count: g.vertex_count(),
            members,
        })
    }

    pub fn family_size(&self) -> usize {
        self.members.len()
    }

    fn check(&self, q: &SeparationQuery) -> Result<()> {
        if let Some(&v) = q.x.iter().chain(&q.y).chain(&q.z).find(|&&v| v >= self.vertex_count) {
            return Err(QcmError::UnknownVertex(format!("vertex index {v}")));
        }
        Ok(())
    }

    /// Whether some member d-separates the query given `z` plus its post-selection vertices.
    pub fn separated(&self, q: &SeparationQuery) -> Result<bool> {
        self.check(q)?;
        let (x, y, z) = (mask_of(&q.x), mask_of(&q.y), mask_of(&q.z));
        Ok(self.members.iter().any(|m| match &m.masks {
            Some((mg, post)) => mg.d_separated(x, y, z | post),
            None => !connected_by_paths(&m.graph, &with_post(q, &m.post)),
        }))
    }

    /// Same existential, checked with the path enumerator on every member.
    pub fn separated_by_paths(&self, q: &SeparationQuery) -> Result<bool> {
        self.check(q)?;
        Ok(self
            .members
            .par_iter()
            .any(|m| !connected_by_paths(&m.graph, &with_post(q, &m.post))))
    }
}

fn with_post(q: &SeparationQuery, post: &[usize]) -> SeparationQuery {
    let mut z = q.z.clone();
    z.extend_from_slice(post);
    SeparationQuery {
        x: q.x.clone(),
        y: q.y.clone(),
        z,
    }
}

pub fn p_separated(g: &CausalGraph, q: &SeparationQuery, variant: SplitVariant, cap: usize) -> Result<bool> {
    SeparationQuery::from_indices(g, q.x.clone(), q.y.clone(), q.z.clone())?;
    PSeparation::new(g, variant, cap)?.separated(q)
}

/// Result of a conditional-independence test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiReport {
    pub independent: bool,
    /// Largest `|P(x1,x2|x3) - P(x1|x3) P(x2|x3)|` over conditioning values with `P(x3) > tol`.
    pub max_violation: f64,
}

pub fn conditional_independence(
    d: &Distribution,
    x1: &[&str],
    x2: &[&str],
    x3: &[&str],
    tol: f64,
) -> Result<CiReport> {
    if x1.is_empty() || x2.is_empty() {
        return Err(QcmError::InvalidQuery("the first two variable sets must be non-empty".into()));
    }
    let mut all: Vec<&str> = Vec::new();
    for &name in x1.iter().chain(x2).chain(x3) {
        d.variable_index(name)?;
        if all.contains(&name) {
            return Err(QcmError::InvalidQuery(format!(
                "variable {name} appears twice; the sets must be disjoint"
            )));
        }
        all.push(name);
    }
    let joint = d.marginal(&all)?;
    let cards = joint.cardinalities();
    let (n1, n2) = (x1.len(), x2.len());
    let c1: usize = cards[..n1].iter().product();
    let c2: usize = cards[n1..n1 + n2].iter().product();
    let c3: usize = cards[n1 + n2..].iter().product();
    // joint is row-major over (x1, x2, x3), so entry (a, b, c) sits at (a*c2 + b)*c3 + c
    let p = |a: usize, b: usize, c: usize| joint.probs()[(a * c2 + b) * c3 + c];
    let mut max_violation: f64 = 0.0;
    for c in 0..c3 {
        let pc: f64 = (0..c1).flat_map(|a| (0..c2).map(move |b| (a, b))).map(|(a, b)| p(a, b, c)).sum();
        if !(pc > tol) {
            continue;
        }
        let pa: Vec<f64> = (0..c1).map(|a| (0..c2).map(|b| p(a, b, c)).sum::<f64>() / pc).collect();
        let pb: Vec<f64> = (0..c2).map(|b| (0..c1).map(|a| p(a, b, c)).sum::<f64>() / pc).collect();
        for a in 0..c1 {
            for b in 0..c2 {
                let v = (p(a, b, c) / pc - pa[a] * pb[b]).abs();
                if v > max_violation || v.is_nan() {
                    max_violation = v;
                }
            }
        }
    }
    Ok(CiReport {
        independent: max_violation <= tol,
        max_violation,
    })
}

pub fn conditionally_independent(d: &Distribution, x1: &[&str], x2: &[&str], x3: &[&str], tol: f64) -> Result<bool> {
    Ok(conditional_independence(d, x1, x2, x3, tol)?.independent)
}

/// All ordered queries `(X, Y, Z)` over `n` vertices with `X`, `Y` non-empty and disjoint.
pub fn all_queries(n: usize) -> Vec<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let dims = vec![4usize; n];
    (0..4usize.pow(n as u32))
        .filter_map(|flat| {
            let roles = unflatten(flat, &dims);
            let pick = |r: usize| (0..n).filter(|&v| roles[v] == r).collect::<Vec<_>>();
            let (x, y, z) = (pick(1), pick(2), pick(3));
            (!x.is_empty() && !y.is_empty()).then_some((x, y, z))
        })
        .collect()
}
