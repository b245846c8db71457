//! Random instances for property tests and sweeps.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::graph::{CausalGraph, Edge, EdgeKind, Vertex, VertexKind};
use crate::model::{schmidt_protocol, CausalModel, EdgeOrdering, FunctionalModel, Mechanism, TeleProtocol};
use crate::tensor::{c, decohere, unflatten, KrausChannel, Matrix, Povm, C64, ZERO};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    c(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Complex Gaussian matrix.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| gaussian(rng)).collect()).unwrap()
}

/// Haar-random unitary from the phase-corrected QR decomposition of a Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Matrix {
    let g = ginibre(rng, d, d);
    let qr = nalgebra::DMatrix::from_fn(d, d, |i, j| g[(i, j)]).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = Matrix::zeros(d, d);
    for j in 0..d {
        let phase = if r[(j, j)].norm() > 0.0 { r[(j, j)] / r[(j, j)].norm() } else { c(1.0, 0.0) };
        for i in 0..d {
            u[(i, j)] = q[(i, j)] * phase;
        }
    }
    u
}

/// Random pure state vector.
pub fn random_pure<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..d).map(|_| gaussian(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Random full-rank density matrix `G G† / Tr(G G†)`.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Matrix {
    let g = ginibre(rng, d, d);
    let p = &g * &g.adjoint();
    let t = p.trace();
    p.scale(c(1.0, 0.0) / t)
}

fn inverse_sqrt(s: &Matrix) -> Matrix {
    let (values, vectors) = s.hermitian_eigen().unwrap();
    let diag = Matrix::diagonal(&values.iter().map(|&l| c(1.0 / l.sqrt(), 0.0)).collect::<Vec<_>>());
    &(&vectors * &diag) * &vectors.adjoint()
}

/// Random channel with at least `kraus` Gaussian Kraus operators, normalized to be trace preserving.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize, kraus: usize) -> KrausChannel {
    // enough operators for Σ K†K to be invertible
    let count = kraus.max(in_dim.div_ceil(out_dim)).max(1);
    let ks: Vec<Matrix> = (0..count).map(|_| ginibre(rng, out_dim, in_dim)).collect();
    let mut s = Matrix::zeros(in_dim, in_dim);
    for k in &ks {
        s = &s + &(&k.adjoint() * k);
    }
    let fix = inverse_sqrt(&s);
    KrausChannel::new(in_dim, out_dim, ks.iter().map(|k| k * &fix).collect()).unwrap()
}

/// Follows `ch` by a computational-basis measurement of the `classical` output factors.
pub fn dephase_outputs(ch: &KrausChannel, out_dims: &[usize], classical: &[usize]) -> KrausChannel {
    if classical.is_empty() {
        return ch.clone();
    }
    let cdims: Vec<usize> = classical.iter().map(|&k| out_dims[k]).collect();
    let dout = ch.out_dim();
    let mut kraus = Vec::new();
    for flat in 0..cdims.iter().product() {
        let digits = unflatten(flat, &cdims);
        let diag: Vec<C64> = (0..dout)
            .map(|i| {
                let d = unflatten(i, out_dims);
                let hit = classical.iter().zip(&digits).all(|(&k, &x)| d[k] == x);
                if hit { c(1.0, 0.0) } else { ZERO }
            })
            .collect();
        let p = Matrix::diagonal(&diag);
        kraus.extend(ch.kraus().iter().map(|k| &p * k));
    }
    KrausChannel::new(ch.in_dim(), dout, kraus).unwrap()
}

/// Random POVM with `n` full-rank elements.
pub fn random_povm<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> Povm {
    let raw: Vec<Matrix> = (0..n)
        .map(|_| {
            let g = ginibre(rng, d, d);
            &g * &g.adjoint()
        })
        .collect();
    let mut s = Matrix::zeros(d, d);
    for a in &raw {
        s = &s + a;
    }
    let fix = inverse_sqrt(&s);
    Povm::new(d, raw.iter().map(|a| &(&fix * a) * &fix).collect()).unwrap()
}

/// Random protocol of the Schmidt form with random local unitaries and `q` at or below its maximum.
pub fn random_schmidt_protocol<R: Rng + ?Sized>(rng: &mut R, d: usize) -> TeleProtocol {
    loop {
        let lambdas: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.0)).collect();
        let v = random_unitary(rng, d);
        let w = random_unitary(rng, d);
        let norm: f64 = lambdas.iter().map(|l| l * l).sum();
        let q_max = 1.0 / lambdas.iter().map(|l| norm / (l * l)).sum::<f64>();
        let q = q_max * rng.random_range(0.5..=1.0);
        if let Ok(p) = schmidt_protocol(&lambdas, &v, &w, Some(q)) {
            return p;
        }
    }
}

/// Shape of a random graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphShape {
    pub vertices: usize,
    pub max_edges: usize,
    /// Require a directed cycle (true) or forbid one (false).
    pub cyclic: bool,
    pub self_loops: bool,
    /// Probability that a vertex is observed.
    pub observed: f64,
}

/// Random causal graph; observed vertices only emit classical edges.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, shape: GraphShape) -> CausalGraph {
    let n = shape.vertices;
    loop {
        let vertices: Vec<Vertex> = (0..n)
            .map(|v| Vertex {
                id: format!("v{v}"),
                kind: if rng.random_bool(shape.observed) { VertexKind::Observed } else { VertexKind::Unobserved },
            })
            .collect();
        if vertices.iter().all(|v| v.kind == VertexKind::Unobserved) {
            continue;
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for s in 0..n {
            for t in 0..n {
                if (s != t || shape.self_loops) && (shape.cyclic || s < t) {
                    pairs.push((s, t));
                }
            }
        }
        let m = rng.random_range(if shape.cyclic { 1 } else { 0 }..=shape.max_edges.min(pairs.len()));
        let mut chosen = Vec::with_capacity(m);
        for _ in 0..m {
            let k = rng.random_range(0..pairs.len());
            chosen.push(pairs.swap_remove(k));
        }
        chosen.sort_unstable();
        // relabel so acyclic graphs do not always follow vertex order
        let relabel: Vec<usize> = if shape.cyclic {
            (0..n).collect()
        } else {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p
        };
        let edges: Vec<Edge> = chosen
            .into_iter()
            .map(|(s, t)| {
                let (s, t) = (relabel[s], relabel[t]);
                let kind = if vertices[s].kind == VertexKind::Observed || rng.random_bool(0.3) {
                    EdgeKind::Classical
                } else {
                    EdgeKind::Quantum
                };
                Edge { source: s, target: t, kind }
            })
            .collect();
        let g = CausalGraph::from_parts(vertices, edges).expect("generated graph is well formed");
        if g.is_acyclic() != shape.cyclic {
            return g;
        }
    }
}

/// Random valid model on `g` with dimensions in `2..=max_dim` and total edge dimension at most `max_total`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, g: &CausalGraph, max_dim: usize, max_total: u128) -> CausalModel {
    let n = g.vertex_count();
    let mut outcomes: Vec<usize> = (0..n)
        .map(|v| if g.kind(v) == VertexKind::Observed { rng.random_range(2..=max_dim) } else { 0 })
        .collect();
    let mut dims: Vec<usize> = g
        .edges()
        .iter()
        .map(|e| if g.kind(e.source) == VertexKind::Observed { outcomes[e.source] } else { rng.random_range(2..=max_dim) })
        .collect();
    // shrink random edges until the total fits
    while dims.iter().map(|&d| d as u128).product::<u128>() > max_total {
        let shrinkable: Vec<usize> = (0..dims.len()).filter(|&e| dims[e] > 2).collect();
        assert!(!shrinkable.is_empty(), "max_total {max_total} is below 2^edges");
        let e = shrinkable[rng.random_range(0..shrinkable.len())];
        let s = g.edge(e).source;
        if g.kind(s) == VertexKind::Observed {
            outcomes[s] -= 1;
            for &f in &g.out_edges(s) {
                dims[f] = outcomes[s];
            }
        } else {
            dims[e] -= 1;
        }
    }
    let labels = |k: usize| (0..k).map(|x| x.to_string()).collect::<Vec<_>>();
    let edge_outcomes = g
        .edges()
        .iter()
        .zip(&dims)
        .map(|(e, &d)| (e.kind == EdgeKind::Classical).then(|| labels(d)))
        .collect();
    let vertex_outcomes = (0..n).map(|v| (outcomes[v] > 0).then(|| labels(outcomes[v]))).collect();
    let mechanisms = (0..n)
        .map(|v| {
            let din: usize = g.in_edges(v).iter().map(|&e| dims[e]).product();
            let outs = g.out_edges(v);
            let od: Vec<usize> = outs.iter().map(|&e| dims[e]).collect();
            let dout: usize = od.iter().product();
            let classical: Vec<usize> =
                (0..outs.len()).filter(|&k| g.edge(outs[k]).kind == EdgeKind::Classical).collect();
            match g.kind(v) {
                VertexKind::Observed => Mechanism::Measurement(random_povm(rng, din, outcomes[v])),
                VertexKind::Unobserved if din == 1 => {
                    let rho = random_state(rng, dout);
                    Mechanism::State(decohere(&rho, &od, &classical).unwrap())
                }
                VertexKind::Unobserved => {
                    let k = rng.random_range(1..=3);
                    Mechanism::Channel(dephase_outputs(&random_channel(rng, din, dout, k), &od, &classical))
                }
            }
        })
        .collect();
    CausalModel::new(g.clone(), dims, edge_outcomes, vertex_outcomes, mechanisms, EdgeOrdering::default())
        .expect("generated model is well formed")
}

/// Random all-observed, all-classical graph for functional models.
pub fn random_functional_graph<R: Rng + ?Sized>(rng: &mut R, vertices: usize, max_edges: usize, cyclic: bool) -> CausalGraph {
    random_graph(
        rng,
        GraphShape {
            vertices,
            max_edges,
            cyclic,
            self_loops: cyclic,
            observed: 1.0,
        },
    )
}

/// Random binary functional model with up to `max_errors` error values per vertex.
pub fn random_functional_model<R: Rng + ?Sized>(rng: &mut R, g: &CausalGraph, max_errors: usize) -> Result<FunctionalModel> {
    let n = g.vertex_count();
    let outcomes = vec![vec!["0".to_string(), "1".to_string()]; n];
    let mut errors = Vec::with_capacity(n);
    let mut priors = Vec::with_capacity(n);
    let mut tables = Vec::with_capacity(n);
    for v in 0..n {
        let k = rng.random_range(1..=max_errors);
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
        let rest: f64 = p[..k - 1].iter().sum();
        p[k - 1] = 1.0 - rest;
        errors.push((0..k).map(|u| format!("u{u}")).collect());
        priors.push(p);
        let rows = (1usize << g.in_edges(v).len()) * k;
        tables.push((0..rows).map(|_| rng.random_range(0..2)).collect());
    }
    FunctionalModel::new(g.clone(), outcomes, errors, priors, tables)
}
