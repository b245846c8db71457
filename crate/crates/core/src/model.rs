//! Quantum causal models, post-selected teleportation protocols and functional models.

use std::collections::BTreeMap;

use crate::distribution::Variable;
use crate::error::{QcmError, Result};
use crate::graph::{CausalGraph, EdgeKind, TeleportationGraph, VertexKind};
use crate::tensor::{
    apply_channel, c, decohere, partial_trace, validate_cptp, validate_povm, validate_state, KrausChannel, Matrix,
    Povm, C64, DEFAULT_TOL, ZERO,
};
use crate::validation::ValidationReport;

/// Outcome labels of the post-selection vertices of a teleportation model.
pub const POST_SELECTION_OUTCOMES: [&str; 2] = ["ok", "fail"];

/// The map attached to a vertex.
#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    /// Exogenous unobserved vertex: a density matrix on its out-edge space.
    State(Matrix),
    /// Unobserved vertex: a channel from the in-edge space to the out-edge space.
    Channel(KrausChannel),
    /// Observed vertex: a measurement on the in-edge space.
    Measurement(Povm),
}

/// A causal graph with Hilbert spaces on edges and mechanisms on vertices.
///
/// Construction checks only that every table has the right length; the physical
/// conditions are checked by [`validate_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct CausalModel {
    graph: CausalGraph,
    edge_dims: Vec<usize>,
    edge_outcomes: Vec<Option<Vec<String>>>,
    vertex_outcomes: Vec<Option<Vec<String>>>,
    mechanisms: Vec<Mechanism>,
    in_order: Vec<Vec<usize>>,
    out_order: Vec<Vec<usize>>,
}

/// Explicit tensor-factor ordering of the in- and out-edges of some vertices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeOrdering {
    pub inputs: BTreeMap<usize, Vec<usize>>,
    pub outputs: BTreeMap<usize, Vec<usize>>,
}

impl CausalModel {
    pub fn new(
        graph: CausalGraph,
        edge_dims: Vec<usize>,
        edge_outcomes: Vec<Option<Vec<String>>>,
        vertex_outcomes: Vec<Option<Vec<String>>>,
        mechanisms: Vec<Mechanism>,
        ordering: EdgeOrdering,
    ) -> Result<Self> {
        let (n, m) = (graph.vertex_count(), graph.edge_count());
        for (what, len, expected) in [
            ("edge dimensions", edge_dims.len(), m),
            ("edge outcome sets", edge_outcomes.len(), m),
            ("vertex outcome sets", vertex_outcomes.len(), n),
            ("mechanisms", mechanisms.len(), n),
        ] {
            if len != expected {
                return Err(QcmError::DimensionMismatch {
                    context: what.into(),
                    expected,
                    found: len,
                });
            }
        }
        if let Some(e) = edge_dims.iter().position(|&d| d == 0) {
            return Err(QcmError::InvalidModel(format!("edge {} has dimension 0", graph.edge_label(e))));
        }
        let mut in_order = Vec::with_capacity(n);
        let mut out_order = Vec::with_capacity(n);
        for v in 0..n {
            in_order.push(resolve_order(&graph, v, graph.in_edges(v), ordering.inputs.get(&v), "in")?);
            out_order.push(resolve_order(&graph, v, graph.out_edges(v), ordering.outputs.get(&v), "out")?);
        }
        Ok(Self {
            graph,
            edge_dims,
            edge_outcomes,
            vertex_outcomes,
            mechanisms,
            in_order,
            out_order,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn edge_dim(&self, e: usize) -> usize {
        self.edge_dims[e]
    }

    pub fn edge_dims(&self) -> &[usize] {
        &self.edge_dims
    }

    pub fn edge_outcomes(&self, e: usize) -> Option<&[String]> {
        self.edge_outcomes[e].as_deref()
    }

    pub fn vertex_outcomes(&self, v: usize) -> Option<&[String]> {
        self.vertex_outcomes[v].as_deref()
    }

    pub fn mechanism(&self, v: usize) -> &Mechanism {
        &self.mechanisms[v]
    }

    /// In-edges of `v` in tensor-factor order.
    pub fn inputs(&self, v: usize) -> &[usize] {
        &self.in_order[v]
    }

    /// Out-edges of `v` in tensor-factor order.
    pub fn outputs(&self, v: usize) -> &[usize] {
        &self.out_order[v]
    }

    pub fn in_dim(&self, v: usize) -> usize {
        self.in_order[v].iter().map(|&e| self.edge_dims[e]).product()
    }

    pub fn out_dim(&self, v: usize) -> usize {
        self.out_order[v].iter().map(|&e| self.edge_dims[e]).product()
    }

    /// Same model with the mechanism of `v` replaced.
    pub fn with_mechanism(mut self, v: usize, mech: Mechanism) -> Self {
        self.mechanisms[v] = mech;
        self
    }

    /// Ordering entries that differ from the default edge order.
    pub fn explicit_ordering(&self) -> EdgeOrdering {
        let mut ordering = EdgeOrdering::default();
        for v in 0..self.graph.vertex_count() {
            if self.in_order[v] != self.graph.in_edges(v) {
                ordering.inputs.insert(v, self.in_order[v].clone());
            }
            if self.out_order[v] != self.graph.out_edges(v) {
                ordering.outputs.insert(v, self.out_order[v].clone());
            }
        }
        ordering
    }

    /// Number of outcomes of an observed vertex (from its outcome set, else its POVM).
    pub fn outcome_count(&self, v: usize) -> usize {
        match (&self.vertex_outcomes[v], &self.mechanisms[v]) {
            (Some(o), _) => o.len(),
            (None, Mechanism::Measurement(p)) => p.elements().len(),
            _ => 0,
        }
    }

    /// The observed vertices as distribution variables, in vertex order.
    pub fn variables(&self) -> Vec<Variable> {
        self.graph
            .observed_vertices()
            .into_iter()
            .map(|v| Variable {
                name: self.graph.id(v).to_string(),
                outcomes: match &self.vertex_outcomes[v] {
                    Some(o) => o.clone(),
                    None => (0..self.outcome_count(v)).map(|k| k.to_string()).collect(),
                },
            })
            .collect()
    }

    /// Product of all edge dimensions.
    pub fn total_dimension(&self) -> u128 {
        self.edge_dims.iter().map(|&d| d as u128).product()
    }
}

fn resolve_order(
    g: &CausalGraph,
    v: usize,
    default: Vec<usize>,
    explicit: Option<&Vec<usize>>,
    side: &str,
) -> Result<Vec<usize>> {
    let Some(explicit) = explicit else {
        return Ok(default);
    };
    let mut a = explicit.clone();
    let mut b = default.clone();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return Err(QcmError::InvalidModel(format!(
            "{side}-edge ordering of {} must list each {side}-edge exactly once",
            g.id(v)
        )));
    }
    Ok(explicit.clone())
}

/// Convenience builder addressing vertices and edges by id and `A->B` label.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    graph: CausalGraph,
    edge_dims: Vec<Option<usize>>,
    edge_outcomes: Vec<Option<Vec<String>>>,
    vertex_outcomes: Vec<Option<Vec<String>>>,
    mechanisms: Vec<Option<Mechanism>>,
    ordering: EdgeOrdering,
}

impl ModelBuilder {
    pub fn new(graph: CausalGraph) -> Self {
        let (n, m) = (graph.vertex_count(), graph.edge_count());
        Self {
            graph,
            edge_dims: vec![None; m],
            edge_outcomes: vec![None; m],
            vertex_outcomes: vec![None; n],
            mechanisms: vec![None; n],
            ordering: EdgeOrdering::default(),
        }
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn edge_dim(mut self, edge: &str, d: usize) -> Result<Self> {
        let e = self.graph.edge_index(edge)?;
        self.edge_dims[e] = Some(d);
        Ok(self)
    }

    pub fn edge_outcomes(mut self, edge: &str, outcomes: &[&str]) -> Result<Self> {
        let e = self.graph.edge_index(edge)?;
        self.edge_outcomes[e] = Some(outcomes.iter().map(|s| s.to_string()).collect());
        Ok(self)
    }

    pub fn vertex_outcomes(mut self, vertex: &str, outcomes: &[&str]) -> Result<Self> {
        let v = self.graph.vertex_index(vertex)?;
        self.vertex_outcomes[v] = Some(outcomes.iter().map(|s| s.to_string()).collect());
        Ok(self)
    }

    pub fn state(mut self, vertex: &str, rho: Matrix) -> Result<Self> {
        let v = self.graph.vertex_index(vertex)?;
        self.mechanisms[v] = Some(Mechanism::State(rho));
        Ok(self)
    }

    pub fn channel(mut self, vertex: &str, ch: KrausChannel) -> Result<Self> {
        let v = self.graph.vertex_index(vertex)?;
        self.mechanisms[v] = Some(Mechanism::Channel(ch));
        Ok(self)
    }

    pub fn povm(mut self, vertex: &str, p: Povm) -> Result<Self> {
        let v = self.graph.vertex_index(vertex)?;
        self.mechanisms[v] = Some(Mechanism::Measurement(p));
        Ok(self)
    }

    pub fn mechanism(mut self, v: usize, mech: Mechanism) -> Self {
        self.mechanisms[v] = Some(mech);
        self
    }

    pub fn input_order(mut self, vertex: &str, edges: &[&str]) -> Result<Self> {
        let v = self.graph.vertex_index(vertex)?;
        let es = edges.iter().map(|e| self.graph.edge_index(e)).collect::<Result<Vec<_>>>()?;
        self.ordering.inputs.insert(v, es);
        Ok(self)
    }

    pub fn output_order(mut self, vertex: &str, edges: &[&str]) -> Result<Self> {
        let v = self.graph.vertex_index(vertex)?;
        let es = edges.iter().map(|e| self.graph.edge_index(e)).collect::<Result<Vec<_>>>()?;
        self.ordering.outputs.insert(v, es);
        Ok(self)
    }

    /// Fills defaults and assembles the model.
    ///
    /// A classical edge out of an observed vertex inherits the vertex's outcome set; any
    /// other classical edge without outcomes gets labels `0..d`. Dimensions of classical
    /// edges default to their outcome count.
    pub fn build(self) -> Result<CausalModel> {
        let g = &self.graph;
        let mut edge_outcomes = self.edge_outcomes.clone();
        let mut edge_dims = Vec::with_capacity(g.edge_count());
        for e in 0..g.edge_count() {
            let edge = g.edge(e);
            if edge.kind == EdgeKind::Classical && edge_outcomes[e].is_none() {
                if g.kind(edge.source) == VertexKind::Observed {
                    edge_outcomes[e] = self.vertex_outcomes[edge.source].clone();
                }
                if edge_outcomes[e].is_none() {
                    if let Some(d) = self.edge_dims[e] {
                        edge_outcomes[e] = Some((0..d).map(|k| k.to_string()).collect());
                    }
                }
            }
            let d = match (self.edge_dims[e], &edge_outcomes[e]) {
                (Some(d), _) => d,
                (None, Some(o)) if edge.kind == EdgeKind::Classical => o.len(),
                _ => {
                    return Err(QcmError::InvalidModel(format!(
                        "edge {} has no dimension",
                        g.edge_label(e)
                    )))
                }
            };
            edge_dims.push(d);
        }
        let mut mechanisms = Vec::with_capacity(g.vertex_count());
        for (v, m) in self.mechanisms.into_iter().enumerate() {
            mechanisms.push(m.ok_or_else(|| QcmError::InvalidModel(format!("vertex {} has no mechanism", g.id(v))))?);
        }
        CausalModel::new(
            self.graph,
            edge_dims,
            edge_outcomes,
            self.vertex_outcomes,
            mechanisms,
            self.ordering,
        )
    }
}

/// Checks every condition a causal model must satisfy and reports all failures.
pub fn validate_model(m: &CausalModel) -> ValidationReport {
    validate_model_with(m, DEFAULT_TOL)
}

pub fn validate_model_with(m: &CausalModel, tol: f64) -> ValidationReport {
    let g = m.graph();
    let mut report = ValidationReport::new();
    for e in 0..g.edge_count() {
        let edge = g.edge(e);
        let label = format!("edge {}", g.edge_label(e));
        if edge.kind == EdgeKind::Classical {
            match m.edge_outcomes(e) {
                None => report.fail(&label, "classical edge has no outcome set"),
                Some(o) => {
                    if o.len() != m.edge_dim(e) {
                        report.fail(
                            &label,
                            format!("dimension {} differs from its {} outcomes", m.edge_dim(e), o.len()),
                        );
                    }
                    if g.kind(edge.source) == VertexKind::Observed {
                        if let Some(vo) = m.vertex_outcomes(edge.source) {
                            if vo != o {
                                report.fail(
                                    &label,
                                    format!(
                                        "outcome set {o:?} does not match the outcomes {vo:?} of {}",
                                        g.id(edge.source)
                                    ),
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    for v in 0..g.vertex_count() {
        let label = format!("vertex {}", g.id(v));
        let (din, dout) = (m.in_dim(v), m.out_dim(v));
        match (g.kind(v), m.mechanism(v)) {
            (VertexKind::Observed, Mechanism::Measurement(p)) => {
                if p.dim() != din {
                    report.fail(&label, format!("POVM acts on dimension {} but the in-edges carry {din}", p.dim()));
                }
                match m.vertex_outcomes(v) {
                    None => report.fail(&label, "observed vertex has no outcome set"),
                    Some(o) if o.len() != p.elements().len() => report.fail(
                        &label,
                        format!("{} POVM elements for {} outcomes", p.elements().len(), o.len()),
                    ),
                    _ => {}
                }
                report.absorb(&format!("{label} POVM"), validate_povm(p, tol));
            }
            (VertexKind::Observed, _) => report.fail(&label, "observed vertex needs a POVM"),
            (VertexKind::Unobserved, Mechanism::Measurement(_)) => {
                report.fail(&label, "unobserved vertex needs a channel or state, not a POVM")
            }
            (VertexKind::Unobserved, Mechanism::State(rho)) => {
                if din != 1 {
                    report.fail(&label, "only exogenous vertices may carry a state");
                }
                if rho.rows() != dout || rho.cols() != dout {
                    report.fail(
                        &label,
                        format!("state is {}x{} but the out-edges carry {dout}", rho.rows(), rho.cols()),
                    );
                } else {
                    report.absorb(&format!("{label} state"), validate_state(rho, tol));
                    check_decoherence(m, v, &KrausChannel::from_state(rho), tol, &label, &mut report);
                }
            }
            (VertexKind::Unobserved, Mechanism::Channel(ch)) => {
                if ch.in_dim() != din || ch.out_dim() != dout {
                    report.fail(
                        &label,
                        format!(
                            "channel maps {} -> {} but the edges carry {din} -> {dout}",
                            ch.in_dim(),
                            ch.out_dim()
                        ),
                    );
                } else {
                    report.absorb(&format!("{label} channel"), validate_cptp(ch, tol));
                    check_decoherence(m, v, &Ok(ch.clone()), tol, &label, &mut report);
                }
            }
        }
    }
    report
}

fn check_decoherence(
    m: &CausalModel,
    v: usize,
    ch: &Result<KrausChannel>,
    tol: f64,
    label: &str,
    report: &mut ValidationReport,
) {
    let g = m.graph();
    let outs = m.outputs(v);
    let classical: Vec<usize> = (0..outs.len())
        .filter(|&k| g.edge(outs[k]).kind == EdgeKind::Classical)
        .collect();
    if classical.is_empty() {
        return;
    }
    let ch = match ch {
        Ok(ch) => ch,
        Err(e) => {
            report.fail(label, e.to_string());
            return;
        }
    };
    let dims: Vec<usize> = outs.iter().map(|&e| m.edge_dim(e)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..ch.in_dim() {
        for j in 0..ch.in_dim() {
            let out = match apply_channel(ch, &Matrix::unit(ch.in_dim(), i, j)) {
                Ok(o) => o,
                Err(e) => {
                    report.fail(label, e.to_string());
                    return;
                }
            };
            match decohere(&out, &dims, &classical) {
                Ok(d) => worst = worst.max(d.max_abs_diff(&out)),
                Err(e) => {
                    report.fail(label, e.to_string());
                    return;
                }
            }
        }
    }
    report.record_deviation(worst);
    if !(worst <= tol) {
        report.fail(
            label,
            format!("decoherence condition violated on classical out-edges (deviation {worst:e})"),
        );
    }
}

/// A post-selected teleportation protocol from `A` to `C` through the ancilla `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleProtocol {
    /// Dimension of `A` and of `C`.
    pub dim: usize,
    /// Dimension of `B`.
    pub dim_b: usize,
    /// Post-selection effect `E` on `A ⊗ B`.
    pub post_element: Matrix,
    /// Pre-selected state `τ` on `B ⊗ C`.
    pub pre_state: Matrix,
    pub success_prob: f64,
}

fn phi_plus(d: usize) -> Vec<C64> {
    let mut v = vec![ZERO; d * d];
    let amp = c(1.0 / (d as f64).sqrt(), 0.0);
    for i in 0..d {
        v[i * d + i] = amp;
    }
    v
}

/// The canonical protocol with `E = τ = |Φ⁺⟩⟨Φ⁺|` and `q = 1/d²`.
pub fn bell_protocol(d: usize) -> TeleProtocol {
    let phi = phi_plus(d);
    let proj = Matrix::outer(&phi, &phi);
    TeleProtocol {
        dim: d,
        dim_b: d,
        post_element: proj.clone(),
        pre_state: proj,
        success_prob: 1.0 / (d * d) as f64,
    }
}

/// Protocol built from Schmidt coefficients `λ` and local unitaries.
///
/// `|τ⟩ = Σ λ_k W|k⟩_B V|k⟩_C` and `|E⟩ = √q Σ λ_k⁻¹ V|k⟩_A W|k⟩_B`, with `q` defaulting to
/// its largest admissible value `1/Σ λ_k⁻²`. The coefficients are normalized first.
pub fn schmidt_protocol(lambdas: &[f64], v: &Matrix, w: &Matrix, q: Option<f64>) -> Result<TeleProtocol> {
    let d = lambdas.len();
    if d == 0 || lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(QcmError::InvalidProtocol("Schmidt coefficients must be positive".into()));
    }
    for (name, u) in [("V", v), ("W", w)] {
        if u.rows() != d || u.cols() != d {
            return Err(QcmError::DimensionMismatch {
                context: format!("unitary {name}"),
                expected: d,
                found: u.rows(),
            });
        }
    }
    let norm = lambdas.iter().map(|l| l * l).sum::<f64>().sqrt();
    let lambdas: Vec<f64> = lambdas.iter().map(|l| l / norm).collect();
    let q_max = 1.0 / lambdas.iter().map(|l| 1.0 / (l * l)).sum::<f64>();
    let q = q.unwrap_or(q_max);
    if !(q > 0.0 && q <= q_max * (1.0 + 1e-12)) {
        return Err(QcmError::InvalidProtocol(format!(
            "success probability {q} outside (0, {q_max}] for these coefficients"
        )));
    }
    let mut tau = vec![ZERO; d * d];
    let mut eff = vec![ZERO; d * d];
    for (k, &l) in lambdas.iter().enumerate() {
        for a in 0..d {
            for b in 0..d {
                // W|k⟩ ⊗ V|k⟩ and V|k⟩ ⊗ W|k⟩ in row-major composite order
                tau[a * d + b] += w[(a, k)] * v[(b, k)] * l;
                eff[a * d + b] += v[(a, k)] * w[(b, k)] * (q.sqrt() / l);
            }
        }
    }
    Ok(TeleProtocol {
        dim: d,
        dim_b: d,
        post_element: Matrix::outer(&eff, &eff),
        pre_state: Matrix::outer(&tau, &tau),
        success_prob: q,
    })
}

/// `Tr_AB[(E_AB ⊗ 𝟙_C)(ρ_A ⊗ τ_BC)]`, an operator on `C`.
pub fn teleport(p: &TeleProtocol, rho: &Matrix) -> Result<Matrix> {
    let (d, db) = (p.dim, p.dim_b);
    if rho.rows() != d || rho.cols() != d {
        return Err(QcmError::DimensionMismatch {
            context: "teleported operator".into(),
            expected: d,
            found: rho.rows(),
        });
    }
    let joint = &p.post_element.kron(&Matrix::identity(d)) * &rho.kron(&p.pre_state);
    partial_trace(&joint, &[d, db, d], &[0, 1])
}

/// Outcome of [`verify_protocol`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolCheck {
    pub report: ValidationReport,
    /// Success probability extracted from the maximally mixed input.
    pub q: f64,
}

pub fn verify_protocol(p: &TeleProtocol, tol: f64) -> ProtocolCheck {
    let mut report = ValidationReport::new();
    let (d, db) = (p.dim, p.dim_b);
    if d == 0 || db == 0 {
        report.fail("", "dimensions must be positive");
        return ProtocolCheck { report, q: 0.0 };
    }
    if p.post_element.rows() != d * db || p.post_element.cols() != d * db {
        report.fail("post_element", format!("must be {0}x{0}", d * db));
    }
    if p.pre_state.rows() != d * db || p.pre_state.cols() != d * db {
        report.fail("pre_state", format!("must be {0}x{0}", d * db));
    }
    if !report.passed() {
        return ProtocolCheck { report, q: 0.0 };
    }
    let herm = p.post_element.hermiticity_defect();
    report.record_deviation(herm);
    if !(herm <= tol) {
        report.fail("post_element", format!("not Hermitian (defect {herm:e})"));
    }
    match p.post_element.hermitian_eigen() {
        Ok((values, _)) => {
            let lo = values.first().copied().unwrap_or(0.0);
            let hi = values.last().copied().unwrap_or(0.0);
            if !(lo >= -tol && hi <= 1.0 + tol) {
                report.fail(
                    "post_element",
                    format!("eigenvalues must lie in [0, 1], found range [{lo:e}, {hi:e}]"),
                );
            }
        }
        Err(e) => report.fail("post_element", e.to_string()),
    }
    report.absorb("pre_state", validate_state(&p.pre_state, tol));

    let mixed = Matrix::identity(d).scale(c(1.0 / d as f64, 0.0));
    let q = match teleport(p, &mixed) {
        Ok(out) => out.trace().re,
        Err(e) => {
            report.fail("", e.to_string());
            return ProtocolCheck { report, q: 0.0 };
        }
    };
    for i in 0..d {
        for j in 0..d {
            let unit = Matrix::unit(d, i, j);
            match teleport(p, &unit) {
                Ok(out) => {
                    let dev = out.max_abs_diff(&unit.scale(c(q, 0.0)));
                    report.record_deviation(dev);
                    if !(dev <= tol) {
                        report.fail(
                            format!("input |{i}><{j}|"),
                            format!("output is not q times the input (deviation {dev:e})"),
                        );
                    }
                }
                Err(e) => report.fail("", e.to_string()),
            }
        }
    }
    if !(q > tol) {
        report.fail("", format!("success probability {q:e} is not positive"));
    }
    let bound = 1.0 / (d * d) as f64;
    if q > bound + tol {
        report.fail("", format!("success probability {q} exceeds 1/d^2 = {bound}"));
    }
    let declared = (q - p.success_prob).abs();
    if !(declared <= tol) {
        report.fail(
            "success_prob",
            format!("declared {} but the protocol achieves {q}", p.success_prob),
        );
    }
    ProtocolCheck { report, q }
}

/// Protocol assignment for the split edges of a teleportation graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProtocolChoice {
    /// Protocols keyed by base edge index; other split edges use the Bell protocol.
    pub per_edge: BTreeMap<usize, TeleProtocol>,
}

impl ProtocolChoice {
    pub fn bell() -> Self {
        Self::default()
    }

    pub fn with(mut self, base_edge: usize, p: TeleProtocol) -> Self {
        self.per_edge.insert(base_edge, p);
        self
    }

    pub fn protocol_for(&self, base_edge: usize, dim: usize) -> Result<TeleProtocol> {
        match self.per_edge.get(&base_edge) {
            None => Ok(bell_protocol(dim)),
            Some(p) if p.dim == dim => Ok(p.clone()),
            Some(p) => Err(QcmError::DimensionMismatch {
                context: format!("protocol for split edge {base_edge}"),
                expected: dim,
                found: p.dim,
            }),
        }
    }
}

/// An acyclic model on a teleportation graph, with its protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleportationCausalModel {
    pub tele_graph: TeleportationGraph,
    pub model: CausalModel,
    /// One protocol per split, in the order of `tele_graph.splits()`.
    pub protocols: Vec<TeleProtocol>,
}

impl TeleportationCausalModel {
    pub fn q_product(&self) -> f64 {
        self.protocols.iter().map(|p| p.success_prob).product()
    }
}

pub fn build_teleportation_model(
    m: &CausalModel,
    tg: &TeleportationGraph,
    protocols: &ProtocolChoice,
) -> Result<TeleportationCausalModel> {
    if tg.base() != m.graph() {
        return Err(QcmError::InvalidGraph("teleportation graph was built from a different graph".into()));
    }
    let g = m.graph();
    let dg = tg.graph();
    let mut base_to_in = vec![usize::MAX; g.edge_count()];
    let mut base_to_out = vec![usize::MAX; g.edge_count()];
    for (pos, &e) in tg.kept_edges().iter().enumerate() {
        base_to_in[e] = pos;
        base_to_out[e] = pos;
    }
    let mut chosen = Vec::new();
    for s in tg.splits() {
        base_to_out[s.base_edge] = s.to_post;
        base_to_in[s.base_edge] = s.pre_to_target;
        let p = protocols.protocol_for(s.base_edge, m.edge_dim(s.base_edge))?;
        chosen.push(p);
    }

    let mut edge_dims = vec![0; dg.edge_count()];
    let mut edge_outcomes = vec![None; dg.edge_count()];
    for (pos, &e) in tg.kept_edges().iter().enumerate() {
        edge_dims[pos] = m.edge_dim(e);
        edge_outcomes[pos] = m.edge_outcomes[e].clone();
    }
    let mut vertex_outcomes = m.vertex_outcomes.clone();
    let mut mechanisms = m.mechanisms.clone();
    let mut ordering = EdgeOrdering::default();
    for v in 0..g.vertex_count() {
        ordering.inputs.insert(v, m.inputs(v).iter().map(|&e| base_to_in[e]).collect());
        ordering.outputs.insert(v, m.outputs(v).iter().map(|&e| base_to_out[e]).collect());
    }
    for (s, p) in tg.splits().iter().zip(&chosen) {
        let d = m.edge_dim(s.base_edge);
        edge_dims[s.to_post] = d;
        edge_outcomes[s.to_post] = m.edge_outcomes[s.base_edge].clone();
        edge_dims[s.pre_to_post] = p.dim_b;
        edge_dims[s.pre_to_target] = d;
        vertex_outcomes.push(None);
        vertex_outcomes.push(None);
        mechanisms.push(Mechanism::State(p.pre_state.clone()));
        let complement = &Matrix::identity(d * p.dim_b) - &p.post_element;
        mechanisms.push(Mechanism::Measurement(Povm::new(d * p.dim_b, vec![p.post_element.clone(), complement])?));
        vertex_outcomes[s.post] = Some(POST_SELECTION_OUTCOMES.iter().map(|o| o.to_string()).collect());
        ordering.outputs.insert(s.pre, vec![s.pre_to_post, s.pre_to_target]);
        ordering.inputs.insert(s.post, vec![s.to_post, s.pre_to_post]);
    }
    debug_assert!(tg
        .splits()
        .iter()
        .all(|s| matches!(mechanisms[s.pre], Mechanism::State(_)) && dg.vertex(s.post).kind == VertexKind::Observed));
    let model = CausalModel::new(dg.clone(), edge_dims, edge_outcomes, vertex_outcomes, mechanisms, ordering)?;
    Ok(TeleportationCausalModel {
        tele_graph: tg.clone(),
        model,
        protocols: chosen,
    })
}

/// A finite classical model: each variable is a function of its parents and a private error.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalModel {
    graph: CausalGraph,
    outcomes: Vec<Vec<String>>,
    error_labels: Vec<Vec<String>>,
    priors: Vec<Vec<f64>>,
    /// Row-major over (parent outcomes in in-edge order, error) to an outcome index.
    tables: Vec<Vec<usize>>,
}

impl FunctionalModel {
    pub fn new(
        graph: CausalGraph,
        outcomes: Vec<Vec<String>>,
        error_labels: Vec<Vec<String>>,
        priors: Vec<Vec<f64>>,
        tables: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = graph.vertex_count();
        if outcomes.len() != n || priors.len() != n || tables.len() != n || error_labels.len() != n {
            return Err(QcmError::InvalidFunctional("one outcome set, prior and table per vertex".into()));
        }
        if let Some(v) = (0..n).find(|&v| graph.kind(v) != VertexKind::Observed) {
            return Err(QcmError::InvalidFunctional(format!("vertex {} must be observed", graph.id(v))));
        }
        if let Some(e) = (0..graph.edge_count()).find(|&e| graph.edge(e).kind != EdgeKind::Classical) {
            return Err(QcmError::InvalidFunctional(format!("edge {} must be classical", graph.edge_label(e))));
        }
        for v in 0..n {
            let id = graph.id(v);
            if outcomes[v].is_empty() {
                return Err(QcmError::InvalidFunctional(format!("{id} has no outcomes")));
            }
            if priors[v].is_empty() || priors[v].len() != error_labels[v].len() {
                return Err(QcmError::InvalidFunctional(format!(
                    "{id}: {} error labels for {} prior weights",
                    error_labels[v].len(),
                    priors[v].len()
                )));
            }
            if priors[v].iter().any(|&p| !(p >= 0.0)) {
                return Err(QcmError::InvalidFunctional(format!("{id} has a negative prior weight")));
            }
            let total: f64 = priors[v].iter().sum();
            if !((total - 1.0).abs() <= 1e-12) {
                return Err(QcmError::InvalidFunctional(format!("{id}: prior sums to {total}")));
            }
            let rows: usize = graph
                .in_edges(v)
                .iter()
                .map(|&e| outcomes[graph.edge(e).source].len())
                .product::<usize>()
                * priors[v].len();
            if tables[v].len() != rows {
                return Err(QcmError::InvalidFunctional(format!(
                    "{id}: table has {} rows, expected {rows}",
                    tables[v].len()
                )));
            }
            if let Some(&bad) = tables[v].iter().find(|&&x| x >= outcomes[v].len()) {
                return Err(QcmError::InvalidFunctional(format!("{id}: table output {bad} out of range")));
            }
        }
        Ok(Self {
            graph,
            outcomes,
            error_labels,
            priors,
            tables,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn outcomes(&self, v: usize) -> &[String] {
        &self.outcomes[v]
    }

    pub fn error_labels(&self, v: usize) -> &[String] {
        &self.error_labels[v]
    }

    pub fn prior(&self, v: usize) -> &[f64] {
        &self.priors[v]
    }

    pub fn table(&self, v: usize) -> &[usize] {
        &self.tables[v]
    }

    /// Parent vertex indices in the order the table is indexed by.
    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.graph.parent_indices(v)
    }

    /// `f_v(parent values, error)`.
    pub fn evaluate(&self, v: usize, parent_values: &[usize], error: usize) -> usize {
        let mut row = 0;
        for (&p, &x) in self.parents(v).iter().zip(parent_values) {
            row = row * self.outcomes[p].len() + x;
        }
        self.tables[v][row * self.priors[v].len() + error]
    }
}

/// The causal model whose POVMs absorb each vertex's error distribution into its function.
pub fn embed_functional_model(f: &FunctionalModel) -> Result<CausalModel> {
    let g = f.graph();
    let n = g.vertex_count();
    let mut mechanisms = Vec::with_capacity(n);
    for v in 0..n {
        let parents = f.parents(v);
        let cards: Vec<usize> = parents.iter().map(|&p| f.outcomes(p).len()).collect();
        let din: usize = cards.iter().product();
        let mut diag = vec![vec![0.0; din]; f.outcomes(v).len()];
        for y in 0..din {
            let ys = crate::tensor::unflatten(y, &cards);
            for (u, &pu) in f.prior(v).iter().enumerate() {
                diag[f.evaluate(v, &ys, u)][y] += pu;
            }
        }
        let elements = diag
            .into_iter()
            .map(|d| Matrix::diagonal(&d.into_iter().map(|x| c(x, 0.0)).collect::<Vec<_>>()))
            .collect();
        mechanisms.push(Mechanism::Measurement(Povm::new(din, elements)?));
    }
    let edge_outcomes: Vec<Option<Vec<String>>> = g
        .edges()
        .iter()
        .map(|e| Some(f.outcomes(e.source).to_vec()))
        .collect();
    let edge_dims = g.edges().iter().map(|e| f.outcomes(e.source).len()).collect();
    CausalModel::new(
        g.clone(),
        edge_dims,
        edge_outcomes,
        (0..n).map(|v| Some(f.outcomes(v).to_vec())).collect(),
        mechanisms,
        EdgeOrdering::default(),
    )
}
