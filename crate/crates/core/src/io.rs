//! JSON documents for models and teleportation protocols.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{QcmError, Result};
use crate::graph::{CausalGraph, EdgeKind, VertexKind};
use crate::model::{
    embed_functional_model, CausalModel, FunctionalModel, Mechanism, ModelBuilder, ProtocolChoice,
    TeleProtocol,
};
use crate::tensor::{c, unflatten, KrausChannel, Matrix, Povm, C64, DEFAULT_TOL};

/// A complex entry, written as `[re, im]`; a bare real is accepted on input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex(pub C64);

impl Serialize for Complex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Complex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Real(f64),
            Pair(Vec<f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Real(x) => Ok(Complex(c(x, 0.0))),
            Raw::Pair(v) if v.len() == 2 => Ok(Complex(c(v[0], v[1]))),
            Raw::Pair(v) => Err(D::Error::custom(format!(
                "complex numbers are [re, im] pairs, found {} components",
                v.len()
            ))),
        }
    }
}

/// Matrix as nested rows.
pub type MatrixDoc = Vec<Vec<Complex>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexDoc {
    pub id: String,
    pub kind: VertexKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub vertices: Vec<VertexDoc>,
    pub edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesDoc {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub edge_dims: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub edge_outcomes: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vertex_outcomes: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    /// Parent outcome labels in in-edge order, then the error label.
    pub inputs: Vec<String>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionDoc {
    pub errors: Vec<String>,
    pub prior: Vec<f64>,
    pub table: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum MechanismDoc {
    State(MatrixDoc),
    Kraus(Vec<MatrixDoc>),
    /// Choi matrix with the input factor first.
    Choi(MatrixDoc),
    Povm(Vec<MatrixDoc>),
    Function(FunctionDoc),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderingDoc {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub outputs: BTreeMap<String, Vec<String>>,
}

impl OrderingDoc {
    fn is_empty(&self) -> bool {
        self.inputs.is_empty() && self.outputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub graph: GraphDoc,
    #[serde(default)]
    pub spaces: SpacesDoc,
    pub mechanisms: BTreeMap<String, MechanismDoc>,
    #[serde(default, skip_serializing_if = "OrderingDoc::is_empty")]
    pub ordering: OrderingDoc,
}

fn parse_error(e: serde_json::Error) -> QcmError {
    QcmError::InvalidModel(format!("parse error at line {} column {}: {e}", e.line(), e.column()))
}

fn matrix(doc: &MatrixDoc, what: &str) -> Result<Matrix> {
    let rows: Vec<Vec<C64>> = doc.iter().map(|r| r.iter().map(|z| z.0).collect()).collect();
    if rows.is_empty() {
        return Err(QcmError::InvalidModel(format!("{what}: empty matrix")));
    }
    Matrix::from_rows(&rows).map_err(|e| QcmError::InvalidModel(format!("{what}: {e}")))
}

fn matrix_doc(m: &Matrix) -> MatrixDoc {
    m.row_vecs().into_iter().map(|r| r.into_iter().map(Complex).collect()).collect()
}

impl ModelDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(parse_error)
    }

    /// Canonical pretty-printed JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    pub fn graph(&self) -> Result<CausalGraph> {
        CausalGraph::new(
            self.graph.vertices.iter().map(|v| (v.id.as_str(), v.kind)),
            self.graph.edges.iter().map(|e| (e.source.as_str(), e.target.as_str(), e.kind)),
        )
    }

    /// Assembles the causal model; functional tables become diagonal POVMs.
    pub fn to_model(&self) -> Result<CausalModel> {
        let g = self.graph()?;
        for id in self.mechanisms.keys() {
            g.vertex_index(id)?;
        }
        let mut b = ModelBuilder::new(g.clone());
        for (e, &d) in &self.spaces.edge_dims {
            b = b.edge_dim(e, d)?;
        }
        for (e, o) in &self.spaces.edge_outcomes {
            b = b.edge_outcomes(e, &o.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        for (v, o) in &self.spaces.vertex_outcomes {
            b = b.vertex_outcomes(v, &o.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        for (v, es) in &self.ordering.inputs {
            b = b.input_order(v, &es.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        for (v, es) in &self.ordering.outputs {
            b = b.output_order(v, &es.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        let mut functions = Vec::new();
        for v in 0..g.vertex_count() {
            let id = g.id(v);
            let doc = self
                .mechanisms
                .get(id)
                .ok_or_else(|| QcmError::InvalidModel(format!("vertex {id} has no mechanism")))?;
            let what = format!("mechanism of {id}");
            let mech = match doc {
                MechanismDoc::State(rho) => Mechanism::State(matrix(rho, &what)?),
                MechanismDoc::Kraus(ks) => {
                    let ks = ks.iter().map(|k| matrix(k, &what)).collect::<Result<Vec<_>>>()?;
                    let (din, dout) = ks
                        .first()
                        .map(|k| (k.cols(), k.rows()))
                        .ok_or_else(|| QcmError::InvalidModel(format!("{what}: no Kraus operators")))?;
                    Mechanism::Channel(KrausChannel::new(din, dout, ks)?)
                }
                MechanismDoc::Choi(choi) => {
                    let choi = matrix(choi, &what)?;
                    let (din, dout) = self.choi_dims(&g, v)?;
                    Mechanism::Channel(KrausChannel::from_choi(&choi, din, dout, DEFAULT_TOL)?)
                }
                MechanismDoc::Povm(es) => {
                    let es = es.iter().map(|e| matrix(e, &what)).collect::<Result<Vec<_>>>()?;
                    let d = es
                        .first()
                        .map(Matrix::rows)
                        .ok_or_else(|| QcmError::InvalidModel(format!("{what}: no POVM elements")))?;
                    Mechanism::Measurement(Povm::new(d, es)?)
                }
                MechanismDoc::Function(_) => {
                    functions.push(v);
                    // placeholder until the edge outcome sets are resolved
                    Mechanism::Measurement(Povm::computational(1))
                }
            };
            b = b.mechanism(v, mech);
        }
        let mut m = b.build()?;
        for v in functions {
            let MechanismDoc::Function(f) = &self.mechanisms[g.id(v)] else { unreachable!() };
            let povm = function_povm(&m, v, f)?;
            m = m.with_mechanism(v, Mechanism::Measurement(povm));
        }
        Ok(m)
    }

    fn choi_dims(&self, g: &CausalGraph, v: usize) -> Result<(usize, usize)> {
        let dim = |e: usize| -> Result<usize> {
            let label = g.edge_label(e);
            if let Some(&d) = self.spaces.edge_dims.get(&label) {
                return Ok(d);
            }
            if let Some(o) = self.spaces.edge_outcomes.get(&label) {
                return Ok(o.len());
            }
            let source = g.edge(e).source;
            self.spaces
                .vertex_outcomes
                .get(g.id(source))
                .filter(|_| g.kind(source) == VertexKind::Observed)
                .map(Vec::len)
                .ok_or_else(|| QcmError::InvalidModel(format!("edge {label} has no dimension")))
        };
        let din = g.in_edges(v).into_iter().map(dim).product::<Result<usize>>()?;
        let dout = g.out_edges(v).into_iter().map(dim).product::<Result<usize>>()?;
        Ok((din, dout))
    }

    /// The functional model, when every vertex is observed, every edge classical and
    /// every mechanism a table.
    pub fn to_functional(&self) -> Result<FunctionalModel> {
        let g = self.graph()?;
        let n = g.vertex_count();
        let mut outcomes = Vec::with_capacity(n);
        let mut errors = Vec::with_capacity(n);
        let mut priors = Vec::with_capacity(n);
        for v in 0..n {
            let id = g.id(v);
            let Some(MechanismDoc::Function(f)) = self.mechanisms.get(id) else {
                return Err(QcmError::InvalidFunctional(format!("vertex {id} has no functional table")));
            };
            outcomes.push(
                self.spaces
                    .vertex_outcomes
                    .get(id)
                    .cloned()
                    .ok_or_else(|| QcmError::InvalidFunctional(format!("vertex {id} has no outcome set")))?,
            );
            errors.push(f.errors.clone());
            priors.push(f.prior.clone());
        }
        let mut tables = Vec::with_capacity(n);
        for v in 0..n {
            let MechanismDoc::Function(f) = &self.mechanisms[g.id(v)] else { unreachable!() };
            let sets: Vec<&[String]> = g
                .in_edges(v)
                .into_iter()
                .map(|e| outcomes[g.edge(e).source].as_slice())
                .collect();
            tables.push(function_table(g.id(v), &sets, &outcomes[v], f)?);
        }
        FunctionalModel::new(g, outcomes, errors, priors, tables)
    }

    /// Document for a model; mechanisms are written as states, Kraus lists and POVMs.
    pub fn from_model(m: &CausalModel, name: Option<String>, description: Option<String>) -> Self {
        let g = m.graph();
        let label = |e: usize| g.edge_label(e);
        let mut spaces = SpacesDoc::default();
        for e in 0..g.edge_count() {
            spaces.edge_dims.insert(label(e), m.edge_dim(e));
            if let Some(o) = m.edge_outcomes(e) {
                spaces.edge_outcomes.insert(label(e), o.to_vec());
            }
        }
        let mut mechanisms = BTreeMap::new();
        for v in 0..g.vertex_count() {
            if let Some(o) = m.vertex_outcomes(v) {
                spaces.vertex_outcomes.insert(g.id(v).to_string(), o.to_vec());
            }
            let doc = match m.mechanism(v) {
                Mechanism::State(rho) => MechanismDoc::State(matrix_doc(rho)),
                Mechanism::Channel(ch) => MechanismDoc::Kraus(ch.kraus().iter().map(matrix_doc).collect()),
                Mechanism::Measurement(p) => MechanismDoc::Povm(p.elements().iter().map(matrix_doc).collect()),
            };
            mechanisms.insert(g.id(v).to_string(), doc);
        }
        let explicit = m.explicit_ordering();
        let ordering = OrderingDoc {
            inputs: explicit
                .inputs
                .iter()
                .map(|(&v, es)| (g.id(v).to_string(), es.iter().map(|&e| label(e)).collect()))
                .collect(),
            outputs: explicit
                .outputs
                .iter()
                .map(|(&v, es)| (g.id(v).to_string(), es.iter().map(|&e| label(e)).collect()))
                .collect(),
        };
        ModelDocument {
            name,
            description,
            graph: GraphDoc {
                vertices: g.vertices().iter().map(|v| VertexDoc { id: v.id.clone(), kind: v.kind }).collect(),
                edges: g
                    .edges()
                    .iter()
                    .map(|e| EdgeDoc {
                        source: g.id(e.source).to_string(),
                        target: g.id(e.target).to_string(),
                        kind: e.kind,
                    })
                    .collect(),
            },
            spaces,
            mechanisms,
            ordering,
        }
    }
}

/// Lookup table of a functional mechanism, row-major over (inputs, error).
fn function_table(id: &str, inputs: &[&[String]], outcomes: &[String], f: &FunctionDoc) -> Result<Vec<usize>> {
    let mut cards: Vec<usize> = inputs.iter().map(|s| s.len()).collect();
    cards.push(f.errors.len());
    let rows: usize = cards.iter().product();
    let mut table = vec![usize::MAX; rows];
    for row in &f.table {
        if row.inputs.len() != cards.len() {
            return Err(QcmError::InvalidFunctional(format!(
                "{id}: table row {:?} needs {} inputs (parents then error)",
                row.inputs,
                cards.len()
            )));
        }
        let mut flat = 0;
        for (k, label) in row.inputs.iter().enumerate() {
            let set: &[String] = if k < inputs.len() { inputs[k] } else { &f.errors };
            let x = set.iter().position(|o| o == label).ok_or_else(|| {
                QcmError::InvalidFunctional(format!("{id}: `{label}` is not a valid value of input {k}"))
            })?;
            flat = flat * cards[k] + x;
        }
        let out = outcomes
            .iter()
            .position(|o| *o == row.output)
            .ok_or_else(|| QcmError::InvalidFunctional(format!("{id}: `{}` is not an outcome", row.output)))?;
        if table[flat] != usize::MAX {
            return Err(QcmError::InvalidFunctional(format!("{id}: duplicate row {:?}", row.inputs)));
        }
        table[flat] = out;
    }
    if let Some(missing) = table.iter().position(|&x| x == usize::MAX) {
        let digits = unflatten(missing, &cards);
        let labels: Vec<&str> = digits
            .iter()
            .enumerate()
            .map(|(k, &x)| if k < inputs.len() { inputs[k][x].as_str() } else { f.errors[x].as_str() })
            .collect();
        return Err(QcmError::InvalidFunctional(format!("{id}: no table row for inputs {labels:?}")));
    }
    Ok(table)
}

/// `E_x = Σ_y [Σ_u P(u) δ(x, f(y, u))] |y⟩⟨y|` over the vertex's in-edge outcome labels.
fn function_povm(m: &CausalModel, v: usize, f: &FunctionDoc) -> Result<Povm> {
    let g = m.graph();
    let id = g.id(v);
    if f.prior.len() != f.errors.len() {
        return Err(QcmError::InvalidFunctional(format!(
            "{id}: {} error labels for {} prior weights",
            f.errors.len(),
            f.prior.len()
        )));
    }
    let mut sets = Vec::new();
    for &e in m.inputs(v) {
        let o = m.edge_outcomes(e).ok_or_else(|| {
            QcmError::InvalidFunctional(format!("{id}: in-edge {} must be classical", g.edge_label(e)))
        })?;
        sets.push(o);
    }
    let outcomes = m
        .vertex_outcomes(v)
        .ok_or_else(|| QcmError::InvalidFunctional(format!("{id}: functional vertex needs an outcome set")))?;
    let table = function_table(id, &sets, outcomes, f)?;
    let din: usize = sets.iter().map(|s| s.len()).product();
    let k = f.errors.len();
    let mut diag = vec![vec![0.0; din]; outcomes.len()];
    for y in 0..din {
        for (u, &p) in f.prior.iter().enumerate() {
            diag[table[y * k + u]][y] += p;
        }
    }
    Povm::new(
        din,
        diag.into_iter()
            .map(|d| Matrix::diagonal(&d.into_iter().map(|x| c(x, 0.0)).collect::<Vec<_>>()))
            .collect(),
    )
}

/// Document for a functional model, with every mechanism written as a table.
pub fn functional_document(f: &FunctionalModel, name: Option<String>) -> ModelDocument {
    let m = embed_functional_model(f).expect("functional models embed");
    let g = f.graph();
    let mut doc = ModelDocument::from_model(&m, name, None);
    for v in 0..g.vertex_count() {
        let parents = f.parents(v);
        let cards: Vec<usize> = parents.iter().map(|&p| f.outcomes(p).len()).collect();
        let mut rows = Vec::new();
        for y in 0..cards.iter().product() {
            let ys = unflatten(y, &cards);
            for (u, label) in f.error_labels(v).iter().enumerate() {
                let mut inputs: Vec<String> = parents.iter().zip(&ys).map(|(&p, &x)| f.outcomes(p)[x].clone()).collect();
                inputs.push(label.clone());
                rows.push(TableRow {
                    inputs,
                    output: f.outcomes(v)[f.evaluate(v, &ys, u)].clone(),
                });
            }
        }
        doc.mechanisms.insert(
            g.id(v).to_string(),
            MechanismDoc::Function(FunctionDoc {
                errors: f.error_labels(v).to_vec(),
                prior: f.prior(v).to_vec(),
                table: rows,
            }),
        );
    }
    doc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolEntry {
    /// Base edge label `A->B`.
    pub edge: String,
    pub dim_a: usize,
    pub dim_b: usize,
    pub post_element: MatrixDoc,
    pub pre_state: MatrixDoc,
    pub success_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolDocument {
    pub protocols: Vec<ProtocolEntry>,
}

impl ProtocolDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| QcmError::InvalidProtocol(format!("parse error at line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    pub fn from_protocols(g: &CausalGraph, protocols: &ProtocolChoice) -> Self {
        ProtocolDocument {
            protocols: protocols
                .per_edge
                .iter()
                .map(|(&e, p)| ProtocolEntry {
                    edge: g.edge_label(e),
                    dim_a: p.dim,
                    dim_b: p.dim_b,
                    post_element: matrix_doc(&p.post_element),
                    pre_state: matrix_doc(&p.pre_state),
                    success_prob: p.success_prob,
                })
                .collect(),
        }
    }

    /// Resolves edge labels against `g`; edges not listed use the Bell protocol.
    pub fn to_choice(&self, g: &CausalGraph) -> Result<ProtocolChoice> {
        let mut choice = ProtocolChoice::bell();
        for entry in &self.protocols {
            let e = g.edge_index(&entry.edge)?;
            if choice.per_edge.contains_key(&e) {
                return Err(QcmError::InvalidProtocol(format!("edge {} listed twice", entry.edge)));
            }
            let what = format!("protocol for {}", entry.edge);
            let p = TeleProtocol {
                dim: entry.dim_a,
                dim_b: entry.dim_b,
                post_element: matrix(&entry.post_element, &what)?,
                pre_state: matrix(&entry.pre_state, &what)?,
                success_prob: entry.success_prob,
            };
            choice = choice.with(e, p);
        }
        Ok(choice)
    }
}
