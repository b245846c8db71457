//! Probability rules: acyclic composition, self-cycle composition and the cyclic rule.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::distribution::{Distribution, Variable};
use crate::error::{QcmError, Result};
use crate::graph::{build_teleportation_graph, maximal_teleportation_graph, TeleportationGraph};
use crate::model::{
    build_teleportation_model, validate_model, verify_protocol, CausalModel, Mechanism, ProtocolChoice,
};
use crate::tensor::{apply_channel, flatten, permute_data, permute_subsystems, unflatten, KrausChannel, Matrix, C64, ONE, ZERO};

/// Default cap on the product of all edge dimensions.
pub const DEFAULT_DIM_CAP: u128 = 4096;

/// Environment variable overriding [`DEFAULT_DIM_CAP`].
pub const DIM_CAP_ENV: &str = "QCM_DIM_CAP";

/// `Σₓ cycle(𝓒ₓ)` below this marks a model inconsistent.
pub const INCONSISTENCY_THRESHOLD: f64 = 1e-12;

/// Tolerance on `|Σₓ cycle(𝓒ₓ) − 1|` for the Markov property.
pub const MARKOV_TOL: f64 = 1e-9;

/// Tolerance used when verifying user-supplied protocols.
pub const PROTOCOL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    /// Worker threads for the outcome fan-out; 0 uses the global pool.
    pub threads: usize,
    pub dim_cap: u128,
}

impl Default for EngineOptions {
    fn default() -> Self {
        let dim_cap = std::env::var(DIM_CAP_ENV)
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(DEFAULT_DIM_CAP);
        Self { threads: 0, dim_cap }
    }
}

impl EngineOptions {
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_dim_cap(mut self, cap: u128) -> Self {
        self.dim_cap = cap;
        self
    }
}

/// Which teleportation graph the cyclic rule runs on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TeleGraphChoice {
    Maximal,
    /// Indices of the base edges to keep; the rest are split.
    Kept(Vec<usize>),
}

impl TeleGraphChoice {
    pub fn build(&self, m: &CausalModel) -> Result<TeleportationGraph> {
        match self {
            TeleGraphChoice::Maximal => Ok(maximal_teleportation_graph(m.graph())),
            TeleGraphChoice::Kept(kept) => build_teleportation_graph(m.graph(), kept),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclicResult {
    pub variables: Vec<Variable>,
    /// `cycle(𝓒ₓ)` per outcome tuple, row-major over `variables`.
    pub cycle_weights: Vec<f64>,
    pub cycle_sum: f64,
    /// Product of the success probabilities of the split-edge protocols.
    pub q_product: f64,
    /// `𝓟 = (∏ q) Σₓ cycle(𝓒ₓ)`.
    pub success_prob: f64,
    /// `None` when the model is inconsistent.
    pub distribution: Option<Distribution>,
    pub markov: bool,
}

impl CyclicResult {
    pub fn is_consistent(&self) -> bool {
        self.distribution.is_some()
    }
}

/// Result of conditioning the teleportation causal model on every post-selection succeeding.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub success_prob: f64,
    pub q_product: f64,
    pub distribution: Option<Distribution>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovReport {
    pub markov: bool,
    pub cycle_sum: f64,
}

fn ensure_valid(m: &CausalModel) -> Result<()> {
    let report = validate_model(m);
    if report.passed() {
        return Ok(());
    }
    let msgs: Vec<String> = report
        .failures
        .iter()
        .map(|f| if f.location.is_empty() { f.message.clone() } else { format!("{}: {}", f.location, f.message) })
        .collect();
    Err(QcmError::InvalidModel(msgs.join("; ")))
}

fn ensure_cap(m: &CausalModel, opts: &EngineOptions) -> Result<()> {
    let total = m.total_dimension();
    if total > opts.dim_cap {
        return Err(QcmError::DimensionCap { total, cap: opts.dim_cap });
    }
    Ok(())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| QcmError::Numeric(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// `cycle(𝓜) = Σ_{k,l} ⟨k|𝓜(|k⟩⟨l|)|l⟩`.
pub fn self_cycle(ch: &KrausChannel) -> Result<C64> {
    let d = ch.in_dim();
    if ch.out_dim() != d {
        return Err(QcmError::DimensionMismatch {
            context: "self-cycle output space".into(),
            expected: d,
            found: ch.out_dim(),
        });
    }
    let mut total = ZERO;
    for k in 0..d {
        for l in 0..d {
            total += apply_channel(ch, &Matrix::unit(d, k, l))?[(k, l)];
        }
    }
    Ok(total)
}

/// Observed distribution of an acyclic model by composing its mechanisms in causal order.
pub fn acyclic_probability(m: &CausalModel) -> Result<Distribution> {
    acyclic_probability_with(m, &EngineOptions::default())
}

pub fn acyclic_probability_with(m: &CausalModel, opts: &EngineOptions) -> Result<Distribution> {
    if !m.graph().is_acyclic() {
        return Err(QcmError::CyclicGraph);
    }
    ensure_valid(m)?;
    ensure_cap(m, opts)?;
    let n = m.graph().vertex_count();
    let weights = propagate(m, &vec![None; n], opts.dim_cap)?;
    Distribution::new(m.variables(), weights)
}

/// Per-tuple `cycle(𝓒ₓ)` of the model, contracted over the maximal teleportation graph.
pub fn cycle_weights(m: &CausalModel, opts: &EngineOptions) -> Result<(Vec<Variable>, Vec<f64>)> {
    ensure_valid(m)?;
    ensure_cap(m, opts)?;
    let order: Vec<usize> = (0..m.graph().edge_count()).collect();
    Ok((m.variables(), contract_all(m, &order, opts.threads)?))
}

/// General probability rule `P(x) = cycle(𝓒ₓ) / Σₓ cycle(𝓒ₓ)` with `𝓟 = (∏ q) Σₓ cycle(𝓒ₓ)`.
pub fn cyclic_probability(
    m: &CausalModel,
    tg: &TeleGraphChoice,
    protocols: &ProtocolChoice,
    opts: &EngineOptions,
) -> Result<CyclicResult> {
    ensure_valid(m)?;
    ensure_cap(m, opts)?;
    let tele = tg.build(m)?;
    let q_product = split_success_product(m, &tele, protocols)?;
    // kept edges compose 𝓒ₓ, split edges close the cycle
    let mut order: Vec<usize> = tele.kept_edges().to_vec();
    order.extend(tele.split_edges());
    let weights = contract_all(m, &order, opts.threads)?;
    let cycle_sum: f64 = weights.iter().sum();
    let variables = m.variables();
    let distribution = if cycle_sum < INCONSISTENCY_THRESHOLD {
        None
    } else {
        let probs = weights.iter().map(|w| w / cycle_sum).collect();
        Some(Distribution::new(variables.clone(), probs)?)
    };
    Ok(CyclicResult {
        variables,
        cycle_weights: weights,
        cycle_sum,
        q_product,
        success_prob: q_product * cycle_sum,
        distribution,
        markov: (cycle_sum - 1.0).abs() <= MARKOV_TOL,
    })
}

fn split_success_product(m: &CausalModel, tele: &TeleportationGraph, protocols: &ProtocolChoice) -> Result<f64> {
    let mut q = 1.0;
    for s in tele.splits() {
        let p = protocols.protocol_for(s.base_edge, m.edge_dim(s.base_edge))?;
        if protocols.per_edge.contains_key(&s.base_edge) {
            check_protocol(m, s.base_edge, &p)?;
        }
        q *= p.success_prob;
    }
    Ok(q)
}

fn check_protocol(m: &CausalModel, edge: usize, p: &crate::model::TeleProtocol) -> Result<()> {
    let check = verify_protocol(p, PROTOCOL_TOL);
    if check.report.passed() {
        return Ok(());
    }
    let msgs: Vec<String> = check.report.failures.iter().map(|f| format!("{} {}", f.location, f.message)).collect();
    Err(QcmError::InvalidProtocol(format!(
        "protocol for {}: {}",
        m.graph().edge_label(edge),
        msgs.join("; ")
    )))
}

/// Cross-check route: the acyclic rule on the teleportation causal model, conditioned on
/// every post-selection vertex reporting `ok`.
pub fn direct_cyclic_probability(
    m: &CausalModel,
    tg: &TeleGraphChoice,
    protocols: &ProtocolChoice,
    opts: &EngineOptions,
) -> Result<DirectResult> {
    ensure_valid(m)?;
    ensure_cap(m, opts)?;
    let tele = tg.build(m)?;
    for s in tele.splits() {
        if let Some(p) = protocols.per_edge.get(&s.base_edge) {
            check_protocol(m, s.base_edge, p)?;
        }
    }
    let tm = build_teleportation_model(m, &tele, protocols)?;
    let q_product = tm.q_product();
    let dm = &tm.model;
    let mut fixed = vec![None; dm.graph().vertex_count()];
    for s in tele.splits() {
        fixed[s.post] = Some(0);
    }
    let joint = propagate(dm, &fixed, opts.dim_cap)?;

    let observed = dm.graph().observed_vertices();
    let cards: Vec<usize> = observed.iter().map(|&v| dm.outcome_count(v)).collect();
    let keep: Vec<usize> = (0..observed.len()).filter(|&k| observed[k] < m.graph().vertex_count()).collect();
    let kept_cards: Vec<usize> = keep.iter().map(|&k| cards[k]).collect();
    let mut weights = vec![0.0; kept_cards.iter().product()];
    for (flat, &p) in joint.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let t = unflatten(flat, &cards);
        let all_ok = (0..observed.len()).all(|k| observed[k] < m.graph().vertex_count() || t[k] == 0);
        if all_ok {
            let sub: Vec<usize> = keep.iter().map(|&k| t[k]).collect();
            weights[flatten(&sub, &kept_cards)] += p;
        }
    }
    let success_prob: f64 = weights.iter().sum();
    let distribution = if success_prob < INCONSISTENCY_THRESHOLD * q_product {
        None
    } else {
        let probs = weights.iter().map(|w| w / success_prob).collect();
        Some(Distribution::new(m.variables(), probs)?)
    };
    Ok(DirectResult {
        success_prob,
        q_product,
        distribution,
    })
}

/// Markov property: `Σₓ cycle(𝓒ₓ) = 1` on the maximal teleportation graph.
pub fn markov_check(m: &CausalModel, opts: &EngineOptions) -> Result<MarkovReport> {
    let (_, weights) = cycle_weights(m, opts)?;
    let cycle_sum: f64 = weights.iter().sum();
    Ok(MarkovReport {
        markov: (cycle_sum - 1.0).abs() <= MARKOV_TOL,
        cycle_sum,
    })
}

/// Dense tensor whose modes are labelled by edge indices; each mode is an operator index pair.
#[derive(Debug, Clone)]
struct NetTensor {
    labels: Vec<usize>,
    dims: Vec<usize>,
    data: Vec<C64>,
}

impl NetTensor {
    fn permuted(&self, perm: &[usize]) -> NetTensor {
        NetTensor {
            labels: perm.iter().map(|&p| self.labels[p]).collect(),
            dims: perm.iter().map(|&p| self.dims[p]).collect(),
            data: permute_data(&self.dims, &self.data, perm),
        }
    }

    /// Sums the diagonal of modes `a` and `b` (same dimension) and drops them.
    fn trace_modes(&self, a: usize, b: usize) -> NetTensor {
        let rest: Vec<usize> = (0..self.dims.len()).filter(|&k| k != a && k != b).collect();
        let mut perm = rest.clone();
        perm.extend([a, b]);
        let t = self.permuted(&perm);
        let d = self.dims[a];
        let block = d * d;
        let data = t
            .data
            .chunks(block)
            .map(|chunk| (0..d).map(|i| chunk[i * d + i]).sum())
            .collect();
        NetTensor {
            labels: rest.iter().map(|&k| self.labels[k]).collect(),
            dims: rest.iter().map(|&k| self.dims[k]).collect(),
            data,
        }
    }

    /// Contracts every label shared with `other`.
    fn contract(&self, other: &NetTensor) -> NetTensor {
        let shared: Vec<usize> = self.labels.iter().copied().filter(|l| other.labels.contains(l)).collect();
        let a_free: Vec<usize> = (0..self.labels.len()).filter(|&k| !shared.contains(&self.labels[k])).collect();
        let b_free: Vec<usize> = (0..other.labels.len()).filter(|&k| !shared.contains(&other.labels[k])).collect();
        let pos = |t: &NetTensor, l: usize| t.labels.iter().position(|&x| x == l).unwrap();
        let mut pa = a_free.clone();
        pa.extend(shared.iter().map(|&l| pos(self, l)));
        let mut pb: Vec<usize> = shared.iter().map(|&l| pos(other, l)).collect();
        pb.extend(b_free.iter().copied());
        let a = self.permuted(&pa);
        let b = other.permuted(&pb);
        let rows: usize = a_free.iter().map(|&k| self.dims[k]).product();
        let inner: usize = shared.iter().map(|&l| self.dims[pos(self, l)]).product();
        let cols: usize = b_free.iter().map(|&k| other.dims[k]).product();
        let mut data = vec![ZERO; rows * cols];
        for r in 0..rows {
            let out = &mut data[r * cols..(r + 1) * cols];
            for k in 0..inner {
                let x = a.data[r * inner + k];
                if x == ZERO {
                    continue;
                }
                let brow = &b.data[k * cols..(k + 1) * cols];
                for (o, &y) in out.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let mut labels: Vec<usize> = a_free.iter().map(|&k| self.labels[k]).collect();
        labels.extend(b_free.iter().map(|&k| other.labels[k]));
        let mut dims: Vec<usize> = a_free.iter().map(|&k| self.dims[k]).collect();
        dims.extend(b_free.iter().map(|&k| other.dims[k]));
        NetTensor { labels, dims, data }
    }
}

/// Reshapes a superoperator `S[(i,j),(k,l)]` into one paired mode `(i_e, j_e)` per edge,
/// then traces self-loops.
fn superop_tensor(m: &CausalModel, v: usize, s: &Matrix) -> NetTensor {
    let outs = m.outputs(v);
    let ins = m.inputs(v);
    let od: Vec<usize> = outs.iter().map(|&e| m.edge_dim(e)).collect();
    let id: Vec<usize> = ins.iter().map(|&e| m.edge_dim(e)).collect();
    let (no, ni) = (od.len(), id.len());
    let mut dims = od.clone();
    dims.extend(&od);
    dims.extend(&id);
    dims.extend(&id);
    let mut perm = Vec::with_capacity(dims.len());
    for k in 0..no {
        perm.extend([k, no + k]);
    }
    for k in 0..ni {
        perm.extend([2 * no + k, 2 * no + ni + k]);
    }
    let data = permute_data(&dims, s.data(), &perm);
    let mut labels: Vec<usize> = outs.to_vec();
    labels.extend(ins);
    let mut pair_dims: Vec<usize> = od.iter().map(|d| d * d).collect();
    pair_dims.extend(id.iter().map(|d| d * d));
    let mut t = NetTensor {
        labels,
        dims: pair_dims,
        data,
    };
    for &e in outs {
        if m.graph().edge(e).is_self_loop() {
            let a = t.labels.iter().position(|&l| l == e).unwrap();
            let b = t.labels.iter().rposition(|&l| l == e).unwrap();
            t = t.trace_modes(a, b);
        }
    }
    t
}

fn channel_superop(ch: &KrausChannel) -> Matrix {
    let mut s = Matrix::zeros(ch.out_dim() * ch.out_dim(), ch.in_dim() * ch.in_dim());
    for k in ch.kraus() {
        let conj = Matrix::new(k.rows(), k.cols(), k.data().iter().map(|z| z.conj()).collect()).unwrap();
        s = &s + &k.kron(&conj);
    }
    s
}

/// `S_x[(i,j),(k,l)] = δ(i = j = x…) E_x[l,k]`.
fn outcome_superop(m: &CausalModel, v: usize, element: &Matrix, x: usize) -> Matrix {
    let outs = m.outputs(v);
    let od: Vec<usize> = outs.iter().map(|&e| m.edge_dim(e)).collect();
    let dout: usize = od.iter().product();
    let hot = flatten(&vec![x; od.len()], &od);
    let din = element.rows();
    let mut s = Matrix::zeros(dout * dout, din * din);
    let row = hot * dout + hot;
    for k in 0..din {
        for l in 0..din {
            s[(row, k * din + l)] = element[(l, k)];
        }
    }
    s
}

fn vertex_tensors(m: &CausalModel) -> Vec<Vec<NetTensor>> {
    (0..m.graph().vertex_count())
        .map(|v| match m.mechanism(v) {
            Mechanism::State(rho) => {
                vec![superop_tensor(m, v, &Matrix::new(rho.rows() * rho.cols(), 1, rho.data().to_vec()).unwrap())]
            }
            Mechanism::Channel(ch) => vec![superop_tensor(m, v, &channel_superop(ch))],
            Mechanism::Measurement(p) => p
                .elements()
                .iter()
                .enumerate()
                .map(|(x, e)| superop_tensor(m, v, &outcome_superop(m, v, e, x)))
                .collect(),
        })
        .collect()
}

fn contract_network(m: &CausalModel, tensors: Vec<NetTensor>, order: &[usize]) -> C64 {
    let n = tensors.len();
    let mut slots: Vec<Option<NetTensor>> = tensors.into_iter().map(Some).collect();
    let mut owner: Vec<usize> = (0..n).collect();
    fn find(owner: &mut [usize], mut v: usize) -> usize {
        while owner[v] != v {
            owner[v] = owner[owner[v]];
            v = owner[v];
        }
        v
    }
    for &e in order {
        let edge = m.graph().edge(e);
        if edge.is_self_loop() {
            continue;
        }
        let a = find(&mut owner, edge.source);
        let b = find(&mut owner, edge.target);
        if a == b {
            continue;
        }
        let ta = slots[a].take().unwrap();
        let tb = slots[b].take().unwrap();
        slots[a] = Some(ta.contract(&tb));
        owner[b] = a;
    }
    slots
        .into_iter()
        .flatten()
        .fold(ONE, |acc, t| acc * t.data.iter().copied().sum::<C64>())
}

/// `cycle(𝓒ₓ)` for every outcome tuple, edges eliminated in `order`.
fn contract_all(m: &CausalModel, order: &[usize], threads: usize) -> Result<Vec<f64>> {
    let observed = m.graph().observed_vertices();
    let cards: Vec<usize> = observed.iter().map(|&v| m.outcome_count(v)).collect();
    let total: usize = cards.iter().product();
    let cache = vertex_tensors(m);
    let slot_of: HashMap<usize, usize> = observed.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let run = || {
        (0..total)
            .into_par_iter()
            .map(|flat| {
                let t = unflatten(flat, &cards);
                let tensors: Vec<NetTensor> = (0..cache.len())
                    .map(|v| match slot_of.get(&v) {
                        Some(&k) => cache[v][t[k]].clone(),
                        None => cache[v][0].clone(),
                    })
                    .collect();
                contract_network(m, tensors, order).re
            })
            .collect::<Vec<f64>>()
    };
    in_pool(threads, run)
}

/// Joint weights of all observed vertices by sequential density-matrix propagation.
/// Vertices with a fixed outcome contribute only that outcome; other entries stay zero.
fn propagate(m: &CausalModel, fixed: &[Option<usize>], cap: u128) -> Result<Vec<f64>> {
    let order = greedy_order(m, cap)?;
    let observed = m.graph().observed_vertices();
    let cards: Vec<usize> = observed.iter().map(|&v| m.outcome_count(v)).collect();
    let mut slot = vec![usize::MAX; m.graph().vertex_count()];
    for (k, &v) in observed.iter().enumerate() {
        slot[v] = k;
    }
    let mut out = vec![0.0; cards.iter().product()];
    let mut tuple = vec![0usize; observed.len()];
    let ctx = Propagation {
        m,
        order: &order,
        fixed,
        slot: &slot,
        cards: &cards,
    };
    ctx.step(0, Vec::new(), Matrix::scalar(ONE), &mut tuple, &mut out)?;
    Ok(out)
}

struct Propagation<'a> {
    m: &'a CausalModel,
    order: &'a [usize],
    fixed: &'a [Option<usize>],
    slot: &'a [usize],
    cards: &'a [usize],
}

impl Propagation<'_> {
    fn step(&self, pos: usize, live: Vec<usize>, rho: Matrix, tuple: &mut [usize], out: &mut [f64]) -> Result<()> {
        if pos == self.order.len() {
            out[flatten(tuple, self.cards)] += rho.trace().re;
            return Ok(());
        }
        let m = self.m;
        let v = self.order[pos];
        let ins = m.inputs(v);
        let dims: Vec<usize> = live.iter().map(|&e| m.edge_dim(e)).collect();
        let rest: Vec<usize> = (0..live.len()).filter(|&k| !ins.contains(&live[k])).collect();
        let mut perm = rest.clone();
        perm.extend(ins.iter().map(|e| live.iter().position(|l| l == e).unwrap()));
        let rho = if perm.iter().enumerate().all(|(k, &p)| k == p) {
            rho
        } else {
            permute_subsystems(&rho, &dims, &perm)?
        };
        let r: usize = rest.iter().map(|&k| dims[k]).product();
        let mut next_live: Vec<usize> = rest.iter().map(|&k| live[k]).collect();
        next_live.extend(m.outputs(v));
        match m.mechanism(v) {
            Mechanism::State(tau) => self.step(pos + 1, next_live, rho.kron(tau), tuple, out),
            Mechanism::Channel(ch) => {
                let next = apply_on_trailing(&rho, r, ch);
                self.step(pos + 1, next_live, next, tuple, out)
            }
            Mechanism::Measurement(p) => {
                let k = self.slot[v];
                let od: Vec<usize> = m.outputs(v).iter().map(|&e| m.edge_dim(e)).collect();
                let dout: usize = od.iter().product();
                for (x, e) in p.elements().iter().enumerate() {
                    if self.fixed[v].is_some_and(|f| f != x) {
                        continue;
                    }
                    let reduced = measure_trailing(&rho, r, e);
                    if reduced.max_abs() == 0.0 {
                        continue;
                    }
                    let hot = flatten(&vec![x; od.len()], &od);
                    let next = reduced.kron(&Matrix::unit(dout, hot, hot));
                    tuple[k] = x;
                    self.step(pos + 1, next_live.clone(), next, tuple, out)?;
                }
                Ok(())
            }
        }
    }
}

/// `(𝟙_r ⊗ 𝓔)(ρ)` for a channel acting on the trailing factor.
fn apply_on_trailing(rho: &Matrix, r: usize, ch: &KrausChannel) -> Matrix {
    let (i, o) = (ch.in_dim(), ch.out_dim());
    let mut next = Matrix::zeros(r * o, r * o);
    for k in ch.kraus() {
        // A = (𝟙 ⊗ K) ρ, then A (𝟙 ⊗ K)†
        let mut a = Matrix::zeros(r * o, r * i);
        for r1 in 0..r {
            for o1 in 0..o {
                for i1 in 0..i {
                    let kv = k[(o1, i1)];
                    if kv == ZERO {
                        continue;
                    }
                    for col in 0..r * i {
                        a[(r1 * o + o1, col)] += kv * rho[(r1 * i + i1, col)];
                    }
                }
            }
        }
        for row in 0..r * o {
            for r2 in 0..r {
                for o2 in 0..o {
                    let mut acc = ZERO;
                    for i2 in 0..i {
                        acc += a[(row, r2 * i + i2)] * k[(o2, i2)].conj();
                    }
                    next[(row, r2 * o + o2)] += acc;
                }
            }
        }
    }
    next
}

/// `Tr_trailing[(𝟙_r ⊗ E) ρ]`.
fn measure_trailing(rho: &Matrix, r: usize, e: &Matrix) -> Matrix {
    let i = e.rows();
    let mut next = Matrix::zeros(r, r);
    for r1 in 0..r {
        for r2 in 0..r {
            let mut acc = ZERO;
            for a in 0..i {
                for b in 0..i {
                    acc += e[(b, a)] * rho[(r1 * i + a, r2 * i + b)];
                }
            }
            next[(r1, r2)] = acc;
        }
    }
    next
}

/// Topological order that greedily keeps the live edge space small.
fn greedy_order(m: &CausalModel, cap: u128) -> Result<Vec<usize>> {
    let g = m.graph();
    let n = g.vertex_count();
    let mut done = vec![false; n];
    let mut live_dim: u128 = 1;
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(u128, usize)> = None;
        for v in 0..n {
            if done[v] || g.parent_indices(v).iter().any(|&p| !done[p]) {
                continue;
            }
            let after = live_dim / m.in_dim(v) as u128 * m.out_dim(v) as u128;
            if best.is_none_or(|(b, _)| after < b) {
                best = Some((after, v));
            }
        }
        let (after, v) = best.ok_or(QcmError::CyclicGraph)?;
        if after > cap {
            return Err(QcmError::DimensionCap { total: after, cap });
        }
        done[v] = true;
        live_dim = after;
        order.push(v);
    }
    Ok(order)
}
