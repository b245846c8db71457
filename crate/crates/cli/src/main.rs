use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcm_core::engine::{cycle_weights, EngineOptions};
use qcm_core::graph::DEFAULT_ENUMERATION_CAP;
use qcm_core::io::{ModelDocument, ProtocolDocument};
use qcm_core::model::validate_model;
use qcm_core::separation::conditional_independence;
use qcm_core::{
    cyclic_probability, d_separated, markov_check, p_separated, CausalModel, Distribution, ProtocolChoice, QcmError,
    SeparationQuery, SplitVariant, TeleGraphChoice, Variable,
};
use serde_json::{json, Value};

/// Quantum and classical causal models on arbitrary directed graphs.
#[derive(Parser)]
#[command(name = "qcm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model file.
    Validate { path: PathBuf },
    /// Observed distribution of a (possibly cyclic) model.
    Prob {
        path: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// d-separation query on the model's graph.
    Dsep {
        path: PathBuf,
        #[command(flatten)]
        sets: SetArgs,
    },
    /// p-separation query on the model's graph.
    Psep {
        path: PathBuf,
        #[command(flatten)]
        sets: SetArgs,
        #[arg(long, value_enum, default_value_t = Variant::Edge)]
        variant: Variant,
        /// Largest edge (or vertex) count for which the family is enumerated.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: usize,
    },
    /// Conditional-independence test on the computed distribution.
    Ci {
        path: PathBuf,
        #[command(flatten)]
        sets: SetArgs,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Markov check: whether the cycle weights sum to one.
    Markov {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Unnormalized cycle weight of every outcome tuple.
    Selfcycle {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

#[derive(Args)]
struct EngineArgs {
    /// `maximal`, `kept=all`, or `kept=<edge>,<edge>,...` with edges written `A->B`.
    #[arg(long, default_value = "maximal")]
    tele_graph: String,
    /// `bell` or a protocol file.
    #[arg(long, default_value = "bell")]
    protocol: String,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct SetArgs {
    /// First set, as an alternative to `--x`.
    #[arg(value_name = "X", conflicts_with = "x")]
    pos_x: Option<String>,
    /// Second set, as an alternative to `--y`.
    #[arg(value_name = "Y", conflicts_with = "y")]
    pos_y: Option<String>,
    /// Comma-separated vertex ids.
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    y: Option<String>,
    #[arg(long, default_value = "")]
    z: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Edge,
    Vertex,
}

/// Error carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<QcmError> for Failure {
    fn from(e: QcmError) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

/// Rounds to 12 significant digits; tiny negatives from round-off become 0.
fn round12(p: f64) -> f64 {
    let p = if (-1e-12..0.0).contains(&p) { 0.0 } else { p };
    format!("{p:.11e}").parse().expect("formatted float parses")
}

fn list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect()
}

fn load_document(path: &Path) -> Result<ModelDocument, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    ModelDocument::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<CausalModel, Failure> {
    let model = load_document(path)?.to_model()?;
    let report = validate_model(&model);
    if let Some(f) = report.failures.first() {
        return Err(usage(format!(
            "model is invalid ({} problems); first at {}: {}",
            report.failures.len(),
            f.location,
            f.message
        )));
    }
    Ok(model)
}

fn engine_options(threads: usize) -> EngineOptions {
    EngineOptions::default().with_threads(threads)
}

fn tele_graph_choice(m: &CausalModel, value: &str) -> Result<TeleGraphChoice, Failure> {
    let g = m.graph();
    match value {
        "maximal" => Ok(TeleGraphChoice::Maximal),
        "kept=all" => Ok(TeleGraphChoice::Kept((0..g.edge_count()).collect())),
        _ => {
            let edges = value
                .strip_prefix("kept=")
                .ok_or_else(|| usage(format!("--tele-graph must be maximal, kept=all or kept=<edges>, got `{value}`")))?;
            let kept = list(edges).into_iter().map(|e| g.edge_index(e)).collect::<Result<Vec<_>, _>>()?;
            Ok(TeleGraphChoice::Kept(kept))
        }
    }
}

fn protocol_choice(m: &CausalModel, value: &str) -> Result<ProtocolChoice, Failure> {
    if value == "bell" {
        return Ok(ProtocolChoice::bell());
    }
    let text = std::fs::read_to_string(value).map_err(|e| usage(format!("{value}: {e}")))?;
    Ok(ProtocolDocument::parse(&text)?.to_choice(m.graph())?)
}

fn query(m: &CausalModel, sets: &SetArgs) -> Result<SeparationQuery, Failure> {
    let x = sets.x.as_ref().or(sets.pos_x.as_ref()).ok_or_else(|| usage("missing first set (X or --x)"))?;
    let y = sets.y.as_ref().or(sets.pos_y.as_ref()).ok_or_else(|| usage("missing second set (Y or --y)"))?;
    Ok(SeparationQuery::new(m.graph(), &list(x), &list(y), &list(&sets.z))?)
}

fn ids(m: &CausalModel, set: &[usize]) -> Vec<String> {
    set.iter().map(|&v| m.graph().id(v).to_string()).collect()
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn query_json(m: &CausalModel, q: &SeparationQuery) -> Value {
    json!({ "x": ids(m, &q.x), "y": ids(m, &q.y), "z": ids(m, &q.z) })
}

fn table(variables: &[Variable], values: &[f64]) -> Vec<Value> {
    let cards: Vec<usize> = variables.iter().map(|v| v.outcomes.len()).collect();
    values
        .iter()
        .enumerate()
        .map(|(flat, &p)| {
            let mut rest = flat;
            let mut labels = vec![""; cards.len()];
            for k in (0..cards.len()).rev() {
                labels[k] = &variables[k].outcomes[rest % cards[k]];
                rest /= cards[k];
            }
            json!({ "outcomes": labels, "p": round12(p) })
        })
        .collect()
}

fn distribution_json(d: &Distribution) -> Vec<Value> {
    table(d.variables(), d.probs())
}

struct Output {
    document: Value,
    summary: String,
    code: u8,
}

fn validate(path: &Path) -> Result<Output, Failure> {
    let model = load_document(path)?.to_model()?;
    let report = validate_model(&model);
    let mut summary = format!(
        "{}: {} ({} problems, max deviation {:.3e})",
        path.display(),
        if report.passed() { "valid" } else { "invalid" },
        report.failures.len(),
        report.max_deviation
    );
    for f in &report.failures {
        summary.push_str(&format!("\n  {}: {}", f.location, f.message));
    }
    Ok(Output {
        document: json!({
            "valid": report.passed(),
            "max_deviation": report.max_deviation,
            "failures": report.failures,
            "total_dimension": model.total_dimension().to_string(),
        }),
        summary,
        code: if report.passed() { 0 } else { 1 },
    })
}

fn prob(path: &Path, args: &EngineArgs) -> Result<Output, Failure> {
    let m = load_model(path)?;
    let tg = tele_graph_choice(&m, &args.tele_graph)?;
    let protocols = protocol_choice(&m, &args.protocol)?;
    let built = tg.build(&m)?;
    let r = cyclic_probability(&m, &tg, &protocols, &engine_options(args.threads))?;
    let labels = |edges: Vec<usize>| edges.into_iter().map(|e| m.graph().edge_label(e)).collect::<Vec<_>>();
    let consistent = r.is_consistent();
    let document = json!({
        "status": if consistent { "consistent" } else { "inconsistent" },
        "variables": r.variables,
        "kept_edges": labels(built.kept_edges().to_vec()),
        "split_edges": labels(built.split_edges()),
        "q_product": round12(r.q_product),
        "cycle_sum": round12(r.cycle_sum),
        "success_prob": round12(r.success_prob),
        "markov": r.markov,
        "table": r.distribution.as_ref().map(distribution_json),
    });
    let summary = if consistent {
        format!(
            "{} outcome tuples; success probability {:.6e}; {}",
            r.cycle_weights.len(),
            r.success_prob,
            if r.markov { "Markov" } else { "not Markov" }
        )
    } else {
        format!("inconsistent model: success probability {:.3e}", r.success_prob)
    };
    Ok(Output { document, summary, code: if consistent { 0 } else { 2 } })
}

fn dsep(path: &Path, sets: &SetArgs) -> Result<Output, Failure> {
    let m = load_model(path)?;
    let q = query(&m, sets)?;
    let separated = d_separated(m.graph(), &q)?;
    Ok(Output {
        document: json!({ "query": query_json(&m, &q), "d_separated": separated }),
        summary: format!("d-separated: {separated}"),
        code: 0,
    })
}

fn psep(path: &Path, sets: &SetArgs, variant: Variant, cap: usize) -> Result<Output, Failure> {
    let m = load_model(path)?;
    let q = query(&m, sets)?;
    let (variant, name) = match variant {
        Variant::Edge => (SplitVariant::EdgeSplit, "edge"),
        Variant::Vertex => (SplitVariant::VertexSplit, "vertex"),
    };
    let separated = p_separated(m.graph(), &q, variant, cap)?;
    Ok(Output {
        document: json!({ "query": query_json(&m, &q), "variant": name, "p_separated": separated }),
        summary: format!("p-separated ({name} split): {separated}"),
        code: 0,
    })
}

fn ci(path: &Path, sets: &SetArgs, tol: f64, args: &EngineArgs) -> Result<Output, Failure> {
    let m = load_model(path)?;
    let q = query(&m, sets)?;
    let tg = tele_graph_choice(&m, &args.tele_graph)?;
    let protocols = protocol_choice(&m, &args.protocol)?;
    let r = cyclic_probability(&m, &tg, &protocols, &engine_options(args.threads))?;
    let Some(d) = r.distribution else {
        return Ok(Output {
            document: json!({ "query": query_json(&m, &q), "status": "inconsistent" }),
            summary: "inconsistent model: no distribution to test".into(),
            code: 2,
        });
    };
    let (x, y, z) = (ids(&m, &q.x), ids(&m, &q.y), ids(&m, &q.z));
    let report = conditional_independence(&d, &strs(&x), &strs(&y), &strs(&z), tol)?;
    Ok(Output {
        document: json!({
            "query": query_json(&m, &q),
            "status": "consistent",
            "independent": report.independent,
            "max_violation": round12(report.max_violation),
            "tol": tol,
        }),
        summary: format!("independent: {} (max violation {:.3e})", report.independent, report.max_violation),
        code: 0,
    })
}

fn markov(path: &Path, threads: usize) -> Result<Output, Failure> {
    let m = load_model(path)?;
    let r = markov_check(&m, &engine_options(threads))?;
    Ok(Output {
        document: json!({ "markov": r.markov, "cycle_sum": round12(r.cycle_sum) }),
        summary: format!("Markov: {} (sum of cycle weights {:.12})", r.markov, r.cycle_sum),
        code: 0,
    })
}

fn selfcycle(path: &Path, threads: usize) -> Result<Output, Failure> {
    let m = load_model(path)?;
    let (variables, weights) = cycle_weights(&m, &engine_options(threads))?;
    let sum: f64 = weights.iter().sum();
    Ok(Output {
        document: json!({ "variables": variables, "cycle_sum": round12(sum), "weights": table(&variables, &weights) }),
        summary: format!("{} outcome tuples, sum of cycle weights {sum:.12}", weights.len()),
        code: 0,
    })
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    match &cli.command {
        Command::Validate { path } => validate(path),
        Command::Prob { path, engine } => prob(path, engine),
        Command::Dsep { path, sets } => dsep(path, sets),
        Command::Psep { path, sets, variant, cap } => psep(path, sets, *variant, *cap),
        Command::Ci { path, sets, tol, engine } => ci(path, sets, *tol, engine),
        Command::Markov { path, threads } => markov(path, *threads),
        Command::Selfcycle { path, threads } => selfcycle(path, *threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.document).expect("documents serialize"));
            eprintln!("{}", out.summary);
            ExitCode::from(out.code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
