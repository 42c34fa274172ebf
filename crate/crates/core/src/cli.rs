//! Command-line front end: `solve`, `oracle`, `tree` and `validate`.
//!
//! Exit codes: 0 success, 2 validation failure, 3 parse error, 4 internal
//! invariant violation. Reports are JSON with a fixed key order and every
//! float written with 17 significant digits.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::ser::{Serialize, Serializer};
use serde::Deserialize;
use serde_json::value::RawValue;

use crate::energy::tree_gap_unchecked;
use crate::graph::{max_abs, FlowState, Graph};
use crate::instance::{load_instance, load_vector, InstanceFile, ParseError};
use crate::oracle::{reference_solve, OracleError};
use crate::solver::{solve, SolveError, SolverConfig};
use crate::spantree::{SpanningTree, TreeStrategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "nlap", version, about = "Solver for nonlinear graph Laplacian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the randomized cycle-update solver.
    Solve {
        instance: PathBuf,
        /// Demand file; defaults to the path named in the instance.
        b: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Nonlinearity bound; defaults to the smallest admissible value.
        #[arg(long)]
        k: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "spt")]
        tree: TreeStrategy,
        #[arg(long)]
        max_iters: Option<u64>,
        #[arg(long)]
        gap_exit: Option<f64>,
        #[arg(long)]
        trace_every: Option<u64>,
        /// Write `wall_time_s` as null so output is reproducible byte for byte.
        #[arg(long)]
        no_wall_time: bool,
    },
    /// Dense Newton reference solution.
    Oracle {
        instance: PathBuf,
        b: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Per-edge stretch of the spanning tree as TSV.
    Tree {
        instance: PathBuf,
        #[arg(long, default_value = "spt")]
        tree: TreeStrategy,
    },
    /// Check an instance, and optionally re-check a `solve` report against it.
    Validate {
        instance: PathBuf,
        b: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Parse(String),
    Validation(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) => EXIT_PARSE,
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Parse(m) | Self::Validation(m) | Self::Internal(m) => m,
        }
    }
}

impl From<ParseError> for CliError {
    fn from(err: ParseError) -> Self {
        Self::Parse(format!("parse error: {err}"))
    }
}

impl From<SolveError> for CliError {
    fn from(err: SolveError) -> Self {
        if err.is_internal() {
            Self::Internal(format!("internal error: {err}"))
        } else {
            Self::Validation(format!("validation error: {err}"))
        }
    }
}

impl From<OracleError> for CliError {
    fn from(err: OracleError) -> Self {
        match err {
            OracleError::NoConvergence { .. } | OracleError::Singular => {
                Self::Internal(format!("internal error: {err}"))
            }
            _ => Self::Validation(format!("validation error: {err}")),
        }
    }
}

fn validation(err: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("validation error: {err}"))
}

/// Full-precision float for JSON output; non-finite values become `null`.
#[derive(Debug, Clone, Copy)]
struct Full(f64);

impl Serialize for Full {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

fn full(values: &[f64]) -> Vec<Full> {
    values.iter().copied().map(Full).collect()
}

fn full_trace(trace: &[(u64, f64)]) -> Vec<(u64, Full)> {
    trace.iter().map(|&(i, v)| (i, Full(v))).collect()
}

#[derive(serde::Serialize)]
struct SolveOutput {
    x: Vec<Full>,
    g: Vec<Full>,
    iterations: u64,
    #[serde(rename = "S_budget")]
    s_budget: u64,
    tau: Full,
    st: Full,
    energy_trace: Vec<(u64, Full)>,
    tgap_trace: Vec<(u64, Full)>,
    seed: u64,
    wall_time_s: Option<Full>,
    final_tgap: Full,
    final_energy: Full,
    tree: String,
    root: usize,
}

#[derive(serde::Serialize)]
struct OracleOutput {
    x: Vec<Full>,
    g: Vec<Full>,
    phi: Full,
    kkt_residual: Full,
    newton_steps: usize,
}

#[derive(serde::Serialize)]
struct ValidateOutput {
    ok: bool,
    failures: Vec<String>,
    b_residual: Option<Full>,
    tgap: Option<Full>,
    report_tgap: Option<Full>,
}

#[derive(Deserialize)]
struct SolveReportFile {
    g: Vec<Option<f64>>,
    final_tgap: Option<f64>,
    tree: String,
}

struct Loaded {
    graph: Graph,
    b: Vec<f64>,
}

fn load_graph(instance: &InstanceFile) -> Result<Graph, CliError> {
    instance.to_graph().map_err(validation)
}

fn load(instance_path: &Path, b_path: Option<&Path>) -> Result<Loaded, CliError> {
    let instance = load_instance(instance_path)?;
    let b_path = b_path
        .map(Path::to_path_buf)
        .or_else(|| instance.b_path.clone())
        .ok_or_else(|| CliError::Parse("parse error: no demand file given or named in the instance".into()))?;
    let b = load_vector(&b_path)?;
    let graph = load_graph(&instance)?;
    if b.len() != graph.node_count() {
        return Err(CliError::Parse(format!(
            "parse error: demand file has {} entries for {} nodes",
            b.len(),
            graph.node_count()
        )));
    }
    graph.validate_instance(&b).into_result().map_err(validation)?;
    Ok(Loaded { graph, b })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("report serializes");
    s.push('\n');
    s
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    instance: &Path,
    b: Option<&Path>,
    epsilon: f64,
    k: Option<f64>,
    seed: u64,
    tree: TreeStrategy,
    max_iters: Option<u64>,
    gap_exit: Option<f64>,
    trace_every: Option<u64>,
    no_wall_time: bool,
) -> Result<String, CliError> {
    let Loaded { graph, b } = load(instance, b)?;
    let k = k.unwrap_or_else(|| graph.edges().iter().map(|e| e.response.k_bound()).fold(1.0, f64::max));
    let config = SolverConfig {
        epsilon,
        k,
        seed,
        tree_strategy: tree,
        max_iterations_override: max_iters,
        gap_early_exit: gap_exit,
        trace_every,
    };
    let report = solve(&graph, &b, &config)?;
    Ok(to_json(&SolveOutput {
        x: full(&report.x_final),
        g: full(report.g_final.as_slice()),
        iterations: report.iterations,
        s_budget: report.s_budget,
        tau: Full(report.tau),
        st: Full(report.st),
        energy_trace: full_trace(&report.energy_trace),
        tgap_trace: full_trace(&report.tgap_trace),
        seed: report.seed,
        wall_time_s: (!no_wall_time).then_some(Full(report.wall_time.as_secs_f64())),
        final_tgap: Full(report.final_tgap),
        final_energy: Full(report.final_energy),
        tree: report.tree_strategy.to_string(),
        root: report.root,
    }))
}

fn cmd_oracle(instance: &Path, b: Option<&Path>, tol: f64) -> Result<String, CliError> {
    let Loaded { graph, b } = load(instance, b)?;
    let sol = reference_solve(&graph, &b, tol)?;
    Ok(to_json(&OracleOutput {
        x: full(&sol.x_star),
        g: full(sol.g_star.as_slice()),
        phi: Full(sol.phi_star),
        kkt_residual: Full(sol.kkt_residual),
        newton_steps: sol.newton_steps,
    }))
}

fn cmd_tree(instance: &Path, strategy: TreeStrategy) -> Result<String, CliError> {
    let graph = load_graph(&load_instance(instance)?)?;
    let tree = SpanningTree::build(&graph, strategy).map_err(validation)?;
    let mut out = String::from("edge\tu\tv\tweight\tin_tree\tstretch\n");
    for (idx, (e, s)) in graph.edges().iter().zip(tree.stretch()).enumerate() {
        let flag = u8::from(tree.contains(idx));
        out.push_str(&format!("{idx}\t{}\t{}\t{}\t{flag}\t{s}\n", e.u, e.v, e.weight));
    }
    let (n, m) = (graph.node_count() as f64, graph.edge_count() as f64);
    let identity = tree.total_stretch() + m - 2.0 * n + 2.0;
    let holds = (identity - tree.tau()).abs() <= 1e-9 * tree.tau().abs().max(1.0);
    out.push_str(&format!("# root\t{}\n", tree.root()));
    out.push_str(&format!("# st\t{}\n", tree.total_stretch()));
    out.push_str(&format!("# tau\t{}\n", tree.tau()));
    out.push_str(&format!(
        "# st+m-2n+2\t{identity}\t{}\n",
        if holds { "ok" } else { "MISMATCH" }
    ));
    if !holds {
        return Err(CliError::Internal(format!(
            "internal error: tau identity mismatch\n{out}"
        )));
    }
    Ok(out)
}

fn cmd_validate(instance: &Path, b: Option<&Path>, report: Option<&Path>) -> Result<(String, bool), CliError> {
    let parsed = load_instance(instance)?;
    let b_path = b.map(Path::to_path_buf).or_else(|| parsed.b_path.clone());
    let graph = load_graph(&parsed)?;
    let mut failures = Vec::new();
    let b = match b_path {
        Some(path) => load_vector(&path)?,
        None => vec![0.0; graph.node_count()],
    };
    if b.len() != graph.node_count() {
        return Err(CliError::Parse(format!(
            "parse error: demand file has {} entries for {} nodes",
            b.len(),
            graph.node_count()
        )));
    }
    failures.extend(graph.validate_instance(&b).failures.iter().map(ToString::to_string));

    let mut out = ValidateOutput {
        ok: false,
        failures: Vec::new(),
        b_residual: None,
        tgap: None,
        report_tgap: None,
    };
    if let Some(path) = report {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("parse error: {}: {e}", path.display())))?;
        let parsed: SolveReportFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("parse error: {}: {e}", path.display())))?;
        let strategy: TreeStrategy = parsed.tree.parse().map_err(|e| CliError::Parse(format!("parse error: {e}")))?;
        let g: Option<Vec<f64>> = parsed.g.into_iter().collect();
        let g = g.ok_or_else(|| CliError::Parse("parse error: report flow has non-finite entries".into()))?;
        if g.len() != graph.edge_count() {
            return Err(CliError::Parse(format!(
                "parse error: report has {} flow entries for {} edges",
                g.len(),
                graph.edge_count()
            )));
        }
        let g = FlowState::from(g);
        let residual = max_abs(&graph.net_response(&g).iter().zip(&b).map(|(r, bi)| r - bi).collect::<Vec<_>>());
        if residual > 1e-9 * (1.0 + max_abs(&b)) {
            failures.push(format!("flow is not b-feasible: residual {residual:e}"));
        }
        out.b_residual = Some(Full(residual));
        if failures.is_empty() {
            let tree = SpanningTree::build(&graph, strategy).map_err(validation)?;
            let tgap = tree_gap_unchecked(&graph, &tree, &g);
            out.tgap = Some(Full(tgap));
            out.report_tgap = parsed.final_tgap.map(Full);
            match parsed.final_tgap {
                Some(reported) if (tgap - reported).abs() <= 1e-9 * reported.abs().max(f64::MIN_POSITIVE) => {}
                _ => failures.push(format!("TGAP {tgap:e} does not match the reported final_tgap")),
            }
        }
    }
    out.ok = failures.is_empty();
    out.failures = failures;
    Ok((to_json(&out), out.ok))
}

/// Runs the CLI with explicit arguments and output streams; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = write!(stderr, "{err}");
            return if err.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Solve {
            instance,
            b,
            epsilon,
            k,
            seed,
            tree,
            max_iters,
            gap_exit,
            trace_every,
            no_wall_time,
        } => cmd_solve(
            &instance,
            b.as_deref(),
            epsilon,
            k,
            seed,
            tree,
            max_iters,
            gap_exit,
            trace_every,
            no_wall_time,
        )
        .map(|s| (s, true)),
        Command::Oracle { instance, b, tol } => cmd_oracle(&instance, b.as_deref(), tol).map(|s| (s, true)),
        Command::Tree { instance, tree } => cmd_tree(&instance, tree).map(|s| (s, true)),
        Command::Validate { instance, b, report } => cmd_validate(&instance, b.as_deref(), report.as_deref()),
    };
    match result {
        Ok((text, ok)) => {
            let _ = stdout.write_all(text.as_bytes());
            if ok {
                EXIT_OK
            } else {
                let _ = writeln!(stderr, "validation failed");
                EXIT_VALIDATION
            }
        }
        Err(err) => {
            let _ = writeln!(stderr, "{}", err.message());
            err.exit_code()
        }
    }
}
