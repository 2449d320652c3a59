//! Command implementations and output schemas behind the `netgain` binary.
//!
//! Everything here is ordinary library code so the integration tests can
//! re-parse emitted JSON under the exact schema types. The binary itself
//! only parses arguments, dispatches, and maps outcomes to exit codes:
//! 0 success, 1 input error, 2 mathematically infinite or infeasible
//! result.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use netgain::allocator::{
    grid_oracle, optimize_weights, AllocError, AllocationJson, AllocationProblem,
    OptimizeOptions,
};
use netgain::analysis::{
    connectivity_bound, hinf_norm, signed_psd_check, AnalysisError, CertificateJson,
    ConnectivityBound, Gain, MaybeInf,
};
use netgain::graph::{NetworkFile, PortEntry, SignedGraph};
use netgain::simulator::{
    gain_check, simulate, suggested_horizon, PiecewiseConstantSignal, SimulationTrace,
};

/// Exit code 0: success. The JSON/CSV payload went to the output target.
pub const EXIT_OK: i32 = 0;
/// Exit code 1: malformed input or violated precondition.
pub const EXIT_INPUT: i32 = 1;
/// Exit code 2: mathematically infinite or infeasible result.
pub const EXIT_INFINITE: i32 = 2;

/// A command outcome: the exit code plus whatever was written.
pub struct Outcome {
    pub exit_code: i32,
}

#[derive(Debug)]
pub enum CliError {
    /// Reported to stderr; exit code 1.
    Input(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

fn input_err(context: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{context}: {err}"))
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| input_err(&format!("cannot read {}", path.display()), e))
}

/// Writes atomically when a path is given (temp file in the same directory,
/// then rename), otherwise to stdout.
pub fn write_output(target: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match target {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
            let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
                .map_err(|e| input_err("cannot create temporary file", e))?;
            tmp.write_all(content.as_bytes())
                .map_err(|e| input_err("cannot write output", e))?;
            tmp.persist(path)
                .map_err(|e| input_err(&format!("cannot write {}", path.display()), e))?;
            Ok(())
        }
    }
}

fn parse_network(text: &str) -> Result<NetworkFile, CliError> {
    NetworkFile::from_json(text).map_err(|e| input_err("invalid network JSON", e))
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

/// Output of `netgain analyze`: the gain certificate plus per-port
/// effective resistances and the connectivity data behind the bound.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnalyzeJson {
    #[serde(flatten)]
    pub certificate: CertificateJson,
    pub lambda2: f64,
    pub port_resistances: Vec<MaybeInf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disconnected_port: Option<PortEntry>,
}

pub fn cmd_analyze(input_text: &str, output: Option<&PathBuf>) -> Result<Outcome, CliError> {
    let file = parse_network(input_text)?;
    let graph = file
        .fixed_graph()
        .map_err(|e| input_err("invalid graph", e))?;
    let ports = file
        .port_set()
        .map_err(|e| input_err("invalid ports", e))?;

    let gain = hinf_norm(&graph, &ports).map_err(|e| input_err("analysis failed", e))?;
    let bound =
        connectivity_bound(&graph, &ports).map_err(|e| input_err("analysis failed", e))?;
    let port_resistances = ports
        .ports()
        .iter()
        .map(|&(i, o)| {
            MaybeInf(
                graph
                    .effective_resistance(i, o)
                    .unwrap_or(f64::INFINITY),
            )
        })
        .collect();

    let report = AnalyzeJson {
        certificate: CertificateJson::new(&gain, &bound),
        lambda2: graph.algebraic_connectivity(),
        port_resistances,
        disconnected_port: match &gain {
            Gain::Infinite {
                inflow, outflow, ..
            } => Some(PortEntry {
                inflow: *inflow,
                outflow: *outflow,
            }),
            Gain::Finite(_) => None,
        },
    };
    write_output(output, &to_pretty_json(&report))?;
    Ok(Outcome {
        exit_code: if gain.is_finite() {
            EXIT_OK
        } else {
            EXIT_INFINITE
        },
    })
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

pub struct OptimizeArgs {
    pub budget: f64,
    pub oracle: bool,
    pub oracle_step: f64,
    pub options: OptimizeOptions,
}

pub fn cmd_optimize(
    input_text: &str,
    output: Option<&PathBuf>,
    args: &OptimizeArgs,
) -> Result<Outcome, CliError> {
    let file = parse_network(input_text)?;
    let (n, pairs) = file
        .free_topology()
        .map_err(|e| input_err("invalid topology", e))?;
    let ports = file
        .port_set()
        .map_err(|e| input_err("invalid ports", e))?;

    let problem = match AllocationProblem::new(n, pairs, ports, args.budget) {
        Ok(p) => p,
        Err(AllocError::Infeasible) => {
            eprintln!("infeasible: no allocation of the budget connects every port");
            return Ok(Outcome {
                exit_code: EXIT_INFINITE,
            });
        }
        Err(e) => return Err(input_err("invalid allocation problem", e)),
    };

    let result =
        optimize_weights(&problem, &args.options).map_err(|e| input_err("optimizer failed", e))?;
    let oracle_gamma = if args.oracle {
        let oracle = grid_oracle(&problem, args.oracle_step)
            .map_err(|e| input_err("grid oracle failed", e))?;
        Some(oracle.gamma)
    } else {
        None
    };

    let report = AllocationJson::new(&result, oracle_gamma);
    write_output(output, &to_pretty_json(&report))?;
    Ok(Outcome { exit_code: EXIT_OK })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub struct SimulateArgs {
    pub dt: f64,
    pub t_final: Option<f64>,
    pub gamma: Option<f64>,
}

pub fn cmd_simulate(
    input_text: &str,
    signal_text: &str,
    output: Option<&PathBuf>,
    args: &SimulateArgs,
) -> Result<Outcome, CliError> {
    let file = parse_network(input_text)?;
    let graph = file
        .fixed_graph()
        .map_err(|e| input_err("invalid graph", e))?;
    let ports = file
        .port_set()
        .map_err(|e| input_err("invalid ports", e))?;
    let signal = PiecewiseConstantSignal::from_json(signal_text)
        .map_err(|e| input_err("invalid signal JSON", e))?;

    let gamma = match args.gamma {
        Some(g) if g > 0.0 => g,
        Some(g) => return Err(CliError::Input(format!("gamma must be positive, got {g}"))),
        None => match hinf_norm(&graph, &ports).map_err(|e| input_err("analysis failed", e))? {
            Gain::Finite(c) => c.gamma,
            Gain::Infinite {
                port,
                inflow,
                outflow,
            } => {
                eprintln!(
                    "gain is infinite: port {port} ({inflow}, {outflow}) is disconnected"
                );
                return Ok(Outcome {
                    exit_code: EXIT_INFINITE,
                });
            }
        },
    };
    let t_final = args
        .t_final
        .unwrap_or_else(|| suggested_horizon(&graph, &signal));

    let trace = simulate(&graph, &ports, &signal, t_final, args.dt)
        .map_err(|e| input_err("simulation rejected", e))?;
    write_output(output, &trace_csv(&trace, gamma))?;

    let check = gain_check(&trace, gamma);
    eprintln!(
        "gain bound {}: gamma = {gamma}, worst margin = {:e}",
        if check.holds { "holds" } else { "violated" },
        check.worst_margin
    );
    Ok(Outcome { exit_code: EXIT_OK })
}

/// CSV rows `t, x_0.., y_0.., d_l2_running, y_l2_running, gamma_times_d_l2`;
/// the last two columns are the two curves of the verification plot.
pub fn trace_csv(trace: &SimulationTrace, gamma: f64) -> String {
    let n = trace.states.first().map_or(0, |s| s.len());
    let k = trace.outputs.first().map_or(0, |y| y.len());
    let mut out = String::new();
    out.push('t');
    for i in 0..n {
        let _ = write!(out, ",x_{i}");
    }
    for j in 0..k {
        let _ = write!(out, ",y_{j}");
    }
    out.push_str(",d_l2_running,y_l2_running,gamma_times_d_l2\n");
    for s in 0..trace.len() {
        let _ = write!(out, "{}", trace.times[s]);
        for x in &trace.states[s] {
            let _ = write!(out, ",{x}");
        }
        for y in &trace.outputs[s] {
            let _ = write!(out, ",{y}");
        }
        let d = trace.running_input_l2[s];
        let _ = writeln!(
            out,
            ",{d},{},{}",
            trace.running_output_l2[s],
            gamma * d
        );
    }
    out
}

// ---------------------------------------------------------------------------
// check-signed
// ---------------------------------------------------------------------------

/// Output of `netgain check-signed`. `threshold` is the analytic bound
/// `1/R_uv`, absent in numeric-only mode.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SignedJson {
    pub psd: bool,
    pub lambda_min: f64,
    pub threshold: Option<f64>,
    pub negative_edges: usize,
}

pub fn cmd_check_signed(
    input_text: &str,
    output: Option<&PathBuf>,
    numeric_only: bool,
) -> Result<Outcome, CliError> {
    let file = parse_network(input_text)?;
    let (positive, negatives) = file
        .signed_parts()
        .map_err(|e| input_err("invalid graph", e))?;
    if negatives.is_empty() {
        return Err(CliError::Input(
            "no negative edges to check; give at least one edge with w < 0".into(),
        ));
    }

    let report = if numeric_only {
        let signed = SignedGraph::new(positive, negatives.clone())
            .map_err(|e| input_err("invalid signed graph", e))?;
        let verdict = signed.laplacian().psd();
        SignedJson {
            psd: verdict.psd,
            lambda_min: verdict.lambda_min,
            threshold: None,
            negative_edges: negatives.len(),
        }
    } else {
        if negatives.len() > 1 {
            return Err(CliError::Input(format!(
                "{} negative edges, but the analytic threshold only covers one; \
                 rerun with --numeric-only for the eigenvalue verdict",
                negatives.len()
            )));
        }
        let (u, v, w) = negatives[0];
        match signed_psd_check(&positive, (u, v), w) {
            Ok(r) => SignedJson {
                psd: r.psd,
                lambda_min: r.lambda_min,
                threshold: Some(r.threshold),
                negative_edges: 1,
            },
            Err(AnalysisError::PositivePartDisconnected) => {
                eprintln!("positive part is disconnected: the analytic threshold is degenerate");
                return Ok(Outcome {
                    exit_code: EXIT_INFINITE,
                });
            }
            Err(e) => return Err(input_err("signed check failed", e)),
        }
    };
    write_output(output, &to_pretty_json(&report))?;
    Ok(Outcome { exit_code: EXIT_OK })
}

// ---------------------------------------------------------------------------
// bound
// ---------------------------------------------------------------------------

/// Output of `netgain bound`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoundJson {
    pub bound: MaybeInf,
    pub lambda2: f64,
    pub port_gram_lambda_max: f64,
}

pub fn cmd_bound(input_text: &str, output: Option<&PathBuf>) -> Result<Outcome, CliError> {
    let file = parse_network(input_text)?;
    let graph = file
        .fixed_graph()
        .map_err(|e| input_err("invalid graph", e))?;
    let ports = file
        .port_set()
        .map_err(|e| input_err("invalid ports", e))?;
    let bound =
        connectivity_bound(&graph, &ports).map_err(|e| input_err("analysis failed", e))?;
    let report = match bound {
        ConnectivityBound::Finite(r) => BoundJson {
            bound: MaybeInf(r.bound),
            lambda2: r.lambda2,
            port_gram_lambda_max: r.port_gram_lambda_max,
        },
        ConnectivityBound::Infinite {
            port_gram_lambda_max,
        } => BoundJson {
            bound: MaybeInf(f64::INFINITY),
            lambda2: graph.algebraic_connectivity(),
            port_gram_lambda_max,
        },
    };
    let infinite = !report.bound.0.is_finite();
    write_output(output, &to_pretty_json(&report))?;
    Ok(Outcome {
        exit_code: if infinite { EXIT_INFINITE } else { EXIT_OK },
    })
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    text.push('\n');
    text
}
