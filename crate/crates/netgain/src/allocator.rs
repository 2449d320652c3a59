//! Edge-weight allocation: minimize the induced L2 gain over the budget
//! simplex `{w >= 0, sum w_i = c}`.
//!
//! The objective `f(w) = lambda_max(E^T L_w^+ E)` is convex (matrix inverse
//! on the PSD cone restricted to the complement of the all-ones direction,
//! composed with a linear congruence and `lambda_max`), so a projected
//! subgradient method with diminishing steps converges on the simplex and
//! no external SDP solver is needed. Every gain evaluation is one small
//! eigendecomposition.
//!
//! Subgradient at `w`: with `v` a unit top eigenvector of the gain matrix
//! and `u = L_w^+ E v`,
//!
//! ```text
//! df/dw_e = -(u[a] - u[b])^2      for edge e = (a, b),
//! ```
//!
//! which follows from `d(L^+)/dw_e = -L^+ b_e b_e^T L^+` on the complement
//! of the kernel. Tests validate this against central finite differences.
//!
//! The problem is internally normalized to unit budget and rescaled at the
//! end, so optimal gains obey `gamma*(c) = gamma*(1)/c` to roundoff.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, gain_core, GainCore, HinfCertificate};
use crate::graph::{GraphError, PortSet, WeightedGraph};

/// Most edges the exhaustive [`grid_oracle`] accepts before the lattice
/// blows up combinatorially.
pub const ORACLE_MAX_EDGES: usize = 5;

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("budget must be positive and finite, got {0}")]
    BadBudget(f64),
    #[error("oracle lattice step must lie in (0, 1], got {0}")]
    BadStep(f64),
    #[error("initial step size must be positive and finite, got {0}")]
    BadStepSize(f64),
    #[error("no allocation on the budget simplex connects every port (uniform weights fail)")]
    Infeasible,
    #[error("whole topology must be connected for connectivity maximization")]
    TopologyDisconnected,
    #[error("grid oracle supports at most {max} edges, got {got}")]
    TooManyEdges { got: usize, max: usize },
    #[error("optimizer landed on a disconnected allocation it could not certify")]
    DisconnectedOptimum,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}

/// A topology whose edge weights are the decision variables, the ports the
/// gain is measured across, and the total weight budget.
#[derive(Debug, Clone)]
pub struct AllocationProblem {
    template: WeightedGraph,
    ports: PortSet,
    budget: f64,
}

impl AllocationProblem {
    /// Validates the topology and checks feasibility: the uniform
    /// allocation `c/m` per edge must connect every port pair.
    pub fn new(
        n_nodes: usize,
        edge_pairs: impl IntoIterator<Item = (usize, usize)>,
        ports: PortSet,
        budget: f64,
    ) -> Result<Self, AllocError> {
        if !budget.is_finite() || budget <= 0.0 {
            return Err(AllocError::BadBudget(budget));
        }
        let template = WeightedGraph::new(
            n_nodes,
            edge_pairs.into_iter().map(|(u, v)| (u, v, 0.0)),
        )?;
        if template.n_nodes() != ports.n_nodes() {
            return Err(AllocError::Analysis(
                analysis::AnalysisError::NodeCountMismatch {
                    graph: template.n_nodes(),
                    ports: ports.n_nodes(),
                },
            ));
        }
        let prob = Self {
            template,
            ports,
            budget,
        };
        let m = prob.n_edges();
        if m == 0 {
            return Err(AllocError::Infeasible);
        }
        let uniform = prob.graph_with(&vec![budget / m as f64; m])?;
        let mut sets = uniform.support_components();
        for &(inflow, outflow) in prob.ports.ports() {
            if !sets.same_set(inflow, outflow) {
                return Err(AllocError::Infeasible);
            }
        }
        Ok(prob)
    }

    pub fn n_nodes(&self) -> usize {
        self.template.n_nodes()
    }

    pub fn n_edges(&self) -> usize {
        self.template.n_edges()
    }

    pub fn ports(&self) -> &PortSet {
        &self.ports
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.template.edges().iter().map(|e| (e.u, e.v)).collect()
    }

    /// The topology realized with concrete weights.
    pub fn graph_with(&self, weights: &[f64]) -> Result<WeightedGraph, GraphError> {
        self.template.with_weights(weights)
    }
}

/// Knobs of the subgradient loop. `step0 = None` uses the budget, matching
/// the diminishing schedule `alpha_k = c / sqrt(k)`.
#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    /// Relative improvement below which an iteration counts as stalled.
    pub rtol: f64,
    /// Consecutive stalled iterations that trigger termination.
    pub stall_window: usize,
    pub step0: Option<f64>,
    /// Random restarts in addition to the uniform start.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rtol: 1e-7,
            stall_window: 200,
            step0: None,
            restarts: 3,
            seed: 0,
        }
    }
}

/// One entry of the optimizer trace.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    /// Best objective value seen up to this iteration.
    pub best_value: f64,
    /// Step length used this iteration.
    pub step: f64,
}

/// Weights on the budget simplex with the re-certified gain achieved there.
#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub weights: Vec<f64>,
    /// Gain at `weights`, re-certified through [`analysis::hinf_norm`]
    /// rather than trusted from the optimizer loop.
    pub gamma: f64,
    /// Total iterations across all restarts (lattice points for the oracle).
    pub iterations: usize,
    /// Random restarts performed.
    pub restarts: usize,
    /// False when the best restart exhausted `max_iters` without stalling.
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    pub certificate: HinfCertificate,
}

/// Result JSON emitted by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AllocationJson {
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub suboptimality_vs_oracle: Option<f64>,
}

impl AllocationJson {
    pub fn new(result: &AllocationResult, oracle_gamma: Option<f64>) -> Self {
        AllocationJson {
            weights: result.weights.clone(),
            gamma: result.gamma,
            iterations: result.iterations,
            restarts: result.restarts,
            converged: result.converged,
            suboptimality_vs_oracle: oracle_gamma.map(|g| result.gamma - g),
        }
    }
}

/// Euclidean projection onto the simplex `{w >= 0, sum w_i = c}` by the
/// sort-and-threshold rule; ties broken by index through the stable sort.
pub fn project_to_simplex(v: &[f64], c: f64) -> Vec<f64> {
    assert!(c > 0.0, "budget must be positive");
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = (v.iter().sum::<f64>() - c) / v.len() as f64;
    for (i, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let candidate = (cumsum - c) / (i + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Objective value and one subgradient of `f(w) = lambda_max(E^T L_w^+ E)`
/// at `w`; `None` when some port is disconnected (infinite gain). The
/// weights need not lie on the simplex.
pub fn gain_and_subgradient(
    prob: &AllocationProblem,
    weights: &[f64],
) -> Result<Option<(f64, Vec<f64>)>, AllocError> {
    let graph = prob.graph_with(weights)?;
    match gain_core(&graph, &prob.ports)? {
        GainCore::Disconnected { .. } => Ok(None),
        GainCore::Connected {
            gain_matrix,
            lap_pinv,
        } => {
            let (gamma, v) = analysis::top_eigenpair(&gain_matrix);
            let u = lap_pinv.as_matrix() * prob.ports.matrix() * v;
            let grad = graph
                .edges()
                .iter()
                .map(|e| {
                    let diff = u[e.u] - u[e.v];
                    -diff * diff
                })
                .collect();
            Ok(Some((gamma, grad)))
        }
    }
}

/// Objective value alone (no subgradient), for exhaustive search.
fn gain_value(prob: &AllocationProblem, weights: &[f64]) -> Result<Option<f64>, AllocError> {
    let graph = prob.graph_with(weights)?;
    match gain_core(&graph, &prob.ports)? {
        GainCore::Disconnected { .. } => Ok(None),
        GainCore::Connected { gain_matrix, .. } => {
            Ok(Some(gain_matrix.spectrum().lambda_max()))
        }
    }
}

fn ports_connected(prob: &AllocationProblem, weights: &[f64]) -> Result<bool, AllocError> {
    let graph = prob.graph_with(weights)?;
    let mut sets = graph.support_components();
    Ok(prob
        .ports
        .ports()
        .iter()
        .all(|&(i, o)| sets.same_set(i, o)))
}

struct RunOutcome {
    weights: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    history: Vec<IterationRecord>,
}

/// One subgradient descent run at unit budget from `start`.
fn descend_unit(
    prob: &AllocationProblem,
    opts: &OptimizeOptions,
    step0: f64,
    start: Vec<f64>,
) -> Result<RunOutcome, AllocError> {
    let mut w = project_to_simplex(&start, 1.0);
    let mut best_w = w.clone();
    let mut best_f = f64::INFINITY;
    let mut history = Vec::with_capacity(opts.max_iters);
    let mut stall = 0usize;
    let mut scale = 1.0f64;
    let mut converged = false;
    let mut iterations = 0usize;

    for k in 1..=opts.max_iters {
        iterations = k;
        let (f, grad) = gain_and_subgradient(prob, &w)?
            .expect("iterates keep every port connected");
        if f < best_f {
            let improved = best_f - f >= opts.rtol * f.max(f64::MIN_POSITIVE);
            best_f = f;
            best_w.copy_from_slice(&w);
            stall = if improved { 0 } else { stall + 1 };
        } else {
            stall += 1;
        }

        let mut alpha = scale * step0 / (k as f64).sqrt();
        history.push(IterationRecord {
            best_value: best_f,
            step: alpha,
        });
        if stall >= opts.stall_window {
            converged = true;
            break;
        }

        // Propose a step; on a disconnecting proposal halve the step scale.
        // Boundary allocations that keep the ports connected stay reachable.
        let mut candidate = propose(&w, &grad, alpha);
        let mut rejections = 0;
        while !ports_connected(prob, &candidate)? {
            scale *= 0.5;
            rejections += 1;
            if rejections > 60 {
                candidate.copy_from_slice(&w);
                break;
            }
            alpha = scale * step0 / (k as f64).sqrt();
            candidate = propose(&w, &grad, alpha);
        }
        w = candidate;
    }

    Ok(RunOutcome {
        weights: best_w,
        value: best_f,
        iterations,
        converged,
        history,
    })
}

fn propose(w: &[f64], grad: &[f64], alpha: f64) -> Vec<f64> {
    let moved: Vec<f64> = w
        .iter()
        .zip(grad)
        .map(|(&wi, &gi)| wi - alpha * gi)
        .collect();
    project_to_simplex(&moved, 1.0)
}

/// Certifies `weights` through the analysis module and packages the result.
fn certified_result(
    prob: &AllocationProblem,
    weights: Vec<f64>,
    iterations: usize,
    restarts: usize,
    converged: bool,
    history: Vec<IterationRecord>,
) -> Result<AllocationResult, AllocError> {
    let graph = prob.graph_with(&weights)?;
    let certificate = match analysis::hinf_norm(&graph, &prob.ports)? {
        analysis::Gain::Finite(c) => c,
        analysis::Gain::Infinite { .. } => return Err(AllocError::DisconnectedOptimum),
    };
    Ok(AllocationResult {
        weights,
        gamma: certificate.gamma,
        iterations,
        restarts,
        converged,
        history,
        certificate,
    })
}

/// Projected subgradient descent on the gain over the budget simplex, from
/// the uniform point plus `opts.restarts` random simplex points. The best
/// visited point across restarts is re-certified and returned.
pub fn optimize_weights(
    prob: &AllocationProblem,
    opts: &OptimizeOptions,
) -> Result<AllocationResult, AllocError> {
    let m = prob.n_edges();
    // Work at unit budget; scale back at the end. The step default
    // alpha_k = c/sqrt(k) becomes 1/sqrt(k) in normalized coordinates.
    let step0 = normalized_step0(opts, prob.budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut starts = vec![vec![1.0 / m as f64; m]];
    for _ in 0..opts.restarts {
        starts.push(random_simplex_point(&mut rng, m));
    }

    let mut best: Option<RunOutcome> = None;
    let mut total_iterations = 0usize;
    for start in starts {
        // A random start may disconnect a port; blend toward uniform until
        // feasible (the uniform point is feasible by construction).
        let start = feasible_start(prob, start)?;
        let run = descend_unit(prob, opts, step0, start)?;
        total_iterations += run.iterations;
        let better = match &best {
            None => true,
            Some(b) => run.value < b.value,
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");

    let weights: Vec<f64> = best.weights.iter().map(|&w| w * prob.budget).collect();
    certified_result(
        prob,
        weights,
        total_iterations,
        opts.restarts,
        best.converged,
        best.history,
    )
}

fn normalized_step0(opts: &OptimizeOptions, budget: f64) -> Result<f64, AllocError> {
    match opts.step0 {
        None => Ok(1.0),
        Some(s) if s.is_finite() && s > 0.0 => Ok(s / budget),
        Some(s) => Err(AllocError::BadStepSize(s)),
    }
}

fn random_simplex_point(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    // Normalized exponentials are uniform on the simplex.
    let mut point: Vec<f64> = (0..m)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = point.iter().sum();
    for x in &mut point {
        *x /= total;
    }
    point
}

fn feasible_start(prob: &AllocationProblem, start: Vec<f64>) -> Result<Vec<f64>, AllocError> {
    let m = start.len();
    let mut blend = 0.0;
    loop {
        let mixed: Vec<f64> = start
            .iter()
            .map(|&x| (1.0 - blend) * x + blend / m as f64)
            .collect();
        if ports_connected(prob, &mixed)? {
            return Ok(mixed);
        }
        blend += 0.25;
        if blend > 1.0 {
            return Err(AllocError::Infeasible);
        }
    }
}

/// Exhaustive minimization over the simplex lattice with spacing
/// `step * c`. Points with a disconnected port are skipped; gain
/// evaluations run in parallel. Intended as a validation oracle for small
/// problems (`m <= 5`).
pub fn grid_oracle(prob: &AllocationProblem, step: f64) -> Result<AllocationResult, AllocError> {
    let m = prob.n_edges();
    if m > ORACLE_MAX_EDGES {
        return Err(AllocError::TooManyEdges {
            got: m,
            max: ORACLE_MAX_EDGES,
        });
    }
    if !step.is_finite() || step <= 0.0 || step > 1.0 {
        return Err(AllocError::BadStep(step));
    }
    let divisions = (1.0 / step).round().max(1.0) as u32;

    // Parallelize over the first lattice coordinate; enumerate the rest
    // sequentially per task. The reduction orders candidates by value and
    // then lexicographically, which keeps the winner deterministic no
    // matter how rayon associates the reduce.
    let firsts: Vec<u32> = if m == 1 {
        vec![divisions]
    } else {
        (0..=divisions).collect()
    };
    let best = firsts
        .into_par_iter()
        .map(|first| {
            let mut local: Option<(f64, Vec<u32>)> = None;
            let mut point = vec![0u32; m];
            point[0] = first;
            enumerate_lattice(prob, divisions, &mut point, 1, divisions - first, &mut local);
            local
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (None, x) | (x, None) => x,
                (Some(a), Some(b)) => {
                    let ord = a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1));
                    if ord.is_le() {
                        Some(a)
                    } else {
                        Some(b)
                    }
                }
            },
        );

    let (_, lattice) = best.ok_or(AllocError::Infeasible)?;
    let scale = prob.budget / divisions as f64;
    let weights: Vec<f64> = lattice.iter().map(|&k| k as f64 * scale).collect();
    let evaluated = n_compositions(divisions as usize, m);
    certified_result(prob, weights, evaluated, 0, true, Vec::new())
}

fn enumerate_lattice(
    prob: &AllocationProblem,
    divisions: u32,
    point: &mut Vec<u32>,
    index: usize,
    remaining: u32,
    best: &mut Option<(f64, Vec<u32>)>,
) {
    if index >= point.len() {
        evaluate_lattice_point(prob, divisions, point, best);
        return;
    }
    if index + 1 == point.len() {
        point[index] = remaining;
        evaluate_lattice_point(prob, divisions, point, best);
        return;
    }
    for value in 0..=remaining {
        point[index] = value;
        enumerate_lattice(prob, divisions, point, index + 1, remaining - value, best);
    }
}

fn evaluate_lattice_point(
    prob: &AllocationProblem,
    divisions: u32,
    point: &[u32],
    best: &mut Option<(f64, Vec<u32>)>,
) {
    let weights: Vec<f64> = point
        .iter()
        .map(|&k| k as f64 / divisions as f64)
        .collect();
    let gain = gain_value(prob, &weights).expect("lattice weights are valid");
    if let Some(value) = gain {
        let better = match best {
            None => true,
            Some((bv, bp)) => value
                .total_cmp(bv)
                .then_with(|| point.cmp(bp.as_slice()))
                .is_lt(),
        };
        if better {
            *best = Some((value, point.to_vec()));
        }
    }
}

fn n_compositions(total: usize, parts: usize) -> usize {
    // C(total + parts - 1, parts - 1)
    let mut result = 1usize;
    for i in 0..parts - 1 {
        result = result * (total + i + 1) / (i + 1);
    }
    result
}

/// Projected supergradient ascent on the algebraic connectivity
/// `lambda_2(L_w)` over the budget simplex (a concave objective). The
/// returned `gamma` is the true certified gain at the connectivity-optimal
/// weights, so the gap to the gain-optimal allocation is measurable.
pub fn maximize_connectivity(
    prob: &AllocationProblem,
    opts: &OptimizeOptions,
) -> Result<AllocationResult, AllocError> {
    let m = prob.n_edges();
    let uniform = vec![prob.budget / m as f64; m];
    if !prob.graph_with(&uniform)?.is_support_connected() {
        return Err(AllocError::TopologyDisconnected);
    }
    let step0 = normalized_step0(opts, prob.budget)?;

    let mut w = vec![1.0 / m as f64; m];
    let mut best_w = w.clone();
    let mut best_l2 = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(opts.max_iters);
    let mut stall = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    for k in 1..=opts.max_iters {
        iterations = k;
        let graph = prob.graph_with(&w)?;
        let (l2, grad) = lambda2_and_supergradient(&graph);
        if l2 > best_l2 {
            let improved = l2 - best_l2 >= opts.rtol * l2.abs().max(f64::MIN_POSITIVE);
            best_l2 = l2;
            best_w.copy_from_slice(&w);
            stall = if improved { 0 } else { stall + 1 };
        } else {
            stall += 1;
        }
        let alpha = step0 / (k as f64).sqrt();
        history.push(IterationRecord {
            best_value: best_l2,
            step: alpha,
        });
        if stall >= opts.stall_window {
            converged = true;
            break;
        }
        let moved: Vec<f64> = w
            .iter()
            .zip(&grad)
            .map(|(&wi, &gi)| wi + alpha * gi)
            .collect();
        w = project_to_simplex(&moved, 1.0);
    }

    let weights: Vec<f64> = best_w.iter().map(|&x| x * prob.budget).collect();
    certified_result(prob, weights, iterations, 0, converged, history)
}

/// `lambda_2` with a supergradient: `(q[a] - q[b])^2` per edge for the
/// Fiedler vector `q` when the eigenvalue is simple, averaged over an
/// orthonormal eigenspace basis when it is multiple.
fn lambda2_and_supergradient(graph: &WeightedGraph) -> (f64, Vec<f64>) {
    let eig = graph.laplacian().spectrum();
    let n = graph.n_nodes();
    let eigenvalues = eig.eigenvalues();
    let lambda2 = eigenvalues[1];
    let gap_tol = 1e-8 * eigenvalues[n - 1].abs().max(1.0);
    let space: Vec<usize> = (1..n)
        .filter(|&i| (eigenvalues[i] - lambda2).abs() <= gap_tol)
        .collect();
    let grad = graph
        .edges()
        .iter()
        .map(|e| {
            space
                .iter()
                .map(|&i| {
                    let q = eig.vectors().column(i);
                    let d = q[e.u] - q[e.v];
                    d * d
                })
                .sum::<f64>()
                / space.len() as f64
        })
        .collect();
    (lambda2, grad)
}
