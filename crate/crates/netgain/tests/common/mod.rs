//! Shared helpers for the integration suites: seeded random instances,
//! canonical fixture problems, and an integrator-independent reference
//! solution built from the spectral matrix exponential.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use netgain::allocator::AllocationProblem;
use netgain::graph::{PortSet, WeightedGraph};
use netgain::simulator::PiecewiseConstantSignal;
use netgain::spectral::SymMatrix;

/// Random connected graph on 2..=max_n nodes: a random spanning tree plus
/// a few extra edges, weights in [0.2, 3.0].
pub fn random_connected_graph(rng: &mut ChaCha8Rng, max_n: usize) -> WeightedGraph {
    let n = rng.random_range(2..=max_n);
    let mut pairs = std::collections::BTreeSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        pairs.insert((u, v));
    }
    for _ in 0..rng.random_range(0..n) {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            pairs.insert((u.min(v), u.max(v)));
        }
    }
    let edges: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .map(|(u, v)| (u, v, rng.random_range(0.2..3.0)))
        .collect();
    WeightedGraph::new(n, edges).expect("random graph is valid")
}

/// Random port set with 1..=max_k ports over `n` nodes.
pub fn random_ports(rng: &mut ChaCha8Rng, n: usize, max_k: usize) -> PortSet {
    let k = rng.random_range(1..=max_k);
    let mut ports = Vec::with_capacity(k);
    for _ in 0..k {
        loop {
            let i = rng.random_range(0..n);
            let o = rng.random_range(0..n);
            if i != o {
                ports.push((i, o));
                break;
            }
        }
    }
    PortSet::new(n, ports).expect("random ports are valid")
}

/// Random node pair (i, j), i != j.
pub fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    loop {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            return (i, j);
        }
    }
}

/// The four-cycle allocation problem with ports (0,3) and (0,1): the
/// canonical optimization fixture with known optimum gamma = 5/c.
pub fn diamond_problem(budget: f64) -> AllocationProblem {
    AllocationProblem::new(
        4,
        [(0, 1), (0, 2), (1, 3), (2, 3)],
        PortSet::new(4, [(0, 3), (0, 1)]).unwrap(),
        budget,
    )
    .unwrap()
}

/// The diamond fixture realized at its optimal weights (0.6, 0, 0.4, 0).
pub fn diamond_optimal_graph() -> (WeightedGraph, PortSet) {
    let g = WeightedGraph::new(4, [(0, 1, 0.6), (0, 2, 0.0), (1, 3, 0.4), (2, 3, 0.0)])
        .unwrap();
    let p = PortSet::new(4, [(0, 3), (0, 1)]).unwrap();
    (g, p)
}

/// Disturbance used with the diamond fixture: [1,0] on [0,1), [1,1] on
/// [1,2), zero afterwards. Exact L2 norm sqrt(3).
pub fn two_pulse_signal() -> PiecewiseConstantSignal {
    PiecewiseConstantSignal::new(
        vec![1.0, 2.0],
        vec![vec![1.0, 0.0], vec![1.0, 1.0]],
        vec![0.0, 0.0],
    )
    .unwrap()
}

/// Smallest eigenvalue of `m` restricted to the complement of the all-ones
/// direction, computed by shifting the all-ones mode far into the positive
/// spectrum. Exact for matrices that annihilate the all-ones vector.
pub fn lambda_min_deflated(m: &SymMatrix) -> f64 {
    let n = m.dim();
    let shift = 1.0 + n as f64 * m.as_matrix().amax();
    let mut shifted = m.as_matrix().clone();
    for i in 0..n {
        for j in 0..n {
            shifted[(i, j)] += shift / n as f64;
        }
    }
    SymMatrix::from_matrix(shifted)
        .expect("shifted matrix stays symmetric")
        .spectrum()
        .lambda_min()
}

/// Exact state at time `t` for the network driven by a piecewise-constant
/// signal, via the spectral matrix exponential on each constant segment.
/// Independent of the RK4 integration path.
pub fn exact_state(
    graph: &WeightedGraph,
    ports: &PortSet,
    signal: &PiecewiseConstantSignal,
    x0: &[f64],
    t: f64,
) -> DVector<f64> {
    let eig = graph.laplacian().spectrum();
    let v = eig.vectors().clone();
    let lambdas = eig.eigenvalues().to_vec();
    let e = ports.matrix();

    let mut x = DVector::from_column_slice(x0);
    let mut start = 0.0;
    let mut boundaries: Vec<f64> = signal
        .breakpoints
        .iter()
        .copied()
        .filter(|&b| b < t)
        .collect();
    boundaries.push(t);
    for end in boundaries {
        let h = end - start;
        let d = DVector::from_column_slice(signal.value_at(start));
        x = propagate_segment(&v, &lambdas, &e, &x, &d, h);
        start = end;
    }
    x
}

fn propagate_segment(
    v: &DMatrix<f64>,
    lambdas: &[f64],
    e: &DMatrix<f64>,
    x: &DVector<f64>,
    d: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    // x(h) = V exp(-Lambda h) V^T x + V Phi(h) V^T E d,
    // Phi(h) = diag((1 - exp(-lambda h)) / lambda), = h for lambda ~ 0.
    let xt = v.transpose() * x;
    let ft = v.transpose() * (e * d);
    let n = lambdas.len();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let lambda = lambdas[i];
        let decay = (-lambda * h).exp();
        let phi = if lambda.abs() < 1e-14 {
            h
        } else {
            -(-lambda * h).exp_m1() / lambda
        };
        out[i] = decay * xt[i] + phi * ft[i];
    }
    v * out
}
