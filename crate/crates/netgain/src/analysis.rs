//! Exact induced-L2-gain computation and the certificates that bound it.
//!
//! For the diffusion network `dx/dt = -L_w x + E d`, `y = E^T x`, the gain
//! from `d` to `y` is attained at zero frequency, so
//!
//! ```text
//! gamma = lambda_max(E^T L_w^+ E)
//! ```
//!
//! whenever every port connects nodes of the same positive-support
//! component; otherwise the gain is infinite (an integrator mode is
//! reachable from the disturbance). No frequency sweep is ever performed.
//!
//! Four equivalent feasibility tests certify `gamma <= g` for a candidate
//! level `g`:
//!
//! 1. the block matrix `[[L_w, E], [E^T, g I]]` is PSD ([`lmi_feasible`]);
//! 2. its Schur complement `L_w - E E^T / g` is PSD ([`schur_feasible`]);
//! 3. the Riccati residual `-P L_w - L_w P + E E^T + P E E^T P / g^2` at
//!    `P = g I` is NSD ([`riccati_residual`]);
//! 4. for a single port, `g >= R_ij`, the effective resistance between the
//!    port nodes ([`siso_gain_via_resistance`]).
//!
//! The Schur form reads as a signed Laplacian: `L_w` plus edges of weight
//! `-1/g` across each port. [`signed_psd_check`] exposes the underlying
//! one-negative-edge criterion (`|w| <= 1/R_uv`) directly, and
//! [`connectivity_bound`] gives the port-independent upper bound
//! `lambda_max(E E^T) / lambda_2`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, PortSet, SignedGraph, WeightedGraph};
use crate::spectral::SymMatrix;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("graph has {graph} nodes but port set is defined on {ports}")]
    NodeCountMismatch { graph: usize, ports: usize },
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("P matrix must be {expected}x{expected}, got {got}x{got}")]
    PMatrixDimension { expected: usize, got: usize },
    #[error("P matrix is not positive definite (lambda_min = {lambda_min:.3e})")]
    PMatrixNotPositiveDefinite { lambda_min: f64 },
    #[error("positive part of the signed graph is not connected")]
    PositivePartDisconnected,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Certified finite gain with the data that witnesses it.
#[derive(Debug, Clone)]
pub struct HinfCertificate {
    /// Induced L2 gain, `lambda_max` of [`Self::gain_matrix`].
    pub gamma: f64,
    /// The `k x k` zero-frequency gain matrix `E^T L_w^+ E`.
    pub gain_matrix: SymMatrix,
    /// Unit top eigenvector of the gain matrix: the disturbance direction
    /// that attains the gain in steady state.
    pub achieving_direction: DVector<f64>,
    /// `lambda_min` of the block matrix `[[L_w, E], [E^T, gamma I]]`;
    /// nonnegative up to the PSD tolerance when the certificate is valid.
    pub lmi_margin: f64,
    /// `lambda_max` of the Riccati residual at `P = gamma I`; nonpositive
    /// up to the PSD tolerance when the certificate is valid.
    pub riccati_margin: f64,
}

/// Gain of a network: finite with a certificate, or infinite because some
/// port spans two components. Infinite gain is a legitimate result (the
/// allocator probes such boundary points), never an error or a huge float.
#[derive(Debug, Clone)]
pub enum Gain {
    Finite(HinfCertificate),
    Infinite {
        /// Index of the first offending port and its node pair.
        port: usize,
        inflow: usize,
        outflow: usize,
    },
}

impl Gain {
    pub fn is_finite(&self) -> bool {
        matches!(self, Gain::Finite(_))
    }

    pub fn certificate(&self) -> Option<&HinfCertificate> {
        match self {
            Gain::Finite(c) => Some(c),
            Gain::Infinite { .. } => None,
        }
    }

    /// Gamma as a float, `f64::INFINITY` for the disconnected case.
    pub fn gamma(&self) -> f64 {
        match self {
            Gain::Finite(c) => c.gamma,
            Gain::Infinite { .. } => f64::INFINITY,
        }
    }

    pub fn expect_finite(self, context: &str) -> HinfCertificate {
        match self {
            Gain::Finite(c) => c,
            Gain::Infinite {
                port,
                inflow,
                outflow,
            } => panic!("{context}: port {port} ({inflow}, {outflow}) is disconnected"),
        }
    }
}

/// Feasibility verdict of one certificate at one gamma.
#[derive(Debug, Clone, Copy)]
pub struct Feasibility {
    pub feasible: bool,
    /// The eigenvalue whose sign decides feasibility (`lambda_min` for PSD
    /// forms), before tolerance.
    pub margin: f64,
}

fn check_dims(g: &WeightedGraph, p: &PortSet) -> Result<(), AnalysisError> {
    if g.n_nodes() != p.n_nodes() {
        return Err(AnalysisError::NodeCountMismatch {
            graph: g.n_nodes(),
            ports: p.n_nodes(),
        });
    }
    Ok(())
}

/// Shared core of the gain computation: either the gain matrix together
/// with the Laplacian pseudo-inverse, or the first disconnected port.
pub(crate) enum GainCore {
    Connected {
        gain_matrix: SymMatrix,
        lap_pinv: SymMatrix,
    },
    Disconnected {
        port: usize,
        inflow: usize,
        outflow: usize,
    },
}

pub(crate) fn gain_core(g: &WeightedGraph, p: &PortSet) -> Result<GainCore, AnalysisError> {
    check_dims(g, p)?;
    let mut sets = g.support_components();
    for (j, &(inflow, outflow)) in p.ports().iter().enumerate() {
        if !sets.same_set(inflow, outflow) {
            return Ok(GainCore::Disconnected {
                port: j,
                inflow,
                outflow,
            });
        }
    }
    let lap_pinv = g.laplacian().pseudo_inverse();
    let e = p.matrix();
    let m = e.transpose() * lap_pinv.as_matrix() * &e;
    let gain_matrix =
        SymMatrix::from_matrix(m).expect("gain matrix is symmetric up to roundoff");
    Ok(GainCore::Connected {
        gain_matrix,
        lap_pinv,
    })
}

/// Top eigenpair of a gain matrix, with the eigenvector's sign fixed so the
/// largest-magnitude entry is positive (deterministic output).
pub(crate) fn top_eigenpair(gain_matrix: &SymMatrix) -> (f64, DVector<f64>) {
    let eig = gain_matrix.spectrum();
    let k = gain_matrix.dim();
    let gamma = eig.lambda_max();
    let mut v = eig.eigenvector(k - 1);
    let lead = (0..k)
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .expect("non-empty eigenvector");
    if v[lead] < 0.0 {
        v.neg_mut();
    }
    (gamma, v)
}

/// Induced L2 gain of the network with a full certificate.
pub fn hinf_norm(g: &WeightedGraph, p: &PortSet) -> Result<Gain, AnalysisError> {
    match gain_core(g, p)? {
        GainCore::Disconnected {
            port,
            inflow,
            outflow,
        } => Ok(Gain::Infinite {
            port,
            inflow,
            outflow,
        }),
        GainCore::Connected { gain_matrix, .. } => {
            let (gamma, achieving_direction) = top_eigenpair(&gain_matrix);
            let lmi_margin = lmi_block(g, p, gamma).spectrum().lambda_min();
            let riccati_margin = riccati_residual_at_identity_scaled(g, p, gamma)
                .spectrum()
                .lambda_max();
            Ok(Gain::Finite(HinfCertificate {
                gamma,
                gain_matrix,
                achieving_direction,
                lmi_margin,
                riccati_margin,
            }))
        }
    }
}

/// Assembles the `(n+k) x (n+k)` block matrix `[[L_w, E], [E^T, gamma I]]`.
fn lmi_block(g: &WeightedGraph, p: &PortSet, gamma: f64) -> SymMatrix {
    let n = g.n_nodes();
    let k = p.len();
    let l = g.laplacian();
    let e = p.matrix();
    let mut block = nalgebra::DMatrix::zeros(n + k, n + k);
    block.view_mut((0, 0), (n, n)).copy_from(l.as_matrix());
    block.view_mut((0, n), (n, k)).copy_from(&e);
    block.view_mut((n, 0), (k, n)).copy_from(&e.transpose());
    for j in 0..k {
        block[(n + j, n + j)] = gamma;
    }
    SymMatrix::from_matrix(block).expect("block matrix is symmetric by construction")
}

/// Tests the block LMI `[[L_w, E], [E^T, gamma I]] >= 0`.
pub fn lmi_feasible(
    g: &WeightedGraph,
    p: &PortSet,
    gamma: f64,
) -> Result<Feasibility, AnalysisError> {
    check_dims(g, p)?;
    if gamma <= 0.0 {
        return Err(AnalysisError::NonPositiveGamma(gamma));
    }
    let verdict = lmi_block(g, p, gamma).psd();
    Ok(Feasibility {
        feasible: verdict.psd,
        margin: verdict.lambda_min,
    })
}

/// Tests the Schur form `L_w - E E^T / gamma >= 0`, a signed Laplacian with
/// weight `-1/gamma` across each port.
pub fn schur_feasible(
    g: &WeightedGraph,
    p: &PortSet,
    gamma: f64,
) -> Result<Feasibility, AnalysisError> {
    check_dims(g, p)?;
    if gamma <= 0.0 {
        return Err(AnalysisError::NonPositiveGamma(gamma));
    }
    let shifted = g.laplacian().scaled_add(&p.gram(), -1.0 / gamma);
    let verdict = shifted.psd();
    Ok(Feasibility {
        feasible: verdict.psd,
        margin: verdict.lambda_min,
    })
}

fn riccati_residual_at_identity_scaled(g: &WeightedGraph, p: &PortSet, gamma: f64) -> SymMatrix {
    // With P = gamma I the residual collapses to -2 gamma L_w + 2 E E^T.
    g.laplacian()
        .scale(-2.0 * gamma)
        .scaled_add(&p.gram(), 2.0)
}

/// Riccati residual `-P L_w - L_w P + E E^T + (1/gamma^2) P E E^T P`.
///
/// With the default `P = gamma I` this is `2 gamma (E E^T / gamma - L_w)`,
/// so its NSD verdict coincides with [`schur_feasible`]. The residual is
/// returned as a matrix so callers can inspect `lambda_max` and structure.
pub fn riccati_residual(
    g: &WeightedGraph,
    p: &PortSet,
    gamma: f64,
    p_matrix: Option<&SymMatrix>,
) -> Result<SymMatrix, AnalysisError> {
    check_dims(g, p)?;
    if gamma <= 0.0 {
        return Err(AnalysisError::NonPositiveGamma(gamma));
    }
    let n = g.n_nodes();
    match p_matrix {
        None => Ok(riccati_residual_at_identity_scaled(g, p, gamma)),
        Some(pm) => {
            if pm.dim() != n {
                return Err(AnalysisError::PMatrixDimension {
                    expected: n,
                    got: pm.dim(),
                });
            }
            let lambda_min = pm.spectrum().lambda_min();
            if lambda_min <= 0.0 {
                return Err(AnalysisError::PMatrixNotPositiveDefinite { lambda_min });
            }
            let l = g.laplacian();
            let ee_t = p.gram();
            let pl = pm.as_matrix() * l.as_matrix();
            let pep = pm.as_matrix() * ee_t.as_matrix() * pm.as_matrix();
            let residual =
                -&pl - pl.transpose() + ee_t.as_matrix() + pep / (gamma * gamma);
            Ok(SymMatrix::from_matrix(residual)
                .expect("riccati residual is symmetric up to roundoff"))
        }
    }
}

/// Outcome of the one-negative-edge semidefiniteness test.
#[derive(Debug, Clone, Copy)]
pub struct SignedPsdReport {
    /// Analytic verdict: `|w| <= 1/R_uv` on the positive part.
    pub psd: bool,
    /// Numeric verdict from the eigenvalues of the assembled signed Laplacian.
    pub numeric_psd: bool,
    /// `lambda_min` of the signed Laplacian.
    pub lambda_min: f64,
    /// Largest negative-weight magnitude that keeps the Laplacian PSD:
    /// the inverse effective resistance `1/R_uv` of the positive part.
    pub threshold: f64,
}

/// Checks whether a connected nonnegative graph plus one negative edge
/// `(u, v)` of weight `neg_weight < 0` still has a PSD Laplacian, both
/// numerically and through the analytic threshold `1/R_uv`.
///
/// The two verdicts are asserted to agree whenever `|neg_weight|` sits
/// outside a `1e-8` relative band around the threshold; inside the band the
/// analytic verdict wins.
pub fn signed_psd_check(
    positive: &WeightedGraph,
    neg_edge: (usize, usize),
    neg_weight: f64,
) -> Result<SignedPsdReport, AnalysisError> {
    if !positive.is_support_connected() {
        return Err(AnalysisError::PositivePartDisconnected);
    }
    let (u, v) = neg_edge;
    let signed = SignedGraph::new(positive.clone(), [(u, v, neg_weight)])?;
    let lambda_min = signed.laplacian().spectrum().lambda_min();
    let numeric_psd = signed.laplacian().psd().psd;
    let threshold = 1.0 / positive.effective_resistance(u, v)?;
    let psd = neg_weight.abs() <= threshold;
    let boundary_band = 1e-8 * threshold;
    if (neg_weight.abs() - threshold).abs() > boundary_band {
        assert_eq!(
            psd, numeric_psd,
            "analytic and numeric PSD verdicts disagree away from the boundary: \
             |w| = {}, threshold = {}, lambda_min = {}",
            neg_weight.abs(),
            threshold,
            lambda_min
        );
    }
    Ok(SignedPsdReport {
        psd,
        numeric_psd,
        lambda_min,
        threshold,
    })
}

/// Single-port gain as an effective resistance: for `E = e_i - e_j` the
/// induced L2 gain equals `R_ij`.
pub fn siso_gain_via_resistance(
    g: &WeightedGraph,
    port: (usize, usize),
) -> Result<f64, GraphError> {
    g.effective_resistance(port.0, port.1)
}

/// Port-independent upper bound on the gain.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    /// `lambda_max(E E^T) / lambda_2(L_w)`.
    pub bound: f64,
    pub lambda2: f64,
    pub port_gram_lambda_max: f64,
}

/// Bound outcome: finite for connected graphs, infinite otherwise
/// (`lambda_2 = 0` certifies nothing).
#[derive(Debug, Clone, Copy)]
pub enum ConnectivityBound {
    Finite(BoundReport),
    Infinite { port_gram_lambda_max: f64 },
}

impl ConnectivityBound {
    pub fn bound(&self) -> f64 {
        match self {
            ConnectivityBound::Finite(r) => r.bound,
            ConnectivityBound::Infinite { .. } => f64::INFINITY,
        }
    }

    pub fn report(&self) -> Option<&BoundReport> {
        match self {
            ConnectivityBound::Finite(r) => Some(r),
            ConnectivityBound::Infinite { .. } => None,
        }
    }
}

/// Upper bound `lambda_max(E E^T) / lambda_2(L_w)` on the gain. Useful when
/// the port locations are unknown: it depends on `E` only through the
/// largest eigenvalue of `E E^T`.
pub fn connectivity_bound(
    g: &WeightedGraph,
    p: &PortSet,
) -> Result<ConnectivityBound, AnalysisError> {
    check_dims(g, p)?;
    let port_gram_lambda_max = p.gram().spectrum().lambda_max();
    if !g.is_support_connected() {
        return Ok(ConnectivityBound::Infinite {
            port_gram_lambda_max,
        });
    }
    let lambda2 = g.algebraic_connectivity();
    Ok(ConnectivityBound::Finite(BoundReport {
        bound: port_gram_lambda_max / lambda2,
        lambda2,
        port_gram_lambda_max,
    }))
}

// ---------------------------------------------------------------------------
// Certificate JSON
// ---------------------------------------------------------------------------

/// A float that serializes infinity as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaybeInf(pub f64);

impl Serialize for MaybeInf {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for MaybeInf {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(x) => Ok(MaybeInf(x)),
            Raw::Text(s) if s == "inf" => Ok(MaybeInf(f64::INFINITY)),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// Serializable certificate: gain, gain matrix, certificate margins, and
/// the connectivity bound.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateJson {
    pub gamma: MaybeInf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achieving_direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lmi_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub riccati_lambda_max: Option<f64>,
    pub bound: MaybeInf,
}

impl CertificateJson {
    pub fn new(gain: &Gain, bound: &ConnectivityBound) -> Self {
        match gain {
            Gain::Finite(c) => CertificateJson {
                gamma: MaybeInf(c.gamma),
                gain_matrix: Some(c.gain_matrix.to_rows()),
                achieving_direction: Some(c.achieving_direction.iter().copied().collect()),
                lmi_margin: Some(c.lmi_margin),
                riccati_lambda_max: Some(c.riccati_margin),
                bound: MaybeInf(bound.bound()),
            },
            Gain::Infinite { .. } => CertificateJson {
                gamma: MaybeInf(f64::INFINITY),
                gain_matrix: None,
                achieving_direction: None,
                lmi_margin: None,
                riccati_lambda_max: None,
                bound: MaybeInf(bound.bound()),
            },
        }
    }
}
