//! Instance factories: the chain-vector random generative model (uniform
//! edge weights, noise covariance built as a Gram matrix of unit vectors
//! with a sliding orthogonality window) and the hand-built four-node
//! instance whose recovery problem can be made arbitrarily ill-conditioned.

use crate::graph::{GraphError, MixedGraph};
use crate::linalg::Matrix;
use crate::scm::{forward_covariance, Parameters, ScmError};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Residual norm below which a projected draw is considered degenerate and
/// redrawn.
const DEGENERATE_NORM: f64 = 1e-12;
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("degenerate draw: projection residual stayed below {DEGENERATE_NORM:.0e} after {MAX_REDRAWS} redraws")]
    DegenerateDraw,
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Scm(#[from] ScmError),
}

/// Knobs of the generative model: `h` is the half-width of the uniform edge
/// weights, `d` the ambient dimension of the Gram vectors, `ortho_depth` how
/// many preceding vectors each new vector is orthogonalized against (1 for
/// paths, the layer width for the layered families).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    h: f64,
    d: usize,
    ortho_depth: usize,
}

impl GeneratorConfig {
    pub fn new(h: f64, d: usize) -> Result<Self, InstanceError> {
        Self::with_depth(h, d, 1)
    }

    pub fn with_depth(h: f64, d: usize, ortho_depth: usize) -> Result<Self, InstanceError> {
        if !h.is_finite() || h < 0.0 {
            return Err(InstanceError::InvalidConfig(format!(
                "uniform half-width must be finite and nonnegative, got {h}"
            )));
        }
        if d < 2 {
            return Err(InstanceError::InvalidConfig(format!(
                "ambient dimension must be at least 2, got {d}"
            )));
        }
        if ortho_depth == 0 {
            return Err(InstanceError::InvalidConfig(
                "orthogonality depth must be positive".into(),
            ));
        }
        // Depth-k orthogonalization degenerates as k approaches d.
        if ortho_depth >= 2 && d < 4 * ortho_depth {
            return Err(InstanceError::InvalidConfig(format!(
                "ambient dimension {d} too small for orthogonality depth {ortho_depth} (need d >= {})",
                4 * ortho_depth
            )));
        }
        Ok(GeneratorConfig { h, d, ortho_depth })
    }

    /// Ambient dimension used when the caller does not pick one: large
    /// enough that Gram cross terms are small, and scaling with the graph.
    pub fn default_dimension(n: usize) -> usize {
        1000.max(4 * n)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ortho_depth(&self) -> usize {
        self.ortho_depth
    }
}

/// Draws `n` unit vectors in dimension `d`, each orthogonalized against the
/// previous `depth` vectors (draw uniformly on the sphere, project the
/// preceding vectors out, renormalize; redraw if the residual vanishes).
///
/// Returns them as the rows of an `n x d` matrix.
pub fn orthogonal_chain_vectors<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    depth: usize,
    rng: &mut R,
) -> Result<Matrix, InstanceError> {
    assert!(n > 0, "need at least one vector");
    assert!(d >= 2, "ambient dimension must be at least 2");
    assert!(depth >= 1, "depth must be positive");
    let mut vectors = Matrix::zeros(n, d);
    let mut candidate = vec![0.0f64; d];
    for i in 0..n {
        let mut attempts = 0;
        loop {
            for x in candidate.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            normalize(&mut candidate);
            // Sequentially project out the window of previous vectors.
            let lo = i.saturating_sub(depth);
            for prev in lo..i {
                let dot: f64 = (0..d).map(|t| candidate[t] * vectors[(prev, t)]).sum();
                for t in 0..d {
                    candidate[t] -= dot * vectors[(prev, t)];
                }
            }
            let norm = candidate.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm >= DEGENERATE_NORM {
                for x in candidate.iter_mut() {
                    *x /= norm;
                }
                break;
            }
            attempts += 1;
            if attempts >= MAX_REDRAWS {
                return Err(InstanceError::DegenerateDraw);
            }
        }
        for t in 0..d {
            vectors[(i, t)] = candidate[t];
        }
    }
    Ok(vectors)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Samples a parameter pair on a bow-free graph: edge weights i.i.d. uniform
/// on `[-h, h]` over the directed pattern, noise covariance the Gram matrix
/// of chain vectors with unit diagonal. Entries the construction forces to
/// vanish — anything off the bidirected pattern, plus pairs inside the
/// orthogonality window — are stored as exact zeros rather than roundoff
/// dust. On directed pairs wider than the window the zero is a genuine
/// projection of the Gram matrix, so the Gram factor is retained for exact
/// noise sampling only when it still factors the stored covariance.
pub fn random_parameters<R: Rng + ?Sized>(
    g: &MixedGraph,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<Parameters, InstanceError> {
    if !g.is_bow_free() {
        return Err(InstanceError::InvalidConfig(
            "generator requires a bow-free graph".into(),
        ));
    }
    let n = g.n();
    let mut lambda = Matrix::zeros(n, n);
    for &(i, j) in g.directed() {
        let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
        lambda[(i, j)] = u * cfg.h;
    }
    let vectors = orthogonal_chain_vectors(n, cfg.d, cfg.ortho_depth, rng)?;
    let d = cfg.d;
    let dot = |a: usize, b: usize| -> f64 { (0..d).map(|t| vectors[(a, t)] * vectors[(b, t)]).sum() };
    let mut omega = Matrix::identity(n);
    let mut gram_is_exact = true;
    for i in 0..n {
        for j in i + 1..n {
            let gram = dot(i, j);
            let in_window = j - i <= cfg.ortho_depth;
            let value = if g.has_bidirected(i, j) && !in_window {
                gram
            } else {
                0.0
            };
            if (value - gram).abs() > 1e-12 {
                gram_is_exact = false;
            }
            omega[(i, j)] = value;
            omega[(j, i)] = value;
        }
    }
    let gram_vectors = gram_is_exact.then_some(vectors);
    Ok(Parameters::new(g.clone(), lambda, omega, gram_vectors)?)
}

/// The four-node path instance built on top of a degenerate point of the
/// recovery map: edge weights `(sqrt2, -sqrt2, 1/2)` and a noise covariance
/// whose third diagonal entry is `1 + eps`. At `eps = 0` the recovery
/// denominator at the last node vanishes exactly; for small positive `eps`
/// the instance is identifiable but arbitrarily ill-conditioned.
pub fn instability_instance(eps: f64) -> Parameters {
    assert!(eps >= 0.0 && eps.is_finite(), "eps must be nonnegative");
    let s = std::f64::consts::SQRT_2;
    let g = MixedGraph::path_graph(4).expect("n = 4 is valid");
    let mut lambda = Matrix::zeros(4, 4);
    lambda[(0, 1)] = s;
    lambda[(1, 2)] = -s;
    lambda[(2, 3)] = 0.5;
    let omega = Matrix::from_rows(vec![
        vec![1.0, 0.0, 0.5, 0.5],
        vec![0.0, 1.0, 0.0, 0.5],
        vec![0.5, 0.0, 1.0 + eps, 0.0],
        vec![0.5, 0.5, 0.0, 1.0],
    ])
    .expect("rectangular");
    Parameters::new(g, lambda, omega, None).expect("instance satisfies the invariants")
}

/// Estimates, over random two-node prefixes of path instances, how often the
/// off-diagonal covariance entry dominates the leading diagonal one. For
/// `h > 1` the closed-form target is `(h - 1) / h`; for `h < 1` the event
/// has probability zero.
pub fn divergence_probe<R: Rng + ?Sized>(
    h: f64,
    trials: usize,
    d: usize,
    rng: &mut R,
) -> Result<f64, InstanceError> {
    assert!(trials > 0, "need at least one trial");
    let cfg = GeneratorConfig::new(h, d)?;
    let g = MixedGraph::path_graph(2)?;
    let mut hits = 0usize;
    for _ in 0..trials {
        let p = random_parameters(&g, &cfg, rng)?;
        let sigma = forward_covariance(&p)?.matrix;
        if sigma[(0, 1)].abs() >= sigma[(0, 0)] {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// `P_i = sum_{k <= i} (cumulative weight k -> i)^2` for a path instance;
/// bounded by `1 / (1 - h^2)` whenever every edge weight is at most `h < 1`
/// in magnitude.
pub fn path_prefix_power(p: &Parameters, i: usize) -> Result<f64, ScmError> {
    let mut acc = 0.0;
    for k in 0..=i {
        let w = crate::scm::cumulative_path_weight(p, k, i)?;
        acc += w * w;
    }
    Ok(acc)
}
