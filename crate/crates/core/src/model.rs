//! Spin Hamiltonians `H_Φ + λ H_Ψ` on a multihypergraph, their normalization
//! checks, and the weak-interaction admissibility test.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::hypergraph::Multihypergraph;

pub type CMatrix = DMatrix<Complex64>;

/// Tolerance for the Hermiticity and operator-norm constraints.
pub const VALIDATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("local dimension must be at least 2, got {0}")]
    LocalDim(usize),
    #[error("on-site operator list has {got} entries for {expected} vertices")]
    OnSiteCount { expected: usize, got: usize },
    #[error("interaction list has {got} entries for {expected} edges")]
    InteractionCount { expected: usize, got: usize },
    #[error("{what} must be {expected}x{expected}, got {rows}x{cols}")]
    Shape {
        what: String,
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error(
        "weak-interaction threshold needs max degree >= 2 and rank >= 2 (got {max_degree}, {rank})"
    )]
    ThresholdDomain { max_degree: usize, rank: usize },
}

/// A quantum spin system: one `d×d` on-site operator per vertex and one
/// `d^|e| × d^|e|` interaction per edge, tensor factors in the edge's stored
/// vertex order.
#[derive(Debug, Clone)]
pub struct SpinModel {
    graph: Multihypergraph,
    local_dim: usize,
    on_site: Vec<CMatrix>,
    interactions: Vec<CMatrix>,
}

impl SpinModel {
    /// Checks dimensions only; the norm conventions are reported by
    /// [`validate_model`].
    pub fn new(
        graph: Multihypergraph,
        local_dim: usize,
        on_site: Vec<CMatrix>,
        interactions: Vec<CMatrix>,
    ) -> Result<Self, ModelError> {
        if local_dim < 2 {
            return Err(ModelError::LocalDim(local_dim));
        }
        if on_site.len() != graph.n_vertices() {
            return Err(ModelError::OnSiteCount {
                expected: graph.n_vertices(),
                got: on_site.len(),
            });
        }
        if interactions.len() != graph.n_edges() {
            return Err(ModelError::InteractionCount {
                expected: graph.n_edges(),
                got: interactions.len(),
            });
        }
        for (v, m) in on_site.iter().enumerate() {
            check_shape(m, local_dim, || format!("on-site operator of vertex {v}"))?;
        }
        for (edge, m) in graph.edges().iter().zip(&interactions) {
            let dim = local_dim.pow(edge.vertices.len() as u32);
            check_shape(m, dim, || format!("interaction of edge `{}`", edge.id))?;
        }
        Ok(Self {
            graph,
            local_dim,
            on_site,
            interactions,
        })
    }

    /// Same on-site operator everywhere and the same interaction on every
    /// edge (all edges must then share one cardinality).
    pub fn uniform(
        graph: Multihypergraph,
        local_dim: usize,
        on_site: &CMatrix,
        interaction: &CMatrix,
    ) -> Result<Self, ModelError> {
        let on = vec![on_site.clone(); graph.n_vertices()];
        let int = vec![interaction.clone(); graph.n_edges()];
        Self::new(graph, local_dim, on, int)
    }

    pub fn graph(&self) -> &Multihypergraph {
        &self.graph
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn on_site(&self, vertex: usize) -> &CMatrix {
        &self.on_site[vertex]
    }

    pub fn interaction(&self, edge: usize) -> &CMatrix {
        &self.interactions[edge]
    }

    /// Dimension of the full Hilbert space, `None` on overflow.
    pub fn hilbert_dim(&self) -> Option<usize> {
        self.local_dim.checked_pow(self.graph.n_vertices() as u32)
    }

    pub fn with_on_site(mut self, vertex: usize, op: CMatrix) -> Result<Self, ModelError> {
        check_shape(&op, self.local_dim, || {
            format!("on-site operator of vertex {vertex}")
        })?;
        self.on_site[vertex] = op;
        Ok(self)
    }
}

fn check_shape(
    m: &CMatrix,
    expected: usize,
    what: impl FnOnce() -> String,
) -> Result<(), ModelError> {
    if m.nrows() != expected || m.ncols() != expected {
        return Err(ModelError::Shape {
            what: what(),
            expected,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Inverse temperature, coupling, target accuracy and sampler seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub beta: f64,
    pub lambda: Complex64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Params {
    pub fn new(beta: f64, lambda: Complex64, epsilon: f64) -> Result<Self, ModelError> {
        let p = Self {
            beta,
            lambda,
            epsilon,
            seed: 0,
        };
        p.check()?;
        Ok(p)
    }

    pub fn real(beta: f64, lambda: f64, epsilon: f64) -> Result<Self, ModelError> {
        Self::new(beta, Complex64::new(lambda, 0.0), epsilon)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_lambda(mut self, lambda: Complex64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(ModelError::Params(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(ModelError::Params(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.lambda.re.is_finite() && self.lambda.im.is_finite()) {
            return Err(ModelError::Params("lambda must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Vertex(usize),
    Edge(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotHermitian { site: Site, deviation: f64 },
    NormTooLarge { site: Site, norm: f64 },
    NonFinite { site: Site },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let site = |s: &Site| match s {
            Site::Vertex(v) => format!("on-site operator of vertex {v}"),
            Site::Edge(e) => format!("interaction of edge #{e}"),
        };
        match self {
            Violation::NotHermitian { site: s, deviation } => {
                write!(
                    f,
                    "{} is not Hermitian (max deviation {deviation:e})",
                    site(s)
                )
            }
            Violation::NormTooLarge { site: s, norm } => {
                write!(f, "{} has operator norm {norm} > 1", site(s))
            }
            Violation::NonFinite { site: s } => write!(f, "{} has non-finite entries", site(s)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Maximum entrywise deviation `max |m - m†|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Reports every operator that is not Hermitian or has norm above one.
pub fn validate_model(model: &SpinModel) -> ValidationReport {
    let mut violations = Vec::new();
    let sites = (0..model.graph.n_vertices())
        .map(|v| (Site::Vertex(v), &model.on_site[v]))
        .chain((0..model.graph.n_edges()).map(|e| (Site::Edge(e), &model.interactions[e])));
    for (site, m) in sites {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            violations.push(Violation::NonFinite { site });
            continue;
        }
        let deviation = hermitian_deviation(m);
        if deviation > VALIDATION_TOL {
            violations.push(Violation::NotHermitian { site, deviation });
        }
        let norm = operator_norm(m);
        if norm > 1.0 + VALIDATION_TOL {
            violations.push(Violation::NormTooLarge { site, norm });
        }
    }
    ValidationReport { violations }
}

fn binom2(r: usize) -> f64 {
    (r * (r - 1) / 2) as f64
}

/// `λ* = e^{-2rβ} / (e⁴ β Δ C(r,2))`.
pub fn weak_interaction_threshold(
    beta: f64,
    max_degree: usize,
    rank: usize,
) -> Result<f64, ModelError> {
    if max_degree < 2 || rank < 2 {
        return Err(ModelError::ThresholdDomain { max_degree, rank });
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(ModelError::Params(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let r = rank as f64;
    // log form keeps the exponent exact for large r·β
    let log = -2.0 * r * beta - 4.0 - (beta * max_degree as f64 * binom2(rank)).ln();
    Ok(log.exp())
}

/// Threshold for a concrete model, with degree and rank clamped up to 2.
pub fn model_threshold(beta: f64, model: &SpinModel) -> Result<f64, ModelError> {
    let (delta, rank) = model.graph.degree_and_rank();
    weak_interaction_threshold(beta, delta.max(2), rank.max(2))
}

/// `|λ| ≤ λ*` (non-strict).
pub fn check_admissible(params: &Params, model: &SpinModel) -> bool {
    match model_threshold(params.beta, model) {
        Ok(threshold) => params.lambda.norm() <= threshold,
        Err(_) => false,
    }
}

/// Standard single-qubit operators, handy for tests and examples.
pub mod pauli {
    use super::CMatrix;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn identity(d: usize) -> CMatrix {
        CMatrix::identity(d, d)
    }

    pub fn x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a.kronecker(b)
    }
}
