//! Dense complex kernels: normalized traces of matrix exponentials, tensor
//! embedding of local operators onto a polymer's support, and traces
//! restricted to the subspace selected by a partial classical assignment.
//!
//! Traces are normalized throughout so that `Tr(𝕀) = 1`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::hypergraph::Polymer;
use crate::model::{hermitian_deviation, CMatrix, Params, SpinModel};

/// Largest matrix dimension any kernel will build.
pub const MAX_DIM: usize = 1 << 20;

/// Inputs closer than this to Hermitian take the eigendecomposition route.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Cap on the (bound of the) largest real part of the exponent's spectrum.
pub const EXPONENT_CAP: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("exponent spectrum reaches {0:.3}, above the overflow cap {EXPONENT_CAP}")]
    Overflow(f64),
    #[error("matrix dimension {0} exceeds the cap {MAX_DIM}")]
    TooLarge(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("vertex {vertex} assigned value {value} but local dimension is {d}")]
    AssignmentValue {
        vertex: usize,
        value: usize,
        d: usize,
    },
}

/// A dense square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix(CMatrix);

impl SquareMatrix {
    pub fn new(m: CMatrix) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(LinalgError::Dimension(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    fn check_finite(&self) -> Result<(), LinalgError> {
        if self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(LinalgError::NonFinite)
        }
    }

    fn is_hermitian(&self) -> bool {
        hermitian_deviation(&self.0) <= HERMITIAN_TOL
    }
}

/// Spin values for a subset of vertices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartialAssignment(BTreeMap<usize, usize>);

impl PartialAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self(pairs.into_iter().collect())
    }

    /// Assigns `values[i]` to vertex `i`.
    pub fn from_prefix(values: &[usize]) -> Self {
        Self(values.iter().copied().enumerate().collect())
    }

    pub fn with(mut self, vertex: usize, value: usize) -> Self {
        self.0.insert(vertex, value);
        self
    }

    pub fn get(&self, vertex: usize) -> Option<usize> {
        self.0.get(&vertex).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().map(|(&v, &s)| (v, s))
    }

    pub fn check(&self, d: usize) -> Result<(), LinalgError> {
        for (vertex, value) in self.iter() {
            if value >= d {
                return Err(LinalgError::AssignmentValue { vertex, value, d });
            }
        }
        Ok(())
    }

    /// The assignment seen through an ordered vertex list.
    pub fn restrict(&self, vertices: &[usize]) -> Vec<Option<usize>> {
        vertices.iter().map(|&v| self.get(v)).collect()
    }
}

/// `Tr[e^A] / dim(A)`.
pub fn normalized_trace_exp(a: &SquareMatrix) -> Result<Complex64, LinalgError> {
    a.check_finite()?;
    if a.dim() > MAX_DIM {
        return Err(LinalgError::TooLarge(a.dim()));
    }
    let dim = a.dim() as f64;
    if a.is_hermitian() {
        let eig = hermitian_eigenvalues(&a.0);
        let top = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top > EXPONENT_CAP {
            return Err(LinalgError::Overflow(top));
        }
        Ok(Complex64::new(
            eig.iter().map(|e| e.exp()).sum::<f64>() / dim,
            0.0,
        ))
    } else {
        let e = expm(a)?;
        Ok(e.trace() / dim)
    }
}

/// Diagonal of `e^A`.
pub fn exp_diagonal(a: &SquareMatrix) -> Result<Vec<Complex64>, LinalgError> {
    a.check_finite()?;
    if a.dim() > MAX_DIM {
        return Err(LinalgError::TooLarge(a.dim()));
    }
    if a.is_hermitian() {
        let eig = a.0.clone().symmetric_eigen();
        let top = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if top > EXPONENT_CAP {
            return Err(LinalgError::Overflow(top));
        }
        let exps: Vec<f64> = eig.eigenvalues.iter().map(|e| e.exp()).collect();
        let n = a.dim();
        Ok((0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (k, &ek) in exps.iter().enumerate() {
                    acc += eig.eigenvectors[(i, k)].norm_sqr() * ek;
                }
                Complex64::new(acc, 0.0)
            })
            .collect())
    } else {
        let e = expm(a)?;
        Ok(e.diagonal().iter().copied().collect())
    }
}

pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    m.symmetric_eigenvalues().iter().copied().collect()
}

/// Gershgorin bound on the largest real part of the spectrum.
fn spectral_abscissa_bound(m: &CMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| {
            let off: f64 = (0..m.ncols())
                .filter(|&j| j != i)
                .map(|j| m[(i, j)].norm())
                .sum();
            m[(i, i)].re + off
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

// Padé(13) coefficients for scaling and squaring.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// `a·b` as four real products, which run on the blocked real kernel and
/// are several times faster than the generic complex one.
pub fn complex_mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    if a.nrows() < 16 {
        return a * b;
    }
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
        Complex64::new(re[(i, j)], im[(i, j)])
    })
}

/// Matrix exponential by scaling and squaring around a degree-13 Padé
/// approximant.
pub fn expm(a: &SquareMatrix) -> Result<CMatrix, LinalgError> {
    a.check_finite()?;
    let bound = spectral_abscissa_bound(&a.0);
    if bound > EXPONENT_CAP {
        return Err(LinalgError::Overflow(bound));
    }
    let n = a.dim();
    let norm1 = (0..n)
        .map(|j| a.0.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = &a.0 * Complex64::new(0.5f64.powi(squarings as i32), 0.0);
    let ident = CMatrix::identity(n, n);
    let a2 = complex_mul(&scaled, &scaled);
    let a4 = complex_mul(&a2, &a2);
    let a6 = complex_mul(&a4, &a2);
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);
    let u_inner = complex_mul(&a6, &(&a6 * b(13) + &a4 * b(11) + &a2 * b(9)))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &ident * b(1);
    let u = complex_mul(&scaled, &u_inner);
    let v = complex_mul(&a6, &(&a6 * b(12) + &a4 * b(10) + &a2 * b(8)))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &ident * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| LinalgError::Dimension("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = complex_mul(&r, &r);
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::Overflow(bound));
    }
    Ok(r)
}

/// Embeds `op`, acting on the tensor factors at `positions` (in `op`'s own
/// factor order), into the `d^n_sites`-dimensional space with site 0 as the
/// most significant digit.
pub fn embed_operator(
    op: &CMatrix,
    positions: &[usize],
    n_sites: usize,
    d: usize,
) -> Result<CMatrix, LinalgError> {
    let p = positions.len();
    let local = d.pow(p as u32);
    if op.nrows() != local || op.ncols() != local {
        return Err(LinalgError::Dimension(format!(
            "operator is {}x{}, expected {local}x{local}",
            op.nrows(),
            op.ncols()
        )));
    }
    if positions.iter().any(|&q| q >= n_sites) {
        return Err(LinalgError::Dimension(
            "factor position outside the support".into(),
        ));
    }
    let dim = checked_dim(d, n_sites)?;
    let place = |pos: usize| d.pow((n_sites - 1 - pos) as u32);
    // contribution of each local basis index to the full index
    let offsets: Vec<usize> = (0..local)
        .map(|a| {
            let mut rem = a;
            let mut off = 0;
            for t in (0..p).rev() {
                off += (rem % d) * place(positions[t]);
                rem /= d;
            }
            off
        })
        .collect();
    let free: Vec<usize> = (0..n_sites).filter(|s| !positions.contains(s)).collect();
    let mut out = CMatrix::zeros(dim, dim);
    for rest in 0..d.pow(free.len() as u32) {
        let mut base = 0;
        let mut rem = rest;
        for &s in free.iter().rev() {
            base += (rem % d) * place(s);
            rem /= d;
        }
        for a in 0..local {
            for b in 0..local {
                let z = op[(a, b)];
                if z != Complex64::new(0.0, 0.0) {
                    out[(base + offsets[a], base + offsets[b])] += z;
                }
            }
        }
    }
    Ok(out)
}

fn checked_dim(d: usize, sites: usize) -> Result<usize, LinalgError> {
    match d.checked_pow(sites as u32) {
        Some(dim) if dim <= MAX_DIM => Ok(dim),
        Some(dim) => Err(LinalgError::TooLarge(dim)),
        None => Err(LinalgError::TooLarge(usize::MAX)),
    }
}

/// The pieces of `-β(Σ Φ_v + λ Σ_{e∈T} Ψ_e)` on a polymer's support:
/// the on-site part and each edge's embedded `-βΨ_e` (λ not yet applied).
pub(crate) struct PolymerOperators {
    pub on_site: CMatrix,
    pub edges: Vec<CMatrix>,
}

impl PolymerOperators {
    pub fn build(model: &SpinModel, beta: f64, polymer: &Polymer) -> Result<Self, LinalgError> {
        let support = polymer.support();
        let k = support.len();
        let d = model.local_dim();
        let dim = checked_dim(d, k)?;
        let minus_beta = Complex64::new(-beta, 0.0);
        let mut on_site = CMatrix::zeros(dim, dim);
        for (pos, &v) in support.iter().enumerate() {
            on_site += embed_operator(model.on_site(v), &[pos], k, d)? * minus_beta;
        }
        let mut edges = Vec::with_capacity(polymer.size());
        for &e in polymer.edges() {
            let positions = edge_positions(model, e, support)?;
            edges.push(embed_operator(model.interaction(e), &positions, k, d)? * minus_beta);
        }
        Ok(Self { on_site, edges })
    }

    /// Hamiltonian with the given subset (bitmask over the polymer's edges)
    /// switched on at coupling `lambda`.
    pub fn assemble(&self, mask: u64, lambda: Complex64) -> CMatrix {
        let mut m = self.on_site.clone();
        for (i, e) in self.edges.iter().enumerate() {
            if mask >> i & 1 == 1 {
                m += e * lambda;
            }
        }
        m
    }
}

fn edge_positions(
    model: &SpinModel,
    edge: usize,
    support: &[usize],
) -> Result<Vec<usize>, LinalgError> {
    model
        .graph()
        .edge(edge)
        .vertices
        .iter()
        .map(|v| {
            support.binary_search(v).map_err(|_| {
                LinalgError::Dimension(format!("edge vertex {v} not in polymer support"))
            })
        })
        .collect()
}

/// `-β(Σ_{v∈V(γ)} Φ_v + λ Σ_{e∈active} Ψ_e)` on `γ`'s support, factors in
/// sorted support order. `active_edges` are edge indices of the graph.
pub fn embed_polymer_hamiltonian(
    model: &SpinModel,
    params: &Params,
    polymer: &Polymer,
    active_edges: &[usize],
) -> Result<SquareMatrix, LinalgError> {
    let mut mask = 0u64;
    for e in active_edges {
        let i = polymer.edges().binary_search(e).map_err(|_| {
            LinalgError::Dimension(format!("active edge #{e} is not part of the polymer"))
        })?;
        mask |= 1 << i;
    }
    let ops = PolymerOperators::build(model, params.beta, polymer)?;
    SquareMatrix::new(ops.assemble(mask, params.lambda))
}

/// Indices of the basis states of `sites` factors consistent with `fixed`
/// (one entry per factor, `None` for free factors).
pub(crate) fn consistent_states(fixed: &[Option<usize>], d: usize) -> Vec<usize> {
    let mut states = vec![0usize];
    for f in fixed {
        let values: Vec<usize> = match f {
            Some(s) => vec![*s],
            None => (0..d).collect(),
        };
        states = states
            .iter()
            .flat_map(|&b| values.iter().map(move |&s| b * d + s))
            .collect();
    }
    states
}

/// `(1/d^|γ|) Σ ⟨s|e^A|s⟩` over basis states `s` of `γ`'s support that agree
/// with `x` on the vertices it fixes.
pub fn projected_trace_exp(
    a: &SquareMatrix,
    polymer: &Polymer,
    model: &SpinModel,
    x: &PartialAssignment,
) -> Result<Complex64, LinalgError> {
    let d = model.local_dim();
    x.check(d)?;
    let expected = checked_dim(d, polymer.order())?;
    if a.dim() != expected {
        return Err(LinalgError::Dimension(format!(
            "matrix is {0}x{0} but the polymer support needs {expected}",
            a.dim()
        )));
    }
    let fixed = x.restrict(polymer.support());
    if fixed.iter().all(Option::is_none) {
        return normalized_trace_exp(a);
    }
    let diag = exp_diagonal(a)?;
    Ok(projected_sum(&diag, &fixed, d))
}

pub(crate) fn projected_sum(diag: &[Complex64], fixed: &[Option<usize>], d: usize) -> Complex64 {
    let total: Complex64 = consistent_states(fixed, d)
        .into_iter()
        .map(|s| diag[s])
        .sum();
    total / diag.len() as f64
}

/// Builds a matrix from row-major real and imaginary parts.
pub fn cmatrix_from_parts(n: usize, re: &[f64], im: &[f64]) -> CMatrix {
    DMatrix::from_fn(n, n, |i, j| Complex64::new(re[i * n + j], im[i * n + j]))
}
