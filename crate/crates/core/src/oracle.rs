//! Brute-force references: exact `Z`, the exact thermal distribution and its
//! marginals by full diagonalization, and direct sums over admissible
//! polymer sets.
//!
//! Nothing here goes through the `linalg` kernels. The Hermitian spectrum
//! comes from a Householder tridiagonalization followed by implicit QL, and
//! general exponentials from a scaled Taylor series; only matrix products
//! are shared with the rest of the crate.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::PartialAssignment;
use crate::model::{CMatrix, Params, SpinModel};

/// Largest full Hilbert-space dimension the oracle will build.
pub const ORACLE_DIM_CAP: usize = 4096;

/// Largest polymer list accepted by [`abstract_polymer_z_direct`].
pub const DIRECT_POLYMER_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("state space d^n exceeds the oracle cap {ORACLE_DIM_CAP}")]
    StateSpace,
    #[error("the thermal distribution needs a real coupling, got lambda = {0}")]
    ComplexLambda(Complex64),
    #[error("{0} polymers exceed the direct-sum cap {DIRECT_POLYMER_CAP}")]
    TooManyPolymers(usize),
    #[error("assignment value {value} at vertex {vertex} is not below d = {d}")]
    Assignment {
        vertex: usize,
        value: usize,
        d: usize,
    },
    #[error("polymer-representation check supports at most 16 edges, got {0}")]
    TooManyEdges(usize),
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Digits of a basis index, vertex 0 most significant.
pub fn index_to_assignment(index: usize, n: usize, d: usize) -> Vec<usize> {
    let mut digits = vec![0; n];
    let mut rem = index;
    for slot in digits.iter_mut().rev() {
        *slot = rem % d;
        rem /= d;
    }
    digits
}

pub fn assignment_to_index(values: &[usize], d: usize) -> usize {
    values.iter().fold(0, |acc, &s| acc * d + s)
}

/// Adds `scale · op` acting on `sites` (in op factor order) to the full
/// `d^n` matrix, row by row.
fn add_local_term(
    full: &mut CMatrix,
    op: &CMatrix,
    sites: &[usize],
    n: usize,
    d: usize,
    scale: Complex64,
) {
    let dim = full.nrows();
    let local = op.nrows();
    for row in 0..dim {
        let digits = index_to_assignment(row, n, d);
        let a = sites.iter().fold(0, |acc, &s| acc * d + digits[s]);
        for b in 0..local {
            let z = op[(a, b)];
            if z == c(0.0) {
                continue;
            }
            let mut col_digits = digits.clone();
            let mut rem = b;
            for &s in sites.iter().rev() {
                col_digits[s] = rem % d;
                rem /= d;
            }
            full[(row, assignment_to_index(&col_digits, d))] += z * scale;
        }
    }
}

/// `H_V + λ Σ_{e∈edges} Ψ_e` on the full space, where `H_V` sums the on-site
/// operators of `vertices`.
fn hamiltonian_on(
    model: &SpinModel,
    vertices: &[usize],
    edges: &[usize],
    lambda: Complex64,
) -> Result<CMatrix, OracleError> {
    let all: Vec<usize> = (0..model.graph().n_vertices()).collect();
    hamiltonian_within(model, &all, vertices, edges, lambda)
}

/// Like [`hamiltonian_on`] but on the tensor factors of `space` only (sorted
/// vertex list covering every vertex touched).
fn hamiltonian_within(
    model: &SpinModel,
    space: &[usize],
    vertices: &[usize],
    edges: &[usize],
    lambda: Complex64,
) -> Result<CMatrix, OracleError> {
    let n = space.len();
    let d = model.local_dim();
    let dim = match d.checked_pow(n as u32) {
        Some(dim) if dim <= ORACLE_DIM_CAP => dim,
        _ => return Err(OracleError::StateSpace),
    };
    let slot = |v: usize| space.binary_search(&v).expect("vertex inside the space");
    let mut h = CMatrix::zeros(dim, dim);
    for &v in vertices {
        add_local_term(&mut h, model.on_site(v), &[slot(v)], n, d, c(1.0));
    }
    for &e in edges {
        let sites: Vec<usize> = model
            .graph()
            .edge(e)
            .vertices
            .iter()
            .map(|&v| slot(v))
            .collect();
        add_local_term(&mut h, model.interaction(e), &sites, n, d, lambda);
    }
    Ok(h)
}

/// Full `H_Φ + λ H_Ψ`.
pub fn full_hamiltonian(model: &SpinModel, lambda: Complex64) -> Result<CMatrix, OracleError> {
    let vertices: Vec<usize> = (0..model.graph().n_vertices()).collect();
    let edges: Vec<usize> = (0..model.graph().n_edges()).collect();
    hamiltonian_on(model, &vertices, &edges, lambda)
}

fn is_hermitian(m: &CMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (i..n).all(|j| (m[(i, j)] - m[(j, i)].conj()).norm() <= 1e-12))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_spectrum(m: &CMatrix) -> Vec<f64> {
    let (mut diag, mut off) = tridiagonalize(m.clone());
    implicit_ql(&mut diag, &mut off);
    diag.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    diag
}

/// Householder reduction of a Hermitian matrix to real symmetric tridiagonal
/// form (off-diagonal moduli; the phases are a diagonal unitary away).
fn tridiagonalize(mut a: CMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut off = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let norm = (0..len)
            .map(|i| a[(k + 1 + i, k)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 {
            c(1.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm;
        let mut v: Vec<Complex64> = (0..len).map(|i| a[(k + 1 + i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in &mut v {
            *z /= vnorm;
        }
        // p = A22 v, trailing block only
        let mut p = vec![c(0.0); len];
        for i in 0..len {
            let mut acc = c(0.0);
            for j in 0..len {
                acc += a[(k + 1 + i, k + 1 + j)] * v[j];
            }
            p[i] = acc;
        }
        let vp: Complex64 = v.iter().zip(&p).map(|(vi, pi)| vi.conj() * pi).sum();
        let q: Vec<Complex64> = p.iter().zip(&v).map(|(pi, vi)| pi - vp * vi).collect();
        for i in 0..len {
            for j in 0..len {
                let upd = v[i] * q[j].conj() + q[i] * v[j].conj();
                a[(k + 1 + i, k + 1 + j)] -= upd * 2.0;
            }
        }
        // column k is mapped to alpha e1
        a[(k + 1, k)] = alpha;
        a[(k, k + 1)] = alpha.conj();
        for i in 1..len {
            a[(k + 1 + i, k)] = c(0.0);
            a[(k, k + 1 + i)] = c(0.0);
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    for i in 0..n.saturating_sub(1) {
        off[i] = a[(i + 1, i)].norm();
    }
    (diag, off)
}

/// Eigenvalues of the symmetric tridiagonal matrix (`off[i]` couples `i` and
/// `i+1`) by QL with implicit Wilkinson-style shifts. Results overwrite `d`.
fn implicit_ql(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    if n == 0 {
        return;
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            assert!(iterations < 200, "implicit QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut cs, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = cs * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                cs = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * cs * b;
                p = s * r;
                d[i + 1] = g + p;
                g = cs * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

// Real-split product; kept local so the oracle shares no kernels with the
// estimator.
fn mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
        Complex64::new(re[(i, j)], im[(i, j)])
    })
}

fn one_norm(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^A` by Taylor series on `A/2^s` with `‖A/2^s‖₁ ≤ 1/2`, then squaring.
pub fn taylor_exp(a: &CMatrix) -> CMatrix {
    let (scaled, squarings) = scaled_taylor(a);
    let mut result = scaled;
    for _ in 0..squarings {
        result = mul(&result, &result);
    }
    result
}

fn scaled_taylor(a: &CMatrix) -> (CMatrix, u32) {
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let b = a * c(0.5f64.powi(squarings as i32));
    let mut term = CMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..64 {
        term = mul(&term, &b) * c(1.0 / k as f64);
        sum += &term;
        if one_norm(&term) <= 1e-18 * one_norm(&sum) {
            break;
        }
    }
    (sum, squarings)
}

/// Normalized `Tr[e^A]` via the spectrum when `A` is Hermitian, otherwise via
/// the Taylor route (the last squaring is folded into the trace).
fn normalized_trace_exp(a: &CMatrix) -> Complex64 {
    let n = a.nrows() as f64;
    if is_hermitian(a) {
        c(hermitian_spectrum(a).iter().map(|e| e.exp()).sum::<f64>() / n)
    } else {
        let (mut b, squarings) = scaled_taylor(a);
        if squarings == 0 {
            return b.trace() / n;
        }
        for _ in 0..squarings - 1 {
            b = mul(&b, &b);
        }
        let dim = b.nrows();
        let mut tr = c(0.0);
        for i in 0..dim {
            for j in 0..dim {
                tr += b[(i, j)] * b[(j, i)];
            }
        }
        tr / n
    }
}

/// `Z_G(β,λ) = Tr[e^{-β(H_Φ+λH_Ψ)}]`, normalized.
pub fn exact_partition_function(
    model: &SpinModel,
    params: &Params,
) -> Result<Complex64, OracleError> {
    let h = full_hamiltonian(model, params.lambda)?;
    Ok(normalized_trace_exp(&(h * c(-params.beta))))
}

/// `μ(x) = ⟨x|ρ|x⟩` for every basis state, indexed by
/// [`assignment_to_index`].
pub fn exact_thermal_distribution(
    model: &SpinModel,
    params: &Params,
) -> Result<Vec<f64>, OracleError> {
    if params.lambda.im != 0.0 {
        return Err(OracleError::ComplexLambda(params.lambda));
    }
    let h = full_hamiltonian(model, params.lambda)?;
    // shift by the lowest diagonal entry bound to keep e^{-βH} near unit scale
    let shift = (0..h.nrows())
        .map(|i| h[(i, i)].re)
        .fold(f64::INFINITY, f64::min);
    let dim = h.nrows();
    let shifted = (h - CMatrix::identity(dim, dim) * c(shift)) * c(-params.beta);
    let e = taylor_exp(&shifted);
    let diag: Vec<f64> = (0..dim).map(|i| e[(i, i)].re).collect();
    let total: f64 = diag.iter().sum();
    Ok(diag.into_iter().map(|p| p / total).collect())
}

/// Sum of the exact distribution over completions of `x`.
pub fn exact_marginal(
    model: &SpinModel,
    params: &Params,
    x: &PartialAssignment,
) -> Result<f64, OracleError> {
    let d = model.local_dim();
    for (vertex, value) in x.iter() {
        if value >= d {
            return Err(OracleError::Assignment { vertex, value, d });
        }
    }
    let dist = exact_thermal_distribution(model, params)?;
    Ok(marginal_of(&dist, model.graph().n_vertices(), d, x))
}

pub fn marginal_of(dist: &[f64], n: usize, d: usize, x: &PartialAssignment) -> f64 {
    dist.iter()
        .enumerate()
        .filter(|(i, _)| {
            let digits = index_to_assignment(*i, n, d);
            x.iter().all(|(v, s)| digits[v] == s)
        })
        .map(|(_, p)| p)
        .sum()
}

fn admissible_sum(weights: &[Complex64], compatible: &dyn Fn(usize, usize) -> bool) -> Complex64 {
    fn rec(
        start: usize,
        chosen: &mut Vec<usize>,
        weights: &[Complex64],
        compatible: &dyn Fn(usize, usize) -> bool,
        product: Complex64,
    ) -> Complex64 {
        let mut total = product;
        for next in start..weights.len() {
            if chosen.iter().all(|&p| compatible(p, next)) {
                chosen.push(next);
                total += rec(
                    next + 1,
                    chosen,
                    weights,
                    compatible,
                    product * weights[next],
                );
                chosen.pop();
            }
        }
        total
    }
    rec(0, &mut Vec::new(), weights, compatible, c(1.0))
}

/// `Z(C, w) = Σ_{admissible Γ} Π_{γ∈Γ} w_γ`, the empty set included.
pub fn abstract_polymer_z_direct(
    weights: &[Complex64],
    compatible: impl Fn(usize, usize) -> bool,
) -> Result<Complex64, OracleError> {
    if weights.len() > DIRECT_POLYMER_CAP {
        return Err(OracleError::TooManyPolymers(weights.len()));
    }
    Ok(admissible_sum(weights, &compatible))
}

/// Brute-force polymer weight, with traces over the support of the edges
/// (the normalized trace of an operator acting as the identity elsewhere is
/// the same on the full space).
pub fn brute_force_weight(
    model: &SpinModel,
    params: &Params,
    edges: &[usize],
) -> Result<Complex64, OracleError> {
    let mut support: Vec<usize> = edges
        .iter()
        .flat_map(|&e| model.graph().edge(e).vertices.iter().copied())
        .collect();
    support.sort_unstable();
    support.dedup();
    let minus_beta = c(-params.beta);
    let z_support = normalized_trace_exp(
        &(hamiltonian_within(model, &support, &support, &[], c(0.0))? * minus_beta),
    );
    let k = edges.len();
    let mut total = c(0.0);
    for mask in 0u32..(1 << k) {
        let active: Vec<usize> = (0..k)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| edges[i])
            .collect();
        let h = hamiltonian_within(model, &support, &support, &active, params.lambda)?;
        let term = normalized_trace_exp(&(h * minus_beta)) / z_support;
        if (k - active.len()) % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    Ok(total)
}

/// `Z_G(β,0) · Σ_{admissible Γ} Π w_γ` with every connected edge subset
/// found by exhaustive search and weighed by [`brute_force_weight`].
pub fn polymer_representation_z(
    model: &SpinModel,
    params: &Params,
) -> Result<Complex64, OracleError> {
    let graph = model.graph();
    let n_edges = graph.n_edges();
    if n_edges > 16 {
        return Err(OracleError::TooManyEdges(n_edges));
    }
    let mut polymers: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for mask in 1u32..(1 << n_edges) {
        let edges: Vec<usize> = (0..n_edges).filter(|i| mask >> i & 1 == 1).collect();
        if graph.is_connected_edge_set(&edges) {
            let mut support: Vec<usize> = edges
                .iter()
                .flat_map(|&e| graph.edge(e).vertices.iter().copied())
                .collect();
            support.sort_unstable();
            support.dedup();
            polymers.push((edges, support));
        }
    }
    let weights = polymers
        .iter()
        .map(|(edges, _)| brute_force_weight(model, params, edges))
        .collect::<Result<Vec<_>, _>>()?;
    let disjoint = |a: usize, b: usize| polymers[a].1.iter().all(|v| !polymers[b].1.contains(v));
    let all: Vec<usize> = (0..graph.n_vertices()).collect();
    let z0 = normalized_trace_exp(&(hamiltonian_on(model, &all, &[], c(0.0))? * c(-params.beta)));
    Ok(z0 * admissible_sum(&weights, &disjoint))
}
