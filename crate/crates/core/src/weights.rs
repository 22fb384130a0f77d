//! Polymer weights of the spin-system polymer model,
//!
//! `w_γ = Σ_{T⊆E(γ)} (-1)^{|E(γ)∖T|} Tr[e^{-β(Σ_{v∈V(γ)} Φ_v + λ Σ_{e∈T} Ψ_e)}] / Z_γ(β,0)`,
//!
//! their restricted-trace variant used for marginals, and the
//! non-interacting normalizers.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use log::warn;
use num_complex::Complex64;
use thiserror::Error;

use crate::hypergraph::Polymer;
use crate::linalg::{
    exp_diagonal, normalized_trace_exp, projected_sum, LinalgError, PartialAssignment,
    PolymerOperators, SquareMatrix,
};
use crate::model::{check_admissible, hermitian_deviation, Params, SpinModel};

/// Polymers are limited to 63 edges by the subset bitmask.
pub const MAX_POLYMER_SIZE: usize = 63;

/// Largest subset-diagonal table (entries) kept per polymer for restricted
/// weights.
const TABLE_ENTRY_CAP: usize = 1 << 16;

/// Number of points on the circle used by [`WeightScheme::Contour`].
const CONTOUR_POINTS: usize = 16;

/// Relative roundoff level above which [`WeightScheme::Auto`] falls back to
/// the contour evaluation.
const AUTO_NOISE_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("weight of polymer with edges {edges:?}: {source}")]
    Linalg {
        edges: Vec<usize>,
        #[source]
        source: LinalgError,
    },
    #[error("restricted weights need a real coupling, got lambda = {0}")]
    ComplexLambda(Complex64),
    #[error("polymer with {0} edges exceeds the supported size {MAX_POLYMER_SIZE}")]
    TooManyEdges(usize),
}

/// How the alternating subset sum is evaluated.
///
/// The plain sum cancels down to a value of order `(β|λ|)^‖γ‖`, which drops
/// below double-precision roundoff for large polymers at small couplings.
/// `Contour` instead recovers the Taylor coefficients of the weight (an
/// entire function of λ vanishing to order `‖γ‖` at zero) from evaluations
/// on a circle of radius about `1/(β‖γ‖)` and sums the series at λ. `Auto`
/// uses the plain sum unless its estimated roundoff exceeds both `1e-8`
/// relative and the caller's absolute tolerance (zero for the free functions
/// in this module).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightScheme {
    Direct,
    Contour,
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolymerWeight {
    pub polymer: Polymer,
    pub value: Complex64,
}

fn vertex_exponent(model: &SpinModel, beta: f64, v: usize) -> SquareMatrix {
    SquareMatrix::new(model.on_site(v) * Complex64::new(-beta, 0.0))
        .expect("on-site operators are square")
}

/// Per-vertex factor of the non-interacting trace, `⟨s|e^{-βΦ_v}|s⟩/d` when
/// the vertex is fixed to `s`, the normalized trace otherwise.
pub fn vertex_factor(
    model: &SpinModel,
    beta: f64,
    vertex: usize,
    fixed: Option<usize>,
) -> Result<Complex64, LinalgError> {
    let a = vertex_exponent(model, beta, vertex);
    match fixed {
        None => normalized_trace_exp(&a),
        Some(s) => {
            let d = model.local_dim();
            if s >= d {
                return Err(LinalgError::AssignmentValue {
                    vertex,
                    value: s,
                    d,
                });
            }
            Ok(exp_diagonal(&a)?[s] / d as f64)
        }
    }
}

/// `Π_{v∈vertices} Tr[e^{-βΦ_v}]` with normalized traces.
pub fn z0_product(
    model: &SpinModel,
    beta: f64,
    vertices: &[usize],
) -> Result<Complex64, LinalgError> {
    vertices
        .iter()
        .try_fold(Complex64::new(1.0, 0.0), |acc, &v| {
            Ok(acc * vertex_factor(model, beta, v, None)?)
        })
}

/// `w_γ` for the unrestricted trace.
pub fn polymer_weight(
    model: &SpinModel,
    params: &Params,
    polymer: &Polymer,
) -> Result<PolymerWeight, WeightError> {
    polymer_weight_with(model, params, polymer, None, WeightScheme::default())
}

/// `w_γ` with every trace restricted to the basis states consistent with `x`.
pub fn polymer_weight_projected(
    model: &SpinModel,
    params: &Params,
    polymer: &Polymer,
    x: &PartialAssignment,
) -> Result<PolymerWeight, WeightError> {
    polymer_weight_with(model, params, polymer, Some(x), WeightScheme::default())
}

pub fn polymer_weight_with(
    model: &SpinModel,
    params: &Params,
    polymer: &Polymer,
    x: Option<&PartialAssignment>,
    scheme: WeightScheme,
) -> Result<PolymerWeight, WeightError> {
    if x.is_some() && params.lambda.im != 0.0 {
        return Err(WeightError::ComplexLambda(params.lambda));
    }
    let fixed = match x {
        Some(x) => {
            x.check(model.local_dim())
                .map_err(|source| WeightError::Linalg {
                    edges: polymer.edges().to_vec(),
                    source,
                })?;
            x.restrict(polymer.support())
        }
        None => vec![None; polymer.order()],
    };
    let value = weight_value(model, params, polymer, &fixed, scheme, 0.0, None)?;
    Ok(PolymerWeight {
        polymer: polymer.clone(),
        value,
    })
}

/// `fixed` holds one entry per support vertex.
pub(crate) fn weight_value(
    model: &SpinModel,
    params: &Params,
    polymer: &Polymer,
    fixed: &[Option<usize>],
    scheme: WeightScheme,
    abs_tol: f64,
    table: Option<&[Vec<Complex64>]>,
) -> Result<Complex64, WeightError> {
    let wrap = |source| WeightError::Linalg {
        edges: polymer.edges().to_vec(),
        source,
    };
    if polymer.size() > MAX_POLYMER_SIZE {
        return Err(WeightError::TooManyEdges(polymer.size()));
    }
    let lambda = params.lambda;
    if lambda == Complex64::new(0.0, 0.0) && polymer.size() > 0 {
        // every subset term is the same trace
        return Ok(Complex64::new(0.0, 0.0));
    }
    let eval = Evaluator::new(model, params.beta, polymer, fixed).map_err(wrap)?;
    let radius = 0.5 / (params.beta * polymer.size().max(1) as f64);
    let contour_useful = polymer.size() > 0 && lambda.norm() < 0.5 * radius;
    let direct = || match table {
        Some(t) => Ok(eval.direct_from(t)),
        None => eval.direct(lambda),
    };
    let w = match scheme {
        WeightScheme::Direct => direct().map(|(w, _)| w).map_err(wrap)?,
        WeightScheme::Contour if contour_useful => eval.contour(lambda, radius).map_err(wrap)?,
        WeightScheme::Contour => direct().map(|(w, _)| w).map_err(wrap)?,
        WeightScheme::Auto => {
            let (w, scale) = direct().map_err(wrap)?;
            let noise = (1u64 << polymer.size()) as f64 * 4.0 * f64::EPSILON * scale;
            if contour_useful && noise > abs_tol.max(AUTO_NOISE_LIMIT * w.norm()) {
                eval.contour(lambda, radius).map_err(wrap)?
            } else {
                w
            }
        }
    };
    // the decay bound is only proved for unrestricted traces
    if fixed.iter().any(Option::is_some) && check_admissible(params, model) {
        let bound = decay_bound(model, polymer.size());
        if w.norm() > bound * (1.0 + 1e-9) + abs_tol {
            warn!(
                "restricted weight of polymer {:?} is {:e}, above the decay bound {bound:e}",
                polymer.edges(),
                w.norm()
            );
        }
    }
    Ok(w)
}

/// `(e³ Δ C(r,2))^{-k}`, the decay bound on weights of polymers with `k`
/// edges at admissible couplings (degree and rank clamped up to 2).
pub fn decay_bound(model: &SpinModel, k: usize) -> f64 {
    let (delta, rank) = model.graph().degree_and_rank();
    let (delta, rank) = (delta.max(2) as f64, rank.max(2) as f64);
    let base = 3.0 + (delta * rank * (rank - 1.0) / 2.0).ln();
    (-(k as f64) * base).exp()
}

/// `(e^{2rβ}(e^{β|λ|} - 1))^k`, the sharper coupling-dependent bound.
pub fn coupling_bound(model: &SpinModel, params: &Params, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let rank = model.graph().degree_and_rank().1.max(2) as f64;
    let beta = params.beta;
    let log = 2.0 * rank * beta + (beta * params.lambda.norm()).exp_m1().ln();
    (k as f64 * log).exp()
}

struct Evaluator<'a> {
    ops: PolymerOperators,
    fixed: &'a [Option<usize>],
    d: usize,
    size: usize,
    denominator: Complex64,
    hermitian: bool,
}

impl<'a> Evaluator<'a> {
    fn new(
        model: &SpinModel,
        beta: f64,
        polymer: &Polymer,
        fixed: &'a [Option<usize>],
    ) -> Result<Self, LinalgError> {
        let ops = PolymerOperators::build(model, beta, polymer)?;
        let mut denominator = Complex64::new(1.0, 0.0);
        for (&v, f) in polymer.support().iter().zip(fixed) {
            denominator *= vertex_factor(model, beta, v, *f)?;
        }
        let hermitian = hermitian_deviation(&ops.on_site) <= 1e-12
            && ops.edges.iter().all(|e| hermitian_deviation(e) <= 1e-12);
        Ok(Self {
            ops,
            fixed,
            d: model.local_dim(),
            size: polymer.size(),
            denominator,
            hermitian,
        })
    }

    fn trace(&self, m: nalgebra::DMatrix<Complex64>) -> Result<Complex64, LinalgError> {
        let a = SquareMatrix::new(m)?;
        if self.fixed.iter().all(Option::is_none) {
            normalized_trace_exp(&a)
        } else {
            Ok(projected_sum(&exp_diagonal(&a)?, self.fixed, self.d))
        }
    }

    /// Alternating sum in Gray-code order; also returns the largest term
    /// magnitude as a roundoff scale.
    fn direct(&self, lambda: Complex64) -> Result<(Complex64, f64), LinalgError> {
        let k = self.size;
        let mut current = self.ops.on_site.clone();
        let mut mask = 0u64;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut scale: f64 = 0.0;
        for i in 0..(1u64 << k) {
            if i > 0 {
                let bit = i.trailing_zeros() as usize;
                mask ^= 1 << bit;
                let delta = &self.ops.edges[bit] * lambda;
                if mask >> bit & 1 == 1 {
                    current += delta;
                } else {
                    current -= delta;
                }
            }
            let term = self.trace(current.clone())? / self.denominator;
            scale = scale.max(term.norm());
            let excluded = k - mask.count_ones() as usize;
            if excluded % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
        Ok((sum, scale))
    }

    /// Diagonal of the exponential for every subset, indexed by mask.
    fn diagonals(&self, lambda: Complex64) -> Result<Vec<Vec<Complex64>>, LinalgError> {
        let k = self.size;
        let mut table = vec![Vec::new(); 1 << k];
        let mut current = self.ops.on_site.clone();
        let mut mask = 0usize;
        for i in 0..(1usize << k) {
            if i > 0 {
                let bit = i.trailing_zeros() as usize;
                mask ^= 1 << bit;
                let delta = &self.ops.edges[bit] * lambda;
                if mask >> bit & 1 == 1 {
                    current += delta;
                } else {
                    current -= delta;
                }
            }
            table[mask] = exp_diagonal(&SquareMatrix::new(current.clone())?)?;
        }
        Ok(table)
    }

    /// The alternating sum read off precomputed subset diagonals.
    fn direct_from(&self, table: &[Vec<Complex64>]) -> (Complex64, f64) {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut scale: f64 = 0.0;
        for (mask, diag) in table.iter().enumerate() {
            let term = projected_sum(diag, self.fixed, self.d) / self.denominator;
            scale = scale.max(term.norm());
            if (self.size - mask.count_ones() as usize) % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
        (sum, scale)
    }

    fn contour(&self, lambda: Complex64, radius: f64) -> Result<Complex64, LinalgError> {
        let n = CONTOUR_POINTS;
        let k = self.size;
        let mut samples = vec![Complex64::new(0.0, 0.0); n];
        for p in 0..n {
            if self.hermitian && p > n / 2 {
                samples[p] = samples[n - p].conj();
                continue;
            }
            let point = Complex64::from_polar(radius, 2.0 * PI * p as f64 / n as f64);
            samples[p] = self.direct(point)?.0;
        }
        let ratio = lambda / radius;
        let mut value = Complex64::new(0.0, 0.0);
        for j in k..k + n {
            let mut coeff = Complex64::new(0.0, 0.0);
            for (p, s) in samples.iter().enumerate() {
                coeff +=
                    s * Complex64::from_polar(1.0, -2.0 * PI * ((p * j) % n) as f64 / n as f64);
            }
            value += coeff / n as f64 * ratio.powu(j as u32);
        }
        Ok(value)
    }
}

/// Memo of weights keyed by polymer and the assignment restricted to its
/// support. Concurrent inserts of the same key may compute twice; the first
/// stored value wins.
#[derive(Debug, Default)]
pub struct WeightCache {
    map: Mutex<HashMap<(Vec<usize>, Vec<Option<usize>>), Complex64>>,
    // restricted weights of one polymer share the subset exponentials
    tables: Mutex<HashMap<Vec<usize>, Arc<Vec<Vec<Complex64>>>>>,
}

impl WeightCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("weight cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset_table(
        &self,
        model: &SpinModel,
        params: &Params,
        polymer: &Polymer,
    ) -> Result<Option<Arc<Vec<Vec<Complex64>>>>, WeightError> {
        let entries = (model.local_dim() as f64).powi(polymer.order() as i32)
            * (1u64 << polymer.size()) as f64;
        if entries > TABLE_ENTRY_CAP as f64 || params.lambda == Complex64::new(0.0, 0.0) {
            return Ok(None);
        }
        if let Some(t) = self
            .tables
            .lock()
            .expect("weight cache poisoned")
            .get(polymer.edges())
        {
            return Ok(Some(Arc::clone(t)));
        }
        let free = vec![None; polymer.order()];
        let eval = Evaluator::new(model, params.beta, polymer, &free)
            .and_then(|e| e.diagonals(params.lambda))
            .map_err(|source| WeightError::Linalg {
                edges: polymer.edges().to_vec(),
                source,
            })?;
        let table = Arc::new(eval);
        Ok(Some(Arc::clone(
            self.tables
                .lock()
                .expect("weight cache poisoned")
                .entry(polymer.edges().to_vec())
                .or_insert(table),
        )))
    }

    pub(crate) fn get_or_compute(
        &self,
        model: &SpinModel,
        params: &Params,
        polymer: &Polymer,
        fixed: Vec<Option<usize>>,
        scheme: WeightScheme,
        abs_tol: f64,
    ) -> Result<Complex64, WeightError> {
        let key = (polymer.edges().to_vec(), fixed);
        if let Some(&w) = self.map.lock().expect("weight cache poisoned").get(&key) {
            return Ok(w);
        }
        let table = if key.1.iter().any(Option::is_some) && scheme != WeightScheme::Contour {
            self.subset_table(model, params, polymer)?
        } else {
            None
        };
        let w = weight_value(
            model,
            params,
            polymer,
            &key.1,
            scheme,
            abs_tol,
            table.as_deref().map(|t| t.as_slice()),
        )?;
        Ok(*self
            .map
            .lock()
            .expect("weight cache poisoned")
            .entry(key)
            .or_insert(w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::Multihypergraph;
    use crate::model::pauli::*;
    use crate::model::CMatrix;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn edge_model() -> SpinModel {
        let g = Multihypergraph::from_vertex_lists(2, &[&[0, 1]]).unwrap();
        SpinModel::uniform(g, 2, &z(), &kron(&x(), &x())).unwrap()
    }

    /// Closed-form-free dense evaluation of a 4x4 exponential by Taylor
    /// series, independent of the library kernels.
    fn taylor_exp(m: &CMatrix) -> CMatrix {
        let mut term = CMatrix::identity(m.nrows(), m.nrows());
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * m * c(1.0 / k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn z0_examples() {
        let g = Multihypergraph::from_vertex_lists(2, &[&[0, 1]]).unwrap();
        let zero = SpinModel::uniform(g, 2, &CMatrix::zeros(2, 2), &kron(&x(), &x())).unwrap();
        assert!((z0_product(&zero, 1.0, &[0, 1]).unwrap() - c(1.0)).norm() < 1e-15);
        let m = edge_model();
        let z0 = z0_product(&m, 1.0, &[0, 1]).unwrap();
        assert!((z0.re - 1f64.cosh().powi(2)).abs() < 1e-13);
        assert!((z0.re - 2.38110).abs() < 1e-5);
        assert_eq!(z0_product(&m, 1.0, &[]).unwrap(), c(1.0));
    }

    #[test]
    fn zero_coupling_weight_vanishes() {
        let m = edge_model();
        let p = Params::real(0.9, 0.0, 0.1).unwrap();
        let poly = m.graph().enumerate_polymers(1).remove(0);
        assert_eq!(polymer_weight(&m, &p, &poly).unwrap().value.norm(), 0.0);
        let x = PartialAssignment::new().with(0, 1);
        assert_eq!(
            polymer_weight_projected(&m, &p, &poly, &x)
                .unwrap()
                .value
                .norm(),
            0.0
        );
    }

    #[test]
    fn single_edge_matches_dense_oracle() {
        let (beta, lambda) = (0.3, 0.05);
        let m = edge_model();
        let p = Params::real(beta, lambda, 0.1).unwrap();
        let poly = m.graph().enumerate_polymers(1).remove(0);
        let i2 = identity(2);
        let h0 = kron(&z(), &i2) + kron(&i2, &z());
        let h = &h0 + kron(&x(), &x()) * c(lambda);
        let zl = taylor_exp(&(h * c(-beta))).trace() / 4.0;
        let z0 = taylor_exp(&(h0 * c(-beta))).trace() / 4.0;
        let expected = zl / z0 - 1.0;
        for scheme in [
            WeightScheme::Direct,
            WeightScheme::Contour,
            WeightScheme::Auto,
        ] {
            let w = polymer_weight_with(&m, &p, &poly, None, scheme)
                .unwrap()
                .value;
            assert!(
                (w - expected).norm() < 1e-12 * expected.norm().max(1e-3),
                "{scheme:?}"
            );
            assert!(w.im.abs() < 1e-10);
        }
    }

    #[test]
    fn projected_single_edge_matches_dense_oracle() {
        let (beta, lambda) = (0.6, 0.08);
        let m = edge_model();
        let p = Params::real(beta, lambda, 0.1).unwrap();
        let poly = m.graph().enumerate_polymers(1).remove(0);
        let i2 = identity(2);
        let h = kron(&z(), &i2) + kron(&i2, &z()) + kron(&x(), &x()) * c(lambda);
        let e = taylor_exp(&(h * c(-beta)));
        let single = taylor_exp(&(z() * c(-beta)));
        for s0 in 0..2 {
            for s1 in 0..2 {
                let x = PartialAssignment::new().with(0, s0).with(1, s1);
                let w = polymer_weight_projected(&m, &p, &poly, &x).unwrap().value;
                let idx = 2 * s0 + s1;
                let expected = e[(idx, idx)] / (single[(s0, s0)] * single[(s1, s1)]) - 1.0;
                assert!((w - expected).norm() < 1e-12, "{s0}{s1}: {w} vs {expected}");
            }
        }
        // fixing a vertex outside the support reduces to the plain weight
        let g = Multihypergraph::from_vertex_lists(3, &[&[0, 1]]).unwrap();
        let m3 = SpinModel::uniform(g, 2, &z(), &kron(&x(), &x())).unwrap();
        let poly3 = m3.graph().enumerate_polymers(1).remove(0);
        let far = PartialAssignment::new().with(2, 1);
        let a = polymer_weight_projected(&m3, &p, &poly3, &far)
            .unwrap()
            .value;
        let b = polymer_weight(&m3, &p, &poly3).unwrap().value;
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn projected_rejects_complex_lambda() {
        let m = edge_model();
        let p = Params::new(0.5, Complex64::new(0.01, 0.01), 0.1).unwrap();
        let poly = m.graph().enumerate_polymers(1).remove(0);
        assert!(matches!(
            polymer_weight_projected(&m, &p, &poly, &PartialAssignment::new()),
            Err(WeightError::ComplexLambda(_))
        ));
    }

    #[test]
    fn contour_resolves_weights_below_roundoff() {
        // a 3-edge path where w ~ (βλ)^3 is far below the direct sum's noise
        let g = Multihypergraph::from_vertex_lists(4, &[&[0, 1], &[1, 2], &[2, 3]]).unwrap();
        let psi = kron(&x(), &x()) * c(0.6) + kron(&z(), &x()) * c(0.4);
        let phi = z() * c(0.7) + x() * c(0.3);
        let m = SpinModel::uniform(g, 2, &phi, &psi).unwrap();
        let poly = m
            .graph()
            .enumerate_polymers(3)
            .into_iter()
            .find(|p| p.size() == 3)
            .unwrap();
        // leading coefficient from an antisymmetric difference at a coupling
        // where the direct sum is still well resolved
        let h = 1e-2;
        let base = Params::real(1.0, h, 0.1).unwrap();
        let plus = polymer_weight_with(&m, &base, &poly, None, WeightScheme::Direct)
            .unwrap()
            .value;
        let minus = polymer_weight_with(
            &m,
            &base.with_lambda(c(-h)),
            &poly,
            None,
            WeightScheme::Direct,
        )
        .unwrap()
        .value;
        let leading = (plus - minus) / (2.0 * h * h * h);
        let small = base.with_lambda(c(1e-6));
        let w_small = polymer_weight_with(&m, &small, &poly, None, WeightScheme::Contour)
            .unwrap()
            .value;
        let scaled = w_small * 1e18;
        assert!(
            (scaled - leading).norm() / leading.norm() < 1e-3,
            "{scaled} vs {leading}"
        );
        let auto = polymer_weight(&m, &small, &poly).unwrap().value;
        assert!((auto - w_small).norm() <= 1e-10 * w_small.norm());
    }

    #[test]
    fn cache_returns_stored_value() {
        let m = edge_model();
        let p = Params::real(0.5, 0.02, 0.1).unwrap();
        let poly = m.graph().enumerate_polymers(1).remove(0);
        let cache = WeightCache::new();
        let a = cache
            .get_or_compute(&m, &p, &poly, vec![None, None], WeightScheme::Auto, 0.0)
            .unwrap();
        let b = cache
            .get_or_compute(&m, &p, &poly, vec![None, None], WeightScheme::Auto, 0.0)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.len(), 1);
    }
}
