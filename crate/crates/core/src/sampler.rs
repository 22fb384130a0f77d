//! Approximate sampling from the thermal distribution over `[d]^V` by the
//! chain rule. Each step estimates the marginals of the `d` one-vertex
//! extensions of the current prefix from the difference of restricted and
//! unrestricted truncated `log Z`, normalizes them, and draws.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::expansion::{
    truncation_order_formula, ClusterExpansion, ExpansionConfig, ExpansionError,
};
use crate::linalg::PartialAssignment;
use crate::model::{Params, SpinModel};

/// Largest state space [`distribution_table`] will materialize.
pub const TABLE_CAP: usize = 4096;

const IMAGINARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("sampling needs a real coupling, got lambda = {0}")]
    ComplexLambda(Complex64),
    #[error("local accuracy must lie in (0, 1), got {0}")]
    Accuracy(f64),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error("estimated marginal {value} is not positive; the truncated series is unreliable here")]
    NonPositive { value: f64 },
    #[error("estimated marginal has imaginary residue {residue:e} relative to its real part")]
    ImaginaryResidue { residue: f64 },
    #[error("step {step} (vertex {vertex}): {source}")]
    Step {
        step: usize,
        vertex: usize,
        #[source]
        source: Box<SamplerError>,
    },
    #[error("state space {0} exceeds the table cap {TABLE_CAP}")]
    StateSpace(usize),
    #[error("visit order must be a permutation of the vertices")]
    VisitOrder,
}

/// Marginal estimates `μ̂(x)` at a fixed relative accuracy.
pub struct MarginalEstimator<'a> {
    expansion: ClusterExpansion<'a>,
    log_z: Complex64,
    queries: AtomicUsize,
}

impl<'a> MarginalEstimator<'a> {
    /// Both halves of the log-ratio run at the order sized for `eps_local/2`.
    pub fn new(
        model: &'a SpinModel,
        params: &Params,
        eps_local: f64,
        config: &ExpansionConfig,
    ) -> Result<Self, SamplerError> {
        if params.lambda.im != 0.0 {
            return Err(SamplerError::ComplexLambda(params.lambda));
        }
        if !(eps_local > 0.0 && eps_local < 1.0) {
            return Err(SamplerError::Accuracy(eps_local));
        }
        let order = truncation_order_formula(model.graph().n_edges(), eps_local / 2.0, config.c0);
        let expansion = ClusterExpansion::new(model, params, order, config.scheme)?
            .configured(config, eps_local / 2.0);
        let log_z = expansion.log_z(&PartialAssignment::new())?.log_z();
        Ok(Self {
            expansion,
            log_z,
            queries: AtomicUsize::new(0),
        })
    }

    pub fn order(&self) -> usize {
        self.expansion.order()
    }

    pub fn queries(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn marginal(&self, x: &PartialAssignment) -> Result<f64, SamplerError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        if x.is_empty() {
            return Ok(1.0);
        }
        let restricted = self.expansion.log_z(x)?.log_z();
        let value = (restricted - self.log_z).exp();
        if !(value.re.is_finite() && value.re > 0.0) {
            return Err(SamplerError::NonPositive { value: value.re });
        }
        let residue = value.im.abs() / value.re;
        if residue > IMAGINARY_TOL {
            return Err(SamplerError::ImaginaryResidue { residue });
        }
        Ok(value.re)
    }
}

/// One-shot `μ̂(x)` with relative accuracy `eps_local`.
pub fn approx_marginal(
    model: &SpinModel,
    params: &Params,
    x: &PartialAssignment,
    eps_local: f64,
) -> Result<f64, SamplerError> {
    MarginalEstimator::new(model, params, eps_local, &ExpansionConfig::default())?.marginal(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    /// Spin value of every vertex, indexed by vertex.
    pub assignment: Vec<usize>,
    /// Normalized conditional law used at each step, in visit order.
    pub conditionals: Vec<Vec<f64>>,
    pub seed: u64,
    /// Marginal-estimator queries made for this sample.
    pub queries: usize,
}

impl SampleRun {
    /// The sample as a string of base-`d` digits, vertex 0 first.
    pub fn to_digits(&self) -> String {
        self.assignment
            .iter()
            .map(|&s| std::char::from_digit(s as u32, 36).expect("d <= 36"))
            .collect()
    }
}

/// Chain-rule sampler with per-query accuracy `ε/(3n)`.
pub struct ChainRuleSampler<'a> {
    model: &'a SpinModel,
    estimator: MarginalEstimator<'a>,
    visit_order: Vec<usize>,
    rng: ChaCha20Rng,
    seed: u64,
}

impl<'a> ChainRuleSampler<'a> {
    pub fn new(model: &'a SpinModel, params: &Params) -> Result<Self, SamplerError> {
        Self::with_config(model, params, &ExpansionConfig::default())
    }

    pub fn with_config(
        model: &'a SpinModel,
        params: &Params,
        config: &ExpansionConfig,
    ) -> Result<Self, SamplerError> {
        let n = model.graph().n_vertices().max(1);
        let eps_local = params.epsilon / (3.0 * n as f64);
        Ok(Self {
            model,
            estimator: MarginalEstimator::new(model, params, eps_local, config)?,
            visit_order: (0..model.graph().n_vertices()).collect(),
            rng: ChaCha20Rng::seed_from_u64(params.seed),
            seed: params.seed,
        })
    }

    pub fn with_visit_order(mut self, order: Vec<usize>) -> Result<Self, SamplerError> {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..self.model.graph().n_vertices()).collect::<Vec<_>>() {
            return Err(SamplerError::VisitOrder);
        }
        self.visit_order = order;
        Ok(self)
    }

    pub fn estimator(&self) -> &MarginalEstimator<'a> {
        &self.estimator
    }

    /// Normalized `μ̂(· | prefix)` at `vertex`.
    pub fn conditional(
        &self,
        prefix: &PartialAssignment,
        vertex: usize,
    ) -> Result<Vec<f64>, SamplerError> {
        let d = self.model.local_dim();
        let mut weights = Vec::with_capacity(d);
        for s in 0..d {
            weights.push(self.estimator.marginal(&prefix.clone().with(vertex, s))?);
        }
        let total: f64 = weights.iter().sum();
        Ok(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn sample(&mut self) -> Result<SampleRun, SamplerError> {
        let before = self.estimator.queries();
        let mut prefix = PartialAssignment::new();
        let mut conditionals = Vec::with_capacity(self.visit_order.len());
        let mut assignment = vec![0; self.model.graph().n_vertices()];
        for (step, &vertex) in self.visit_order.iter().enumerate() {
            let law = self
                .conditional(&prefix, vertex)
                .map_err(|e| SamplerError::Step {
                    step,
                    vertex,
                    source: Box::new(e),
                })?;
            let u: f64 = self.rng.gen();
            let mut acc = 0.0;
            let mut value = law.len() - 1;
            for (s, p) in law.iter().enumerate() {
                acc += p;
                if u < acc {
                    value = s;
                    break;
                }
            }
            assignment[vertex] = value;
            prefix = prefix.with(vertex, value);
            conditionals.push(law);
        }
        Ok(SampleRun {
            assignment,
            conditionals,
            seed: self.seed,
            queries: self.estimator.queries() - before,
        })
    }

    /// The sampler's exact output law `μ̂(x) = Π_i μ̂(x_i | x_{≺i})`, indexed
    /// with vertex 0 as the most significant digit.
    pub fn distribution_table(&self) -> Result<Vec<f64>, SamplerError> {
        let n = self.model.graph().n_vertices();
        let d = self.model.local_dim();
        let size = match d.checked_pow(n as u32) {
            Some(s) if s <= TABLE_CAP => s,
            Some(s) => return Err(SamplerError::StateSpace(s)),
            None => return Err(SamplerError::StateSpace(usize::MAX)),
        };
        let mut table = vec![0.0; size];
        self.fill(0, &PartialAssignment::new(), 1.0, &mut table)?;
        Ok(table)
    }

    fn fill(
        &self,
        step: usize,
        prefix: &PartialAssignment,
        mass: f64,
        table: &mut [f64],
    ) -> Result<(), SamplerError> {
        let d = self.model.local_dim();
        if step == self.visit_order.len() {
            let index = (0..self.model.graph().n_vertices()).fold(0, |acc, v| {
                acc * d + prefix.get(v).expect("complete assignment")
            });
            table[index] = mass;
            return Ok(());
        }
        let vertex = self.visit_order[step];
        let law = self
            .conditional(prefix, vertex)
            .map_err(|e| SamplerError::Step {
                step,
                vertex,
                source: Box::new(e),
            })?;
        for (s, p) in law.into_iter().enumerate() {
            self.fill(step + 1, &prefix.clone().with(vertex, s), mass * p, table)?;
        }
        Ok(())
    }
}

/// Draws one assignment with the RNG seeded from `params.seed`.
pub fn sample_assignment(model: &SpinModel, params: &Params) -> Result<SampleRun, SamplerError> {
    ChainRuleSampler::new(model, params)?.sample()
}

pub fn distribution_table(model: &SpinModel, params: &Params) -> Result<Vec<f64>, SamplerError> {
    ChainRuleSampler::new(model, params)?.distribution_table()
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

    #[test]
    fn empty_assignment_has_unit_marginal() {
        let g = Multihypergraph::from_vertex_lists(2, &[&[0, 1]]).unwrap();
        let m = SpinModel::uniform(g, 2, &z(), &kron(&x(), &x())).unwrap();
        let p = Params::real(1.0, 1e-4, 0.1).unwrap();
        assert_eq!(
            approx_marginal(&m, &p, &PartialAssignment::new(), 0.1).unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_coupling_marginal_is_single_site_gibbs() {
        let g = Multihypergraph::from_vertex_lists(3, &[&[0, 1], &[1, 2]]).unwrap();
        let phi = z() * c(0.7) + x() * c(0.2);
        let m = SpinModel::uniform(g, 2, &phi, &kron(&x(), &x())).unwrap();
        let beta = 1.2;
        let p = Params::real(beta, 0.0, 0.1).unwrap();
        let e = (&phi * c(-beta)).exp();
        for s in 0..2 {
            let got = approx_marginal(&m, &p, &PartialAssignment::new().with(1, s), 0.01).unwrap();
            let expected = e[(s, s)].re / e.trace().re;
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_complex_coupling() {
        let g = Multihypergraph::from_vertex_lists(2, &[&[0, 1]]).unwrap();
        let m = SpinModel::uniform(g, 2, &z(), &kron(&x(), &x())).unwrap();
        let p = Params::new(1.0, Complex64::new(0.0, 1e-5), 0.1).unwrap();
        assert!(matches!(
            ChainRuleSampler::new(&m, &p),
            Err(SamplerError::ComplexLambda(_))
        ));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let g = Multihypergraph::from_vertex_lists(3, &[&[0, 1], &[1, 2]]).unwrap();
        let m = SpinModel::uniform(g, 2, &(z() * c(0.4)), &kron(&x(), &x())).unwrap();
        let p = Params::real(0.5, 1e-3, 0.1).unwrap().with_seed(42);
        let a = sample_assignment(&m, &p).unwrap();
        let b = sample_assignment(&m, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, 42);
        assert_eq!(a.queries, 6);
        for law in &a.conditionals {
            assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(law.iter().all(|&q| q > 0.0 && q <= 1.0));
        }
    }

    #[test]
    fn maximally_mixed_state_samples_uniformly() {
        let g = Multihypergraph::from_vertex_lists(3, &[&[0, 1], &[1, 2]]).unwrap();
        let m = SpinModel::uniform(g, 2, &CMatrix::zeros(2, 2), &kron(&x(), &x())).unwrap();
        let p = Params::real(1.0, 0.0, 0.1).unwrap().with_seed(7);
        let mut sampler = ChainRuleSampler::new(&m, &p).unwrap();
        let table = sampler.distribution_table().unwrap();
        assert!(table.iter().all(|&q| (q - 0.125).abs() < 1e-12));
        let draws = 100_000;
        let mut counts = [0usize; 8];
        for _ in 0..draws {
            let run = sampler.sample().unwrap();
            counts[run.assignment.iter().fold(0, |acc, &s| acc * 2 + s)] += 1;
        }
        let expected = draws as f64 / 8.0;
        let chi2: f64 = counts
            .iter()
            .map(|&k| (k as f64 - expected).powi(2) / expected)
            .sum();
        // 7 degrees of freedom, 0.999 quantile
        assert!(chi2 < 24.32, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn custom_visit_order_keeps_table_normalized() {
        let g = Multihypergraph::from_vertex_lists(3, &[&[0, 1], &[1, 2]]).unwrap();
        let m = SpinModel::uniform(g, 2, &(z() * c(0.5)), &kron(&x(), &x())).unwrap();
        let p = Params::real(1.0, 1e-4, 0.05).unwrap();
        let s = ChainRuleSampler::new(&m, &p)
            .unwrap()
            .with_visit_order(vec![2, 0, 1])
            .unwrap();
        let t = s.distribution_table().unwrap();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(ChainRuleSampler::new(&m, &p)
            .unwrap()
            .with_visit_order(vec![0, 0, 1])
            .is_err());
    }
}
