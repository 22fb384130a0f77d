//! Seeded random model corpus shared by the integration suites.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakspin::model::{model_threshold, operator_norm};
use weakspin::{CMatrix, Complex64, Edge, Multihypergraph, Params, SpinModel};

pub const CORPUS_SEED: u64 = 0x5eed_c1a5;
pub const CORPUS_SIZE: usize = 30;
pub const PHASED: usize = 10;

pub struct Instance {
    pub id: usize,
    pub model: SpinModel,
    pub params: Params,
    pub threshold: f64,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.model.graph().n_vertices()
    }

    pub fn is_real(&self) -> bool {
        self.params.lambda.im == 0.0
    }

    pub fn describe(&self) -> String {
        let (delta, rank) = self.model.graph().degree_and_rank();
        format!(
            "#{:02} n={} |E|={} Δ={} r={} β={} |λ|/λ*={:.3}{}",
            self.id,
            self.n(),
            self.model.graph().n_edges(),
            delta,
            rank,
            self.params.beta,
            self.params.lambda.norm() / self.threshold,
            if self.is_real() { "" } else { " (phased)" }
        )
    }
}

pub fn random_hermitian(dim: usize, rng: &mut impl Rng) -> CMatrix {
    let m = CMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let scale = rng.gen_range(0.5..1.0) / operator_norm(&h);
    h * Complex64::new(scale, 0.0)
}

/// Random multihypergraph with max degree ≤ 3 and rank ≤ `max_rank`.
pub fn random_graph(
    n: usize,
    max_rank: usize,
    target_edges: usize,
    rng: &mut impl Rng,
) -> Multihypergraph {
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    let mut attempts = 0;
    while edges.len() < target_edges && attempts < 500 {
        attempts += 1;
        let card = if max_rank >= 3 && rng.gen_bool(0.3) {
            3
        } else {
            2
        };
        let mut vs: Vec<usize> = Vec::new();
        // grow from an existing vertex to keep the graph mostly connected
        let start = if edges.is_empty() {
            0
        } else {
            rng.gen_range(0..n)
        };
        vs.push(start);
        while vs.len() < card {
            let v = rng.gen_range(0..n);
            if !vs.contains(&v) {
                vs.push(v);
            }
        }
        if vs.iter().all(|&v| degree[v] < 3) {
            for &v in &vs {
                degree[v] += 1;
            }
            edges.push(Edge {
                id: format!("e{}", edges.len()),
                vertices: vs,
            });
        }
    }
    Multihypergraph::new(n, edges).expect("generated graph is valid")
}

pub fn random_model(graph: Multihypergraph, rng: &mut impl Rng) -> SpinModel {
    let d = 2;
    let on_site = (0..graph.n_vertices())
        .map(|_| random_hermitian(d, rng))
        .collect();
    let interactions = graph
        .edges()
        .iter()
        .map(|e| random_hermitian(d.pow(e.vertices.len() as u32), rng))
        .collect();
    SpinModel::new(graph, d, on_site, interactions).expect("valid model")
}

/// The fixed 30-instance corpus.
pub fn corpus() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    let betas = [0.5, 1.0, 2.0];
    (0..CORPUS_SIZE)
        .map(|id| {
            let n = 4 + id % 7;
            let max_rank = if id % 3 == 2 { 3 } else { 2 };
            // every fifth instance is sparse enough for the polymer-representation check
            let target = if id % 5 == 0 {
                rng.gen_range(3..=5)
            } else {
                rng.gen_range(n..=(3 * n / 2))
            };
            let graph = random_graph(n, max_rank, target, &mut rng);
            let model = random_model(graph, &mut rng);
            let beta = betas[rng.gen_range(0..3)];
            let threshold = model_threshold(beta, &model).unwrap();
            let magnitude = threshold * rng.gen_range(0.2..=1.0);
            let lambda = if id % 3 == 1 {
                Complex64::from_polar(magnitude, rng.gen_range(0.0..std::f64::consts::TAU))
            } else {
                Complex64::new(magnitude, 0.0)
            };
            Instance {
                id,
                model,
                params: Params::new(beta, lambda, 1e-2).unwrap(),
                threshold,
            }
        })
        .collect()
}

pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
