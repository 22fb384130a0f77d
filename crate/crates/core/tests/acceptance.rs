//! End-to-end acceptance checks against the exact-diagonalization oracle.
//! Runs as a plain binary and prints one PASS/FAIL line per check.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakspin::expansion::{
    estimate_partition_function, AbstractPolymerModel, ClusterExpansion, SmallGraph,
};
use weakspin::oracle::{
    abstract_polymer_z_direct, exact_partition_function, exact_thermal_distribution, marginal_of,
    polymer_representation_z,
};
use weakspin::sampler::ChainRuleSampler;
use weakspin::weights::{coupling_bound, decay_bound, WeightScheme};
use weakspin::{ursell, Complex64, Params, PartialAssignment};

use common::{corpus, tv_distance, Instance};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

/// Relative error of the estimate at ε = 1e-2 and 1e-3 on every instance.
fn oracle_equivalence(corpus: &[Instance]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for inst in corpus {
        let exact = exact_partition_function(&inst.model, &inst.params).expect("oracle");
        for eps in [1e-2, 1e-3] {
            let est = estimate_partition_function(&inst.model, &inst.params.with_epsilon(eps))
                .expect("estimate");
            let ratio = rel(est.z, exact) / eps;
            worst = worst.max(ratio);
            if ratio > 1.0 {
                failures.push(format!("#{} at eps {eps:e}", inst.id));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} runs, worst |Z^-Z|/(eps|Z|) = {worst:.2e}{}",
            2 * corpus.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failing {failures:?}")
            }
        ),
    )
}

/// `Z(β,0)·Σ_Γ Π w_γ` from exhaustive polymers against the exact `Z`.
fn polymer_representation(corpus: &[Instance]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for inst in corpus.iter().filter(|i| i.model.graph().n_edges() <= 5) {
        let exact = exact_partition_function(&inst.model, &inst.params).expect("oracle");
        let rep = polymer_representation_z(&inst.model, &inst.params).expect("representation");
        worst = worst.max(rel(rep, exact));
        count += 1;
    }
    outcome(
        count > 0 && worst <= 1e-8,
        format!("{count} models with at most 5 edges, worst relative deviation {worst:.2e}"),
    )
}

/// Order used for the decay fit; the series then holds clusters of total
/// size up to `DECAY_ORDER - 1`.
const DECAY_ORDER: usize = 5;

/// Strict-accuracy expansions shared by the weight-bound and decay checks.
fn strict_expansions(
    corpus: &[Instance],
) -> Vec<(usize, Vec<usize>, Vec<Complex64>, Vec<Complex64>)> {
    corpus
        .iter()
        .map(|inst| {
            let ce =
                ClusterExpansion::new(&inst.model, &inst.params, DECAY_ORDER, WeightScheme::Auto)
                    .expect("expansion");
            let empty = PartialAssignment::new();
            let weights = ce.weights(&empty).expect("weights");
            let sizes = ce.polymers().iter().map(|p| p.size()).collect();
            let partials = ce.log_z(&empty).expect("series").partial_sums;
            (inst.id, sizes, weights, partials)
        })
        .collect()
}

fn weight_decay(
    corpus: &[Instance],
    strict: &[(usize, Vec<usize>, Vec<Complex64>, Vec<Complex64>)],
) -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    let mut coupling_violations = 0;
    let mut tightest: f64 = 0.0;
    for (inst, (_, sizes, weights, _)) in corpus.iter().zip(strict) {
        for (&k, w) in sizes.iter().zip(weights) {
            if k > 4 {
                continue;
            }
            checked += 1;
            let bound = decay_bound(&inst.model, k);
            tightest = tightest.max(w.norm() / bound);
            if w.norm() > bound {
                violations += 1;
            }
            if w.norm() > coupling_bound(&inst.model, &inst.params, k) {
                coupling_violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && coupling_violations == 0,
        format!(
            "{checked} polymers, {violations} violations of (e^3 D C(r,2))^-k, \
             {coupling_violations} of the coupling bound, largest |w|/bound {tightest:.2e}"
        ),
    )
}

/// Signed spanning-connected count via partitions into independent sets:
/// `Σ_π (-1)^{|π|-1} (|π|-1)!`.
fn partition_formula(g: &SmallGraph) -> i128 {
    fn rec(g: &SmallGraph, rest: u32, blocks: usize, out: &mut i128) {
        if rest == 0 {
            let mut f: i128 = 1;
            for i in 1..blocks {
                f *= i as i128;
            }
            *out += if blocks % 2 == 1 { f } else { -f };
            return;
        }
        let first = rest.trailing_zeros() as usize;
        let others = rest & !(1 << first);
        // blocks containing `first`: independent subsets of the remaining vertices
        let mut sub = others;
        loop {
            let block = sub | 1 << first;
            let independent = (0..g.n_vertices())
                .filter(|&a| block >> a & 1 == 1)
                .all(|a| {
                    (0..a)
                        .filter(|&b| block >> b & 1 == 1)
                        .all(|b| !g.has_edge(a, b))
                });
            if independent {
                rec(g, rest & !block, blocks + 1, out);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & others;
        }
    }
    let mut out = 0;
    rec(g, (1u32 << g.n_vertices()) - 1, 0, &mut out);
    out
}

fn ursell_correctness() -> Outcome {
    let mut checked = 0;
    let mut mismatches = 0;
    for n in 1..=5usize {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            let g = SmallGraph::from_edges(n, &edges).unwrap();
            if !g.is_connected() {
                continue;
            }
            checked += 1;
            let expected = partition_formula(&g) as f64 / (1..=n).product::<usize>() as f64;
            if (ursell(&g).unwrap() - expected).abs() > 1e-15 {
                mismatches += 1;
            }
        }
    }
    let single = ursell(&SmallGraph::new(1).unwrap()).unwrap();
    let pair = ursell(&SmallGraph::from_edges(2, &[(0, 1)]).unwrap()).unwrap();
    let triangle = ursell(&SmallGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()).unwrap();
    let anchors = single == 1.0 && pair == -0.5 && triangle == 1.0 / 3.0;
    outcome(
        mismatches == 0 && anchors,
        format!(
            "{checked} connected graphs on at most 5 vertices, {mismatches} mismatches; \
             anchors {single}, {pair}, {triangle:.17}"
        ),
    )
}

fn abstract_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xab57_ac7);
    let mut worst: f64 = 0.0;
    let trials = 64;
    for t in 0..trials {
        // every incompatibility pattern on three unit-size polymers, random weights
        let pattern = t % 8;
        let incompatible = move |a: usize, b: usize| {
            let (a, b) = (a.min(b), a.max(b));
            a == b || pattern >> (a + b - 1) & 1 == 1
        };
        let sizes = vec![1; 3];
        let weights: Vec<Complex64> = (0..3)
            .map(|_| {
                Complex64::from_polar(
                    rng.gen_range(0.0..=0.05),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let model = AbstractPolymerModel::new(sizes, weights.clone(), incompatible);
        let series: Complex64 = model.truncated_log(13).expect("series").iter().sum();
        let direct =
            abstract_polymer_z_direct(&weights, |a, b| !incompatible(a, b)).expect("direct");
        worst = worst.max(rel(series.exp(), direct));
    }
    outcome(
        worst <= 1e-8,
        format!("{trials} toy systems, clusters of up to 12 polymers, worst relative deviation {worst:.2e}"),
    )
}

fn sampling(corpus: &[Instance]) -> Outcome {
    let eps = 0.05;
    let chosen: Vec<&Instance> = corpus
        .iter()
        .filter(|i| i.is_real() && i.n() <= 8)
        .take(10)
        .collect();
    let mut worst_tv: f64 = 0.0;
    let mut worst_step: f64 = 0.0;
    let mut steps = 0;
    for inst in &chosen {
        let params = inst.params.with_epsilon(eps);
        let n = inst.n();
        let d = inst.model.local_dim();
        let sampler = ChainRuleSampler::new(&inst.model, &params).expect("sampler");
        let table = sampler.distribution_table().expect("table");
        let exact = exact_thermal_distribution(&inst.model, &params).expect("oracle");
        worst_tv = worst_tv.max(tv_distance(&table, &exact));
        // every node of the prefix tree
        let mut frontier = vec![PartialAssignment::new()];
        for v in 0..n {
            let mut next = Vec::new();
            for prefix in &frontier {
                let law = sampler.conditional(prefix, v).expect("conditional");
                let base = marginal_of(&exact, n, d, prefix);
                for (s, &p) in law.iter().enumerate() {
                    let child = prefix.clone().with(v, s);
                    let truth = marginal_of(&exact, n, d, &child) / base;
                    worst_step = worst_step.max((p - truth).abs() / (truth * eps / n as f64));
                    steps += 1;
                    next.push(child);
                }
            }
            frontier = next;
        }
    }
    outcome(
        chosen.len() == 10 && worst_tv <= eps && worst_step <= 1.0,
        format!(
            "{} models, worst TV {worst_tv:.2e} (eps {eps}), {steps} conditionals, \
             worst |err|/((eps/n) mu) = {worst_step:.2e}",
            chosen.len()
        ),
    )
}

fn zero_coupling(corpus: &[Instance]) -> Outcome {
    let mut worst_z: f64 = 0.0;
    let mut worst_tv: f64 = 0.0;
    for inst in corpus {
        let params = Params::new(inst.params.beta, Complex64::new(0.0, 0.0), 1e-2).unwrap();
        let exact = exact_partition_function(&inst.model, &params).expect("oracle");
        let est = estimate_partition_function(&inst.model, &params).expect("estimate");
        worst_z = worst_z.max(rel(est.z, exact));
        let table = ChainRuleSampler::new(&inst.model, &params)
            .and_then(|s| s.distribution_table())
            .expect("table");
        let truth = exact_thermal_distribution(&inst.model, &params).expect("oracle");
        worst_tv = worst_tv.max(tv_distance(&table, &truth));
    }
    outcome(
        worst_z <= 1e-10 && worst_tv <= 1e-10,
        format!(
            "{} models, worst relative Z error {worst_z:.2e}, worst TV {worst_tv:.2e}",
            corpus.len()
        ),
    )
}

/// Least-squares decay ratio of `|partial_k|` over orders 3 and up. A series
/// that stops (exactly zero terms) counts as ratio 0.
fn fitted_ratio(partials: &[Complex64]) -> f64 {
    let points: Vec<(f64, f64)> = partials
        .iter()
        .enumerate()
        .skip(2)
        .filter(|(_, p)| p.norm() > 0.0)
        .map(|(i, p)| ((i + 1) as f64, p.norm().ln()))
        .collect();
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}

fn geometric_decay(
    corpus: &[Instance],
    strict: &[(usize, Vec<usize>, Vec<Complex64>, Vec<Complex64>)],
) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failing = Vec::new();
    for (inst, (_, _, _, partials)) in corpus.iter().zip(strict) {
        let ratio = fitted_ratio(partials);
        worst = worst.max(ratio);
        if !(ratio <= 0.8) {
            failing.push(inst.id);
        }
    }
    outcome(
        failing.is_empty(),
        format!(
            "{} admissible models, orders 3..{}, worst fitted ratio {worst:.2e}{}",
            corpus.len(),
            DECAY_ORDER - 1,
            if failing.is_empty() {
                String::new()
            } else {
                format!(", failing {failing:?}")
            }
        ),
    )
}

fn report(index: usize, name: &str, start: Instant, o: &Outcome) {
    println!(
        "{} [{index}] {name}: {} ({:.1}s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
}

fn main() -> ExitCode {
    let corpus = corpus();
    let mut all = true;
    let mut run = |index: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        report(index, name, start, &o);
        all &= o.pass;
    };
    run(1, "oracle equivalence", &mut || oracle_equivalence(&corpus));
    run(2, "polymer representation", &mut || {
        polymer_representation(&corpus)
    });
    let start = Instant::now();
    let strict = strict_expansions(&corpus);
    println!(
        "     strict-accuracy weights shared by checks [3] and [8] ({:.1}s)",
        start.elapsed().as_secs_f64()
    );
    run(3, "weight decay", &mut || weight_decay(&corpus, &strict));
    run(4, "ursell function", &mut ursell_correctness);
    run(5, "abstract polymer round trip", &mut abstract_round_trip);
    run(6, "sampling", &mut || sampling(&corpus));
    run(7, "zero coupling", &mut || zero_coupling(&corpus));
    run(8, "geometric decay", &mut || {
        geometric_decay(&corpus, &strict)
    });
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
