//! Partition functions and thermal sampling for weakly-interacting quantum
//! spin systems on bounded-degree, bounded-rank multihypergraphs.
//!
//! The partition function `Z = Tr[e^{-β(H_Φ + λH_Ψ)}]` (normalized so that
//! `Tr(𝕀) = 1`) is rewritten as an abstract polymer model whose polymers are
//! connected edge subsets. The truncated cluster expansion of `log Z` then
//! gives a deterministic relative-error approximation when `|λ|` is below
//! the weak-interaction threshold, and chaining approximate marginals gives
//! an approximate sampler for the diagonal of the thermal state.
//!
//! ```
//! use weakspin::expansion::estimate_partition_function;
//! use weakspin::model::pauli;
//! use weakspin::oracle::exact_partition_function;
//! use weakspin::{Complex64, Multihypergraph, Params, SpinModel};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let graph = Multihypergraph::from_vertex_lists(3, &[&[0, 1], &[1, 2]])?;
//! let field = pauli::x() * Complex64::new(0.5, 0.0);
//! let zz = pauli::kron(&pauli::z(), &pauli::z());
//! let model = SpinModel::uniform(graph, 2, &field, &zz)?;
//! let params = Params::real(1.0, 1e-4, 1e-3)?;
//! let estimate = estimate_partition_function(&model, &params)?;
//! let exact = exact_partition_function(&model, &params)?;
//! assert!((estimate.z - exact).norm() <= 1e-3 * exact.norm());
//! # Ok(())
//! # }
//! ```

mod connected;
pub mod expansion;
pub mod hypergraph;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod sampler;
pub mod weights;

pub use expansion::{
    choose_truncation_order, estimate_partition_function, truncated_log_z, ursell, Cluster,
    ExpansionConfig, ExpansionError, ExpansionReport,
};
pub use hypergraph::{are_compatible, Edge, GraphError, Multihypergraph, Polymer};
pub use linalg::{LinalgError, PartialAssignment, SquareMatrix};
pub use model::{
    check_admissible, validate_model, weak_interaction_threshold, CMatrix, ModelError, Params,
    SpinModel, ValidationReport,
};
pub use num_complex::Complex64;
