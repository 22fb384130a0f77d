//! JSON model files.
//!
//! ```json
//! {"d": 2, "n_vertices": 2,
//!  "edges": [{"id": "a", "vertices": [0, 1]}],
//!  "on_site": {"0": [[1,0],[0,0],[0,0],[-1,0]]},
//!  "interactions": {"a": [[0,0],[0,0],[0,0],[1,0], ...]}}
//! ```
//!
//! Matrices are row-major arrays of `[re, im]` pairs (a flat list, or a list
//! of rows). On-site entries left out default to the zero matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use weakspin::{CMatrix, Complex64, Edge, Multihypergraph, SpinModel};

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("graph: {0}")]
    Graph(#[from] weakspin::GraphError),
    #[error("model: {0}")]
    Model(#[from] weakspin::ModelError),
}

fn field(field: impl Into<String>, message: impl Into<String>) -> ModelFileError {
    ModelFileError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub d: usize,
    pub n_vertices: usize,
    pub edges: Vec<EdgeEntry>,
    #[serde(default)]
    pub on_site: BTreeMap<String, MatrixEntry>,
    #[serde(default)]
    pub interactions: BTreeMap<String, MatrixEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub id: String,
    pub vertices: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixEntry {
    Flat(Vec<[f64; 2]>),
    Rows(Vec<Vec<[f64; 2]>>),
}

impl MatrixEntry {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut flat = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                flat.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        MatrixEntry::Flat(flat)
    }

    fn to_matrix(&self, dim: usize, name: &str) -> Result<CMatrix, ModelFileError> {
        let flat: Vec<[f64; 2]> = match self {
            MatrixEntry::Flat(v) => v.clone(),
            MatrixEntry::Rows(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(field(name, format!("expected {dim} rows of {dim} entries")));
                }
                rows.concat()
            }
        };
        if flat.len() != dim * dim {
            return Err(field(
                name,
                format!(
                    "expected {} entries for a {dim}x{dim} matrix, got {}",
                    dim * dim,
                    flat.len()
                ),
            ));
        }
        Ok(CMatrix::from_fn(dim, dim, |i, j| {
            let [re, im] = flat[i * dim + j];
            Complex64::new(re, im)
        }))
    }
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, ModelFileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_model(model: &SpinModel) -> Self {
        let g = model.graph();
        Self {
            d: model.local_dim(),
            n_vertices: g.n_vertices(),
            edges: g
                .edges()
                .iter()
                .map(|e| EdgeEntry {
                    id: e.id.clone(),
                    vertices: e.vertices.clone(),
                })
                .collect(),
            on_site: (0..g.n_vertices())
                .map(|v| (v.to_string(), MatrixEntry::from_matrix(model.on_site(v))))
                .collect(),
            interactions: g
                .edges()
                .iter()
                .enumerate()
                .map(|(i, e)| (e.id.clone(), MatrixEntry::from_matrix(model.interaction(i))))
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<SpinModel, ModelFileError> {
        if self.d < 2 {
            return Err(field(
                "d",
                format!("local dimension must be at least 2, got {}", self.d),
            ));
        }
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge {
                id: e.id.clone(),
                vertices: e.vertices.clone(),
            })
            .collect();
        let graph = Multihypergraph::new(self.n_vertices, edges)?;
        let mut on_site = vec![CMatrix::zeros(self.d, self.d); self.n_vertices];
        for (key, entry) in &self.on_site {
            let name = format!("on_site[\"{key}\"]");
            let v: usize = key
                .parse()
                .map_err(|_| field(&name, "key must be a vertex index"))?;
            if v >= self.n_vertices {
                return Err(field(
                    &name,
                    format!("vertex out of range (n_vertices = {})", self.n_vertices),
                ));
            }
            on_site[v] = entry.to_matrix(self.d, &name)?;
        }
        for key in self.interactions.keys() {
            if graph.edge_index(key).is_none() {
                return Err(field(
                    format!("interactions[\"{key}\"]"),
                    "no edge with this id",
                ));
            }
        }
        let mut interactions = Vec::with_capacity(graph.n_edges());
        for edge in graph.edges() {
            let name = format!("interactions[\"{}\"]", edge.id);
            let entry = self
                .interactions
                .get(&edge.id)
                .ok_or_else(|| field(&name, "missing interaction for edge"))?;
            let dim = self.d.pow(edge.vertices.len() as u32);
            interactions.push(entry.to_matrix(dim, &name)?);
        }
        Ok(SpinModel::new(graph, self.d, on_site, interactions)?)
    }
}
