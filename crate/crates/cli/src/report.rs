//! Machine-readable command output. Floats are written with 17 significant
//! digits.

use std::fmt;

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use weakspin::Complex64;

/// An `f64` serialized as `d.dddddddddddddddde±x`; non-finite values become
/// `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw =
            RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Real(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.16e}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub re: Real,
    pub im: Real,
}

impl From<Complex64> for Complex {
    fn from(z: Complex64) -> Self {
        Self {
            re: Real(z.re),
            im: Real(z.im),
        }
    }
}

impl From<Complex> for Complex64 {
    fn from(z: Complex) -> Self {
        Complex64::new(z.re.0, z.im.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutput {
    pub passed: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionOutput {
    pub admissible: bool,
    pub threshold: Real,
    pub lambda: Complex,
    pub beta: Real,
    pub epsilon: Real,
    pub truncation_order: usize,
    pub polymer_count: usize,
    pub cluster_count: usize,
    pub log_z0: Complex,
    pub cluster_sum: Complex,
    pub log_z: Complex,
    pub z: Complex,
    pub partial_sums: Vec<Complex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOutput {
    pub admissible: bool,
    pub epsilon: Real,
    pub z_estimate: Complex,
    pub z_exact: Complex,
    pub relative_error: Real,
    /// `None` for complex couplings.
    pub tv_distance: Option<Real>,
    pub pass: bool,
}

/// Footer line closing a sample stream.
pub fn sample_footer(seed: u64, queries: usize, samples: usize) -> String {
    format!("# seed={seed} samples={samples} queries={queries}")
}

/// Parses [`sample_footer`] output back into `(seed, samples, queries)`.
pub fn parse_sample_footer(line: &str) -> Option<(u64, usize, usize)> {
    let rest = line.strip_prefix("# ")?;
    let mut seed = None;
    let mut samples = None;
    let mut queries = None;
    for part in rest.split_whitespace() {
        let (k, v) = part.split_once('=')?;
        match k {
            "seed" => seed = v.parse().ok(),
            "samples" => samples = v.parse().ok(),
            "queries" => queries = v.parse().ok(),
            _ => return None,
        }
    }
    Some((seed?, samples?, queries?))
}
