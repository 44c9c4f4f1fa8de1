//! Scalar values, column types, and the version/time newtypes shared by
//! every layer of the engine.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Column type of a stored or derived column.
///
/// `Vector` never appears in `CREATE TABLE`; it is the output type of
/// embedding operators and only exists in derived row sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColumnType {
    Int64,
    Float64,
    Text,
    Bool,
    Vector,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Int64 => "int64",
            ColumnType::Float64 => "float64",
            ColumnType::Text => "text",
            ColumnType::Bool => "bool",
            ColumnType::Vector => "vector",
        }
    }

    /// Numeric types compare and combine with each other.
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Int64 | ColumnType::Float64)
    }

    pub fn parse(s: &str) -> Option<ColumnType> {
        match s.to_ascii_lowercase().as_str() {
            "int64" | "int" | "bigint" => Some(ColumnType::Int64),
            "float64" | "float" | "double" => Some(ColumnType::Float64),
            "text" | "string" | "varchar" => Some(ColumnType::Text),
            "bool" | "boolean" => Some(ColumnType::Bool),
            _ => None,
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single scalar value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Int64(i64),
    Float64(f64),
    Text(String),
    Bool(bool),
    /// Embedding output; unit-norm f32 vector.
    Vector(Vec<f32>),
}

impl Value {
    pub fn column_type(&self) -> ColumnType {
        match self {
            Value::Int64(_) => ColumnType::Int64,
            Value::Float64(_) => ColumnType::Float64,
            Value::Text(_) => ColumnType::Text,
            Value::Bool(_) => ColumnType::Bool,
            Value::Vector(_) => ColumnType::Vector,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int64(v) => Some(*v as f64),
            Value::Float64(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Byte encoding used for deterministic ordering, grouping, and hashing.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Value::Int64(v) => {
                out.push(0);
                out.extend_from_slice(&v.to_be_bytes());
            }
            Value::Float64(v) => {
                out.push(1);
                out.extend_from_slice(&v.to_bits().to_be_bytes());
            }
            Value::Text(s) => {
                out.push(2);
                out.extend_from_slice(&(s.len() as u64).to_be_bytes());
                out.extend_from_slice(s.as_bytes());
            }
            Value::Bool(b) => {
                out.push(3);
                out.push(*b as u8);
            }
            Value::Vector(v) => {
                out.push(4);
                out.extend_from_slice(&(v.len() as u64).to_be_bytes());
                for x in v {
                    out.extend_from_slice(&x.to_bits().to_be_bytes());
                }
            }
        }
    }

    /// Total order over same-type values; cross-type numeric pairs compare
    /// as f64. Used by Sort and by deterministic tie-breaking.
    pub fn cmp_total(&self, other: &Value) -> std::cmp::Ordering {
        match (self, other) {
            (Value::Int64(a), Value::Int64(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                _ => {
                    let (mut ea, mut eb) = (Vec::new(), Vec::new());
                    a.encode_into(&mut ea);
                    b.encode_into(&mut eb);
                    ea.cmp(&eb)
                }
            },
        }
    }

    /// Approximate in-memory width in bytes, for cache sizing.
    pub fn width_bytes(&self) -> usize {
        match self {
            Value::Int64(_) | Value::Float64(_) => 8,
            Value::Bool(_) => 1,
            Value::Text(s) => s.len(),
            Value::Vector(v) => 4 * v.len(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int64(v) => write!(f, "{v}"),
            Value::Float64(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Vector(v) => {
                write!(f, "[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    if i == 4 && v.len() > 5 {
                        write!(f, "… {} dims]", v.len())?;
                        return Ok(());
                    }
                    write!(f, "{x:.4}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Identifier of a registered table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TableId(pub u32);

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Global commit version of the database instance. Strictly increases on
/// every committed write batch and is never reused.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct SnapshotVersion(pub u64);

impl SnapshotVersion {
    pub const ZERO: SnapshotVersion = SnapshotVersion(0);

    pub fn next(self) -> SnapshotVersion {
        SnapshotVersion(self.0 + 1)
    }
}

impl fmt::Display for SnapshotVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Simulated time in milliseconds. Virtual-time execution advances this
/// clock deterministically; it never reads the wall clock.
pub type SimMs = f64;

/// A model's registered (name, version) pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelVersion {
    pub name: String,
    pub version: u32,
}

impl fmt::Display for ModelVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

/// 128-bit FNV-1a, the content hash behind plan fingerprints and cache keys.
pub fn fnv128(bytes: &[u8]) -> u128 {
    const OFFSET: u128 = 0x6c62272e07bb014262b821756295c58d;
    const PRIME: u128 = 0x0000000001000000000000000000013b;
    let mut h = OFFSET;
    for &b in bytes {
        h ^= b as u128;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// 64-bit FNV-1a, used for feature hashing and seed derivation.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives an independent RNG seed from a base seed and a purpose tag.
/// Keeps per-site randomness stable under call-order changes.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut bytes = Vec::with_capacity(tag.len() + 16);
    bytes.extend_from_slice(&base.to_be_bytes());
    bytes.extend_from_slice(tag.as_bytes());
    bytes.extend_from_slice(&index.to_be_bytes());
    fnv64(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_encoding_distinguishes_types() {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        Value::Int64(1).encode_into(&mut a);
        Value::Bool(true).encode_into(&mut b);
        assert_ne!(a, b);
    }

    #[test]
    fn numeric_cross_type_comparison() {
        assert_eq!(
            Value::Int64(2).cmp_total(&Value::Float64(2.5)),
            std::cmp::Ordering::Less
        );
    }

    #[test]
    fn fnv128_is_stable() {
        assert_eq!(fnv128(b"abc"), fnv128(b"abc"));
        assert_ne!(fnv128(b"abc"), fnv128(b"abd"));
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_ne!(derive_seed(7, "gen", 0), derive_seed(7, "noise", 0));
    }
}
