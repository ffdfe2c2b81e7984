//! Scalar values and column types.

use alloc::string::String;
use alloc::sync::Arc;
use core::cmp::Ordering;
use core::fmt;
use core::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Declared type of a relation column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Int64,
    Float64,
    #[serde(rename = "string")]
    Utf8,
    Bool,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Int64 => "int64",
            ColumnType::Float64 => "float64",
            ColumnType::Utf8 => "string",
            ColumnType::Bool => "bool",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Int64 | ColumnType::Float64)
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single typed value. `Null` belongs to every column type.
///
/// The derived `Ord` is a total order used only for canonical sorting and as
/// a map key (null < bool < int < float < string, floats by `total_cmp`).
/// Predicate comparisons go through [`ScalarValue::try_cmp`], which refuses
/// to compare across types.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Arc<str>),
}

/// Raised when two values of different types are compared.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot compare {left} with {right}")]
pub struct CrossTypeComparison {
    pub left: &'static str,
    pub right: &'static str,
}

impl ScalarValue {
    pub fn str(s: &str) -> Self {
        ScalarValue::Str(Arc::from(s))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, ScalarValue::Null)
    }

    /// Type of a non-null value.
    pub fn column_type(&self) -> Option<ColumnType> {
        match self {
            ScalarValue::Null => None,
            ScalarValue::Bool(_) => Some(ColumnType::Bool),
            ScalarValue::Int(_) => Some(ColumnType::Int64),
            ScalarValue::Float(_) => Some(ColumnType::Float64),
            ScalarValue::Str(_) => Some(ColumnType::Utf8),
        }
    }

    pub fn type_name(&self) -> &'static str {
        self.column_type().map_or("null", ColumnType::name)
    }

    /// True if the value may be stored in a column of type `ty`.
    pub fn fits(&self, ty: ColumnType) -> bool {
        self.column_type().is_none_or(|t| t == ty)
    }

    /// Same-type comparison. Nulls and mixed types are errors.
    pub fn try_cmp(&self, other: &ScalarValue) -> Result<Ordering, CrossTypeComparison> {
        match (self, other) {
            (ScalarValue::Bool(a), ScalarValue::Bool(b)) => Ok(a.cmp(b)),
            (ScalarValue::Int(a), ScalarValue::Int(b)) => Ok(a.cmp(b)),
            (ScalarValue::Float(a), ScalarValue::Float(b)) => Ok(a.total_cmp(b)),
            (ScalarValue::Str(a), ScalarValue::Str(b)) => Ok(a.cmp(b)),
            _ => Err(CrossTypeComparison {
                left: self.type_name(),
                right: other.type_name(),
            }),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ScalarValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            ScalarValue::Float(v) => Some(*v),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            ScalarValue::Null => 0,
            ScalarValue::Bool(_) => 1,
            ScalarValue::Int(_) => 2,
            ScalarValue::Float(_) => 3,
            ScalarValue::Str(_) => 4,
        }
    }
}

impl PartialEq for ScalarValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ScalarValue {}

impl PartialOrd for ScalarValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScalarValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.try_cmp(other) {
            Ok(ord) => ord,
            Err(_) => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for ScalarValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            ScalarValue::Null => {}
            ScalarValue::Bool(v) => v.hash(state),
            ScalarValue::Int(v) => v.hash(state),
            ScalarValue::Float(v) => v.to_bits().hash(state),
            ScalarValue::Str(v) => v.hash(state),
        }
    }
}

impl fmt::Display for ScalarValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarValue::Null => f.write_str("null"),
            ScalarValue::Bool(v) => write!(f, "{v}"),
            ScalarValue::Int(v) => write!(f, "{v}"),
            ScalarValue::Float(v) => write!(f, "{v:?}"),
            ScalarValue::Str(v) => write!(f, "'{v}'"),
        }
    }
}

impl From<i64> for ScalarValue {
    fn from(v: i64) -> Self {
        ScalarValue::Int(v)
    }
}

impl From<f64> for ScalarValue {
    fn from(v: f64) -> Self {
        ScalarValue::Float(v)
    }
}

impl From<bool> for ScalarValue {
    fn from(v: bool) -> Self {
        ScalarValue::Bool(v)
    }
}

impl From<&str> for ScalarValue {
    fn from(v: &str) -> Self {
        ScalarValue::str(v)
    }
}

impl From<String> for ScalarValue {
    fn from(v: String) -> Self {
        ScalarValue::Str(Arc::from(v))
    }
}
