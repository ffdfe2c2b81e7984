//! Exact column statistics from a full scan.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::relation::Relation;
use crate::value::{ColumnType, ScalarValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub distinct_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<ScalarValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<ScalarValue>,
    pub null_count: u64,
    /// Average encoded width of a non-null value in bytes.
    pub width_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub row_count: u64,
    pub columns: BTreeMap<String, ColumnStats>,
}

pub type DatabaseStats = BTreeMap<String, TableStats>;

/// Fixed width of a value of type `ty`; strings report their length prefix only.
pub fn nominal_width(ty: ColumnType) -> f64 {
    match ty {
        ColumnType::Int64 | ColumnType::Float64 => 8.0,
        ColumnType::Bool => 1.0,
        ColumnType::Utf8 => 4.0,
    }
}

fn encoded_width(v: &ScalarValue) -> usize {
    match v {
        ScalarValue::Null => 0,
        ScalarValue::Bool(_) => 1,
        ScalarValue::Int(_) | ScalarValue::Float(_) => 8,
        ScalarValue::Str(s) => 4 + s.len(),
    }
}

pub fn compute_stats(rel: &Relation) -> BTreeMap<String, ColumnStats> {
    rel.schema()
        .fields()
        .iter()
        .zip(rel.columns())
        .map(|(field, values)| {
            let mut distinct = BTreeSet::new();
            let mut nulls = 0u64;
            let mut width = 0usize;
            for v in values {
                if v.is_null() {
                    nulls += 1;
                } else {
                    width += encoded_width(v);
                    distinct.insert(v);
                }
            }
            let non_null = values.len() as u64 - nulls;
            let stats = ColumnStats {
                distinct_count: distinct.len() as u64,
                min: distinct.first().map(|v| (*v).clone()),
                max: distinct.last().map(|v| (*v).clone()),
                null_count: nulls,
                width_bytes: if non_null == 0 {
                    nominal_width(field.ty)
                } else {
                    width as f64 / non_null as f64
                },
            };
            (field.name.clone(), stats)
        })
        .collect()
}

pub fn table_stats(rel: &Relation) -> TableStats {
    TableStats {
        row_count: rel.row_count() as u64,
        columns: compute_stats(rel),
    }
}

pub fn database_stats<'a>(relations: impl IntoIterator<Item = &'a Relation>) -> DatabaseStats {
    relations
        .into_iter()
        .map(|r| (String::from(r.name()), table_stats(r)))
        .collect()
}
