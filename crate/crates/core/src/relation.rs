//! Immutable column-oriented relations.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::value::{ColumnType, ScalarValue};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Field {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Field { name: name.into(), ty }
    }
}

/// Ordered list of uniquely named, typed columns.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    fields: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelationError {
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column `{column}` has {actual} values, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        actual: usize,
    },
    #[error("column `{column}` row {row}: value of type {actual} in {expected} column")]
    TypeMismatch {
        column: String,
        row: usize,
        expected: ColumnType,
        actual: &'static str,
    },
    #[error("schema has {expected} columns, got {actual}")]
    ArityMismatch { expected: usize, actual: usize },
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Result<Self, RelationError> {
        for (i, f) in fields.iter().enumerate() {
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(RelationError::DuplicateColumn(f.name.clone()));
            }
        }
        Ok(Schema { fields })
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }
}

/// A named table. Columns are stored as value vectors of equal length and
/// every non-null value matches its column's declared type.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    name: String,
    schema: Schema,
    columns: Vec<Vec<ScalarValue>>,
    row_count: usize,
}

pub type Database = BTreeMap<String, Relation>;

impl Relation {
    pub fn new(
        name: impl Into<String>,
        schema: Schema,
        columns: Vec<Vec<ScalarValue>>,
    ) -> Result<Self, RelationError> {
        if columns.len() != schema.len() {
            return Err(RelationError::ArityMismatch {
                expected: schema.len(),
                actual: columns.len(),
            });
        }
        let row_count = columns.first().map_or(0, Vec::len);
        for (field, col) in schema.fields().iter().zip(&columns) {
            if col.len() != row_count {
                return Err(RelationError::LengthMismatch {
                    column: field.name.clone(),
                    expected: row_count,
                    actual: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.fits(field.ty)) {
                return Err(RelationError::TypeMismatch {
                    column: field.name.clone(),
                    row,
                    expected: field.ty,
                    actual: col[row].type_name(),
                });
            }
        }
        Ok(Relation {
            name: name.into(),
            schema,
            columns,
            row_count,
        })
    }

    pub fn empty(name: impl Into<String>, schema: Schema) -> Self {
        let columns = schema.fields().iter().map(|_| Vec::new()).collect();
        Relation {
            name: name.into(),
            schema,
            columns,
            row_count: 0,
        }
    }

    pub fn from_rows(
        name: impl Into<String>,
        schema: Schema,
        rows: Vec<Vec<ScalarValue>>,
    ) -> Result<Self, RelationError> {
        let mut columns: Vec<Vec<ScalarValue>> =
            schema.fields().iter().map(|_| Vec::with_capacity(rows.len())).collect();
        for row in rows {
            if row.len() != schema.len() {
                return Err(RelationError::ArityMismatch {
                    expected: schema.len(),
                    actual: row.len(),
                });
            }
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Relation::new(name, schema, columns)
    }

    /// Internal constructor for operator outputs whose invariants hold by construction.
    pub(crate) fn from_parts(name: String, schema: Schema, columns: Vec<Vec<ScalarValue>>, row_count: usize) -> Self {
        debug_assert!(columns.iter().all(|c| c.len() == row_count));
        Relation {
            name,
            schema,
            columns,
            row_count,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Vec<ScalarValue>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[ScalarValue]> {
        self.schema.index_of(name).map(|i| self.columns[i].as_slice())
    }

    pub fn value(&self, row: usize, col: usize) -> &ScalarValue {
        &self.columns[col][row]
    }

    pub fn row(&self, row: usize) -> Vec<ScalarValue> {
        self.columns.iter().map(|c| c[row].clone()).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<ScalarValue>> + '_ {
        (0..self.row_count).map(|r| self.row(r))
    }

    /// Rows at `indices`, in that order.
    pub fn take(&self, indices: &[usize]) -> Relation {
        let columns = self
            .columns
            .iter()
            .map(|c| indices.iter().map(|&i| c[i].clone()).collect())
            .collect();
        Relation::from_parts(self.name.clone(), self.schema.clone(), columns, indices.len())
    }

    pub fn compare_rows(&self, a: usize, b: usize) -> Ordering {
        for col in &self.columns {
            match col[a].cmp(&col[b]) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }

    /// Rows sorted by the full tuple under the total value order.
    pub fn canonicalize(&self) -> Relation {
        let mut order: Vec<usize> = (0..self.row_count).collect();
        order.sort_by(|&a, &b| self.compare_rows(a, b));
        self.take(&order)
    }

    pub fn is_canonical(&self) -> bool {
        (1..self.row_count).all(|r| self.compare_rows(r - 1, r) != Ordering::Greater)
    }

    /// Compares schema and rows, ignoring the relation name. Float cells may
    /// differ by `float_rel_tol` relative to the larger magnitude.
    pub fn same_contents(&self, other: &Relation, float_rel_tol: f64) -> bool {
        if self.schema != other.schema || self.row_count != other.row_count {
            return false;
        }
        self.columns.iter().zip(&other.columns).all(|(a, b)| {
            a.iter().zip(b).all(|(x, y)| match (x, y) {
                (ScalarValue::Float(x), ScalarValue::Float(y)) => floats_close(*x, *y, float_rel_tol),
                _ => x == y,
            })
        })
    }

    pub fn describe(&self) -> String {
        let cols: Vec<String> = self.schema.fields().iter().map(|f| f.name.to_string()).collect();
        alloc::format!("{}({}) [{} rows]", self.name, cols.join(", "), self.row_count)
    }
}

pub fn floats_close(a: f64, b: f64, rel_tol: f64) -> bool {
    if a == b || (a.is_nan() && b.is_nan()) {
        return true;
    }
    let scale = libm::fmax(libm::fabs(a), libm::fabs(b));
    libm::fabs(a - b) <= rel_tol * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn schema() -> Schema {
        Schema::new(vec![Field::new("id", ColumnType::Int64), Field::new("name", ColumnType::Utf8)]).unwrap()
    }

    #[test]
    fn rejects_duplicate_columns() {
        let err = Schema::new(vec![Field::new("a", ColumnType::Int64), Field::new("a", ColumnType::Bool)]);
        assert_eq!(err, Err(RelationError::DuplicateColumn("a".into())));
    }

    #[test]
    fn rejects_ragged_and_mistyped_columns() {
        let ragged = Relation::new("t", schema(), vec![vec![1i64.into()], vec![]]);
        assert!(matches!(ragged, Err(RelationError::LengthMismatch { .. })));
        let typed = Relation::new("t", schema(), vec![vec!["x".into()], vec!["y".into()]]);
        assert!(matches!(typed, Err(RelationError::TypeMismatch { row: 0, .. })));
    }

    #[test]
    fn canonicalize_sorts_full_tuples() {
        let rel = Relation::from_rows(
            "t",
            schema(),
            vec![
                vec![2i64.into(), "b".into()],
                vec![1i64.into(), "z".into()],
                vec![2i64.into(), "a".into()],
                vec![ScalarValue::Null, "q".into()],
            ],
        )
        .unwrap();
        let c = rel.canonicalize();
        assert!(c.is_canonical());
        assert_eq!(c.row(0), vec![ScalarValue::Null, "q".into()]);
        assert_eq!(c.row(3), vec![2i64.into(), "b".into()]);
    }

    #[test]
    fn float_tolerance_is_relative() {
        assert!(floats_close(1e9, 1e9 + 0.5, 1e-9));
        assert!(!floats_close(1.0, 1.0 + 1e-6, 1e-9));
        assert!(!floats_close(0.0, 1e-300, 1e-9));
    }
}
