//! Brute-force SPJA evaluation. Every physical plan is checked against this.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::plan::{AggFunc, Aggregate, CmpOp, JoinKey, Operand, PlanNode, Predicate};
use crate::relation::{Database, Field, Relation, Schema};
use crate::value::{ColumnType, ScalarValue};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("choice `{0}` is not bound")]
    UnboundChoice(String),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate output column `{0}`")]
    DuplicateColumn(String),
    #[error("slot input was not supplied")]
    MissingSlot,
    #[error("subplan alternatives of `{0}` produce different schemas")]
    AlternativeSchemas(String),
}

fn column_index(schema: &Schema, name: &str) -> Result<usize, EvalError> {
    schema.index_of(name).ok_or_else(|| EvalError::UnknownColumn(name.to_string()))
}

/// Output type of an aggregate over a column of type `input` (`None` for `count(*)`).
pub fn aggregate_type(agg: &Aggregate, input: Option<ColumnType>) -> Result<ColumnType, EvalError> {
    match (agg.func, input) {
        (AggFunc::Count, _) => Ok(ColumnType::Int64),
        (_, None) => Err(EvalError::TypeError(format!("{:?} needs a column", agg.func))),
        (AggFunc::Sum, Some(t)) if t.is_numeric() => Ok(t),
        (AggFunc::Avg, Some(t)) if t.is_numeric() => Ok(ColumnType::Float64),
        (AggFunc::Min | AggFunc::Max, Some(t)) => Ok(t),
        (f, Some(t)) => Err(EvalError::TypeError(format!("{f:?} over {t} column"))),
    }
}

fn join_schema(left: &Schema, right: &Schema, on: &[JoinKey]) -> Result<(Schema, Vec<usize>), EvalError> {
    let mut fields: Vec<Field> = left.fields().to_vec();
    let mut keep = Vec::new();
    for k in on {
        let l = left.field(&k.left).ok_or_else(|| EvalError::UnknownColumn(k.left.clone()))?;
        let r = right.field(&k.right).ok_or_else(|| EvalError::UnknownColumn(k.right.clone()))?;
        if l.ty != r.ty {
            return Err(EvalError::TypeError(format!(
                "join key {} ({}) vs {} ({})",
                k.left, l.ty, k.right, r.ty
            )));
        }
    }
    for (i, f) in right.fields().iter().enumerate() {
        let merged_key = on.iter().any(|k| k.right == f.name && k.left == f.name);
        if merged_key {
            continue;
        }
        if fields.iter().any(|g| g.name == f.name) {
            return Err(EvalError::DuplicateColumn(f.name.clone()));
        }
        fields.push(f.clone());
        keep.push(i);
    }
    let schema = Schema::new(fields).map_err(|e| EvalError::TypeError(e.to_string()))?;
    Ok((schema, keep))
}

fn group_schema(input: &Schema, keys: &[String], aggs: &[Aggregate]) -> Result<Schema, EvalError> {
    let mut fields = Vec::new();
    for k in keys {
        let f = input.field(k).ok_or_else(|| EvalError::UnknownColumn(k.clone()))?;
        fields.push(f.clone());
    }
    for a in aggs {
        let ty = match &a.column {
            Some(c) => Some(input.field(c).ok_or_else(|| EvalError::UnknownColumn(c.clone()))?.ty),
            None => None,
        };
        fields.push(Field::new(a.alias.clone(), aggregate_type(a, ty)?));
    }
    Schema::new(fields).map_err(|e| match e {
        crate::relation::RelationError::DuplicateColumn(c) => EvalError::DuplicateColumn(c),
        other => EvalError::TypeError(other.to_string()),
    })
}

fn project_schema(input: &Schema, columns: &[String]) -> Result<(Schema, Vec<usize>), EvalError> {
    let mut idx = Vec::new();
    let mut fields = Vec::new();
    for c in columns {
        let i = column_index(input, c)?;
        if idx.contains(&i) {
            return Err(EvalError::DuplicateColumn(c.clone()));
        }
        idx.push(i);
        fields.push(input.fields()[i].clone());
    }
    Ok((Schema::new(fields).expect("projected names are unique"), idx))
}

fn check_predicate_columns(schema: &Schema, p: &Predicate) -> Result<(), EvalError> {
    for c in p.columns() {
        column_index(schema, c)?;
    }
    Ok(())
}

/// Output schema of `plan` without evaluating it. Choice operands are not
/// type-checked here; subplan alternatives must agree on their schema.
pub fn plan_schema(
    plan: &PlanNode,
    catalog: &BTreeMap<String, Schema>,
    slot: Option<&Schema>,
) -> Result<Schema, EvalError> {
    match plan {
        PlanNode::Scan { relation } => catalog
            .get(relation)
            .cloned()
            .ok_or_else(|| EvalError::UnknownRelation(relation.clone())),
        PlanNode::Slot => slot.cloned().ok_or(EvalError::MissingSlot),
        PlanNode::Filter { input, predicate } => {
            let s = plan_schema(input, catalog, slot)?;
            check_predicate_columns(&s, predicate)?;
            Ok(s)
        }
        PlanNode::Project { input, columns } => Ok(project_schema(&plan_schema(input, catalog, slot)?, columns)?.0),
        PlanNode::GroupByAgg { input, keys, aggregates } => {
            group_schema(&plan_schema(input, catalog, slot)?, keys, aggregates)
        }
        PlanNode::Join { left, right, on, .. } => Ok(join_schema(
            &plan_schema(left, catalog, slot)?,
            &plan_schema(right, catalog, slot)?,
            on,
        )?
        .0),
        PlanNode::Choice(c) => {
            let alts = match &c.domain {
                crate::plan::ChoiceDomain::Subplans(a) if !a.is_empty() => a,
                _ => return Err(EvalError::AlternativeSchemas(c.choice_id.clone())),
            };
            let first = plan_schema(&alts[0], catalog, slot)?;
            for a in &alts[1..] {
                if plan_schema(a, catalog, slot)? != first {
                    return Err(EvalError::AlternativeSchemas(c.choice_id.clone()));
                }
            }
            Ok(first)
        }
    }
}

enum Compiled {
    Cmp { col: usize, op: CmpOp, value: ScalarValue },
    Between { col: usize, low: ScalarValue, high: ScalarValue },
    Never,
}

fn literal(op: &Operand) -> Result<&ScalarValue, EvalError> {
    match op {
        Operand::Literal(v) => Ok(v),
        Operand::Choice(c) => Err(EvalError::UnboundChoice(c.choice_id.clone())),
    }
}

fn check_type(schema: &Schema, col: usize, v: &ScalarValue) -> Result<(), EvalError> {
    let f = &schema.fields()[col];
    if v.fits(f.ty) {
        Ok(())
    } else {
        Err(EvalError::TypeError(format!(
            "column {} ({}) compared with {}",
            f.name,
            f.ty,
            v.type_name()
        )))
    }
}

fn compile(schema: &Schema, p: &Predicate) -> Result<Vec<Compiled>, EvalError> {
    let mut out = Vec::new();
    for c in p.conjuncts() {
        out.push(match c {
            Predicate::Cmp { column, op, value } => {
                let col = column_index(schema, column)?;
                let v = literal(value)?;
                check_type(schema, col, v)?;
                if v.is_null() {
                    Compiled::Never
                } else {
                    Compiled::Cmp {
                        col,
                        op: *op,
                        value: v.clone(),
                    }
                }
            }
            Predicate::Between { column, low, high } => {
                let col = column_index(schema, column)?;
                let (lo, hi) = (literal(low)?, literal(high)?);
                check_type(schema, col, lo)?;
                check_type(schema, col, hi)?;
                if lo.is_null() || hi.is_null() {
                    Compiled::Never
                } else {
                    Compiled::Between {
                        col,
                        low: lo.clone(),
                        high: hi.clone(),
                    }
                }
            }
            Predicate::And(_) => unreachable!("conjuncts are flattened"),
        });
    }
    Ok(out)
}

fn holds(v: &ScalarValue, p: &Compiled) -> bool {
    match p {
        Compiled::Never => false,
        Compiled::Cmp { op, value, .. } => !v.is_null() && v.try_cmp(value).is_ok_and(|o| op.holds(o)),
        Compiled::Between { low, high, .. } => match (v, low, high) {
            (ScalarValue::Int(x), ScalarValue::Int(l), ScalarValue::Int(h)) => l <= x && x <= h,
            _ => {
                !v.is_null()
                    && v.try_cmp(low).is_ok_and(|o| o != core::cmp::Ordering::Less)
                    && v.try_cmp(high).is_ok_and(|o| o != core::cmp::Ordering::Greater)
            }
        },
    }
}

/// Rows of `rel` satisfying a bound predicate.
pub fn filter(rel: &Relation, predicate: &Predicate) -> Result<Relation, EvalError> {
    let compiled = compile(rel.schema(), predicate)?;
    let mut keep: Vec<usize> = (0..rel.row_count()).collect();
    // One conjunct at a time, over the rows that survived the previous ones.
    for p in &compiled {
        match p {
            Compiled::Never => keep.clear(),
            Compiled::Between {
                col,
                low: ScalarValue::Int(l),
                high: ScalarValue::Int(h),
            } => {
                let column = &rel.columns()[*col];
                keep.retain(|&r| matches!(column[r], ScalarValue::Int(x) if *l <= x && x <= *h));
            }
            Compiled::Cmp { col, .. } | Compiled::Between { col, .. } => {
                let column = &rel.columns()[*col];
                keep.retain(|&r| holds(&column[r], p));
            }
        }
    }
    Ok(rel.take(&keep))
}

/// Running state of one aggregate. Sums wrap on integer overflow.
#[derive(Debug, Clone)]
pub(crate) enum Accumulator {
    CountStar(i64),
    Count(i64),
    SumInt { sum: i64, n: i64 },
    SumFloat { sum: f64, n: i64 },
    AvgInt { sum: i64, n: i64 },
    AvgFloat { sum: f64, n: i64 },
    Min(ScalarValue),
    Max(ScalarValue),
}

impl Accumulator {
    pub(crate) fn new(func: AggFunc, column: Option<ColumnType>) -> Accumulator {
        match (func, column) {
            (AggFunc::Count, None) => Accumulator::CountStar(0),
            (AggFunc::Count, Some(_)) => Accumulator::Count(0),
            (AggFunc::Sum, Some(ColumnType::Float64)) => Accumulator::SumFloat { sum: 0.0, n: 0 },
            (AggFunc::Sum, _) => Accumulator::SumInt { sum: 0, n: 0 },
            (AggFunc::Avg, Some(ColumnType::Float64)) => Accumulator::AvgFloat { sum: 0.0, n: 0 },
            (AggFunc::Avg, _) => Accumulator::AvgInt { sum: 0, n: 0 },
            (AggFunc::Min, _) => Accumulator::Min(ScalarValue::Null),
            (AggFunc::Max, _) => Accumulator::Max(ScalarValue::Null),
        }
    }

    pub(crate) fn update(&mut self, v: Option<&ScalarValue>) {
        if let Accumulator::CountStar(n) = self {
            *n += 1;
            return;
        }
        let Some(v) = v.filter(|v| !v.is_null()) else {
            return;
        };
        match self {
            Accumulator::CountStar(_) => {}
            Accumulator::Count(n) => *n += 1,
            Accumulator::SumInt { sum, n } | Accumulator::AvgInt { sum, n } => {
                *sum = sum.wrapping_add(v.as_int().unwrap_or(0));
                *n += 1;
            }
            Accumulator::SumFloat { sum, n } | Accumulator::AvgFloat { sum, n } => {
                *sum += v.as_float().unwrap_or(0.0);
                *n += 1;
            }
            Accumulator::Min(m) => {
                if m.is_null() || v < m {
                    *m = v.clone();
                }
            }
            Accumulator::Max(m) => {
                if m.is_null() || v > m {
                    *m = v.clone();
                }
            }
        }
    }

    pub(crate) fn finish(&self) -> ScalarValue {
        match self {
            Accumulator::CountStar(n) | Accumulator::Count(n) => ScalarValue::Int(*n),
            Accumulator::SumInt { n: 0, .. }
            | Accumulator::SumFloat { n: 0, .. }
            | Accumulator::AvgInt { n: 0, .. }
            | Accumulator::AvgFloat { n: 0, .. } => ScalarValue::Null,
            Accumulator::SumInt { sum, .. } => ScalarValue::Int(*sum),
            Accumulator::SumFloat { sum, .. } => ScalarValue::Float(*sum),
            Accumulator::AvgInt { sum, n } => ScalarValue::Float(*sum as f64 / *n as f64),
            Accumulator::AvgFloat { sum, n } => ScalarValue::Float(*sum / *n as f64),
            Accumulator::Min(v) | Accumulator::Max(v) => v.clone(),
        }
    }
}

/// Group-by aggregation; output rows are sorted by the group-key tuple.
/// No input rows means no output rows, with or without keys.
pub fn group_by(rel: &Relation, keys: &[String], aggregates: &[Aggregate]) -> Result<Relation, EvalError> {
    let schema = group_schema(rel.schema(), keys, aggregates)?;
    let key_idx: Vec<usize> = keys
        .iter()
        .map(|k| column_index(rel.schema(), k))
        .collect::<Result<_, _>>()?;
    let agg_idx: Vec<Option<usize>> = aggregates
        .iter()
        .map(|a| a.column.as_ref().map(|c| column_index(rel.schema(), c)).transpose())
        .collect::<Result<_, _>>()?;
    let template: Vec<Accumulator> = aggregates
        .iter()
        .zip(&agg_idx)
        .map(|(a, i)| Accumulator::new(a.func, i.map(|i| rel.schema().fields()[i].ty)))
        .collect();
    let mut slots: BTreeMap<Vec<&ScalarValue>, usize> = BTreeMap::new();
    let mut accs: Vec<Vec<Accumulator>> = Vec::new();
    for r in 0..rel.row_count() {
        let key: Vec<&ScalarValue> = key_idx.iter().map(|&i| rel.value(r, i)).collect();
        let slot = match slots.get(&key) {
            Some(&s) => s,
            None => {
                accs.push(template.clone());
                slots.insert(key, accs.len() - 1);
                accs.len() - 1
            }
        };
        for (acc, idx) in accs[slot].iter_mut().zip(&agg_idx) {
            acc.update(idx.map(|i| rel.value(r, i)));
        }
    }
    let n = slots.len();
    let mut columns: Vec<Vec<ScalarValue>> = (0..schema.len()).map(|_| Vec::with_capacity(n)).collect();
    for (key, slot) in slots {
        for (i, v) in key.into_iter().enumerate() {
            columns[i].push(v.clone());
        }
        for (j, acc) in accs[slot].iter().enumerate() {
            columns[keys.len() + j].push(acc.finish());
        }
    }
    Ok(Relation::from_parts(rel.name().to_string(), schema, columns, n))
}

/// Equi-join. Output is left columns then right columns, dropping right key
/// columns that share their left partner's name. Null keys never match.
pub fn join(left: &Relation, right: &Relation, on: &[JoinKey]) -> Result<Relation, EvalError> {
    let (schema, keep) = join_schema(left.schema(), right.schema(), on)?;
    let lk: Vec<usize> = on.iter().map(|k| column_index(left.schema(), &k.left)).collect::<Result<_, _>>()?;
    let rk: Vec<usize> = on
        .iter()
        .map(|k| column_index(right.schema(), &k.right))
        .collect::<Result<_, _>>()?;
    let mut index: BTreeMap<Vec<&ScalarValue>, Vec<usize>> = BTreeMap::new();
    for r in 0..right.row_count() {
        let key: Vec<&ScalarValue> = rk.iter().map(|&i| right.value(r, i)).collect();
        if key.iter().any(|v| v.is_null()) {
            continue;
        }
        index.entry(key).or_default().push(r);
    }
    let mut columns: Vec<Vec<ScalarValue>> = (0..schema.len()).map(|_| Vec::new()).collect();
    let mut n = 0;
    for l in 0..left.row_count() {
        let key: Vec<&ScalarValue> = lk.iter().map(|&i| left.value(l, i)).collect();
        let Some(matches) = index.get(&key) else { continue };
        for &r in matches {
            for (c, col) in columns.iter_mut().enumerate().take(left.schema().len()) {
                col.push(left.value(l, c).clone());
            }
            for (j, &c) in keep.iter().enumerate() {
                columns[left.schema().len() + j].push(right.value(r, c).clone());
            }
            n += 1;
        }
    }
    Ok(Relation::from_parts(left.name().to_string(), schema, columns, n))
}

pub fn project(rel: &Relation, columns: &[String]) -> Result<Relation, EvalError> {
    let (schema, idx) = project_schema(rel.schema(), columns)?;
    let cols = idx.iter().map(|&i| rel.columns()[i].clone()).collect();
    Ok(Relation::from_parts(rel.name().to_string(), schema, cols, rel.row_count()))
}

/// Evaluates a bound plan bottom-up. `slot` feeds [`PlanNode::Slot`] leaves.
/// Row order of the result is an implementation detail; see [`oracle_eval`].
pub fn evaluate(plan: &PlanNode, db: &Database, slot: Option<&Relation>) -> Result<Relation, EvalError> {
    Ok(eval_borrowed(plan, db, slot)?.into_owned())
}

/// Leaves borrow their relation; only operators materialize.
fn eval_borrowed<'a>(plan: &PlanNode, db: &'a Database, slot: Option<&'a Relation>) -> Result<Cow<'a, Relation>, EvalError> {
    Ok(match plan {
        PlanNode::Scan { relation } => Cow::Borrowed(db.get(relation).ok_or_else(|| EvalError::UnknownRelation(relation.clone()))?),
        PlanNode::Slot => Cow::Borrowed(slot.ok_or(EvalError::MissingSlot)?),
        PlanNode::Filter { input, predicate } => Cow::Owned(filter(eval_borrowed(input, db, slot)?.as_ref(), predicate)?),
        PlanNode::Project { input, columns } => Cow::Owned(project(eval_borrowed(input, db, slot)?.as_ref(), columns)?),
        PlanNode::GroupByAgg { input, keys, aggregates } => {
            Cow::Owned(group_by(eval_borrowed(input, db, slot)?.as_ref(), keys, aggregates)?)
        }
        PlanNode::Join { left, right, on, .. } => {
            Cow::Owned(join(eval_borrowed(left, db, slot)?.as_ref(), eval_borrowed(right, db, slot)?.as_ref(), on)?)
        }
        PlanNode::Choice(c) => return Err(EvalError::UnboundChoice(c.choice_id.clone())),
    })
}

/// Ground-truth evaluation of a fully bound plan, in canonical row order.
pub fn oracle_eval(plan: &PlanNode, db: &Database) -> Result<Relation, EvalError> {
    Ok(evaluate(plan, db, None)?.canonicalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::Field;
    use alloc::vec;

    fn votes() -> Database {
        let schema = Schema::new(vec![
            Field::new("name", ColumnType::Utf8),
            Field::new("chamber", ColumnType::Utf8),
            Field::new("date", ColumnType::Int64),
        ])
        .unwrap();
        let rows = vec![
            vec!["ann".into(), "house".into(), 2001i64.into()],
            vec!["bob".into(), "senate".into(), 2002i64.into()],
            vec!["ann".into(), "house".into(), 2010i64.into()],
            vec!["cat".into(), "house".into(), 1999i64.into()],
            vec!["ann".into(), "house".into(), ScalarValue::Null],
        ];
        let mut db = Database::new();
        db.insert("votes".into(), Relation::from_rows("votes", schema, rows).unwrap());
        db
    }

    #[test]
    fn congress_counts_per_member() {
        let plan = PlanNode::scan("votes")
            .filter(Predicate::Cmp {
                column: "chamber".into(),
                op: CmpOp::Eq,
                value: Operand::Literal("house".into()),
            })
            .group_by(&["name"], vec![Aggregate::count_star("n")]);
        let out = oracle_eval(&plan, &votes()).unwrap();
        assert_eq!(out.row(0), vec!["ann".into(), 3i64.into()]);
        assert_eq!(out.row(1), vec!["cat".into(), 1i64.into()]);
        assert_eq!(out.row_count(), 2);
    }

    #[test]
    fn nulls_never_match_predicates() {
        let plan = PlanNode::scan("votes").filter(Predicate::Between {
            column: "date".into(),
            low: Operand::Literal(1900i64.into()),
            high: Operand::Literal(2100i64.into()),
        });
        assert_eq!(oracle_eval(&plan, &votes()).unwrap().row_count(), 4);
        let ne = PlanNode::scan("votes").filter(Predicate::Cmp {
            column: "date".into(),
            op: CmpOp::Ne,
            value: Operand::Literal(2001i64.into()),
        });
        assert_eq!(oracle_eval(&ne, &votes()).unwrap().row_count(), 3);
    }

    #[test]
    fn empty_group_by_is_empty() {
        let plan = PlanNode::scan("votes")
            .filter(Predicate::Cmp {
                column: "date".into(),
                op: CmpOp::Gt,
                value: Operand::Literal(3000i64.into()),
            })
            .group_by(&[], vec![Aggregate::count_star("n"), Aggregate::of(AggFunc::Sum, "date", "s")]);
        assert_eq!(oracle_eval(&plan, &votes()).unwrap().row_count(), 0);
    }

    #[test]
    fn aggregates_skip_nulls() {
        let plan = PlanNode::scan("votes").group_by(
            &["name"],
            vec![
                Aggregate::count_star("n"),
                Aggregate::of(AggFunc::Count, "date", "nd"),
                Aggregate::of(AggFunc::Sum, "date", "s"),
                Aggregate::of(AggFunc::Avg, "date", "a"),
                Aggregate::of(AggFunc::Min, "date", "lo"),
                Aggregate::of(AggFunc::Max, "chamber", "hi"),
            ],
        );
        let out = oracle_eval(&plan, &votes()).unwrap();
        assert_eq!(
            out.row(0),
            vec![
                "ann".into(),
                3i64.into(),
                2i64.into(),
                4011i64.into(),
                2005.5.into(),
                2001i64.into(),
                "house".into()
            ]
        );
    }

    #[test]
    fn ill_typed_predicates_and_unbound_choices_fail() {
        let bad = PlanNode::scan("votes").filter(Predicate::Cmp {
            column: "date".into(),
            op: CmpOp::Eq,
            value: Operand::Literal("2001".into()),
        });
        assert!(matches!(oracle_eval(&bad, &votes()), Err(EvalError::TypeError(_))));
        let unbound = PlanNode::scan("votes").filter(Predicate::Cmp {
            column: "date".into(),
            op: CmpOp::Eq,
            value: Operand::Choice(crate::plan::ChoiceNode {
                choice_id: "x".into(),
                domain: crate::plan::ChoiceDomain::Values(vec![1i64.into()]),
            }),
        });
        assert_eq!(oracle_eval(&unbound, &votes()), Err(EvalError::UnboundChoice("x".into())));
    }

    #[test]
    fn sum_over_strings_is_rejected() {
        let plan = PlanNode::scan("votes").group_by(&[], vec![Aggregate::of(AggFunc::Sum, "name", "s")]);
        assert!(matches!(oracle_eval(&plan, &votes()), Err(EvalError::TypeError(_))));
    }
}
