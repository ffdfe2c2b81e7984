mod common;

use std::collections::{HashMap, HashSet};

use common::{congress_db, Rng};
use proptest::prelude::*;
use pvd_core::codec::encode_relation;
use pvd_core::oracle::{oracle_eval, EvalError};
use pvd_core::plan::{Aggregate, CmpOp, Operand, PlanNode, Predicate};
use pvd_core::relation::{Database, Field, Relation, Schema};
use pvd_core::stats::compute_stats;
use pvd_core::{ColumnType, ScalarValue};

fn int_rel(name: &str, cols: &[&str], rows: Vec<Vec<i64>>) -> Relation {
    let schema = Schema::new(cols.iter().map(|c| Field::new(*c, ColumnType::Int64)).collect()).unwrap();
    let rows = rows.into_iter().map(|r| r.into_iter().map(ScalarValue::Int).collect()).collect();
    Relation::from_rows(name, schema, rows).unwrap()
}

fn db(rels: Vec<Relation>) -> Database {
    rels.into_iter().map(|r| (r.name().to_string(), r)).collect()
}

#[test]
fn stats_of_small_and_empty_columns() {
    let r = int_rel("t", &["c"], vec![vec![1], vec![1], vec![2]]);
    let s = &compute_stats(&r)["c"];
    assert_eq!(s.distinct_count, 2);
    assert_eq!(s.min, Some(ScalarValue::Int(1)));
    assert_eq!(s.max, Some(ScalarValue::Int(2)));

    let e = int_rel("t", &["c"], vec![]);
    let s = &compute_stats(&e)["c"];
    assert_eq!(s.distinct_count, 0);
    assert_eq!((s.min.clone(), s.max.clone()), (None, None));
}

#[test]
fn distinct_count_matches_a_hash_set() {
    let mut rng = Rng::new(99);
    let vals: Vec<i64> = (0..1000).map(|_| rng.below(100) as i64).collect();
    let r = int_rel("t", &["c"], vals.iter().map(|v| vec![*v]).collect());
    let expect = vals.iter().collect::<HashSet<_>>().len() as u64;
    assert_eq!(compute_stats(&r)["c"].distinct_count, expect);
}

#[test]
fn per_member_house_counts_match_a_hand_count() {
    let d = congress_db(3, 11);
    let plan = PlanNode::scan("votes")
        .filter(Predicate::Cmp {
            column: "chamber".into(),
            op: CmpOp::Eq,
            value: Operand::Literal("house".into()),
        })
        .group_by(&["name"], vec![Aggregate::count_star("votes")]);
    let out = oracle_eval(&plan, &d).unwrap();
    let mut expect: HashMap<String, i64> = HashMap::new();
    for row in d["votes"].rows() {
        if row[1] == ScalarValue::str("house") {
            *expect.entry(row[0].to_string()).or_default() += 1;
        }
    }
    assert_eq!(out.row_count(), expect.len());
    for row in out.rows() {
        assert_eq!(ScalarValue::Int(expect[&row[0].to_string()]), row[1]);
    }
    assert!(out.is_canonical());
}

#[test]
fn group_by_over_empty_input_is_empty() {
    let d = db(vec![int_rel("t", &["k", "v"], vec![])]);
    for keys in [&["k"][..], &[][..]] {
        let plan = PlanNode::scan("t").group_by(keys, vec![Aggregate::count_star("n")]);
        assert_eq!(oracle_eval(&plan, &d).unwrap().row_count(), 0);
    }
}

#[test]
fn key_fk_join_matches_nested_loop() {
    let left = int_rel("l", &["id", "fk"], vec![vec![1, 10], vec![2, 20], vec![3, 10]]);
    let right = int_rel("r", &["pk", "w"], vec![vec![10, 100], vec![20, 200], vec![30, 300]]);
    let plan = PlanNode::scan("l").join(PlanNode::scan("r"), &[("fk", "pk")], Some(1));
    let out = oracle_eval(&plan, &db(vec![left.clone(), right.clone()])).unwrap();
    assert_eq!(out.row_count(), 3);
    let mut expect = Vec::new();
    for a in left.rows() {
        for b in right.rows() {
            if a[1] == b[0] {
                expect.push([a.clone(), b].concat());
            }
        }
    }
    expect.sort();
    assert_eq!(out.rows().collect::<Vec<_>>(), expect);
}

#[test]
fn ill_typed_predicates_and_unbound_choices_fail() {
    let d = db(vec![int_rel("t", &["c"], vec![vec![1]])]);
    let bad = PlanNode::scan("t").filter(Predicate::Cmp {
        column: "c".into(),
        op: CmpOp::Eq,
        value: Operand::Literal("x".into()),
    });
    assert!(matches!(oracle_eval(&bad, &d), Err(EvalError::TypeError(_))));
    let unbound = PlanNode::scan("t").filter(Predicate::Cmp {
        column: "c".into(),
        op: CmpOp::Eq,
        value: pvd_core::samples::int_interval("q", 0, 3),
    });
    assert!(matches!(oracle_eval(&unbound, &d), Err(EvalError::UnboundChoice(_))));
}

#[test]
fn nulls_never_match_and_are_skipped_by_aggregates() {
    let schema = Schema::new(vec![Field::new("k", ColumnType::Int64), Field::new("v", ColumnType::Int64)]).unwrap();
    let rel = Relation::from_rows(
        "t",
        schema,
        vec![
            vec![1.into(), ScalarValue::Null],
            vec![1.into(), 4.into()],
            vec![ScalarValue::Null, 5.into()],
        ],
    )
    .unwrap();
    let d = db(vec![rel]);
    let ne = PlanNode::scan("t").filter(Predicate::Cmp {
        column: "k".into(),
        op: CmpOp::Ne,
        value: Operand::Literal(2.into()),
    });
    assert_eq!(oracle_eval(&ne, &d).unwrap().row_count(), 2);
    let agg = PlanNode::scan("t").group_by(
        &["k"],
        vec![
            Aggregate::count_star("n"),
            Aggregate::of(pvd_core::plan::AggFunc::Count, "v", "nv"),
            Aggregate::of(pvd_core::plan::AggFunc::Sum, "v", "s"),
        ],
    );
    let out = oracle_eval(&agg, &d).unwrap();
    let rows: Vec<_> = out.rows().collect();
    assert_eq!(rows[0], vec![ScalarValue::Null, 1.into(), 1.into(), 5.into()]);
    assert_eq!(rows[1], vec![1.into(), 2.into(), 1.into(), 4.into()]);
}

fn arb_rel() -> impl Strategy<Value = Relation> {
    prop::collection::vec((0i64..6, -5i64..5, prop::option::weighted(0.85, -20i64..20)), 0..40).prop_map(|rows| {
        let schema = Schema::new(vec![
            Field::new("a", ColumnType::Int64),
            Field::new("b", ColumnType::Int64),
            Field::new("c", ColumnType::Int64),
        ])
        .unwrap();
        let rows = rows
            .into_iter()
            .map(|(a, b, c)| vec![a.into(), b.into(), c.map_or(ScalarValue::Null, ScalarValue::Int)])
            .collect();
        Relation::from_rows("t", schema, rows).unwrap()
    })
}

fn arb_pred() -> impl Strategy<Value = Predicate> {
    let ops = prop::sample::select(vec![CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]);
    let cols = prop::sample::select(vec!["a", "b", "c"]);
    prop_oneof![
        (cols.clone(), ops, -6i64..6).prop_map(|(c, op, v)| Predicate::Cmp {
            column: c.into(),
            op,
            value: Operand::Literal(v.into()),
        }),
        (cols, -6i64..6, -6i64..6).prop_map(|(c, lo, hi)| Predicate::Between {
            column: c.into(),
            low: Operand::Literal(lo.into()),
            high: Operand::Literal(hi.into()),
        }),
    ]
}

/// Row-at-a-time reference for one bound integer predicate.
fn naive_keeps(row: &[ScalarValue], col: usize, p: &Predicate) -> bool {
    let ScalarValue::Int(x) = row[col] else { return false };
    let lit = |o: &Operand| match o {
        Operand::Literal(ScalarValue::Int(v)) => *v,
        _ => unreachable!(),
    };
    match p {
        Predicate::Cmp { op, value, .. } => {
            let v = lit(value);
            match op {
                CmpOp::Eq => x == v,
                CmpOp::Ne => x != v,
                CmpOp::Lt => x < v,
                CmpOp::Le => x <= v,
                CmpOp::Gt => x > v,
                CmpOp::Ge => x >= v,
            }
        }
        Predicate::Between { low, high, .. } => lit(low) <= x && x <= lit(high),
        Predicate::And(_) => unreachable!(),
    }
}

proptest! {
    #[test]
    fn filter_matches_a_row_at_a_time_reference(rel in arb_rel(), p in arb_pred(), q in arb_pred()) {
        let col = |p: &Predicate| ["a", "b", "c"].iter().position(|c| p.columns()[0] == *c).unwrap();
        let mut want: Vec<Vec<ScalarValue>> = rel
            .rows()
            .filter(|r| naive_keeps(r, col(&p), &p) && naive_keeps(r, col(&q), &q))
            .collect();
        want.sort();
        let d = db(vec![rel]);
        let got = oracle_eval(&PlanNode::scan("t").filter(Predicate::And(vec![p, q])), &d).unwrap();
        prop_assert_eq!(got.rows().collect::<Vec<_>>(), want);
    }

    #[test]
    fn stacked_filters_equal_one_conjunctive_filter(rel in arb_rel(), p in arb_pred(), q in arb_pred()) {
        let d = db(vec![rel]);
        let stacked = PlanNode::scan("t").filter(p.clone()).filter(q.clone());
        let single = PlanNode::scan("t").filter(Predicate::And(vec![p, q]));
        prop_assert_eq!(oracle_eval(&stacked, &d).unwrap(), oracle_eval(&single, &d).unwrap());
    }

    #[test]
    fn group_counts_sum_to_the_input_size(rel in arb_rel(), p in arb_pred()) {
        let n = {
            let d = db(vec![rel.clone()]);
            oracle_eval(&PlanNode::scan("t").filter(p.clone()), &d).unwrap().row_count() as i64
        };
        let d = db(vec![rel]);
        let plan = PlanNode::scan("t").filter(p).group_by(&["a"], vec![Aggregate::count_star("n")]);
        let out = oracle_eval(&plan, &d).unwrap();
        let total: i64 = out.column("n").unwrap().iter().map(|v| v.as_int().unwrap()).sum();
        prop_assert_eq!(total, n);
    }

    #[test]
    fn oracle_is_byte_deterministic(rel in arb_rel(), p in arb_pred()) {
        let d = db(vec![rel]);
        let plan = PlanNode::scan("t").filter(p).group_by(&["b"], vec![Aggregate::count_star("n")]);
        let a = encode_relation(&oracle_eval(&plan, &d).unwrap());
        let b = encode_relation(&oracle_eval(&plan, &d).unwrap());
        prop_assert_eq!(a, b);
    }
}
