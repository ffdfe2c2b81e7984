mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use pvd_core::binding::{bind, default_binding, enumerate_assignments, Binding};
use pvd_core::cost::Calibration;
use pvd_core::interface::InterfaceSpec;
use pvd_core::oracle::{evaluate, oracle_eval};
use pvd_core::plan::{AggFunc, Aggregate, ChoiceDomain, ChoiceNode, CmpOp, Operand, PlanNode, Predicate};
use pvd_core::relation::{Database, Field, Relation, Schema};
use pvd_core::samples;
use pvd_core::stats::compute_stats;
use pvd_core::structures::{
    build, estimate, eval, match_structures, BuildOptions, BuiltStructure, CubeDim, DimBound, MatchResult, ProbeValue,
    StructureError, StructureFamily, StructureKind, PAYLOAD_OVERHEAD,
};
use pvd_core::{ColumnType, ScalarValue};

/// Builds (cached per baked key) and evaluates one match under `b`, then
/// checks the rewritten view against the oracle.
fn check_rewrite(
    db: &Database,
    plan: &PlanNode,
    m: &MatchResult,
    b: &Binding,
    built: &mut BTreeMap<String, BuiltStructure>,
) -> Result<(), String> {
    let keys = m.key_choices();
    let baked = b.restrict(keys.iter());
    let cache_key = baked.to_string();
    if !built.contains_key(&cache_key) {
        let input = oracle_eval(&bind(&m.build_input, b).unwrap(), db).unwrap();
        let opts = BuildOptions {
            baked: baked.clone(),
            ..BuildOptions::default()
        };
        built.insert(cache_key.clone(), build(&m.kind, &input, &opts).map_err(|e| e.to_string())?);
    }
    let s = &built[&cache_key];
    let out = eval(s, b).map_err(|e| e.to_string())?;
    let residual = bind(&m.residual_plan(plan), b).unwrap();
    let got = evaluate(&residual, db, Some(&out)).unwrap().canonicalize();
    let want = oracle_eval(&bind(plan, b).unwrap(), db).unwrap();
    if got.same_contents(&want, 1e-9) {
        Ok(())
    } else {
        Err(format!("{} under {b}: got {:?}, want {:?}", m.kind.describe(), got.rows().take(3).collect::<Vec<_>>(), want.rows().take(3).collect::<Vec<_>>()))
    }
}

fn all_view_bindings(spec: &InterfaceSpec, plan: &PlanNode) -> Vec<Binding> {
    enumerate_assignments(spec, &plan.choice_ids(), &default_binding(spec), 1_000_000)
        .unwrap()
        .collect()
}

#[test]
fn rewrite_soundness_on_every_sample() {
    for (name, spec, db) in small_fixtures() {
        let catalog = spec.catalog();
        for view in &spec.views {
            let bindings = all_view_bindings(&spec, &view.plan);
            // Large binding spaces are thinned with a fixed stride.
            let stride = (bindings.len() / 400).max(1);
            for family in StructureFamily::ALL {
                for m in match_structures(family, &view.plan, &catalog) {
                    let mut built = BTreeMap::new();
                    for b in bindings.iter().step_by(stride) {
                        if let Err(e) = check_rewrite(&db, &view.plan, &m, b, &mut built) {
                            panic!("{name}/{}: {e}", view.name);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn congress_plan_matches_a_name_date_cube_keyed_by_chamber() {
    let spec = samples::congress();
    let plan = &spec.views[0].plan;
    let cubes = match_structures(StructureFamily::PrefixSumCube, plan, &spec.catalog());
    assert_eq!(cubes.len(), 1);
    let m = &cubes[0];
    assert_eq!(plan.node_at(m.matched_subplan).unwrap().label(), "GroupByAgg");
    let StructureKind::PrefixSumCube { dims, group_keys, .. } = &m.kind else {
        panic!("not a cube")
    };
    let cols: Vec<&str> = dims.iter().map(|d| d.column.as_str()).collect();
    assert_eq!(cols, ["name", "date"]);
    assert_eq!(group_keys, &["name"]);
    assert!(m.residual.is_empty());
    assert_eq!(m.key_choices().into_iter().collect::<Vec<_>>(), ["a"]);
    assert_eq!(m.kind.probe_choices().into_iter().collect::<Vec<_>>(), ["b_hi", "b_lo"]);
}

#[test]
fn bare_scan_matches_only_base_scan() {
    let plan = PlanNode::scan("votes");
    let spec = samples::congress();
    for family in StructureFamily::ALL {
        let n = match_structures(family, &plan, &spec.catalog()).len();
        assert_eq!(n, usize::from(family == StructureFamily::BaseScan), "{family:?}");
    }
}

#[test]
fn equality_filter_matches_hash_index_with_empty_residual() {
    let mut spec = samples::filter();
    let plan = PlanNode::scan("flights").filter(Predicate::Cmp {
        column: "origin".into(),
        op: CmpOp::Eq,
        value: samples::values("c", &samples::AIRPORTS),
    });
    spec.views[0].plan = plan.clone();
    let ms = match_structures(StructureFamily::HashIndex, &plan, &spec.catalog());
    assert_eq!(ms.len(), 1);
    assert!(ms[0].residual.is_empty());
    assert!(ms[0].key_choices().is_empty());
    let db = flights_db(300, 9);
    let mut built = BTreeMap::new();
    for b in all_view_bindings(&spec, &plan) {
        check_rewrite(&db, &plan, &ms[0], &b, &mut built).unwrap();
    }
    assert_eq!(built.len(), 1);
}

#[test]
fn subplan_choice_alternatives_are_not_matched() {
    let spec = samples::congress();
    let alt = |col: &str| PlanNode::scan("votes").filter(Predicate::Cmp {
        column: col.into(),
        op: CmpOp::Eq,
        value: samples::values("z", &["house"]),
    });
    let plan = PlanNode::Choice(ChoiceNode {
        choice_id: "which".into(),
        domain: ChoiceDomain::Subplans(vec![alt("chamber"), alt("name")]),
    });
    assert!(match_structures(StructureFamily::HashIndex, &plan, &spec.catalog()).is_empty());
    assert!(match_structures(StructureFamily::BaseScan, &plan, &spec.catalog()).is_empty());
}

fn grid(xs: &[i64], ys: &[i64]) -> Relation {
    let schema = Schema::new(vec![
        Field::new("x", ColumnType::Int64),
        Field::new("y", ColumnType::Int64),
        Field::new("v", ColumnType::Int64),
    ])
    .unwrap();
    let mut rows = Vec::new();
    for &x in xs {
        for &y in ys {
            rows.push(vec![x.into(), y.into(), (x * 10 + y).into()]);
        }
    }
    Relation::from_rows("g", schema, rows).unwrap()
}

fn dim(column: &str, lo: &str, hi: &str) -> CubeDim {
    CubeDim {
        column: column.into(),
        bounds: vec![
            DimBound {
                op: CmpOp::Ge,
                value: ProbeValue::Choice(lo.into()),
            },
            DimBound {
                op: CmpOp::Le,
                value: ProbeValue::Choice(hi.into()),
            },
        ],
    }
}

fn count_cube(dims: Vec<CubeDim>) -> StructureKind {
    StructureKind::PrefixSumCube {
        dims,
        group_keys: vec![],
        measures: vec![Aggregate::count_star("n")],
    }
}

#[test]
fn two_by_four_count_cube_has_eight_cells() {
    let rel = grid(&[1, 2], &[1, 2, 3, 4]);
    let kind = count_cube(vec![dim("x", "xl", "xh"), dim("y", "yl", "yh")]);
    let s = build(&kind, &rel, &BuildOptions::default()).unwrap();
    assert_eq!(s.count_cells().unwrap().len(), 8);
    assert_eq!(s.size_bytes(), s.payload().len() as u64);

    let stats = compute_stats(&rel);
    let est = estimate(&kind, &stats, rel.row_count() as u64, &Calibration::default()).unwrap();
    assert_eq!(est.cells, 8);
    let StructureKind::PrefixSumCube { dims, measures, .. } = &kind else { unreachable!() };
    let layout = pvd_core::structures::CubeLayout::from_stats(dims, measures, &stats).unwrap();
    assert_eq!(layout.cell_bytes(), 64);
    assert_eq!(est.size_bytes, PAYLOAD_OVERHEAD + layout.dictionary_bytes + 64);
}

#[test]
fn one_row_cube_prefix_cells_are_zero_or_one() {
    let rel = grid(&[3], &[7]);
    let s = build(&count_cube(vec![dim("x", "a", "b"), dim("y", "c", "d")]), &rel, &BuildOptions::default()).unwrap();
    let cells = s.count_cells().unwrap();
    assert!(cells.iter().all(|&c| c <= 1));
    assert_eq!(*cells.last().unwrap(), 1);
}

fn range_binding(pairs: &[(&str, i64)]) -> Binding {
    pairs.iter().fold(Binding::new(), |b, (k, v)| b.with(*k, ScalarValue::Int(*v)))
}

#[test]
fn cube_sum_matches_oracle_on_every_range() {
    let db = trips_db(100, 17);
    let spec = samples::slider();
    let plan = &spec.views[0].plan;
    let m = &match_structures(StructureFamily::PrefixSumCube, plan, &spec.catalog())[0];
    let input = oracle_eval(&m.build_input, &db).unwrap();
    let s = build(&m.kind, &input, &BuildOptions::default()).unwrap();
    for lo in 1..=samples::MAX_DISTANCE {
        for hi in lo..=samples::MAX_DISTANCE {
            let b = range_binding(&[("d_lo", lo), ("d_hi", hi)]);
            let got = eval(&s, &b).unwrap();
            let want = oracle_eval(&bind(plan, &b).unwrap(), &db).unwrap();
            assert!(got.same_contents(&want, 1e-9), "[{lo},{hi}]");
        }
    }
}

#[test]
fn cube_eval_reads_at_most_two_to_the_d_cells_per_group() {
    let db = congress_db(3, 5);
    let spec = samples::congress();
    let plan = &spec.views[0].plan;
    let m = &match_structures(StructureFamily::PrefixSumCube, plan, &spec.catalog())[0];
    let b = default_binding(&spec).with("b_lo", ScalarValue::Int(2001)).with("b_hi", ScalarValue::Int(2020));
    let input = oracle_eval(&bind(&m.build_input, &b).unwrap(), &db).unwrap();
    let opts = BuildOptions {
        baked: b.restrict(m.key_choices().iter()),
        ..BuildOptions::default()
    };
    let s = build(&m.kind, &input, &opts).unwrap();
    let (out, reads) = s.eval_counting(&b).unwrap();
    let names = compute_stats(&input)["name"].distinct_count;
    assert!(reads <= names * 4, "{reads} reads for {names} groups");
    assert!(out.row_count() as u64 <= names);
}

#[test]
fn full_range_equals_unfiltered_group_by() {
    let db = trips_db(250, 23);
    let spec = samples::slider();
    let view = &spec.views[0].plan;
    let m = &match_structures(StructureFamily::PrefixSumCube, view, &spec.catalog())[0];
    let s = build(&m.kind, &oracle_eval(&m.build_input, &db).unwrap(), &BuildOptions::default()).unwrap();
    let got = eval(&s, &range_binding(&[("d_lo", 1), ("d_hi", samples::MAX_DISTANCE)])).unwrap();
    let PlanNode::GroupByAgg { keys, aggregates, .. } = view else { panic!() };
    let unfiltered = PlanNode::GroupByAgg {
        input: Box::new(PlanNode::scan("trips")),
        keys: keys.clone(),
        aggregates: aggregates.clone(),
    };
    assert!(got.same_contents(&oracle_eval(&unfiltered, &db).unwrap(), 1e-9));
}

#[test]
fn payload_is_deterministic_and_round_trips() {
    let db = congress_db(2, 8);
    let spec = samples::congress();
    let plan = &spec.views[0].plan;
    let b = default_binding(&spec);
    for family in StructureFamily::ALL {
        for m in match_structures(family, plan, &spec.catalog()) {
            let input = oracle_eval(&bind(&m.build_input, &b).unwrap(), &db).unwrap();
            let opts = BuildOptions {
                baked: b.restrict(m.key_choices().iter()),
                ..BuildOptions::default()
            };
            let s1 = build(&m.kind, &input, &opts).unwrap();
            let s2 = build(&m.kind, &input, &opts).unwrap();
            assert_eq!(s1.payload(), s2.payload());
            assert_eq!(s1.source_fingerprint(), s2.source_fingerprint());
            assert_eq!(s1.size_bytes(), s1.payload().len() as u64);
            let back = BuiltStructure::from_payload(s1.payload().to_vec()).unwrap();
            assert_eq!(back.kind(), s1.kind());
            assert_eq!(eval(&back, &b).unwrap(), eval(&s1, &b).unwrap());
        }
    }
}

#[test]
fn fingerprint_changes_with_input() {
    let kind = count_cube(vec![dim("x", "a", "b")]);
    let s1 = build(&kind, &grid(&[1, 2], &[1]), &BuildOptions::default()).unwrap();
    let s2 = build(&kind, &grid(&[1, 3], &[1]), &BuildOptions::default()).unwrap();
    assert_ne!(s1.source_fingerprint(), s2.source_fingerprint());
}

#[test]
fn rebinding_a_baked_choice_is_stale() {
    let db = congress_db(1, 2);
    let spec = samples::congress();
    let m = &match_structures(StructureFamily::PrefixSumCube, &spec.views[0].plan, &spec.catalog())[0];
    let house = default_binding(&spec);
    let input = oracle_eval(&bind(&m.build_input, &house).unwrap(), &db).unwrap();
    let opts = BuildOptions {
        baked: house.restrict(m.key_choices().iter()),
        ..BuildOptions::default()
    };
    let s = build(&m.kind, &input, &opts).unwrap();
    let senate = house.clone().with("a", ScalarValue::str("senate"));
    assert!(matches!(eval(&s, &senate), Err(StructureError::StaleStructure { .. })));
    assert!(eval(&s, &house).is_ok());
}

#[test]
fn cell_cap_and_unknown_columns_are_rejected() {
    let rel = grid(&[1, 2, 3], &[1, 2, 3, 4]);
    let kind = count_cube(vec![dim("x", "a", "b"), dim("y", "c", "d")]);
    let opts = BuildOptions {
        cell_cap: 11,
        ..BuildOptions::default()
    };
    assert_eq!(build(&kind, &rel, &opts).unwrap_err(), StructureError::CapExceeded { cells: 12, cap: 11 });
    let bad = count_cube(vec![dim("nope", "a", "b")]);
    assert_eq!(build(&bad, &rel, &BuildOptions::default()).unwrap_err(), StructureError::UnknownColumn("nope".into()));
}

#[test]
fn base_scan_over_nothing_costs_nothing() {
    let rel = grid(&[], &[]);
    let est = estimate(&StructureKind::BaseScan, &compute_stats(&rel), 0, &Calibration::default()).unwrap();
    assert_eq!((est.build_cost_ms, est.eval_cost_ms, est.size_bytes), (0.0, 0.0, 0));
}

#[test]
fn estimate_needs_stats_for_every_column() {
    let rel = grid(&[1], &[1]);
    let kind = count_cube(vec![dim("w", "a", "b")]);
    assert!(estimate(&kind, &compute_stats(&rel), 1, &Calibration::default()).is_err());
}

fn arb_grid_rows() -> impl Strategy<Value = Vec<(i64, i64, Option<i64>)>> {
    prop::collection::vec((0i64..5, 0i64..6, prop::option::weighted(0.9, -50i64..50)), 1..60)
}

fn grid_rel(rows: &[(i64, i64, Option<i64>)]) -> Relation {
    let schema = Schema::new(vec![
        Field::new("x", ColumnType::Int64),
        Field::new("y", ColumnType::Int64),
        Field::new("v", ColumnType::Int64),
    ])
    .unwrap();
    let rows = rows
        .iter()
        .map(|(x, y, v)| vec![(*x).into(), (*y).into(), v.map_or(ScalarValue::Null, ScalarValue::Int)])
        .collect();
    Relation::from_rows("g", schema, rows).unwrap()
}

fn all_measures() -> Vec<Aggregate> {
    vec![
        Aggregate::count_star("n"),
        Aggregate::of(AggFunc::Count, "v", "nv"),
        Aggregate::of(AggFunc::Sum, "v", "s"),
        Aggregate::of(AggFunc::Avg, "v", "a"),
        Aggregate::of(AggFunc::Min, "v", "lo"),
        Aggregate::of(AggFunc::Max, "v", "hi"),
    ]
}

proptest! {
    #[test]
    fn prefix_identity_full_box_is_the_total(rows in arb_grid_rows()) {
        let rel = grid_rel(&rows);
        let kind = StructureKind::PrefixSumCube {
            dims: vec![dim("x", "xl", "xh"), dim("y", "yl", "yh")],
            group_keys: vec![],
            measures: all_measures(),
        };
        let s = build(&kind, &rel, &BuildOptions::default()).unwrap();
        let b = range_binding(&[("xl", 0), ("xh", 4), ("yl", 0), ("yh", 5)]);
        let got = eval(&s, &b).unwrap();
        let mut db = Database::new();
        db.insert("g".into(), rel);
        let total = PlanNode::scan("g").group_by(&[], all_measures());
        prop_assert!(got.same_contents(&oracle_eval(&total, &db).unwrap(), 1e-9));
    }

    #[test]
    fn adding_a_dimension_never_shrinks_the_cube(rows in arb_grid_rows()) {
        let rel = grid_rel(&rows);
        let one = StructureKind::PrefixSumCube {
            dims: vec![dim("x", "a", "b")],
            group_keys: vec![],
            measures: all_measures(),
        };
        let two = StructureKind::PrefixSumCube {
            dims: vec![dim("x", "a", "b"), dim("y", "c", "d")],
            group_keys: vec![],
            measures: all_measures(),
        };
        let s1 = build(&one, &rel, &BuildOptions::default()).unwrap();
        let s2 = build(&two, &rel, &BuildOptions::default()).unwrap();
        prop_assert!(s2.size_bytes() >= s1.size_bytes());
        let stats = compute_stats(&rel);
        let n = rel.row_count() as u64;
        let cal = Calibration::default();
        prop_assert!(estimate(&two, &stats, n, &cal).unwrap().size_bytes >= estimate(&one, &stats, n, &cal).unwrap().size_bytes);
    }

    #[test]
    fn grouped_cube_matches_oracle_on_random_boxes(
        rows in arb_grid_rows(),
        (yl, yh) in (-1i64..7, -1i64..7),
    ) {
        let rel = grid_rel(&rows);
        let kind = StructureKind::PrefixSumCube {
            dims: vec![CubeDim { column: "x".into(), bounds: vec![] }, dim("y", "yl", "yh")],
            group_keys: vec!["x".into()],
            measures: all_measures(),
        };
        let s = build(&kind, &rel, &BuildOptions::default()).unwrap();
        let b = range_binding(&[("yl", yl), ("yh", yh)]);
        let got = eval(&s, &b).unwrap();
        let mut db = Database::new();
        db.insert("g".into(), rel);
        let plan = PlanNode::scan("g")
            .filter(Predicate::Between { column: "y".into(), low: Operand::Literal(yl.into()), high: Operand::Literal(yh.into()) })
            .group_by(&["x"], all_measures());
        prop_assert!(got.same_contents(&oracle_eval(&plan, &db).unwrap(), 1e-9));
    }
}
