//! Microbenchmarks that fit the cost-model constants to this machine.

use std::time::Instant;

use pvd_core::cost::Calibration;
use pvd_core::oracle;
use pvd_core::plan::{Aggregate, CmpOp, Operand, PlanNode, Predicate};
use pvd_core::relation::{Database, Field, Relation, Schema};
use pvd_core::structures::{build, eval, BuildOptions, CubeDim, DimBound, IndexKey, ProbeValue, StructureKind};
use pvd_core::{Binding, BoundValue, ColumnType, ScalarValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_ROWS: usize = 1_000_000;
pub const DEFAULT_RUNS: usize = 5;

const GROUPS: i64 = 1000;
const CUBE_RANGE: i64 = 50;
const PROBES: usize = 200;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn time_ms(f: impl FnOnce()) -> f64 {
    let t = Instant::now();
    f();
    t.elapsed().as_secs_f64() * 1e3
}

fn table(rows: usize) -> Relation {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let schema = Schema::new(vec![
        Field::new("g", ColumnType::Int64),
        Field::new("d", ColumnType::Int64),
        Field::new("v", ColumnType::Float64),
    ])
    .expect("distinct names");
    let mut g = Vec::with_capacity(rows);
    let mut d = Vec::with_capacity(rows);
    let mut v = Vec::with_capacity(rows);
    for _ in 0..rows {
        g.push(ScalarValue::Int(rng.random_range(0..GROUPS)));
        d.push(ScalarValue::Int(rng.random_range(0..CUBE_RANGE)));
        v.push(ScalarValue::Float(rng.random_range(0.0..1.0)));
    }
    Relation::new("calibration", schema, vec![g, d, v]).expect("columns match the schema")
}

fn per_unit(runs: usize, units: f64, mut f: impl FnMut()) -> f64 {
    median((0..runs.max(1)).map(|_| time_ms(&mut f) / units.max(1.0)).collect())
}

/// Fits every constant with the median of `runs` timings over a `rows`-row table.
pub fn calibrate(rows: usize, runs: usize) -> Calibration {
    let rows = rows.max(1000);
    let t = table(rows);
    let n = rows as f64;

    // Scan, filter and project are each charged one unit per input row.
    let db: Database = [(t.name().to_string(), t.clone())].into_iter().collect();
    let pipeline = PlanNode::scan(t.name())
        .filter(Predicate::Between {
            column: "d".into(),
            low: Operand::Literal(0.into()),
            high: Operand::Literal(CUBE_RANGE.into()),
        })
        .project(&["g", "d"]);
    let c_scan = per_unit(runs, 3.0 * n, || {
        std::hint::black_box(oracle::evaluate(&pipeline, &db, None).expect("well-typed pipeline"));
    });

    let aggs = [Aggregate::count_star("n")];
    let keys = ["g".to_string()];
    let c_hash = per_unit(runs, n, || {
        std::hint::black_box(oracle::group_by(&t, &keys, &aggs).expect("well-typed group-by"));
    });

    let hash_kind = StructureKind::HashIndex {
        keys: vec![IndexKey {
            column: "g".into(),
            value: ProbeValue::Choice("k".into()),
        }],
    };
    let index = build(&hash_kind, &t, &BuildOptions::default()).expect("index builds");
    let probes: Vec<Binding> = (0..PROBES as i64)
        .map(|i| Binding::new().with("k", BoundValue::Value((i % GROUPS).into())))
        .collect();
    let c_probe = per_unit(runs, PROBES as f64 * n / GROUPS as f64, || {
        for b in &probes {
            std::hint::black_box(eval(&index, b).expect("probe evaluates"));
        }
    });

    let sorted_kind = StructureKind::SortedRangeIndex {
        column: "v".into(),
        low: ProbeValue::Literal(0.0.into()),
        high: ProbeValue::Literal(1.0.into()),
    };
    let c_sort = per_unit(runs, n * n.log2(), || {
        std::hint::black_box(build(&sorted_kind, &t, &BuildOptions::default()).expect("sorted index builds"));
    });

    let cube_kind = StructureKind::PrefixSumCube {
        dims: vec![
            CubeDim {
                column: "g".into(),
                bounds: vec![],
            },
            CubeDim {
                column: "d".into(),
                bounds: vec![
                    DimBound {
                        op: CmpOp::Ge,
                        value: ProbeValue::Choice("lo".into()),
                    },
                    DimBound {
                        op: CmpOp::Le,
                        value: ProbeValue::Choice("hi".into()),
                    },
                ],
            },
        ],
        group_keys: vec!["g".into()],
        measures: vec![Aggregate::count_star("n")],
    };
    let cube = build(&cube_kind, &t, &BuildOptions::default()).expect("cube builds");
    let range = Binding::new()
        .with("lo", BoundValue::Value(5.into()))
        .with("hi", BoundValue::Value((CUBE_RANGE - 5).into()));
    let c_cell = per_unit(runs, GROUPS as f64 * 4.0, || {
        std::hint::black_box(eval(&cube, &range).expect("cube evaluates"));
    });

    let floor = 1e-9;
    Calibration {
        c_scan: c_scan.max(floor),
        c_hash: c_hash.max(floor),
        c_probe: c_probe.max(floor),
        c_sort: c_sort.max(floor),
        c_cell: c_cell.max(floor),
    }
}
