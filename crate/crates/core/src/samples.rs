//! Ready-made interfaces used by the generator, examples and tests.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::interface::{Interaction, InteractionKind, InterfaceSpec, Source, View, SPEC_VERSION};
use crate::plan::{AggFunc, Aggregate, ChoiceDomain, ChoiceNode, CmpOp, Operand, PlanNode, Predicate};
use crate::relation::{Field, Schema};
use crate::value::{ColumnType, ScalarValue};

pub const NAMES: [&str; 5] = ["congress", "filter", "slider", "join", "nm-join"];

pub fn by_name(name: &str) -> Option<InterfaceSpec> {
    Some(match name {
        "congress" => congress(),
        "filter" => filter(),
        "slider" => slider(),
        "join" => key_fk_join(),
        "nm-join" => nm_join(None),
        _ => return None,
    })
}

fn schema(cols: &[(&str, ColumnType)]) -> Schema {
    Schema::new(cols.iter().map(|(n, t)| Field::new(*n, *t)).collect()).expect("distinct column names")
}

fn source(name: &str, cols: &[(&str, ColumnType)]) -> Source {
    Source {
        name: name.into(),
        path: alloc::format!("{name}.csv"),
        schema: schema(cols),
    }
}

pub fn int_interval(id: &str, lo: i64, hi: i64) -> Operand {
    Operand::Choice(ChoiceNode {
        choice_id: id.into(),
        domain: ChoiceDomain::Interval {
            lo: lo.into(),
            hi: hi.into(),
            step: 1i64.into(),
        },
    })
}

pub fn values(id: &str, vals: &[&str]) -> Operand {
    Operand::Choice(ChoiceNode {
        choice_id: id.into(),
        domain: ChoiceDomain::Values(vals.iter().map(|v| ScalarValue::str(v)).collect()),
    })
}

fn between(column: &str, low: Operand, high: Operand) -> Predicate {
    Predicate::Between {
        column: column.into(),
        low,
        high,
    }
}

fn interaction(name: &str, choices: &[&str], kind: InteractionKind, bound: f64, view: &str) -> Interaction {
    Interaction {
        name: name.into(),
        bound_choices: choices.iter().map(|c| String::from(*c)).collect::<BTreeSet<_>>(),
        kind,
        latency_bound_ms: bound,
        view: view.into(),
    }
}

pub const FIRST_YEAR: i64 = 1990;
pub const LAST_YEAR: i64 = 2020;
pub const CHAMBERS: [&str; 2] = ["house", "senate"];

/// Vote counts per member, filtered by chamber (`a`) and a year range
/// (`b_lo`..`b_hi`). A dropdown picks the chamber, a slider the years.
pub fn congress() -> InterfaceSpec {
    let plan = PlanNode::scan("votes")
        .filter(Predicate::Cmp {
            column: "chamber".into(),
            op: CmpOp::Eq,
            value: values("a", &CHAMBERS),
        })
        .filter(between(
            "date",
            int_interval("b_lo", FIRST_YEAR, LAST_YEAR),
            int_interval("b_hi", FIRST_YEAR, LAST_YEAR),
        ))
        .group_by(&["name"], alloc::vec![Aggregate::count_star("votes")])
        .project(&["name", "votes"]);
    InterfaceSpec {
        spec_version: SPEC_VERSION,
        sources: alloc::vec![source(
            "votes",
            &[("name", ColumnType::Utf8), ("chamber", ColumnType::Utf8), ("date", ColumnType::Int64)],
        )],
        views: alloc::vec![View {
            name: "vote_counts".into(),
            plan,
        }],
        interactions: alloc::vec![
            interaction("chamber_dropdown", &["a"], InteractionKind::Discrete, 500.0, "vote_counts"),
            interaction("date_slider", &["b_lo", "b_hi"], InteractionKind::Continuous, 20.0, "vote_counts"),
        ],
    }
}

pub const AIRPORTS: [&str; 8] = ["ATL", "BOS", "DEN", "JFK", "LAX", "ORD", "SEA", "SFO"];

/// Flights leaving the airport picked from a menu.
pub fn filter() -> InterfaceSpec {
    let plan = PlanNode::scan("flights")
        .filter(Predicate::Cmp {
            column: "origin".into(),
            op: CmpOp::Eq,
            value: values("origin", &AIRPORTS),
        })
        .project(&["dest", "delay"]);
    InterfaceSpec {
        spec_version: SPEC_VERSION,
        sources: alloc::vec![source(
            "flights",
            &[("origin", ColumnType::Utf8), ("dest", ColumnType::Utf8), ("delay", ColumnType::Float64)],
        )],
        views: alloc::vec![View {
            name: "departures".into(),
            plan,
        }],
        interactions: alloc::vec![interaction("origin_menu", &["origin"], InteractionKind::Discrete, 200.0, "departures")],
    }
}

pub const ZONES: [&str; 5] = ["bronx", "brooklyn", "manhattan", "queens", "staten"];
pub const MAX_DISTANCE: i64 = 20;

/// Fare statistics per zone for trips whose distance lies in a brushed range.
pub fn slider() -> InterfaceSpec {
    let plan = PlanNode::scan("trips")
        .filter(between(
            "distance",
            int_interval("d_lo", 1, MAX_DISTANCE),
            int_interval("d_hi", 1, MAX_DISTANCE),
        ))
        .group_by(
            &["zone"],
            alloc::vec![
                Aggregate::count_star("trips"),
                Aggregate::of(AggFunc::Sum, "fare", "total"),
                Aggregate::of(AggFunc::Avg, "fare", "mean"),
                Aggregate::of(AggFunc::Min, "fare", "lowest"),
                Aggregate::of(AggFunc::Max, "fare", "highest"),
            ],
        );
    InterfaceSpec {
        spec_version: SPEC_VERSION,
        sources: alloc::vec![source(
            "trips",
            &[("zone", ColumnType::Utf8), ("distance", ColumnType::Int64), ("fare", ColumnType::Float64)],
        )],
        views: alloc::vec![View {
            name: "fare_summary".into(),
            plan,
        }],
        interactions: alloc::vec![interaction(
            "distance_brush",
            &["d_lo", "d_hi"],
            InteractionKind::Continuous,
            20.0,
            "fare_summary"
        )],
    }
}

pub const DAYS: i64 = 30;
pub const REGIONS: [&str; 4] = ["east", "north", "south", "west"];

/// Revenue per customer region over a day range; every order has one customer.
pub fn key_fk_join() -> InterfaceSpec {
    let plan = PlanNode::scan("orders")
        .join(PlanNode::scan("customers"), &[("customer_id", "customer_id")], Some(1))
        .filter(between("day", int_interval("day_lo", 1, DAYS), int_interval("day_hi", 1, DAYS)))
        .group_by(
            &["region"],
            alloc::vec![Aggregate::count_star("orders"), Aggregate::of(AggFunc::Sum, "amount", "revenue")],
        );
    InterfaceSpec {
        spec_version: SPEC_VERSION,
        sources: alloc::vec![
            source(
                "orders",
                &[
                    ("order_id", ColumnType::Int64),
                    ("customer_id", ColumnType::Int64),
                    ("day", ColumnType::Int64),
                    ("amount", ColumnType::Float64),
                ],
            ),
            source("customers", &[("customer_id", ColumnType::Int64), ("region", ColumnType::Utf8)]),
        ],
        views: alloc::vec![View {
            name: "revenue".into(),
            plan,
        }],
        interactions: alloc::vec![interaction("day_brush", &["day_lo", "day_hi"], InteractionKind::Continuous, 20.0, "revenue")],
    }
}

pub const TAGS: [&str; 6] = ["action", "comedy", "drama", "horror", "indie", "scifi"];

/// Ratings per tag over a day range. Items carry several tags and many
/// ratings, so the join is many-to-many; `max_fanout` is what the interface
/// author declares for it.
pub fn nm_join(max_fanout: Option<u64>) -> InterfaceSpec {
    let plan = PlanNode::scan("ratings")
        .join(PlanNode::scan("tags"), &[("item", "item")], max_fanout)
        .filter(between("day", int_interval("r_lo", 1, DAYS), int_interval("r_hi", 1, DAYS)))
        .group_by(
            &["tag"],
            alloc::vec![Aggregate::count_star("ratings"), Aggregate::of(AggFunc::Avg, "score", "mean")],
        );
    InterfaceSpec {
        spec_version: SPEC_VERSION,
        sources: alloc::vec![
            source(
                "ratings",
                &[("item", ColumnType::Int64), ("day", ColumnType::Int64), ("score", ColumnType::Int64)],
            ),
            source("tags", &[("item", ColumnType::Int64), ("tag", ColumnType::Utf8)]),
        ],
        views: alloc::vec![View {
            name: "tag_scores".into(),
            plan,
        }],
        interactions: alloc::vec![interaction(
            "day_slider",
            &["r_lo", "r_hi"],
            InteractionKind::Continuous,
            20.0,
            "tag_scores"
        )],
    }
}

/// Every bundled sample, for suites that run over all specs.
pub fn all() -> Vec<(&'static str, InterfaceSpec)> {
    NAMES.iter().filter_map(|n| by_name(n).map(|s| (*n, s))).collect()
}
