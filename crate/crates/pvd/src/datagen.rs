//! Seeded synthetic data for the bundled sample interfaces.

use pvd_core::relation::{Database, Relation};
use pvd_core::{samples, InterfaceSpec, ScalarValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MEMBERS: usize = 100;
pub const HOUSE_MEMBERS: usize = 70;

/// Rows in the primary table when no size is given.
pub const DEFAULT_ROWS: usize = 20_000;

fn relation(spec: &InterfaceSpec, name: &str, rows: Vec<Vec<ScalarValue>>) -> Relation {
    let source = spec.source(name).expect("sample declares the source");
    Relation::from_rows(name, source.schema.clone(), rows).expect("generator matches the sample schema")
}

fn database(rels: Vec<Relation>) -> Database {
    rels.into_iter().map(|r| (r.name().to_string(), r)).collect()
}

pub fn member_name(m: usize) -> String {
    format!("m{m:03}")
}

/// `rows` votes spread uniformly over members and years.
pub fn congress(rows: usize, seed: u64) -> Database {
    let spec = samples::congress();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<ScalarValue> = (0..MEMBERS).map(|m| ScalarValue::str(&member_name(m))).collect();
    let chambers = samples::CHAMBERS.map(ScalarValue::str);
    let out = (0..rows)
        .map(|_| {
            let m = rng.random_range(0..MEMBERS);
            let chamber = &chambers[usize::from(m >= HOUSE_MEMBERS)];
            let year = rng.random_range(samples::FIRST_YEAR..=samples::LAST_YEAR);
            vec![names[m].clone(), chamber.clone(), year.into()]
        })
        .collect();
    database(vec![relation(&spec, "votes", out)])
}

/// Flights between the sample airports; one delay in twenty is missing.
pub fn flights(rows: usize, seed: u64) -> Database {
    let spec = samples::filter();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let airports = samples::AIRPORTS.map(ScalarValue::str);
    let out = (0..rows)
        .map(|_| {
            let origin = airports[rng.random_range(0..airports.len())].clone();
            let dest = airports[rng.random_range(0..airports.len())].clone();
            let delay = if rng.random_ratio(1, 20) {
                ScalarValue::Null
            } else {
                rng.random_range(-20.0..100.0f64).round().into()
            };
            vec![origin, dest, delay]
        })
        .collect();
    database(vec![relation(&spec, "flights", out)])
}

/// Taxi trips; one fare in twenty-five is missing.
pub fn trips(rows: usize, seed: u64) -> Database {
    let spec = samples::slider();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zones = samples::ZONES.map(ScalarValue::str);
    let out = (0..rows)
        .map(|_| {
            let zone = zones[rng.random_range(0..zones.len())].clone();
            let distance = rng.random_range(1..=samples::MAX_DISTANCE);
            let fare = if rng.random_ratio(1, 25) {
                ScalarValue::Null
            } else {
                rng.random_range(2.5..62.5f64).into()
            };
            vec![zone, distance.into(), fare]
        })
        .collect();
    database(vec![relation(&spec, "trips", out)])
}

/// Orders over one twentieth as many customers. A few orders point at
/// customer ids that do not exist and drop out of the join.
pub fn orders(rows: usize, seed: u64) -> Database {
    let spec = samples::key_fk_join();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let customers = (rows / 20).max(10);
    let regions = samples::REGIONS.map(ScalarValue::str);
    let cust = (0..customers)
        .map(|c| vec![(c as i64).into(), regions[rng.random_range(0..regions.len())].clone()])
        .collect();
    let ord = (0..rows)
        .map(|o| {
            vec![
                (o as i64).into(),
                rng.random_range(0..customers as i64 + 2).into(),
                rng.random_range(1..=samples::DAYS).into(),
                (rng.random_range(0..50_000i64) as f64 / 100.0).into(),
            ]
        })
        .collect();
    database(vec![relation(&spec, "orders", ord), relation(&spec, "customers", cust)])
}

/// Ratings of items that carry several tags each.
pub fn ratings(rows: usize, seed: u64) -> Database {
    let spec = samples::nm_join(None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (rows / 50).max(10);
    let tag_values = samples::TAGS.map(ScalarValue::str);
    let mut tags = Vec::new();
    for i in 0..items {
        for t in &tag_values {
            if rng.random_ratio(1, 3) {
                tags.push(vec![(i as i64).into(), t.clone()]);
            }
        }
    }
    let rs = (0..rows)
        .map(|_| {
            vec![
                rng.random_range(0..items as i64).into(),
                rng.random_range(1..=samples::DAYS).into(),
                rng.random_range(1..=5i64).into(),
            ]
        })
        .collect();
    database(vec![relation(&spec, "ratings", rs), relation(&spec, "tags", tags)])
}

/// Data for the named sample, `rows` rows in its largest table.
pub fn generate(sample: &str, rows: usize, seed: u64) -> Option<Database> {
    Some(match sample {
        "congress" => congress(rows, seed),
        "filter" => flights(rows, seed),
        "slider" => trips(rows, seed),
        "join" => orders(rows, seed),
        "nm-join" => ratings(rows, seed),
        _ => return None,
    })
}
