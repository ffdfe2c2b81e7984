#![allow(dead_code)]

use pvd_core::relation::{Database, Relation};
use pvd_core::samples;
use pvd_core::stats::{database_stats, DatabaseStats};
use pvd_core::deploy::SiteId;
use pvd_core::physical::{PhysicalPlan, Strategy};
use pvd_core::structures::StructureFamily;
use pvd_core::ScalarValue;

/// SplitMix64, enough for fixtures.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed)
    }

    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn rel(spec: &pvd_core::InterfaceSpec, name: &str, rows: Vec<Vec<ScalarValue>>) -> Relation {
    let schema = spec.source(name).unwrap().schema.clone();
    Relation::from_rows(name, schema, rows).unwrap()
}

fn db_of(rels: Vec<Relation>) -> Database {
    rels.into_iter().map(|r| (r.name().to_string(), r)).collect()
}

/// 70 house and 30 senate members, 0..=`per_year` votes each year.
pub fn congress_db(per_year: u64, seed: u64) -> Database {
    let spec = samples::congress();
    let mut rng = Rng::new(seed);
    let mut rows = Vec::new();
    for m in 0..100 {
        let chamber = if m < 70 { "house" } else { "senate" };
        for year in samples::FIRST_YEAR..=samples::LAST_YEAR {
            for _ in 0..rng.below(per_year + 1) {
                rows.push(vec![ScalarValue::str(&format!("m{m:03}")), ScalarValue::str(chamber), year.into()]);
            }
        }
    }
    db_of(vec![rel(&spec, "votes", rows)])
}

pub fn flights_db(n: usize, seed: u64) -> Database {
    let spec = samples::filter();
    let mut rng = Rng::new(seed);
    let rows = (0..n)
        .map(|_| {
            let o = samples::AIRPORTS[rng.below(8) as usize];
            let d = samples::AIRPORTS[rng.below(8) as usize];
            let delay = if rng.below(20) == 0 { ScalarValue::Null } else { ((rng.unit() * 120.0 - 20.0).round()).into() };
            vec![ScalarValue::str(o), ScalarValue::str(d), delay]
        })
        .collect();
    db_of(vec![rel(&spec, "flights", rows)])
}

pub fn trips_db(n: usize, seed: u64) -> Database {
    let spec = samples::slider();
    let mut rng = Rng::new(seed);
    let rows = (0..n)
        .map(|_| {
            let zone = samples::ZONES[rng.below(5) as usize];
            let distance = 1 + rng.below(samples::MAX_DISTANCE as u64) as i64;
            let fare = if rng.below(25) == 0 { ScalarValue::Null } else { (2.5 + rng.unit() * 60.0).into() };
            vec![ScalarValue::str(zone), distance.into(), fare]
        })
        .collect();
    db_of(vec![rel(&spec, "trips", rows)])
}

pub fn orders_db(orders: usize, customers: usize, seed: u64) -> Database {
    let spec = samples::key_fk_join();
    let mut rng = Rng::new(seed);
    let cust = (0..customers)
        .map(|c| vec![(c as i64).into(), ScalarValue::str(samples::REGIONS[rng.below(4) as usize])])
        .collect();
    let ord = (0..orders)
        .map(|o| {
            vec![
                (o as i64).into(),
                (rng.below(customers as u64 + 2) as i64).into(),
                (1 + rng.below(samples::DAYS as u64) as i64).into(),
                (rng.unit() * 500.0).into(),
            ]
        })
        .collect();
    db_of(vec![rel(&spec, "orders", ord), rel(&spec, "customers", cust)])
}

pub fn ratings_db(items: usize, ratings: usize, seed: u64) -> Database {
    let spec = samples::nm_join(None);
    let mut rng = Rng::new(seed);
    let mut tags = Vec::new();
    for i in 0..items {
        for t in 0..samples::TAGS.len() {
            if rng.below(3) == 0 {
                tags.push(vec![(i as i64).into(), ScalarValue::str(samples::TAGS[t])]);
            }
        }
    }
    let rs = (0..ratings)
        .map(|_| {
            vec![
                (rng.below(items as u64) as i64).into(),
                (1 + rng.below(samples::DAYS as u64) as i64).into(),
                (1 + rng.below(5) as i64).into(),
            ]
        })
        .collect();
    db_of(vec![rel(&spec, "ratings", rs), rel(&spec, "tags", tags)])
}

pub fn stats_of(db: &Database) -> DatabaseStats {
    database_stats(db.values())
}

/// Sample spec name with a small matching database.
pub fn small_fixtures() -> Vec<(&'static str, pvd_core::InterfaceSpec, Database)> {
    vec![
        ("congress", samples::congress(), congress_db(2, 1)),
        ("filter", samples::filter(), flights_db(400, 2)),
        ("slider", samples::slider(), trips_db(500, 3)),
        ("join", samples::key_fk_join(), orders_db(300, 40, 4)),
        ("nm-join", samples::nm_join(None), ratings_db(30, 300, 5)),
    ]
}

/// Shape of a single-view plan, read off its operator chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Baseline(SiteId),
    Structured {
        family: StructureFamily,
        build: SiteId,
        eval: SiteId,
        replicate: bool,
        residual: SiteId,
    },
}

pub fn shape_of(plan: &PhysicalPlan) -> Shape {
    assert_eq!(plan.views.len(), 1);
    match plan.views[0].strategy().unwrap() {
        Strategy::Baseline { site, .. } => Shape::Baseline(site),
        Strategy::Structured(s) => Shape::Structured {
            family: s.kind.family(),
            build: s.build_site,
            eval: s.eval_site,
            replicate: s.replicate,
            residual: s.residual_site,
        },
    }
}

/// The cloud baseline, the server cube and the client cube replicated per chamber.
pub fn congress_trio(plans: &[PhysicalPlan]) -> (PhysicalPlan, PhysicalPlan, PhysicalPlan) {
    let find = |want: Shape| {
        plans
            .iter()
            .find(|p| shape_of(p) == want)
            .unwrap_or_else(|| panic!("no candidate shaped {want:?}"))
            .clone()
    };
    let cube = StructureFamily::PrefixSumCube;
    (
        find(Shape::Baseline(SiteId::Cloud)),
        find(Shape::Structured {
            family: cube,
            build: SiteId::Server,
            eval: SiteId::Server,
            replicate: false,
            residual: SiteId::Server,
        }),
        find(Shape::Structured {
            family: cube,
            build: SiteId::Server,
            eval: SiteId::Client,
            replicate: true,
            residual: SiteId::Client,
        }),
    )
}
